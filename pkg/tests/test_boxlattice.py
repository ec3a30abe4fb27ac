from fractions import Fraction
from itertools import product

import pytest
from hypothesis import given, settings, strategies as st

from carpetlab.boxlattice import BoxAddress, Rect, diameter, linf_distance, root, subdivide, union_area
from carpetlab.errors import CarpetLabError


def brute_linf(a, b):
    # distance between closed rectangles is attained on a grid of candidate points
    xs = sorted({a.x0, a.x1, b.x0, b.x1})
    ys = sorted({a.y0, a.y1, b.y0, b.y1})
    pa = [(x, y) for x in xs for y in ys if a.x0 <= x <= a.x1 and a.y0 <= y <= a.y1]
    pb = [(x, y) for x in xs for y in ys if b.x0 <= x <= b.x1 and b.y0 <= y <= b.y1]
    return min(max(abs(p[0] - q[0]), abs(p[1] - q[1])) for p in pa for q in pb)


def test_subdivide_root_n3():
    kids = subdivide(root(3))
    assert len(kids) == 9 and all(k.level == 1 for k in kids)


def test_subdivide_dyadic_corner():
    kids = subdivide(BoxAddress(5, 0, 0, 2))
    assert {(k.i, k.j) for k in kids} == {(0, 0), (1, 0), (0, 1), (1, 1)}
    assert all(k.level == 6 for k in kids)


@settings(max_examples=10, deadline=None)
@given(st.integers(2, 6), st.integers(0, 4), st.data())
def test_children_tile_parent(N, level, data):
    side = N ** level
    a = BoxAddress(level, data.draw(st.integers(0, side - 1)), data.draw(st.integers(0, side - 1)), N)
    kids = subdivide(a)
    r = a.rect()
    assert len(kids) == N * N
    assert union_area(kids) == r.area
    assert min(k.rect().x0 for k in kids) == r.x0 and max(k.rect().x1 for k in kids) == r.x1
    assert min(k.rect().y0 for k in kids) == r.y0 and max(k.rect().y1 for k in kids) == r.y1
    for k1, k2 in product(kids, kids):
        if k1 != k2:
            # interiors disjoint: overlap area is zero
            ox = min(k1.rect().x1, k2.rect().x1) - max(k1.rect().x0, k2.rect().x0)
            oy = min(k1.rect().y1, k2.rect().y1) - max(k1.rect().y0, k2.rect().y0)
            assert ox <= 0 or oy <= 0
    assert subdivide(a) == kids


def test_distance_examples():
    u = Rect(0, 0, 1, 1)
    assert linf_distance(u, u) == 0
    assert linf_distance(u, Rect(2, 0, 3, 1)) == 1
    a, b = BoxAddress(1, 2, 2, 6), BoxAddress(1, 3, 3, 6)
    assert a.rect().x1 == b.rect().x0 and a.rect().y1 == b.rect().y0
    assert linf_distance(a, b) == 0


def test_diameter_examples():
    assert diameter([Rect(0, 0, 1, 1)]) == 1
    pair = [Rect(0, 0, 1, 1), Rect(3, 0, 4, 1)]
    corners = [c for r in pair for c in r.corners()]
    brute = max(max(abs(p[0] - q[0]), abs(p[1] - q[1])) for p in corners for q in corners)
    assert diameter(pair) == brute == 4
    box = BoxAddress(2, 1, 3, 5)
    assert diameter(subdivide(box)) == box.side
    with pytest.raises(CarpetLabError) as e:
        diameter([])
    assert e.value.code == "empty-region"


rects = st.builds(lambda x, y, w, h: Rect(Fraction(x, 7), Fraction(y, 7), Fraction(x + w, 7), Fraction(y + h, 7)),
                  st.integers(-20, 20), st.integers(-20, 20), st.integers(1, 10), st.integers(1, 10))


@settings(max_examples=10, deadline=None)
@given(rects, rects, rects)
def test_distance_symmetric_exact_and_triangle(a, b, c):
    d = linf_distance(a, b)
    assert isinstance(d, Fraction)
    assert d == linf_distance(b, a) == brute_linf(a, b)
    # centres minus half-extents
    def cr(r):
        return ((r.x0 + r.x1) / 2, (r.y0 + r.y1) / 2, max(r.width, r.height) / 2)
    (ax, ay, ar), (cx, cy, crr) = cr(a), cr(c)
    bx, by, br = cr(b)
    dac = max(abs(ax - cx), abs(ay - cy))
    dab = max(abs(ax - bx), abs(ay - by))
    dbc = max(abs(bx - cx), abs(by - cy))
    assert dac <= dab + dbc
    assert linf_distance(a, c) <= linf_distance(a, b) + linf_distance(b, c) + 2 * max(b.width, b.height)


def test_zero_iff_closures_meet():
    a = Rect(0, 0, 1, 1)
    assert linf_distance(a, Rect(1, 1, 2, 2)) == 0
    assert linf_distance(a, Rect(Fraction(1, 1) + Fraction(1, 10**9), 0, 3, 1)) == Fraction(1, 10**9)
