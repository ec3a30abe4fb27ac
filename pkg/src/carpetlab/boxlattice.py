"""Exact N-adic box geometry in rational arithmetic."""
from dataclasses import dataclass
from fractions import Fraction

from .errors import CarpetLabError


@dataclass(frozen=True, order=True)
class Rect:
    x0: Fraction
    y0: Fraction
    x1: Fraction
    y1: Fraction

    def __post_init__(self):
        for name in ("x0", "y0", "x1", "y1"):
            object.__setattr__(self, name, Fraction(getattr(self, name)))
        if not (self.x0 < self.x1 and self.y0 < self.y1):
            raise CarpetLabError("out-of-range", f"degenerate rectangle {self}")

    @property
    def width(self):
        return self.x1 - self.x0

    @property
    def height(self):
        return self.y1 - self.y0

    @property
    def area(self):
        return self.width * self.height

    def corners(self):
        return [(self.x0, self.y0), (self.x1, self.y0), (self.x0, self.y1), (self.x1, self.y1)]


@dataclass(frozen=True, order=True)
class BoxAddress:
    """Box [i/N^n, (i+1)/N^n] x [j/N^n, (j+1)/N^n]."""

    level: int
    i: int
    j: int
    base: int = 2

    def __post_init__(self):
        if self.base < 2:
            raise CarpetLabError("out-of-range", f"base {self.base} < 2")
        if self.level < 0:
            raise CarpetLabError("out-of-range", f"negative level {self.level}")
        side = self.base ** self.level
        if not (0 <= self.i < side and 0 <= self.j < side):
            raise CarpetLabError("out-of-range", f"({self.i}, {self.j}) outside level {self.level}")

    @property
    def side(self):
        return Fraction(1, self.base ** self.level)

    def rect(self):
        s = self.side
        return Rect(self.i * s, self.j * s, (self.i + 1) * s, (self.j + 1) * s)

    def parent(self):
        if self.level == 0:
            return None
        return BoxAddress(self.level - 1, self.i // self.base, self.j // self.base, self.base)

    def ancestor(self, level):
        k = self.base ** (self.level - level)
        return BoxAddress(level, self.i // k, self.j // k, self.base)

    def contains(self, other):
        return other.level >= self.level and other.ancestor(self.level) == self

    def as_triple(self):
        return [self.level, self.i, self.j]


def root(base):
    return BoxAddress(0, 0, 0, base)


def subdivide(addr):
    """The N^2 children of `addr`, row-major: j outer, i inner."""
    N = addr.base
    return [BoxAddress(addr.level + 1, addr.i * N + a, addr.j * N + b, N)
            for b in range(N) for a in range(N)]


def _as_rect(r):
    return r.rect() if isinstance(r, BoxAddress) else r


def linf_distance(a, b):
    """Exact L-infinity distance between two closed rectangles (or boxes)."""
    a, b = _as_rect(a), _as_rect(b)
    dx = max(Fraction(0), b.x0 - a.x1, a.x0 - b.x1)
    dy = max(Fraction(0), b.y0 - a.y1, a.y0 - b.y1)
    return max(dx, dy)


def diameter(rects):
    """L-infinity diameter of a union of rectangles."""
    rects = [_as_rect(r) for r in rects]
    if not rects:
        raise CarpetLabError("empty-region", "diameter of an empty set")
    x0 = min(r.x0 for r in rects)
    x1 = max(r.x1 for r in rects)
    y0 = min(r.y0 for r in rects)
    y1 = max(r.y1 for r in rects)
    return max(x1 - x0, y1 - y0)


def union_area(boxes):
    """Exact area of a union of pairwise interior-disjoint boxes."""
    return sum((_as_rect(b).area for b in boxes), Fraction(0))


def frac_str(x):
    x = Fraction(x)
    return f"{x.numerator}/{x.denominator}"


def parse_frac(s):
    return Fraction(s)
