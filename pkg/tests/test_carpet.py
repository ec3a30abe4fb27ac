from collections import deque
from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from carpetlab.boxlattice import BoxAddress
from carpetlab.carpet import (DaggerSequence, check_child_rule, cluster_carpet, dagger_sequence, gap_bound,
                              star_trim, track_components, upsample, whyburn_report)
from carpetlab.errors import CarpetLabError
from carpetlab.percolation import RetentionConfig, clusters, removed_boxes, sample


def run(N, p, depth, budget, seed):
    tree = sample(RetentionConfig(N, p, depth + budget, seed))
    dag = dagger_sequence(tree, depth, budget)
    car = star_trim(dag)
    return dag, car, track_components(car)


def bfs_components(mask):
    """Complement components of a retained raster, plus the outside, by plain BFS.

    Returns a list of cell sets; the first one is the outside (cells of the padding ring).
    """
    h, w = mask.shape
    free = np.ones((h + 2, w + 2), bool)
    free[1:-1, 1:-1] = ~mask
    seen = np.zeros_like(free)
    comps = []
    for sx, sy in [(0, 0)] + [tuple(c) for c in np.argwhere(free)]:
        if seen[sx, sy] or not free[sx, sy]:
            continue
        comp, q = set(), deque([(sx, sy)])
        seen[sx, sy] = True
        while q:
            x, y = q.popleft()
            comp.add((x, y))
            for u, v in ((x + 1, y), (x - 1, y), (x, y + 1), (x, y - 1)):
                if 0 <= u < h + 2 and 0 <= v < w + 2 and free[u, v] and not seen[u, v]:
                    seen[u, v] = True
                    q.append((u, v))
        comps.append(comp)
    return comps


def brute_gap(a, b):
    # closed unit cells at Chebyshev centre distance d are max(0, d - 1) apart
    return max(0, min(max(abs(x - u), abs(y - v)) for x, y in a for u, v in b) - 1)


def test_p_one_keeps_every_box():
    dag, car, cs = run(6, 1.0, 2, 1, 0)
    for n, lev in enumerate(dag.levels):
        assert lev.all() and lev.shape == (6 ** n, 6 ** n)
    rep = whyburn_report(cs, car)
    assert rep.passed and rep.min_gap is None and rep.areas == [1, 1, 1]
    assert all(not t for t in car.trims)


def test_root_not_good_flag():
    tree = sample(RetentionConfig(6, 0.5, 3, 1))
    dag = dagger_sequence(tree, 1, 2)
    assert dag.levels == [] and "root-not-good" in dag.flags
    car = star_trim(dag)
    assert car.empty
    assert "vacuous" in whyburn_report(track_components(car), car).flags


def test_depth_and_base_errors():
    tree = sample(RetentionConfig(6, 0.99, 3, 1))
    with pytest.raises(CarpetLabError) as e:
        dagger_sequence(tree, 2, 2)
    assert e.value.code == "depth-exceeded"
    small = dagger_sequence(sample(RetentionConfig(4, 0.99, 3, 1)), 1, 2)
    with pytest.raises(CarpetLabError) as e:
        star_trim(small)
    assert e.value.code == "unsupported-base"


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([0.995, 0.999, 0.9999]))
def test_dagger_child_rule_and_nesting(seed, p):
    tree = sample(RetentionConfig(6, p, 4, seed))
    dag = dagger_sequence(tree, 2, 2)
    if not dag.levels:
        return
    assert check_child_rule(dag) == []
    for n in range(1, 3):
        A_n = tree.retained_mask(n)
        assert not (dag.levels[n] & ~A_n).any()
        assert not (dag.levels[n] & ~upsample(dag.levels[n - 1], 6)).any()


def hand_dagger(holes, N=6):
    lev = np.ones((N, N), bool)
    for i, j in holes:
        lev[i, j] = False
    return DaggerSequence(N, 1, 0, [np.ones((1, 1), bool), lev], [1, 0])


def test_no_contact_no_trim():
    car = star_trim(hand_dagger([(1, 1), (4, 4)]))
    assert car.trims[1] == []
    assert (car.star[1] == upsample(car.dagger[1], 6)).all()


def test_corner_contact_trims_two_boxes():
    car = star_trim(hand_dagger([(2, 2), (3, 3)]))
    assert car.trims[1] == [(17, 18), (18, 17)]
    # the trimmed pair is the other diagonal at the shared vertex (18, 18); both were retained
    assert car.dagger[1][2, 3] and car.dagger[1][3, 2]
    assert upsample(car.dagger[1], 6)[17, 18] and not car.star[1][17, 18]
    # the two holes now form one component whose closure meets no other
    cs = track_components(car)
    assert cs.final().ident == {1: 0, 2: 1}
    assert len(bfs_components(car.star[1])) == 2


def test_gap_bound_values():
    assert gap_bound(6, 1, 0) == Fraction(1, 6) * (1 - Fraction(2, 6))
    assert gap_bound(6, 0, 2) == 1 - Fraction(4, 6) - Fraction(4, 36) - Fraction(2, 216)
    # the induction floor stays above N^-k / 5 for N >= 6
    assert all(gap_bound(6, 2, m) >= Fraction(1, 5 * 36) for m in range(12))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from([0.995, 0.999]))
def test_tracker_matches_brute_force(seed, p):
    dag, car, cs = run(6, p, 2, 2, seed)
    if car.empty:
        return
    for n, stt in enumerate(cs.states):
        comps = bfs_components(car.star[n])
        assert len(comps) == len(stt.ident)
        by_id = {}
        for comp in comps:
            x, y = next(iter(comp))
            by_id[stt.ident[int(stt.lab[x, y])]] = comp
            assert all(stt.lab[u, v] == stt.lab[x, y] for u, v in comp)
        # pair gaps by brute force over component cells (outside ring included)
        for (a, b), g in stt.gaps.items():
            assert g == Fraction(brute_gap(by_id[a], by_id[b]), 6 ** (n + 1))
        if n:
            prev = cs.states[n - 1]
            for ident, comp in prev_by_id.items():
                # containment: each interior cell at level n-1 maps into the same identity
                if ident == 0:
                    continue
                x, y = next(iter(comp))
                fx, fy = (x - 1) * 6 + 1, (y - 1) * 6 + 1
                assert (fx, fy) in by_id[ident]
        prev_by_id = by_id
    assert cs.violations == [] and cs.floor_violations == []


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32))
def test_trim_locality_and_star_nesting(seed):
    dag, car, cs = run(6, 0.998, 2, 2, seed)
    if car.empty:
        return
    for n in range(1, len(car.star)):
        assert len(car.trims[n]) == 2 * len(car.contacts[n])
        prev = upsample(car.star[n - 1], 6)
        assert not (car.star[n] & ~prev).any()
        assert not (car.star[n] & ~upsample(car.dagger[n], 6)).any()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32))
def test_whyburn_invariant_under_relabeling(seed):
    dag, car, cs = run(6, 0.999, 2, 2, seed)
    if car.empty:
        return
    rep = whyburn_report(cs, car)
    ids = sorted(i for i in cs.birth if i)
    perm = dict(zip(ids, np.random.default_rng(seed).permutation(ids).tolist()))
    perm[0] = 0
    cs.birth = {perm[i]: b for i, b in cs.birth.items()}
    for stt in cs.states:
        stt.ident = {k: perm[v] for k, v in stt.ident.items()}
        stt.gaps = {tuple(sorted((perm[a], perm[b]))): g for (a, b), g in stt.gaps.items()}
    rep2 = whyburn_report(cs, car)
    assert rep2.passed == rep.passed and rep2.min_gap == rep.min_gap
    assert rep2.max_diameter_by_birth == rep.max_diameter_by_birth


def test_area_ratio_mean_bounded_by_p():
    p = 0.999
    ratios = []
    for s in range(1000):
        dag, car, cs = run(6, p, 2, 1, s)
        if car.empty:
            continue
        rep = whyburn_report(cs, car)
        assert rep.areas_nonincreasing
        ratios.append([float(r) for r in rep.area_ratios])
    r = np.array(ratios)
    se = r.std(axis=0, ddof=1) / np.sqrt(len(r))
    assert np.all(r.mean(axis=0) <= p + 3 * se + 1e-15)


def test_cluster_carpet_extremes():
    full = sample(RetentionConfig(3, 1.0, 3, 0))
    cc = cluster_carpet(clusters(removed_boxes(full), base=3, depth=3))
    assert cc.event_E and cc.U.all() and cc.carpet.all() and cc.inside == []
    none = sample(RetentionConfig(3, 0.0, 3, 0))
    cc = cluster_carpet(clusters(removed_boxes(none), base=3, depth=3))
    assert not cc.event_E and not cc.carpet.any()


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32))
def test_outermost_fillings_contain_the_rest(seed):
    tree = sample(RetentionConfig(3, 0.75, 4, seed))
    cs = clusters(removed_boxes(tree), base=3, depth=4)
    cc = cluster_carpet(cs)
    if not cc.event_E:
        return
    side = 3 ** 4
    cells = {}
    for k in cc.inside:
        m = np.zeros((side, side), bool)
        for b in cs.clusters[k]:
            s = 3 ** (4 - b.level)
            m[b.i * s:(b.i + 1) * s, b.j * s:(b.j + 1) * s] = True
        cells[k] = m
    for k in cc.inside:
        holders = [j for j in cc.outermost if j == k or (cc.fillings[j] & cells[k]).sum() == cells[k].sum()]
        assert holders
    for a in cc.outermost:
        for b in cc.outermost:
            if a != b:
                assert not (cc.fillings[a] & cells[b]).sum() == cells[b].sum()
