"""Acceptance criteria 1-12, one PASS/FAIL line each.

Run with `pytest tests/test_acceptance.py` or directly with `python3 tests/test_acceptance.py`.
"""
import os
import sys
import time
from fractions import Fraction

import numpy as np
import pytest

sys.path.insert(0, os.path.join(os.path.dirname(__file__), "..", "src"))

from carpetlab.carpet import dagger_sequence, star_trim, track_components, whyburn_report  # noqa: E402
from carpetlab.gff import (LatticeField, Window, harmonic_split, multiscale_decompose, green_matrix,  # noqa: E402
                           harmonic_oscillation, nice_statistics, sample_field, sample_fields, tail_fit)
from carpetlab.goodness import TWO_THIRDS, p0_threshold, root_good_frequency, theta_sequence  # noqa: E402
from carpetlab.loewner import (bootstrap_monotone, kappa_sweep, sample_driving, trace)  # noqa: E402
from carpetlab.pathgraph import (ScaleFamily, box_distance, box_lift, cumulative_weight, enumerate_paths,  # noqa: E402
                                 isolated_separation, loop_erase, planted_family, unit_box)
from carpetlab.percolation import RetentionConfig, sample  # noqa: E402

EMPTY = ScaleFamily(1, 8, {})


def c1_theta_threshold():
    t0 = time.perf_counter()
    p0 = p0_threshold(6).p0
    above = theta_sequence(6, p0 + 1e-4, 200).min
    below = theta_sequence(6, p0 - 1e-2, 200).min
    dt = time.perf_counter() - t0
    ok = above >= TWO_THIRDS and below < TWO_THIRDS and dt < 1
    return ok, f"p0(6)={p0:.7f} min(p0+1e-4)={above:.6f} min(p0-1e-2)={below:.3g} {dt:.2f}s"


def c2_recursion_vs_simulation():
    t0 = time.perf_counter()
    worst = 0.0
    for N in (2, 3):
        for p in (0.90, 0.95, 0.99):
            freq, _ = root_good_frequency(N, p, 4, range(10_000))
            th = theta_sequence(N, p, 4).values
            for m in range(5):
                se = np.sqrt(th[m] * (1 - th[m]) / 10_000)
                z = abs(freq[m] - th[m]) / se if se > 0 else (0.0 if freq[m] == th[m] else np.inf)
                worst = max(worst, z)
    dt = time.perf_counter() - t0
    return worst <= 3 and dt < 120, f"max |z| = {worst:.2f} over 30 cells, {dt:.0f}s"


def _carpet_runs(samples=100, N=6, p=0.999, tree_depth=5, budget=3):
    depth = tree_depth - budget
    for s in range(samples):
        tree = sample(RetentionConfig(N, p, tree_depth, s))
        car = star_trim(dagger_sequence(tree, depth, budget))
        yield s, car, track_components(car, check=False)


_CARPETS = None


def carpets():
    global _CARPETS
    if _CARPETS is None:
        t0 = time.perf_counter()
        _CARPETS = (list(_carpet_runs()), time.perf_counter() - t0)
    return _CARPETS


def c3_gap_certificate():
    runs, dt = carpets()
    pairs = violations = 0
    for s, car, cs in runs:
        for (a, b), hist in cs.gap_history().items():
            k = max(cs.birth[a], cs.birth[b])
            for level, gap in hist:
                pairs += 1
                violations += gap < Fraction(1, 5 * 6 ** k)
    return violations == 0 and dt < 300, f"{pairs} pair-levels, {violations} violations, {dt:.0f}s"


def c4_whyburn():
    runs, _ = carpets()
    bad = []
    empty = 0
    for s, car, cs in runs:
        if car.empty:
            empty += 1
            continue
        rep = whyburn_report(cs, car)
        areas = [car.area(n) for n in range(len(car.star))]
        by_birth = {}
        for ident, d in cs.diameters().items():
            by_birth[cs.birth[ident]] = max(by_birth.get(cs.birth[ident], Fraction(0)), d)
        ks = sorted(by_birth)
        gaps = list(cs.final().gaps.values())
        ok = (all(g > 0 for g in gaps)
              and all(by_birth[a] >= by_birth[b] for a, b in zip(ks, ks[1:]))
              and all(x >= y for x, y in zip(areas, areas[1:]))
              and rep.passed and rep.areas_nonincreasing)
        if not ok:
            bad.append(s)
    return not bad, f"{len(runs) - empty} carpets checked, {empty} root-not-good, failing seeds {bad}"


def c5_mean_area():
    t0 = time.perf_counter()
    n_seeds, p = 10_000, 0.8
    A = np.array([[float(t.retained_area(n)) for n in range(1, 6)]
                  for t in (sample(RetentionConfig(3, p, 5, s)) for s in range(n_seeds))])
    se = A.std(axis=0, ddof=1) / np.sqrt(n_seeds)
    z = np.abs(A.mean(axis=0) - p ** np.arange(1, 6)) / se
    dt = time.perf_counter() - t0
    return bool(z.max() <= 3) and dt < 60, f"z by level {np.round(z, 2).tolist()}, {dt:.0f}s"


def c6_path_combinatorics():
    t0 = time.perf_counter()
    gen = np.random.default_rng(6)
    starts = [(0, 0)] + [tuple(map(int, gen.integers(-10 ** 6, 10 ** 6, 2))) for _ in range(9)]
    counts = {enumerate_paths(unit_box(*s), 0, 2, EMPTY).count for s in starts}
    beta = Fraction(1, 20000)
    sums = [cumulative_weight(unit_box(*s), EMPTY, beta, 4, k=0).partial_sums[-1] for s in starts[:2]]
    fam = ScaleFamily(1, 4, {0: [[0, 0], [12, 8]], 1: [[16, 0]]})
    steps = np.array([(1, 0), (-1, 0), (0, 1), (0, -1)])
    viol = 0
    for w in range(1000):
        n = int(gen.integers(2, 400))
        walk = np.cumsum(np.vstack([(0, 0), steps[gen.integers(0, 4, n - 1)]]), axis=0).tolist()
        boxes = box_lift(walk, fam) if w % 2 else [unit_box(*p) for p in walk]
        bs = loop_erase(boxes, 1).boxes
        viol += sum(box_distance(bs[i], bs[j]) <= 40 for i in range(len(bs)) for j in range(i + 2, len(bs)))
    dt = time.perf_counter() - t0
    ok = counts == {7224} and all(s <= 1 for s in sums) and viol == 0 and dt < 600
    return ok, (f"counts {sorted(counts)}, weight sum to L=4 {float(max(sums)):.6f}, "
                f"loop-erase violations {viol}, {dt:.0f}s")


def c7_box_fraction():
    N = 8
    checked = viol = 0
    for seed in range(5):
        fam = planted_family(1, N, {0: 8}, seed=seed, min_sep=isolated_separation(1, N))
        c = fam.sites[0][0]
        for start in (unit_box(c[0] + 11, c[1]), unit_box(c[0] + 30, c[1] - 5), unit_box(c[0], c[1] + 12)):
            for L in (3, 4):               # lengths >= N^(1/2)
                e = enumerate_paths(start, 1, L, fam)
                checked += e.count
                viol += e.s0_fraction_violations(N)
    return viol == 0, f"{checked} paths of length 3..4, {viol} violations"


def c8_gff_structure():
    t0 = time.perf_counter()
    worst_cov = 0.0
    for n in (3, 8, 16):
        F = sample_fields(n, 1, 100_000)
        X = F[:, 1:-1, 1:-1].reshape(len(F), -1)
        G = green_matrix(n)
        C = X.T @ X / len(X)
        se = np.sqrt((np.outer(np.diag(G), np.diag(G)) + G ** 2) / len(X))
        worst_cov = max(worst_cov, float((np.abs(C - G) / se).max()))
        del F, X
    n, r, T = 14, 3, 100_000
    F = sample_fields(n, 2, T)
    fld = LatticeField(n, F)
    w = Window.box((1, -1), r)
    rem = harmonic_split(fld, w).remainder[:, 1:-1, 1:-1].reshape(T, -1)
    o = fld.origin
    outside = np.ones((n + 2, n + 2), bool)
    outside[w.x0 + o:w.x1 + o + 1, w.y0 + o:w.y1 + o + 1] = False
    outside[0, :] = outside[-1, :] = outside[:, 0] = outside[:, -1] = False
    ext = F[:, outside]
    cross = rem.T @ ext / T
    z_markov = float((np.abs(cross) / np.sqrt(np.outer((rem ** 2).mean(0), (ext ** 2).mean(0)) / T)).max())
    err = max(multiscale_decompose(sample_field(128, s), (3, -2), 1, [2, 4, 8]).reconstruction_error()
              for s in range(10))
    dt = time.perf_counter() - t0
    ok = worst_cov <= 5 and z_markov <= 5 and err <= 1e-8 and dt < 600
    return ok, f"cov max z {worst_cov:.2f}, Markov max z {z_markov:.2f}, telescoping error {err:.1e}, {dt:.0f}s"


def c9_fluctuation_tails():
    S = np.concatenate([harmonic_oscillation(sample_fields(32, 100 + c, 10_000), 8) for c in range(10)])
    fit = tail_fit(S, S.std() * np.arange(1, 6))
    ok = fit.slope < 0 and fit.r_squared >= 0.95
    return ok, f"slope {fit.slope:.3f}, R^2 {fit.r_squared:.4f}, frequencies {np.round(fit.frequency, 6).tolist()}"


def c10_nice_trend(samples=1000, reps=2000):
    Ms = [0.75, 1.0, 1.25, 1.5, 2.0, 2.5]
    stats = [nice_statistics(sample_field(160, s, cap=200), 4, 1, 2) for s in range(samples)]
    f = np.array([[[st.table(M).bad_fraction(j) for M in Ms] for j in (1, 2)] for st in stats])

    def trend(mean):
        in_M = all(np.all(np.diff(mean[j]) <= 0) and mean[j][0] > mean[j][-1] for j in (0, 1))
        in_j = np.all(mean[1] <= mean[0]) and np.any(mean[1] < mean[0])
        return in_M and in_j

    gen = np.random.default_rng(10)
    hits = sum(trend(f[gen.integers(0, samples, samples)].mean(axis=0)) for _ in range(reps))
    mean = f.mean(axis=0)
    return hits / reps >= 0.95, (f"bootstrap {hits / reps:.3f}; level 1 {np.round(mean[0], 3).tolist()}, "
                                 f"level 2 {np.round(mean[1], 3).tolist()} at M={Ms}")


def c11_loewner_exactness():
    # machine precision for a composition of K maps: the forward roundoff bound K eps |2i|
    tip_ratio = max(abs(trace(sample_driving(0, 1.0, dt, 0)).points[-1] - 2j) / (2 * round(1 / dt) * np.finfo(float).eps)
                    for dt in (1e-2, 1e-3, 2.5e-4))
    caps = []
    gaps = []
    for s in range(20):
        tips = []
        for dt in (1e-3, 2.5e-4, 6.25e-5):
            d = sample_driving(2, 1.0, dt, s, base_dt=6.25e-5)
            tr = trace(d, every=d.steps)
            caps.append(tr.capacity)
            tips.append(tr.points[-1])
        gaps.append((abs(tips[0] - tips[1]), abs(tips[1] - tips[2])))
    cap_err = float(np.max(np.abs(np.array(caps) - 2.0) / 2.0))
    g = np.array(gaps).mean(axis=0)
    ok = tip_ratio <= 1 and cap_err <= 1e-4 and g[0] / g[1] >= 2
    return ok, (f"|tip - 2i| / (K eps |2i|) = {tip_ratio:.3f}, capacity rel error {cap_err:.1e}, "
                f"mean gaps {g[0]:.2e} -> {g[1]:.2e} (factor {g[0] / g[1]:.2f})")


def c12_bubble_trend():
    t0 = time.perf_counter()
    rows = kappa_sweep([5.0, 6.0, 7.0, 7.5], 200, T=1.0, dt=1e-4)
    conf = bootstrap_monotone(rows, reps=2000, seed=12)
    dt = time.perf_counter() - t0
    meds = [r.quantiles[0] for r in rows]
    return conf >= 0.95 and dt < 1800, f"pooled medians {meds}, bootstrap confidence {conf:.3f}, {dt:.0f}s"


CRITERIA = [c1_theta_threshold, c2_recursion_vs_simulation, c3_gap_certificate, c4_whyburn, c5_mean_area,
            c6_path_combinatorics, c7_box_fraction, c8_gff_structure, c9_fluctuation_tails, c10_nice_trend,
            c11_loewner_exactness, c12_bubble_trend]


def report(k, fn):
    ok, detail = fn()
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    return ok, line


@pytest.mark.parametrize("k", range(1, 13))
def test_criterion(k, capsys):
    ok, line = report(k, CRITERIA[k - 1])
    with capsys.disabled():
        print("\n" + line)
    assert ok, line


if __name__ == "__main__":
    results = [report(k, fn) for k, fn in enumerate(CRITERIA, start=1)]
    for _, line in results:
        print(line)
    sys.exit(0 if all(ok for ok, _ in results) else 1)
