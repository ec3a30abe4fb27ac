"""Multiscale box families, self-avoiding connected paths, weights and loop erasure.

A box is B(x, r) = {z : |z - x|_inf < r} with integer center and radius; S_0 boxes
are unit boxes B(x, 1), x in Z^2, and an S_m box (m >= 1) is B(z, 10 rho N^(m-1))
with z in A_{m-1}. Distances are d(A, B) = inf |a - b|_inf, which for boxes is
max(0, |x - y|_inf - r - s).
"""
from dataclasses import dataclass, field
from fractions import Fraction
from typing import NamedTuple

import numpy as np

from .errors import BudgetExceeded, CarpetLabError

STEP = 40           # connected paths: consecutive boxes within STEP * rho
NODE_BUDGET = 10 ** 7


class Box(NamedTuple):
    x: int
    y: int
    r: int
    m: int          # family index: the box belongs to S_m


def box_distance(a, b):
    return max(0, max(abs(a.x - b.x), abs(a.y - b.y)) - a.r - b.r)


def unit_box(x, y):
    return Box(int(x), int(y), 1, 0)


@dataclass
class ScaleFamily:
    rho: int
    N: int
    sites: dict = field(default_factory=dict)     # m -> (k, 2) int array, the set A_m

    def __post_init__(self):
        self.sites = {int(m): np.asarray(v, np.int64).reshape(-1, 2) for m, v in self.sites.items()}
        problems = self.validate()
        if problems:
            raise CarpetLabError("out-of-range", "; ".join(problems), fields=problems)

    def validate(self):
        problems = []
        if self.rho < 1 or self.N < 2:
            problems.append(f"rho={self.rho}, N={self.N}")
        for m, pts in self.sites.items():
            step = self.rho * self.N ** m
            if (pts % step).any():
                problems.append(f"A_{m} not contained in {step} Z^2")
            if len(pts) > 1:
                d = np.abs(pts[:, None, :] - pts[None, :, :]).max(axis=2)
                np.fill_diagonal(d, np.iinfo(np.int64).max)
                if 10 * d.min() < self.rho * self.N ** (m + 1):
                    problems.append(f"A_{m} separation {d.min()} < rho N^{m + 1} / 10")
        return problems

    def radius(self, m):
        return 1 if m == 0 else 10 * self.rho * self.N ** (m - 1)

    def centers(self, m):
        """Centers of S_m boxes (m >= 1), i.e. A_{m-1}."""
        return self.sites.get(m - 1, np.zeros((0, 2), np.int64))

    def reach(self):
        return STEP * self.rho


def planted_family(rho, N, counts, seed=0, min_sep=None, span=None):
    """Random family with counts[m] sites in A_m, placed on rho N^m Z^2 with separation.

    `min_sep` (per m, callable or number) defaults to Condition 2, rho N^(m+1)/10.
    Sites are drawn around the origin within `span` (default: enough room).
    """
    gen = np.random.default_rng(seed)
    sites = {}
    for m, count in counts.items():
        step = rho * N ** m
        sep = Fraction(rho * N ** (m + 1), 10) if min_sep is None else (
            min_sep(m) if callable(min_sep) else min_sep)
        extent = span or int(max(4 * count * float(sep), 8 * step))
        pts = []
        tries = 0
        while len(pts) < count and tries < 100000:
            tries += 1
            p = gen.integers(-extent // step, extent // step + 1, size=2) * step
            if all(max(abs(p[0] - q[0]), abs(p[1] - q[1])) >= sep for q in pts):
                pts.append(p)
        sites[m] = np.array(pts, np.int64).reshape(-1, 2)
    return ScaleFamily(rho, N, sites)


def isolated_separation(rho, N):
    """Separation of A_m beyond which no unit box is within step reach of two S_{m+1} boxes."""
    return lambda m: 2 * (STEP * rho + 1 + 10 * rho * N ** m) + 1


# ---------------------------------------------------------------- neighbours

_OFFSETS = {}


def _square(R):
    if R not in _OFFSETS:
        a = np.arange(-R, R + 1)
        gx, gy = np.meshgrid(a, a, indexing="ij")
        _OFFSETS[R] = (gx.ravel(), gy.ravel())
    return _OFFSETS[R]


def neighbours(box, family, k):
    """All boxes of S_0..S_k within step reach of `box` (excluding it), as arrays (x, y, r, m)."""
    D = family.reach()
    R0 = D + 1 + box.r
    ox, oy = _square(R0)
    xs, ys = [box.x + ox], [box.y + oy]
    ms = [np.zeros(ox.size, np.int64)]
    for m in range(1, k + 1):
        c = family.centers(m)
        if len(c) == 0:
            continue
        rm = family.radius(m)
        near = np.abs(c - [box.x, box.y]).max(axis=1) <= D + box.r + rm
        xs.append(c[near, 0])
        ys.append(c[near, 1])
        ms.append(np.full(int(near.sum()), m, np.int64))
    x, y, m = np.concatenate(xs), np.concatenate(ys), np.concatenate(ms)
    r = np.array([family.radius(j) for j in range(k + 1)], np.int64)[m]
    keep = ~((x == box.x) & (y == box.y) & (m == box.m))
    return x[keep], y[keep], r[keep], m[keep]


def _exclude(cands, boxes):
    x, y, r, m = cands
    keep = np.ones(x.size, bool)
    for b in boxes:
        keep &= ~((x == b.x) & (y == b.y) & (m == b.m))
    return x[keep], y[keep], r[keep], m[keep]


def _neighbour_counts(x, y, r, m, family, k):
    """Per candidate box: number of S_t neighbours (t = 0..k), itself excluded. Shape (k+1, n)."""
    D = family.reach()
    out = np.zeros((k + 1, x.size), np.int64)
    out[0] = (2 * (D + 1 + r) + 1) ** 2 - (m == 0)
    for t in range(1, k + 1):
        c = family.centers(t)
        if len(c) == 0:
            continue
        rt = family.radius(t)
        d = np.maximum(np.abs(x[:, None] - c[None, :, 0]), np.abs(y[:, None] - c[None, :, 1]))
        out[t] = (d <= (D + r + rt)[:, None]).sum(axis=1) - (m == t)
    return out


def _path_hits(x, y, r, m, path, family, k):
    """Per candidate: number of path boxes of each type within reach. Shape (k+1, n)."""
    D = family.reach()
    out = np.zeros((k + 1, x.size), np.int64)
    for b in path:
        d = np.maximum(0, np.maximum(np.abs(x - b.x), np.abs(y - b.y)) - r - b.r)
        out[b.m] += d <= D
    return out


# ---------------------------------------------------------------- paths

@dataclass
class FractalPath:
    boxes: list
    flags: list = field(default_factory=list)

    @property
    def length(self):
        return len(self.boxes)

    @property
    def level(self):
        return max((b.m for b in self.boxes), default=0)

    @property
    def diameter(self):
        if not self.boxes:
            return 0
        x0 = min(b.x - b.r for b in self.boxes)
        x1 = max(b.x + b.r for b in self.boxes)
        y0 = min(b.y - b.r for b in self.boxes)
        y1 = max(b.y + b.r for b in self.boxes)
        return max(x1 - x0, y1 - y0)

    def s0_fraction(self):
        return Fraction(sum(b.m == 0 for b in self.boxes), max(1, len(self.boxes)))

    def is_self_avoiding(self):
        return len(set(self.boxes)) == len(self.boxes)

    def is_connected(self, rho):
        return all(box_distance(a, b) <= STEP * rho for a, b in zip(self.boxes, self.boxes[1:]))


def path_weight(path, beta, N):
    """Product over boxes of beta N^(-8m)."""
    beta = Fraction(beta)
    w = Fraction(1)
    for b in path.boxes if isinstance(path, FractalPath) else path:
        w *= beta * Fraction(1, N ** (8 * b.m))
    return w


def profile_weight(profile, beta, N):
    """Weight of any path whose type counts are `profile` (n_0, n_1, ...)."""
    beta = Fraction(beta)
    L = sum(profile)
    return beta ** L * Fraction(1, N ** (8 * sum(m * c for m, c in enumerate(profile))))


@dataclass
class PathEnumeration:
    start: Box
    k: int
    L: int
    count: int
    profiles: dict                          # (n_0, ..., n_k) -> number of paths
    nodes: int
    max_neighbour_sum: Fraction = None      # admissibility sum max over extended boxes (beta = 1)
    paths: list = None                      # only in collect mode

    def growth_rate(self):
        return self.count ** (1.0 / self.L) if self.count else 0.0

    def s0_fraction_violations(self, N):
        """Paths of length >= N^(k/2) with fewer than half their boxes from S_0."""
        if self.L ** 2 < N ** self.k:
            return 0
        return sum(c for prof, c in self.profiles.items() if 2 * prof[0] < self.L)

    def box_fraction_violations(self, N, C):
        """Paths with more than 2^(k-m) + C/(N-C)^m * L boxes of S_m, for some 1 <= m <= k.

        Only meaningful when N > C; returns None otherwise.
        """
        if N <= C:
            return None
        bad = 0
        for prof, c in self.profiles.items():
            for m in range(1, self.k + 1):
                if prof[m] > 2 ** (self.k - m) + Fraction(C, (N - C) ** m) * self.L:
                    bad += c
                    break
        return bad


def _add(profiles, prof, n):
    if n:
        profiles[prof] = profiles.get(prof, 0) + int(n)


def enumerate_paths(start, k, L, family, budget=NODE_BUDGET, collect=False):
    """All self-avoiding connected paths of exactly L boxes from S_0..S_k starting at `start`.

    collect=True materializes every path (every node is charged to the budget).
    Otherwise prefixes of length <= L-2 are enumerated one by one and the last two
    steps are counted exactly with vectorized distance tests; only the explicit
    prefixes are charged.
    """
    if L < 1:
        raise CarpetLabError("out-of-range", f"L={L}")
    if start.m > k:
        raise CarpetLabError("out-of-range", f"start box in S_{start.m} above level {k}")
    D = family.reach()
    nodes = [0]
    profiles = {}
    paths = [] if collect else None
    nsum = [Fraction(0)]
    weights = [Fraction(1, family.N ** (4 * t)) for t in range(2 * k + 1)]

    def charge(n=1):
        nodes[0] += n
        if nodes[0] > budget:
            raise BudgetExceeded("enumeration-budget-exceeded", f"more than {budget} nodes",
                                 budget=budget)

    def note_sum(box_m, counts):
        s = sum(int(counts[t]) * weights[box_m + t] for t in range(k + 1))
        nsum[0] = max(nsum[0], s)

    def note_sums(box_m, counts):
        # counts: (k+1, n); every weight is a power of N^-4, so scale to integers
        scale = family.N ** (4 * (box_m + k))
        ints = sum(counts[t].astype(object) * family.N ** (4 * (k - t)) for t in range(k + 1))
        nsum[0] = max(nsum[0], Fraction(int(max(ints)), scale))

    def prof_of(path):
        p = [0] * (k + 1)
        for b in path:
            p[b.m] += 1
        return p

    def full(path):
        charge()
        if len(path) == L:
            _add(profiles, tuple(prof_of(path)), 1)
            paths.append(FractalPath(list(path)))
            return
        x, y, r, m = _exclude(neighbours(path[-1], family, k), path)
        for a, b, c, d in zip(x.tolist(), y.tolist(), r.tolist(), m.tolist()):
            path.append(Box(a, b, c, d))
            full(path)
            path.pop()

    def last_two(path):
        # path has length L - 2 >= 1
        base = prof_of(path)
        last = path[-1]
        note_sum(last.m, _neighbour_counts(np.array([last.x]), np.array([last.y]),
                                           np.array([last.r]), np.array([last.m]), family, k)[:, 0])
        x, y, r, m = _exclude(neighbours(last, family, k), path)
        leaves = _neighbour_counts(x, y, r, m, family, k) - _path_hits(x, y, r, m, path, family, k)
        for t in range(k + 1):
            sel = m == t
            if not sel.any():
                continue
            note_sums(t, _neighbour_counts(x[sel], y[sel], r[sel], m[sel], family, k))
            for u in range(k + 1):
                prof = list(base)
                prof[t] += 1
                prof[u] += 1
                _add(profiles, tuple(prof), leaves[u, sel].sum())

    def prefix(path):
        charge()
        if len(path) == L - 2:
            last_two(path)
            return
        x, y, r, m = _exclude(neighbours(path[-1], family, k), path)
        for a, b, c, d in zip(x.tolist(), y.tolist(), r.tolist(), m.tolist()):
            path.append(Box(a, b, c, d))
            prefix(path)
            path.pop()

    if collect or L <= 2:
        if L == 2:
            note_sum(start.m, _neighbour_counts(np.array([start.x]), np.array([start.y]),
                                                np.array([start.r]), np.array([start.m]), family, k)[:, 0])
        if collect:
            full([start])
        else:
            charge()
            if L == 1:
                _add(profiles, tuple(prof_of([start])), 1)
            else:
                x, y, r, m = neighbours(start, family, k)
                for t in range(k + 1):
                    prof = prof_of([start])
                    prof[t] += 1
                    _add(profiles, tuple(prof), (m == t).sum())
    else:
        prefix([start])
    count = sum(profiles.values())
    return PathEnumeration(start, k, L, count, profiles, nodes[0], nsum[0], paths)


def neighbour_sum(box, family, k, beta):
    """sum over neighbours b of sqrt(w(box) w(b)) with w = beta N^(-8m), exact."""
    counts = _neighbour_counts(np.array([box.x]), np.array([box.y]), np.array([box.r]),
                               np.array([box.m]), family, k)[:, 0]
    return Fraction(beta) * sum(int(counts[t]) * Fraction(1, family.N ** (4 * (box.m + t)))
                                for t in range(k + 1))


@dataclass
class CumulativeWeight:
    partial_sums: list                   # exact, index L-1 -> sum over lengths <= L
    counts: list
    max_neighbour_sum: Fraction

    @property
    def total(self):
        return self.partial_sums[-1]


def cumulative_weight(start, family, beta, len_cap, k=None, budget=NODE_BUDGET):
    """Partial sums over L <= len_cap of the total weight of paths from `start`.

    Raises beta-too-large if some box whose neighbourhood the enumeration extends
    has sum_b sqrt(w(a) w(b)) > 1/2.
    """
    beta = Fraction(beta)
    k = max(family.sites, default=-1) + 1 if k is None else k
    sums, counts = [], []
    acc = Fraction(0)
    worst = Fraction(0)
    for L in range(1, len_cap + 1):
        e = enumerate_paths(start, k, L, family, budget=budget)
        worst = max(worst, beta * e.max_neighbour_sum)
        if worst > Fraction(1, 2):
            raise CarpetLabError("beta-too-large", f"neighbour sum {float(worst):.6g} > 1/2",
                                 neighbour_sum=worst)
        acc += sum((c * profile_weight(p, beta, family.N) for p, c in e.profiles.items()), Fraction(0))
        sums.append(acc)
        counts.append(e.count)
    return CumulativeWeight(sums, counts, worst)


# ---------------------------------------------------------------- lift and loop erasure

def box_lift(sites, family, levels=None):
    """Replace each site by a containing box B(z, 10 rho N^m), z in A_m, else by B(w, 1).

    Ties go to the lowest m, then the lexicographically smallest z.
    """
    levels = sorted(family.sites) if levels is None else levels
    out = []
    for w in sites:
        wx, wy = int(w[0]), int(w[1])
        chosen = None
        for m in levels:
            pts = family.sites[m]
            if len(pts) == 0:
                continue
            r = 10 * family.rho * family.N ** m
            inside = np.abs(pts - [wx, wy]).max(axis=1) < r
            if inside.any():
                z = min(map(tuple, pts[inside].tolist()))
                chosen = Box(z[0], z[1], r, m + 1)
                break
        out.append(chosen or unit_box(wx, wy))
    return out


def loop_erase(boxes, rho):
    """Keep B_1; from the current kept box jump to the last later box that differs
    from it and lies within 40 rho; stop when none is left, then drop the final box.
    """
    boxes = list(boxes)
    if len(boxes) <= 1:
        return FractalPath([], ["degenerate"])
    x = np.array([b.x for b in boxes])
    y = np.array([b.y for b in boxes])
    r = np.array([b.r for b in boxes])
    m = np.array([b.m for b in boxes])
    kept = [0]
    cur = 0
    D = STEP * rho
    while True:
        b = boxes[cur]
        later = slice(cur + 1, None)
        d = np.maximum(0, np.maximum(np.abs(x[later] - b.x), np.abs(y[later] - b.y)) - r[later] - b.r)
        same = (x[later] == b.x) & (y[later] == b.y) & (m[later] == b.m)
        ok = np.flatnonzero((d <= D) & ~same)
        if ok.size == 0:
            break
        cur = cur + 1 + int(ok[-1])
        kept.append(cur)
    out = [boxes[i] for i in kept[:-1]]
    return FractalPath(out, [] if out else ["degenerate"])


def nonconsecutive_violations(path, rho):
    """Pairs |i - j| >= 2 with d(B_i, B_j) <= 40 rho."""
    bs = path.boxes
    bad = []
    for i in range(len(bs)):
        for j in range(i + 2, len(bs)):
            if box_distance(bs[i], bs[j]) <= STEP * rho:
                bad.append((i, j))
    return bad


# ---------------------------------------------------------------- length bounds

@dataclass
class LengthReport:
    k: int
    N: int
    C: int
    checked: int
    length_violations: list           # (length, diameter, bound) for len < (1/C)(1 - C/N)^k D
    corollary_violations: list        # (length, diameter) for len < N^(k/2)
    precondition_met: bool            # N >= 100 C, the regime the bounds are stated for

    @property
    def passed(self):
        return not self.length_violations


def check_length_bound(paths, k, N, C):
    """Paths with diameter >= N^k must have length >= (1/C)(1 - C/N)^k D and >= N^(k/2)."""
    coeff = Fraction(1, C) * (1 - Fraction(C, N)) ** k
    checked, lv, cv = 0, [], []
    for p in paths:
        D = p.diameter
        if D < N ** k:
            continue
        checked += 1
        bound = coeff * D
        if p.length < bound:
            lv.append((p.length, D, bound))
        if p.length ** 2 < N ** k:
            cv.append((p.length, D))
    return LengthReport(k, N, C, checked, lv, cv, N >= 100 * C)
