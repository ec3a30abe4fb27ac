"""Carpet extraction from a percolation sample and a finite-depth Whyburn validator.

Box sets are dense boolean rasters. dagger[n] lives at resolution n (cells are
level-n boxes); star[n] lives at resolution n + 1 because corner trims remove
level-(n+1) boxes.
"""
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

from .errors import CarpetLabError, InvariantViolation
from .goodness import child_counts, goodness_pyramid
from .percolation import FOUR, fill_mask, paint

MIN_BASE = 6


def upsample(mask, N):
    return np.repeat(np.repeat(mask, N, axis=0), N, axis=1)


# ---------------------------------------------------------------- A_n dagger

@dataclass
class DaggerSequence:
    N: int
    depth: int
    budget: int
    levels: list                      # levels[n]: bool raster at resolution n
    horizons: list                    # goodness horizon used at each level
    flags: list = field(default_factory=list)

    @property
    def root_good(self):
        return "root-not-good" not in self.flags


def dagger_sequence(tree, depth, budget=None):
    """A_n dagger for n <= depth: boxes of A_n inside A_{n-1} dagger that are good.

    Infinite goodness is approximated from a fixed bottom level B = depth + budget:
    a level-n box is kept when it is (B - n)-good, so every level uses at least
    `budget` further levels. budget defaults to tree depth - depth.
    """
    c = tree.config
    if budget is None:
        budget = c.depth - depth
    if depth < 1 or budget < 0 or depth + budget > c.depth:
        raise CarpetLabError("depth-exceeded",
                             f"depth {depth} + budget {budget} needs a tree of depth >= {depth + budget}, got {c.depth}")
    bottom = depth + budget
    H, sigma = goodness_pyramid(c.seed, c.N, c.p, bottom, sigma_upto=depth)
    horizons = [bottom - n for n in range(depth + 1)]
    if not H[0][0, 0]:
        return DaggerSequence(c.N, depth, budget, [], horizons, ["root-not-good"])
    levels = [np.ones((1, 1), bool)]
    for n in range(1, depth + 1):
        levels.append(upsample(levels[-1], c.N) & sigma[n] & H[n])
    return DaggerSequence(c.N, depth, budget, levels, horizons)


def check_child_rule(dagger):
    """Boxes of A_n dagger (n < depth) with fewer than N^2 - 1 children in A_{n+1} dagger."""
    N = dagger.N
    bad = []
    for n in range(len(dagger.levels) - 1):
        counts = child_counts(dagger.levels[n + 1], N)
        hit = dagger.levels[n] & (counts < N * N - 1)
        bad.extend((n, int(i), int(j)) for i, j in zip(*np.nonzero(hit)))
    return bad


# ---------------------------------------------------------------- complement components

def complement_labels(mask):
    """4-connected components of the complement of a retained raster.

    The raster is padded with one ring standing for the outside of [0,1]^2; the
    returned label array includes that ring and the outside gets label 1.
    """
    padded = np.pad(~mask, 1, constant_values=True)
    lab, n = ndimage.label(padded, structure=FOUR)
    ext = lab[0, 0]
    if ext != 1:
        lab = np.where(lab == ext, 1, np.where(lab == 1, ext, lab))
    return lab, n


def point_contacts(lab):
    """Vertices where two different complement components meet diagonally.

    `lab` is a padded label array (0 = retained). Returns a list of
    (vertex_x, vertex_y, diagonal) with vertex coordinates in unpadded cell units;
    diagonal 0 means the lower-left/upper-right cells are the complement pair.
    """
    c00, c10, c01, c11 = lab[:-1, :-1], lab[1:, :-1], lab[:-1, 1:], lab[1:, 1:]
    out = []
    for diag, (a, b) in enumerate(((c00, c11), (c10, c01))):
        hit = (a > 0) & (b > 0) & (a != b)
        for x, y in zip(*np.nonzero(hit)):
            out.append((int(x), int(y), diag))
    return out


def trim_cells(vx, vy, diag, N):
    """The two level-(n+1) cells at vertex (vx, vy) (level-n units) on the retained diagonal."""
    X, Y = vx * N, vy * N
    if diag == 0:
        return [(X, Y - 1), (X - 1, Y)]
    return [(X - 1, Y - 1), (X, Y)]


@dataclass
class CarpetApprox:
    N: int
    depth: int
    budget: int
    dagger: list                      # resolution n
    star: list                        # resolution n + 1
    trims: list                       # per level: list of level-(n+1) cells removed
    contacts: list                    # per level: list of (vx, vy, diag) at resolution n
    flags: list = field(default_factory=list)

    @property
    def empty(self):
        return not self.star

    def area(self, n):
        return Fraction(int(self.star[n].sum()), self.N ** (2 * (n + 1)))

    def new_holes(self, n):
        """Level-n cells of A_{n-1} star that A_n dagger drops (resolution n)."""
        if n == 0:
            return np.zeros((1, 1), bool)
        prev = self.star[n - 1]
        return prev & ~self.dagger[n]

    def to_json(self):
        levels = []
        for n in range(len(self.star)):
            holes = np.argwhere(self.new_holes(n)).tolist()
            levels.append({"level": n, "holes": holes,
                           "trims": [list(t) for t in self.trims[n]],
                           "area": f"{self.area(n).numerator}/{self.area(n).denominator}"})
        return {"format": "carpetlab/carpet", "version": 1, "N": self.N, "depth": self.depth,
                "budget": self.budget, "flags": self.flags, "levels": levels}


def star_trim(dagger, N=None):
    """A_n star = (A_{n-1} star & A_n dagger) minus corner trims.

    Wherever the closures of two distinct complementary components meet at a
    single lattice point, the two level-(n+1) boxes on the other diagonal at that
    point are removed. Every such point contact is trimmed.
    """
    N = dagger.N if N is None else N
    if N < MIN_BASE:
        raise CarpetLabError("unsupported-base",
                             f"N={N} < {MIN_BASE}; run base N^2 (two levels at a time) instead")
    if not dagger.levels:
        return CarpetApprox(N, dagger.depth, dagger.budget, [], [], [], [], list(dagger.flags))
    star, trims, contacts = [np.ones((N, N), bool)], [[]], [[]]
    for n in range(1, dagger.depth + 1):
        prev = star[-1]                                   # resolution n
        G = prev & dagger.levels[n]
        lab, _ = complement_labels(G)
        found = point_contacts(lab)
        fine = upsample(G, N)
        cut = set()
        for vx, vy, diag in found:
            # padded window origin (x, y) is vertex (x, y) in unpadded cell units
            cut.update(trim_cells(vx, vy, diag, N))
        for i, j in cut:
            if not fine[i, j]:
                raise InvariantViolation("trim-target-not-retained", f"level {n} cell {(i, j)}")
            fine[i, j] = False
        after = point_contacts(complement_labels(fine)[0])
        if after:
            raise InvariantViolation("closures-touch-after-trim", f"level {n}: {after[:3]}")
        star.append(fine)
        trims.append(sorted(cut))
        contacts.append(found)
    return CarpetApprox(N, dagger.depth, dagger.budget, dagger.levels, star, trims, contacts,
                        list(dagger.flags))


def gap_bound(N, k, m):
    """N^{-k} (1 - 4 sum_{i=1}^m N^{-i} - 2 N^{-m-1}), exact."""
    N = Fraction(N)
    return N ** -k * (1 - 4 * sum((N ** -i for i in range(1, m + 1)), Fraction(0)) - 2 * N ** (-m - 1))


# ---------------------------------------------------------------- component tracking

def _boundary_cells(lab):
    """Per label, complement cells with a retained cell among their 8 neighbours."""
    retained = lab == 0
    near = ndimage.binary_dilation(retained, structure=np.ones((3, 3), bool))
    cells = {}
    xs, ys = np.nonzero(near & ~retained)
    ls = lab[xs, ys]
    order = np.argsort(ls, kind="stable")
    xs, ys, ls = xs[order], ys[order], ls[order]
    cuts = np.flatnonzero(np.diff(ls)) + 1
    for gx, gy, gl in zip(np.split(xs, cuts), np.split(ys, cuts), np.split(ls, cuts)):
        if gl.size:
            cells[int(gl[0])] = np.stack([gx, gy], axis=1)
    return cells


def pair_gaps(lab, labels=None):
    """Exact gaps in cell units, max(0, chebyshev - 1), between every pair of labels."""
    cells = _boundary_cells(lab)
    keys = sorted(cells) if labels is None else [k for k in sorted(labels) if k in cells]
    trees = {k: cKDTree(cells[k]) for k in keys}
    out = {}
    for a_idx, a in enumerate(keys):
        for b in keys[a_idx + 1:]:
            small, big = (a, b) if len(cells[a]) <= len(cells[b]) else (b, a)
            d, _ = trees[big].query(cells[small], k=1, p=np.inf)
            out[(a, b)] = max(0, int(round(d.min())) - 1)
    return out


@dataclass
class LevelState:
    level: int
    lab: np.ndarray                   # padded labels at resolution level + 1
    ident: dict                       # label -> identity
    gaps: dict                        # (id_a, id_b) -> exact gap


@dataclass
class ComponentSet:
    N: int
    depth: int
    birth: dict                       # identity -> birth level (outside: 0)
    states: list
    violations: list = field(default_factory=list)   # gap-induction failures
    floor_violations: list = field(default_factory=list)   # gaps below N^{-k}/5

    def gap_history(self):
        hist = {}
        for st in self.states:
            for pair, g in st.gaps.items():
                hist.setdefault(pair, []).append((st.level, g))
        return hist

    def final(self):
        return self.states[-1] if self.states else None

    def diameters(self, state=None):
        """identity -> exact L-infinity diameter (outside excluded)."""
        st = state or self.final()
        if st is None:
            return {}
        scale = Fraction(1, self.N ** (st.level + 1))
        out = {}
        for k, sl in enumerate(ndimage.find_objects(st.lab), start=1):
            if sl is None or k == 1:
                continue
            out[st.ident[k]] = max(sl[0].stop - sl[0].start, sl[1].stop - sl[1].start) * scale
        return out


OUTSIDE = 0


def track_components(carpet, check=True):
    """Follow complementary components of A_n star across levels by containment.

    Component identities are born when a component contains no earlier one; the
    outside of the square has identity 0 and birth level 0. A component that
    absorbs two earlier identities is an invariant violation. Every pair's exact
    gap is recorded and compared with the gap-induction bound.
    """
    N = carpet.N
    birth = {OUTSIDE: 0}
    states = []
    violations, floor_violations = [], []
    prev = None
    next_id = 1
    for n, mask in enumerate(carpet.star):
        lab, count = complement_labels(mask)
        ident = {1: OUTSIDE}
        if prev is not None:
            for old_label, old_id in prev.ident.items():
                xs, ys = np.nonzero(prev.lab == old_label)
                # padded cell (x, y) at res n -> interior cell (x-1)*N + 1 at res n+1 (padded)
                if xs.size == 0:
                    continue
                x, y = int(xs[0]), int(ys[0])
                if 0 < x < prev.lab.shape[0] - 1 and 0 < y < prev.lab.shape[1] - 1:
                    fx, fy = (x - 1) * N + 1, (y - 1) * N + 1
                else:
                    fx, fy = 0, 0
                new_label = int(lab[fx, fy])
                if new_label == 0:
                    raise InvariantViolation("component-shrank", f"identity {old_id} at level {n}")
                if new_label in ident and ident[new_label] != old_id:
                    raise InvariantViolation("components-merged",
                                             f"identities {ident[new_label]} and {old_id} at level {n}")
                ident[new_label] = old_id
        for k in range(2, count + 1):
            if k not in ident:
                ident[k] = next_id
                birth[next_id] = n
                next_id += 1
        cell_gaps = pair_gaps(lab)
        scale = Fraction(1, N ** (n + 1))
        gaps = {}
        for (a, b), g in cell_gaps.items():
            ia, ib = sorted((ident[a], ident[b]))
            gap = g * scale
            gaps[(ia, ib)] = gap
            k = max(birth[ia], birth[ib])
            if gap < gap_bound(N, k, n - k):
                violations.append((n, ia, ib, gap, gap_bound(N, k, n - k)))
            if gap < Fraction(1, 5 * N ** k):
                floor_violations.append((n, ia, ib, gap, k))
        st = LevelState(n, lab, ident, gaps)
        states.append(st)
        prev = st
    cs = ComponentSet(N, carpet.depth, birth, states, violations, floor_violations)
    if check and violations:
        raise InvariantViolation("gap-induction", f"{violations[:3]}")
    return cs


# ---------------------------------------------------------------- Whyburn report

@dataclass
class WhyburnReport:
    depth: int
    budget: int
    min_gap: Fraction                 # None when fewer than two components
    max_diameter_by_birth: dict
    areas: list
    area_ratios: list
    gaps_positive: bool
    diameters_nonincreasing: bool
    areas_nonincreasing: bool
    flags: list

    @property
    def passed(self):
        return self.gaps_positive and self.diameters_nonincreasing

    def to_json(self):
        fs = lambda x: None if x is None else f"{x.numerator}/{x.denominator}"
        return {"format": "carpetlab/whyburn-report", "version": 1, "depth": self.depth,
                "budget": self.budget, "pass": self.passed, "flags": self.flags,
                "min_gap": fs(self.min_gap),
                "max_diameter_by_birth": {str(k): fs(v) for k, v in sorted(self.max_diameter_by_birth.items())},
                "area": [fs(a) for a in self.areas],
                "area_ratio": [fs(r) for r in self.area_ratios],
                "area_proxy_note": "interior emptiness is replaced by area decay at finite depth"}


def whyburn_report(components, carpet):
    """Finite-depth Whyburn check on the final level: positive gaps and shrinking diameters."""
    flags = list(carpet.flags)
    areas = [carpet.area(n) for n in range(len(carpet.star))]
    ratios = [areas[n] / areas[n - 1] if areas[n - 1] else Fraction(0) for n in range(1, len(areas))]
    st = components.final()
    gaps = list(st.gaps.values()) if st else []
    min_gap = min(gaps) if gaps else None
    by_birth = {}
    for ident, dm in components.diameters().items():
        k = components.birth[ident]
        by_birth[k] = max(by_birth.get(k, Fraction(0)), dm)
    ks = sorted(by_birth)
    nonincreasing = all(by_birth[a] >= by_birth[b] for a, b in zip(ks, ks[1:]))
    if not carpet.star:
        flags.append("vacuous")
    return WhyburnReport(carpet.depth, carpet.budget, min_gap, by_birth, areas, ratios,
                         min_gap is None or min_gap > 0, nonincreasing,
                         all(a >= b for a, b in zip(areas, areas[1:])), flags)


# ---------------------------------------------------------------- cluster carpet

@dataclass
class ClusterCarpet:
    event_E: bool
    depth: int
    U: np.ndarray                     # cells of the chosen interior component
    carpet: np.ndarray                # U minus fillings of outermost clusters
    inside: list                      # cluster indices inside U
    outermost: list
    fillings: dict                    # cluster index -> bool raster (full resolution)
    boundary_contacts: int            # corner contacts between distinct clusters (all truncation-limited)
    contacts_in_U: int


def cluster_carpet(clusterset):
    """Carpet from removed-box clusters: drop boundary-touching clusters and outermost fillings.

    Event E holds when some finest-level cell is not covered by a cluster that
    touches the square's boundary; U is the largest 4-connected region of such
    cells (ties: first in raster order).
    """
    base, depth = clusterset.base, clusterset.depth
    side = base ** depth
    boxes = [b for c in clusterset.clusters for b in c]
    owner = np.array([k for k, c in enumerate(clusterset.clusters) for _ in c], np.int64)
    grid = paint(boxes, base, depth) if boxes else np.full((side, side), -1, np.int64)
    cl = np.where(grid >= 0, owner[np.maximum(grid, 0)] if boxes else -1, -1)
    edge = np.unique(np.concatenate([cl[0], cl[-1], cl[:, 0], cl[:, -1]]))
    touching = set(int(k) for k in edge if k >= 0)
    free = ~np.isin(cl, list(touching)) if touching else np.ones_like(cl, bool)
    empty = np.zeros((side, side), bool)
    if not free.any():
        return ClusterCarpet(False, depth, empty, empty, [], [], {}, len(clusterset.corner_contacts), 0)
    lab, n = ndimage.label(free, structure=FOUR)
    sizes = np.bincount(lab.ravel())[1:]
    U = lab == (int(np.argmax(sizes)) + 1)
    inside = sorted(int(k) for k in np.unique(cl[U]) if k >= 0)
    fillings = {k: fill_mask(cl == k) for k in inside}
    outermost = [k for k in inside
                 if not any(j != k and fillings[j][cl == k].all() for j in inside)]
    carpet = U.copy()
    for k in outermost:
        carpet &= ~fillings[k]
    in_U = sum(1 for a, b, _ in clusterset.corner_contacts if a in inside and b in inside)
    return ClusterCarpet(True, depth, U, carpet, inside, outermost, fillings,
                         len(clusterset.corner_contacts), in_U)
