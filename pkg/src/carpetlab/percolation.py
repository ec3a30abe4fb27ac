"""Fractal percolation: retained sets, maximal removed boxes and removed-box clusters."""
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np
from scipy import ndimage

from . import rng
from .boxlattice import BoxAddress, Rect
from .errors import CarpetLabError

MAX_DEPTH = 12
MAX_RASTER_SIDE = 4096

FOUR = ndimage.generate_binary_structure(2, 1)


@dataclass(frozen=True)
class RetentionConfig:
    N: int
    p: float
    depth: int
    seed: int = 0
    max_depth: int = MAX_DEPTH

    def __post_init__(self):
        problems = []
        if int(self.N) != self.N or self.N < 2:
            problems.append(f"N={self.N} must be an integer >= 2")
        if not 0.0 <= self.p <= 1.0:
            problems.append(f"p={self.p} must lie in [0, 1]")
        if self.depth < 1:
            problems.append(f"depth={self.depth} must be >= 1")
        if problems:
            raise CarpetLabError("out-of-range", "; ".join(problems), fields=problems)
        if self.depth > self.max_depth:
            raise CarpetLabError("depth-exceeded", f"depth {self.depth} > max {self.max_depth}")


class RetentionTree:
    """Marks sigma_B are a pure function of (seed, box); retained levels are built lazily.

    Level n is stored as two int64 arrays (i, j).
    """

    def __init__(self, config):
        self.config = config
        self._levels = {0: (np.zeros(1, np.int64), np.zeros(1, np.int64))}

    @property
    def N(self):
        return self.config.N

    @property
    def depth(self):
        return self.config.depth

    def mark(self, addr):
        if addr.level == 0:
            return True
        h = rng.box_hash(self.config.seed, addr.level, addr.i, addr.j)
        return bool(rng.bernoulli(h, self.config.p))

    def marks(self, level, i, j):
        if level == 0:
            return np.ones(np.shape(i), bool)
        return rng.bernoulli(rng.box_hash(self.config.seed, level, i, j), self.config.p)

    def children_of(self, level):
        """Children (i, j) of every box retained at `level`."""
        pi, pj = self.retained_indices(level)
        N = self.N
        a = np.arange(N)
        ci = (pi[:, None, None] * N + a[None, :, None]).repeat(N, axis=2).ravel()
        cj = (pj[:, None, None] * N + a[None, None, :]).repeat(N, axis=1).ravel()
        return ci, cj

    def retained_indices(self, n):
        if n > self.depth or n < 0:
            raise CarpetLabError("depth-exceeded", f"level {n} outside 0..{self.depth}")
        if n not in self._levels:
            ci, cj = self.children_of(n - 1)
            keep = self.marks(n, ci, cj)
            self._levels[n] = (ci[keep], cj[keep])
        return self._levels[n]

    def retained_count(self, n):
        return int(self.retained_indices(n)[0].size)

    def retained_area(self, n):
        return Fraction(self.retained_count(n), self.N ** (2 * n))

    def retained_mask(self, n):
        side = self.N ** n
        mask = np.zeros((side, side), bool)
        i, j = self.retained_indices(n)
        mask[i, j] = True
        return mask

    def to_json(self):
        """Marks of every child of every retained box, as [level, i, j, bit]."""
        marks = []
        for n in range(1, self.depth + 1):
            ci, cj = self.children_of(n - 1)
            bits = self.marks(n, ci, cj)
            marks.extend([n, int(a), int(b), int(s)] for a, b, s in zip(ci, cj, bits))
        c = self.config
        return {"format": "carpetlab/retention-tree", "version": 1,
                "config": {"N": c.N, "p": c.p, "depth": c.depth, "seed": c.seed},
                "marks": marks}


def sample(config):
    return RetentionTree(config)


def retained_set(tree, n):
    i, j = tree.retained_indices(n)
    return {BoxAddress(n, int(a), int(b), tree.N) for a, b in zip(i, j)}


def removed_indices(tree, depth=None):
    """Per level l = 1..depth, arrays (i, j) of children of A_{l-1} with sigma = 0."""
    depth = tree.depth if depth is None else depth
    out = {}
    for n in range(1, depth + 1):
        ci, cj = tree.children_of(n - 1)
        drop = ~tree.marks(n, ci, cj)
        out[n] = (ci[drop], cj[drop])
    return out


def removed_boxes(tree, depth=None):
    """Maximal boxes with sigma = 0, restricted to levels <= depth."""
    return {BoxAddress(n, int(a), int(b), tree.N)
            for n, (i, j) in removed_indices(tree, depth).items() for a, b in zip(i, j)}


class UnionFind:
    def __init__(self, n):
        self.parent = np.arange(n)

    def find(self, x):
        root = x
        while self.parent[root] != root:
            root = self.parent[root]
        while self.parent[x] != root:
            self.parent[x], x = root, self.parent[x]
        return root

    def union(self, a, b):
        ra, rb = self.find(a), self.find(b)
        if ra != rb:
            self.parent[max(ra, rb)] = min(ra, rb)
        return ra != rb


def paint(boxes, base, level):
    """Raster of box ids (index into `boxes`) at `level`; -1 where no box."""
    side = base ** level
    if side > MAX_RASTER_SIDE:
        raise CarpetLabError("depth-exceeded", f"raster side {side} > {MAX_RASTER_SIDE}")
    grid = np.full((side, side), -1, np.int64)
    for k, b in enumerate(boxes):
        s = base ** (level - b.level)
        grid[b.i * s:(b.i + 1) * s, b.j * s:(b.j + 1) * s] = k
    return grid


def _pairs(a, b):
    keep = (a >= 0) & (b >= 0) & (a != b)
    if not keep.any():
        return np.empty(0, np.int64), np.empty(0, np.int64)
    u = np.unique(np.stack([a[keep], b[keep]], axis=1), axis=0)
    return u[:, 0], u[:, 1]


@dataclass
class ClusterSet:
    base: int
    depth: int
    rule: str
    clusters: list            # list of sorted lists of BoxAddress
    unresolved_corners: list = field(default_factory=list)   # (x, y) lattice points at depth resolution
    corner_contacts: list = field(default_factory=list)      # (cluster_a, cluster_b, (x, y))

    def partition(self):
        return frozenset(frozenset(c) for c in self.clusters)

    def cluster_of(self):
        return {b: k for k, c in enumerate(self.clusters) for b in c}

    def to_json(self):
        return {"format": "carpetlab/cluster-set", "version": 1, "base": self.base,
                "depth": self.depth, "rule": self.rule,
                "clusters": [[b.as_triple() for b in c] for c in self.clusters],
                "unresolved_corners": [list(map(int, z)) for z in self.unresolved_corners],
                "corner_contacts": [[int(a), int(b), list(map(int, z))] for a, b, z in self.corner_contacts]}


def clusters(removed, rule="edge-adjacency", base=None, depth=None):
    """Partition maximal removed boxes into chain-connected clusters.

    edge-adjacency: boxes connect iff they share a segment of positive length.
    corner-closure: additionally, boxes touching only at a corner connect iff a
    third removed box contains that corner; corners without such a box are
    recorded as unresolved.
    """
    if rule not in ("edge-adjacency", "corner-closure"):
        raise CarpetLabError("out-of-range", f"unknown adjacency rule {rule!r}")
    boxes = sorted(removed)
    if base is None:
        base = boxes[0].base if boxes else 2
    level = max([b.level for b in boxes] + [depth or 0, 1])
    if not boxes:
        return ClusterSet(base, level, rule, [])
    grid = paint(boxes, base, level)
    uf = UnionFind(len(boxes))
    for a, b in (_pairs(grid[:-1, :], grid[1:, :]), _pairs(grid[:, :-1], grid[:, 1:])):
        for x, y in zip(a, b):
            uf.union(x, y)

    # corners: 2x2 windows with diagonal removed cells from different boxes
    c00, c10, c01, c11 = grid[:-1, :-1], grid[1:, :-1], grid[:-1, 1:], grid[1:, 1:]
    corner_hits = []
    for d1, d2, o1, o2 in ((c00, c11, c10, c01), (c10, c01, c00, c11)):
        hit = (d1 >= 0) & (d2 >= 0) & (d1 != d2) & (o1 < 0) & (o2 < 0)
        for x, y in zip(*np.nonzero(hit)):
            corner_hits.append((int(d1[x, y]), int(d2[x, y]), (int(x) + 1, int(y) + 1)))
        third = (d1 >= 0) & (d2 >= 0) & (d1 != d2) & ((o1 >= 0) | (o2 >= 0))
        if rule == "corner-closure":
            # already linked through the third box's edges; kept explicit for the rule
            for a, b in zip(d1[third], d2[third]):
                uf.union(a, b)

    roots = np.array([uf.find(k) for k in range(len(boxes))])
    groups = defaultdict(list)
    for k, r in enumerate(roots):
        groups[r].append(boxes[k])
    ordered = sorted(groups.values(), key=lambda c: c[0])
    index = {r: n for n, r in enumerate(sorted(groups, key=lambda r: groups[r][0]))}
    contacts = []
    unresolved = []
    for a, b, z in corner_hits:
        ca, cb = index[roots[a]], index[roots[b]]
        unresolved.append(z)
        if ca != cb:
            contacts.append((min(ca, cb), max(ca, cb), z))
    return ClusterSet(base, level, rule, ordered, sorted(set(unresolved)), sorted(set(contacts)))


@dataclass
class Filling:
    base: int
    level: int
    origin: tuple             # cell offset (i0, j0) of `mask`
    mask: np.ndarray          # cells of the filling
    cluster_cells: int

    @property
    def area(self):
        return Fraction(int(self.mask.sum()), self.base ** (2 * self.level))

    @property
    def cluster_area(self):
        return Fraction(self.cluster_cells, self.base ** (2 * self.level))

    def cells(self):
        i, j = np.nonzero(self.mask)
        return set(zip((i + self.origin[0]).tolist(), (j + self.origin[1]).tolist()))

    def rects(self):
        """Filling as a list of Rects, one per maximal vertical run of cells in a column."""
        s = Fraction(1, self.base ** self.level)
        out = []
        for a in range(self.mask.shape[0]):
            col = np.concatenate([[False], self.mask[a], [False]])
            d = np.diff(col.astype(np.int8))
            for lo, hi in zip(np.nonzero(d == 1)[0], np.nonzero(d == -1)[0]):
                x = a + self.origin[0]
                out.append(Rect(x * s, (lo + self.origin[1]) * s, (x + 1) * s, (hi + self.origin[1]) * s))
        return out


def fill_mask(mask):
    """Cells of `mask` plus every cell not 4-connected to the outside."""
    padded = np.pad(mask, 1)
    lab, _ = ndimage.label(~padded, structure=FOUR)
    outside = lab == lab[0, 0]
    return ~outside[1:-1, 1:-1]


def boundary_loop(mask):
    """Closed lattice loop around a hole-free, edge-connected cell set.

    Directed unit edges keep the set on their left; an Euler circuit strings them
    into one loop and collinear runs are merged. Vertices are cell-corner indices.
    """
    m = np.pad(mask, 1)
    out = defaultdict(list)
    for x, y in zip(*np.nonzero(m)):
        x, y = int(x), int(y)
        if not m[x, y - 1]:
            out[(x, y)].append((x + 1, y))
        if not m[x + 1, y]:
            out[(x + 1, y)].append((x + 1, y + 1))
        if not m[x, y + 1]:
            out[(x + 1, y + 1)].append((x, y + 1))
        if not m[x - 1, y]:
            out[(x, y + 1)].append((x, y))
    start = min(out)
    stack, loop = [start], []
    while stack:
        v = stack[-1]
        if out[v]:
            stack.append(out[v].pop())
        else:
            loop.append(stack.pop())
    loop.reverse()
    # merge collinear unit steps
    pts = [loop[0]]
    for k in range(1, len(loop) - 1):
        a, b, c = pts[-1], loop[k], loop[k + 1]
        if (b[0] - a[0]) * (c[1] - b[1]) != (b[1] - a[1]) * (c[0] - b[0]):
            pts.append(b)
    pts.append(loop[-1])
    return [(x - 1, y - 1) for x, y in pts]


def filling_and_outer_boundary(cluster, base=None):
    """Filling (complement of the unbounded complementary component) and its boundary loop.

    The loop is a list of exact (x, y) vertices; first and last coincide.
    """
    cluster = list(cluster)
    if not cluster:
        raise CarpetLabError("empty-region", "empty cluster")
    base = base or cluster[0].base
    level = max(b.level for b in cluster)
    cells = []
    for b in cluster:
        s = base ** (level - b.level)
        cells.append((b.i * s, b.j * s, (b.i + 1) * s, (b.j + 1) * s))
    i0 = min(c[0] for c in cells)
    j0 = min(c[1] for c in cells)
    i1 = max(c[2] for c in cells)
    j1 = max(c[3] for c in cells)
    mask = np.zeros((i1 - i0, j1 - j0), bool)
    for a0, b0, a1, b1 in cells:
        mask[a0 - i0:a1 - i0, b0 - j0:b1 - j0] = True
    filled = fill_mask(mask)
    s = Fraction(1, base ** level)
    loop = [((x + i0) * s, (y + j0) * s) for x, y in boundary_loop(filled)]
    return Filling(base, level, (i0, j0), filled, int(mask.sum())), loop
