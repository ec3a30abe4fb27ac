"""Discrete zero-boundary Gaussian free fields, harmonic splits and the nice/bad vertex hierarchy.

Lattice conventions: a grid of n x n interior sites is stored as an (n+2) x (n+2) array
with a zero ring. Lattice point u = (ux, uy) lives at array index u + origin, with
origin = (n+1)//2. The open box B(c, r) = {|u - c|_inf < r} has interior sites
|u - c|_inf <= r - 1 and boundary ring |u - c|_inf = r.
"""
from dataclasses import dataclass, field
from functools import lru_cache
import math

import numpy as np
from scipy import fft, ndimage

from .errors import CarpetLabError
from .goodness import touching_box_labels
from .rng import generator

GRID_CAP = 128


# ---------------------------------------------------------------- spectral pieces

@lru_cache(maxsize=64)
def _eigs(a, b):
    """Eigenvalues of the Dirichlet Laplacian (4u - neighbours) on an a x b grid."""
    ca = 2 - 2 * np.cos(np.pi * np.arange(1, a + 1) / (a + 1))
    cb = 2 - 2 * np.cos(np.pi * np.arange(1, b + 1) / (b + 1))
    lam = ca[:, None] + cb[None, :]
    lam.setflags(write=False)
    return lam


def _dst(x):
    return fft.dstn(x, type=1, norm="ortho", axes=(-2, -1))


def green_matrix(n):
    """Dense (n^2 x n^2) Green function of the Dirichlet Laplacian, by direct inversion."""
    size = n * n
    A = 4 * np.eye(size)
    for i in range(n):
        for j in range(n):
            k = i * n + j
            for di, dj in ((1, 0), (-1, 0), (0, 1), (0, -1)):
                a, b = i + di, j + dj
                if 0 <= a < n and 0 <= b < n:
                    A[k, a * n + b] = -1
    return np.linalg.inv(A)


def solve_dirichlet(closure):
    """Discrete harmonic extension of the ring values of `closure` into its interior.

    Works on the last two axes; returns a new array with the interior replaced.
    """
    u = np.array(closure, dtype=float, copy=True)
    a, b = u.shape[-2] - 2, u.shape[-1] - 2
    if a < 1 or b < 1:
        return u
    f = np.zeros(u.shape[:-2] + (a, b))
    f[..., 0, :] += u[..., 0, 1:-1]
    f[..., -1, :] += u[..., -1, 1:-1]
    f[..., :, 0] += u[..., 1:-1, 0]
    f[..., :, -1] += u[..., 1:-1, -1]
    u[..., 1:-1, 1:-1] = _dst(_dst(f) / _eigs(a, b))
    return u


def mean_value_defect(closure):
    """max over interior sites of |u - mean of the four neighbours|."""
    u = np.asarray(closure, float)
    if u.shape[-1] < 3 or u.shape[-2] < 3:
        return 0.0
    avg = (u[..., :-2, 1:-1] + u[..., 2:, 1:-1] + u[..., 1:-1, :-2] + u[..., 1:-1, 2:]) / 4
    return float(np.abs(u[..., 1:-1, 1:-1] - avg).max())


@lru_cache(maxsize=32)
def _ring(side):
    """Indices (rows, cols) of the boundary ring of a side x side square, corners excluded."""
    s = side - 1
    k = np.arange(1, s)
    rows = np.concatenate([np.zeros_like(k), np.full_like(k, s), k, k])
    cols = np.concatenate([k, k, np.zeros_like(k), np.full_like(k, s)])
    return rows, cols


@lru_cache(maxsize=32)
def extension_matrix(r):
    """Matrix mapping ring values of B(0, r) (corners excluded) to its (2r-1)^2 interior values."""
    side = 2 * r + 1
    rows, cols = _ring(side)
    basis = np.zeros((rows.size, side, side))
    basis[np.arange(rows.size), rows, cols] = 1.0
    H = solve_dirichlet(basis)[:, 1:-1, 1:-1].reshape(rows.size, -1)
    H.setflags(write=False)
    return H


# ---------------------------------------------------------------- fields and windows

@dataclass(frozen=True)
class Window:
    """Rectangle of interior lattice sites x0..x1, y0..y1 (inclusive); its ring is one site out."""
    x0: int
    x1: int
    y0: int
    y1: int

    @classmethod
    def box(cls, c, r):
        return cls(c[0] - r + 1, c[0] + r - 1, c[1] - r + 1, c[1] + r - 1)

    def contains(self, other):
        return (self.x0 - 1 <= other.x0 - 1 and other.x1 + 1 <= self.x1 + 1
                and self.y0 - 1 <= other.y0 - 1 and other.y1 + 1 <= self.y1 + 1)


@dataclass
class LatticeField:
    n: int
    values: np.ndarray                  # (n+2, n+2), zero ring

    @property
    def origin(self):
        return (self.n + 1) // 2

    def index(self, u):
        return (u[0] + self.origin, u[1] + self.origin)

    def closure(self, w):
        """Values on the window's closure (ring included), copied."""
        o = self.origin
        return self.values[..., w.x0 - 1 + o:w.x1 + 2 + o, w.y0 - 1 + o:w.y1 + 2 + o].copy()

    def fits(self, w):
        """The window's ring lies inside the grid's interior sites."""
        o = self.origin
        return w.x0 - 1 + o >= 1 and w.x1 + 1 + o <= self.n and w.y0 - 1 + o >= 1 and w.y1 + 1 + o <= self.n


def _check_n(n, cap):
    if n < 1:
        raise CarpetLabError("out-of-range", f"grid size {n}")
    if n > cap:
        raise CarpetLabError("grid-too-large", f"grid size {n} over cap {cap}", cap=cap)


def sample_fields(n, seed, count, cap=GRID_CAP, chunk=4096):
    """(count, n+2, n+2) array of independent exact zero-boundary GFF samples (c_G = 1)."""
    _check_n(n, cap)
    gen = generator(seed, "gff", n)
    scale = 1 / np.sqrt(_eigs(n, n))
    out = np.zeros((count, n + 2, n + 2))
    for s in range(0, count, chunk):
        e = min(count, s + chunk)
        out[s:e, 1:-1, 1:-1] = _dst(gen.standard_normal((e - s, n, n)) * scale)
    return out


def sample_field(n, seed, cap=GRID_CAP):
    return LatticeField(n, sample_fields(n, seed, 1, cap=cap)[0])


@dataclass
class HarmonicSplit:
    window: Window
    harmonic: np.ndarray                # on the closure; equals the field on the ring
    remainder: np.ndarray               # on the closure; zero on the ring


def harmonic_split(fld, window):
    if not fld.fits(window):
        raise CarpetLabError("window-at-boundary", f"{window} touches the grid boundary")
    c = fld.closure(window)
    h = solve_dirichlet(c)
    return HarmonicSplit(window, h, c - h)


# ---------------------------------------------------------------- multiscale decomposition

def nearest_multiple(z, a):
    return tuple(int(math.floor(v / a + 0.5)) * a for v in z)


@dataclass
class Decomposition:
    windows: list                       # W_0 = B(z, 2 rho), W_m = B(z_m, 4 a_m)
    centers: list
    pieces: list                        # piece m on the closure of W_m (harmonic there)
    target: np.ndarray                  # harmonic extension into W_0, on its closure
    tight_nesting: bool                 # B(z, 2rho) in B(z_1, 2a_1), B(z_m, 4a_m) in B(z_{m+1}, 2a_{m+1})

    def reconstruction_error(self):
        """max over interior sites of W_0 of |sum of pieces - target|."""
        w0 = self.windows[0]
        total = np.zeros_like(self.target[1:-1, 1:-1])
        for w, p in zip(self.windows, self.pieces):
            dx, dy = w0.x0 - w.x0, w0.y0 - w.y0
            total += p[1 + dx:1 + dx + total.shape[0], 1 + dy:1 + dy + total.shape[1]]
        return float(np.abs(total - self.target[1:-1, 1:-1]).max())


def _inside(inner_c, inner_r, outer_c, outer_r):
    return max(abs(inner_c[0] - outer_c[0]), abs(inner_c[1] - outer_c[1])) + inner_r <= outer_r


def multiscale_decompose(fld, z, rho, scales):
    """Pieces h^{W_m} - h^{W_{m+1}} restricted to W_m, plus the last extension h^{W_mbar}.

    On W_0 they sum to the harmonic extension of the field into B(z, 2 rho).
    """
    z = tuple(int(v) for v in z)
    centers = [z] + [nearest_multiple(z, a) for a in scales]
    radii = [2 * rho] + [4 * a for a in scales]
    windows = [Window.box(c, r) for c, r in zip(centers, radii)]
    for m in range(len(windows) - 1):
        if not _inside(centers[m], radii[m], centers[m + 1], radii[m + 1]):
            raise CarpetLabError("scale-nesting-violated",
                                 f"B({centers[m]}, {radii[m]}) not inside B({centers[m + 1]}, {radii[m + 1]})")
    for w in windows:
        if not fld.fits(w):
            raise CarpetLabError("window-at-boundary", f"{w} touches the grid boundary")
    tight = _inside(centers[0], radii[0], centers[1], 2 * scales[0]) if scales else True
    for m in range(1, len(scales)):
        tight &= _inside(centers[m], radii[m], centers[m + 1], 2 * scales[m])
    ext = [solve_dirichlet(fld.closure(w)) for w in windows]
    pieces = []
    for m, w in enumerate(windows):
        if m + 1 < len(windows):
            nxt = windows[m + 1]
            dx, dy = w.x0 - nxt.x0, w.y0 - nxt.y0
            outer = ext[m + 1][dx:dx + ext[m].shape[0], dy:dy + ext[m].shape[1]]
            pieces.append(solve_dirichlet(fld.closure(w) - outer))
        else:
            pieces.append(ext[m])
    return Decomposition(windows, centers, pieces, ext[0], bool(tight))


# ---------------------------------------------------------------- nice / bad hierarchy

def _remainder(fld, c, r):
    cl = fld.closure(Window.box(c, r))
    return cl - solve_dirichlet(cl)


def _max_oscillation(R, r_outer, offsets, r_inner, r_osc):
    """max over centre offsets y (relative to the centre of R) of the oscillation over
    |u - y| <= r_osc of the harmonic extension of R into B(y, r_inner)."""
    H = extension_matrix(r_inner)
    rows, cols = _ring(2 * r_inner + 1)
    c = r_outer
    ri = rows[None, :] + c - r_inner + offsets[:, :1]
    ci = cols[None, :] + c - r_inner + offsets[:, 1:]
    vals = R[ri, ci] @ H                            # (ny, (2 r_inner - 1)^2)
    side = 2 * r_inner - 1
    vals = vals.reshape(-1, side, side)
    lo, hi = r_inner - 1 - r_osc, r_inner + r_osc
    sub = vals[:, lo:hi, lo:hi].reshape(len(offsets), -1)
    return float((sub.max(axis=1) - sub.min(axis=1)).max())


def _offsets(step, reach):
    k = np.arange(-(reach // step), reach // step + 1) * step
    gx, gy = np.meshgrid(k, k, indexing="ij")
    return np.stack([gx.ravel(), gy.ravel()], axis=1)


@dataclass
class NiceStats:
    """M-independent statistics from which labels for any M follow."""
    N: int
    rho: int
    scales: list                                    # a_1..a_mbar
    vertices: dict                                  # j -> (k, 2) lattice points
    oscillation: dict                               # j -> (k,) clause (1) or (i) maxima

    def table(self, M):
        return NiceTable(self, M)


@dataclass
class NiceTable:
    stats: NiceStats
    M: float
    labels: dict = field(default_factory=dict)      # j -> (k,) bool, True = nice
    clause_iii_used: dict = field(default_factory=dict)

    def __post_init__(self):
        s = self.stats
        for j in sorted(s.vertices):
            thr = self.M * s.N ** ((j - 1) / 2)
            cond_i = s.oscillation[j] <= thr
            if j == 1:
                self.labels[1] = cond_i
                continue
            aj, ap = s.scales[j - 1], s.scales[j - 2]
            lower = s.vertices[j - 1]
            lab = self.labels[j - 1]
            index = {tuple(p): q for q, p in enumerate(lower.tolist())}
            nice = np.zeros(len(s.vertices[j]), bool)
            used = 0
            for q, x in enumerate(s.vertices[j].tolist()):
                bad = []
                k = aj // ap
                for dx in range(-k + 1, k):
                    for dy in range(-k + 1, k):
                        y = (x[0] + dx * ap, x[1] + dy * ap)
                        if not lab[index[y]]:
                            bad.append(y)
                if not bad:
                    ok = True                       # clause (ii)
                else:
                    # clause (iii): some z in a_{j-1} Z^2 with |y - z| <= 6 a_{j-1} for all bad y
                    b = np.array(bad) // ap
                    ok = bool(((b.max(axis=0) - b.min(axis=0)) <= 12).all())
                    used += ok
                nice[q] = cond_i[q] and ok
            self.labels[j] = nice
            self.clause_iii_used[j] = used

    def bad_fraction(self, j):
        lab = self.labels[j]
        return float((~lab).mean()) if lab.size else float("nan")


def nice_statistics(fld, N, rho, levels, R=None):
    """Fluctuation maxima behind the nice/bad labels of a_j-vertices, j = 1..levels.

    Level-j vertices are the points of a_j Z^2 whose window B(x, 4 a_j) fits in the grid
    (and |x|_inf <= R when given at the top level); lower levels cover what those need.
    """
    scales = [rho * N ** j for j in range(1, levels + 1)]
    need = {}
    top = scales[-1]
    lim = (fld.n - 1) // 2 - 4 * top
    tops = [p for p in _offsets(top, max(lim, 0)).tolist()
            if fld.fits(Window.box(p, 4 * top)) and (R is None or max(map(abs, p)) <= R)]
    if not tops:
        raise CarpetLabError("grid-too-small", f"no a_{levels}-vertex window B(x, {4 * top}) fits "
                             f"in a grid of size {fld.n}", needed=8 * top + 3)
    need[levels] = sorted(map(tuple, tops))
    for j in range(levels, 1, -1):
        aj, ap = scales[j - 1], scales[j - 2]
        k = aj // ap
        pts = set()
        for x in need[j]:
            for dx in range(-k + 1, k):
                for dy in range(-k + 1, k):
                    pts.add((x[0] + dx * ap, x[1] + dy * ap))
        need[j - 1] = sorted(pts)
    osc = {}
    r_osc1 = math.ceil(3 * rho / 2) - 1
    for j in range(1, levels + 1):
        aj = scales[j - 1]
        vals = []
        for x in need[j]:
            R_x = _remainder(fld, x, 4 * aj)
            if j == 1:
                offs = _offsets(1, 4 * aj - 2 * rho)
                vals.append(_max_oscillation(R_x, 4 * aj, offs, 2 * rho, r_osc1))
            else:
                ap = scales[j - 2]
                offs = _offsets(ap, 4 * aj - 4 * ap)
                vals.append(_max_oscillation(R_x, 4 * aj, offs, 4 * ap, 3 * ap - 1))
        osc[j] = np.array(vals)
    verts = {j: np.array(need[j], np.int64).reshape(-1, 2) for j in need}
    return NiceStats(N, rho, scales, verts, osc)


def classify_nice(fld, N, rho, M, levels, R=None):
    return nice_statistics(fld, N, rho, levels, R).table(M)


def label_window(N, rho, j):
    """Half-width of the field window a level-j label depends on: B(x, 4 a_j)."""
    return 4 * rho * N ** j


# ---------------------------------------------------------------- fluctuation and components

def harmonic_oscillation(fields, r, inner=None):
    """Oscillation over B(0, inner) of the harmonic extension into B(0, r), per sample.

    `fields` is a (T, n+2, n+2) batch; inner defaults to r // 2.
    """
    fields = np.asarray(fields)
    n = fields.shape[-1] - 2
    o = (n + 1) // 2
    if o - r < 1 or o + r > n:
        raise CarpetLabError("window-at-boundary", f"B(0, {r}) touches the grid boundary")
    inner = r // 2 if inner is None else inner
    H = extension_matrix(r)
    rows, cols = _ring(2 * r + 1)
    ring = fields[:, rows + o - r, cols + o - r]
    side = 2 * r - 1
    vals = (ring @ H).reshape(-1, side, side)
    lo, hi = r - inner, r + inner - 1
    if hi - lo < 2:
        raise CarpetLabError("window-too-small", f"inner box of B(0, {r}) has fewer than two sites per axis")
    sub = vals[:, lo:hi, lo:hi].reshape(len(vals), -1)
    return sub.max(axis=1) - sub.min(axis=1)


@dataclass
class TailFit:
    t: np.ndarray
    frequency: np.ndarray
    slope: float
    r_squared: float
    C_hat: float                     # smallest C with frequency <= exp(-t^2 / C) on the grid


def tail_fit(samples, t):
    """Fit log P[S >= t] against t^2 by least squares."""
    samples = np.asarray(samples)
    t = np.asarray(t, float)
    freq = np.array([(samples >= v).mean() for v in t])
    keep = freq > 0
    x, y = t[keep] ** 2, np.log(freq[keep])
    A = np.stack([x, np.ones_like(x)], axis=1)
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    pred = A @ coef
    ss = ((y - y.mean()) ** 2).sum()
    r2 = 1 - ((y - pred) ** 2).sum() / ss if ss > 0 else 1.0
    C_hat = float(np.max(x / -np.minimum(y, -1e-300)))
    return TailFit(t, freq, float(coef[0]), float(r2), C_hat)


@dataclass
class HarnessResult:
    max_diameter: int
    bound: float
    passed: bool
    worst: tuple = None              # (x0, y0, x1, y1) bounding box of the widest component
    components: int = 0


def component_harness(bad, iota, R):
    """Widest component (L-inf diameter) of the union of closed boxes B(w, 1) over bad sites.

    `bad` is a boolean array over the sites of L_R; boxes touching at a point are connected.
    """
    bad = np.asarray(bad, bool)
    lab, k = touching_box_labels(bad)
    best, worst = 0, None
    for q, sl in enumerate(ndimage.find_objects(lab), start=1):
        if sl is None:
            continue
        ext = max(sl[0].stop - sl[0].start, sl[1].stop - sl[1].start) - 1
        d = ext + 2
        if d > best:
            best, worst = d, (sl[0].start, sl[1].start, sl[0].stop - 1, sl[1].stop - 1)
    bound = iota * R
    return HarnessResult(best, bound, best <= bound, worst, k)
