"""Chordal Loewner traces from Brownian driving functions, rasterized bubbles and kappa sweeps.

Each time step of length dt uses the driving value U_k = W_{k dt} held constant, for which the
Loewner flow is the vertical-slit map h_k(z) = U_k + sqrt((z - U_k)^2 + 4 dt). The tip at time
k dt is f_1 o ... o f_k (U_k) with f_k the inverse of h_k.
"""
import cmath
from dataclasses import dataclass, field

import numba
import numpy as np
from scipy import ndimage

from .errors import CarpetLabError
from .rng import generator

FOUR = ndimage.generate_binary_structure(2, 1)
NOISE_FLOOR = 3                     # bubbles below this pixel diameter are not resolved


@dataclass
class DrivingPath:
    kappa: float
    T: float
    dt: float
    W: np.ndarray                   # W[k] = W_{k dt}, k = 0..K
    seed: int = 0

    @property
    def steps(self):
        return len(self.W) - 1


def _steps(T, dt):
    if dt <= 0 or T < dt:
        raise CarpetLabError("out-of-range", f"T={T}, dt={dt}", fields=["T", "dt"])
    K = int(round(T / dt))
    if abs(K * dt - T) > 1e-9 * T:
        raise CarpetLabError("out-of-range", f"T={T} is not a multiple of dt={dt}", fields=["T", "dt"])
    return K


def brownian(T, dt, seed, base_dt=None):
    """Standard Brownian motion sampled every dt; with base_dt, sampled on the base_dt
    grid and subsampled, so paths at different dt share the same underlying increments."""
    base_dt = dt if base_dt is None else base_dt
    factor = int(round(dt / base_dt))
    if factor < 1 or abs(factor * base_dt - dt) > 1e-12 * dt:
        raise CarpetLabError("out-of-range", f"dt={dt} is not a multiple of base_dt={base_dt}")
    K = _steps(T, base_dt)
    xi = generator(seed, "sle", base_dt).standard_normal(K)
    B = np.concatenate([[0.0], np.cumsum(xi) * np.sqrt(base_dt)])
    return B[::factor]


def sample_driving(kappa, T, dt, seed, base_dt=None):
    if kappa < 0:
        raise CarpetLabError("out-of-range", f"kappa={kappa}", fields=["kappa"])
    _steps(T, dt)
    W = np.sqrt(kappa) * brownian(T, dt, seed, base_dt)
    return DrivingPath(float(kappa), float(T), float(dt), W, seed)


def _csqrt_upper(z):
    """Principal square root with signed-zero imaginary parts treated as +0."""
    z = np.asarray(z, complex)
    return np.sqrt(z.real + 1j * np.where(z.imag == 0, 0.0, z.imag))


def _inverse_step(w, U, dt):
    s = 2 * np.sqrt(dt)
    return U + _csqrt_upper(w - U - s) * _csqrt_upper(w - U + s)


@dataclass
class TracePolyline:
    points: np.ndarray              # complex tips gamma(k dt), k = 0..K
    dt: float
    kappa: float
    capacity: float                 # coefficient b in g_T(z) = z + b/z + ..., should be 2T
    meta: dict = field(default_factory=dict)

    @property
    def T(self):
        return self.dt * (len(self.points) - 1)

    def to_json(self):
        return {"type": "TracePolyline", "kappa": self.kappa, "dt": self.dt,
                "capacity": self.capacity, "meta": self.meta,
                "x": self.points.real.tolist(), "y": self.points.imag.tolist()}

    @classmethod
    def from_json(cls, d):
        pts = np.asarray(d["x"]) + 1j * np.asarray(d["y"])
        return cls(pts, d["dt"], d["kappa"], d["capacity"], d.get("meta", {}))


def capacity_coefficient(driving, probe=1e6):
    """b in g_T(z) = z + b/z + O(1/z^2), read off at z = probe * i.

    The displacement g - z is accumulated step by step as 4dt / (sqrt((w-U)^2+4dt) + (w-U)),
    with the square root taken as sqrt(w-U-2i sqrt(dt)) sqrt(w-U+2i sqrt(dt)) so that it stays
    on the upper branch; this avoids cancellation at large |z|.
    """
    z = 1j * probe
    w = z
    delta = 0j
    for U in driving.W[1:]:
        a = w - U
        c = 2j * np.sqrt(driving.dt)
        inc = 4 * driving.dt / (_csqrt_upper(a - c) * _csqrt_upper(a + c) + a)
        delta += inc
        w = z + delta
    return float((delta * z).real)


@numba.njit(cache=True)
def _compose(U, dt, idx):
    """Apply f_j for j = K..1 to the tips with index >= j; f_j(w) = U_j + sqrt((w-U_j)^2 - 4dt)
    on the branch with nonnegative imaginary part (real outputs keep the sign of w - U_j)."""
    K = U.size
    n = idx.size
    z = np.empty(n, np.complex128)
    for q in range(n):
        z[q] = U[idx[q]]
    s2 = 4.0 * dt
    start = n
    for j in range(K - 1, -1, -1):
        while start > 0 and idx[start - 1] >= j:
            start -= 1
        u = U[j]
        for q in range(start, n):
            w = z[q] - u
            r = cmath.sqrt(w * w - s2)
            if r.imag < 0.0 or (r.imag == 0.0 and w.real < 0.0):
                r = -r
            z[q] = u + r
        if start < n and not (np.isfinite(z[start].real) and np.isfinite(z[start].imag)):
            return z, j
    return z, -1


def compose_reference(U, dt, idx):
    """Plain numpy version of the backward composition, used as a cross-check."""
    z = U[idx].astype(complex)
    for j in range(len(U) - 1, -1, -1):
        sel = idx >= j
        z[sel] = _inverse_step(z[sel], U[j], dt)
    return z


def trace(driving, every=1):
    """Tips gamma(k dt) for k = 0, every, 2 every, ..., by backward composition of the
    inverse slit maps; O(K^2 / every)."""
    U = np.ascontiguousarray(driving.W[1:], dtype=float)
    idx = np.arange(every - 1, len(U), every)
    z, bad = _compose(U, float(driving.dt), idx)
    if bad >= 0 or not np.isfinite(z).all():
        raise CarpetLabError("map-composition-overflow", f"step {bad}", step=int(bad))
    pts = np.concatenate([[0j], z])
    pts.imag = np.maximum(pts.imag, 0.0)
    return TracePolyline(pts, driving.dt * every, driving.kappa, capacity_coefficient(driving),
                         {"seed": driving.seed, "T": driving.T, "step": driving.dt})


# ---------------------------------------------------------------- rasterization and bubbles

@dataclass(frozen=True)
class Frame:
    x0: float
    x1: float
    y0: float
    y1: float

    def __post_init__(self):
        if not (self.x0 < self.x1 and self.y0 < self.y1) or self.y0 < 0:
            raise CarpetLabError("out-of-range", f"window {self} not in the upper half-plane")


def rasterize(points, frame, px):
    """Boolean (nx, ny) raster of the polyline, every segment sampled at spacing <= px/2."""
    nx = int(np.ceil((frame.x1 - frame.x0) / px))
    ny = int(np.ceil((frame.y1 - frame.y0) / px))
    img = np.zeros((nx, ny), bool)
    p = np.asarray(points, complex)
    if len(p) == 1:
        samples = p
    else:
        seg = np.abs(np.diff(p))
        k = np.maximum(1, np.ceil(seg / (px / 2)).astype(int))
        t = np.concatenate([np.arange(m) / m for m in k])
        start = np.repeat(p[:-1], k)
        d = np.repeat(np.diff(p), k)
        samples = np.concatenate([start + t * d, p[-1:]])
    ix = np.floor((samples.real - frame.x0) / px).astype(int)
    iy = np.floor((samples.imag - frame.y0) / px).astype(int)
    ok = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny)
    img[ix[ok], iy[ok]] = True
    return img


@dataclass
class BubbleGraph:
    labels: np.ndarray              # 0 on trace pixels, components 1..k
    count: int
    diameters: np.ndarray           # pixel diameter of component q at index q-1
    bounded: np.ndarray             # component avoids the left, right and top window edges
    bulk: np.ndarray                # component meets the central half of the window
    edges: set
    connected: bool
    px: float

    def bulk_bubbles(self, floor=NOISE_FLOOR):
        """Pixel diameters of bounded bubbles meeting the bulk, at or above the noise floor."""
        keep = self.bounded & self.bulk & (self.diameters >= floor)
        return self.diameters[keep]

    def bounded_count(self, floor=NOISE_FLOOR):
        return int((self.bounded & (self.diameters >= floor)).sum())


def _connected(k, edges):
    if k <= 1:
        return True
    adj = {q: [] for q in range(1, k + 1)}
    for a, b in edges:
        adj[a].append(b)
        adj[b].append(a)
    seen, stack = {1}, [1]
    while stack:
        for v in adj[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == k


def components_from_raster(img, px=1.0):
    """Bubble graph of the complement of a trace raster (True = trace pixel)."""
    lab, k = ndimage.label(~img, structure=FOUR)
    nx, ny = img.shape
    diam = np.zeros(k, int)
    bounded = np.ones(k, bool)
    bulk = np.zeros(k, bool)
    bx0, bx1, by0, by1 = nx // 4, nx - nx // 4, ny // 4, ny - ny // 4
    for q, sl in enumerate(ndimage.find_objects(lab)):
        diam[q] = max(sl[0].stop - sl[0].start, sl[1].stop - sl[1].start)
        touches = sl[0].start == 0 or sl[0].stop == nx or sl[1].stop == ny
        bounded[q] = not touches
        if sl[0].start < bx1 and sl[0].stop > bx0 and sl[1].start < by1 and sl[1].stop > by0:
            sub = lab[max(sl[0].start, bx0):min(sl[0].stop, bx1), max(sl[1].start, by0):min(sl[1].stop, by1)]
            bulk[q] = bool((sub == q + 1).any())
    edges = set()
    for dx in range(0, 3):
        for dy in range(-2, 3):
            if dx == 0 and dy <= 0:
                continue
            a = lab[:nx - dx, max(0, -dy):ny - max(0, dy)]
            b = lab[dx:, max(0, dy):ny + min(0, dy)]
            m = (a > 0) & (b > 0) & (a != b)
            if m.any():
                pairs = np.unique(np.sort(np.stack([a[m], b[m]], axis=1), axis=1), axis=0)
                edges.update(map(tuple, pairs.tolist()))
    return BubbleGraph(lab, k, diam, bounded, bulk, edges, _connected(k, edges), px)


def bubble_graph(tr, frame, px):
    pts = tr.points if isinstance(tr, TracePolyline) else np.asarray(tr, complex)
    img = rasterize(pts, frame, px)
    if not img.any():
        raise CarpetLabError("trace-misses-window", f"no trace pixel inside {frame}")
    return components_from_raster(img, px)


# ---------------------------------------------------------------- kappa sweep

@dataclass
class SweepRow:
    kappa: float
    trials: int
    quantiles: tuple                # 50/90/99 percent quantiles of bulk bubble pixel diameters
    median_per_trial: list
    diameters_per_trial: list
    connected_frequency: float
    zero_bounded_frequency: float


SWEEP_FRAME = Frame(-0.5, 0.5, 0.0, 1.0)


def kappa_sweep(kappas, trials, T=1.0, dt=1e-4, frame=SWEEP_FRAME, px=0.02, seed=0):
    """Per kappa: bulk bubble diameter quantiles and graph connectivity, with the same
    Brownian increments reused across kappa (trial t uses seed (seed, t))."""
    rows = []
    for kappa in kappas:
        per_trial, meds, conn, zero = [], [], 0, 0
        for t in range(trials):
            s = int(seed) * 1000003 + t
            drv = sample_driving(kappa, T, dt, s)
            g = bubble_graph(trace(drv), frame, px)
            d = g.bulk_bubbles()
            per_trial.append(d.tolist())
            meds.append(float(np.median(d)) if d.size else float("nan"))
            conn += g.connected
            zero += g.bounded_count() == 0
        pooled = np.concatenate([np.asarray(d, float) for d in per_trial]) if per_trial else np.zeros(0)
        q = tuple(float(np.quantile(pooled, v)) for v in (0.5, 0.9, 0.99)) if pooled.size else (np.nan,) * 3
        rows.append(SweepRow(float(kappa), trials, q, meds, per_trial, conn / trials, zero / trials))
    return rows


def bootstrap_monotone(rows, reps=2000, seed=0):
    """Fraction of bootstrap resamples of the (shared) trial indices in which the pooled median
    bulk bubble diameter is nonincreasing along the rows."""
    gen = np.random.default_rng(seed)
    T = rows[0].trials
    data = [[np.asarray(d, float) for d in r.diameters_per_trial] for r in rows]
    hits = 0
    for _ in range(reps):
        idx = gen.integers(0, T, T)
        meds = []
        for per in data:
            pooled = np.concatenate([per[i] for i in idx])
            meds.append(np.median(pooled) if pooled.size else np.inf)
        hits += all(b <= a for a, b in zip(meds, meds[1:]))
    return hits / reps
