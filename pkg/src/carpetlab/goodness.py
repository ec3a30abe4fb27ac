"""m-good boxes, the theta recursion and its threshold, and (m, n)-good sites."""
from dataclasses import dataclass, field
from fractions import Fraction

import numba
import numpy as np
from scipy import ndimage

from . import rng
from .errors import CarpetLabError

M_CAP = 200
FIXED_POINT_TOL = 1e-15
TWO_THIRDS = 2.0 / 3.0


# ---------------------------------------------------------------- phi / theta

def phi(N, p, x, check=True):
    """P[at least N^2 - 1 of N^2 independent children are retained and good], child prob. p*x.

    Evaluated in the factored form y^(K-1) * (y + K(1-y)), K = N^2, y = p x, with
    1 - y formed as (1-p) + p(1-x) so the phase boundary near y = 1 keeps its digits.
    The expanded polynomial K y^(K-1) - (K-1) y^K is evaluated too and compared.
    """
    if not (int(N) == N and N >= 2):
        raise CarpetLabError("out-of-range", f"N={N}")
    if not (0.0 <= p <= 1.0 and 0.0 <= x <= 1.0):
        raise CarpetLabError("out-of-range", f"p={p}, x={x} must lie in [0, 1]")
    K = N * N
    y = p * x
    q = (1.0 - p) + p * (1.0 - x)
    factored = y ** (K - 1) * (y + K * q)
    if check:
        expanded = K * y ** (K - 1) - (K - 1) * y ** K
        scale = max(abs(factored), abs(expanded))
        if abs(factored - expanded) > 1e-12 * scale + 1e-300:
            raise CarpetLabError("out-of-range", f"phi forms disagree: {factored} vs {expanded}")
    return factored


@dataclass
class ThetaSequence:
    N: int
    p: float
    values: list
    converged_at: int = None      # index where |theta_m - theta_{m-1}| < tol, if reached

    @property
    def min(self):
        return min(self.values)

    @property
    def above_two_thirds(self):
        return self.min >= TWO_THIRDS

    def is_nonincreasing(self, slack=1e-12):
        v = self.values
        return all(v[k + 1] <= v[k] + slack for k in range(len(v) - 1))


def theta_sequence(N, p, M, cap=M_CAP):
    """theta_0 = 1, theta_m = phi(theta_{m-1}) for m <= M.

    Beyond `cap` terms, or once successive terms agree to 1e-15, the last value is
    repeated (the sequence is monotone and bounded, so this is its limit).
    """
    if M < 0:
        raise CarpetLabError("out-of-range", f"M={M} < 0")
    vals = [1.0]
    converged = None
    for m in range(1, M + 1):
        if converged is not None or m > cap:
            vals.append(vals[-1])
            continue
        vals.append(phi(N, p, vals[-1]))
        if abs(vals[-1] - vals[-2]) < FIXED_POINT_TOL:
            converged = m
    return ThetaSequence(N, p, vals, converged)


def _theta_min_ok(N, p, M_cap=M_CAP):
    x = 1.0
    for _ in range(M_cap):
        y = phi(N, p, x, check=False)
        if y < TWO_THIRDS:
            return False
        if abs(y - x) < FIXED_POINT_TOL:
            return True
        x = y
    return True


def sufficient_p_bound(N, nu):
    return (1.0 - nu / 2.0) ** (1.0 / (N * N))


def _nu_margin(N, nu):
    """phi(1 - nu) - (1 - nu) at the smallest p allowed by the sufficient bound for nu."""
    return phi(N, sufficient_p_bound(N, nu), 1.0 - nu, check=False) - (1.0 - nu)


def admissible_nu(N, lo=1e-14, hi=1.0 / 3.0, grid=400):
    """Largest nu in (0, 1/3] such that every p > (1 - nu/2)^(1/N^2) gives phi(1-nu) > 1-nu.

    phi is increasing in p, so it suffices to test p at the bound itself. A log
    grid brackets the largest admissible nu, then bisection refines it. Returns
    None when no grid point is admissible.
    """
    nus = np.geomspace(lo, hi, grid)
    ok = [_nu_margin(N, v) > 0 for v in nus]
    if not any(ok):
        return None
    k = max(i for i, good in enumerate(ok) if good)
    if k == len(nus) - 1:
        return float(nus[k])
    a, b = float(nus[k]), float(nus[k + 1])
    for _ in range(100):
        mid = 0.5 * (a + b)
        if _nu_margin(N, mid) > 0:
            a = mid
        else:
            b = mid
    return a


@dataclass
class Threshold:
    N: int
    p0: float
    tol: float
    nu: float
    sufficient_bound: float


def p0_threshold(N, tol=1e-6, M_cap=M_CAP):
    """Smallest p (to within tol) with min_{m <= M_cap} theta_m >= 2/3, by bisection.

    Also reports the largest admissible nu and the sufficient bound (1 - nu/2)^(1/N^2).
    """
    if tol <= 0:
        raise CarpetLabError("out-of-range", f"tol={tol}")
    if not _theta_min_ok(N, 1.0 - tol, M_cap):
        raise CarpetLabError("no-threshold-found", f"no admissible p below 1 - {tol}")
    lo, hi = 0.0, 1.0 - tol
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if _theta_min_ok(N, mid, M_cap):
            hi = mid
        else:
            lo = mid
    nu = admissible_nu(N)
    bound = sufficient_p_bound(N, nu) if nu is not None else float("nan")
    return Threshold(N, hi, tol, nu, bound)


# ---------------------------------------------------------------- m-good boxes

@numba.njit(cache=True)
def _child_counts(mask, N):
    s = mask.shape[0] // N
    out = np.zeros((s, s), np.int32)
    for px in range(s):
        for a in range(N):
            row = mask[px * N + a]
            for py in range(s):
                c = 0
                for b in range(N):
                    c += row[py * N + b]
                out[px, py] += c
    return out


def child_counts(mask, N):
    """Number of True children per parent for a dense level mask of side N*s."""
    return _child_counts(np.ascontiguousarray(mask), N)


@numba.njit(cache=True)
def _marked_good_children(base, N, side_parent, t, good, use_good):
    """Per parent box: children whose mark is 1 and (if use_good) whose label is good."""
    out = np.zeros((side_parent, side_parent), np.int32)
    for px in range(side_parent):
        for a in range(N):
            x = px * N + a
            hi = rng._mix_scalar(base ^ np.uint64(x))
            for py in range(side_parent):
                c = 0
                for b in range(N):
                    y = py * N + b
                    if (rng._mix_scalar(hi ^ np.uint64(y)) >> np.uint64(11)) < t:
                        if not use_good or good[x, y]:
                            c += 1
                out[px, py] += c
    return out


def goodness_pyramid(seed, N, p, bottom, top=0, sigma_upto=None):
    """Dense labels H[l] for top <= l <= bottom, H[l] = "(bottom - l)-good".

    H[bottom] = sigma at level bottom; H[l] = (#children with sigma & H[l+1]) >= N^2 - 1.
    Children are counted straight from the mark hash, so the bottom level is never
    stored unless asked for. Returns (H, sigma); sigma holds the marks of levels
    top..sigma_upto (plus the bottom level when top == bottom).
    """
    K = N * N
    t = np.uint64(rng.threshold(p))
    dummy = np.zeros((1, 1), np.bool_)
    sigma = {}
    H = {}

    def marks(lev):
        return np.ones((1, 1), bool) if lev == 0 else rng.level_marks(seed, lev, N ** lev, p)

    keep = -1 if sigma_upto is None else sigma_upto
    if top == bottom or keep >= bottom:
        H[bottom] = marks(bottom)
        sigma[bottom] = H[bottom]
    for lev in range(bottom - 1, top - 1, -1):
        child = H.get(lev + 1)
        use = lev + 1 < bottom
        counts = _marked_good_children(rng.level_key(seed, lev + 1), N, N ** lev, t,
                                       child if use else dummy, use)
        H[lev] = counts >= K - 1
        if lev <= keep:
            sigma[lev] = marks(lev)
    return H, sigma


@dataclass
class GoodnessTable:
    N: int
    depth: int
    M: int
    labels: dict = field(default_factory=dict)   # (m, level) -> dense bool array

    def is_good(self, addr, m):
        if m == 0 and addr.level == 0:
            return True
        return bool(self.labels[(m, addr.level)][addr.i, addr.j])

    def root_labels(self):
        return [bool(self.labels[(m, 0)][0, 0]) for m in range(self.M + 1)]


def classify_m_good(tree, M):
    """m-good labels for every box at every level l with l + m <= tree depth, m <= M."""
    if M < 0:
        raise CarpetLabError("out-of-range", f"M={M}")
    if tree.depth < M:
        raise CarpetLabError("depth-exceeded", f"m-good up to {M} needs depth >= {M}, got {tree.depth}")
    c = tree.config
    table = GoodnessTable(c.N, c.depth, M)
    for m in range(M + 1):
        for bottom in range(m, c.depth + 1):
            H, _ = goodness_pyramid(c.seed, c.N, c.p, bottom, top=bottom - m)
            table.labels[(m, bottom - m)] = H[bottom - m]
    table.labels[(0, 0)] = np.ones((1, 1), bool)
    return table


def root_good_frequency(N, p, M, seeds):
    """Fraction of trees (one per seed) whose root is m-good, for m = 0..M, with stderr."""
    hits = np.zeros(M + 1)
    for s in seeds:
        hits[0] += 1
        for m in range(1, M + 1):
            H, _ = goodness_pyramid(s, N, p, m)
            hits[m] += bool(H[0][0, 0])
    n = len(seeds)
    freq = hits / n
    return freq, np.sqrt(freq * (1 - freq) / n)


# ---------------------------------------------------------------- (m, n)-good sites

def check_eps(eps, allow_large=False):
    eps = Fraction(eps)
    den = eps.denominator
    if eps <= 0 or den & (den - 1):
        raise CarpetLabError("out-of-range", f"eps={eps} is not a positive dyadic rational")
    if not allow_large and eps >= Fraction(1, 100):
        raise CarpetLabError("out-of-range", f"eps={eps} must be < 1/100")
    if eps >= 1:
        raise CarpetLabError("out-of-range", f"eps={eps} must be < 1")
    return eps


@dataclass
class SiteField:
    """Bad labels on V_{n+1} = eps^(n+1) Z^2 over a rectangular window of sites.

    `bad[m]` is a bool array; entry [u, v] labels the site eps^(n+1) * (origin + (u, v))
    as (m, n+1)-bad.
    """
    eps: Fraction
    n: int
    origin: tuple
    bad: dict
    allow_large_eps: bool = False

    def __post_init__(self):
        self.eps = check_eps(self.eps, self.allow_large_eps)
        shapes = {np.shape(b) for b in self.bad.values()}
        if len(shapes) > 1:
            raise CarpetLabError("out-of-range", f"label arrays differ in shape: {shapes}")

    @property
    def shape(self):
        return next(iter(self.bad.values())).shape


def _j_range(c, eps):
    """Integer a with |a*eps - c| < 1, i.e. sites of V_{n+1} inside B(x, eps^n) along one axis."""
    k, s2 = eps.numerator, eps.denominator
    lo = ((c - 1) * s2) // k + 1
    hi = -((-(c + 1) * s2) // k) - 1
    return lo, hi


EIGHT = np.ones((3, 3), bool)


def touching_box_labels(mask):
    """Label True sites of an integer grid by components of the union of closed boxes B(w, 1).

    Two such boxes meet iff their centres are at Chebyshev distance <= 2. Each box is
    painted as a 4x4 block on the doubled grid, where closed boxes that touch (even
    at a single corner) become 8-adjacent blocks.
    """
    mask = np.asarray(mask, bool)
    big = np.zeros((2 * mask.shape[0] + 2, 2 * mask.shape[1] + 2), bool)
    u, v = np.nonzero(mask)
    for a in range(4):
        for b in range(4):
            big[2 * u + a, 2 * v + b] = True
    lab, n = ndimage.label(big, structure=EIGHT)
    return np.where(mask, lab[2 * np.arange(mask.shape[0])[:, None] + 1, 2 * np.arange(mask.shape[1])[None, :] + 1], 0), n


def bad_components(mask):
    """Components of the union of closed boxes B(w, 1) over True sites of an integer grid.

    Returns (labels, list of (extent_in_sites, slices)).
    """
    lab, n = touching_box_labels(mask)
    out = []
    for k, sl in enumerate(ndimage.find_objects(lab), start=1):
        ext = max(sl[0].stop - sl[0].start, sl[1].stop - sl[1].start) - 1
        out.append((ext, sl))
    return lab, out


def classify_mn_good(field, x, m, details=False):
    """(m, n)-good test for the site x = eps^n * (c, d) of V_n.

    J_x collects sites of V_{n+1} in the open box B(x, eps^n) that are
    (m-1, n+1)-bad or (0, n+1)-bad. Each contributes the closed box of radius
    eps^(n+1); x is good iff every component of their union has L-infinity
    diameter <= eps^n / 4.
    """
    if m < 1:
        raise CarpetLabError("out-of-range", "m >= 1 required; (0, n) labels are inputs")
    for need in {0, m - 1}:
        if need not in field.bad:
            raise CarpetLabError("field-window-too-small", f"missing ({need}, n+1) labels")
    eps = field.eps
    c, d = x
    a0, a1 = _j_range(c, eps)
    b0, b1 = _j_range(d, eps)
    ox, oy = field.origin
    w, h = field.shape
    if a0 < ox or b0 < oy or a1 >= ox + w or b1 >= oy + h:
        raise CarpetLabError("field-window-too-small",
                             f"need sites [{a0},{a1}]x[{b0},{b1}], have [{ox},{ox + w - 1}]x[{oy},{oy + h - 1}]")
    sl = (slice(a0 - ox, a1 - ox + 1), slice(b0 - oy, b1 - oy + 1))
    J = field.bad[0][sl] | field.bad[m - 1][sl]
    _, comps = bad_components(J)
    # diameter in units of eps^(n+1) is extent + 2; compare with eps^n / 4 = eps^(n+1) / (4 eps)
    diams = [Fraction(ext + 2) * eps ** (field.n + 1) for ext, _ in comps]
    limit = eps ** field.n / 4
    good = all(dm <= limit for dm in diams)
    if details:
        return good, diams, limit
    return good


def classify_mn_field(field, m, sites):
    """Bad mask for an iterable of V_n sites (one recursion step toward (m, n) labels)."""
    return np.array([not classify_mn_good(field, s, m) for s in sites], bool)
