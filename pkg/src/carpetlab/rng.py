"""Counter-based randomness.

A mark is a pure function of (seed, level, i, j): the key is folded through a
SplitMix64 finalizer, one component at a time. Any box can be queried without
touching its siblings and the result does not depend on traversal order.
"""
import hashlib

import numba
import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = (1 << 64) - 1


def mix64(z):
    """SplitMix64 finalizer on uint64 scalars or arrays (wrapping arithmetic)."""
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _GOLDEN
        z = (z ^ (z >> np.uint64(30))) * _M1
        z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def _u64(x):
    return np.uint64(int(x) & _MASK)


def level_key(seed, level):
    return mix64(mix64(_u64(seed)) ^ _u64(level))


def box_hash(seed, level, i, j):
    """Hash of box (level, i, j); i and j broadcast."""
    base = level_key(seed, level)
    hi = mix64(base ^ np.asarray(i, dtype=np.int64).astype(np.uint64))
    return mix64(hi ^ np.asarray(j, dtype=np.int64).astype(np.uint64))


def threshold(p):
    """Integer threshold t with P[(h >> 11) < t] = t / 2**53 ~= p; exact at p in {0, 1}."""
    if p >= 1.0:
        return 1 << 53
    if p <= 0.0:
        return 0
    return int(p * (1 << 53))


def bernoulli(h, p):
    return (h >> np.uint64(11)) < np.uint64(threshold(p))


def uniform(h):
    return (h >> np.uint64(11)).astype(np.float64) * 2.0**-53


@numba.njit(cache=True)
def _mix_scalar(z):
    z = z + np.uint64(0x9E3779B97F4A7C15)
    z = (z ^ (z >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    z = (z ^ (z >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return z ^ (z >> np.uint64(31))


@numba.njit(cache=True)
def _dense_marks(base, i0, i1, side, t):
    out = np.empty((i1 - i0, side), np.bool_)
    for i in range(i0, i1):
        hi = _mix_scalar(base ^ np.uint64(i))
        for j in range(side):
            out[i - i0, j] = (_mix_scalar(hi ^ np.uint64(j)) >> np.uint64(11)) < t
    return out


def level_marks(seed, level, side, p, rows=None):
    """Dense boolean marks for all boxes of one level (side x side), indexed [i, j].

    Same values as `bernoulli(box_hash(...), p)`; `rows` restricts the i range.
    """
    i0, i1 = (0, side) if rows is None else (rows.start, rows.stop)
    return _dense_marks(np.uint64(level_key(seed, level)), i0, i1, side, np.uint64(threshold(p)))


def derive_seed(root, *parts):
    """64-bit child seed from a root seed and a path of labels (module name, trial index, ...)."""
    h = hashlib.blake2b(digest_size=8)
    h.update(int(root & _MASK).to_bytes(8, "little"))
    for part in parts:
        h.update(b"/")
        h.update(str(part).encode())
    return int.from_bytes(h.digest(), "little")


def generator(seed, *parts):
    """numpy Generator for streams that are not box-keyed (fields, driving paths)."""
    return np.random.Generator(np.random.PCG64(derive_seed(seed, *parts)))
