"""Dense float64 arrays and the seeded generator everything else draws from.

A "tensor" here is a plain ``numpy.ndarray`` of dtype float64 in C (row-major)
order. The helpers below add the shape and finiteness checks the rest of the
package relies on.

Randomness comes from :class:`Rng`, a thin wrapper over numpy's Philox4x64-10
counter-based bit generator. Philox output depends only on (key, counter), so
a given seed produces the same stream on every platform numpy supports.
"""
from __future__ import annotations

import functools

import numpy as np

from .errors import ArgumentError, DimensionError, NumericError

DTYPE = np.float64


def as_tensor(data, shape=None) -> np.ndarray:
    """Copy ``data`` into a fresh C-ordered float64 array, optionally reshaped."""
    t = np.array(data, dtype=DTYPE, order="C", copy=True)
    if shape is not None:
        t = reshape(t, shape)
    check_finite(t)
    return t


def check_finite(t: np.ndarray, where: str = "tensor") -> np.ndarray:
    if not np.all(np.isfinite(t)):
        raise NumericError(f"non-finite value in {where}")
    return t


def reshape(t: np.ndarray, shape) -> np.ndarray:
    shape = tuple(int(s) for s in shape)
    if any(s <= 0 for s in shape):
        raise DimensionError(f"extents must be positive, got {shape}")
    if int(np.prod(shape)) != t.size:
        raise DimensionError(f"cannot reshape {t.shape} to {shape}")
    return np.reshape(t, shape, order="C")


def matmul(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul needs 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner extents differ: {a.shape} @ {b.shape}")
    with np.errstate(over="ignore", invalid="ignore"):
        out = a @ b
    return check_finite(out, "matmul result")


def tmap(fn, t: np.ndarray) -> np.ndarray:
    out = np.array([fn(float(v)) for v in t.ravel()], dtype=DTYPE)
    return check_finite(out.reshape(t.shape), "map result")


def tzip(fn, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    if x.shape != y.shape:
        raise DimensionError(f"zip needs equal shapes, got {x.shape} and {y.shape}")
    out = np.array([fn(float(u), float(v)) for u, v in zip(x.ravel(), y.ravel())], dtype=DTYPE)
    return check_finite(out.reshape(x.shape), "zip result")


def treduce(fn, t: np.ndarray, initial=None) -> float:
    """Left fold over the flattened tensor in ascending index order."""
    flat = [float(v) for v in np.ravel(t)]
    if initial is None:
        return functools.reduce(fn, flat)
    return functools.reduce(fn, flat, initial)


def ordered_sum(t: np.ndarray, axis=None) -> np.ndarray:
    """Sum accumulated strictly in ascending index order along ``axis``.

    ``np.sum`` uses pairwise summation, whose grouping depends on the extent;
    this keeps the left-to-right order instead.
    """
    if axis is None:
        t = np.ravel(t)
        axis = 0
    t = np.moveaxis(t, axis, 0)
    acc = np.zeros(t.shape[1:], dtype=DTYPE)
    for row in t:
        acc = acc + row
    return acc


class Rng:
    """Seeded Philox4x64-10 stream. Single owner; not safe to share between threads."""

    def __init__(self, seed: int):
        seed = int(seed)
        if not 0 <= seed < 2**64:
            raise ArgumentError(f"seed must be an unsigned 64-bit integer, got {seed}")
        self.seed = seed
        self._gen = np.random.Generator(np.random.Philox(seed))

    def uniform(self, shape, lo=0.0, hi=1.0) -> np.ndarray:
        return rand_uniform(self, shape, lo, hi)

    def normal(self, shape, loc=0.0, scale=1.0) -> np.ndarray:
        return self._gen.normal(loc, scale, size=tuple(shape)).astype(DTYPE)

    def permutation(self, n: int) -> np.ndarray:
        return self._gen.permutation(n)

    def integers(self, lo, hi, size=None):
        return self._gen.integers(lo, hi, size=size)

    def spawn(self) -> "Rng":
        """Child stream seeded from this one (advances this stream)."""
        return Rng(int(self._gen.integers(0, 2**63)))


def rand_uniform(rng: Rng, shape, lo=0.0, hi=1.0) -> np.ndarray:
    if not lo < hi:
        raise ArgumentError(f"need lo < hi, got lo={lo}, hi={hi}")
    shape = tuple(int(s) for s in shape)
    # random() is [0, 1); the affine map can round up to hi for huge ranges
    out = lo + (hi - lo) * rng._gen.random(size=shape)
    return np.where(out >= hi, np.nextafter(hi, lo), out).astype(DTYPE)
