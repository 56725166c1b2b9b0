"""Dense linear-algebra helpers and the seeded random generator.

Vectors and matrices are plain ``numpy`` float64 arrays; :func:`as_vector` and
:func:`as_matrix` are the validating constructors used at API boundaries.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite

PIVOT_TOL = 1e-12


def as_vector(v, dim: int | None = None, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise DimensionMismatch(f"{name} must be 1-D, got shape {arr.shape}")
    if dim is not None and arr.shape[0] != dim:
        raise DimensionMismatch(f"{name} has length {arr.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def as_matrix(a, shape: tuple[int | None, int | None] | None = None,
              name: str = "matrix") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1 and arr.size == 0:
        arr = arr.reshape(0, shape[1] if shape and shape[1] is not None else 0)
    if arr.ndim != 2:
        raise DimensionMismatch(f"{name} must be 2-D, got shape {arr.shape}")
    if shape is not None:
        for got, want in zip(arr.shape, shape):
            if want is not None and got != want:
                raise DimensionMismatch(f"{name} has shape {arr.shape}, expected {shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def cholesky(s) -> np.ndarray:
    """Upper-triangular ``V`` with ``V.T @ V == s``.

    Plain Cholesky-Banachiewicz; a pivot at or below ``1e-12`` raises
    :class:`NotPositiveDefinite`.
    """
    s = as_matrix(s, name="S")
    n = s.shape[0]
    if s.shape[1] != n:
        raise DimensionMismatch(f"S must be square, got {s.shape}")
    if not np.allclose(s, s.T, rtol=1e-12, atol=1e-12 * max(1.0, np.abs(s).max(initial=0.0))):
        raise NotPositiveDefinite("matrix is not symmetric")
    v = np.zeros_like(s)
    for j in range(n):
        pivot = s[j, j] - v[:j, j] @ v[:j, j]
        if pivot <= PIVOT_TOL:
            raise NotPositiveDefinite(f"non-positive pivot {pivot:.3g} at index {j}")
        v[j, j] = math.sqrt(pivot)
        if j + 1 < n:
            v[j, j + 1:] = (s[j, j + 1:] - v[:j, j] @ v[:j, j + 1:]) / v[j, j]
    return v


def norm(v, p) -> float:
    """l1, l2 or l-infinity norm; ``p`` may be 1, 2, ``inf`` or ``"inf"``."""
    v = np.asarray(v, dtype=np.float64).ravel()
    if v.size == 0:
        return 0.0
    if p == 1:
        return float(np.abs(v).sum())
    if p == 2:
        return float(math.sqrt(v @ v))
    if p in (math.inf, "inf"):
        return float(np.abs(v).max())
    raise ValueError(f"unsupported norm {p!r}")


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator; identical seeds give identical streams."""
    return np.random.Generator(np.random.PCG64(int(seed) & 0xFFFFFFFFFFFFFFFF))


def spawn_rngs(seed: int, n: int) -> list[np.random.Generator]:
    """``n`` statistically independent generators derived from one seed."""
    ss = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return [np.random.Generator(np.random.PCG64(child)) for child in ss.spawn(n)]
