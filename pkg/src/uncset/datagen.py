"""Seeded synthetic scenario families and the scenario CSV format.

Three families are available: a single Gaussian with a random covariance, a
fair mixture of two such Gaussians, and uniform-ish samples from a budgeted
polyhedron. Training sets may have a fraction of rows replaced by uniform
outliers in ``[0, 300]^N``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .numlin import spawn_rngs

FAMILIES = ("gaussian", "mixed", "budgeted")
OUTLIER_HIGH = 300.0


@dataclass(frozen=True)
class DatasetSpec:
    family: str
    n: int
    m: int = 250
    test: int = 10_000
    outliers: float = 0.05
    seed: int = 0
    gamma: float | None = None

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"family must be one of {FAMILIES}, got {self.family!r}")
        if self.n < 1 or self.m < 1 or self.test < 1:
            raise ValueError("N, m and test size must be positive")
        if not 0.0 <= self.outliers < 1.0:
            raise ValueError("outlier fraction must lie in [0, 1)")

    @property
    def budget(self) -> float:
        return self.n / 2.0 if self.gamma is None else float(self.gamma)


def _random_gaussian(n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    mean = rng.uniform(50.0, 150.0, n)
    m = rng.normal(size=(n, n))
    cov = m.T @ m + 0.1 * np.eye(n)
    std = rng.uniform(5.0, 25.0, n) / np.sqrt(np.diag(cov))
    return mean, cov * np.outer(std, std)


def _distribution_rng(spec: DatasetSpec) -> tuple[np.random.Generator, np.random.Generator,
                                                  np.random.Generator, np.random.Generator]:
    # one stream for the distribution, one each for train, test and outliers
    return tuple(spawn_rngs(spec.seed, 4))


def gen_gaussian(spec: DatasetSpec, size: int | None = None, rng=None) -> np.ndarray:
    dist, draw, _, _ = _distribution_rng(spec)
    mean, cov = _random_gaussian(spec.n, dist)
    return (rng or draw).multivariate_normal(mean, cov, size=size or spec.m, method="cholesky")


def mixture_components(spec: DatasetSpec):
    """Both component ``(mean, cov)`` pairs; the means lie in different orthants about 100."""
    dist, _, _, _ = _distribution_rng(spec)
    first = _random_gaussian(spec.n, dist)
    while True:
        second = _random_gaussian(spec.n, dist)
        if np.any(np.sign(first[0] - 100.0) != np.sign(second[0] - 100.0)):
            return first, second


def gen_mixed_gaussian(spec: DatasetSpec, size: int | None = None, rng=None,
                       labels: bool = False):
    (m1, c1), (m2, c2) = mixture_components(spec)
    _, draw, _, _ = _distribution_rng(spec)
    rng = rng or draw
    size = size or spec.m
    pick = rng.random(size) < 0.5
    a = rng.multivariate_normal(m1, c1, size=size, method="cholesky")
    b = rng.multivariate_normal(m2, c2, size=size, method="cholesky")
    out = np.where(pick[:, None], a, b)
    return (out, pick) if labels else out


def budget_bounds(spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    dist, _, _, _ = _distribution_rng(spec)
    return dist.uniform(50.0, 100.0, spec.n), dist.uniform(10.0, 50.0, spec.n)


def gen_budgeted(spec: DatasetSpec, size: int | None = None, rng=None) -> np.ndarray:
    """``c = lower + dev * delta`` with ``delta`` uniform, scaled into ``sum(delta) <= gamma``."""
    lower, dev = budget_bounds(spec)
    _, draw, _, _ = _distribution_rng(spec)
    delta = (rng or draw).random((size or spec.m, spec.n))
    total = delta.sum(axis=1, keepdims=True)
    scale = np.minimum(1.0, spec.budget / np.where(total > 0, total, 1.0))
    return lower + dev * (delta * scale)


def inject_outliers(scenarios, fraction: float, seed_or_rng) -> np.ndarray:
    """Replace ``floor(fraction m)`` randomly chosen rows by uniform draws in ``[0, 300]^N``."""
    if not 0.0 <= fraction < 1.0:
        raise ValueError("outlier fraction must lie in [0, 1)")
    out = np.array(scenarios, dtype=np.float64, copy=True)
    m, n = out.shape
    k = math.floor(fraction * m + 1e-9)
    if k == 0:
        return out
    rng = seed_or_rng if isinstance(seed_or_rng, np.random.Generator) else spawn_rngs(seed_or_rng, 1)[0]
    rows = np.sort(rng.choice(m, size=k, replace=False))
    out[rows] = rng.uniform(0.0, OUTLIER_HIGH, size=(k, n))
    return out


_GENERATORS = {"gaussian": gen_gaussian, "mixed": gen_mixed_gaussian, "budgeted": gen_budgeted}


def generate(spec: DatasetSpec) -> tuple[np.ndarray, np.ndarray]:
    """Training set (with outliers) and a clean test set from disjoint streams."""
    _, train_rng, test_rng, out_rng = _distribution_rng(spec)
    gen = _GENERATORS[spec.family]
    train = gen(spec, spec.m, train_rng)
    test = gen(spec, spec.test, test_rng)
    return inject_outliers(train, spec.outliers, out_rng), test


def write_scenarios(path, scenarios) -> None:
    scenarios = np.atleast_2d(np.asarray(scenarios, dtype=np.float64))
    n = scenarios.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(",".join(f"c_{j + 1}" for j in range(n)) + "\n")
        for row in scenarios:
            fh.write(",".join(repr(float(v)) for v in row) + "\n")


def read_scenarios(path) -> np.ndarray:
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise FormatError(f"{path}: empty scenario file")
    header = [h.strip() for h in rows[0]]
    n = len(header)
    if header != [f"c_{j + 1}" for j in range(n)]:
        raise FormatError(f"{path}: header must be c_1..c_N")
    body = [r for r in rows[1:] if r]
    try:
        data = np.array([[float(v) for v in r] for r in body], dtype=np.float64)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from None
    if data.size == 0:
        return np.zeros((0, n))
    if data.ndim != 2 or data.shape[1] != n:
        raise FormatError(f"{path}: rows must have {n} columns")
    if not np.all(np.isfinite(data)):
        raise FormatError(f"{path}: non-finite entries")
    return data

