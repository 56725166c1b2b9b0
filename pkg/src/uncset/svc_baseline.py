"""Support vector clustering with the weighted l1 kernel.

The kernel is ``K(u, v) = lbar - ||Q (u - v)||_1`` with ``Q`` a whitening
matrix from the sample covariance. Because the dual fixes ``sum(alpha) = 1``,
the constant ``lbar`` drops out and the dual reduces to minimizing
``-alpha' D alpha`` over the capped simplex, ``D`` the pairwise weighted
distances. The learned set is the polyhedron
``sum_{i in SV} alpha_i ||Q (c - c_i)||_1 <= theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import DegenerateData, EmptyBoundary, FormatError, LpFailure, NoConvergence
from .lp import LinearProgram, LpSolution, solve_lp
from .numlin import as_matrix, cholesky

ALPHA_TOL = 1e-8
KKT_TOL = 1e-6
MAX_SWEEPS = 10**5


def weighting_matrix(data) -> np.ndarray:
    """Inverse of the lower Cholesky factor of the jittered sample covariance."""
    data = as_matrix(data, name="data")
    m, n = data.shape
    if m < 2:
        raise DegenerateData("need at least two scenarios")
    cov = np.atleast_2d(np.cov(data, rowvar=False))
    tr = float(np.trace(cov))
    if tr <= 0.0:
        raise DegenerateData("covariance trace is zero")
    cov = cov + (1e-6 * tr / n) * np.eye(n)
    lower = cholesky(0.5 * (cov + cov.T)).T
    return np.linalg.solve(lower, np.eye(n))


def kernel_eval(u, v, q, lbar: float) -> float:
    return float(lbar - np.abs(q @ (np.asarray(u, float) - np.asarray(v, float))).sum())


def pairwise_l1(a: np.ndarray, b: np.ndarray, chunk: int = 256) -> np.ndarray:
    """``||a_i - b_j||_1`` for all row pairs, built in row chunks to bound memory."""
    out = np.empty((a.shape[0], b.shape[0]))
    for s in range(0, a.shape[0], chunk):
        out[s:s + chunk] = np.abs(a[s:s + chunk, None, :] - b[None, :, :]).sum(axis=2)
    return out


@dataclass
class SvcModel:
    data: np.ndarray
    q: np.ndarray
    offsets: np.ndarray
    alpha: np.ndarray
    nu: float
    sweeps: int = 0

    @property
    def cap(self) -> float:
        return 1.0 / (self.data.shape[0] * self.nu)

    @property
    def lbar(self) -> float:
        return float(self.offsets.sum())

    @property
    def sv(self) -> np.ndarray:
        return np.flatnonzero(self.alpha > ALPHA_TOL)

    @property
    def bsv(self) -> np.ndarray:
        a = self.alpha
        return np.flatnonzero((a > ALPHA_TOL) & (a < self.cap - ALPHA_TOL))

    def distances(self) -> np.ndarray:
        z = self.data @ self.q.T
        return pairwise_l1(z, z)

    def dual_objective(self) -> float:
        """``alpha' K alpha - alpha' diag(K)`` with the kernel written out."""
        k = self.lbar - self.distances()
        return float(self.alpha @ k @ self.alpha - self.alpha @ np.diag(k))

    def kkt_violation(self) -> float:
        return _violation(-2.0 * self.distances() @ self.alpha, self.alpha, self.cap)

    def dumps(self) -> str:
        m, n = self.data.shape
        lines = [f"svcmodel v1 {n} {m}", f"nu {self.nu!r}"]
        lines += ["q " + " ".join(repr(float(v)) for v in row) for row in self.q]
        lines.append("offsets " + " ".join(repr(float(v)) for v in self.offsets))
        lines.append("alpha " + " ".join(repr(float(v)) for v in self.alpha))
        lines += ["c " + " ".join(repr(float(v)) for v in row) for row in self.data]
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "SvcModel":
        lines = [ln.split() for ln in text.splitlines() if ln.strip()]
        try:
            head = lines[0]
            if head[:2] != ["svcmodel", "v1"]:
                raise FormatError("missing 'svcmodel v1' header")
            n, m = int(head[2]), int(head[3])
            nu = float(lines[1][1])
            q = np.array([[float(v) for v in ln[1:]] for ln in lines[2:2 + n]])
            offsets = np.array([float(v) for v in lines[2 + n][1:]])
            alpha = np.array([float(v) for v in lines[3 + n][1:]])
            data = np.array([[float(v) for v in ln[1:]] for ln in lines[4 + n:4 + n + m]])
        except (IndexError, ValueError) as exc:
            raise FormatError(f"bad svc model: {exc}") from None
        if q.shape != (n, n) or data.shape != (m, n) or alpha.shape != (m,) or offsets.shape != (m,):
            raise FormatError("svc model sections have inconsistent sizes")
        return cls(data, q, offsets, alpha, nu)


def _violation(g, alpha, cap) -> float:
    up = alpha < cap - 1e-15
    down = alpha > 1e-15
    if not up.any() or not down.any():
        return 0.0
    return max(0.0, float(g[down].max() - g[up].min()))


def solve_dual(data, q, nu: float, tol: float = KKT_TOL, max_sweeps: int = MAX_SWEEPS) -> SvcModel:
    """Pairwise SMO on the maximal violating pair.

    One sweep is ``m`` pair updates. Raises :class:`NoConvergence` when the
    KKT violation is still above ``tol`` after ``max_sweeps`` sweeps.
    """
    data = as_matrix(data, name="data")
    q = as_matrix(q, (data.shape[1], data.shape[1]), name="Q")
    if not 0.0 < nu <= 1.0:
        raise ValueError("nu must lie in (0, 1]")
    m = data.shape[0]
    z = data @ q.T
    dist = pairwise_l1(z, z)
    far = dist.max(axis=1)
    dmax = float(far.max())
    if dmax <= 0.0:
        raise DegenerateData("all scenarios coincide")
    # only the sum matters; twice the largest distance keeps every kernel value positive
    offsets = 2.0 * dmax * far / far.sum()
    cap = 1.0 / (m * nu)
    alpha = np.full(m, 1.0 / m)
    g = -2.0 * dist @ alpha
    limit = max_sweeps * m
    it = 0
    while True:
        up = alpha < cap - 1e-15
        down = alpha > 1e-15
        gi = np.where(up, g, np.inf)
        gj = np.where(down, g, -np.inf)
        i = int(np.argmin(gi))
        j = int(np.argmax(gj))
        if gj[j] - gi[i] <= tol:
            break
        if it >= limit:
            raise NoConvergence(f"SMO did not converge in {max_sweeps} sweeps")
        it += 1
        dij = dist[i, j]
        room = min(cap - alpha[i], alpha[j])
        step = room if dij <= 0 else min(room, (g[j] - g[i]) / (4.0 * dij))
        alpha[i] += step
        alpha[j] -= step
        if alpha[j] < 1e-15:
            alpha[j] = 0.0
        if cap - alpha[i] < 1e-15:
            alpha[i] = cap
        g += -2.0 * step * (dist[:, i] - dist[:, j])
    # rounding drift in the sum is far below the 1e-8 contract
    alpha /= alpha.sum()
    return SvcModel(data, q, offsets, alpha, nu, sweeps=math.ceil(it / m))


@dataclass
class SvcUncertaintySet:
    model: SvcModel
    theta: float
    nonneg: bool = False
    lo: np.ndarray | None = None
    hi: np.ndarray | None = None

    def scores(self, c) -> np.ndarray:
        """``sum_{i in SV} alpha_i ||Q (c - c_i)||_1`` for each row of ``c``."""
        c = np.atleast_2d(np.asarray(c, dtype=np.float64))
        sv = self.model.sv
        zs = self.model.data[sv] @ self.model.q.T
        return pairwise_l1(c @ self.model.q.T, zs) @ self.model.alpha[sv]

    def contains(self, c, slack: float = 0.0):
        c = np.asarray(c, dtype=np.float64)
        ok = self.scores(c) <= self.theta + slack
        if self.nonneg:
            ok &= np.all(np.atleast_2d(c) >= -slack, axis=1)
        if self.lo is not None:
            c2 = np.atleast_2d(c)
            ok &= np.all((c2 >= self.lo - slack) & (c2 <= self.hi + slack), axis=1)
        return ok if c.ndim == 2 else bool(ok[0])

    def worst_case(self, x) -> tuple[np.ndarray, float]:
        return adversarial_svc(x, self, self.lo, self.hi)

    def seed(self) -> np.ndarray:
        """Training scenario with the smallest score."""
        return self.model.data[int(np.argmin(self.scores(self.model.data)))]

    def with_box(self, lo, hi) -> "SvcUncertaintySet":
        return replace(self, lo=np.asarray(lo, dtype=np.float64), hi=np.asarray(hi, dtype=np.float64))


def build_set(model: SvcModel) -> SvcUncertaintySet:
    bsv = model.bsv
    if bsv.size == 0:
        raise EmptyBoundary("no boundary support vectors; nu too extreme")
    sv = model.sv
    z = model.data @ model.q.T
    scores = pairwise_l1(z[bsv], z[sv]) @ model.alpha[sv]
    return SvcUncertaintySet(model, float(scores.min()))


def svc_nonneg_variant(uset: SvcUncertaintySet) -> SvcUncertaintySet:
    return replace(uset, nonneg=True)


def _separable_max(x, uset: SvcUncertaintySet) -> np.ndarray:
    """Maximizer over the set alone, ignoring box and sign restrictions.

    In whitened coordinates ``y = Q c`` the constraint is a sum of convex
    piecewise-linear functions of single coordinates, so the optimum is a
    fractional knapsack: start every coordinate at its weighted median and buy
    the pieces with the best gain-to-slope ratio until ``theta`` is spent.
    """
    model = uset.model
    sv = model.sv
    alpha = model.alpha[sv]
    zs = model.data[sv] @ model.q.T
    w = np.linalg.solve(model.q.T, x)
    y = np.empty(zs.shape[1])
    spent = 0.0
    pieces = []
    for j in range(zs.shape[1]):
        order = np.argsort(zs[:, j], kind="stable")
        pts, wts = zs[order, j], alpha[order]
        cum = np.cumsum(wts)
        total = cum[-1]
        k = int(np.searchsorted(cum, 0.5 * total - 1e-15))
        y[j] = pts[k]
        spent += float(wts @ np.abs(pts - pts[k]))
        if w[j] == 0.0:
            continue
        if w[j] > 0:
            # slope just right of pts[i] is cum[i] - (total - cum[i])
            idx = range(k, len(pts))
            for i in idx:
                slope = 2.0 * cum[i] - total
                length = pts[i + 1] - pts[i] if i + 1 < len(pts) else math.inf
                pieces.append((j, 1.0, slope, length))
        else:
            for i in range(k, -1, -1):
                slope = total - 2.0 * (cum[i - 1] if i > 0 else 0.0)
                length = pts[i] - pts[i - 1] if i > 0 else math.inf
                pieces.append((j, -1.0, slope, length))
    budget = uset.theta - spent
    if budget < -1e-9 * max(1.0, abs(uset.theta)):
        raise LpFailure("svc set is empty")
    budget = max(budget, 0.0)

    def ratio(p):
        return math.inf if p[2] <= 0 else abs(w[p[0]]) / p[2]

    pieces.sort(key=lambda p: -ratio(p))
    for j, direction, slope, length in pieces:
        if length <= 0:
            continue
        if slope <= 0:
            y[j] += direction * length
            continue
        if budget <= 0:
            break
        step = min(length, budget / slope)
        y[j] += direction * step
        budget -= step * slope
    return np.linalg.solve(model.q, y)


def adversarial_svc(x, uset: SvcUncertaintySet, lo=None, hi=None) -> tuple[np.ndarray, float]:
    """Maximize ``x @ c`` over the set intersected with the box ``[lo, hi]``.

    The box-free maximizer is tried first; if it respects the box and sign
    restrictions it is optimal. Otherwise the LP with variables ``c`` and one
    block ``v_i >= |Q (c - c_i)|`` per support vector is solved.
    """
    x = np.asarray(x, dtype=np.float64)
    model = uset.model
    c = _separable_max(x, uset)
    inside = True
    if lo is not None:
        inside &= bool(np.all(c >= np.asarray(lo) - 1e-9))
    if hi is not None:
        inside &= bool(np.all(c <= np.asarray(hi) + 1e-9))
    if uset.nonneg:
        inside &= bool(np.all(c >= -1e-9))
    if inside:
        if lo is not None:
            c = np.maximum(c, lo)
        if hi is not None:
            c = np.minimum(c, hi)
        return c, float(x @ c)
    return _adversarial_lp(x, uset, lo, hi)


def _adversarial_lp(x, uset, lo, hi) -> tuple[np.ndarray, float]:
    model = uset.model
    n = x.shape[0]
    sv = model.sv
    s = sv.size
    q = model.q
    zs = model.data[sv] @ q.T
    nv = s * n
    a_c = np.vstack([np.tile(q, (s, 1)), np.tile(-q, (s, 1))])
    a_v = np.vstack([-np.eye(nv), -np.eye(nv)])
    budget = np.concatenate([np.zeros(n), np.repeat(model.alpha[sv], n)])
    a_ub = np.vstack([np.hstack([a_c, a_v]), budget[None, :]])
    b_ub = np.concatenate([zs.ravel(), -zs.ravel(), [uset.theta]])
    lo = np.full(n, -np.inf) if lo is None else np.asarray(lo, dtype=np.float64)
    hi = np.full(n, np.inf) if hi is None else np.asarray(hi, dtype=np.float64)
    if uset.nonneg:
        lo = np.maximum(lo, 0.0)
    lb = np.concatenate([lo, np.zeros(nv)])
    ub = np.concatenate([hi, np.full(nv, np.inf)])
    obj = np.concatenate([x, np.zeros(nv)])
    sol: LpSolution = solve_lp(LinearProgram(obj, a_ub, b_ub, lb=lb, ub=ub, sense="max"))
    if not sol.optimal:
        raise LpFailure(f"adversarial LP is {sol.status.name.lower()}", sol.status)
    c = sol.x[:n]
    return c, float(x @ c)
