"""Worst-case scenarios over network level sets ``{c : ||f(c) - center|| <= R}``.

The set is a union of convex pieces, one per activation pattern. Each piece is
a polyhedron intersected with a norm ball in output space; maximizing a linear
function over one piece is an LP (l1 norm) or an LP refined by gradient cuts
(l2 norm). :func:`adversarial_decomposed` maximizes over the pieces that
contain training data, :func:`adversarial_exact` over all of them.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .errors import CutLimit, LpFailure, TooLarge
from .lp import LinearProgram, solve_lp
from .pwa_network import (ActivationPattern, AffineRegion, PwaNetwork, membership,
                          pattern_of, patterns_of, region_of)
from .svdd_train import TrainedModel

CUT_TOL = 1e-7
MAX_CUTS = 500
ENUMERATION_LIMIT = 10**6
KKT_TOL = 1e-9


@dataclass
class NnUncertaintySet:
    model: TrainedModel
    lo: np.ndarray
    hi: np.ndarray
    patterns: list | None = None
    anchor: np.ndarray | None = None
    starts: dict = field(default_factory=dict, repr=False)
    _regions: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.lo = np.asarray(self.lo, dtype=np.float64)
        self.hi = np.asarray(self.hi, dtype=np.float64)
        if not (np.all(np.isfinite(self.lo)) and np.all(np.isfinite(self.hi))):
            raise ValueError("scenario box must be finite")
        if np.any(self.lo > self.hi):
            raise ValueError("scenario box has lo > hi")
        if self.model.radius < 0:
            raise ValueError("radius must be nonnegative")

    @classmethod
    def from_data(cls, model: TrainedModel, data, inflate: float = 0.5) -> "NnUncertaintySet":
        """Set over the inflated training box, decomposed along training patterns."""
        data = np.atleast_2d(np.asarray(data, dtype=np.float64))
        lo, hi = scenario_box(data, inflate)
        radii = model.radii(data)
        starts = {}
        for i in np.argsort(radii, kind="stable"):
            starts.setdefault(pattern_of(model.network, data[i]), data[i])
        patterns = collect_patterns(model.network, data)
        return cls(model, lo, hi, patterns, data[int(np.argmin(radii))], starts)

    def worst_case(self, x, exact: bool = False) -> tuple[np.ndarray, float]:
        if exact or self.patterns is None:
            res = adversarial_exact(x, self)
        else:
            res = adversarial_decomposed(x, self, self.patterns)
        if not res.optimal:
            raise LpFailure("no region of the set meets the scenario box")
        return res.point, res.value

    def seed(self) -> np.ndarray:
        """Training scenario with the smallest radius."""
        if self.anchor is None:
            raise ValueError("set was built without training data")
        return self.anchor

    @property
    def network(self) -> PwaNetwork:
        return self.model.network

    def region(self, u: ActivationPattern) -> AffineRegion:
        reg = self._regions.get(u)
        if reg is None:
            reg = self._regions[u] = region_of(self.network, u)
        return reg

    def contains(self, c, slack: float = 0.0):
        c = np.asarray(c, dtype=np.float64)
        inside = membership(self.network, self.model.center, self.model.radius + slack,
                            self.model.norm, c)
        in_box = np.all((c >= self.lo - slack) & (c <= self.hi + slack), axis=-1)
        return inside & in_box


def scenario_box(data, inflate: float = 0.5) -> tuple[np.ndarray, np.ndarray]:
    """Training range per coordinate, widened so its width grows by ``inflate``."""
    data = np.atleast_2d(np.asarray(data, dtype=np.float64))
    lo, hi = data.min(axis=0), data.max(axis=0)
    pad = 0.5 * inflate * (hi - lo)
    pad = np.where(pad > 0, pad, np.maximum(1.0, 0.5 * inflate * np.abs(lo)))
    return lo - pad, hi + pad


@dataclass
class AdversarialResult:
    status: str
    point: np.ndarray | None = None
    value: float = -math.inf
    pattern: ActivationPattern | None = None
    subproblems: int = 0
    failed: list = field(default_factory=list)

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


def _box_rows(lo, hi):
    n = lo.shape[0]
    return np.vstack([np.eye(n), -np.eye(n)]), np.concatenate([hi, -lo])


def _ellipsoid_max(x, m_out, resid, radius, e=None, f=None):
    """Maximize ``x @ c`` on ``{c : e @ c == f, ||m_out @ c + resid|| <= radius}``.

    Returns ``None`` when the restricted ball is degenerate or empty.
    """
    n = x.shape[0]
    if e is not None and e.shape[0]:
        u, s, vt = np.linalg.svd(e)
        rank = int((s > 1e-10 * max(1.0, s[0])).sum())
        c0 = np.linalg.lstsq(e, f, rcond=None)[0]
        if np.abs(e @ c0 - f).max() > 1e-9 * (1.0 + np.abs(f).max()):
            return None
        z = vt[rank:].T
    else:
        c0 = np.zeros(n)
        z = np.eye(n)
    e0 = m_out @ c0 + resid
    if z.shape[1] == 0:
        if np.linalg.norm(e0) > radius + 1e-12:
            return None
        return c0
    b = m_out @ z
    h = b.T @ b
    try:
        chol = np.linalg.cholesky(h)
    except np.linalg.LinAlgError:
        return None
    if np.linalg.eigvalsh(h)[0] <= 1e-10 * max(1.0, np.abs(h).max()):
        return None
    solve = lambda rhs: np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    yc = -solve(b.T @ e0)
    res2 = float(np.sum((b @ yc + e0) ** 2))
    rho2 = radius * radius - res2
    if rho2 < 0:
        return None
    g = z.T @ x
    hg = solve(g)
    gq = float(g @ hg)
    y = yc if gq <= 1e-300 else yc + math.sqrt(rho2) * hg / math.sqrt(gq)
    return c0 + z @ y


def _certified(x, c, g_rows, h_rows, active, m_out, resid, radius):
    """Check primal feasibility and KKT multipliers of a candidate maximizer.

    Returns ``(ok, violated_row, negative_row)`` where the row indices guide
    the active-set update when ``ok`` is false.
    """
    scale = 1.0 + np.abs(h_rows)
    slack = h_rows - g_rows @ c
    worst = int(np.argmin(slack / scale)) if slack.size else -1
    if slack.size and slack[worst] < -KKT_TOL * scale[worst]:
        return False, worst, None
    out = m_out @ c + resid
    nrm = float(np.linalg.norm(out))
    if nrm > radius + 1e-9 * max(1.0, radius):
        return False, None, None
    cols = [g_rows[active].T]
    ball_active = nrm >= radius - 1e-7 * max(1.0, radius) and nrm > 0
    if ball_active:
        cols.append((m_out.T @ out / nrm)[:, None])
    mat = np.hstack(cols) if cols else np.zeros((x.shape[0], 0))
    if mat.shape[1] == 0:
        return bool(np.abs(x).max() <= KKT_TOL), None, None
    mult, *_ = np.linalg.lstsq(mat, x, rcond=None)
    res = np.abs(mat @ mult - x).max()
    xs = max(1.0, float(np.abs(x).max()))
    if res > 1e-8 * xs:
        return False, None, None
    lam = mult[:len(active)]
    if lam.size and lam.min() < -KKT_TOL * xs:
        return False, None, active[int(np.argmin(lam))]
    if ball_active and mult[-1] < -KKT_TOL * xs:
        return False, None, None
    return True, None, None


def _active_set_polish(x, g_rows, h_rows, start, m_out, resid, radius, max_steps=None):
    """Small active-set search seeded with ``start``; returns a certified point or None."""
    active = sorted(set(int(i) for i in start))
    max_steps = max_steps or 2 * x.shape[0] + 10
    seen = set()
    for _ in range(max_steps):
        key = tuple(active)
        if key in seen:
            return None
        seen.add(key)
        idx = np.array(active, dtype=int)
        c = _ellipsoid_max(x, m_out, resid, radius, g_rows[idx], h_rows[idx])
        if c is None:
            return None
        ok, add, drop = _certified(x, c, g_rows, h_rows, idx, m_out, resid, radius)
        if ok:
            return c
        if add is not None:
            active = sorted(set(active) | {add})
        elif drop is not None:
            active.remove(int(drop))
        else:
            return None
    return None


def maximize_over_region(x, region: AffineRegion, center, radius: float, norm: int,
                         lo, hi, start=None, floor: float = -math.inf
                         ) -> tuple[np.ndarray, float] | None:
    """Maximize ``x @ c`` over one region intersected with the ball and the box.

    Returns ``None`` if that set is empty. Raises :class:`CutLimit` when the
    l2 cutting-plane loop does not converge. ``start``, a point of the region,
    only speeds up the LPs. With ``floor`` set, ``None`` is also returned as
    soon as an LP bound shows the value stays below it.
    """
    x = np.asarray(x, dtype=np.float64)
    lo = np.asarray(lo, dtype=np.float64)
    hi = np.asarray(hi, dtype=np.float64)
    n = x.shape[0]
    m_out = region.out_weight
    resid = region.out_offset - np.asarray(center, dtype=np.float64)
    if norm == 1:
        return _maximize_l1(x, region, m_out, resid, radius, lo, hi, start)
    if norm != 2:
        raise ValueError(f"unsupported norm {norm!r}")
    if radius == 0.0:
        sol = solve_lp(LinearProgram(x, region.a_ub, region.b_ub, m_out, -resid, lo, hi, "max"),
                       start)
        return (sol.x, sol.objective) if sol.optimal else None

    box_g, box_h = _box_rows(lo, hi)
    g_rows = np.vstack([region.a_ub, box_g])
    h_rows = np.concatenate([region.b_ub, box_h])

    c = _active_set_polish(x, g_rows, h_rows, [], m_out, resid, radius)
    if c is not None:
        return c, float(x @ c)

    cuts_a, cuts_b = [], []
    for _ in range(MAX_CUTS + 1):
        a_ub = np.vstack([region.a_ub] + cuts_a) if cuts_a else region.a_ub
        b_ub = np.concatenate([region.b_ub, cuts_b]) if cuts_b else region.b_ub
        sol = solve_lp(LinearProgram(x, a_ub, b_ub, lb=lo, ub=hi, sense="max"), start)
        if not sol.optimal or sol.objective < floor:
            return None
        c = sol.x
        out = m_out @ c + resid
        g = float(np.linalg.norm(out))
        if g - radius <= CUT_TOL:
            return c, float(x @ c)
        slack = h_rows - g_rows @ c
        active = np.flatnonzero(slack <= 1e-9 * (1.0 + np.abs(h_rows)))
        polished = _active_set_polish(x, g_rows, h_rows, active, m_out, resid, radius)
        if polished is not None:
            return polished, float(x @ polished)
        if g <= 1e-12:
            # gradient undefined at the center: nudge along the objective
            out = m_out @ (c + 1e-9 * x) + resid
            g = float(np.linalg.norm(out))
        u = out / g
        cuts_a.append((u @ m_out)[None, :])
        cuts_b.append(radius - u @ resid)
    raise CutLimit(f"l2 ball not resolved after {MAX_CUTS} cuts")


def _maximize_l1(x, region, m_out, resid, radius, lo, hi, start=None):
    n = x.shape[0]
    d = m_out.shape[0]
    eye = np.eye(d)
    rows = [
        np.hstack([region.a_ub, np.zeros((region.a_ub.shape[0], d))]),
        np.hstack([m_out, -eye]),
        np.hstack([-m_out, -eye]),
        np.concatenate([np.zeros(n), np.ones(d)])[None, :],
    ]
    rhs = np.concatenate([region.b_ub, -resid, resid, [radius]])
    obj = np.concatenate([x, np.zeros(d)])
    lb = np.concatenate([lo, np.zeros(d)])
    ub = np.concatenate([hi, np.full(d, np.inf)])
    if start is not None:
        start = np.concatenate([start, np.abs(m_out @ start + resid)])
    sol = solve_lp(LinearProgram(obj, np.vstack(rows), rhs, lb=lb, ub=ub, sense="max"), start)
    if not sol.optimal:
        return None
    c = sol.x[:n]
    return c, float(x @ c)


def region_upper_bound(x, region: AffineRegion, center, radius, norm, lo, hi) -> float:
    """Cheap upper bound on a region's value: ball-only support function vs box.

    Returns ``-inf`` when the ball alone is already empty in input space.
    """
    box_bound = float(np.maximum(x * lo, x * hi).sum())
    if norm != 2:
        return box_bound
    m_out = region.out_weight
    resid = region.out_offset - np.asarray(center, dtype=np.float64)
    h = m_out.T @ m_out
    try:
        chol = np.linalg.cholesky(h)
    except np.linalg.LinAlgError:
        return box_bound
    if np.linalg.eigvalsh(h)[0] <= 1e-10 * max(1.0, np.abs(h).max()):
        return box_bound
    solve = lambda rhs: np.linalg.solve(chol.T, np.linalg.solve(chol, rhs))
    cc = -solve(m_out.T @ resid)
    res2 = float(np.sum((m_out @ cc + resid) ** 2))
    rho2 = radius * radius - res2
    if rho2 < -1e-12 * max(1.0, radius * radius):
        return -math.inf
    ell = float(x @ cc) + math.sqrt(max(rho2, 0.0) * max(float(x @ solve(x)), 0.0))
    return min(ell, box_bound)


def collect_patterns(net: PwaNetwork, data) -> list[ActivationPattern]:
    """Distinct activation patterns of the training scenarios, first-seen order."""
    seen = {}
    for u in patterns_of(net, data):
        seen.setdefault(u, None)
    return list(seen)


def _better(value, pattern, best_value, best_pattern, tol):
    if best_pattern is None or value > best_value + tol:
        return True
    return abs(value - best_value) <= tol and pattern < best_pattern


def adversarial_decomposed(x, uset: NnUncertaintySet,
                           patterns: Iterable[ActivationPattern]) -> AdversarialResult:
    """Best worst case over the regions of ``patterns``.

    Regions are visited in decreasing order of :func:`region_upper_bound` and
    skipped once the bound cannot beat the incumbent, so the result does not
    depend on the order of ``patterns``.
    """
    x = np.asarray(x, dtype=np.float64)
    model = uset.model
    cands = []
    for u in set(patterns):
        reg = uset.region(u)
        bound = region_upper_bound(x, reg, model.center, model.radius, model.norm, uset.lo, uset.hi)
        if bound > -math.inf:
            cands.append((-bound, u, reg))
    cands.sort(key=lambda t: (t[0], t[1]))
    result = AdversarialResult("empty")
    scale = 1.0 + float(np.abs(x).sum() * max(np.abs(uset.lo).max(), np.abs(uset.hi).max()))
    tol = 1e-12 * scale
    for neg_bound, u, reg in cands:
        floor = -math.inf if result.pattern is None else result.value - 1e-9 * scale
        if -neg_bound < floor:
            break
        result.subproblems += 1
        try:
            sol = maximize_over_region(x, reg, model.center, model.radius, model.norm,
                                       uset.lo, uset.hi, uset.starts.get(u), floor)
        except CutLimit:
            result.failed.append(u)
            continue
        if sol is None:
            continue
        c, val = sol
        if _better(val, u, result.value, result.pattern, tol):
            result.status, result.point, result.value, result.pattern = "optimal", c, val, u
    return result


def enumeration_estimate(net: PwaNetwork) -> int:
    from .pwa_network import region_count_bound

    log_total = sum(layer.d_out * math.log2(layer.activation.k) for layer in net.layers)
    naive = 2**63 if log_total >= 63 else math.prod(layer.activation.k ** layer.d_out
                                                     for layer in net.layers)
    return min(naive, region_count_bound(net))


def adversarial_exact(x, uset: NnUncertaintySet,
                      limit: int = ENUMERATION_LIMIT) -> AdversarialResult:
    """Global maximum by depth-first search over activation patterns.

    Partial patterns are pruned when their polyhedron (within the box) is
    empty or its LP bound cannot beat the incumbent.
    """
    x = np.asarray(x, dtype=np.float64)
    net = uset.network
    if enumeration_estimate(net) > limit:
        raise TooLarge(f"pattern enumeration estimate exceeds {limit}")
    model = uset.model
    lo, hi = uset.lo, uset.hi
    n = net.input_dim
    result = AdversarialResult("empty")
    scale = 1.0 + float(np.abs(x).sum() * max(np.abs(lo).max(), np.abs(hi).max()))

    def lp_bound(rows, rhs):
        a = np.vstack(rows) if rows else np.zeros((0, n))
        b = np.concatenate(rhs) if rhs else np.zeros(0)
        sol = solve_lp(LinearProgram(x, a, b, lb=lo, ub=hi, sense="max"))
        result.subproblems += 1
        return sol.objective if sol.optimal else None

    def leaf(pieces):
        u = ActivationPattern(tuple(tuple(p) for p in pieces))
        reg = uset.region(u)
        result.subproblems += 1
        try:
            sol = maximize_over_region(x, reg, model.center, model.radius, model.norm, lo, hi)
        except CutLimit:
            result.failed.append(u)
            return
        if sol is not None and _better(sol[1], u, result.value, result.pattern, 1e-12 * scale):
            result.status, result.point, result.value, result.pattern = "optimal", sol[0], sol[1], u

    def visit(li, w_t, g_t, pieces, rows, rhs):
        if li == net.depth:
            leaf(pieces)
            return
        layer = net.layers[li]
        w_pre = layer.weight @ w_t
        g_pre = layer.weight @ g_t + (layer.bias if layer.bias is not None else 0.0)
        act = layer.activation
        slopes = np.asarray(act.slopes)
        inter = np.asarray(act.intercepts)

        def neuron(j, chosen, rows, rhs):
            if j == layer.d_out:
                idx = np.array(chosen, dtype=int)
                visit(li + 1, slopes[idx][:, None] * w_pre, slopes[idx] * g_pre + inter[idx],
                      pieces + [tuple(chosen)], rows, rhs)
                return
            for i in range(act.k):
                new_rows, new_rhs = list(rows), list(rhs)
                lower, upper = act.lower(i), act.upper(i)
                if math.isfinite(lower):
                    new_rows.append(-w_pre[j][None, :])
                    new_rhs.append(np.array([g_pre[j] - lower]))
                if math.isfinite(upper):
                    new_rows.append(w_pre[j][None, :])
                    new_rhs.append(np.array([upper - g_pre[j]]))
                if act.k > 1:
                    bound = lp_bound(new_rows, new_rhs)
                    if bound is None:
                        continue
                    if result.pattern is not None and bound <= result.value + 1e-12 * scale:
                        continue
                neuron(j + 1, chosen + [i], new_rows, new_rhs)

        neuron(0, [], rows, rhs)

    visit(0, np.eye(n), np.zeros(n), [], [], [])
    return result
