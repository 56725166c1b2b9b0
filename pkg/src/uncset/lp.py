"""Dense two-phase primal simplex with bounded variables.

Every LP in the package (master problems, SVC adversarial problems, region
subproblems) goes through :func:`solve_lp`. Problems are small and dense, so
the solver works on a full tableau. Variables at their upper bound are
complemented (``y -> u - y``) so that every nonbasic variable sits at zero.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np

from .errors import DimensionMismatch, IterationLimit

FEAS_TOL = 1e-9
OPT_TOL = 1e-9
PIVOT_TOL = 1e-11
BLAND_AFTER = 1000
MAX_PIVOTS = 1_000_000


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass
class LinearProgram:
    """``min/max c @ x`` s.t. ``a_ub @ x <= b_ub``, ``a_eq @ x == b_eq``, ``lb <= x <= ub``.

    Bounds default to a free variable; use ``-inf``/``inf`` for open sides.
    """

    c: np.ndarray
    a_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    a_eq: np.ndarray | None = None
    b_eq: np.ndarray | None = None
    lb: np.ndarray | None = None
    ub: np.ndarray | None = None
    sense: str = "min"

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=np.float64).ravel()
        n = self.c.shape[0]
        self.a_ub, self.b_ub = _rows(self.a_ub, self.b_ub, n, "inequality")
        self.a_eq, self.b_eq = _rows(self.a_eq, self.b_eq, n, "equality")
        self.lb = np.full(n, -np.inf) if self.lb is None else np.asarray(self.lb, dtype=np.float64).ravel()
        self.ub = np.full(n, np.inf) if self.ub is None else np.asarray(self.ub, dtype=np.float64).ravel()
        if self.lb.shape != (n,) or self.ub.shape != (n,):
            raise DimensionMismatch("bounds must have one entry per variable")
        if self.sense not in ("min", "max"):
            raise ValueError(f"sense must be 'min' or 'max', got {self.sense!r}")
        for name in ("c", "a_ub", "b_ub", "a_eq", "b_eq"):
            if np.isnan(getattr(self, name)).any():
                raise ValueError(f"{name} contains NaN")
        if np.isnan(self.lb).any() or np.isnan(self.ub).any():
            raise ValueError("bounds contain NaN")

    @property
    def n(self) -> int:
        return self.c.shape[0]

    def dump(self) -> str:
        """Human-readable listing, one row per line (debugging aid)."""
        lines = [f"{self.sense} " + " ".join(f"{v:+.6g}" for v in self.c)]
        for a, b in zip(self.a_ub, self.b_ub):
            lines.append(" ".join(f"{v:+.6g}" for v in a) + f" <= {b:.6g}")
        for a, b in zip(self.a_eq, self.b_eq):
            lines.append(" ".join(f"{v:+.6g}" for v in a) + f" == {b:.6g}")
        for j, (lo, hi) in enumerate(zip(self.lb, self.ub)):
            lines.append(f"{lo:.6g} <= x{j} <= {hi:.6g}")
        return "\n".join(lines)


def _rows(a, b, n, what):
    if a is None or np.size(a) == 0:
        return np.zeros((0, n)), np.zeros(0)
    a = np.atleast_2d(np.asarray(a, dtype=np.float64))
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape[1] != n or a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"{what} rows have shape {a.shape} with {b.shape[0]} right-hand sides")
    return a, b


@dataclass
class LpSolution:
    """Solver outcome.

    ``duals_ub``/``duals_eq`` are row multipliers of the minimisation form
    (objective negated for ``max``): with ``r = c_min - a_ub.T @ duals_ub -
    a_eq.T @ duals_eq`` the bound ``b @ duals + sum_j min(r_j lb_j, r_j ub_j)``
    certifies the optimum.
    """

    status: LpStatus
    x: np.ndarray | None = None
    objective: float = float("nan")
    iterations: int = 0
    duals_ub: np.ndarray | None = field(default=None, repr=False)
    duals_eq: np.ndarray | None = field(default=None, repr=False)

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


class _Tableau:
    """Tableau state; the last row holds reduced costs and ``-objective``."""

    def __init__(self, t, basis, upper, allowed):
        self.t = t
        self.basis = basis
        self.upper = upper
        self.flipped = np.zeros(t.shape[1] - 1, dtype=bool)
        self.allowed = allowed
        self.pivots = 0
        self.degenerate = 0

    @property
    def m(self):
        return self.t.shape[0] - 1

    def flip(self, j):
        t = self.t
        t[:, -1] -= t[:, j] * self.upper[j]
        t[:, j] *= -1.0
        self.flipped[j] = ~self.flipped[j]

    def pivot(self, r, j):
        t = self.t
        prow = t[r] / t[r, j]
        t -= np.outer(t[:, j], prow)
        t[r] = prow
        self.basis[r] = j

    def run(self):
        """Primal simplex on the current objective row; returns False if unbounded."""
        t = self.t
        m = self.m
        bland = self.degenerate > BLAND_AFTER
        while True:
            d = t[-1, :-1]
            cand = np.flatnonzero(self.allowed & (d < -OPT_TOL))
            if cand.size == 0:
                return True
            j = cand[0] if bland else cand[np.argmin(d[cand])]
            col = t[:m, j]
            beta = np.maximum(t[:m, -1], 0.0)
            ratios = np.full(m, np.inf)
            pos = col > PIVOT_TOL
            ratios[pos] = beta[pos] / col[pos]
            ub_basic = self.upper[self.basis]
            neg = (col < -PIVOT_TOL) & np.isfinite(ub_basic)
            ratios[neg] = np.maximum(ub_basic[neg] - t[:m, -1][neg], 0.0) / -col[neg]
            theta = ratios.min() if m else np.inf
            if self.upper[j] <= theta:
                if not np.isfinite(self.upper[j]):
                    return False
                self.flip(j)
                step = self.upper[j]
                r = None
            else:
                ties = np.flatnonzero(ratios <= theta + 1e-12)
                if bland:
                    r = ties[np.argmin(self.basis[ties])]
                else:
                    r = ties[np.argmax(np.abs(col[ties]))]
                step = theta
                if col[r] < 0:
                    jb = self.basis[r]
                    self.flip(jb)
                    t[r] *= -1.0
                self.pivot(r, j)
            self.pivots += 1
            if step <= FEAS_TOL:
                self.degenerate += 1
                if self.degenerate > BLAND_AFTER:
                    bland = True
            if self.pivots > MAX_PIVOTS:
                raise IterationLimit(f"simplex exceeded {MAX_PIVOTS} pivots")


def solve_lp(lp: LinearProgram, start=None) -> LpSolution:
    """Solve ``lp`` with the two-phase bounded-variable simplex.

    ``start`` is an optional point believed feasible. The problem is then
    re-centred on it with finite bounds turned into rows, so a feasible hint
    needs no phase 1 for its inequality rows. An infeasible hint is harmless.
    """
    if start is not None:
        return _solve_from(lp, np.asarray(start, dtype=np.float64))
    n = lp.n
    sign = -1.0 if lp.sense == "max" else 1.0
    c = sign * lp.c

    # x = offset + sum(col_sign * y) with y >= 0, y <= yub
    var_of, col_sign, yub = [], [], []
    offset = np.zeros(n)
    for j in range(n):
        lo, hi = lp.lb[j], lp.ub[j]
        if lo > hi:
            return LpSolution(LpStatus.INFEASIBLE)
        if np.isfinite(lo):
            offset[j] = lo
            var_of.append(j)
            col_sign.append(1.0)
            yub.append(hi - lo)
        elif np.isfinite(hi):
            offset[j] = hi
            var_of.append(j)
            col_sign.append(-1.0)
            yub.append(np.inf)
        else:
            var_of += [j, j]
            col_sign += [1.0, -1.0]
            yub += [np.inf, np.inf]
    var_of = np.array(var_of, dtype=int)
    col_sign = np.array(col_sign)
    ny = var_of.size

    a_ub = lp.a_ub[:, var_of] * col_sign
    a_eq = lp.a_eq[:, var_of] * col_sign
    r_ub = lp.b_ub - lp.a_ub @ offset
    r_eq = lp.b_eq - lp.a_eq @ offset
    cy = c[var_of] * col_sign
    const = float(c @ offset)

    m1, m2 = a_ub.shape[0], a_eq.shape[0]
    m = m1 + m2
    neg_ub = r_ub < 0
    row_sign = np.concatenate([np.where(neg_ub, -1.0, 1.0), np.where(r_eq < 0, -1.0, 1.0)])
    needs_art = np.concatenate([neg_ub, np.ones(m2, dtype=bool)])
    art_rows = np.flatnonzero(needs_art)
    na = art_rows.size
    ncol = ny + m1 + na

    t = np.zeros((m + 1, ncol + 1))
    t[:m1, :ny] = a_ub
    t[:m1, ny:ny + m1] = np.eye(m1)
    t[m1:m, :ny] = a_eq
    t[:m, -1] = np.concatenate([r_ub, r_eq])
    t[:m] *= row_sign[:, None]
    t[art_rows, ny + m1 + np.arange(na)] = 1.0

    basis = np.empty(m, dtype=int)
    basis[:m1] = ny + np.arange(m1)
    basis[art_rows] = ny + m1 + np.arange(na)
    upper = np.concatenate([np.array(yub), np.full(m1 + na, np.inf)])
    is_art = np.zeros(ncol, dtype=bool)
    is_art[ny + m1:] = True

    tab = _Tableau(t, basis, upper, ~is_art)

    if na:
        # phase 1: minimise the sum of artificials
        t[-1, :-1] = 0.0
        t[-1] -= t[art_rows].sum(axis=0)
        t[-1, ny + m1:ncol] = 0.0
        tab.run()
        infeas = -t[-1, -1]
        scale = max(1.0, float(np.abs(t[:m, -1]).max(initial=0.0)))
        if infeas > FEAS_TOL * scale:
            return LpSolution(LpStatus.INFEASIBLE, iterations=tab.pivots)
        _drive_out_artificials(tab, is_art)

    # phase 2 objective row from the effective (possibly complemented) costs
    m_now = tab.m
    c_full = np.zeros(ncol)
    c_full[:ny] = cy
    c_eff = np.where(tab.flipped, -c_full, c_full)
    flip_const = float((c_full * np.where(tab.flipped, upper, 0.0))[tab.flipped].sum())
    cb = c_eff[tab.basis]
    t = tab.t
    t[-1, :-1] = c_eff - cb @ t[:m_now, :-1]
    t[-1, -1] = -(const + flip_const + cb @ t[:m_now, -1])
    if not tab.run():
        return LpSolution(LpStatus.UNBOUNDED, iterations=tab.pivots)

    t = tab.t
    y = np.zeros(ncol)
    y[tab.basis] = t[:tab.m, -1]
    y = np.where(tab.flipped, upper - y, y)
    x = offset.copy()
    np.add.at(x, var_of, col_sign * y[:ny])
    # snap to bounds to absorb round-off
    x = np.minimum(np.maximum(x, lp.lb), lp.ub)
    obj = float(lp.c @ x)

    # redundant rows dropped in phase 1 keep a zero reduced cost, hence a zero dual
    d = t[-1, :-1]
    duals = np.zeros(m)
    duals[:m1] = -d[ny:ny + m1]
    for k, i in enumerate(art_rows):
        if i >= m1:
            duals[i] = -row_sign[i] * d[ny + m1 + k]
    return LpSolution(LpStatus.OPTIMAL, x, obj, tab.pivots, duals[:m1], duals[m1:])


def _solve_from(lp: LinearProgram, x0: np.ndarray) -> LpSolution:
    n = lp.n
    eye = np.eye(n)
    has_lb, has_ub = np.isfinite(lp.lb), np.isfinite(lp.ub)
    a_ub = np.vstack([lp.a_ub, eye[has_ub], -eye[has_lb]])
    b_ub = np.concatenate([lp.b_ub - lp.a_ub @ x0, (lp.ub - x0)[has_ub], (x0 - lp.lb)[has_lb]])
    shifted = LinearProgram(lp.c, a_ub, b_ub, lp.a_eq, lp.b_eq - lp.a_eq @ x0, sense=lp.sense)
    sol = solve_lp(shifted)
    if not sol.optimal:
        return sol
    x = np.minimum(np.maximum(x0 + sol.x, lp.lb), lp.ub)
    m1 = lp.a_ub.shape[0]
    return LpSolution(LpStatus.OPTIMAL, x, float(lp.c @ x), sol.iterations,
                      sol.duals_ub[:m1], sol.duals_eq)


def _drive_out_artificials(tab: _Tableau, is_art: np.ndarray):
    """Pivot basic artificials out at zero level; drop rows that are redundant."""
    m = tab.m
    keep = np.ones(m, dtype=bool)
    for r in range(m):
        if not is_art[tab.basis[r]]:
            continue
        row = tab.t[r, :-1]
        cand = np.flatnonzero(~is_art & (np.abs(row) > 1e-9))
        if cand.size:
            tab.pivot(r, cand[np.argmax(np.abs(row[cand]))])
        else:
            keep[r] = False
    if not keep.all():
        rows = np.concatenate([np.flatnonzero(keep), [m]])
        tab.t = tab.t[rows]
        tab.basis = tab.basis[keep]
