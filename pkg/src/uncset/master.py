"""Robust linear problems and the scenario-generation solver.

Two problem kinds are supported. For an uncertain objective the master is
``min d'x + z`` with ``z >= c'x`` for every collected scenario ``c``; for an
uncertain constraint it is ``max d'x`` with ``c'x <= rhs``. Each round the
oracle returns the worst scenario for the current ``x`` and the loop stops
once that scenario is no longer violated by more than ``tol``.
"""

from __future__ import annotations

import enum
import math
import time
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .errors import FormatError, MasterInfeasible, Unreachable
from .lp import LinearProgram, solve_lp
from .numlin import as_matrix, as_vector

Oracle = Callable[[np.ndarray], tuple[np.ndarray, float]]


class ProblemKind(enum.Enum):
    OBJECTIVE = "obj"
    CONSTRAINT = "feas"


@dataclass
class RobustProblem:
    """``x`` ranges over ``{a_ub x <= b_ub, a_eq x == b_eq, lb <= x <= ub}``.

    ``d`` is minimized (objective kind, added to the worst case) or maximized
    (constraint kind). ``rhs`` is the right-hand side of the uncertain row.
    """

    kind: ProblemKind
    d: np.ndarray
    a_ub: np.ndarray
    b_ub: np.ndarray
    a_eq: np.ndarray
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    rhs: float = 0.0

    def __post_init__(self):
        n = self.n
        self.d = as_vector(self.d, n, name="d")
        self.a_ub = as_matrix(self.a_ub, (None, n), name="A_ub")
        self.b_ub = as_vector(self.b_ub, self.a_ub.shape[0], name="b_ub")
        self.a_eq = as_matrix(self.a_eq, (None, n), name="A_eq")
        self.b_eq = as_vector(self.b_eq, self.a_eq.shape[0], name="b_eq")
        self.lb = np.asarray(self.lb, dtype=np.float64)
        self.ub = np.asarray(self.ub, dtype=np.float64)
        probe = solve_lp(LinearProgram(np.zeros(n), self.a_ub, self.b_ub, self.a_eq, self.b_eq,
                                       self.lb, self.ub))
        if not probe.optimal:
            raise MasterInfeasible("the deterministic domain X is empty")

    @property
    def n(self) -> int:
        return np.asarray(self.d).shape[0]

    def master_lp(self, scenarios: np.ndarray) -> LinearProgram:
        k = scenarios.shape[0]
        n = self.n
        if self.kind is ProblemKind.OBJECTIVE:
            pad = lambda a: np.hstack([a, np.zeros((a.shape[0], 1))])
            a_ub = np.vstack([pad(self.a_ub), np.hstack([scenarios, -np.ones((k, 1))])])
            b_ub = np.concatenate([self.b_ub, np.zeros(k)])
            return LinearProgram(np.append(self.d, 1.0), a_ub, b_ub, pad(self.a_eq), self.b_eq,
                                 np.append(self.lb, -np.inf), np.append(self.ub, np.inf))
        a_ub = np.vstack([self.a_ub, scenarios])
        b_ub = np.concatenate([self.b_ub, np.full(k, self.rhs)])
        return LinearProgram(self.d, a_ub, b_ub, self.a_eq, self.b_eq, self.lb, self.ub, "max")


def build_obj_problem(n: int) -> RobustProblem:
    """``min max c'x`` subject to ``sum(x) == n/2`` and ``x`` in ``[-1, 1]^n``."""
    if n < 1:
        raise ValueError("N must be positive")
    return RobustProblem(ProblemKind.OBJECTIVE, np.zeros(n), np.zeros((0, n)), np.zeros(0),
                         np.ones((1, n)), np.array([n / 2.0]), -np.ones(n), np.ones(n))


def build_feas_problem(n: int, rhs: float | None = None) -> RobustProblem:
    """``max sum(x)`` subject to ``c'x <= 50 n`` for all ``c`` and ``x`` in ``[-1, 1]^n``."""
    if n < 1:
        raise ValueError("N must be positive")
    return RobustProblem(ProblemKind.CONSTRAINT, np.ones(n), np.zeros((0, n)), np.zeros(0),
                         np.zeros((0, n)), np.zeros(0), -np.ones(n), np.ones(n),
                         rhs=50.0 * n if rhs is None else float(rhs))


def build_shortest_path(n_nodes: int, arcs: Sequence[tuple[int, int]], source: int,
                        sink: int) -> RobustProblem:
    """Unit flow from ``source`` to ``sink``; arc costs are the uncertain objective.

    The flow relaxation is exact for a path only when every scenario cost is
    nonnegative.
    """
    arcs = [(int(u), int(v)) for u, v in arcs]
    for u, v in arcs:
        if not (0 <= u < n_nodes and 0 <= v < n_nodes):
            raise ValueError(f"arc ({u}, {v}) references a missing node")
    if not _reachable(n_nodes, arcs, source, sink):
        raise Unreachable(f"node {sink} cannot be reached from {source}")
    n = len(arcs)
    inc = np.zeros((n_nodes, n))
    for j, (u, v) in enumerate(arcs):
        inc[u, j] += 1.0
        inc[v, j] -= 1.0
    supply = np.zeros(n_nodes)
    supply[source], supply[sink] = 1.0, -1.0
    return RobustProblem(ProblemKind.OBJECTIVE, np.zeros(n), np.zeros((0, n)), np.zeros(0),
                         inc, supply, np.zeros(n), np.ones(n))


def _reachable(n_nodes, arcs, source, sink) -> bool:
    adj = [[] for _ in range(n_nodes)]
    for u, v in arcs:
        adj[u].append(v)
    seen = {source}
    todo = deque([source])
    while todo:
        u = todo.popleft()
        for v in adj[u]:
            if v not in seen:
                seen.add(v)
                todo.append(v)
    return sink in seen


def extract_path(x, arcs, source: int, sink: int) -> tuple[list[int], bool]:
    """Arc indices of the path carried by flow ``x``, following the largest outflow.

    Returns ``(arc indices, looped)``; ``looped`` is true when the flow revisits
    a node, in which case the cycle is cut out of the returned path.
    """
    x = np.asarray(x, dtype=np.float64)
    out = {}
    for j, (u, _) in enumerate(arcs):
        out.setdefault(u, []).append(j)
    path, nodes = [], [source]
    looped = False
    used = set()
    node = source
    while node != sink:
        cand = [j for j in out.get(node, []) if j not in used and x[j] > 1e-9]
        if not cand:
            break
        j = max(cand, key=lambda a: (x[a], -a))
        used.add(j)
        nxt = arcs[j][1]
        if nxt in nodes:
            looped = True
            cut = nodes.index(nxt)
            del nodes[cut + 1:]
            del path[cut:]
        else:
            nodes.append(nxt)
            path.append(j)
        node = nxt
    return path, looped


@dataclass
class MasterState:
    scenarios: list[np.ndarray] = field(default_factory=list)
    x: np.ndarray | None = None
    objective: float = math.nan
    iterations: int = 0
    violation: float = math.inf
    converged: bool = False
    log: list[dict] = field(default_factory=list)


def solve_robust(problem: RobustProblem, oracle: Oracle, initial, tol: float = 1e-6,
                 max_iter: int = 200, timing: bool = False) -> tuple[np.ndarray, MasterState]:
    """Scenario generation until the oracle finds no violated scenario.

    ``initial`` holds one or more starting scenarios. Hitting ``max_iter``
    returns the last incumbent with ``state.converged`` false. Oracle wall
    times go into the log only when ``timing`` is set, so logs of identical
    runs are identical.
    """
    init = np.atleast_2d(np.asarray(initial, dtype=np.float64))
    if init.shape[1] != problem.n:
        raise ValueError(f"scenario dimension {init.shape[1]} != {problem.n}")
    state = MasterState(scenarios=[row.copy() for row in init])
    while True:
        sol = solve_lp(problem.master_lp(np.vstack(state.scenarios)))
        if not sol.optimal:
            raise MasterInfeasible(f"master LP is {sol.status.name.lower()}")
        x = sol.x[:problem.n]
        state.x, state.objective = x, sol.objective
        state.iterations += 1
        t0 = time.perf_counter()
        c, value = oracle(x)
        elapsed = time.perf_counter() - t0
        if problem.kind is ProblemKind.OBJECTIVE:
            threshold = sol.x[-1]
        else:
            threshold = problem.rhs
        state.violation = value - threshold
        row = {"iteration": state.iterations, "objective": state.objective,
               "violation": state.violation}
        if timing:
            row["oracle_time"] = elapsed
        state.log.append(row)
        if state.violation <= tol:
            state.converged = True
            return x, state
        if state.iterations >= max_iter:
            return x, state
        state.scenarios.append(np.asarray(c, dtype=np.float64).copy())


@dataclass
class DiscreteUncertaintySet:
    """The finite set of observed scenarios; its oracle is a linear scan."""

    scenarios: np.ndarray

    def __post_init__(self):
        self.scenarios = as_matrix(self.scenarios, name="scenarios")
        if self.scenarios.shape[0] == 0:
            raise ValueError("discrete set needs at least one scenario")

    def worst_case(self, x) -> tuple[np.ndarray, float]:
        vals = self.scenarios @ np.asarray(x, dtype=np.float64)
        i = int(np.argmax(vals))
        return self.scenarios[i], float(vals[i])

    def contains(self, c, slack: float = 0.0) -> bool:
        gap = np.abs(self.scenarios - np.asarray(c, dtype=np.float64)).max(axis=1)
        return bool(gap.min() <= slack)

    def seed(self) -> np.ndarray:
        """The observed scenario closest to the sample mean."""
        d = ((self.scenarios - self.scenarios.mean(axis=0)) ** 2).sum(axis=1)
        return self.scenarios[int(np.argmin(d))]


@dataclass
class EvalReport:
    mean: float
    quantile: float
    feas_frac: float
    count: int


def order_quantile(values, q: float) -> float:
    """The ``ceil(q n)``-th smallest value."""
    v = np.sort(np.asarray(values, dtype=np.float64))
    if v.size == 0:
        raise ValueError("no values")
    k = min(v.size, max(1, math.ceil(q * v.size - 1e-9)))
    return float(v[k - 1])


def evaluate(x, scenarios, q: float = 0.9, rhs: float | None = None) -> EvalReport:
    x = np.asarray(x, dtype=np.float64)
    scenarios = as_matrix(scenarios, (None, x.shape[0]), name="scenarios")
    vals = scenarios @ x
    frac = math.nan if rhs is None else float(np.mean(vals <= rhs))
    return EvalReport(float(vals.mean()), order_quantile(vals, q), frac, int(vals.size))


def dumps_solution(x, state: MasterState) -> str:
    status = "converged" if state.converged else "not_converged"
    lines = ["solution v1", f"N {len(x)}", "x " + " ".join(repr(float(v)) for v in x),
             f"objective {float(state.objective)!r}", f"status {status}",
             f"iterations {state.iterations}"]
    return "\n".join(lines) + "\n"


def loads_solution(text: str) -> tuple[np.ndarray, dict]:
    rows = [ln.split() for ln in text.splitlines() if ln.strip()]
    if not rows or rows[0] != ["solution", "v1"]:
        raise FormatError("missing 'solution v1' header")
    fields = {r[0]: r[1:] for r in rows[1:]}
    try:
        n = int(fields["N"][0])
        x = np.array([float(v) for v in fields["x"]])
        meta = {"objective": float(fields["objective"][0]), "status": fields["status"][0],
                "iterations": int(fields["iterations"][0])}
    except (KeyError, IndexError, ValueError) as exc:
        raise FormatError(f"bad solution file: {exc}") from None
    if x.shape != (n,):
        raise FormatError(f"expected {n} entries in x, got {x.size}")
    return x, meta
