"""Glue between data, trained models, uncertainty sets and the robust solver."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .master import (DiscreteUncertaintySet, EvalReport, MasterState, ProblemKind,
                     build_feas_problem, build_obj_problem, evaluate, solve_robust)
from .nn_adversarial import NnUncertaintySet, scenario_box
from .pwa_network import PwaActivation
from .svc_baseline import SvcModel, build_set, solve_dual, weighting_matrix
from .svdd_train import TrainConfig, TrainedModel, calibrate_radius, train


def architecture(widths) -> tuple[list[int], list[PwaActivation]]:
    """ReLU after every layer except the last, which stays affine."""
    widths = list(widths)
    acts = [PwaActivation.relu()] * (len(widths) - 1) + [PwaActivation.identity()]
    return widths, acts


def train_nn(data, widths, cfg: TrainConfig) -> TrainedModel:
    w, acts = architecture(widths)
    return train(data, w, acts, cfg)


def with_quantile(model: TrainedModel, data, q: float) -> TrainedModel:
    """Same network and center, radius recalibrated to training quantile ``q``."""
    r = calibrate_radius(model.network, model.center, data, q, model.norm)
    return TrainedModel(model.network, model.center, r, model.norm, model.final_loss,
                        model.restart_losses)


def train_svc(data, quantile: float) -> SvcModel:
    """Dual fit with ``nu = 1 - quantile``; checks that a boundary exists."""
    model = solve_dual(data, weighting_matrix(data), 1.0 - quantile)
    build_set(model)
    return model


def make_set(method: str, model, data, inflate: float = 0.5):
    """Uncertainty set with a ``worst_case``/``seed``/``contains`` interface."""
    if method == "nn":
        return NnUncertaintySet.from_data(model, data, inflate)
    if method == "svc":
        lo, hi = scenario_box(data, inflate)
        return build_set(model).with_box(lo, hi)
    if method == "discrete":
        return DiscreteUncertaintySet(data)
    raise ValueError(f"unknown method {method!r}")


def make_problem(kind: str, n: int, rhs: float | None = None):
    return build_obj_problem(n) if kind == "obj" else build_feas_problem(n, rhs)


def oracle_for(uset, exact: bool = False):
    if exact and isinstance(uset, NnUncertaintySet):
        return lambda x: uset.worst_case(x, exact=True)
    return uset.worst_case


@dataclass
class Outcome:
    x: np.ndarray
    state: MasterState
    report: EvalReport


def solve_and_evaluate(problem, uset, test, q: float = 0.9, tol: float = 1e-6,
                       max_iter: int = 200, exact: bool = False) -> Outcome:
    x, state = solve_robust(problem, oracle_for(uset, exact), uset.seed(), tol, max_iter)
    rhs = problem.rhs if problem.kind is ProblemKind.CONSTRAINT else None
    return Outcome(x, state, evaluate(x, test, q, rhs))


def dumps_model(method: str, model, train_csv: str | None = None) -> str:
    if method == "discrete":
        return f"discrete v1\ntrain {train_csv}\n"
    return model.dumps()


def loads_model(text: str):
    """Returns ``(method, model)``; discrete models carry only the training file name."""
    head = text.split(None, 1)[0] if text.strip() else ""
    if head == "pwanet":
        return "nn", TrainedModel.loads(text)
    if head == "svcmodel":
        return "svc", SvcModel.loads(text)
    if head == "discrete":
        lines = text.splitlines()
        if len(lines) < 2 or not lines[1].startswith("train "):
            raise FormatError("discrete model needs a 'train <file>' line")
        return "discrete", lines[1][len("train "):].strip()
    raise FormatError("unrecognised model file")


def histogram(values, edges) -> np.ndarray:
    """Counts per bin; the last bin is closed so every value is counted."""
    counts, _ = np.histogram(values, bins=edges)
    return counts


def shared_edges(value_sets, bins: int) -> np.ndarray:
    lo = min(float(np.min(v)) for v in value_sets)
    hi = max(float(np.max(v)) for v in value_sets)
    if not math.isfinite(lo) or hi <= lo:
        hi = lo + 1.0
    return np.linspace(lo, hi, bins + 1)
