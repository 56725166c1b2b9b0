"""Acceptance criteria 1-10, one pass/fail line each.

Run with pytest (lines are listed in the terminal summary) or directly as a
script. Criteria 8 and 9 train networks and solve robust problems at N=10,
m=250 and take several minutes each; they carry the ``slow`` marker.
"""

import sys
import time
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from conftest import naive_forward, random_relu_net  # noqa: E402

from uncset.cli import main as cli_main  # noqa: E402
from uncset.datagen import DatasetSpec, gen_gaussian, generate  # noqa: E402
from uncset.lp import LinearProgram, solve_lp  # noqa: E402
from uncset.master import (DiscreteUncertaintySet, build_feas_problem,  # noqa: E402
                           build_obj_problem, evaluate, solve_robust)
from uncset.nn_adversarial import (NnUncertaintySet, adversarial_exact,  # noqa: E402
                                   maximize_over_region, scenario_box)
from uncset.pwa_network import (ActivationPattern, AffineRegion, PwaActivation,  # noqa: E402
                                PwaNetwork, encode_binary_affine, encode_ellipsoid,
                                encode_polyhedron, membership, pattern_of, region_of)
from uncset.svc_baseline import build_set, solve_dual, weighting_matrix  # noqa: E402
from uncset.svdd_train import (TrainConfig, TrainedModel, _loss, _with_weights,  # noqa: E402
                               init_center, loss_gradient, train)
from uncset.workflow import with_quantile  # noqa: E402

LINES: dict[int, str] = {}


def report(k: int, ok: bool, detail: str) -> None:
    line = f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}"
    LINES[k] = line
    print(line)
    assert ok, line


# 1. region algebra

def test_criterion_01_region_algebra():
    t0 = time.perf_counter()
    rng = np.random.default_rng(101)
    worst, bad_ineq = 0.0, 0
    for _ in range(50):
        n = int(rng.integers(1, 7))
        widths = [int(w) for w in rng.integers(1, 9, size=int(rng.integers(1, 4)))]
        net = random_relu_net(rng, n, widths)
        regions = {}
        for c in rng.normal(scale=2.0, size=(1000, n)):
            u = pattern_of(net, c)
            reg = regions.get(u) or regions.setdefault(u, region_of(net, u))
            ref = naive_forward(net, c)
            worst = max(worst, float(np.max(np.abs(reg.output(c) - ref) / (1.0 + np.abs(ref)))))
            bad_ineq += int(np.any(reg.slack(c) < -1e-9))
    dt = time.perf_counter() - t0
    report(1, worst <= 1e-9 and bad_ineq == 0 and dt < 30,
           f"max rel map error {worst:.1e}, violated region rows {bad_ineq}, {dt:.1f}s")


# 2. encoder membership equivalence

def _check_encoder(enc, direct, pts, margin_fn):
    disagree = 0
    for c in pts:
        if margin_fn(c) < 1e-7:
            continue
        got = membership(enc.network, enc.center, enc.radius, enc.norm, c)
        disagree += int(bool(got) != direct(c))
    return disagree


def test_criterion_02_encoder_equivalence():
    t0 = time.perf_counter()
    rng = np.random.default_rng(202)
    disagree = 0
    for _ in range(10):
        n = int(rng.integers(2, 6))
        m = rng.normal(size=(n, n))
        sigma = m @ m.T + 0.5 * np.eye(n)
        a = rng.normal(size=n)
        q = lambda c: float((c - a) @ sigma @ (c - a))
        pts = a + rng.normal(scale=1.0 / np.sqrt(np.linalg.eigvalsh(sigma).min()), size=(1000, n)) * 0.7
        disagree += _check_encoder(encode_ellipsoid(sigma, a), lambda c: q(c) <= 1.0, pts,
                                   lambda c: abs(q(c) - 1.0))
    for _ in range(10):
        n = int(rng.integers(2, 6))
        a = rng.normal(size=(4, n))
        b = rng.uniform(0.2, 1.5, size=4)
        pts = rng.uniform(-2, 2, size=(1000, n))
        disagree += _check_encoder(encode_polyhedron(a, b), lambda c: bool(np.all(a @ c <= b)), pts,
                                   lambda c: float(np.min(np.abs(a @ c - b))))
    for _ in range(10):
        n = int(rng.integers(2, 7))
        a = rng.integers(-2, 3, size=(2, n)).astype(float)
        b = a @ rng.integers(0, 2, size=n)
        bits = rng.integers(0, 2, size=(800, n)).astype(float)
        real = rng.uniform(-0.5, 1.5, size=(200, n))
        pts = np.vstack([bits, real])
        binary = lambda c: bool(np.all((c == 0) | (c == 1)))
        direct = lambda c: binary(c) and bool(np.all(a @ c == b))
        # real points a hair away from a 0/1 coordinate are too close to call
        margin = lambda c: 1.0 if binary(c) else float(np.min(np.minimum(np.abs(c), np.abs(c - 1))))
        disagree += _check_encoder(encode_binary_affine(a, b), direct, pts, margin)
    dt = time.perf_counter() - t0
    report(2, disagree == 0 and dt < 30, f"disagreements {disagree} over 30 sets, {dt:.1f}s")


# 3. exact adversarial on encoded sets

def _encoded_set(enc, box):
    n = enc.network.input_dim
    model = TrainedModel(enc.network, enc.center, enc.radius, enc.norm)
    return NnUncertaintySet(model, -box * np.ones(n), box * np.ones(n))


def test_criterion_03_exact_adversarial():
    t0 = time.perf_counter()
    rng = np.random.default_rng(303)
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(2, 7))
        a = rng.normal(size=(3, n))
        b = rng.uniform(0.5, 2.0, size=3)
        uset = _encoded_set(encode_polyhedron(a, b), 5.0)
        x = rng.normal(size=n)
        ref = solve_lp(LinearProgram(x, a, b, lb=uset.lo, ub=uset.hi, sense="max")).objective
        val = adversarial_exact(x, uset).value
        worst = max(worst, abs(val - ref) / max(1.0, abs(ref)))
    for _ in range(20):
        n = int(rng.integers(2, 7))
        m = rng.normal(size=(n, n))
        sigma = m @ m.T + n * np.eye(n)
        a = rng.normal(size=n)
        uset = _encoded_set(encode_ellipsoid(sigma, a), 50.0)
        x = rng.normal(size=n)
        ref = x @ a + np.sqrt(x @ np.linalg.solve(sigma, x))
        val = adversarial_exact(x, uset).value
        worst = max(worst, abs(val - ref) / max(1.0, abs(ref)))
    dt = time.perf_counter() - t0
    report(3, worst <= 1e-5 and dt < 120, f"max rel error {worst:.1e} over 40 instances, {dt:.1f}s")


# 4. ball support functions

def test_criterion_04_ball_support():
    rng = np.random.default_rng(404)
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(1, 21))
        x = rng.normal(size=n)
        center = rng.normal(size=n)
        r = float(rng.uniform(0.0, 3.0))
        free = AffineRegion(ActivationPattern(((1,) * n,)), [(np.eye(n), np.zeros(n))],
                            np.zeros((0, n)), np.zeros(0))
        wide = 1e3 * np.ones(n)
        _, v2 = maximize_over_region(x, free, center, r, 2, -wide, wide)
        _, v1 = maximize_over_region(x, free, center, r, 1, -wide, wide)
        worst = max(worst, abs(v2 - (x @ center + r * np.linalg.norm(x))),
                    abs(v1 - (x @ center + r * np.abs(x).max())))
    report(4, worst <= 1e-6, f"max abs error {worst:.1e} over 100 instances (l1 and l2)")


# 5. cutting-plane soundness

def test_criterion_05_cutting_plane():
    opt = pytest.importorskip("scipy.optimize")
    rng = np.random.default_rng(505)
    worst, bad_recheck = 0.0, 0
    for kind in ("obj", "feas"):
        for _ in range(20):
            n = int(rng.integers(2, 11))
            k = int(rng.integers(1, 51))
            scen = rng.uniform(0.0, 150.0, size=(k, n))
            u = DiscreteUncertaintySet(scen)
            if kind == "obj":
                prob = build_obj_problem(n)
                res = opt.linprog(np.append(np.zeros(n), 1.0), np.hstack([scen, -np.ones((k, 1))]),
                                  np.zeros(k), np.append(np.ones(n), 0.0)[None, :], [n / 2],
                                  bounds=[(-1, 1)] * n + [(None, None)], method="highs")
                ref = res.fun
            else:
                prob = build_feas_problem(n)
                res = opt.linprog(-np.ones(n), scen, np.full(k, prob.rhs), bounds=[(-1, 1)] * n,
                                  method="highs")
                ref = -res.fun
            x, st = solve_robust(prob, u.worst_case, u.seed())
            worst = max(worst, abs(st.objective - ref))
            _, value = u.worst_case(x)
            threshold = st.objective if kind == "obj" else prob.rhs
            bad_recheck += int(not st.converged or value - threshold > 1e-6)
    report(5, worst <= 1e-6 and bad_recheck == 0,
           f"max |value - enumeration| {worst:.1e}, failed re-checks {bad_recheck} over 40 runs")


# 6. SVC dual

def _pattern_search(dist, cap, m, steps=12):
    """Grid search on the capped simplex, then pairwise-transfer refinement with halving steps."""
    import itertools

    f = lambda a: -float(a @ dist @ a)
    best, best_val = None, np.inf
    for parts in itertools.combinations(range(steps + m - 1), m - 1):
        a = (np.diff((-1,) + parts + (steps + m - 1,)) - 1) / steps
        if np.all(a <= cap + 1e-12) and f(a) < best_val:
            best, best_val = a, f(a)
    if best is None:
        best = np.full(m, 1.0 / m)
        best_val = f(best)
    h = 1.0 / steps
    while h > 1e-12:
        moved = False
        for i in range(m):
            for j in range(m):
                if i == j:
                    continue
                a = best.copy()
                a[i] += h
                a[j] -= h
                if a[i] <= cap + 1e-15 and a[j] >= -1e-15 and f(a) < best_val - 1e-16:
                    best, best_val, moved = a, f(a), True
        if not moved:
            h /= 2
    return best_val


def test_criterion_06_svc_dual():
    rng = np.random.default_rng(606)
    worst = 0.0
    for _ in range(10):
        m = int(rng.integers(2, 9))
        data = rng.normal(size=(m, 3))
        q = weighting_matrix(data) if m > 3 else np.eye(3)
        nu = float(rng.uniform(0.2, 1.0))
        model = solve_dual(data, q, nu)
        dist = model.distances()
        smo = -float(model.alpha @ dist @ model.alpha)
        worst = max(worst, abs(smo - _pattern_search(dist, model.cap, m)))
    kkt, sum_err, cover_bad = 0.0, 0.0, 0
    for seed in range(10):
        data = gen_gaussian(DatasetSpec("gaussian", n=10, m=250, seed=seed))
        model = solve_dual(data, weighting_matrix(data), 0.1)
        uset = build_set(model)
        kkt = max(kkt, model.kkt_violation())
        sum_err = max(sum_err, abs(model.alpha.sum() - 1.0))
        cover = float(np.mean(uset.contains(data, 1e-9 * uset.theta)))
        cover_bad += int(cover < 1.0 - 0.1 - 2.0 / np.sqrt(250))
    ok = worst <= 1e-6 and kkt <= 1e-6 and sum_err <= 1e-8 and cover_bad == 0
    report(6, ok, f"max grid gap {worst:.1e}, KKT {kkt:.1e}, |sum-1| {sum_err:.1e}, "
                  f"coverage failures {cover_bad}/10")


# 7. gradient checks

def _breakpoint_gap(net, data):
    gap, y = np.inf, data
    for layer in net.layers:
        w = y @ layer.weight.T + (0 if layer.bias is None else layer.bias)
        for br in layer.activation.breakpoints:
            gap = min(gap, float(np.min(np.abs(w - br))))
        y = layer.activation(w)
    return gap


def test_criterion_07_gradients():
    rng = np.random.default_rng(707)
    h = 1e-5
    worst, nets = 0.0, 0
    for loss in ("svdd", "quantile"):
        done = 0
        while done < 20:
            n = int(rng.integers(2, 5))
            net = random_relu_net(rng, n, [int(rng.integers(2, 7)), int(rng.integers(2, 7)), n],
                                  last_identity=True)
            data = rng.normal(size=(30, n))
            if _breakpoint_gap(net, data) < 1e-3:
                continue
            center = init_center(net, data) + rng.normal(scale=0.1, size=n)
            cfg = TrainConfig(loss=loss, weight_decay=1e-3, k=2)
            grads = loss_gradient(net, data, center, cfg)
            weights = [layer.weight.copy() for layer in net.layers]
            for li, w in enumerate(weights):
                for idx in np.ndindex(w.shape):
                    plus = [x.copy() for x in weights]
                    minus = [x.copy() for x in weights]
                    plus[li][idx] += h
                    minus[li][idx] -= h
                    fd = (_loss(_with_weights(net, plus), data, center, cfg)
                          - _loss(_with_weights(net, minus), data, center, cfg)) / (2 * h)
                    worst = max(worst, abs(fd - grads[li][idx]) / max(1.0, abs(fd)))
            done += 1
            nets += 1
    report(7, worst <= 1e-4, f"max rel FD error {worst:.1e} over {nets} networks")


# 8. directional comparison against the kernel baseline

def _obj_cell(family, seed):
    train_data, test = generate(DatasetSpec(family, n=10, m=250, test=10_000, seed=seed))
    model = train(train_data, cfg=TrainConfig(seed=seed))
    nn = NnUncertaintySet.from_data(model, train_data)
    prob = build_obj_problem(10)
    x_nn, st_nn = solve_robust(prob, nn.worst_case, nn.seed())
    lo, hi = scenario_box(train_data)
    svc = build_set(solve_dual(train_data, weighting_matrix(train_data), 0.1)).with_box(lo, hi)
    x_k, st_k = solve_robust(prob, svc.worst_case, svc.seed())
    return evaluate(x_nn, test), evaluate(x_k, test), st_nn.converged and st_k.converged


@pytest.mark.slow
def test_criterion_08_nn_vs_kernel():
    t0 = time.perf_counter()
    parts, ok = [], True
    for family in ("gaussian", "budgeted"):
        avg_wins = q90_wins = 0
        for seed in range(5):
            nn, kern, conv = _obj_cell(family, seed)
            ok &= conv
            avg_wins += int(nn.mean <= kern.mean)
            q90_wins += int(nn.quantile <= kern.mean)
        ok &= avg_wins >= 4
        parts.append(f"{family}: NN avg <= Kernel avg {avg_wins}/5")
        if family == "gaussian":
            ok &= q90_wins >= 3
            parts.append(f"gaussian: NN q90 <= Kernel avg {q90_wins}/5")
    dt = time.perf_counter() - t0
    report(8, ok and dt < 1800, "; ".join(parts) + f"; {dt / 60:.1f} min")


# 9. trade-off direction for the constraint problem

QUANTILES_9 = (0.02, 0.16, 0.64)


def _feas_series(seed):
    train_data, test = generate(DatasetSpec("gaussian", n=10, m=250, test=10_000, seed=seed))
    base = train(train_data, cfg=TrainConfig(seed=seed))
    prob = build_feas_problem(10)
    objs, usage = [], []
    for q in QUANTILES_9:
        uset = NnUncertaintySet.from_data(with_quantile(base, train_data, q), train_data)
        x, _ = solve_robust(prob, uset.worst_case, uset.seed())
        objs.append(float(x.sum()))
        usage.append(evaluate(x, test, 0.9, prob.rhs).quantile)
    return objs, usage


@pytest.mark.slow
def test_criterion_09_tradeoff_direction():
    rising = 0
    series = []
    for seed in range(5):
        objs, usage = _feas_series(seed)
        series.append((objs, usage))
        up = lambda v: all(b >= a - 1e-6 for a, b in zip(v, v[1:]))
        rising += int(up(objs) and up(usage))
    desc = " | ".join("obj " + "/".join(f"{v:.3f}" for v in o) + " q90 " + "/".join(f"{v:.0f}" for v in u)
                      for o, u in series)
    report(9, rising >= 4, f"objective and q90 usage nondecreasing in {rising}/5 seeds ({desc})")


# 10. determinism

CONFIG_10 = """
[run]
seed = 5
out = {out}
[data]
n = 3
m = 100
test = 300
[method]
name = {method}
epochs = 20
restarts = 2
widths = 6, 6, 3
[experiment]
methods = nn, svc, discrete
quantiles = 0.5, 0.9
bins = 8
[problem]
kind = {kind}
"""


def test_criterion_10_determinism(tmp_path):
    mismatched = []
    for method, kind in (("nn", "obj"), ("svc", "feas"), ("discrete", "obj")):
        snapshots = []
        for rep in range(2):
            out = tmp_path / f"{method}{rep}"
            out.mkdir()
            cfg = tmp_path / f"{method}{rep}.ini"
            cfg.write_text(CONFIG_10.format(out=out, method=method, kind=kind))
            for cmd in ("gen-data", "train", "solve", "evaluate", "experiment"):
                assert cli_main([cmd, "--config", str(cfg)]) in (0, 4)
            snapshots.append({p.name: p.read_bytes() for p in sorted(out.iterdir())})
        a, b = snapshots
        mismatched += [f"{method}/{name}" for name in a if a[name] != b.get(name)]
        count = len(a)
    report(10, not mismatched, f"byte-identical reruns, {count} files per method; "
                               f"mismatches {mismatched or 'none'}")


if __name__ == "__main__":
    import tempfile

    tests = [v for k, v in sorted(globals().items()) if k.startswith("test_criterion_")]
    for fn in tests:
        try:
            if "tmp_path" in fn.__code__.co_varnames[:fn.__code__.co_argcount]:
                with tempfile.TemporaryDirectory() as d:
                    fn(Path(d))
            else:
                fn()
        except AssertionError:
            pass
