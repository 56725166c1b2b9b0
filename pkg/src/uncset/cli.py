"""``uncset`` command-line workbench.

Exit codes: 0 success, 2 configuration or input error, 3 training failure,
4 robust solve did not converge, 1 any other solver failure.
"""

from __future__ import annotations

import argparse
import csv
import io
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import workflow as wf
from .config import Config, ConfigError, load_config
from .datagen import generate, read_scenarios, write_scenarios
from .errors import DimensionMismatch, FormatError, UncsetError
from .master import dumps_solution, evaluate, loads_solution, solve_robust

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_TRAIN, EXIT_NONCONV = 0, 1, 2, 3, 4
EVAL_COLUMNS = ["type", "N", "m", "method", "avg", "q90", "feas_frac", "seed"]
RESULT_COLUMNS = ["type", "N", "m", "seed", "method", "quantile", "objective", "avg", "q90",
                  "feas_frac", "iterations", "status"]


class CommandError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def _num(v) -> str:
    if v is None or (isinstance(v, float) and np.isnan(v)):
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return repr(float(v))


def _write_csv(path, header, rows) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def _read_input(path: Path, n: int | None = None) -> np.ndarray:
    if not path.is_file():
        raise CommandError(f"missing input file {path}", EXIT_CONFIG)
    try:
        data = read_scenarios(path)
    except FormatError as exc:
        raise CommandError(str(exc), EXIT_CONFIG) from None
    if n is not None and data.shape[1] != n:
        raise CommandError(f"{path}: expected {n} columns, found {data.shape[1]}", EXIT_CONFIG)
    return data


def threads() -> int:
    raw = os.environ.get("UNCSET_THREADS", "0").strip() or "0"
    try:
        value = int(raw)
    except ValueError:
        raise CommandError(f"UNCSET_THREADS must be an integer, got {raw!r}", EXIT_CONFIG) from None
    if value < 0:
        raise CommandError("UNCSET_THREADS must be nonnegative", EXIT_CONFIG)
    return value or (os.cpu_count() or 1)


def cmd_gen_data(cfg: Config) -> int:
    train, test = generate(cfg.dataset())
    write_scenarios(cfg.path(cfg.train_csv), train)
    write_scenarios(cfg.path(cfg.test_csv), test)
    print(f"wrote {train.shape[0]} training and {test.shape[0]} test scenarios to {cfg.out}")
    return EXIT_OK


def cmd_train(cfg: Config) -> int:
    data = _read_input(cfg.path(cfg.train_csv))
    t0 = time.perf_counter()
    try:
        if cfg.method == "nn":
            model = wf.train_nn(data, cfg.widths, cfg.train_config())
        elif cfg.method == "svc":
            model = wf.train_svc(data, cfg.quantile)
        else:
            model = None
    except (UncsetError, ValueError) as exc:
        raise CommandError(f"training failed: {type(exc).__name__}: {exc}", EXIT_TRAIN) from None
    elapsed = time.perf_counter() - t0
    cfg.path(cfg.model).write_text(wf.dumps_model(cfg.method, model, cfg.train_csv),
                                   encoding="utf-8")
    print(f"trained {cfg.method} in {elapsed:.2f}s -> {cfg.path(cfg.model)}")
    return EXIT_OK


def _load_set(cfg: Config):
    path = cfg.path(cfg.model)
    if not path.is_file():
        raise CommandError(f"missing model file {path}", EXIT_CONFIG)
    try:
        method, model = wf.loads_model(path.read_text(encoding="utf-8"))
    except FormatError as exc:
        raise CommandError(f"{path}: {exc}", EXIT_CONFIG) from None
    if method == "discrete":
        data = _read_input(cfg.path(model))
    else:
        data = _read_input(cfg.path(cfg.train_csv))
    if data.shape[1] != cfg.n:
        raise CommandError(f"scenarios have {data.shape[1]} columns but N = {cfg.n}", EXIT_CONFIG)
    return method, wf.make_set(method, model, data, cfg.inflate)


def cmd_solve(cfg: Config) -> int:
    method, uset = _load_set(cfg)
    problem = wf.make_problem(cfg.kind, cfg.n, cfg.rhs_value)
    oracle = wf.oracle_for(uset, cfg.oracle == "exact")
    t0 = time.perf_counter()
    x, state = solve_robust(problem, oracle, uset.seed(), cfg.tol, cfg.max_iter)
    elapsed = time.perf_counter() - t0
    cfg.path(cfg.solution).write_text(dumps_solution(x, state), encoding="utf-8")
    _write_csv(cfg.path(cfg.log), ["iteration", "objective", "violation"],
               [[r["iteration"], _num(r["objective"]), _num(r["violation"])] for r in state.log])
    print(f"{method}: {state.iterations} iterations, objective {state.objective:.6g}, "
          f"{'converged' if state.converged else 'NOT converged'} in {elapsed:.2f}s")
    return EXIT_OK if state.converged else EXIT_NONCONV


def _eval_row(cfg: Config, method: str, report) -> list[str]:
    return [cfg.family, str(cfg.n), str(cfg.m), method, _num(report.mean), _num(report.quantile),
            _num(report.feas_frac), str(cfg.seed)]


def cmd_evaluate(cfg: Config) -> int:
    path = cfg.path(cfg.solution)
    if not path.is_file():
        raise CommandError(f"missing solution file {path}", EXIT_CONFIG)
    try:
        x, _ = loads_solution(path.read_text(encoding="utf-8"))
    except FormatError as exc:
        raise CommandError(f"{path}: {exc}", EXIT_CONFIG) from None
    test = _read_input(cfg.path(cfg.test_csv))
    if test.shape[1] != x.shape[0]:
        raise CommandError(f"test scenarios have {test.shape[1]} columns, solution has "
                           f"{x.shape[0]} entries", EXIT_CONFIG)
    rhs = cfg.rhs_value if cfg.kind == "feas" else None
    report = evaluate(x, test, cfg.q, rhs)
    row = _eval_row(cfg, cfg.method, report)
    out = cfg.path(cfg.output)
    rows = []
    if out.is_file():
        with open(out, encoding="utf-8", newline="") as fh:
            existing = list(csv.reader(fh))
        if not existing or existing[0] != EVAL_COLUMNS:
            raise CommandError(f"{out} exists with an unexpected header", EXIT_CONFIG)
        rows = existing[1:]
    key = lambda r: (r[0], r[1], r[2], r[3], r[7])
    rows = [r for r in rows if key(r) != key(row)] + [row]
    _write_csv(out, EVAL_COLUMNS, rows)
    print(",".join(row))
    return EXIT_OK


def run_instance(cfg: Config, family: str, seed: int) -> dict:
    """All methods and quantiles on one generated dataset."""
    train, test = generate(cfg.dataset(family, seed))
    problem = wf.make_problem(cfg.kind, cfg.n, cfg.rhs_value)
    rhs = problem.rhs if cfg.kind == "feas" else None
    rows, values = [], {}
    nn_model, nn_error = None, None
    if "nn" in cfg.methods:
        try:
            nn_model = wf.train_nn(train, cfg.widths, cfg.train_config(seed=seed))
        except (UncsetError, ValueError) as exc:
            nn_error = type(exc).__name__
    for q in cfg.quantiles:
        for method in cfg.methods:
            base = [family, cfg.n, cfg.m, seed, method, q]
            try:
                if method == "nn":
                    if nn_error:
                        raise _CellFailure(nn_error)
                    model = wf.with_quantile(nn_model, train, q)
                elif method == "svc":
                    model = wf.train_svc(train, q)
                else:
                    model = None
                uset = wf.make_set(method, model, train, cfg.inflate)
                x, state = solve_robust(problem, wf.oracle_for(uset, cfg.oracle == "exact"),
                                        uset.seed(), cfg.tol, cfg.max_iter)
            except _CellFailure as exc:
                rows.append(base + [None] * 5 + [f"failed:{exc}"])
                continue
            except (UncsetError, ValueError) as exc:
                rows.append(base + [None] * 5 + [f"failed:{type(exc).__name__}"])
                continue
            vals = test @ x
            report = evaluate(x, test, cfg.q, rhs)
            values[(method, q)] = vals
            status = "converged" if state.converged else "not_converged"
            rows.append(base + [state.objective if cfg.kind == "obj" else float(x.sum()),
                                report.mean, report.quantile, report.feas_frac,
                                state.iterations, status])
    return {"family": family, "seed": seed, "rows": rows, "values": values}


class _CellFailure(Exception):
    pass


def _table(cfg: Config, results: list[dict]) -> tuple[list[str], list[list[str]]]:
    header = ["type", "N", "m", "quantile"]
    for method in cfg.methods:
        header += [f"{method}_obj", f"{method}_avg", f"{method}_q90"]
    has_gap = "nn" in cfg.methods and "svc" in cfg.methods
    if has_gap:
        header.append("gap")
    header.append("seeds")
    table = []
    for family in cfg.families:
        for q in cfg.quantiles:
            line = [family, str(cfg.n), str(cfg.m), _num(q)]
            means = {}
            for method in cfg.methods:
                ok = [r for res in results if res["family"] == family for r in res["rows"]
                      if r[4] == method and r[5] == q and r[6] is not None]
                if ok:
                    means[method] = [float(np.mean([r[i] for r in ok])) for i in (6, 7, 8)]
                    line += [_num(v) for v in means[method]]
                else:
                    line += ["", "", ""]
            if has_gap:
                line.append(_num(100.0 * (means["svc"][1] / means["nn"][1] - 1.0))
                            if "nn" in means and "svc" in means else "")
            line.append(str(sum(1 for res in results if res["family"] == family)))
            table.append(line)
    return header, table


def cmd_experiment(cfg: Config) -> int:
    cells = [(family, cfg.seed + i) for family in cfg.families for i in range(cfg.seeds)]
    workers = min(threads(), len(cells))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_instance, [cfg] * len(cells), *zip(*cells)))
    else:
        results = []
        for family, seed in cells:
            t0 = time.perf_counter()
            results.append(run_instance(cfg, family, seed))
            print(f"{family} seed {seed}: done in {time.perf_counter() - t0:.1f}s", flush=True)

    rows = [[_num(v) if not isinstance(v, str) else v for v in r]
            for res in results for r in res["rows"]]
    _write_csv(cfg.path(cfg.results), RESULT_COLUMNS, rows)
    header, table = _table(cfg, results)
    _write_csv(cfg.path(cfg.table), header, table)
    _write_histograms(cfg, results)
    if cfg.figures and cfg.kind == "feas" and len(cfg.quantiles) > 1:
        _write_tradeoff(cfg, results)
    print(f"wrote {cfg.path(cfg.table)} and {cfg.path(cfg.results)}")
    failed = any(r[-1] != "converged" for res in results for r in res["rows"])
    return EXIT_NONCONV if failed else EXIT_OK


def _write_histograms(cfg: Config, results: list[dict]) -> None:
    for res in results:
        for q in cfg.quantiles:
            vals = {m: res["values"][(m, q)] for m in cfg.methods if (m, q) in res["values"]}
            if not vals:
                continue
            edges = wf.shared_edges(list(vals.values()), cfg.bins)
            counts = {m: wf.histogram(v, edges) for m, v in vals.items()}
            stem = f"hist_{res['family']}_seed{res['seed']}_q{q:g}"
            body = [[_num(edges[i]), _num(edges[i + 1])] + [str(int(counts[m][i])) for m in counts]
                    for i in range(cfg.bins)]
            _write_csv(cfg.path(stem + ".csv"), ["bin_lo", "bin_hi"] + list(counts), body)
            if cfg.figures:
                from .plotting import histogram_figure

                title = f"{res['family']} seed {res['seed']} quantile {q:g}"
                histogram_figure(cfg.path(stem + ".png"), edges, counts, title, "c'x out of sample")


def _write_tradeoff(cfg: Config, results: list[dict]) -> None:
    from .plotting import tradeoff_figure

    for family in cfg.families:
        pts = {}
        for method in cfg.methods:
            for q in cfg.quantiles:
                ok = [r for res in results if res["family"] == family for r in res["rows"]
                      if r[4] == method and r[5] == q and r[6] is not None]
                if ok:
                    pts.setdefault(method, []).append(
                        (q, float(np.mean([r[6] for r in ok])), float(np.mean([r[8] for r in ok]))))
        if pts:
            tradeoff_figure(cfg.path(f"tradeoff_{family}.png"), pts, f"{family} trade-off")


COMMANDS = {"gen-data": cmd_gen_data, "train": cmd_train, "solve": cmd_solve,
            "evaluate": cmd_evaluate, "experiment": cmd_experiment}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="uncset", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=sorted(COMMANDS))
    parser.add_argument("--config", required=True, help="INI configuration file")
    parser.add_argument("--seed", type=int, help="override [run] seed")
    parser.add_argument("--out", help="override [run] out directory (must exist)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out)
        return COMMANDS[args.command](cfg)
    except (ConfigError, DimensionMismatch) as exc:
        print(f"uncset: config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CommandError as exc:
        print(f"uncset: {exc}", file=sys.stderr)
        return exc.code
    except UncsetError as exc:
        print(f"uncset: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL


if __name__ == "__main__":
    sys.exit(main())
