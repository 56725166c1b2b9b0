"""INI configuration for the command-line workbench.

Every section and key is optional except where a command needs it; unknown
sections or keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import configparser
from dataclasses import dataclass
from pathlib import Path

from .datagen import FAMILIES, DatasetSpec
from .svdd_train import TrainConfig


class ConfigError(ValueError):
    pass


_SCHEMA = {
    "run": {"seed", "out"},
    "data": {"family", "n", "m", "test", "outliers", "gamma", "train_csv", "test_csv"},
    "method": {"name", "quantile", "epochs", "lr", "weight_decay", "loss", "eps", "k",
               "restarts", "widths", "model", "oracle", "inflate"},
    "problem": {"kind", "rhs", "tol", "max_iter", "solution", "log"},
    "evaluate": {"q", "output"},
    "experiment": {"families", "seeds", "methods", "quantiles", "results", "table", "bins",
                   "figures"},
}

METHODS = ("nn", "svc", "discrete")
KINDS = ("obj", "feas")


@dataclass
class Config:
    seed: int = 0
    out: Path = Path(".")
    family: str = "gaussian"
    n: int = 10
    m: int = 250
    test: int = 10_000
    outliers: float = 0.05
    gamma: float | None = None
    train_csv: str = "train.csv"
    test_csv: str = "test.csv"
    method: str = "nn"
    quantile: float = 0.9
    epochs: int = 1000
    lr: float = 1e-3
    weight_decay: float | None = None
    loss: str = "quantile"
    eps: float = 0.1
    k: int = 5
    restarts: int = 3
    widths: tuple[int, ...] = (50, 50, 50)
    model: str = "model.txt"
    oracle: str = "decomposed"
    inflate: float = 0.5
    kind: str = "obj"
    rhs: float | None = None
    tol: float = 1e-6
    max_iter: int = 200
    solution: str = "solution.txt"
    log: str = "iterations.csv"
    q: float = 0.9
    output: str = "eval.csv"
    families: tuple[str, ...] = ("gaussian",)
    seeds: int = 1
    methods: tuple[str, ...] = ("nn", "svc")
    quantiles: tuple[float, ...] = (0.9,)
    results: str = "results.csv"
    table: str = "table.csv"
    bins: int = 40
    figures: bool = True

    def path(self, name: str) -> Path:
        return self.out / name

    def dataset(self, family: str | None = None, seed: int | None = None) -> DatasetSpec:
        return DatasetSpec(family or self.family, self.n, self.m, self.test, self.outliers,
                           self.seed if seed is None else seed, self.gamma)

    def train_config(self, seed: int | None = None, quantile: float | None = None) -> TrainConfig:
        return TrainConfig(epochs=self.epochs, lr=self.lr, weight_decay=self.weight_decay,
                           loss=self.loss, eps=self.eps, k=self.k, restarts=self.restarts,
                           seed=self.seed if seed is None else seed,
                           radius_quantile=self.quantile if quantile is None else quantile)

    @property
    def rhs_value(self) -> float:
        return 50.0 * self.n if self.rhs is None else self.rhs


def _list(text: str, cast) -> tuple:
    return tuple(cast(p.strip()) for p in text.split(",") if p.strip())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else float(text)


_CASTS = {
    "seed": int, "out": Path, "n": int, "m": int, "test": int, "outliers": float,
    "gamma": _optional_float, "quantile": float, "epochs": int, "lr": float,
    "weight_decay": _optional_float, "eps": float, "k": int, "restarts": int,
    "widths": lambda s: _list(s, int), "inflate": float, "rhs": _optional_float,
    "tol": float, "max_iter": int, "q": float, "families": lambda s: _list(s, str),
    "seeds": int, "methods": lambda s: _list(s, str),
    "quantiles": lambda s: _list(s, float), "bins": int, "figures": _bool,
}
# keys whose attribute name differs from the INI key
_ATTR = {("method", "name"): "method", ("problem", "kind"): "kind"}


def load_config(path, seed: int | None = None, out=None) -> Config:
    parser = configparser.ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except configparser.Error as exc:
        raise ConfigError(f"malformed config: {exc}") from None
    cfg = Config()
    for section in parser.sections():
        allowed = _SCHEMA.get(section)
        if allowed is None:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in allowed:
                raise ConfigError(f"unknown key '{key}' in [{section}]")
            attr = _ATTR.get((section, key), key)
            try:
                value = _CASTS.get(key, str)(raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from None
            setattr(cfg, attr, value)
    if seed is not None:
        cfg.seed = seed
    if out is not None:
        cfg.out = Path(out)
    validate(cfg)
    return cfg


def validate(cfg: Config) -> None:
    checks = [
        (cfg.family in FAMILIES, f"family must be one of {FAMILIES}"),
        (all(f in FAMILIES for f in cfg.families), f"families must be among {FAMILIES}"),
        (cfg.method in METHODS, f"method must be one of {METHODS}"),
        (all(mt in METHODS for mt in cfg.methods), f"methods must be among {METHODS}"),
        (cfg.kind in KINDS, f"kind must be one of {KINDS}"),
        (cfg.oracle in ("decomposed", "exact"), "oracle must be decomposed or exact"),
        (0.0 < cfg.quantile <= 1.0, "quantile must lie in (0, 1]"),
        (all(0.0 < v < 1.0 for v in cfg.quantiles), "quantiles must lie in (0, 1)"),
        (0.0 < cfg.q <= 1.0, "q must lie in (0, 1]"),
        (cfg.n >= 1 and cfg.m >= 2 and cfg.test >= 1, "need N >= 1, m >= 2, test >= 1"),
        (0.0 <= cfg.outliers < 1.0, "outliers must lie in [0, 1)"),
        (cfg.seeds >= 1 and cfg.bins >= 1, "seeds and bins must be positive"),
        (cfg.tol > 0 and cfg.max_iter >= 1, "tol > 0 and max_iter >= 1 required"),
        (len(cfg.widths) >= 1 and all(w >= 1 for w in cfg.widths), "widths must be positive"),
        (cfg.seed >= 0, "seed must be nonnegative"),
    ]
    for ok, msg in checks:
        if not ok:
            raise ConfigError(msg)
    if not cfg.out.is_dir():
        raise ConfigError(f"output directory {cfg.out} does not exist")
    try:
        cfg.train_config()
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
