"""Flat ``key = value`` run configuration.

Example::

    problem = example1
    K = 32
    n_el = 64
    mu = 0.75

Lines starting with ``#`` or ``;`` are comments. Builtin problems supply
their own ``alpha`` and ``gamma`` defaults; inline ``y_d`` expressions must
set both.
"""
import configparser
import os
from dataclasses import asdict, dataclass, fields
from pathlib import Path

from .fem1d import build_mesh
from .fom_solver import ProblemSpec
from .problems import BUILTINS, ExpressionError, compile_expression

OUTPUT_ENV = "FRACRB_OUTPUT_DIR"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    problem: str
    alpha: float
    gamma: float
    T: float = 1.0
    K: int = 32
    n_el: int = 64
    x_min: float = 0.0
    x_max: float = 1.0
    mu_min: float = 0.5
    mu_max: float = 1.5
    mu: float = 0.75
    n_train: int = 50
    eps: float = 1e-6
    N_max: int = 20
    indicator: str = "true-error"
    pod_tol: float = 1e-10
    bound_coupling: str = "full"
    output_dir: str = "out"
    seed: int = 0

    def spec(self) -> ProblemSpec:
        return ProblemSpec(
            alpha=self.alpha,
            gamma=self.gamma,
            T=self.T,
            K=self.K,
            mesh=build_mesh(self.x_min, self.x_max, self.n_el),
            mu_domain=(self.mu_min, self.mu_max),
            problem=self.problem,
        )

    def train_set(self):
        import numpy as np

        if self.n_train == 1:
            return [self.mu_min]
        return list(np.linspace(self.mu_min, self.mu_max, self.n_train))

    def output_path(self) -> Path:
        return Path(os.environ.get(OUTPUT_ENV) or self.output_dir)

    def as_dict(self) -> dict:
        return asdict(self)


_TYPES = {f.name: f.type for f in fields(RunConfig)}
_CASTS = {"float": float, "int": int, "str": str, float: float, int: int, str: str}


def _cast(key, raw):
    kind = _CASTS[_TYPES[key]]
    try:
        if kind is int:
            value = float(raw)
            if value != int(value):
                raise ValueError
            return int(value)
        return kind(raw)
    except ValueError:
        raise ConfigError(f"{key}: cannot read {raw!r} as {kind.__name__}") from None


def _validate(cfg: RunConfig):
    checks = [
        (cfg.gamma > 0, "gamma", "gamma must be positive"),
        (0 < cfg.alpha <= 1, "alpha", "alpha must lie in (0, 1]"),
        (cfg.T > 0, "T", "T must be positive"),
        (cfg.K >= 1, "K", "K must be >= 1"),
        (cfg.n_el >= 2, "n_el", "n_el must be >= 2"),
        (cfg.x_max > cfg.x_min, "x_max", "x_max must exceed x_min"),
        (cfg.mu_min > 0, "mu_min", "mu_min must be positive"),
        (cfg.mu_max >= cfg.mu_min, "mu_max", "mu_max must be >= mu_min"),
        (cfg.mu > 0, "mu", "mu must be positive"),
        (cfg.n_train >= 1, "n_train", "n_train must be >= 1"),
        (cfg.eps > 0, "eps", "eps must be positive"),
        (cfg.N_max >= 1, "N_max", "N_max must be >= 1"),
        (0 < cfg.pod_tol < 1, "pod_tol", "pod_tol must lie in (0, 1)"),
        (cfg.indicator in ("true-error", "bound"), "indicator", "indicator must be 'true-error' or 'bound'"),
        (cfg.bound_coupling in ("full", "reduced"), "bound_coupling", "bound_coupling must be 'full' or 'reduced'"),
    ]
    for ok, key, message in checks:
        if not ok:
            raise ConfigError(message)


def parse_config(source) -> RunConfig:
    """Read a configuration from a path or from inline text."""
    if isinstance(source, Path) or (isinstance(source, str) and "=" not in source and Path(source).exists()):
        text = Path(source).read_text()
    else:
        text = str(source)
    parser = configparser.ConfigParser(interpolation=None, comment_prefixes=("#", ";"),
                                       inline_comment_prefixes=("#",), delimiters=("=",))
    parser.optionxform = str
    try:
        parser.read_string("[run]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(f"malformed configuration: {exc}") from None
    raw = dict(parser["run"])

    unknown = sorted(set(raw) - set(_TYPES))
    if unknown:
        raise ConfigError(f"unknown key(s): {', '.join(unknown)}")
    if "problem" not in raw:
        raise ConfigError("problem: missing mandatory key")

    problem = raw["problem"].strip()
    values = {}
    if problem in BUILTINS:
        values["alpha"] = BUILTINS[problem].alpha
        values["gamma"] = BUILTINS[problem].gamma
    elif problem.startswith("example"):
        raise ConfigError(f"problem: unknown builtin id {problem!r}")
    else:
        try:
            compile_expression(problem)
        except ExpressionError as exc:
            raise ConfigError(f"problem: {exc}") from None
        for key in ("alpha", "gamma"):
            if key not in raw:
                raise ConfigError(f"{key}: missing mandatory key for an inline y_d expression")
    for key, value in raw.items():
        if key != "problem":
            values[key] = _cast(key, value.strip())
    if "mu" not in raw:
        lo = values.get("mu_min", RunConfig.mu_min)
        hi = values.get("mu_max", RunConfig.mu_max)
        values["mu"] = 0.75 if lo <= 0.75 <= hi else 0.5 * (lo + hi)
    cfg = RunConfig(problem=problem, **values)
    _validate(cfg)
    return cfg
