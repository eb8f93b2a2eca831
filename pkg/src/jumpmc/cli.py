"""Command-line entry point.

Runs are configured file-first (TOML) with flag overrides, so sweeps and
table reproductions are versionable.  Subcommands: estimate, compare, sweep,
reference, check-model.  Results go to CSV (one row per estimate, numbers at
17 significant digits) with a sidecar .txt summary.
"""

from __future__ import annotations

import argparse
import sys
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field, fields

import numpy as np

from .errors import ConfigError, NumericalError
from .harness import (
    Reference,
    compute_reference,
    euler_batch,
    parametrix_batch,
    sweep as run_sweep,
)
from .models import (
    build_model_affine,
    build_model_const1d,
    build_model_trig,
    check_assumptions,
    payoff_call,
    payoff_indicator,
)
from .parametrix import EstimatorParams

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4

_MODELS = ("trig", "affine", "const1d", "custom")
_PAYOFFS = ("indicator", "call")


@dataclass
class RunConfig:
    command: str = "estimate"
    model: str = "trig"
    payoff: str = "indicator"
    strike: float = 1.8
    x0: list = field(default_factory=lambda: [1.0, 1.0])
    horizon: float = 1.0
    trials: int = 100_000
    sigma_a: float = 0.5
    gamma: float = 0.25
    epsilon: float = 1.0
    euler_steps: int = 200
    euler_trials: int = 4_000
    euler_pairs: list = field(default_factory=list)  # [[M, p], ...] for compare
    parameter: str = "sigma_a"
    grid: list = field(default_factory=list)
    reference_value: float | None = None
    seed: int = 0
    workers: int = 1
    out: str = "results.csv"
    model_params: dict = field(default_factory=dict)

    def validate(self) -> None:
        if self.model not in _MODELS:
            raise ConfigError(f"model must be one of {_MODELS}, got {self.model!r}")
        if self.payoff not in _PAYOFFS:
            raise ConfigError(f"payoff must be one of {_PAYOFFS}, got {self.payoff!r}")
        if self.horizon <= 0:
            raise ConfigError(f"horizon must be positive, got {self.horizon}")
        if self.trials < 2:
            raise ConfigError(f"trials must be >= 2, got {self.trials}")
        if self.sigma_a <= 0:
            raise ConfigError(f"sigma_a must be positive, got {self.sigma_a}")
        if not 0 < self.gamma < 1:
            raise ConfigError(f"gamma must lie in (0, 1), got {self.gamma}")
        if self.epsilon <= 0:
            raise ConfigError(f"epsilon must be positive, got {self.epsilon}")
        if self.euler_steps < 1:
            raise ConfigError(f"euler_steps must be >= 1, got {self.euler_steps}")
        if self.euler_trials < 2:
            raise ConfigError(f"euler_trials must be >= 2, got {self.euler_trials}")
        if self.workers < 1:
            raise ConfigError(f"workers must be >= 1, got {self.workers}")
        if self.seed < 0:
            raise ConfigError(f"seed must be >= 0, got {self.seed}")
        d = 1 if self.model in ("const1d", "custom") else 2
        if len(self.x0) != d:
            raise ConfigError(f"x0 must have {d} components for model {self.model}")
        for pair in self.euler_pairs:
            if len(pair) != 2 or pair[0] < 2 or pair[1] < 1:
                raise ConfigError(f"bad euler pair {pair!r}; need [M>=2, p>=1]")

    def build_model(self):
        kwargs = dict(self.model_params)
        if self.model == "trig":
            return build_model_trig(**kwargs)
        if self.model == "affine":
            return build_model_affine(**kwargs)
        return build_model_const1d(**kwargs)

    def build_payoff(self):
        if self.payoff == "indicator":
            return payoff_indicator(self.strike)
        return payoff_call(self.strike)

    def estimator_params(self) -> EstimatorParams:
        return EstimatorParams(
            sigma_a=self.sigma_a, gamma=self.gamma, eps=self.epsilon, horizon=self.horizon
        )


def parse_config(path: str | None, overrides: dict) -> RunConfig:
    """Load TOML config (if any) and apply flag overrides on top of defaults."""
    cfg = RunConfig()
    known = {f.name for f in fields(RunConfig)}
    if path is not None:
        try:
            with open(path, "rb") as fh:
                data = tomllib.load(fh)
        except FileNotFoundError as exc:
            raise ConfigError(f"config file not found: {path}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from exc
        for key, value in data.items():
            if key not in known:
                raise ConfigError(f"unknown config key {key!r}")
            setattr(cfg, key, value)
    for key, value in overrides.items():
        if value is None:
            continue
        if key not in known:
            raise ConfigError(f"unknown option {key!r}")
        setattr(cfg, key, value)
    cfg.validate()
    if cfg.model == "affine" and cfg.build_model().assumption_violating:
        print("note: affine model violates the boundedness assumptions", file=sys.stderr)
    if cfg.gamma >= 0.5:
        print(
            f"warning: gamma={cfg.gamma} is outside the finite-variance regime (0, 0.5)",
            file=sys.stderr,
        )
    return cfg


def _fmt(x) -> str:
    if x is None or x == "":
        return ""
    if isinstance(x, float):
        return format(x, ".17g")
    return str(x)


CSV_HEADER = [
    "estimator", "model", "payoff", "M", "mean", "var", "stderr",
    "ci99", "error_vs_reference", "wall_seconds", "seed",
]


def emit_results(rows, path: str, parameter_column: bool = False) -> None:
    """Write the CSV table plus a sidecar .txt summary."""
    header = list(CSV_HEADER)
    if parameter_column:
        header.append("parameter")
    try:
        with open(path, "w") as fh:
            fh.write(",".join(header) + "\n")
            for row in rows:
                fh.write(",".join(_fmt(row.get(col, "")) for col in header) + "\n")
        with open(path + ".txt", "w") as fh:
            fh.write(_text_report(rows, parameter_column))
    except OSError as exc:
        raise IOError(f"cannot write results to {path}: {exc}") from exc


def _text_report(rows, parameter_column: bool) -> str:
    lines = []
    cols = ["estimator", "M", "mean", "var", "ci99", "error_vs_reference"]
    if parameter_column:
        cols.insert(1, "parameter")
    lines.append("  ".join(f"{c:>20s}" for c in cols))
    for row in rows:
        cells = []
        for c in cols:
            v = row.get(c, "")
            if isinstance(v, float):
                cells.append(f"{v:>20.6g}")
            else:
                cells.append(f"{str(v):>20s}")
        lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


def _row(cfg: RunConfig, estimator: str, M: int, stats, err=None, extra=None) -> dict:
    row = {
        "estimator": estimator,
        "model": cfg.model,
        "payoff": cfg.payoff,
        "M": M,
        "mean": stats.mean,
        "var": stats.var,
        "stderr": stats.stderr,
        "ci99": stats.ci99,
        "error_vs_reference": err if err is not None else "",
        "wall_seconds": stats.wall,
        "seed": cfg.seed,
    }
    if extra:
        row.update(extra)
    return row


def _err(cfg: RunConfig, mean: float):
    if cfg.reference_value is None:
        return None
    return abs(mean - cfg.reference_value)


def cmd_estimate(cfg: RunConfig) -> list:
    model = cfg.build_model()
    f = cfg.build_payoff()
    res = parametrix_batch(
        model, f, cfg.x0, cfg.estimator_params(), cfg.trials, cfg.seed, workers=cfg.workers
    )
    return [_row(cfg, "parametrix", cfg.trials, res.stats, _err(cfg, res.stats.mean))]


def cmd_compare(cfg: RunConfig) -> list:
    model = cfg.build_model()
    f = cfg.build_payoff()
    rows = []
    res = parametrix_batch(
        model, f, cfg.x0, cfg.estimator_params(), cfg.trials, cfg.seed, workers=cfg.workers
    )
    rows.append(_row(cfg, "parametrix", cfg.trials, res.stats, _err(cfg, res.stats.mean)))
    pairs = cfg.euler_pairs or [[cfg.euler_trials, cfg.euler_steps]]
    for m_e, p_e in pairs:
        res_e = euler_batch(
            model, f, cfg.x0, cfg.horizon, int(p_e), int(m_e), cfg.seed, workers=cfg.workers
        )
        rows.append(
            _row(cfg, f"euler(p={int(p_e)})", int(m_e), res_e.stats, _err(cfg, res_e.stats.mean))
        )
    return rows


def cmd_sweep(cfg: RunConfig) -> list:
    if not cfg.grid:
        raise ConfigError("sweep requires a nonempty --grid")
    model = cfg.build_model()
    f = cfg.build_payoff()
    result = run_sweep(
        model, f, cfg.x0, cfg.estimator_params(), cfg.parameter,
        [float(v) for v in cfg.grid], M=cfg.trials, seed=cfg.seed, workers=cfg.workers,
    )
    rows = []
    for v, stats in zip(result.values, result.stats):
        rows.append(
            _row(
                cfg, "parametrix", cfg.trials, stats, _err(cfg, stats.mean),
                extra={"parameter": f"{cfg.parameter}={v:g}"},
            )
        )
    return rows


def cmd_reference(cfg: RunConfig) -> list:
    model = cfg.build_model()
    f = cfg.build_payoff()
    ref = compute_reference(
        model, f, cfg.x0, cfg.horizon,
        trials=cfg.trials, p_steps=cfg.euler_steps, seed=cfg.seed, workers=cfg.workers,
    )
    row = {
        "estimator": f"euler-reference(p={cfg.euler_steps})",
        "model": cfg.model,
        "payoff": cfg.payoff,
        "M": cfg.trials,
        "mean": ref.mean,
        "var": ref.stderr**2 * cfg.trials,
        "stderr": ref.stderr,
        "ci99": 2.576 * ref.stderr,
        "error_vs_reference": "",
        "wall_seconds": "",
        "seed": cfg.seed,
    }
    return [row]


def cmd_check_model(cfg: RunConfig) -> list:
    model = cfg.build_model()
    report = check_assumptions(model, probe_cloud_size=10_000, seed=cfg.seed)
    print(f"model: {model.name}  assumption_violating: {model.assumption_violating}")
    print(f"intensity range  [{report.intensity_min:.6g}, {report.intensity_max:.6g}]"
          f"  ok={report.intensity_ok}")
    print(f"ellipticity range [{report.ellipticity_min:.6g}, {report.ellipticity_max:.6g}]"
          f"  ok={report.ellipticity_ok}")
    print(f"jump sup observed {report.jump_sup_observed:.6g}  ok={report.jump_ok}")
    print(f"derivative max rel err {report.deriv_max_rel_err:.3g}  ok={report.deriv_ok}")
    print(f"symmetric={report.symmetry_ok}  cholesky={report.cholesky_ok}")
    print(f"all assumptions: {'PASS' if report.all_ok else 'FAIL'}")
    return []


_COMMANDS = {
    "estimate": cmd_estimate,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
    "reference": cmd_reference,
    "check-model": cmd_check_model,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="jumpmc",
        description="Unbiased Monte Carlo estimation for jump-diffusions",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", default=None)
        p.add_argument("--model", choices=_MODELS, default=None)
        p.add_argument("--payoff", choices=_PAYOFFS, default=None)
        p.add_argument("--strike", type=float, default=None)
        p.add_argument("--x0", type=str, default=None, help="comma-separated start state")
        p.add_argument("--horizon", type=float, default=None)
        p.add_argument("--trials", type=int, default=None)
        p.add_argument("--sigma-a", dest="sigma_a", type=float, default=None)
        p.add_argument("--gamma", type=float, default=None)
        p.add_argument("--epsilon", type=float, default=None)
        p.add_argument("--euler-steps", dest="euler_steps", type=int, default=None)
        p.add_argument("--euler-trials", dest="euler_trials", type=int, default=None)
        p.add_argument("--reference-value", dest="reference_value", type=float, default=None)
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--out", default=None)
        if name == "sweep":
            p.add_argument("--parameter", choices=("sigma_a", "gamma", "eps"), default=None)
            p.add_argument("--grid", type=str, default=None, help="comma-separated values")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    overrides = {
        k: v for k, v in vars(args).items() if k not in ("config", "command")
    }
    if overrides.get("x0") is not None:
        overrides["x0"] = [float(v) for v in overrides["x0"].split(",")]
    if overrides.get("grid") is not None:
        overrides["grid"] = [float(v) for v in overrides["grid"].split(",")]
    try:
        cfg = parse_config(args.config, overrides)
        cfg.command = args.command
        rows = _COMMANDS[args.command](cfg)
        if rows:
            emit_results(rows, cfg.out, parameter_column=(args.command == "sweep"))
            print(f"wrote {cfg.out}")
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except IOError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
