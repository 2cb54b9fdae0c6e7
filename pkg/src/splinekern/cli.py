"""The ``splinekern`` command: fit, kernel, simulate, rates, bands, diagnose.

Exit status is 0 on success, 1 for invalid input or configuration and 2 for
failures during computation.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import os
import sys
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from ._version import __version__
from .core import (
    DEFAULT_GRID_SIZE,
    MAX_ORDER,
    NOISE_KINDS,
    ConfigurationError,
    GridFunction,
    ModelConfig,
    NoiseSpec,
    UndefinedInputError,
    make_grid,
    named_density,
    named_regression,
    read_sample_csv,
)
from .estimators import diagnostics_sweep
from .experiments import (
    RANGE_KINDS,
    RateReport,
    StudyPlan,
    applicable_statistics,
    bandwidth_grid,
    config_hash,
    confidence_band,
    default_lambda,
    rate_statistic,
    run_study,
    trend_test,
)
from .greens import convolution_like_diagnostics, greens_operator, kernel_derivative
from .spline import fit_spline

SEED_ENV = "SPLINEKERN_SEED"


class ConfigError(ConfigurationError):
    """Invalid study configuration; ``violations`` lists every problem found."""

    def __init__(self, violations: Sequence[str]):
        self.violations = list(violations)
        super().__init__("invalid configuration:\n  " + "\n  ".join(self.violations))


# --------------------------------------------------------------------------
# study configuration


@dataclass(frozen=True)
class StudyConfig:
    regression: dict
    density: dict
    noise: dict
    m: int
    range: str
    n_values: tuple
    replications: int
    seed: int
    gamma: float = 1.0
    lam: Optional[float] = None
    h_count: int = 15
    grid: int = DEFAULT_GRID_SIZE
    threads: int = 1
    output: dict = field(default_factory=dict)

    def resolved(self) -> dict:
        """Fields that determine results; excludes threads and output paths."""
        return {
            "regression": self.regression,
            "density": self.density,
            "noise": self.noise,
            "m": self.m,
            "range": self.range,
            "n_values": list(self.n_values),
            "replications": self.replications,
            "seed": self.seed,
            "gamma": self.gamma,
            "lambda": self.lam,
            "h_count": self.h_count,
            "grid": self.grid,
        }

    @property
    def hash(self) -> str:
        return config_hash(self.resolved())

    def model(self, grid_size: Optional[int] = None) -> ModelConfig:
        grid = make_grid(grid_size or self.grid)
        noise = NoiseSpec(**self.noise)
        return ModelConfig(
            named_regression(self.regression["name"], **self.regression.get("params", {})),
            named_density(grid, self.density["name"], **self.density.get("params", {})),
            noise,
            int(self.n_values[0]),
            self.seed,
        )

    def plan(self) -> StudyPlan:
        return StudyPlan(
            self.m, self.range, tuple(self.n_values), self.replications, self.seed, self.gamma, self.lam, self.h_count
        )


_TOP_FIELDS = {
    "model",
    "m",
    "range",
    "gamma",
    "lambda",
    "n_values",
    "h_count",
    "replications",
    "grid",
    "seed",
    "threads",
    "output",
}
_MODEL_FIELDS = {"regression", "density", "noise"}
_FUNC_FIELDS = {"name", "params"}
_NOISE_FIELDS = {"kind", "scale", "kappa", "shape"}
_OUTPUT_FIELDS = {"report", "csv"}


def _is_int(v) -> bool:
    return isinstance(v, int) and not isinstance(v, bool)


def _is_num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool)


def _unknown(obj: dict, allowed: set, where: str, out: list) -> None:
    for key in sorted(set(obj) - allowed):
        out.append(f"{where}{key}: unknown field")


def parse_config(text: str) -> StudyConfig:
    """Parse and validate a JSON study configuration.

    Raises :class:`ConfigError` listing every violation, or a
    :class:`ConfigurationError` naming the line and column of a JSON syntax
    error.
    """
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigurationError(
            f"malformed JSON at line {exc.lineno}, column {exc.colno} (char {exc.pos}): {exc.msg}"
        ) from None
    if not isinstance(doc, dict):
        raise ConfigError(["top level: expected a JSON object"])
    bad: list[str] = []
    _unknown(doc, _TOP_FIELDS, "", bad)

    model = doc.get("model")
    regression = {"name": "sin", "params": {}}
    density = {"name": "uniform", "params": {}}
    noise = {"kind": "gaussian", "scale": 1.0, "kappa": 4.0, "shape": None}
    if model is None:
        bad.append("model: required")
    elif not isinstance(model, dict):
        bad.append("model: expected an object")
    else:
        _unknown(model, _MODEL_FIELDS, "model.", bad)
        for key, target in (("regression", regression), ("density", density)):
            spec = model.get(key)
            if spec is None:
                continue
            if not isinstance(spec, dict) or not isinstance(spec.get("name"), str):
                bad.append(f"model.{key}: expected an object with a string 'name'")
                continue
            _unknown(spec, _FUNC_FIELDS, f"model.{key}.", bad)
            params = spec.get("params", {})
            if not isinstance(params, dict):
                bad.append(f"model.{key}.params: expected an object")
                params = {}
            target.update(name=spec["name"], params=params)
        nspec = model.get("noise", {})
        if not isinstance(nspec, dict):
            bad.append("model.noise: expected an object")
        else:
            _unknown(nspec, _NOISE_FIELDS, "model.noise.", bad)
            for key in ("scale", "kappa", "shape"):
                if key in nspec and not (_is_num(nspec[key]) or (key == "shape" and nspec[key] is None)):
                    bad.append(f"model.noise.{key}: expected a number")
            noise.update({k: v for k, v in nspec.items() if k in _NOISE_FIELDS})
            if noise["kind"] not in NOISE_KINDS:
                bad.append(f"model.noise.kind: must be one of {NOISE_KINDS}")
            elif all(_is_num(noise[k]) for k in ("scale", "kappa")):
                bad += [f"model.noise: {msg}" for msg in NoiseSpec.violations(_NoiseProbe(**noise))]

    m = doc.get("m")
    if not _is_int(m) or not 1 <= m <= MAX_ORDER:
        bad.append(f"m: must be an integer in 1..{MAX_ORDER}")
    kind = doc.get("range", "H")
    if kind not in RANGE_KINDS:
        bad.append(f"range: must be one of {RANGE_KINDS}")
    gamma = doc.get("gamma", 1.0)
    if not _is_num(gamma) or gamma <= 0:
        bad.append("gamma: must be a positive number")
    lam = doc.get("lambda")
    kappa = noise.get("kappa")
    if lam is not None and not _is_num(lam):
        bad.append("lambda: must be a number")
    if kind == "G" and _is_num(kappa) and kappa > 2:
        if lam is None:
            lam = default_lambda(kappa)
        elif _is_num(lam) and not 2 < lam < min(kappa, 4):
            bad.append(f"lambda: must satisfy 2 < lambda < min(kappa, 4) = {min(kappa, 4)}")
    n_values = doc.get("n_values")
    if not isinstance(n_values, list) or not n_values or not all(_is_int(n) and n >= 3 for n in n_values):
        bad.append("n_values: must be a nonempty list of integers >= 3")
        n_values = []
    elif sorted(set(n_values)) != n_values:
        bad.append("n_values: must be strictly increasing")
    h_count = doc.get("h_count", 15)
    if not _is_int(h_count) or h_count < 1:
        bad.append("h_count: must be a positive integer")
    reps = doc.get("replications")
    if not _is_int(reps) or reps < 1:
        bad.append("replications: must be a positive integer")
    grid = doc.get("grid", DEFAULT_GRID_SIZE)
    if not _is_int(grid) or grid < 8 * (m if _is_int(m) else 1):
        bad.append("grid: must be an integer of at least 8m intervals")
    seed = doc.get("seed", 0)
    if not _is_int(seed) or seed < 0:
        bad.append("seed: must be a nonnegative integer")
    threads = doc.get("threads", 1)
    if not _is_int(threads) or threads < 1:
        bad.append("threads: must be a positive integer")
    output = doc.get("output", {})
    if not isinstance(output, dict):
        bad.append("output: expected an object")
        output = {}
    else:
        _unknown(output, _OUTPUT_FIELDS, "output.", bad)

    if not bad and kind in RANGE_KINDS:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            for n in n_values:
                try:
                    bandwidth_grid(kind, n, gamma, kappa, lam, m, h_count)
                except ConfigurationError as exc:
                    bad.append(f"range: {exc}")
    if not bad:
        try:
            grid_obj = make_grid(grid)
            named_regression(regression["name"], **regression["params"])
            named_density(grid_obj, density["name"], **density["params"])
        except (ConfigurationError, TypeError, ValueError) as exc:
            bad.append(f"model: {exc}")
    if bad:
        raise ConfigError(bad)
    return StudyConfig(
        regression, density, noise, m, kind, tuple(n_values), reps, seed, float(gamma),
        None if lam is None else float(lam), h_count, grid, threads, dict(output),
    )


class _NoiseProbe:
    """Attribute holder so NoiseSpec's checks run without raising."""

    def __init__(self, kind, scale, kappa, shape=None):
        self.kind, self.scale, self.kappa, self.shape = kind, scale, kappa, shape


# --------------------------------------------------------------------------
# helpers


def _header(config_hash_value: str) -> str:
    return f"# config_hash={config_hash_value} version={__version__}\n"


def _write_json(path, doc: dict) -> None:
    Path(path).write_text(json.dumps(doc, sort_keys=True, indent=1) + "\n", encoding="utf-8")


def _file_digest(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _resolve_seed(seed: int) -> int:
    env = os.environ.get(SEED_ENV)
    if env is None:
        print(f"seed: {seed}")
        return seed
    try:
        value = int(env)
    except ValueError:
        raise ConfigurationError(f"{SEED_ENV} must be an integer, got {env!r}") from None
    print(f"seed: {value} (from {SEED_ENV})")
    return value


def write_fit_csv(path, grid_nodes, values, config_hash_value: str) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write(_header(config_hash_value))
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "f"])
        for t, f in zip(grid_nodes, values):
            writer.writerow([repr(float(t)), repr(float(f))])


def read_fit_csv(path) -> GridFunction:
    lines = [ln for ln in Path(path).read_text(encoding="utf-8").splitlines() if ln and not ln.startswith("#")]
    if lines[0].split(",") != ["t", "f"]:
        raise ConfigurationError("fit CSV header must be t,f")
    data = np.array([[float(v) for v in ln.split(",")] for ln in lines[1:]])
    grid = make_grid(data.shape[0] - 1)
    if not np.allclose(data[:, 0], grid.nodes, rtol=0, atol=1e-12):
        raise ConfigurationError("fit CSV nodes are not a uniform grid on [0, 1]")
    return GridFunction(grid, data[:, 1])


# --------------------------------------------------------------------------
# subcommands


def cmd_fit(args) -> int:
    sample = read_sample_csv(args.input)
    grid = make_grid(args.grid)
    config = {"command": "fit", "input_sha256": _file_digest(args.input), "m": args.m, "h": args.h, "grid": args.grid}
    h = config_hash(config)
    print(f"seed: none (deterministic)\nconfig hash: {h}")
    fit = fit_spline(sample.x, sample.y, args.m, args.h, grid)
    write_fit_csv(args.output, grid.nodes, fit.function.values, h)
    diag_path = args.diagnostics or str(Path(args.output).with_suffix(".json"))
    _write_json(
        diag_path,
        {
            "config_hash": h,
            "version": __version__,
            "config": config,
            "n": fit.n,
            "objective": fit.objective,
            "data_term": fit.data_term,
            "penalty": fit.penalty,
            "residual_rms": fit.residual_rms,
            "sup_norm": fit.function.sup_norm(),
        },
    )
    print(f"wrote {args.output} and {diag_path}")
    return 0


def cmd_kernel(args) -> int:
    grid = make_grid(args.grid)
    w = named_density(grid, args.density)
    config = {"command": "kernel", "m": args.m, "h": args.h, "density": args.density, "grid": args.grid,
              "derivative": args.derivative}
    h = config_hash(config)
    print(f"seed: none (deterministic)\nconfig hash: {h}")
    K = greens_operator(w, args.m, args.h)
    diag = {
        "config_hash": h,
        "version": __version__,
        "config": config,
        "relative_asymmetry": K.relative_asymmetry(),
        "row_integral_defect": K.row_integral_defect(),
    }
    A = kernel_derivative(K, args.derivative)
    diag["convolution_like"] = convolution_like_diagnostics(A).as_dict()
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        fh.write(_header(h))
        np.savetxt(fh, A.matrix, delimiter=",", fmt="%.17g")
    diag_path = args.diagnostics or str(Path(args.output).with_suffix(".json"))
    _write_json(diag_path, diag)
    print(f"wrote {args.output} and {diag_path}")
    return 0


def _load_config(args) -> StudyConfig:
    cfg = parse_config(Path(args.config).read_text(encoding="utf-8"))
    seed = _resolve_seed(cfg.seed)
    changes = {}
    if seed != cfg.seed:
        changes["seed"] = seed
    if args.grid is not None:
        changes["grid"] = args.grid
    if getattr(args, "threads", None) is not None:
        changes["threads"] = args.threads
    if changes:
        from dataclasses import replace

        cfg = replace(cfg, **changes)
    print(f"config hash: {cfg.hash}")
    return cfg


def cmd_simulate(args) -> int:
    cfg = _load_config(args)
    base = Path(args.config).with_suffix("")
    report_path = Path(args.output or cfg.output.get("report") or f"{base}.report.json")
    csv_path = Path(cfg.output.get("csv") or report_path.with_suffix(".csv"))
    model = cfg.model()
    report = run_study(
        model,
        cfg.plan(),
        threads=cfg.threads,
        progress=(lambda msg: print(msg, file=sys.stderr)) if args.verbose else None,
        model_description=cfg.resolved(),
    )
    csv_path.write_text(report.rows_csv(), encoding="utf-8")
    report_path.write_text(report.to_json(), encoding="utf-8")
    print(f"wrote {report_path} and {csv_path} ({len(report.rows)} rows, {len(report.failures)} failures)")
    return 0 if not report.failures else 2


def cmd_rates(args) -> int:
    report = RateReport.from_json(Path(args.report).read_text(encoding="utf-8"))
    doc = json.loads(Path(args.report).read_text(encoding="utf-8"))
    csv_path = Path(args.csv or Path(args.report).with_suffix(".csv"))
    text = csv_path.read_text(encoding="utf-8")
    if RateReport.csv_header_hash(text) != report.config_hash:
        raise ConfigurationError(f"config hash of {csv_path} does not match the report")
    if hashlib.sha256(text.encode()).hexdigest() != doc.get("rows_sha256"):
        raise ConfigurationError(f"raw rows in {csv_path} do not match the report")
    print(f"config hash: {report.config_hash}")
    names = args.statistic or applicable_statistics(report.kind)
    print(f"{'statistic':<10} {'n':>7} {'max':>12} {'median':>12}")
    for name in names:
        series = rate_statistic(report, name)
        for n, mx, md in zip(series.n_values, series.maxima, series.medians):
            print(f"{name:<10} {n:>7d} {mx:>12.6g} {md:>12.6g}")
        if len(series.n_values) >= 3:
            tmax = trend_test(series.n_values, series.maxima)
            tmed = trend_test(series.n_values, series.medians)
            print(f"{name:<10} trend: max p={tmax.pvalue:.3f} growth={tmax.growth:.3f}; "
                  f"median p={tmed.pvalue:.3f} growth={tmed.growth:.3f}")
    return 0


def cmd_bands(args) -> int:
    sample = read_sample_csv(args.input)
    grid = make_grid(args.grid)
    config = {"command": "bands", "input_sha256": _file_digest(args.input), "m": args.m, "h": args.h,
              "q": args.q, "kappa": args.kappa, "gamma": args.gamma, "grid": args.grid}
    h = config_hash(config)
    print(f"seed: none (deterministic)\nconfig hash: {h}")
    fit = fit_spline(sample.x, sample.y, args.m, args.h, grid)
    lower, upper = confidence_band(fit, args.q, args.kappa, args.gamma)
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        fh.write(_header(h))
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "lower", "fit", "upper"])
        for row in zip(grid.nodes, lower.values, fit.function.values, upper.values):
            writer.writerow([repr(float(v)) for v in row])
    print(f"wrote {args.output}")
    return 0


def cmd_diagnose(args) -> int:
    cfg = _load_config(args)
    model = cfg.model()
    if args.h:
        hs = sorted(args.h)
    else:
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            hs = list(bandwidth_grid("D", max(cfg.n_values), cfg.gamma, count=cfg.h_count))
    records = diagnostics_sweep(model, cfg.m, cfg.n_values, hs, cfg.seed)
    with open(args.output, "w", newline="", encoding="utf-8") as fh:
        fh.write(_header(cfg.hash))
        fields = list(records[0].as_dict())
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(fields)
        for rec in records:
            writer.writerow([repr(v) for v in rec.as_dict().values()])
    print(f"wrote {args.output} ({len(records)} rows)")
    return 0


# --------------------------------------------------------------------------
# entry point


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="splinekern", description="Smoothing splines and their equivalent kernels.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p, grid_default=DEFAULT_GRID_SIZE):
        p.add_argument("--grid", type=int, default=grid_default, help="number of grid intervals N")

    p = sub.add_parser("fit", help="fit a smoothing spline to a sample CSV")
    p.add_argument("--input", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--output", required=True)
    p.add_argument("--diagnostics")
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("kernel", help="compute a reproducing kernel on the grid")
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--density", default="uniform")
    p.add_argument("--derivative", type=int, default=0)
    p.add_argument("--output", required=True)
    p.add_argument("--diagnostics")
    common(p)
    p.set_defaults(func=cmd_kernel)

    p = sub.add_parser("simulate", help="run a Monte Carlo rate study")
    p.add_argument("--config", required=True)
    p.add_argument("--output")
    p.add_argument("--threads", type=int)
    p.add_argument("--verbose", action="store_true")
    common(p, None)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("rates", help="print rate statistics of a study report")
    p.add_argument("--report", required=True)
    p.add_argument("--csv")
    p.add_argument("--statistic", action="append")
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("bands", help="confidence band around a spline fit")
    p.add_argument("--input", required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--h", type=float, required=True)
    p.add_argument("--q", type=float, required=True)
    p.add_argument("--kappa", type=float, default=4.0)
    p.add_argument("--gamma", type=float, default=1.0)
    p.add_argument("--output", default="band.csv")
    common(p)
    p.set_defaults(func=cmd_bands)

    p = sub.add_parser("diagnose", help="design and noise diagnostics over an (n, h) sweep")
    p.add_argument("--config", required=True)
    p.add_argument("--h", type=float, action="append")
    p.add_argument("--output", default="diagnostics.csv")
    common(p, None)
    p.set_defaults(func=cmd_diagnose)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    try:
        return args.func(args)
    except (ConfigurationError, UndefinedInputError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except Exception as exc:  # computation failure
        print(f"failure: {exc!r}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
