"""Bandwidth ranges, Monte Carlo studies, rate statistics and confidence bands.

A study draws one sample per ``(n, replication)`` and fits it at every
bandwidth of the range for that ``n``, so the per-replication maximum over
``h`` is a genuine supremum over the bandwidth range for a single data set.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from ._version import __version__
from .core import (
    ConfigurationError,
    GridFunction,
    ModelConfig,
    derivative,
    sample_regression,
)
from .estimators import log_factor
from .greens import exp_sum_sup, greens_operator
from .spline import SplineFit, SplineSolver, continuous_noiseless, decompose

RANGE_KINDS = ("H", "G", "F", "D", "R")


# --------------------------------------------------------------------------
# bandwidth ranges


def default_lambda(kappa: float) -> float:
    """Midpoint of the admissible interval ``(2, min(kappa, 4))``."""
    return (2.0 + min(kappa, 4.0)) / 2.0


def rate_bandwidth(n: int, m: int) -> float:
    """``(log n / n)^{1/(2m+1)}``, the rate-optimal order of ``h``."""
    return (math.log(n) / n) ** (1.0 / (2 * m + 1))


def bandwidth_interval(
    kind: str,
    n: int,
    gamma: float = 1.0,
    kappa: Optional[float] = None,
    lam: Optional[float] = None,
    m: Optional[int] = None,
) -> tuple[float, float]:
    """Endpoints of the bandwidth range of the given kind.

    ``H`` and ``F`` need ``kappa``; ``G`` needs ``kappa`` and optionally
    ``lam``; ``F`` and ``R`` need ``m``. ``R`` is the degenerate range holding
    only the rate-optimal bandwidth.
    """
    if kind not in RANGE_KINDS:
        raise ConfigurationError(f"unknown range kind {kind!r}; expected one of {RANGE_KINDS}")
    if n < 3:
        raise ConfigurationError("bandwidth ranges need n >= 3")
    if gamma <= 0:
        raise ConfigurationError("gamma must be positive")
    ratio = math.log(n) / n
    if kind in ("H", "G", "F"):
        if kappa is None or kappa <= 2:
            raise ConfigurationError(f"range {kind} needs a noise moment order kappa > 2")
    if kind in ("F", "R") and (m is None or not 1 <= m <= 4):
        raise ConfigurationError(f"range {kind} needs an order m in 1..4")

    if kind == "H":
        lo, hi = gamma * ratio ** (1 - 2 / kappa), 0.5
    elif kind == "G":
        lam = default_lambda(kappa) if lam is None else lam
        if not 2 < lam < min(kappa, 4):
            raise ConfigurationError(f"lambda={lam} must satisfy 2 < lambda < min(kappa, 4) = {min(kappa, 4)}")
        if kappa <= 3:
            warnings.warn(f"kappa={kappa} <= 3: the G-range does not reach the rate-optimal bandwidth", stacklevel=2)
        lo, hi = gamma * ratio ** (1 - 2 / lam), 0.5
    elif kind == "F":
        if m < 2 or kappa <= 2 + 1 / m:
            warnings.warn(f"F-range with m={m}, kappa={kappa}: bias-free bands need m >= 2 and kappa > 2 + 1/m", stacklevel=2)
        lo, hi = gamma * ratio ** (1 - 2 / kappa), 1.0 / _root(n, 2 * m + 1)
    elif kind == "D":
        lo, hi = gamma * ratio, 0.5
    else:
        lo = hi = rate_bandwidth(n, m)
    if lo > hi:
        raise ConfigurationError(f"empty {kind}-range for n={n}: lower bound {lo:.6g} > upper bound {hi:.6g}")
    if hi > 1:
        raise ConfigurationError(f"{kind}-range upper bound {hi:.6g} exceeds 1")
    return lo, hi


def _root(n: int, k: int) -> float:
    # exact for perfect powers such as 1024 = 4**5
    r = round(n ** (1.0 / k))
    return float(r) if r**k == n else n ** (1.0 / k)


@dataclass(frozen=True)
class BandwidthGrid:
    kind: str
    n: int
    gamma: float
    kappa: Optional[float]
    lam: Optional[float]
    m: Optional[int]
    values: tuple

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.size == 0 or np.any(np.diff(v) <= 0):
            raise ConfigurationError("bandwidth grid must be nonempty and strictly increasing")

    @property
    def interval(self) -> tuple[float, float]:
        return self.values[0], self.values[-1]

    def __iter__(self):
        return iter(self.values)

    def __len__(self) -> int:
        return len(self.values)


def bandwidth_grid(
    kind: str,
    n: int,
    gamma: float = 1.0,
    kappa: Optional[float] = None,
    lam: Optional[float] = None,
    m: Optional[int] = None,
    count: int = 15,
) -> BandwidthGrid:
    """``count`` log-spaced bandwidths covering the range, endpoints included."""
    lo, hi = bandwidth_interval(kind, n, gamma, kappa, lam, m)
    if kind == "G" and lam is None:
        lam = default_lambda(kappa)
    if lo == hi or count == 1:
        values = (lo,)
    else:
        if count < 2:
            raise ConfigurationError("count must be at least 1")
        v = np.geomspace(lo, hi, count)
        v[0], v[-1] = lo, hi
        values = tuple(float(h) for h in v)
    return BandwidthGrid(kind, n, gamma, kappa, lam, m, values)


# --------------------------------------------------------------------------
# studies


ROW_FIELDS = (
    "n",
    "h_index",
    "h",
    "replication",
    "eps_sup",
    "eps_wmh",
    "psi_sup",
    "psi_wmh",
    "err_sup",
    "err_wmh",
    "bias_sup",
    "cbias_sup",
    "gap_sup",
    "s0_sup",
    "sm_sup",
    "exp_sup",
)


@dataclass(frozen=True)
class StudyPlan:
    """Everything that determines a study's output, apart from the model."""

    m: int
    kind: str
    n_values: tuple
    replications: int
    seed: int
    gamma: float = 1.0
    lam: Optional[float] = None
    h_count: int = 15

    def grids(self, kappa: float) -> dict:
        return {
            n: bandwidth_grid(self.kind, n, self.gamma, kappa, self.lam, self.m, self.h_count)
            for n in self.n_values
        }


def describe_model(model: ModelConfig) -> dict:
    noise = model.noise
    scale = noise.scale if not callable(noise.scale) else getattr(noise.scale, "__name__", "callable")
    return {
        "regression": {"name": model.regression.name, "params": dict(model.regression.params)},
        "density": {"name": model.density.name, "key": model.density.key},
        "noise": {"kind": noise.kind, "scale": scale, "kappa": noise.kappa, "shape": noise.shape},
        "grid": model.density.grid.n_intervals,
    }


def config_hash(config: dict) -> str:
    text = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()[:16]


@dataclass
class RateReport:
    """Raw per-(n, h, replication) norms of a study plus its provenance."""

    config: dict
    rows: list
    failures: list = field(default_factory=list)
    version: str = __version__

    @property
    def config_hash(self) -> str:
        return config_hash(self.config)

    @property
    def m(self) -> int:
        return int(self.config["plan"]["m"])

    @property
    def kind(self) -> str:
        return self.config["plan"]["kind"]

    @property
    def n_values(self) -> list:
        return sorted({int(r["n"]) for r in self.rows})

    def column(self, name: str, n: Optional[int] = None) -> np.ndarray:
        return np.array([r[name] for r in self.rows if n is None or r["n"] == n], dtype=float)

    def rows_csv(self) -> str:
        buf = io.StringIO()
        buf.write(f"# config_hash={self.config_hash} version={self.version}\n")
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(ROW_FIELDS)
        for r in self.rows:
            writer.writerow([repr(r[k]) for k in ROW_FIELDS])
        return buf.getvalue()

    def rows_digest(self) -> str:
        return hashlib.sha256(self.rows_csv().encode()).hexdigest()

    def summary(self) -> dict:
        out = {}
        for name in applicable_statistics(self.kind):
            series = rate_statistic(self, name)
            out[name] = {
                "n": series.n_values,
                "maxima": series.maxima.tolist(),
                "medians": series.medians.tolist(),
            }
        return out

    def to_json(self) -> str:
        doc = {
            "config": self.config,
            "config_hash": self.config_hash,
            "version": self.version,
            "failures": self.failures,
            "rows_sha256": self.rows_digest(),
            "statistics": self.summary(),
            "rows": self.rows,
        }
        return json.dumps(doc, sort_keys=True, indent=1) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RateReport":
        doc = json.loads(text)
        report = cls(doc["config"], doc["rows"], doc.get("failures", []), doc.get("version", __version__))
        if doc.get("config_hash") != report.config_hash:
            raise ConfigurationError("report config hash does not match its configuration")
        return report

    @staticmethod
    def csv_header_hash(text: str) -> Optional[str]:
        first = text.split("\n", 1)[0]
        for part in first.lstrip("# ").split():
            if part.startswith("config_hash="):
                return part.split("=", 1)[1]
        return None

    @classmethod
    def rows_from_csv(cls, text: str) -> list:
        lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
        reader = csv.DictReader(lines)
        out = []
        for rec in reader:
            row = {k: float(v) for k, v in rec.items()}
            for k in ("n", "h_index", "replication"):
                row[k] = int(row[k])
            out.append(row)
        return out


_INT_FIELDS = ("n", "h_index", "replication")


def _rep_seed(seed: int, n: int, replication: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(seed, spawn_key=(int(n), int(replication)))


def run_study(
    model: ModelConfig,
    plan: StudyPlan,
    threads: int = 1,
    progress: Optional[Callable[[str], None]] = None,
    model_description: Optional[dict] = None,
) -> RateReport:
    """Monte Carlo study over the plan's ``(n, h, replication)`` grid.

    Replication ``r`` at sample size ``n`` draws its data from the seed
    sequence ``(seed, n, r)``; the same sample is fitted at every ``h``.
    Results do not depend on ``threads``. ``model_description`` replaces the
    automatic description of the model in the report's configuration.
    """
    if plan.replications < 1:
        raise ConfigurationError("need at least one replication")
    w = model.density
    grid = w.grid
    m = plan.m
    f0 = model.regression.on(grid)
    grids = plan.grids(model.noise.kappa)
    config = {"model": model_description or describe_model(model), "plan": asdict(plan)}
    config["plan"]["n_values"] = list(plan.n_values)
    rows, failures = [], []

    with ThreadPoolExecutor(max_workers=max(1, threads)) as pool:
        for n in plan.n_values:
            samples = [sample_regression(model.with_n(n), _rep_seed(plan.seed, n, r)) for r in range(plan.replications)]
            for hi, h in enumerate(grids[n]):
                K = greens_operator(w, m, h)
                phi_h = continuous_noiseless(f0, w, m, h)
                cbias = (phi_h - f0).sup_norm()

                def task(r, h=h, hi=hi, K=K, phi_h=phi_h, cbias=cbias, n=n):
                    s = samples[r]
                    dec = decompose(s, m, h, K, f0)
                    sm = derivative(dec.kernel_sum, m).sup_norm() * h**m
                    row = {
                        "n": n,
                        "h_index": hi,
                        "h": h,
                        "replication": r,
                        "eps_sup": dec.sup_norms["remainder"],
                        "eps_wmh": dec.wmh_norms["remainder"],
                        "psi_sup": dec.sup_norms["kernel_sum"],
                        "psi_wmh": dec.wmh_norms["kernel_sum"],
                        "err_sup": dec.sup_norms["error"],
                        "err_wmh": dec.wmh_norms["error"],
                        "bias_sup": dec.sup_norms["bias"],
                        "cbias_sup": cbias,
                        "gap_sup": (phi_h - dec.conditional).sup_norm(),
                        "s0_sup": dec.sup_norms["kernel_sum"],
                        "sm_sup": sm,
                        "exp_sup": exp_sum_sup(s.x, s.d, h),
                    }
                    return {k: (int(v) if k in _INT_FIELDS else float(v)) for k, v in row.items()}

                futures = [pool.submit(task, r) for r in range(plan.replications)]
                for r, fut in enumerate(futures):
                    try:
                        rows.append(fut.result())
                    except Exception as exc:  # keep the rest of the study
                        failures.append({"n": n, "h_index": hi, "replication": r, "error": repr(exc)})
                del K
                if progress:
                    progress(f"n={n} h={h:.4g} done")
    return RateReport(config, rows, failures)


# --------------------------------------------------------------------------
# statistics


STATISTIC_KINDS = {
    "T_UE": ("H",),
    "T_UE_h1": ("H",),
    "Q_UE": ("G",),
    "QF_UE": ("F",),
    "Q_inf_0": ("H",),
    "Q_inf_m": ("H",),
    "Q_wm": ("H",),
    "bias": ("G",),
    "exp": ("H",),
}
ALIASES = {"𝔔_UE": "QF_UE", "Q_{∞,0}": "Q_inf_0", "Q_{∞,m}": "Q_inf_m"}


def applicable_statistics(kind: str) -> list:
    return [k for k, kinds in STATISTIC_KINDS.items() if kind in kinds]


def statistic_ratio(name: str, row: dict, m: int) -> float:
    """The ratio of one report row entering the statistic ``name``."""
    n, h = row["n"], row["h"]
    L = log_factor(n, h)
    var = L / (n * h)
    if name == "T_UE":
        return row["eps_sup"] / (h**-0.5 * L / (n * h))
    if name == "T_UE_h1":
        return row["eps_sup"] / (L / (n * h * h))
    if name == "Q_UE":
        return row["err_sup"] / math.sqrt(h ** (2 * m) + var)
    if name == "QF_UE":
        return row["err_sup"] / math.sqrt(var)
    if name == "Q_inf_0":
        return row["s0_sup"] / math.sqrt(var)
    if name == "Q_inf_m":
        return row["sm_sup"] / math.sqrt(var)
    if name == "Q_wm":
        return row["psi_wmh"] / math.sqrt(var)
    if name == "bias":
        return row["bias_sup"] / math.sqrt(h ** (2 * m) + var)
    if name == "exp":
        return row["exp_sup"] / math.sqrt(var)
    raise ConfigurationError(f"unknown statistic {name!r}")


@dataclass(frozen=True)
class StatisticSeries:
    """Per-n summaries of ``sup_h`` of a ratio: one value per replication."""

    name: str
    n_values: list
    per_replication: list

    @property
    def maxima(self) -> np.ndarray:
        return np.array([np.max(v) for v in self.per_replication])

    @property
    def medians(self) -> np.ndarray:
        return np.array([np.median(v) for v in self.per_replication])


def rate_statistic(report: RateReport, name: str, check_range: bool = True) -> StatisticSeries:
    """Per-n values of ``sup_h`` of the statistic's ratio, per replication.

    ``maxima`` (over replications) is the statistic itself at each ``n``.
    """
    name = ALIASES.get(name, name)
    if name not in STATISTIC_KINDS:
        raise ConfigurationError(f"unknown statistic {name!r}")
    if check_range and report.kind not in STATISTIC_KINDS[name]:
        raise ConfigurationError(
            f"statistic {name} is defined over the {'/'.join(STATISTIC_KINDS[name])}-range, "
            f"report uses the {report.kind}-range"
        )
    m = report.m
    ns = report.n_values
    per = []
    for n in ns:
        best: dict = {}
        for row in report.rows:
            if row["n"] != n:
                continue
            val = statistic_ratio(name, row, m)
            r = row["replication"]
            best[r] = max(best.get(r, 0.0), val)
        per.append(np.array([best[r] for r in sorted(best)]))
    return StatisticSeries(name, ns, per)


@dataclass(frozen=True)
class TrendResult:
    tau: float
    pvalue: float
    growth: float
    passed: bool


def trend_test(n_values: Sequence[float], values: Sequence[float], alpha: float = 0.05) -> TrendResult:
    """One-sided Kendall test for an increasing trend; passes when ``p > alpha``.

    With three points the smallest attainable p-value is 1/6, so the test
    cannot reject; ``growth`` (last over first value) is reported alongside.
    """
    n_values = np.asarray(n_values, dtype=float)
    values = np.asarray(values, dtype=float)
    if n_values.size < 3:
        raise ConfigurationError("trend test needs at least three sample sizes")
    if np.all(values == values[0]):
        return TrendResult(0.0, 1.0, 1.0, True)
    res = stats.kendalltau(n_values, values, alternative="greater")
    growth = float(values[-1] / values[0]) if values[0] != 0 else math.inf
    return TrendResult(float(res.statistic), float(res.pvalue), growth, bool(res.pvalue > alpha))


def log_log_slope(x, y) -> float:
    """OLS slope of ``log y`` on ``log x``."""
    lx, ly = np.log(np.asarray(x, dtype=float)), np.log(np.asarray(y, dtype=float))
    return float(np.polyfit(lx, ly, 1)[0])


@dataclass(frozen=True)
class SlopeEstimate:
    slope: float
    lower: float
    upper: float


def rate_regression(
    report: RateReport,
    norm_field: str = "err_wmh",
    h_rule: Optional[Callable[[int, int], float]] = None,
    n_boot: int = 2000,
    seed: int = 0,
) -> SlopeEstimate:
    """Slope of log median ``norm_field`` on ``log(log n / n)`` with a 90% bootstrap interval.

    At each ``n`` only the rows whose ``h`` is closest to ``h_rule(n, m)``
    (default the rate-optimal bandwidth) are used.
    """
    ns = report.n_values
    if len(ns) < 3:
        raise ConfigurationError("rate regression needs at least three sample sizes")
    rule = h_rule or rate_bandwidth
    m = report.m
    samples = []
    for n in ns:
        target = rule(n, m)
        hs = np.unique(report.column("h", n))
        h = hs[np.argmin(np.abs(np.log(hs / target)))]
        vals = np.array([r[norm_field] for r in report.rows if r["n"] == n and r["h"] == h])
        samples.append(vals)
    x = np.array([math.log(n) / n for n in ns])
    slope = log_log_slope(x, [np.median(v) for v in samples])
    rng = np.random.default_rng(seed)
    boots = np.empty(n_boot)
    for b in range(n_boot):
        med = [np.median(v[rng.integers(0, v.size, v.size)]) for v in samples]
        boots[b] = log_log_slope(x, med)
    lo, hi = np.quantile(boots, [0.05, 0.95])
    return SlopeEstimate(slope, float(lo), float(hi))


def remainder_scaling(report: RateReport) -> dict:
    """Compare the two candidate h-exponents for the remainder's sup-norm.

    Returns slopes on ``log n`` of the median remainder, the median kernel sum
    and the remainder scaled by ``h^{-1/2}(nh)^{-1}`` and by ``h^{-1}(nh)^{-1}``
    (each at the bandwidth nearest the rate-optimal one); the better-fitting
    exponent is the one whose scaled slope is closer to zero.
    """
    ns = report.n_values
    m = report.m
    med = {"eps": [], "psi": [], "half": [], "one": []}
    for n in ns:
        hs = np.unique(report.column("h", n))
        h = hs[np.argmin(np.abs(np.log(hs / rate_bandwidth(n, m))))]
        rows = [r for r in report.rows if r["n"] == n and r["h"] == h]
        eps = np.array([r["eps_sup"] for r in rows])
        psi = np.array([r["psi_sup"] for r in rows])
        med["eps"].append(np.median(eps))
        med["psi"].append(np.median(psi))
        med["half"].append(np.median(eps) / (h**-0.5 / (n * h)))
        med["one"].append(np.median(eps) / (1.0 / (n * h * h)))
    slopes = {k: log_log_slope(ns, v) for k, v in med.items()}
    slopes["better_exponent"] = "h^-1/2" if abs(slopes["half"]) <= abs(slopes["one"]) else "h^-1"
    return slopes


# --------------------------------------------------------------------------
# confidence bands


def band_halfwidth(n: int, h: float, Q: float) -> float:
    """``Q sqrt((nh)^{-1} max(log(1/h), log log n))``."""
    return Q * math.sqrt(log_factor(n, h) / (n * h))


def confidence_band(
    fit: SplineFit,
    Q: float,
    kappa: float = 4.0,
    gamma: float = 1.0,
) -> tuple[GridFunction, GridFunction]:
    """Uniform band ``f^{nh} +- half-width`` around a fit.

    Refuses bandwidths outside the F-range, where the bias is not negligible
    compared with the band's width.
    """
    if Q < 0:
        raise ConfigurationError("Q must be nonnegative")
    n, h, m = fit.n, fit.h, fit.m
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        try:
            lo, hi = bandwidth_interval("F", n, gamma, kappa, None, m)
        except ConfigurationError as exc:
            raise ConfigurationError(f"h outside F-range: bias not negligible ({exc})") from None
    if not lo <= h <= hi:
        raise ConfigurationError(
            f"h outside F-range: bias not negligible (h={h:.6g}, F-range [{lo:.6g}, {hi:.6g}])"
        )
    half = band_halfwidth(n, h, Q)
    return fit.function - half, fit.function + half


def qf_ratio(fit: SplineFit, truth: GridFunction) -> float:
    """``||f^{nh} - f_o||_inf / sqrt((nh)^{-1} L)``."""
    return (fit.function - truth).sup_norm() / band_halfwidth(fit.n, fit.h, 1.0)


def _band_fits(model: ModelConfig, m: int, h: float, trials: int, seed: int, stream: int):
    grid = model.density.grid
    for t in range(trials):
        sample = sample_regression(model, np.random.SeedSequence(seed, spawn_key=(stream, t)))
        yield SplineSolver(grid, sample.x, m, h).fit(sample.y)


def calibrate_band(model: ModelConfig, m: int, h: float, trials: int, seed: int, level: float = 0.95) -> float:
    """Empirical ``level`` quantile of the ``QF`` ratio over independent samples."""
    truth = model.regression.on(model.density.grid)
    ratios = [qf_ratio(fit, truth) for fit in _band_fits(model, m, h, trials, seed, 0)]
    return float(np.quantile(ratios, level))


def band_coverage(model: ModelConfig, m: int, h: float, Q: float, trials: int, seed: int, kappa: float = 4.0) -> float:
    """Fraction of fresh samples whose band covers ``f_o`` at every grid node."""
    truth = model.regression.on(model.density.grid)
    covered = 0
    for fit in _band_fits(model, m, h, trials, seed, 1):
        lower, upper = confidence_band(fit, Q, kappa)
        covered += bool(np.all(lower.values <= truth.values) and np.all(truth.values <= upper.values))
    return covered / trials
