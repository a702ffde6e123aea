"""Screening analysis of one dataset and its machine-readable report."""

from dataclasses import asdict, dataclass, field
import json
import math
from typing import Any, Dict, List, Optional, Tuple

from .combination import CombinationMethod
from .dataset import TrialDataset, VariableKind, apply_tie_adjustment
from .distributions import conditional_distribution, expectation, uniform_mean_reference
from .exact_tests import (
    DEFAULT_TOLERANCE,
    Direction,
    TieTolerance,
    fisher_exact_p_rxc,
    support_pvalues_2x2,
    t_test_p,
    t_test_p_bounds,
)
from .simulation import (
    MonteCarloResult,
    RngSeed,
    TabularNull,
    UniformNull,
    simulate_combined_null,
    observed_statistic,
)
from .tables import Table2x2, marginals

__all__ = [
    "REPORT_VERSION",
    "AnalysisConfig",
    "AnalysisReport",
    "CombinedRecord",
    "VariableRecord",
    "analyze_dataset",
    "format_text",
]

REPORT_VERSION = 1

LIMITATION_WARNINGS = (
    "Combination assumes the baseline variables are independent; real baseline "
    "variables usually are not.",
    "Stratified or blocked randomization makes groups more similar than simple "
    "randomization, pushing p-values toward 1.",
    "This is a screening statistic, not a diagnostic one: it mostly detects "
    "transcription errors and typos, and has little power otherwise.",
    "Screening many tables or articles produces small p-values by chance; a single "
    "value below a conventional level such as 0.05 or 0.01 is weak evidence.",
    "Continuous variables enter with p-values assumed uniform under the null; "
    "rounded means and standard deviations and small-sample t-tests make this approximate.",
)

_STREAMS = {Direction.REVERSE: 0, Direction.STANDARD: 1}


@dataclass(frozen=True)
class AnalysisConfig:
    sims: int = 1_000_000
    seed: int = 0
    direction: str = "both"
    statistic: str = CombinationMethod.LOG_SUM.value
    tie_adjust: bool = False
    threshold: float = 1e-4
    rel_eps: float = DEFAULT_TOLERANCE.rel_eps
    equal_variance: bool = True
    allow_degenerate: bool = False
    workers: int = 1
    groupings: Tuple[Tuple[Tuple[str, ...], str], ...] = ()

    def directions(self) -> List[Direction]:
        if self.direction == "both":
            return [Direction.REVERSE, Direction.STANDARD]
        return [Direction(self.direction)]


@dataclass(frozen=True)
class VariableRecord:
    name: str
    kind: str
    test: str
    p_standard: float
    p_reverse: float
    degenerate: bool = False
    support_size: Optional[int] = None
    p_standard_min: Optional[float] = None
    p_standard_max: Optional[float] = None
    adjustments: Tuple[str, ...] = ()


@dataclass(frozen=True)
class CombinedRecord:
    direction: str
    result: MonteCarloResult
    below_threshold: bool


@dataclass(frozen=True)
class AnalysisReport:
    variables: Tuple[VariableRecord, ...]
    combined: Tuple[CombinedRecord, ...]
    config: AnalysisConfig
    groups: Tuple[Tuple[str, int], ...]
    summary: Dict[str, Any] = field(default_factory=dict)
    warnings: Tuple[str, ...] = LIMITATION_WARNINGS
    rng_scheme: str = ""
    report_version: int = REPORT_VERSION

    def to_dict(self) -> Dict[str, Any]:
        return _encode(asdict(self))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, allow_nan=False)

    @classmethod
    def from_dict(cls, doc: Dict[str, Any]) -> "AnalysisReport":
        doc = _decode(doc)
        if doc.get("report_version") != REPORT_VERSION:
            raise ValueError(f"unsupported report version {doc.get('report_version')!r}")
        cfg = dict(doc["config"])
        cfg["groupings"] = tuple((tuple(names), new) for names, new in cfg["groupings"])
        combined = []
        for rec in doc["combined"]:
            res = dict(rec["result"])
            res["ci95"] = tuple(res["ci95"])
            res["seed"] = RngSeed(**res["seed"])
            combined.append(CombinedRecord(rec["direction"], MonteCarloResult(**res), rec["below_threshold"]))
        variables = tuple(
            VariableRecord(**{**v, "adjustments": tuple(v["adjustments"])}) for v in doc["variables"]
        )
        return cls(
            variables=variables,
            combined=tuple(combined),
            config=AnalysisConfig(**cfg),
            groups=tuple((label, n) for label, n in doc["groups"]),
            summary=doc["summary"],
            warnings=tuple(doc["warnings"]),
            rng_scheme=doc["rng_scheme"],
            report_version=doc["report_version"],
        )

    @classmethod
    def from_json(cls, text: str) -> "AnalysisReport":
        return cls.from_dict(json.loads(text))


def _encode(obj):
    # JSON has no infinities; the log-sum statistic can be -inf.
    if isinstance(obj, float) and not math.isfinite(obj):
        return "+inf" if obj > 0 else ("-inf" if obj < 0 else "nan")
    if isinstance(obj, dict):
        return {k: _encode(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_encode(v) for v in obj]
    if hasattr(obj, "value") and isinstance(getattr(obj, "value"), str):
        return obj.value
    return obj


_SPECIAL = {"+inf": math.inf, "-inf": -math.inf, "nan": math.nan}


def _decode(obj):
    if isinstance(obj, str) and obj in _SPECIAL:
        return _SPECIAL[obj]
    if isinstance(obj, dict):
        return {k: _decode(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_decode(v) for v in obj]
    return obj


def _variable_pvalues(var, config, tol):
    """Return (record, null spec, p_standard, p_reverse) for one variable."""
    adjustments = list(var.adjustments)
    if var.kind is VariableKind.CONTINUOUS:
        summary = var.data
        p = t_test_p(summary, config.equal_variance)
        if config.tie_adjust and p.value == 1.0 and summary.mean[0] == summary.mean[1]:
            summary, changed = apply_tie_adjustment(summary)
            if changed:
                adjustments.append(
                    f"tie adjustment: means {var.data.mean[0]!r}/{var.data.mean[1]!r} "
                    f"-> {summary.mean[0]!r}/{summary.mean[1]!r}"
                )
                p = t_test_p(summary, config.equal_variance)
        lo, hi = t_test_p_bounds(summary, config.equal_variance)
        record = VariableRecord(
            var.name, var.kind.value, "welch" if not config.equal_variance else var.test,
            p.value, 1.0 - p.value, p.degenerate, None,
            lo.value if summary.decimals is not None else None,
            hi.value if summary.decimals is not None else None,
            tuple(adjustments),
        )
        return record, UniformNull(), p.value, 1.0 - p.value

    table = var.data
    m = marginals(table)
    if isinstance(table, Table2x2):
        k1, p_std, _ = support_pvalues_2x2(m, var.test_kind, Direction.STANDARD, tol)
        _, p_rev, _ = support_pvalues_2x2(m, var.test_kind, Direction.REVERSE, tol)
        idx = table.k1 - int(k1[0])
        ps, pr, size = float(p_std[idx]), float(p_rev[idx]), len(k1)
    else:
        ps = fisher_exact_p_rxc(table, tol, Direction.STANDARD).value
        pr = fisher_exact_p_rxc(table, tol, Direction.REVERSE).value
        size = None
    record = VariableRecord(var.name, var.kind.value, var.test, ps, pr, size == 1, size,
                            adjustments=tuple(adjustments))
    return record, TabularNull(m, var.test_kind), ps, pr


def analyze_dataset(ds: TrialDataset, config: AnalysisConfig = AnalysisConfig()) -> AnalysisReport:
    """Per-variable p-values in both directions plus Monte Carlo combined p-values."""
    tol = TieTolerance(config.rel_eps)
    records, specs, p_std, p_rev = [], [], [], []
    for var in ds.variables:
        record, spec, ps, pr = _variable_pvalues(var, config, tol)
        records.append(record)
        specs.append(spec)
        p_std.append(ps)
        p_rev.append(pr)

    combined = []
    statistic = CombinationMethod(
        "stouffer-statistic" if config.statistic in ("stouffer", "stouffer-statistic") else config.statistic
    )
    if statistic is CombinationMethod.STOUFFER_STATISTIC and not config.allow_degenerate:
        raise ValueError(
            "the Stouffer statistic is undefined when any p-value equals 1; "
            "pass allow_degenerate=True (--allow-degenerate) to use it anyway"
        )
    for direction in config.directions():
        observed = observed_statistic(p_rev if direction is Direction.REVERSE else p_std, statistic)
        result = simulate_combined_null(
            specs, observed, statistic, direction, config.sims, config.seed,
            tol=tol, workers=config.workers, stream=_STREAMS[direction],
            allow_degenerate=config.allow_degenerate,
        )
        combined.append(CombinedRecord(direction.value, result, result.estimate <= config.threshold))

    warnings = list(LIMITATION_WARNINGS)
    if any(r.adjustments for r in records):
        warnings.append("Some inputs were adjusted before testing; see the per-variable 'adjustments'.")
    if any(r.degenerate for r in records):
        warnings.append("Some variables are degenerate (single possible table or zero standard "
                        "deviations) and carry no information.")

    return AnalysisReport(
        variables=tuple(records),
        combined=tuple(combined),
        config=config,
        groups=tuple((g.label, g.n) for g in ds.groups),
        summary=_pvalue_summary(ds, records, tol),
        warnings=tuple(warnings),
        rng_scheme=combined[0].result.seed.scheme if combined else "",
    )


def _pvalue_summary(ds, records, tol):
    """Sample mean/variance of the standard p-values against reference values."""
    out: Dict[str, Any] = {}
    for kind in ("tabular", "continuous"):
        if kind == "tabular":
            chosen = [r for r in records if r.kind != VariableKind.CONTINUOUS.value]
        else:
            chosen = [r for r in records if r.kind == VariableKind.CONTINUOUS.value]
        if not chosen:
            continue
        values = [r.p_standard for r in chosen]
        n = len(values)
        mean = math.fsum(values) / n
        entry = {
            "count": n,
            "mean": mean,
            "sample_variance": (math.fsum((v - mean) ** 2 for v in values) / (n - 1)) if n > 1 else None,
            "uniform_mean": uniform_mean_reference(n)[0],
            "uniform_mean_sd": uniform_mean_reference(n)[1],
            "uniform_variance": 1.0 / 12.0,
        }
        if kind == "tabular":
            # Exact conditional expectation, each table under its own margins and test.
            means = []
            for r in chosen:
                var = ds.variable(r.name)
                d = conditional_distribution(marginals(var.data), var.test_kind, Direction.STANDARD, tol)
                means.append(expectation(d))
            entry["exact_null_mean"] = math.fsum(means) / n
        out[kind] = entry
    return out


def format_text(report: AnalysisReport) -> str:
    """Human-readable summary of a report."""
    lines = []
    name_w = max(8, max(len(r.name) for r in report.variables))
    lines.append(f"{'variable':<{name_w}}  {'kind':<11}  {'test':<11}  {'p standard':>11}  {'p reverse':>11}")
    for r in report.variables:
        flag = "  (degenerate)" if r.degenerate else ""
        lines.append(
            f"{r.name:<{name_w}}  {r.kind:<11}  {r.test:<11}  {r.p_standard:>11.4g}  {r.p_reverse:>11.4g}{flag}"
        )
        for adj in r.adjustments:
            lines.append(f"{'':<{name_w}}  note: {adj}")
    lines.append("")
    cfg = report.config
    for c in report.combined:
        res = c.result
        label = "over-balance (reverse)" if c.direction == "reverse" else "imbalance (standard)"
        lines.append(
            f"combined {label}: p = {res.estimate:.4g}{_one_in(res.estimate)}, "
            f"95% CI [{res.ci95[0]:.4g}, {res.ci95[1]:.4g}], {res.n_sims:,} simulations"
        )
        relation = "below" if c.below_threshold else "not below"
        lines.append(f"  {relation} the configured flagging threshold {cfg.threshold:g}")
    lines.append("")
    lines.append(f"seed {cfg.seed}, statistic {cfg.statistic}, tie tolerance {cfg.rel_eps:g}")
    lines.append("")
    lines.append("limitations:")
    lines.extend(f"  - {w}" for w in report.warnings)
    return "\n".join(lines)


def _one_in(p: float) -> str:
    return f" (about 1 in {1.0 / p:,.0f})" if p < 0.1 else ""
