"""Monte Carlo null distributions of combined statistics.

Randomness is derived per block of simulations from ``(seed, stream, block)``
through numpy's Philox counter-based generator, so a run is bit-identical for
any number of workers: workers only decide *who* computes a block, never what
the block contains.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import itertools
import math
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import stats

from .combination import (
    BROWN_CAP,
    CombinationMethod,
    brown_adjust,
    fisher_combine,
    stouffer_combine,
    _z_scores,
)
from .distributions import pvalue_matrix
from .exact_tests import (
    DEFAULT_TOLERANCE,
    Direction,
    TestKind,
    TieTolerance,
    _TailTable,
    rxc_logpmf_support,
    support_pvalues_2x2,
)
from .tables import DEFAULT_ENUMERATION_CAP, EnumerationCapExceeded, Marginals, Table2x2, TableRxC

__all__ = [
    "BLOCK_SIZE",
    "Figure6Result",
    "MonteCarloResult",
    "RngSeed",
    "TabularNull",
    "UniformNull",
    "block_generator",
    "exhaustive_combined_p",
    "mc_p_estimate",
    "observed_statistic",
    "sample_conditional_table",
    "simulate_combined_null",
    "simulate_figure6",
]

BLOCK_SIZE = 4096
RNG_SCHEME = "philox-seedseq-block4096-v1"
EXHAUSTIVE_CAP = 10**6


@dataclass(frozen=True)
class RngSeed:
    seed: int
    scheme: str = RNG_SCHEME

    def __post_init__(self):
        if not 0 <= int(self.seed) < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        if self.scheme != RNG_SCHEME:
            raise ValueError(f"unknown stream-derivation scheme {self.scheme!r}")


def block_generator(seed: RngSeed, stream: int, block: int) -> np.random.Generator:
    """Independent generator for one block of simulations."""
    seq = np.random.SeedSequence(entropy=int(seed.seed), spawn_key=(int(stream), int(block)))
    return np.random.Generator(np.random.Philox(seq))


def _blocks(n_sims: int):
    return [(b, min(BLOCK_SIZE, n_sims - b * BLOCK_SIZE)) for b in range(math.ceil(n_sims / BLOCK_SIZE))]


def _map_blocks(fn, n_sims, workers):
    blocks = _blocks(n_sims)
    if workers <= 1 or len(blocks) == 1:
        return [fn(b, size) for b, size in blocks]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda bs: fn(*bs), blocks))


# -- sampling -------------------------------------------------------------------

def sample_conditional_table(m: Marginals, rng: np.random.Generator) -> Union[Table2x2, TableRxC]:
    """Draw one table with marginals ``m`` from the conditional (hypergeometric) null."""
    if m.is_2x2:
        s = m.row_totals[0]
        n1, n2 = m.col_totals
        k1 = int(rng.hypergeometric(n1, n2, s)) if s else 0
        return Table2x2(k1, s - k1, n1, n2)
    remaining = np.array(m.row_totals, dtype=np.int64)
    columns = []
    for c in m.col_totals[:-1]:
        col = rng.multivariate_hypergeometric(remaining, c, method="marginals")
        remaining = remaining - col
        columns.append(col)
    columns.append(remaining)
    return TableRxC(tuple(tuple(int(v) for v in row) for row in np.column_stack(columns)))


@dataclass(frozen=True)
class TabularNull:
    """Conditional null for one dichotomous or categorical variable."""

    marginals: Marginals
    test: TestKind = TestKind.FISHER


@dataclass(frozen=True)
class UniformNull:
    """Continuous variable whose p-value is taken to be exactly uniform under the null."""


VariableNull = Union[TabularNull, UniformNull]


class _TabularSampler:
    """Exact p-values over a variable's conditional support plus a way to draw from it."""

    def __init__(self, spec: TabularNull, direction, tol, cap):
        m = spec.marginals
        self.is_2x2 = m.is_2x2
        if self.is_2x2:
            k1, pvals, logpmf = support_pvalues_2x2(m, spec.test, direction, tol)
            self.offset = int(k1[0])
            self.s = m.row_totals[0]
            self.n1, self.n2 = m.col_totals
        else:
            if TestKind(spec.test) is not TestKind.FISHER:
                raise ValueError("R x C variables only support Fisher's exact test")
            logpmf = rxc_logpmf_support(m, cap)
            pvals = _TailTable(logpmf).mass(logpmf, direction, tol.rel_eps)
            probs = np.exp(logpmf - logpmf.max())
            self.cum = np.cumsum(probs / probs.sum())
            self.cum[-1] = 1.0
        self.pvalues = np.asarray(pvals)
        self.logpmf = np.asarray(logpmf)

    def draw(self, rng, size):
        if self.is_2x2:
            if self.s == 0:
                idx = np.zeros(size, dtype=np.int64)
            else:
                idx = rng.hypergeometric(self.n1, self.n2, self.s, size=size) - self.offset
        else:
            # R x C: inverse-CDF draw of the table index in enumeration order.
            idx = np.searchsorted(self.cum, rng.random(size), side="right")
        return self.pvalues[idx]


def _statistic(pmat, statistic):
    if statistic is CombinationMethod.LOG_SUM:
        with np.errstate(divide="ignore"):
            return np.log(pmat).sum(axis=-1)
    z = _z_scores(pmat)
    with np.errstate(invalid="ignore"):
        total = z.sum(axis=-1)
    return np.where(np.any(pmat == 1.0, axis=-1), np.inf, total)


def observed_statistic(pvalues: Sequence[float], statistic=CombinationMethod.LOG_SUM) -> float:
    """Combined statistic of observed p-values (log-sum or sum of z-scores)."""
    statistic = _check_statistic(statistic)
    return float(_statistic(np.asarray(pvalues, dtype=np.float64).reshape(1, -1), statistic)[0])


def _check_statistic(statistic):
    statistic = CombinationMethod(statistic)
    if statistic not in (CombinationMethod.LOG_SUM, CombinationMethod.STOUFFER_STATISTIC):
        raise ValueError(
            "Monte Carlo combination needs a test statistic (logsum or stouffer-statistic), "
            f"got {statistic.value!r}"
        )
    return statistic


def _tie_slack(observed):
    if not math.isfinite(observed):
        return 0.0
    return 1e-9 * max(1.0, abs(observed))


# -- estimators -----------------------------------------------------------------

def mc_p_estimate(exceed_count: int, n_sims: int, level: float = 0.95) -> Tuple[float, Tuple[float, float]]:
    """Add-one Monte Carlo p-value and a Clopper-Pearson interval.

    The estimate is ``(r + 1) / (n + 1)``; the interval is the exact binomial
    interval for the exceedance proportion ``r / n``, widened if needed so it
    contains the estimate.
    """
    r, n = int(exceed_count), int(n_sims)
    if n < 1 or not 0 <= r <= n:
        raise ValueError(f"need 0 <= exceed_count <= n_sims and n_sims >= 1, got {r}, {n}")
    estimate = (r + 1) / (n + 1)
    a = 1.0 - level
    lo = 0.0 if r == 0 else float(stats.beta.ppf(a / 2, r, n - r + 1))
    hi = 1.0 if r == n else float(stats.beta.ppf(1 - a / 2, r + 1, n - r))
    return estimate, (min(lo, estimate), max(hi, estimate))


@dataclass(frozen=True)
class MonteCarloResult:
    estimate: float
    exceed_count: int
    n_sims: int
    ci95: Tuple[float, float]
    observed_statistic: float
    seed: RngSeed
    statistic: str = CombinationMethod.LOG_SUM.value
    direction: str = Direction.REVERSE.value

    def __post_init__(self):
        expected, _ = mc_p_estimate(self.exceed_count, self.n_sims)
        if abs(expected - self.estimate) > 1e-15:
            raise ValueError("estimate must equal (exceed_count + 1) / (n_sims + 1)")
        lo, hi = self.ci95
        if not lo <= self.estimate <= hi:
            raise ValueError("confidence interval must contain the estimate")

    def ci(self, level: float) -> Tuple[float, float]:
        return mc_p_estimate(self.exceed_count, self.n_sims, level)[1]


def simulate_combined_null(
    variables: Sequence[VariableNull],
    observed: float,
    statistic=CombinationMethod.LOG_SUM,
    direction=Direction.REVERSE,
    n_sims: int = 10**6,
    seed: Union[int, RngSeed] = 0,
    *,
    tol: TieTolerance = DEFAULT_TOLERANCE,
    workers: int = 1,
    stream: int = 0,
    allow_degenerate: bool = False,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> MonteCarloResult:
    """Estimate ``P0(statistic <= observed)`` by simulating every variable under its null.

    Tabular variables are redrawn from their conditional (fixed-marginals)
    distribution and re-tested; continuous variables contribute uniform
    p-values. Small statistics are extreme in both directions: with REVERSE
    p-values they mean an overly balanced dataset, with STANDARD p-values an
    unusually imbalanced one. Simulated statistics tying the observed value
    count as exceedances.
    """
    statistic = _check_statistic(statistic)
    direction = Direction(direction)
    if direction is Direction.NAIVE_REVERSE:
        raise ValueError("the naive reverse is not a valid p-value for combined screening")
    if n_sims < 1:
        raise ValueError("n_sims must be at least 1")
    if not variables:
        raise ValueError("need at least one variable")
    seed = seed if isinstance(seed, RngSeed) else RngSeed(int(seed))

    samplers: List[Optional[_TabularSampler]] = []
    for spec in variables:
        if isinstance(spec, UniformNull):
            samplers.append(None)
        else:
            sampler = _TabularSampler(spec, direction, tol, cap)
            if (statistic is CombinationMethod.STOUFFER_STATISTIC and not allow_degenerate
                    and np.any(sampler.pvalues >= 1.0)):
                raise ValueError(
                    "a variable's null support contains p = 1, where the Stouffer statistic "
                    "is +inf; use the log-sum statistic or opt in with allow_degenerate"
                )
            samplers.append(sampler)

    threshold = observed + _tie_slack(observed)

    def run_block(block, size):
        rng = block_generator(seed, stream, block)
        pmat = np.empty((size, len(samplers)), dtype=np.float64)
        for j, sampler in enumerate(samplers):
            if sampler is None:
                pmat[:, j] = 1.0 - rng.random(size)  # in (0, 1]
            else:
                pmat[:, j] = sampler.draw(rng, size)
        return int(np.count_nonzero(_statistic(pmat, statistic) <= threshold))

    exceed = sum(_map_blocks(run_block, n_sims, workers))
    estimate, ci = mc_p_estimate(exceed, n_sims)
    return MonteCarloResult(estimate, exceed, n_sims, ci, float(observed), seed,
                            statistic.value, direction.value)


def exhaustive_combined_p(
    variables: Sequence[TabularNull],
    observed: float,
    statistic=CombinationMethod.LOG_SUM,
    direction=Direction.REVERSE,
    tol: TieTolerance = DEFAULT_TOLERANCE,
    cap: int = EXHAUSTIVE_CAP,
) -> float:
    """Exact ``P0(statistic <= observed)`` over the Cartesian product of all supports.

    Independent of the Monte Carlo path: every combination of tables is
    visited and weighted by the product of its hypergeometric probabilities.
    """
    statistic = _check_statistic(statistic)
    direction = Direction(direction)
    per_var = []
    size = 1
    for spec in variables:
        if not isinstance(spec, TabularNull):
            raise ValueError("exhaustive enumeration needs tabular variables only")
        m = spec.marginals
        if m.is_2x2:
            _, pvals, logpmf = support_pvalues_2x2(m, spec.test, direction, tol)
        else:
            logpmf = rxc_logpmf_support(m)
            pvals = _TailTable(logpmf).mass(logpmf, direction, tol.rel_eps)
        probs = np.exp(logpmf - logpmf.max())
        per_var.append((np.asarray(pvals), probs / probs.sum()))
        size *= len(probs)
    if size > cap:
        raise EnumerationCapExceeded(size, cap)

    threshold = observed + _tie_slack(observed)
    total = 0.0
    for combo in itertools.product(*(range(len(p)) for p, _ in per_var)):
        ps = [per_var[j][0][i] for j, i in enumerate(combo)]
        if statistic is CombinationMethod.LOG_SUM:
            value = math.fsum(math.log(p) for p in ps)
        elif any(p == 1.0 for p in ps):
            value = math.inf
        else:
            value = math.fsum(stats.norm.ppf(p) for p in ps)
        if value <= threshold:
            total += math.prod(per_var[j][1][i] for j, i in enumerate(combo))
    return min(1.0, total)


# -- Figure-6 style simulation of naive combination formulas --------------------

@dataclass
class Figure6Result:
    """Per-method summaries of combined p-values under the unconditional null.

    ``one_minus`` holds ``1 - combined`` for every simulation, the quantity
    whose CDF is plotted against the diagonal.
    """

    n_tables: int
    n1: int
    n2: int
    p_yes: float
    n_sims: int
    seed: RngSeed
    mean_combined: Dict[str, float] = field(default_factory=dict)
    mean_one_minus: Dict[str, float] = field(default_factory=dict)
    one_minus: Dict[str, np.ndarray] = field(default_factory=dict)

    def ecdf(self, method: str, alphas) -> np.ndarray:
        values = np.sort(self.one_minus[method])
        return np.searchsorted(values, np.asarray(alphas), side="right") / len(values)


_FIGURE6_METHODS = {
    "stouffer": stouffer_combine,
    "fisher": fisher_combine,
    "brown": None,
}


def simulate_figure6(
    n_tables: int = 20,
    n1: int = 100,
    n2: int = 100,
    p_yes: float = 0.5,
    n_sims: int = 100_000,
    seed: Union[int, RngSeed] = 0,
    methods: Sequence[str] = ("stouffer", "fisher", "brown"),
    *,
    test=TestKind.FISHER,
    brown_cap: float = BROWN_CAP,
    tol: TieTolerance = DEFAULT_TOLERANCE,
    workers: int = 1,
) -> Figure6Result:
    """Combine ``n_tables`` independent per-table p-values with the classical formulas.

    Each simulation draws fresh tables from independent binomials (margins
    vary), computes the per-table p-values, and combines them with Stouffer,
    Fisher, or Brown-capped Stouffer.
    """
    for method in methods:
        if method not in _FIGURE6_METHODS:
            raise ValueError(f"unknown method {method!r}; choose from {sorted(_FIGURE6_METHODS)}")
    if n_tables < 1 or n_sims < 1:
        raise ValueError("n_tables and n_sims must be positive")
    seed = seed if isinstance(seed, RngSeed) else RngSeed(int(seed))
    table = pvalue_matrix(n1, n2, test, Direction.STANDARD, tol)

    def run_block(block, size):
        rng = block_generator(seed, 0, block)
        k1 = rng.binomial(n1, p_yes, size=(size, n_tables))
        k2 = rng.binomial(n2, p_yes, size=(size, n_tables))
        ps = table[k1, k2]
        out = {}
        for method in methods:
            if method == "brown":
                out[method] = stouffer_combine(brown_adjust(ps, brown_cap))
            else:
                out[method] = _FIGURE6_METHODS[method](ps)
            out[method] = np.atleast_1d(out[method])
        return out

    parts = _map_blocks(run_block, n_sims, workers)
    result = Figure6Result(n_tables, n1, n2, p_yes, n_sims, seed)
    for method in methods:
        combined = np.concatenate([part[method] for part in parts])
        result.mean_combined[method] = float(combined.mean())
        result.one_minus[method] = 1.0 - combined
        result.mean_one_minus[method] = float(result.one_minus[method].mean())
    return result
