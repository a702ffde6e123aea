"""Exact null distributions of discrete p-values.

Two null models are supported. ``Conditional`` fixes both margins of the
table, so the top-left cell is hypergeometric. ``Unconditional`` draws each
group's "yes" count from an independent binomial with a common probability,
which is how a freshly randomized trial would actually behave.
"""

from dataclasses import dataclass
import io
import math
from typing import List, Sequence, Tuple, Union

import numpy as np

from .exact_tests import (
    DEFAULT_TOLERANCE,
    Direction,
    TestKind,
    TieTolerance,
    support_pvalues_2x2,
    _TailTable,
    rxc_logpmf_support,
)
from .numerics import log_factorial
from .tables import DEFAULT_ENUMERATION_CAP, EnumerationCapExceeded, Marginals

__all__ = [
    "ATOM_MERGE_TOL",
    "Conditional",
    "PValueDistribution",
    "Unconditional",
    "binomial_logpmf",
    "cdf",
    "conditional_distribution",
    "curve_csv",
    "curve_points",
    "expectation",
    "expected_mean_pvalue",
    "pvalue_matrix",
    "unconditional_distribution",
    "uniform_mean_reference",
]

ATOM_MERGE_TOL = 1e-12


@dataclass(frozen=True)
class Unconditional:
    n1: int
    n2: int
    p_yes: float

    def __post_init__(self):
        if not 0.0 < self.p_yes < 1.0:
            raise ValueError(f"p_yes must lie strictly inside (0, 1), got {self.p_yes!r}")
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("group sizes must be at least 1")


@dataclass(frozen=True)
class Conditional:
    marginals: Marginals


NullModel = Union[Unconditional, Conditional]


@dataclass(frozen=True)
class PValueDistribution:
    """Finite distribution of a p-value: sorted distinct values and their masses."""

    pvalues: Tuple[float, ...]
    masses: Tuple[float, ...]
    model: NullModel
    test: TestKind
    direction: Direction

    def __post_init__(self):
        if len(self.pvalues) != len(self.masses) or not self.pvalues:
            raise ValueError("a distribution needs matching, non-empty atoms")
        if any(b <= a for a, b in zip(self.pvalues, self.pvalues[1:])):
            raise ValueError("atom p-values must be strictly increasing")
        if self.pvalues[0] < 0.0 or self.pvalues[-1] > 1.0:
            raise ValueError("atom p-values must lie in [0, 1]")
        if min(self.masses) < 0.0 or abs(math.fsum(self.masses) - 1.0) > 1e-10:
            raise ValueError("atom masses must be non-negative and sum to 1")

    @property
    def atoms(self) -> List[Tuple[float, float]]:
        return list(zip(self.pvalues, self.masses))


def _merge_atoms(pvalues, weights):
    """Sort, then merge p-values within ATOM_MERGE_TOL of the first in a run."""
    pvalues = np.asarray(pvalues, dtype=np.float64).ravel()
    weights = np.asarray(weights, dtype=np.float64).ravel()
    keep = weights > 0.0
    pvalues, weights = pvalues[keep], weights[keep]
    order = np.argsort(pvalues, kind="stable")
    pvalues, weights = pvalues[order], weights[order]
    out_p, out_w = [], []
    start = 0
    n = len(pvalues)
    while start < n:
        stop = int(np.searchsorted(pvalues, pvalues[start] + ATOM_MERGE_TOL, side="right"))
        out_p.append(float(pvalues[start]))
        out_w.append(math.fsum(weights[start:stop]))
        start = stop
    total = math.fsum(out_w)
    return tuple(out_p), tuple(w / total for w in out_w)


def conditional_distribution(
    m: Marginals,
    test=TestKind.FISHER,
    direction=Direction.STANDARD,
    tol: TieTolerance = DEFAULT_TOLERANCE,
    cap: int = DEFAULT_ENUMERATION_CAP,
) -> PValueDistribution:
    """Distribution of the p-value over all tables sharing the marginals ``m``."""
    test, direction = TestKind(test), Direction(direction)
    if m.is_2x2:
        _, pvals, logpmf = support_pvalues_2x2(m, test, direction, tol)
    else:
        if test is not TestKind.FISHER:
            raise ValueError("R x C tables only support Fisher's exact test")
        logpmf = rxc_logpmf_support(m, cap)
        pvals = _TailTable(logpmf).mass(logpmf, direction, tol.rel_eps)
    weights = np.exp(logpmf - logpmf.max())
    pv, w = _merge_atoms(pvals, weights)
    return PValueDistribution(pv, w, Conditional(m), test, direction)


def binomial_logpmf(k, n: int, p: float):
    k = np.asarray(k)
    return (
        log_factorial(n) - log_factorial(k) - log_factorial(n - k)
        + k * math.log(p) + (n - k) * math.log1p(-p)
    )


def pvalue_matrix(
    n1: int,
    n2: int,
    test=TestKind.FISHER,
    direction=Direction.STANDARD,
    tol: TieTolerance = DEFAULT_TOLERANCE,
) -> np.ndarray:
    """p-values of every 2x2 table with group sizes ``n1``/``n2``, indexed ``[k1, k2]``."""
    if (n1 + 1) * (n2 + 1) > DEFAULT_ENUMERATION_CAP:
        raise EnumerationCapExceeded((n1 + 1) * (n2 + 1), DEFAULT_ENUMERATION_CAP)
    out = np.empty((n1 + 1, n2 + 1), dtype=np.float64)
    n = n1 + n2
    for s in range(n + 1):
        k1, pvals, _ = support_pvalues_2x2(Marginals((s, n - s), (n1, n2)), test, direction, tol)
        out[k1, s - k1] = pvals
    return out


def unconditional_distribution(
    n1: int,
    n2: int,
    p_yes: float,
    test=TestKind.FISHER,
    direction=Direction.STANDARD,
    tol: TieTolerance = DEFAULT_TOLERANCE,
) -> PValueDistribution:
    """Distribution of the p-value over all ``(n1+1)(n2+1)`` tables under independent binomials."""
    model = Unconditional(n1, n2, p_yes)
    test, direction = TestKind(test), Direction(direction)
    pvals = pvalue_matrix(n1, n2, test, direction, tol)
    w1 = np.exp(binomial_logpmf(np.arange(n1 + 1), n1, p_yes))
    w2 = np.exp(binomial_logpmf(np.arange(n2 + 1), n2, p_yes))
    pv, w = _merge_atoms(pvals, np.outer(w1, w2))
    return PValueDistribution(pv, w, model, test, direction)


def cdf(d: PValueDistribution, alpha: float) -> float:
    """``P(p <= alpha)``."""
    if not 0.0 <= alpha <= 1.0:
        raise ValueError("alpha must lie in [0, 1]")
    idx = int(np.searchsorted(d.pvalues, alpha, side="right"))
    return min(1.0, math.fsum(d.masses[:idx]))


def expectation(d: PValueDistribution) -> float:
    return math.fsum(p * w for p, w in d.atoms)


def curve_points(d: PValueDistribution) -> List[Tuple[float, float]]:
    """Corner points of the right-continuous step CDF on [0, 1].

    Between consecutive points the CDF keeps the left point's value, i.e.
    draw with ``steps-post``. The first point is always alpha = 0 and the
    last alpha = 1.
    """
    points = [(0.0, cdf(d, 0.0))]
    running = []
    for p, w in d.atoms:
        running.append(w)
        if p > 0.0:
            points.append((p, min(1.0, math.fsum(running))))
    if points[-1][0] < 1.0:
        points.append((1.0, 1.0))
    return points


def curve_csv(d: PValueDistribution) -> str:
    """CSV text with header ``alpha,cdf,reference``; reference is the uniform CDF."""
    buf = io.StringIO()
    buf.write("alpha,cdf,reference\n")
    for alpha, value in curve_points(d):
        buf.write(f"{alpha!r},{value!r},{alpha!r}\n")
    return buf.getvalue()


def expected_mean_pvalue(
    marginal_sets: Sequence[Marginals],
    test=TestKind.FISHER,
    direction=Direction.STANDARD,
    tol: TieTolerance = DEFAULT_TOLERANCE,
) -> float:
    """Exact null expectation of the average p-value across several tables."""
    if not marginal_sets:
        raise ValueError("need at least one marginal set")
    return math.fsum(
        expectation(conditional_distribution(m, test, direction, tol)) for m in marginal_sets
    ) / len(marginal_sets)


def uniform_mean_reference(n: int) -> Tuple[float, float]:
    """Mean and standard deviation of the average of ``n`` independent uniforms."""
    if n < 1:
        raise ValueError("n must be positive")
    return 0.5, 1.0 / math.sqrt(12.0 * n)
