"""Combining per-variable p-values.

The two *formulas* (Stouffer, Fisher) turn independent uniform p-values into a
uniform combined p-value. The two *statistics* (Stouffer sum of z-scores,
log-sum) are what the corrected screening method feeds into a Monte Carlo null
instead, because discrete p-values are nowhere near uniform.

All functions accept any 1-D sequence, or a 2-D array whose last axis holds
the p-values of one analysis (one row per simulation).
"""

from enum import Enum

import numpy as np

from .numerics import chi_square_sf, std_normal_cdf, std_normal_quantile

__all__ = [
    "BROWN_CAP",
    "CombinationMethod",
    "brown_adjust",
    "combine",
    "fisher_combine",
    "log_sum_statistic",
    "stouffer_combine",
    "stouffer_statistic",
]

BROWN_CAP = 0.98


class CombinationMethod(str, Enum):
    STOUFFER_FORMULA = "stouffer"
    FISHER_FORMULA = "fisher"
    BROWN_STOUFFER = "brown"
    LOG_SUM = "logsum"
    STOUFFER_STATISTIC = "stouffer-statistic"


def _as_pvalues(ps, allow_zero=True):
    arr = np.asarray(ps, dtype=np.float64)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.shape[-1] == 0:
        raise ValueError("cannot combine an empty list of p-values")
    lower_ok = arr >= 0.0 if allow_zero else arr > 0.0
    if not np.all(lower_ok & (arr <= 1.0)):
        raise ValueError("p-values must lie in [0, 1]")
    return arr


def _reduce(out, arr):
    return float(out) if arr.ndim == 1 else out


def _z_scores(arr):
    """Phi^-1 extended to [0, 1]: 0 -> -inf, 1 -> +inf."""
    z = np.empty_like(arr)
    inner = (arr > 0.0) & (arr < 1.0)
    z[inner] = std_normal_quantile(arr[inner])
    z[arr == 0.0] = -np.inf
    z[arr == 1.0] = np.inf
    return z


def stouffer_statistic(ps):
    """Sum of z-scores; +inf as soon as one p-value is 1."""
    arr = _as_pvalues(ps)
    z = _z_scores(arr)
    has_one = np.any(arr == 1.0, axis=-1)
    with np.errstate(invalid="ignore"):
        total = z.sum(axis=-1)
    total = np.where(has_one, np.inf, total)
    return _reduce(total, arr)


def stouffer_combine(ps):
    """Stouffer's combined p-value ``Phi(sum(Phi^-1(p_i)) / sqrt(n))``.

    Uses the continuous extension of Phi to [-inf, inf]: any p_i equal to 1
    forces the result to exactly 1, otherwise any p_i equal to 0 forces 0.
    """
    arr = _as_pvalues(ps)
    n = arr.shape[-1]
    stat = np.asarray(stouffer_statistic(arr))
    has_one = np.any(arr == 1.0, axis=-1)
    has_zero = np.any(arr == 0.0, axis=-1)
    with np.errstate(invalid="ignore"):
        out = std_normal_cdf(stat / np.sqrt(n))
    out = np.where(has_one, 1.0, np.where(has_zero, 0.0, out))
    return _reduce(out, arr)


def log_sum_statistic(ps):
    """Sum of ln(p_i); -inf if any p_i is 0, 0 if all are 1."""
    arr = _as_pvalues(ps)
    with np.errstate(divide="ignore"):
        out = np.log(arr).sum(axis=-1)
    return _reduce(out, arr)


def fisher_combine(ps):
    """Fisher's combined p-value ``P(chi2(2n) >= -2 sum ln p_i)``."""
    arr = _as_pvalues(ps)
    n = arr.shape[-1]
    stat = -2.0 * np.asarray(log_sum_statistic(arr))
    out = np.where(np.isinf(stat), 0.0, chi_square_sf(np.where(np.isinf(stat), 0.0, stat), 2 * n))
    return _reduce(out, arr)


def brown_adjust(ps, cap: float = BROWN_CAP):
    """Replace p-values above ``cap`` with ``cap`` (N. Brown's ad hoc fix for Stouffer)."""
    if not 0.0 < cap < 1.0:
        raise ValueError(f"cap must lie in (0, 1), got {cap!r}")
    arr = np.asarray(ps, dtype=np.float64)
    return np.minimum(arr, cap)


def combine(ps, method, cap: float = BROWN_CAP):
    """Dispatch to a combination formula or statistic by :class:`CombinationMethod`."""
    method = CombinationMethod(method)
    if method is CombinationMethod.STOUFFER_FORMULA:
        return stouffer_combine(ps)
    if method is CombinationMethod.FISHER_FORMULA:
        return fisher_combine(ps)
    if method is CombinationMethod.BROWN_STOUFFER:
        return stouffer_combine(brown_adjust(ps, cap))
    if method is CombinationMethod.LOG_SUM:
        return log_sum_statistic(ps)
    return stouffer_statistic(ps)
