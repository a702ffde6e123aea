"""Special functions used by the exact tests and the combination formulas.

Everything here accepts scalars or numpy arrays. Scalars come back as plain
floats so callers can compare them with ``==`` without surprises.
"""

import math

import numpy as np
from scipy import special

__all__ = [
    "log_factorial",
    "std_normal_cdf",
    "std_normal_sf",
    "std_normal_quantile",
    "chi_square_sf",
    "student_t_sf",
]

# ln(n!) for n below this bound is served from a table built at import time.
_TABLE_SIZE = 1 << 16
_LOG_FACTORIAL_TABLE = special.gammaln(np.arange(_TABLE_SIZE, dtype=np.float64) + 1.0)
_LOG_FACTORIAL_TABLE[:2] = 0.0
_LOG_FACTORIAL_TABLE.setflags(write=False)

_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)
_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _scalar_or_array(out, like):
    if np.ndim(like) == 0:
        return float(out)
    return out


def _stirling_log_factorial(n):
    # Stirling series for ln Gamma(n + 1); the truncation error is below
    # n**-9 / 1188, i.e. invisible in double precision for n >= 2**16.
    n = np.asarray(n, dtype=np.float64)
    inv = 1.0 / n
    inv2 = inv * inv
    series = inv * (1.0 / 12.0 - inv2 * (1.0 / 360.0 - inv2 * (1.0 / 1260.0 - inv2 / 1680.0)))
    return (n + 0.5) * np.log(n) - n + _HALF_LOG_2PI + series


def log_factorial(n):
    """Natural log of ``n!`` for non-negative integer ``n`` (scalar or array)."""
    arr = np.asarray(n)
    if arr.dtype.kind not in "iu":
        if not np.all(np.equal(np.mod(arr, 1), 0)):
            raise ValueError("log_factorial needs integer arguments")
        arr = arr.astype(np.int64)
    if np.any(arr < 0):
        raise ValueError("log_factorial needs non-negative arguments")
    small = arr < _TABLE_SIZE
    if np.all(small):
        out = _LOG_FACTORIAL_TABLE[arr]
    else:
        out = np.empty(arr.shape, dtype=np.float64)
        out[small] = _LOG_FACTORIAL_TABLE[arr[small]]
        out[~small] = _stirling_log_factorial(arr[~small])
    return _scalar_or_array(out, n)


def std_normal_cdf(x):
    """Standard normal CDF."""
    x = np.asarray(x, dtype=np.float64)
    return _scalar_or_array(0.5 * special.erfc(-x / _SQRT2), x)


def std_normal_sf(x):
    """Standard normal upper tail ``1 - cdf(x)``, accurate far into the tail."""
    x = np.asarray(x, dtype=np.float64)
    return _scalar_or_array(0.5 * special.erfc(x / _SQRT2), x)


# Acklam's rational approximation (relative error ~1.15e-9 before refinement).
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def _acklam(p):
    x = np.empty_like(p)
    lo = p < _P_LOW
    hi = p > 1.0 - _P_LOW
    mid = ~(lo | hi)

    q = p[mid] - 0.5
    r = q * q
    num = ((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]
    den = ((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0
    x[mid] = q * num / den

    for mask, sign, tail in ((lo, 1.0, p[lo]), (hi, -1.0, 1.0 - p[hi])):
        q = np.sqrt(-2.0 * np.log(tail))
        num = ((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]
        den = (((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0
        x[mask] = sign * num / den
    return x


def std_normal_quantile(p):
    """Inverse of :func:`std_normal_cdf` on the open interval (0, 1).

    Acklam's rational approximation followed by one Halley step against the
    erfc-based CDF. Raises ``ValueError`` for ``p`` outside (0, 1); callers that
    need the extended values at 0 and 1 handle those explicitly.
    """
    arr = np.asarray(p, dtype=np.float64)
    if np.any(~((arr > 0.0) & (arr < 1.0))):
        raise ValueError("std_normal_quantile is defined on the open interval (0, 1)")
    flat = arr.reshape(-1)
    x = _acklam(flat)
    # Halley refinement. cdf(x) - p is evaluated from the nearer tail; 1 - p is
    # exact for p >= 0.5.
    with np.errstate(over="ignore", invalid="ignore"):
        resid = np.where(x < 0,
                         0.5 * special.erfc(-x / _SQRT2) - flat,
                         (1.0 - flat) - 0.5 * special.erfc(x / _SQRT2))
        u = resid * _SQRT_2PI * np.exp(0.5 * x * x)
        step = u / (1.0 + 0.5 * x * u)
        x = np.where(np.isfinite(step), x - step, x)
    return _scalar_or_array(x.reshape(arr.shape), p)


def chi_square_sf(x, df):
    """Upper tail ``P(chi2(df) >= x)`` via the regularized upper incomplete gamma."""
    x = np.asarray(x, dtype=np.float64)
    if np.any(x < 0):
        raise ValueError("chi-square statistic must be non-negative")
    if np.any(np.asarray(df) <= 0):
        raise ValueError("degrees of freedom must be positive")
    return _scalar_or_array(special.gammaincc(0.5 * np.asarray(df, dtype=np.float64), 0.5 * x), x)


def student_t_sf(t, df):
    """Upper tail ``P(T_df >= t)`` of Student's t via the regularized incomplete beta."""
    t = np.asarray(t, dtype=np.float64)
    df = np.asarray(df, dtype=np.float64)
    if np.any(df <= 0):
        raise ValueError("degrees of freedom must be positive")
    t2 = t * t
    denom = df + t2
    # P(|T| >= |t|) = I_{df/(df+t^2)}(df/2, 1/2) = 1 - I_{t^2/(df+t^2)}(1/2, df/2);
    # pick whichever argument is not close to 1.
    with np.errstate(invalid="ignore", divide="ignore"):
        two_tail = np.where(
            t2 > df,
            special.betainc(0.5 * df, 0.5, df / denom),
            special.betaincc(0.5, 0.5 * df, t2 / denom),
        )
    upper = np.where(t >= 0, 0.5 * two_tail, 1.0 - 0.5 * two_tail)
    upper = np.where(np.isinf(t), np.where(t > 0, 0.0, 1.0), upper)
    return _scalar_or_array(upper, t)
