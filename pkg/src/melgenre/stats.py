"""Paired comparison statistics: Shapiro-Wilk, paired t-test, Q-Q coordinates.

Special functions are implemented here rather than imported:

* regularized incomplete beta by Lentz's continued fraction, which gives the
  Student-t CDF;
* inverse normal CDF by Acklam's rational approximation plus one Halley
  step against ``math.erfc``;
* Shapiro-Wilk W and its p-value following Royston's 1995 algorithm
  (AS R94), without censoring.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class DegenerateSampleError(ValueError):
    pass


class SampleSizeError(ValueError):
    pass


# --- special functions --------------------------------------------------------

_CF_EPS = 1e-16
_CF_TINY = 1e-300
_CF_MAX_ITER = 10_000


def _beta_cf(a: float, b: float, x: float) -> float:
    """Continued fraction for I_x(a, b) (modified Lentz)."""
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    d = 1.0 / (d if abs(d) > _CF_TINY else _CF_TINY)
    h = d
    for m in range(1, _CF_MAX_ITER + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _CF_TINY if abs(d) < _CF_TINY else d
        c = 1.0 + aa / c
        c = _CF_TINY if abs(c) < _CF_TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _CF_EPS:
            return h
    raise ArithmeticError(f"incomplete beta continued fraction did not converge (a={a}, b={b}, x={x})")


def betainc(a: float, b: float, x: float, xc: float | None = None) -> float:
    """Regularized incomplete beta I_x(a, b).

    ``xc`` may carry ``1 - x`` computed without cancellation by the caller.
    """
    if a <= 0 or b <= 0:
        raise ValueError("betainc needs a > 0 and b > 0")
    if xc is None:
        xc = 1.0 - x
    if not 0.0 <= x <= 1.0:
        raise ValueError(f"betainc argument {x} outside [0, 1]")
    if x == 0.0:
        return 0.0
    if xc == 0.0:
        return 1.0
    log_front = (math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                 + a * math.log(x) + b * math.log(xc))
    if x < (a + 1.0) / (a + b + 2.0):
        return math.exp(log_front) * _beta_cf(a, b, x) / a
    return 1.0 - math.exp(log_front) * _beta_cf(b, a, xc) / b


def student_t_sf2(t: float, df: float) -> float:
    """Two-sided tail probability P(|T| >= |t|)."""
    if df <= 0:
        raise ValueError("degrees of freedom must be positive")
    if math.isinf(t):
        return 0.0
    t2 = t * t
    return betainc(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2))


def student_t_cdf(x: float, df: float) -> float:
    tail = 0.5 * student_t_sf2(x, df)
    return 1.0 - tail if x > 0 else tail


def norm_cdf(x: float) -> float:
    return 0.5 * math.erfc(-x / math.sqrt(2.0))


_A = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
      1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_B = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
      6.680131188771972e+01, -1.328068155288572e+01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
      -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
      3.754408661907416e+00)
_P_LOW = 0.02425


def norm_ppf(p: float) -> float:
    """Inverse standard normal CDF."""
    if not 0.0 < p < 1.0:
        if p == 0.0:
            return -math.inf
        if p == 1.0:
            return math.inf
        raise ValueError(f"probability {p} outside [0, 1]")
    if p < _P_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        x = ((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
             / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    elif p <= 1.0 - _P_LOW:
        q = p - 0.5
        r = q * q
        x = ((((((_A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q
             / (((((_B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0))
    else:
        q = math.sqrt(-2.0 * math.log1p(-p))
        x = -((((((_C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5])
              / ((((_D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0))
    # one Halley step; the upper branch works with tail masses to avoid cancellation
    if p < 0.5:
        e = norm_cdf(x) - p
    else:
        e = (1.0 - p) - 0.5 * math.erfc(x / math.sqrt(2.0))
    u = e * math.sqrt(2.0 * math.pi) * math.exp(x * x / 2.0)
    return x - u / (1.0 + x * u / 2.0)


# --- paired comparison -------------------------------------------------------------

@dataclass(frozen=True)
class PairedSample:
    labels: tuple
    a_values: np.ndarray
    b_values: np.ndarray

    def __post_init__(self):
        a = np.asarray(self.a_values, dtype=np.float64)
        b = np.asarray(self.b_values, dtype=np.float64)
        if a.shape != b.shape or a.ndim != 1:
            raise ValueError("paired values must be equal-length vectors")
        if a.shape[0] < 3:
            raise SampleSizeError(f"paired sample needs at least 3 pairs, got {a.shape[0]}")
        if len(self.labels) != a.shape[0]:
            raise ValueError("one label per pair required")
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("paired values must be finite")
        object.__setattr__(self, "a_values", a)
        object.__setattr__(self, "b_values", b)


def paired_differences(sample: PairedSample) -> np.ndarray:
    return sample.a_values - sample.b_values


@dataclass(frozen=True)
class TTestResult:
    t: float
    df: int
    p: float
    mean: float
    sd: float


def paired_t_test(d: Sequence[float]) -> TTestResult:
    """One-sample t-test of the differences against zero, two-sided."""
    d = np.asarray(d, dtype=np.float64)
    n = d.shape[0]
    if n < 2:
        raise SampleSizeError("t-test needs at least 2 differences")
    if np.ptp(d) == 0.0:
        raise DegenerateSampleError("differences have zero variance")
    mean = float(d.mean())
    sd = float(math.sqrt(np.sum((d - mean) ** 2) / (n - 1)))
    t = mean / (sd / math.sqrt(n))
    p = min(1.0, max(0.0, student_t_sf2(t, n - 1)))
    return TTestResult(t=t, df=n - 1, p=p, mean=mean, sd=sd)


def _poly(coefs, x):
    result = 0.0
    for c in reversed(coefs):
        result = result * x + c
    return result


_SW_C1 = (0.0, 0.221157, -0.147981, -2.071190, 4.434685, -2.706056)
_SW_C2 = (0.0, 0.042981, -0.293762, -1.752461, 5.682633, -3.582633)
_SW_C3 = (0.544, -0.39978, 0.025054, -6.714e-4)
_SW_C4 = (1.3822, -0.77857, 0.062767, -0.0020322)
_SW_C5 = (-1.5861, -0.31082, -0.083751, 0.0038915)
_SW_C6 = (-0.4803, -0.082676, 0.0030302)
_SW_G = (-2.273, 0.459)


def shapiro_coefficients(n: int) -> np.ndarray:
    """Royston's approximate Shapiro-Wilk weights for the lower half of the order statistics."""
    half = n // 2
    if n == 3:
        return np.array([math.sqrt(0.5)])
    m = np.array([norm_ppf((i - 0.375) / (n + 0.25)) for i in range(1, half + 1)])
    summ2 = 2.0 * float(m @ m)
    ssumm2 = math.sqrt(summ2)
    rsn = 1.0 / math.sqrt(n)
    a1 = _poly(_SW_C1, rsn) - m[0] / ssumm2
    if n > 5:
        a2 = -m[1] / ssumm2 + _poly(_SW_C2, rsn)
        fac = math.sqrt((summ2 - 2.0 * m[0] ** 2 - 2.0 * m[1] ** 2)
                        / (1.0 - 2.0 * a1 ** 2 - 2.0 * a2 ** 2))
        a = -m / fac
        a[1] = a2
    else:
        fac = math.sqrt((summ2 - 2.0 * m[0] ** 2) / (1.0 - 2.0 * a1 ** 2))
        a = -m / fac
    a[0] = a1
    return a


def shapiro_wilk(d: Sequence[float]) -> tuple[float, float]:
    """Shapiro-Wilk W and p-value for 3 <= n <= 5000."""
    x = np.sort(np.asarray(d, dtype=np.float64))
    n = x.shape[0]
    if not 3 <= n <= 5000:
        raise SampleSizeError(f"Shapiro-Wilk needs 3 <= n <= 5000, got {n}")
    if x[-1] - x[0] <= 0 or not np.all(np.isfinite(x)):
        raise DegenerateSampleError("all values identical")

    a = shapiro_coefficients(n)
    half = n // 2
    # centre and scale by the range so W is affine-invariant to rounding
    xs = (x - x[half]) / (x[-1] - x[0])
    num = float(a @ (xs[::-1][:half] - xs[:half])) ** 2
    ssq = float(np.sum((xs - xs.mean()) ** 2))
    w = min(num / ssq, 1.0)

    if n == 3:
        p = 6.0 / math.pi * (math.asin(math.sqrt(w)) - math.asin(math.sqrt(0.75)))
        return w, min(1.0, max(0.0, p))

    w1 = math.log1p(-w) if w < 1.0 else -math.inf
    if n <= 11:
        gamma = _poly(_SW_G, n)
        if w1 >= gamma:
            return w, 1e-99
        y = -math.log(gamma - w1)
        mu = _poly(_SW_C3, n)
        sigma = math.exp(_poly(_SW_C4, n))
    else:
        ln = math.log(n)
        y = w1
        mu = _poly(_SW_C5, ln)
        sigma = math.exp(_poly(_SW_C6, ln))
    if math.isinf(y):
        return w, 1.0
    p = 0.5 * math.erfc((y - mu) / sigma / math.sqrt(2.0))
    return w, p


def blom_positions(n: int) -> np.ndarray:
    i = np.arange(1, n + 1)
    return (i - 0.375) / (n + 0.25)


def qq_data(d: Sequence[float]) -> list:
    """Ordered values paired with normal quantiles at Blom plotting positions."""
    values = np.sort(np.asarray(d, dtype=np.float64))
    n = values.shape[0]
    if n < 2:
        raise SampleSizeError("Q-Q data needs at least 2 values")
    probs = blom_positions(n)
    theo = [norm_ppf(float(p)) for p in probs]
    # exact antisymmetry: mirror the lower half
    for i in range(n // 2):
        theo[n - 1 - i] = -theo[i]
    if n % 2:
        theo[n // 2] = 0.0
    return list(zip(theo, values.tolist()))


@dataclass(frozen=True)
class PairedTestResult:
    n: int
    mean_diff: float
    sd_diff: float
    t_statistic: float
    degrees_of_freedom: int
    p_value: float
    shapiro_w: float
    shapiro_p: float


def compare_paired(sample: PairedSample) -> tuple[PairedTestResult, list]:
    """Differences, normality check, paired t-test and Q-Q data in one pass."""
    d = paired_differences(sample)
    w, sw_p = shapiro_wilk(d)
    tt = paired_t_test(d)
    result = PairedTestResult(n=d.shape[0], mean_diff=tt.mean, sd_diff=tt.sd,
                              t_statistic=tt.t, degrees_of_freedom=tt.df, p_value=tt.p,
                              shapiro_w=w, shapiro_p=sw_p)
    return result, qq_data(d)
