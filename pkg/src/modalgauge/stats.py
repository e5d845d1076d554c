"""Spearman rank correlation with exact small-n p-values, and simple OLS
with t-based inference and mean-response confidence bands."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
from scipy import special

from .errors import (
    DataError,
    DegenerateDataError,
    DegenerateResponseError,
    InsufficientDataError,
    ParameterError,
)

EXACT_PERMUTATION_THRESHOLD = 9


@dataclass(frozen=True)
class CorrelationResult:
    rho: float
    p_value: float
    n: int
    method: str  # "exact_permutation" | "t_approx"


@dataclass
class RegressionFit:
    """Simple linear fit with the sufficient statistics needed for bands.

    x_mean, sxx, and residual_se go beyond the minimal serialized schema but
    are required to reconstruct the mean-response confidence band.
    """

    slope: float
    intercept: float
    r_squared: float
    slope_p_value: float
    slope_se: float
    intercept_se: float
    n: int
    confidence_level: float
    x_min: float
    x_max: float
    measure_name: str = ""
    x_mean: float = 0.0
    sxx: float = 0.0
    residual_se: float = 0.0

    def to_dict(self) -> dict:
        return {
            "measure_name": self.measure_name,
            "slope": self.slope,
            "intercept": self.intercept,
            "r_squared": self.r_squared,
            "slope_p_value": self.slope_p_value,
            "slope_se": self.slope_se,
            "intercept_se": self.intercept_se,
            "n": self.n,
            "confidence_level": self.confidence_level,
            "x_min": self.x_min,
            "x_max": self.x_max,
            "x_mean": self.x_mean,
            "sxx": self.sxx,
            "residual_se": self.residual_se,
        }

    @classmethod
    def from_dict(cls, raw: dict) -> "RegressionFit":
        keys = (
            "slope intercept r_squared slope_p_value slope_se intercept_se "
            "n confidence_level x_min x_max measure_name x_mean sxx residual_se"
        ).split()
        return cls(**{k: raw[k] for k in keys if k in raw})


def t_distribution_sf(t: float, df: int) -> float:
    """One-sided Student-t survival function P(T > t).

    Computed through the regularized incomplete beta function.
    """
    if df < 1:
        raise ParameterError(f"degrees of freedom must be >= 1, got {df}")
    if math.isnan(t):
        raise DataError("t statistic is NaN")
    x = df / (df + t * t)
    half_tail = 0.5 * special.betainc(df / 2.0, 0.5, x)
    return half_tail if t >= 0 else 1.0 - half_tail


def t_critical(confidence_level: float, df: int) -> float:
    """Two-sided critical value: P(|T| <= value) = confidence_level."""
    if not 0 < confidence_level < 1:
        raise ParameterError(f"confidence level must be in (0,1), got {confidence_level}")
    if df < 1:
        raise ParameterError(f"degrees of freedom must be >= 1, got {df}")
    alpha = 1.0 - confidence_level
    x = special.betaincinv(df / 2.0, 0.5, alpha)
    return math.sqrt(df * (1.0 - x) / x)


def rank_with_ties(values) -> np.ndarray:
    """1-based average ranks; ties share the mean of the ranks they span."""
    v = np.asarray(values, dtype=np.float64)
    if v.ndim != 1 or v.size < 1:
        raise DataError("ranking needs a non-empty 1-D array")
    if np.isnan(v).any():
        raise DataError("NaN in rank input")
    order = np.argsort(v, kind="stable")
    ranks = np.empty(v.size, dtype=np.float64)
    i = 0
    while i < v.size:
        j = i
        while j + 1 < v.size and v[order[j + 1]] == v[order[i]]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def _pearson(x: np.ndarray, y: np.ndarray) -> float:
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(xc @ xc) * float(yc @ yc))
    return float(xc @ yc) / denom


def spearman(
    x, y, exact_threshold: int = EXACT_PERMUTATION_THRESHOLD
) -> CorrelationResult:
    """Spearman rho with a two-sided p-value.

    For n <= exact_threshold the p-value counts, over all n! permutations of
    one rank vector, those with |rho| at least the observed; larger n uses
    the Student-t approximation with n-2 degrees of freedom.
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("inputs must be equal-length 1-D arrays")
    n = x.size
    if n < 3:
        raise InsufficientDataError(f"need at least 3 observations, got {n}")
    if np.isnan(x).any() or np.isnan(y).any():
        raise DataError("NaN in correlation input")
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        raise DegenerateDataError("constant input: rank correlation undefined")
    rx = rank_with_ties(x)
    ry = rank_with_ties(y)
    rho = _pearson(rx, ry)

    if n <= exact_threshold:
        # rho is affine in sum(rx * perm(ry)); compare that sum against the
        # observed one, centered on its permutation-invariant mean.
        center = n * rx.mean() * ry.mean()
        observed = abs(float(rx @ ry) - center)
        count = 0
        total = math.factorial(n)
        chunk = []
        for perm in itertools.permutations(ry):
            chunk.append(perm)
            if len(chunk) == 65536:
                sums = np.asarray(chunk) @ rx
                count += int((np.abs(sums - center) >= observed - 1e-9).sum())
                chunk = []
        if chunk:
            sums = np.asarray(chunk) @ rx
            count += int((np.abs(sums - center) >= observed - 1e-9).sum())
        return CorrelationResult(rho=rho, p_value=count / total, n=n, method="exact_permutation")

    if abs(rho) >= 1.0:
        p = 0.0
    else:
        t_stat = rho * math.sqrt((n - 2) / (1.0 - rho * rho))
        p = 2.0 * t_distribution_sf(abs(t_stat), n - 2)
    return CorrelationResult(rho=rho, p_value=min(p, 1.0), n=n, method="t_approx")


def ols_fit(
    x, y, confidence_level: float = 0.96, measure_name: str = ""
) -> RegressionFit:
    """Closed-form simple least squares with slope inference.

    Raises DegenerateDataError for constant x and DegenerateResponseError
    for constant y (zero total sum of squares).
    """
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise DataError("inputs must be equal-length 1-D arrays")
    n = x.size
    if n < 3:
        raise InsufficientDataError(f"need at least 3 observations, got {n}")
    if np.isnan(x).any() or np.isnan(y).any():
        raise DataError("NaN in regression input")
    x_mean = float(x.mean())
    y_mean = float(y.mean())
    xc = x - x_mean
    sxx = float(xc @ xc)
    if sxx <= 0:
        raise DegenerateDataError("constant x: slope undefined")
    ss_tot = float(((y - y_mean) ** 2).sum())
    if ss_tot <= 0:
        raise DegenerateResponseError("constant y: R-squared undefined")
    slope = float(xc @ (y - y_mean)) / sxx
    intercept = y_mean - slope * x_mean
    resid = y - (intercept + slope * x)
    ss_res = float(resid @ resid)
    r_squared = min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    df = n - 2
    s2 = ss_res / df
    s = math.sqrt(max(s2, 0.0))
    slope_se = s / math.sqrt(sxx)
    intercept_se = s * math.sqrt(1.0 / n + x_mean * x_mean / sxx)
    if slope_se > 0:
        t_stat = slope / slope_se
        p = 2.0 * t_distribution_sf(abs(t_stat), df)
    else:
        p = 0.0 if slope != 0 else 1.0
    return RegressionFit(
        slope=slope,
        intercept=intercept,
        r_squared=r_squared,
        slope_p_value=min(p, 1.0),
        slope_se=slope_se,
        intercept_se=intercept_se,
        n=n,
        confidence_level=confidence_level,
        x_min=float(x.min()),
        x_max=float(x.max()),
        measure_name=measure_name,
        x_mean=x_mean,
        sxx=sxx,
        residual_se=s,
    )


def predict_with_band(fit: RegressionFit, x0: float) -> tuple[float, float, float, bool]:
    """Point prediction and mean-response confidence band at x0.

    Returns (y_hat, lower, upper, extrapolation_flag); the flag is set when
    x0 falls outside the fit's training-domain range.
    """
    y_hat = fit.intercept + fit.slope * x0
    se = fit.residual_se * math.sqrt(1.0 / fit.n + (x0 - fit.x_mean) ** 2 / fit.sxx)
    half = t_critical(fit.confidence_level, fit.n - 2) * se
    extrapolation = not (fit.x_min <= x0 <= fit.x_max)
    return y_hat, y_hat - half, y_hat + half, extrapolation
