"""Diagonal-plus-rank-one quasi-Newton metric from curvature pairs.

From a pair (s, y) with s'y > 0 the construction sets

    tau = s'y / ||y||^2
    u   = (s - alpha tau y) / sqrt((s - alpha tau y)' y)   (or 0 on skip)
    H^{-1} = alpha tau I + u u'

which satisfies the secant condition H^{-1} y = s identically whenever the
rank-one term is kept. The metric itself, H = (alpha tau I + u u')^{-1},
expands by Sherman-Morrison to the diagonal-minus-rank-one splitting

    H = (1/(alpha tau)) I - w w',   w = u / sqrt(alpha tau (alpha tau + u'u)),

which is exactly the form the scaled proximal mapping consumes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import NegativeCurvatureError
from .model import BatchHessianSpectrum

_SKIP_EPS_DEFAULT = 1e-8
_LOG_SPACE_DIM = 30
_SECANT_GUARD = 1e-8


@dataclass(eq=False)
class CurvaturePair:
    """Displacement s and curvature response y = (sum-batch Hessian) s."""

    s: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        self.s = np.asarray(self.s, dtype=np.float64)
        self.y = np.asarray(self.y, dtype=np.float64)
        if self.s.ndim != 1 or self.s.shape != self.y.shape:
            raise ValueError("s and y must be 1-d with matching shapes")


@dataclass(eq=False)
class Metric:
    """H^{-1} = alpha*tau*I + u u'. u = 0 encodes a skipped rank-one term."""

    tau: float
    alpha: float
    u: np.ndarray
    skipped: bool = False
    anomalous: bool = False

    def __post_init__(self):
        self.u = np.asarray(self.u, dtype=np.float64)
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.tau <= 0.0:
            raise ValueError("tau must be > 0")

    @property
    def d(self) -> int:
        return self.u.shape[0]


def build_metric(pair: CurvaturePair, alpha: float,
                 skip_eps: float = _SKIP_EPS_DEFAULT) -> Metric:
    """Construct the metric from one curvature pair.

    Raises NegativeCurvatureError when y = 0 or tau <= 0 (curvature pair
    inconsistent with a positive definite batch Hessian). The rank-one term
    is skipped (u = 0) when (s - alpha tau y)'y <= eps ||y|| ||s - tau y||,
    and also, defensively, when the squared-norm denominator (s - alpha tau
    y)'y is nonpositive despite the skip test passing; that case is flagged
    anomalous for the caller's counters.
    """
    s, y = pair.s, pair.y
    ynorm2 = float(y @ y)
    if ynorm2 == 0.0:
        raise NegativeCurvatureError("curvature pair has y = 0")
    sy = float(s @ y)
    tau = sy / ynorm2
    if tau <= 0.0:
        raise NegativeCurvatureError(f"nonpositive curvature: tau = {tau:.6g}")
    resid = s - (alpha * tau) * y
    denom = float(resid @ y)
    rhs = skip_eps * math.sqrt(ynorm2) * float(np.linalg.norm(s - tau * y))
    if denom <= rhs:
        return Metric(tau, alpha, np.zeros_like(s), skipped=True)
    if denom < 0.0:
        return Metric(tau, alpha, np.zeros_like(s), skipped=True, anomalous=True)
    u = resid / math.sqrt(denom)
    m = Metric(tau, alpha, u)
    # cheap construction-time secant check; the property suite tightens this
    err = float(np.linalg.norm(apply_inverse(m, y) - s))
    if err > _SECANT_GUARD * (1.0 + float(np.linalg.norm(s))):
        raise AssertionError(f"secant violation at construction: {err:.3e}")
    return m


def apply_inverse(metric: Metric, v: np.ndarray) -> np.ndarray:
    """H^{-1} v in O(d)."""
    out = (metric.alpha * metric.tau) * v
    if metric.u.size and not metric.skipped:
        out = out + metric.u * float(metric.u @ v)
    return out


def metric_as_splitting(metric: Metric):
    """(diag, rank1, sign) with H = diag(D) + sign * rank1 rank1'.

    Sherman-Morrison: H = (1/(alpha tau)) I - u u' / (alpha tau (alpha tau +
    u'u)), always positive definite since w'D^{-1}w = u'u/(alpha tau + u'u)
    < 1. A skipped metric returns rank1 = 0 (pure scaled identity).
    """
    at = metric.alpha * metric.tau
    diag = np.full(metric.d, 1.0 / at)
    if metric.skipped or not metric.u.size:
        return diag, np.zeros(metric.d), -1
    uu = float(metric.u @ metric.u)
    w = metric.u / math.sqrt(at * (at + uu))
    return diag, w, -1


def dense_inverse(metric: Metric) -> np.ndarray:
    """H^{-1} as a dense matrix (test/oracle use)."""
    out = (metric.alpha * metric.tau) * np.eye(metric.d)
    if not metric.skipped:
        out += np.outer(metric.u, metric.u)
    return out


@dataclass
class MetricBounds:
    """Uniform eigenvalue bounds gamma I <= H <= Gamma I for planning."""

    gamma: float
    big_gamma: float
    degenerate: bool = False

    def __post_init__(self):
        if not self.degenerate and not (0.0 < self.gamma <= self.big_gamma):
            raise ValueError("need 0 < gamma <= Gamma")


IDENTITY_BOUNDS = MetricBounds(1.0, 1.0)


def metric_spectrum_bounds(spectrum: BatchHessianSpectrum, alpha: float,
                    d: int) -> MetricBounds:
    """Worst-case metric bounds from batch-Hessian extremes (lam, Lam).

        Gamma = d Lam / alpha
        gamma = [a(a-2) lam^{d+1} + a(1-a) lam^d Lam + Lam^2 lam^{d-1}]
                / [d^{d-1} Lam^d lam^2 (1-a)]

    The numerator factors as lam^{d-1} C with C = a(a-2) lam^2 + a(1-a) lam
    Lam + Lam^2 >= lam^2 (1-a) > 0, so gamma > 0 whenever lam > 0; for
    d > 30 the ratio is evaluated in log space to dodge overflow. gamma is
    wildly conservative in d and is used for advisory checks only; the hard
    acceptance bound is sigma_max(H) <= Gamma.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if d < 1:
        raise ValueError("d must be >= 1")
    if spectrum.degenerate or spectrum.lambda_lo <= 0.0:
        return MetricBounds(0.0, float("inf"), degenerate=True)
    lam, big = spectrum.lambda_lo, spectrum.lambda_hi
    a = alpha
    big_gamma = d * big / a
    c = a * (a - 2.0) * lam * lam + a * (1.0 - a) * lam * big + big * big
    if c <= 0.0:
        return MetricBounds(0.0, big_gamma, degenerate=True)
    if d <= _LOG_SPACE_DIM:
        gamma = (lam ** (d - 1) * c) / (d ** (d - 1) * big ** d
                                        * lam * lam * (1.0 - a))
    else:
        log_gamma = ((d - 1) * math.log(lam) + math.log(c)
                     - (d - 1) * math.log(d) - d * math.log(big)
                     - 2.0 * math.log(lam) - math.log(1.0 - a))
        gamma = math.exp(log_gamma)
    if gamma <= 0.0 or not math.isfinite(gamma):
        return MetricBounds(0.0, big_gamma, degenerate=True)
    return MetricBounds(gamma, big_gamma)
