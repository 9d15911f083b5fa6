"""Composite-objective solvers: the stochastic quasi-Newton method and baselines.

ProxSQN epoch structure (epochs s = 1..S, inner iterations j = 0..m-1, global
1-based counter g = (s-1)m + j + 1):

  * each epoch snapshots xt = previous epoch average and its full gradient;
  * each inner step draws a batch, forms the variance-reduced estimate v, and
    updates by a plain prox step during warmup (g <= 2Z) or by the scaled
    prox step x+ = prox_{eta R}^{H}(x - eta H^{-1} v) afterwards;
  * every Z global iterations the trailing window of Z inner points is
    averaged; the first trigger only seeds the anchor, each later trigger
    forms s_r = xhat_r - xhat_{r-1}, draws a uniform Hessian batch T_r of
    size b_H, sets y_r = (sum-batch Hessian at xhat_r) s_r, and rebuilds the
    metric, so the first metric exists exactly when warmup ends at g = 2Z;
  * the epoch ends with x reset to the inner-iterate average xt_s, which is
    also the traced point.

ProxSVRG is the same loop with the metric machinery disabled (identical
gradient-batch RNG stream, so it matches a metric-disabled ProxSQN run bit
for bit). ProxGD (ISTA), FISTA, and a dense-Hessian proximal Newton serve as
deterministic baselines.
"""

from __future__ import annotations

import enum
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import ConvergenceError, DivergenceError, NegativeCurvatureError
from .metric import MetricBounds, CurvaturePair, Metric, apply_inverse, \
    build_metric, metric_as_splitting
from .model import LossKind, SmoothObjective, dense_batch_hessian, \
    full_gradient, hessian_vec, smooth_value
from .prox import Regularizer, RegKind, ScaledProxProblem, prox, reg_value, \
    scaled_prox
from .sampler import Sampler, SamplingScheme, SchemeKind, _floyd_sample, \
    make_rng, make_snapshot, vr_gradient

_DIVERGENCE_FACTOR = 1e3


class SolverKind(enum.Enum):
    PROX_SQN = "prox_sqn"
    PROX_SVRG = "prox_svrg"
    PROX_GD = "prox_gd"
    FISTA = "fista"
    PROX_NEWTON_FULL = "prox_newton_full"


@dataclass
class SolverConfig:
    kind: SolverKind = SolverKind.PROX_SQN
    epochs: int = 20
    eta: float = 0.05
    m: int = 1000                 # inner iterations per epoch (SQN/SVRG)
    b: int = 10                   # gradient batch size
    b_hessian: int = 50           # Hessian batch size b_H
    metric_period: int = 10       # Z
    alpha: float = 0.5
    skip_eps: float = 1e-8
    scheme: SchemeKind = SchemeKind.UNIFORM_BATCH
    seed: int = 0
    divergence_factor: float = _DIVERGENCE_FACTOR
    dense_limit: int = 256        # proximal Newton dense-Hessian guard

    def __post_init__(self):
        if self.epochs < 1 or self.m < 1 or self.metric_period < 1:
            raise ValueError("epochs, m, Z must all be >= 1")
        if self.eta <= 0.0:
            raise ValueError("eta must be > 0")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.b < 1 or self.b_hessian < 1:
            raise ValueError("batch sizes must be >= 1")


@dataclass
class TraceRecord:
    epoch: int
    iteration: int
    objective: float
    subopt: float | None
    grad_evals: int
    metric_rebuilds: int
    elapsed_ns: int


@dataclass(eq=False)
class RunResult:
    x: np.ndarray
    records: list[TraceRecord]
    grad_evals: int
    metric_rebuilds: int
    anomalies: int
    scaled_prox_calls: int
    first_scaled_iteration: int | None


def composite_value(obj: SmoothObjective, reg: Regularizer,
                    x: np.ndarray) -> float:
    """P(x) = F(x) + R(x)."""
    return smooth_value(obj, x) + reg_value(reg, x)


def run(obj: SmoothObjective, reg: Regularizer, config: SolverConfig,
        p_star: float | None = None,
        metric_enabled: bool | None = None) -> RunResult:
    """Run one solver to completion, emitting one trace record per epoch.

    metric_enabled overrides the quasi-Newton machinery for PROX_SQN (used by
    the baseline-equivalence checks); PROX_SVRG always runs with it off.
    """
    kind = config.kind
    if kind in (SolverKind.PROX_SQN, SolverKind.PROX_SVRG):
        enabled = kind is SolverKind.PROX_SQN
        if metric_enabled is not None:
            enabled = enabled and metric_enabled
        return _run_inner_loop(obj, reg, config, p_star, enabled)
    if kind is SolverKind.PROX_GD:
        return _run_prox_gd(obj, reg, config, p_star)
    if kind is SolverKind.FISTA:
        return _run_fista(obj, reg, config, p_star)
    if kind is SolverKind.PROX_NEWTON_FULL:
        return _run_prox_newton(obj, reg, config, p_star)
    raise ValueError(f"unknown solver kind {kind}")


def _guard(p_val, p_init, factor):
    if not math.isfinite(p_val) or p_val > factor * max(abs(p_init), 1.0):
        raise DivergenceError(
            f"objective {p_val:.6g} exceeded {factor:g} x initial {p_init:.6g}"
        )


def _run_inner_loop(obj, reg, config, p_star, metric_enabled):
    d = obj.d
    x = np.zeros(d)
    t0 = time.perf_counter_ns()
    p_init = composite_value(obj, reg, x)
    scheme = SamplingScheme(config.scheme, config.b, config.seed)
    # independent streams for gradient batches and Hessian batches, so the
    # gradient stream is identical whether or not metric rebuilding runs
    sampler = Sampler(obj, scheme, make_rng(config.seed))
    hess_rng = make_rng(config.seed ^ 0x9E3779B97F4A7C15)
    Z = config.metric_period
    eta = config.eta
    window = np.zeros((Z, d))
    xhat_prev: np.ndarray | None = None
    metric: Metric | None = None
    # one problem object per metric: the (diag, rank1, sign) part is
    # validated at rebuild time, only the query point changes per step
    prox_prob: ScaledProxProblem | None = None
    grad_evals = 0
    rebuilds = 0
    anomalies = 0
    scaled_calls = 0
    first_scaled: int | None = None
    records = []
    for s in range(1, config.epochs + 1):
        snapshot = make_snapshot(obj, x)
        grad_evals += obj.n
        xsum = np.zeros(d)
        for j in range(config.m):
            g = (s - 1) * config.m + j + 1
            window[(g - 1) % Z] = x
            batch = sampler.draw()
            v = vr_gradient(obj, snapshot, batch, x)
            grad_evals += obj.n if batch.full else 2 * batch.indices.size
            warm = (g - 1) < 2 * Z
            if warm or not metric_enabled or metric is None:
                x = prox(reg, x - eta * v, eta)
            else:
                prox_prob.x = x - eta * apply_inverse(metric, v)
                x = scaled_prox(reg, prox_prob)
                scaled_calls += 1
                if first_scaled is None:
                    first_scaled = g
            xsum += x
            if metric_enabled and g % Z == 0:
                xhat = window.mean(axis=0)
                if xhat_prev is None:
                    xhat_prev = xhat
                else:
                    sr = xhat - xhat_prev
                    xhat_prev = xhat
                    if float(np.linalg.norm(sr)) <= 1e-14 * (1.0 + float(np.linalg.norm(xhat))):
                        anomalies += 1
                    else:
                        T = _hessian_batch(hess_rng, obj.n, config.b_hessian)
                        yr = hessian_vec(obj, T, xhat, sr)
                        try:
                            metric = build_metric(CurvaturePair(sr, yr),
                                                  config.alpha, config.skip_eps)
                            if metric.anomalous:
                                anomalies += 1
                            diag, rank1, sign = metric_as_splitting(metric)
                            prox_prob = ScaledProxProblem(diag, rank1, sign,
                                                          eta, x)
                            rebuilds += 1
                        except NegativeCurvatureError:
                            anomalies += 1
        x = xsum / config.m
        p_val = composite_value(obj, reg, x)
        _guard(p_val, p_init, config.divergence_factor)
        records.append(TraceRecord(
            epoch=s, iteration=s * config.m, objective=p_val,
            subopt=None if p_star is None else p_val - p_star,
            grad_evals=grad_evals, metric_rebuilds=rebuilds,
            elapsed_ns=time.perf_counter_ns() - t0))
    return RunResult(x, records, grad_evals, rebuilds, anomalies,
                     scaled_calls, first_scaled)


def _hessian_batch(rng, n, b_h):
    return _floyd_sample(rng, n, min(b_h, n))


def _run_prox_gd(obj, reg, config, p_star):
    x = np.zeros(obj.d)
    t0 = time.perf_counter_ns()
    p_init = composite_value(obj, reg, x)
    grad_evals = 0
    records = []
    for k in range(1, config.epochs + 1):
        x = prox(reg, x - config.eta * full_gradient(obj, x), config.eta)
        grad_evals += obj.n
        p_val = composite_value(obj, reg, x)
        _guard(p_val, p_init, config.divergence_factor)
        records.append(TraceRecord(k, k, p_val,
                                   None if p_star is None else p_val - p_star,
                                   grad_evals, 0,
                                   time.perf_counter_ns() - t0))
    return RunResult(x, records, grad_evals, 0, 0, 0, None)


def _run_fista(obj, reg, config, p_star):
    x = np.zeros(obj.d)
    y = x.copy()
    t = 1.0
    t0 = time.perf_counter_ns()
    p_init = composite_value(obj, reg, x)
    grad_evals = 0
    records = []
    for k in range(1, config.epochs + 1):
        x_next = prox(reg, y - config.eta * full_gradient(obj, y), config.eta)
        grad_evals += obj.n
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x_next + ((t - 1.0) / t_next) * (x_next - x)
        x, t = x_next, t_next
        p_val = composite_value(obj, reg, x)
        _guard(p_val, p_init, config.divergence_factor)
        records.append(TraceRecord(k, k, p_val,
                                   None if p_star is None else p_val - p_star,
                                   grad_evals, 0,
                                   time.perf_counter_ns() - t0))
    return RunResult(x, records, grad_evals, 0, 0, 0, None)


def _run_prox_newton(obj, reg, config, p_star):
    """Dense-Hessian proximal Newton: x+ = prox_{eta R}^{H}(x - eta H^{-1} g).

    The L1 subproblem is solved by an inner accelerated proximal-gradient
    loop on the quadratic model; with no regularizer the step is the exact
    damped Newton solve.
    """
    if obj.d > config.dense_limit:
        raise ValueError(f"d = {obj.d} exceeds dense limit {config.dense_limit}")
    x = np.zeros(obj.d)
    t0 = time.perf_counter_ns()
    p_init = composite_value(obj, reg, x)
    grad_evals = 0
    records = []
    all_rows = np.arange(obj.n, dtype=np.int64)
    for k in range(1, config.epochs + 1):
        g = full_gradient(obj, x)
        grad_evals += obj.n
        H = dense_batch_hessian(obj, all_rows, x, config.dense_limit) / obj.n
        if reg.kind is RegKind.ZERO or reg.lambda1 == 0.0:
            x = x - config.eta * np.linalg.solve(H, g)
        else:
            x = _newton_subproblem(H, g, x, reg, config.eta)
        p_val = composite_value(obj, reg, x)
        _guard(p_val, p_init, config.divergence_factor)
        records.append(TraceRecord(k, k, p_val,
                                   None if p_star is None else p_val - p_star,
                                   grad_evals, k,
                                   time.perf_counter_ns() - t0))
    return RunResult(x, records, grad_evals, config.epochs, 0, 0, None)


def _newton_subproblem(H, g, x, reg, eta, tol=1e-12, max_iter=20000):
    """argmin_y g'(y-x) + (1/(2 eta)) ||y-x||_H^2 + R(y) by FISTA."""
    sigma = float(np.linalg.eigvalsh(H)[-1]) / eta
    c = x - eta * np.linalg.solve(H, g)  # unconstrained minimizer
    y = x.copy()
    z = y.copy()
    t = 1.0
    lam = reg.lambda1
    for _ in range(max_iter):
        grad = (H @ (z - c)) / eta
        y_next = np.sign(z - grad / sigma) * np.maximum(
            np.abs(z - grad / sigma) - lam / sigma, 0.0)
        t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        z = y_next + ((t - 1.0) / t_next) * (y_next - y)
        if float(np.linalg.norm(y_next - y)) <= tol * (1.0 + float(np.linalg.norm(y))):
            return y_next
        y, t = y_next, t_next
    return y


@dataclass
class RateReport:
    """Linear-rate certificate for the inner/outer loop geometry."""

    eta_max: float
    rho: float
    feasible: bool
    m_min: int | None


def rate_plan(bounds: MetricBounds, l_q: float, mu: float, m: int,
              eta: float) -> RateReport:
    """Evaluate the linear-rate certificate for given metric bounds.

        eta_max = gamma^2 / (8 Gamma L_Q)
        rho = [Gamma gamma^2 + 4 eta^2 mu Gamma L_Q (m+1)]
              / [(eta gamma^2 - 4 eta^2 Gamma L_Q) mu m]

    feasible means 0 < rho < 1 at the given (eta, m). m_min is the smallest
    m with rho < 1 at this eta (None when eta >= eta_max, where no m works).
    """
    if bounds.degenerate:
        raise ValueError("degenerate metric bounds cannot be planned")
    if l_q <= 0.0 or mu <= 0.0 or m < 1 or eta <= 0.0:
        raise ValueError("need l_q > 0, mu > 0, m >= 1, eta > 0")
    gam, big = bounds.gamma, bounds.big_gamma
    eta_max = gam * gam / (8.0 * big * l_q)

    def rho_of(mm):
        denom = (eta * gam * gam - 4.0 * eta * eta * big * l_q) * mu * mm
        if denom <= 0.0:
            return math.inf
        num = big * gam * gam + 4.0 * eta * eta * mu * big * l_q * (mm + 1)
        return num / denom

    rho = rho_of(m)
    feasible = 0.0 < rho < 1.0
    m_min = None
    if eta < eta_max:
        lo, hi = 1, 1
        while rho_of(hi) >= 1.0:
            hi *= 2
            if hi > 10 ** 15:
                hi = None
                break
        if hi is not None:
            while lo < hi:
                mid = (lo + hi) // 2
                if rho_of(mid) < 1.0:
                    hi = mid
                else:
                    lo = mid + 1
            m_min = lo
    return RateReport(eta_max, rho, feasible, m_min)


def estimate_smoothness(obj: SmoothObjective, iters: int = 200,
                        seed: int = 0) -> float:
    """Upper bound on L_F = sigma_max(hess F) by power iteration.

    Squared error uses the exact Gram operator; logistic uses the global
    curvature bound (1/4) A'A / n + ridge.
    """
    A = obj.dataset.to_csr()
    scale = 1.0 if obj.loss is LossKind.SQUARED_ERROR else 0.25
    rng = make_rng(seed)
    v = rng.standard_normal(obj.d)
    v /= np.linalg.norm(v)
    lam = 0.0
    for _ in range(iters):
        w = scale * (A.T @ (A @ v)) / obj.n + obj.ridge * v
        lam = float(np.linalg.norm(w))
        if lam == 0.0:
            return obj.ridge
        v = w / lam
    return 1.01 * lam + 1e-12


def reference_solution(obj: SmoothObjective, reg: Regularizer,
                       tol: float = 1e-12,
                       max_iter: int = 1000000) -> tuple[np.ndarray, float]:
    """High-accuracy minimizer by restarted accelerated proximal gradient.

    Stops when the fixed-point residual ||x - prox_{eta R}(x - eta grad F)||
    / eta falls below tol. Raises ConvergenceError at the iteration cap.
    """
    L = estimate_smoothness(obj)
    eta = 1.0 / L
    x = np.zeros(obj.d)
    y = x.copy()
    t = 1.0
    p_prev = math.inf
    for _ in range(max_iter):
        g = full_gradient(obj, y)
        x_next = prox(reg, y - eta * g, eta)
        gx = full_gradient(obj, x_next)
        fp = prox(reg, x_next - eta * gx, eta)
        resid = float(np.linalg.norm(x_next - fp)) / eta
        if resid <= tol:
            return x_next, composite_value(obj, reg, x_next)
        # function-value restart keeps momentum useful under strong convexity
        p_val = composite_value(obj, reg, x_next)
        if p_val > p_prev:
            t = 1.0
            y = x_next
        else:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            y = x_next + ((t - 1.0) / t_next) * (x_next - x)
            t = t_next
        p_prev = p_val
        x = x_next
    raise ConvergenceError(
        f"reference solution did not reach tol={tol} in {max_iter} iterations"
    )
