"""Proximal mappings, plain and under a diagonal-plus-rank-one metric.

The scaled mapping solves

    prox_{eta R}^H(x) = argmin_y  eta R(y) + 0.5 (y - x)' H (y - x),
    H = diag(D) + sign * u u'   (sign in {+1, -1}, H positive definite),

by reducing the rank-one term to a scalar root equation: with
y(beta) = prox_{eta R}^D(x - sign * beta * D^{-1} u), the solution is
y(beta0) where beta0 is the unique root of

    g(beta) = u'(x - y(beta)) + beta.

g is continuous, piecewise linear for the L1 regularizer, and strictly
increasing (slope >= 1 for sign=+1, >= 1 - u'D^{-1}u > 0 for sign=-1), so
bracketing plus bisection is unconditionally safe and, for L1, the root is
available exactly by breakpoint search. Both routes are implemented; the
exact route is the default for L1 and the bisection route is kept as the
safeguarded reference path (the two are cross-checked in the test suite,
and both are independent of the iterative subproblem oracle below).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .errors import BracketError, ConvergenceError

_BISECT_WIDTH = 1e-13
_MAX_DOUBLINGS = 60
_U_ZERO_TOL = 1e-14


class RegKind(enum.Enum):
    ZERO = "zero"
    L1 = "l1"


@dataclass(frozen=True)
class Regularizer:
    """R(x) = lambda1 ||x||_1 (kind L1) or R = 0 (kind Zero)."""

    kind: RegKind
    lambda1: float = 0.0

    def __post_init__(self):
        if self.lambda1 < 0.0:
            raise ValueError("lambda1 must be >= 0")
        if self.kind is RegKind.ZERO and self.lambda1 != 0.0:
            raise ValueError("Zero regularizer cannot carry lambda1")


def reg_value(reg: Regularizer, x: np.ndarray) -> float:
    if reg.kind is RegKind.ZERO or reg.lambda1 == 0.0:
        return 0.0
    return float(reg.lambda1 * np.sum(np.abs(x)))


def _soft_threshold(z, t):
    return np.sign(z) * np.maximum(np.abs(z) - t, 0.0)


def prox(reg: Regularizer, x: np.ndarray, eta: float) -> np.ndarray:
    """prox_{eta R}(x) under the identity metric."""
    if eta <= 0.0:
        raise ValueError("eta must be > 0")
    if reg.kind is RegKind.ZERO or reg.lambda1 == 0.0:
        return x.copy()
    return _soft_threshold(x, eta * reg.lambda1)


@dataclass(eq=False)
class ScaledProxProblem:
    """One scaled-prox instance: metric diag(D) + sign * u u', step eta, point x."""

    diag: np.ndarray
    rank1: np.ndarray
    sign: int
    eta: float
    x: np.ndarray

    def __post_init__(self):
        self.diag = np.asarray(self.diag, dtype=np.float64)
        self.rank1 = np.asarray(self.rank1, dtype=np.float64)
        self.x = np.asarray(self.x, dtype=np.float64)
        if self.diag.ndim != 1 or self.diag.shape != self.rank1.shape \
                or self.diag.shape != self.x.shape:
            raise ValueError("diag, rank1, x must be 1-d with matching shapes")
        if np.any(self.diag <= 0.0):
            raise ValueError("diag must be strictly positive")
        if self.sign not in (1, -1):
            raise ValueError("sign must be +1 or -1")
        if self.eta <= 0.0:
            raise ValueError("eta must be > 0")
        if self.sign == -1:
            s = float(np.sum(self.rank1 ** 2 / self.diag))
            if s >= 1.0:
                raise ValueError(
                    f"metric not positive definite: u'D^-1 u = {s:.6g} >= 1"
                )


@dataclass
class RootInfo:
    """Diagnostics from a scaled-prox root solve."""

    beta: float
    residual: float
    evaluations: int
    method: str


def _diag_prox(reg, z, eta_over_diag):
    # prox of eta*R in the diag(D) metric: per-coordinate threshold
    # (eta / D_jj) * lambda1. The (eta / D) * lambda1 evaluation order makes
    # the D = c*I case bitwise-identical to prox(reg, z, eta / c).
    if reg.kind is RegKind.ZERO or reg.lambda1 == 0.0:
        return z.copy()
    return _soft_threshold(z, eta_over_diag * reg.lambda1)


def _make_rootfn(reg, prob):
    """Returns (g, y_of_beta, state) for the scalar root equation."""
    u = prob.rank1
    w = u / prob.diag                      # D^{-1} u
    eod = prob.eta / prob.diag
    ux = float(u @ prob.x)
    sgn = float(prob.sign)
    count = [0]

    def y_of(beta):
        z = prob.x - (sgn * beta) * w
        return _diag_prox(reg, z, eod)

    def g(beta):
        count[0] += 1
        return ux - float(u @ y_of(beta)) + beta

    return g, y_of, count


def _solve_bisect(reg, prob):
    """Safeguarded route: geometric bracket expansion, bisection, secant polish."""
    g, y_of, count = _make_rootfn(reg, prob)
    unorm = float(np.linalg.norm(prob.rank1))
    xnorm = float(np.linalg.norm(prob.x))
    lo = -unorm * xnorm - 1.0
    hi = unorm * xnorm + 1.0
    width = hi - lo
    glo, ghi = g(lo), g(hi)
    k = 0
    while glo > 0.0:
        if k >= _MAX_DOUBLINGS:
            raise BracketError("no sign change after 60 lower doublings")
        lo -= width
        width *= 2.0
        glo = g(lo)
        k += 1
    width = hi - lo
    k = 0
    while ghi < 0.0:
        if k >= _MAX_DOUBLINGS:
            raise BracketError("no sign change after 60 upper doublings")
        hi += width
        width *= 2.0
        ghi = g(hi)
        k += 1
    while hi - lo > _BISECT_WIDTH * (1.0 + max(abs(lo), abs(hi))):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        gm = g(mid)
        if gm < 0.0:
            lo, glo = mid, gm
        else:
            hi, ghi = mid, gm
    if ghi != glo:
        beta = lo - glo * (hi - lo) / (ghi - glo)
        if not lo <= beta <= hi:
            beta = 0.5 * (lo + hi)
    else:
        beta = 0.5 * (lo + hi)
    return beta, g, y_of, count


def _solve_exact(reg, prob):
    """Exact root of the piecewise-linear g for the L1 regularizer.

    Breakpoints are the beta where a coordinate of the inner soft threshold
    activates or deactivates; between consecutive breakpoints g is affine, so
    a secant step on the bracketing segment is exact.
    """
    g, y_of, count = _make_rootfn(reg, prob)
    u = prob.rank1
    w = u / prob.diag
    t = (prob.eta / prob.diag) * reg.lambda1
    sgn = float(prob.sign)
    live = w != 0.0
    if not np.any(live):
        return 0.0, g, y_of, count
    # x_j - sgn*beta*w_j = +-t_j
    bp = np.concatenate([(prob.x[live] - t[live]) / (sgn * w[live]),
                         (prob.x[live] + t[live]) / (sgn * w[live])])
    bp = np.sort(bp[np.isfinite(bp)])  # duplicates are harmless in the search
    # lazy binary search for the first breakpoint with g >= 0; g is monotone
    # increasing so ~log2(2d) evaluations bracket the linear segment
    cache: dict[int, float] = {}

    def geval(i):
        if i not in cache:
            cache[i] = g(bp[i])
        return cache[i]

    lo_i, hi_i = 0, bp.size
    while lo_i < hi_i:
        mid = (lo_i + hi_i) // 2
        if geval(mid) < 0.0:
            lo_i = mid + 1
        else:
            hi_i = mid
    k = lo_i
    if k == 0:
        b_hi, g_hi = bp[0], geval(0)
        b_lo = b_hi - (1.0 + abs(b_hi))
        g_lo = g(b_lo)
    elif k == bp.size:
        b_lo, g_lo = bp[-1], geval(bp.size - 1)
        b_hi = b_lo + (1.0 + abs(b_lo))
        g_hi = g(b_hi)
    else:
        b_lo, g_lo = bp[k - 1], geval(k - 1)
        b_hi, g_hi = bp[k], geval(k)
    if g_hi == g_lo:
        beta = b_lo
    else:
        beta = b_lo - g_lo * (b_hi - b_lo) / (g_hi - g_lo)
    return beta, g, y_of, count


def scaled_prox_info(reg: Regularizer, prob: ScaledProxProblem,
                     method: str = "auto") -> tuple[np.ndarray, RootInfo]:
    """Scaled prox plus root diagnostics. method: auto | exact | bisect."""
    if reg.kind is RegKind.ZERO or reg.lambda1 == 0.0:
        # prox of 0 in any metric is the identity
        return prob.x.copy(), RootInfo(0.0, 0.0, 0, "closed")
    u = prob.rank1
    if float(np.linalg.norm(u)) < _U_ZERO_TOL:
        eod = prob.eta / prob.diag
        return _diag_prox(reg, prob.x, eod), RootInfo(0.0, 0.0, 0, "diag")
    if method == "auto":
        method = "exact"
    if method == "exact":
        beta, g, y_of, count = _solve_exact(reg, prob)
        res = g(beta)
        if abs(res) > 1e-9 * (1.0 + abs(beta)):
            # belt and suspenders: fall back to the safeguarded route
            beta, g, y_of, count2 = _solve_bisect(reg, prob)
            count[0] += count2[0]
            res = g(beta)
            method = "exact+bisect"
    elif method == "bisect":
        beta, g, y_of, count = _solve_bisect(reg, prob)
        res = g(beta)
    else:
        raise ValueError(f"unknown root method {method!r}")
    return y_of(beta), RootInfo(float(beta), float(res), count[0], method)


def scaled_prox(reg: Regularizer, prob: ScaledProxProblem,
                method: str = "auto") -> np.ndarray:
    """prox_{eta R}^H(x) for H = diag(D) + sign * u u'."""
    y, _ = scaled_prox_info(reg, prob, method)
    return y


def dense_metric(prob: ScaledProxProblem) -> np.ndarray:
    """Assemble H = diag(D) + sign * u u' densely (test/oracle use)."""
    H = np.diag(prob.diag).astype(np.float64)
    H += float(prob.sign) * np.outer(prob.rank1, prob.rank1)
    return H


def subproblem_oracle(reg: Regularizer, prob: ScaledProxProblem,
                      tol: float = 1e-10, max_iter: int = 200000) -> np.ndarray:
    """Independent check: solve the same subproblem by plain proximal gradient.

    Minimizes eta R(y) + 0.5 ||y - x||_H^2 with step 1/sigma_max(H), stopping
    on successive-iterate change <= tol. Shares no code with the root-finding
    path above.
    """
    H = dense_metric(prob)
    sigma = float(np.linalg.eigvalsh(H)[-1])
    y = prob.x.copy()
    lam = reg.lambda1 if reg.kind is RegKind.L1 else 0.0
    thresh = (prob.eta / sigma) * lam
    for _ in range(max_iter):
        grad = H @ (y - prob.x)
        z = y - grad / sigma
        y_next = _soft_threshold(z, thresh) if lam > 0.0 else z
        if float(np.linalg.norm(y_next - y)) <= tol:
            return y_next
        y = y_next
    raise ConvergenceError(
        f"subproblem oracle did not reach tol={tol} in {max_iter} iterations "
        "(ill-conditioned test instance?)"
    )


def kkt_residual(reg: Regularizer, prob: ScaledProxProblem,
                 y: np.ndarray) -> float:
    """Max violation of the optimality condition H(x - y)/eta in d R(y).

    Zero regularizer: ||H(x-y)||_inf. L1: per-coordinate distance of
    r_j = [H(x-y)/eta]_j to lambda1*sign(y_j) (y_j != 0) or to the interval
    [-lambda1, lambda1] (y_j = 0).
    """
    r = dense_metric(prob) @ (prob.x - y) / prob.eta
    if reg.kind is RegKind.ZERO or reg.lambda1 == 0.0:
        return float(np.max(np.abs(r))) if r.size else 0.0
    lam = reg.lambda1
    viol = np.where(y != 0.0,
                    np.abs(r - lam * np.sign(y)),
                    np.maximum(np.abs(r) - lam, 0.0))
    return float(np.max(viol))
