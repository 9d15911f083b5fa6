import math

import numpy as np
import pytest
from scipy.optimize import minimize_scalar

from proxsqn import (
    RegKind,
    Regularizer,
    ScaledProxProblem,
    dense_metric,
    kkt_residual,
    make_rng,
    prox,
    reg_value,
    scaled_prox,
    scaled_prox_info,
    subproblem_oracle,
)


def random_problem(rng, d, sign, lam=0.3):
    diag = 0.3 + 2.7 * rng.random(d)
    u = rng.standard_normal(d)
    if sign == -1:
        # keep diag(D) - uu' safely positive definite
        ratio = float(np.sum(u * u / diag))
        u *= math.sqrt(0.7 / ratio)
    eta = 0.05 + 1.5 * float(rng.random())
    x = 3.0 * rng.standard_normal(d)
    reg = Regularizer(RegKind.L1 if lam > 0 else RegKind.ZERO, lam)
    return reg, ScaledProxProblem(diag, u, sign, eta, x)


# ---------------------------------------------------------------- plain prox


def test_prox_closed_forms(zero_reg):
    x = np.array([3.0, -0.5, 0.0])
    l1 = Regularizer(RegKind.L1, 1.0)
    assert np.array_equal(prox(l1, x, 1.0), [2.0, 0.0, 0.0])
    assert np.array_equal(prox(zero_reg, x, 0.3), x)
    assert prox(zero_reg, x, 0.3) is not x  # defensive copy
    with pytest.raises(ValueError, match="eta"):
        prox(l1, x, 0.0)


def test_prox_per_coordinate_oracle():
    # each coordinate solves min_y lam|y| + 0.5 (y - x_j)^2 / eta-weighting
    rng = make_rng(21)
    lam, eta = 0.4, 0.7
    reg = Regularizer(RegKind.L1, lam)
    x = rng.standard_normal(4) * 2.0
    y = prox(reg, x, eta)
    for j in range(4):
        res = minimize_scalar(
            lambda t, c=x[j]: eta * lam * abs(t) + 0.5 * (t - c) ** 2,
            bounds=(-10, 10), method="bounded",
            options={"xatol": 1e-10})
        assert y[j] == pytest.approx(res.x, abs=1e-8)


def test_prox_firmly_nonexpansive():
    rng = make_rng(22)
    reg = Regularizer(RegKind.L1, 0.8)
    for _ in range(50):
        x, y = rng.standard_normal(6), rng.standard_normal(6)
        px, py = prox(reg, x, 0.5), prox(reg, y, 0.5)
        assert np.linalg.norm(px - py) <= np.linalg.norm(x - y) + 1e-15


def test_reg_value(zero_reg):
    x = np.array([1.0, -2.0, 0.0])
    assert reg_value(Regularizer(RegKind.L1, 0.5), x) == pytest.approx(1.5)
    assert reg_value(zero_reg, x) == 0.0


def test_regularizer_validation():
    with pytest.raises(ValueError, match="lambda1"):
        Regularizer(RegKind.L1, -1.0)
    with pytest.raises(ValueError, match="Zero"):
        Regularizer(RegKind.ZERO, 0.5)


# ---------------------------------------------------------------- problem validation


def test_problem_validation():
    d3 = np.ones(3)
    with pytest.raises(ValueError, match="positive"):
        ScaledProxProblem(np.array([1.0, 0.0, 1.0]), d3, 1, 0.1, d3)
    with pytest.raises(ValueError, match="sign"):
        ScaledProxProblem(d3, d3, 0, 0.1, d3)
    with pytest.raises(ValueError, match="eta"):
        ScaledProxProblem(d3, d3, 1, -0.1, d3)
    with pytest.raises(ValueError, match="matching"):
        ScaledProxProblem(d3, np.ones(2), 1, 0.1, d3)
    with pytest.raises(ValueError, match="positive definite"):
        ScaledProxProblem(d3, np.array([1.0, 1.0, 0.0]), -1, 0.1, d3)
    # u'D^-1 u < 1 is fine
    ScaledProxProblem(d3, np.array([0.6, 0.6, 0.0]), -1, 0.1, d3)


# ---------------------------------------------------------------- scaled prox


def test_scaled_prox_zero_reg_returns_x(zero_reg):
    rng = make_rng(23)
    _, prob = random_problem(rng, 5, -1, lam=0.0)
    y, info = scaled_prox_info(zero_reg, prob)
    assert np.array_equal(y, prob.x)
    assert info.method == "closed"


def test_scaled_prox_identity_metric_reduces_to_prox(lasso_reg):
    rng = make_rng(24)
    x = rng.standard_normal(6)
    prob = ScaledProxProblem(np.ones(6), np.zeros(6), 1, 0.4, x)
    assert np.array_equal(scaled_prox(lasso_reg, prob),
                          prox(lasso_reg, x, 0.4))


def test_scaled_prox_scalar_metric_bitwise(lasso_reg):
    # D = c I, u = 0 must equal prox with step eta / c, bit for bit
    rng = make_rng(25)
    x = rng.standard_normal(8)
    c, eta = 2.7, 0.9
    prob = ScaledProxProblem(np.full(8, c), np.zeros(8), -1, eta, x)
    assert np.array_equal(scaled_prox(lasso_reg, prob),
                          prox(lasso_reg, x, eta / c))


def test_scaled_prox_matches_oracle_both_signs(lasso_reg):
    rng = make_rng(26)
    for k in range(40):
        d = 3 if k % 2 else 16
        reg, prob = random_problem(rng, d, -1 if k % 3 else 1)
        y = scaled_prox(reg, prob)
        oracle = subproblem_oracle(reg, prob)
        assert np.linalg.norm(y - oracle) <= 1e-8
        assert kkt_residual(reg, prob, y) <= 1e-8


def test_exact_and_bisect_routes_agree():
    # the breakpoint route and the safeguarded bisection route are
    # independent solvers of the same scalar equation
    rng = make_rng(27)
    for k in range(60):
        d = 2 + int(rng.integers(0, 12))
        reg, prob = random_problem(rng, d, -1 if k % 2 else 1,
                                   lam=float(rng.choice([0.05, 0.3, 1.5])))
        ye, ie = scaled_prox_info(reg, prob, method="exact")
        yb, ib = scaled_prox_info(reg, prob, method="bisect")
        assert ie.method == "exact"
        assert ib.method == "bisect"
        assert np.linalg.norm(ye - yb) <= 1e-9 * (1 + np.linalg.norm(ye))
        assert abs(ie.residual) < 1e-10
        assert abs(ib.residual) < 1e-10


def test_root_info_diag_shortcut(lasso_reg):
    rng = make_rng(28)
    x = rng.standard_normal(5)
    prob = ScaledProxProblem(1.0 + rng.random(5), np.full(5, 1e-16), 1,
                             0.5, x)
    y, info = scaled_prox_info(lasso_reg, prob)
    assert info.method == "diag"
    assert info.evaluations == 0


def test_unknown_method_rejected(lasso_reg):
    prob = ScaledProxProblem(np.ones(2), np.ones(2), 1, 0.5, np.ones(2))
    with pytest.raises(ValueError, match="unknown root method"):
        scaled_prox_info(lasso_reg, prob, method="newton")


def test_kkt_residual_flags_bad_point(lasso_reg):
    rng = make_rng(29)
    reg, prob = random_problem(rng, 6, 1, lam=0.05)
    y = scaled_prox(reg, prob)
    assert kkt_residual(reg, prob, y) <= 1e-8
    assert kkt_residual(reg, prob, y + 0.5) > 1e-3


def test_dense_metric_assembly():
    diag = np.array([2.0, 3.0])
    u = np.array([0.5, -0.5])
    H = dense_metric(ScaledProxProblem(diag, u, -1, 1.0, np.zeros(2)))
    want = np.diag(diag) - np.outer(u, u)
    assert np.array_equal(H, want)


def test_scaled_prox_weights_coordinates(lasso_reg):
    # a large diagonal entry means a small effective step for that coordinate
    x = np.array([1.0, 1.0])
    prob = ScaledProxProblem(np.array([1.0, 100.0]), np.zeros(2), 1, 1.0, x)
    y = scaled_prox(lasso_reg, prob)
    assert y[0] == pytest.approx(1.0 - 0.01)
    assert y[1] == pytest.approx(1.0 - 0.01 / 100.0)
