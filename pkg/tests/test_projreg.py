import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hybrecycle.projreg import (
    DP,
    GCV,
    UPRE,
    WGCV,
    LiftContext,
    Optimal,
    OmegaHistory,
    _Filter,
    gcv_value,
    lambda_grid,
    select_lambda,
    tikhonov_projected,
    wgcv_stationary_omega,
)


def _dense_tikhonov(B, c, lam):
    n = B.shape[1]
    return np.linalg.solve(B.T @ B + lam**2 * np.eye(n), B.T @ c)


def _influence(B, lam):
    return B @ np.linalg.solve(B.T @ B + lam**2 * np.eye(B.shape[1]), B.T)


def _dense_gcv(B, c, lam, omega=1.0):
    H = _influence(B, lam)
    r = c - H @ c
    n = B.shape[0]
    return n * (r @ r) / (n - omega * np.trace(H)) ** 2


def test_scalar_filter():
    y, res = tikhonov_projected(np.array([[1.0], [0.0]]), np.array([1.0, 0.0]), 1.0)
    assert y == pytest.approx([0.5], abs=1e-15)
    assert res == pytest.approx(0.5, abs=1e-15)


def test_zero_lambda_consistent_square():
    B = np.array([[2.0, 1.0], [0.0, 3.0], [0.0, 0.0]])
    y_true = np.array([1.0, -1.0])
    y, res = tikhonov_projected(B, B @ y_true, 0.0)
    assert np.allclose(y, y_true, atol=1e-14) and res <= 1e-14


def test_huge_lambda_shrinks_to_zero():
    B = np.array([[2.0, 1.0], [0.5, 3.0], [0.0, 1.0]])
    c = np.array([1.0, 2.0, 3.0])
    y, _ = tikhonov_projected(B, c, 1e6)
    assert np.linalg.norm(y) <= 1e-12 * np.linalg.norm(B.T @ c) * 1.01


def test_negative_lambda_rejected():
    with pytest.raises(ValueError):
        tikhonov_projected(np.eye(2), np.ones(2), -1.0)


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), log_lam=st.floats(-3, 1))
def test_tikhonov_matches_normal_equations(seed, log_lam):
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((7, 6))
    c = rng.standard_normal(7)
    lam = 10**log_lam
    y, _ = tikhonov_projected(B, c, lam)
    ref = _dense_tikhonov(B, c, lam)
    assert np.linalg.norm(y - ref) <= 1e-9 * max(np.linalg.norm(ref), 1e-12)


def test_dp_scalar_root():
    sel = select_lambda(np.array([[1.0], [0.0]]), np.array([1.0, 0.1]), DP(0.2, tau=1.0))
    s = math.sqrt(0.03)
    assert sel.lam == pytest.approx(math.sqrt(s / (1 - s)), rel=1e-10)
    assert not sel.flagged


def test_dp_returns_zero_when_residual_already_large():
    sel = select_lambda(np.array([[1.0], [0.0]]), np.array([1.0, 0.5]), DP(0.2, tau=1.0))
    assert sel.lam == 0.0 and not sel.flagged


def test_dp_unreachable_target_flagged():
    sel = select_lambda(np.array([[1.0], [0.0]]), np.array([1.0, 0.0]), DP(5.0))
    assert sel.flagged
    assert sel.lam == pytest.approx(1.0)


def test_optimal_noiseless_picks_smallest_lambda():
    B = np.array([[3.0, 0.0], [1.0, 1.0], [0.0, 0.5]])
    x_true = np.array([0.7, -0.2])
    sel = select_lambda(B, B @ x_true, Optimal(), lift=LiftContext(np.eye(2), x_true))
    assert sel.lam <= 1e-8 * np.linalg.norm(B, 2)
    assert np.allclose(sel.y, x_true, atol=1e-12)


def test_optimal_requires_truth():
    with pytest.raises(ValueError):
        select_lambda(np.eye(2), np.ones(2), Optimal())


def test_gcv_noiseless_diagonal_picks_smallest_lambda():
    B = np.array([[2.0, 0.0], [0.0, 1.0], [0.0, 0.0]])
    c = B @ np.array([1.0, 1.0])
    grid = lambda_grid(2.0)
    dense = np.array([_dense_gcv(B, c, lam) for lam in grid])
    assert int(np.argmin(dense)) == 0
    sel = select_lambda(B, c, GCV())
    assert sel.lam <= grid[1]


def test_gcv_value_matches_dense_formula():
    rng = np.random.default_rng(3)
    B = rng.standard_normal((9, 6))
    c = rng.standard_normal(9)
    flt = _Filter(B, c)
    for lam in (1e-3, 0.1, 1.0, 5.0):
        for omega in (1.0, 0.4):
            assert gcv_value(flt, lam, omega) == pytest.approx(_dense_gcv(B, c, lam, omega), rel=1e-10)


def test_gcv_selection_is_grid_minimum():
    rng = np.random.default_rng(4)
    B = np.diag(np.logspace(0, -4, 8))
    B = np.vstack([B, np.zeros((1, 8))])
    c = B @ np.ones(8) + 1e-3 * rng.standard_normal(9)
    sel = select_lambda(B, c, GCV())
    grid = np.logspace(-8, 0, 400)
    best = min(_dense_gcv(B, c, lam) for lam in grid)
    assert _dense_gcv(B, c, sel.lam) <= best * (1 + 1e-6)


def test_upre_selection_is_grid_minimum():
    rng = np.random.default_rng(5)
    B = np.vstack([np.diag(np.logspace(0, -3, 6)), np.zeros((1, 6))])
    var = 1e-6
    c = B @ np.ones(6) + math.sqrt(var) * rng.standard_normal(7)
    n = 7

    def dense_upre(lam):
        H = _influence(B, lam)
        r = c - H @ c
        return r @ r / n + 2 * var / n * np.trace(H) - var

    sel = select_lambda(B, c, UPRE(var))
    best = min(dense_upre(lam) for lam in np.logspace(-7, 0, 400))
    assert dense_upre(sel.lam) <= best + 1e-12


def test_wgcv_unit_weight_equals_gcv():
    rng = np.random.default_rng(6)
    B = rng.standard_normal((8, 5))
    c = rng.standard_normal(8)
    a = select_lambda(B, c, GCV())
    b = select_lambda(B, c, WGCV(omega=1.0))
    assert a.lam == b.lam and b.omega == 1.0


def test_wgcv_stationary_weight_zeroes_derivative():
    rng = np.random.default_rng(7)
    B = np.vstack([np.diag(np.logspace(0, -3, 6)), np.zeros((2, 6))])
    c = B @ np.ones(6) + 1e-2 * rng.standard_normal(8)
    flt = _Filter(B, c)
    lam = 0.05
    omega = wgcv_stationary_omega(flt, lam)
    assert omega is not None and omega > 0
    h = 1e-6 * lam
    deriv = (gcv_value(flt, lam + h, omega) - gcv_value(flt, lam - h, omega)) / (2 * h)
    scale = gcv_value(flt, lam, omega) / lam
    assert abs(deriv) <= 1e-5 * scale


def test_wgcv_adaptive_weight_uses_history():
    rng = np.random.default_rng(8)
    B = np.vstack([np.diag(np.logspace(0, -3, 6)), np.zeros((2, 6))])
    x_true = np.ones(6)
    c = B @ x_true + 1e-2 * rng.standard_normal(8)
    hist = OmegaHistory()
    sel = select_lambda(B, c, WGCV(), lift=LiftContext(np.eye(6), x_true), omega_history=hist)
    assert len(hist.values) == 1
    assert sel.omega == pytest.approx(hist.values[0])
    plain = select_lambda(B, c, WGCV())
    assert plain.omega == 1.0


def test_omega_history_default():
    assert OmegaHistory().current == 1.0
    assert OmegaHistory([0.5, 1.5]).current == 1.0


def test_lift_context_error():
    rng = np.random.default_rng(9)
    Q = np.linalg.qr(rng.standard_normal((10, 4)))[0]
    x_true = rng.standard_normal(10)
    y = rng.standard_normal(4)
    ctx = LiftContext(Q, x_true)
    assert ctx.error(y) == pytest.approx(np.linalg.norm(Q @ y - x_true), rel=1e-12)
    assert np.allclose(ctx.lift(y), Q @ y)


def test_lambda_grid():
    g = lambda_grid(3.0)
    assert len(g) == 200
    assert g[0] == pytest.approx(3e-10) and g[-1] == pytest.approx(3.0)
    assert np.all(np.diff(g) > 0)


def test_zero_projected_matrix_rejected():
    with pytest.raises(ValueError):
        select_lambda(np.zeros((3, 2)), np.ones(3), GCV())
