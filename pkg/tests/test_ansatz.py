import math

import numpy as np
import pytest

from nodalkit.core.errors import DomainError, GridError
from nodalkit.services.ansatz import (
    AnsatzParams,
    ansatz_grid,
    ansatz_residual,
    apply_operator,
    build_ansatz,
    check_margin,
    dt_bump,
    interaction,
    interaction_sup_ratio,
    linear_operator,
    nonlinear_term,
    residual_bound,
    residual_norms,
    residual_S,
    w_corrected,
    w_shift,
    z_vector,
)
from nodalkit.services.special import eval_w, eval_w_prime
from nodalkit.services.transform import params_of, uniform_grid


@pytest.fixture(scope="module")
def pair_n3():
    return AnsatzParams(t1=-14.0, t2=-4.0, params=params_of(0.05, 3))


def test_ansatz_params_validation():
    params = params_of(0.1, 3)
    with pytest.raises(DomainError):
        AnsatzParams(t1=1.0, t2=0.0, params=params)
    with pytest.raises(DomainError):
        AnsatzParams(t1=float("nan"), t2=0.0, params=params)
    ap = AnsatzParams(t1=-6.0, t2=-1.5, params=params)
    assert ap.separation == 4.5
    assert ap.location(2) == -1.5
    with pytest.raises(DomainError):
        ap.location(3)


def test_no_correction_above_six():
    params = params_of(0.1, 7)
    t = np.linspace(-10.0, 2.0, 25)
    assert np.array_equal(w_corrected(t, -3.0, params), w_shift(t, -3.0, params))


def test_ansatz_shape(pair_n3):
    grid = ansatz_grid(pair_n3, 1e-2)
    v = build_ansatz(pair_n3, grid)
    at_t1 = v.values_v[np.argmin(np.abs(grid - pair_n3.t1))]
    at_t2 = v.values_v[np.argmin(np.abs(grid - pair_n3.t2))]
    assert at_t1 > 0.5
    assert at_t2 < -0.5
    between = v.values_v[grid <= pair_n3.t2]
    assert len(np.flatnonzero(np.diff(np.sign(between)))) == 1


def test_margin_is_enforced(pair_n3):
    with pytest.raises(GridError):
        check_margin(pair_n3, uniform_grid(pair_n3.t1 - 5.0, 4.0, 1e-2))
    with pytest.raises(GridError):
        build_ansatz(pair_n3, uniform_grid(pair_n3.t1 - 25.0, pair_n3.t2, 1e-2))


def test_analytic_residual_matches_finite_differences(pair_n3):
    h = 1e-3
    grid = ansatz_grid(pair_n3, h)
    analytic = ansatz_residual(pair_n3, grid)
    numeric = residual_S(build_ansatz(pair_n3, grid))
    assert np.max(np.abs(analytic - numeric)[2:-2]) < 1e-6


@pytest.mark.parametrize("N", [3, 4, 5, 6])
def test_dt_bump_matches_shift_derivative(N):
    params = params_of(0.05, N)
    t = np.linspace(-12.0, 1.0, 40)
    tj, h = -5.0, 1e-5
    value, derivative = dt_bump(t, tj, params)
    fd = (np.asarray(w_corrected(t, tj + h, params)) - np.asarray(w_corrected(t, tj - h, params))) / (2 * h)
    assert np.allclose(value, fd, atol=1e-7)
    fd_t = (dt_bump(t + h, tj, params)[0] - dt_bump(t - h, tj, params)[0]) / (2 * h)
    assert np.allclose(derivative, fd_t, atol=1e-6)


def test_z_vector_at_critical_exponent():
    params = params_of(0.0, 3)
    ap = AnsatzParams(t1=-9.0, t2=-3.0, params=params)
    grid = uniform_grid(-20.0, 2.0, 1e-2)
    consts = params.profile
    expected = 5.0 * np.asarray(eval_w(grid + 9.0, consts)) ** 4 * np.asarray(eval_w_prime(grid + 9.0, consts))
    assert np.allclose(z_vector(1, ap, grid), -expected, atol=1e-13)
    assert np.max(np.abs(z_vector(2, ap, grid))) > 0.1


def test_residual_bound_by_dimension():
    ap3 = AnsatzParams(t1=-10.0, t2=-2.0, params=params_of(0.1, 3))
    expected = ap3.params.beta + math.exp(0.75 * -2.0) + math.exp(-0.75 * 4.0)
    assert residual_bound(ap3, 0.75) == pytest.approx(expected, rel=1e-14)
    ap4 = AnsatzParams(t1=-10.0, t2=-2.0, params=params_of(0.1, 4))
    expected4 = ap4.params.beta + 2.0**0.9 * math.exp(1.8 * -2.0) + math.exp(-0.9 * 8.0)
    assert residual_bound(ap4, 0.9) == pytest.approx(expected4, rel=1e-14)
    with pytest.raises(DomainError):
        residual_bound(ap3, 0.0)


def test_residual_norms_consistent(pair_n3):
    norms = residual_norms(pair_n3, 0.75, step=1e-2)
    grid = ansatz_grid(pair_n3, 1e-2)
    assert norms.sup == pytest.approx(float(np.max(np.abs(ansatz_residual(pair_n3, grid)))))
    assert norms.ratio == pytest.approx((norms.sup + norms.weighted_l1) / norms.bound)
    assert 0.0 < norms.sup < 1.0


def test_interaction_prediction_improves_with_separation():
    params = params_of(0.0, 3)
    near = interaction(2.0, 1.0, 0.0, 14.0, params)
    far = interaction(2.0, 1.0, 0.0, 28.0, params)
    assert far.relative_error < near.relative_error < 0.5
    assert interaction(2.0, 1.0, 28.0, 0.0, params).lhs == pytest.approx(far.lhs, rel=1e-10)


def test_interaction_with_power_exponent_at_separation_14():
    params = params_of(0.0, 3)
    result = interaction(params.p, 1.0, 0.0, 14.0, params)
    assert result.lhs > 0.0
    assert result.relative_error < 0.02


def test_interaction_domain():
    params = params_of(0.0, 3)
    with pytest.raises(DomainError):
        interaction(1.0, 1.0, 0.0, 10.0, params)
    with pytest.raises(DomainError):
        interaction_sup_ratio(1.0, 2.0, 0.0, 10.0, params)
    ratio = interaction_sup_ratio(2.0, 1.0, 0.0, 14.0, params)
    assert 0.0 < ratio < 10.0


def test_nonlinear_term_is_quadratic():
    w = np.ones(3)
    phi = np.array([0.0, 1e-3, 2e-3])
    values = nonlinear_term(phi, w, 4.9)
    assert values[0] == 0.0
    assert values[2] / values[1] == pytest.approx(4.0, rel=1e-2)
    assert values[1] == pytest.approx(4.9 * 3.9 / 2.0 * 1e-6, rel=1e-2)


def test_sparse_operator_matches_strong_form():
    params = params_of(0.1, 3)
    grid = uniform_grid(-12.0, 3.0, 1e-3)
    base = np.asarray(eval_w(grid + 5.0, params.profile))
    f = np.exp(-((grid + 4.0) ** 2))
    sparse_values = linear_operator(base, grid, params) @ f[1:-1]
    strong = apply_operator(f, base, grid, params)[1:-1]
    assert np.max(np.abs(sparse_values - strong)[2:-2]) < 1e-5
