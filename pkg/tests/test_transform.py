import math

import numpy as np
import pytest
from scipy import integrate

from nodalkit.core.errors import DomainError, GridError
from nodalkit.services.special import eval_w, eval_w_prime
from nodalkit.services.transform import (
    RadialSolution,
    TransformedSolution,
    d1,
    d2,
    energy,
    energy_radial,
    from_fowler,
    fowler_window,
    grid_step,
    params_of,
    params_of_p,
    radial_identities,
    resample_monotone,
    sign_changes,
    signed_power,
    to_fowler,
    uniform_grid,
    weighted_inner,
    weighted_l2,
)


def _window_grid(u, params, step=1e-3):
    s = np.log(u.grid_r)
    v = np.exp(params.alpha_exp * s) * u.values_u
    left, right = fowler_window(float(s[np.argmax(np.abs(v))]), params, 20.0, 4.0)
    return uniform_grid(max(left, s[0]), min(right, s[-1]), step)


def test_params_at_critical_exponent():
    params = params_of(0.0, 3)
    assert params.beta == 0.0
    assert params.gamma == params.gamma0 == 0.25
    assert params.p == 5.0


def test_params_values():
    params = params_of(0.1, 3)
    assert params.p == pytest.approx(4.9)
    assert params.beta == pytest.approx(0.1 / 3.9, rel=1e-14)
    assert params.beta == pytest.approx(0.0256410, abs=1e-7)
    assert params.gamma == pytest.approx(0.2498356, abs=1e-7)
    five = params_of(0.05, 5)
    assert five.p == pytest.approx(7.0 / 3.0 - 0.05)
    assert five.beta == pytest.approx(0.45 / 3.85, rel=1e-14)


@pytest.mark.parametrize("eps,N", [(0.1, 3), (0.3, 4), (0.05, 5), (0.2, 7)])
def test_params_invariants(eps, N):
    params = params_of(eps, N)
    assert params.gamma + params.beta**2 / 4.0 == pytest.approx(params.gamma0, rel=1e-14)
    assert 0.0 < params.beta < params.gamma0
    assert params.alpha_exp == pytest.approx(2.0 / (params.p - 1.0))


def test_params_domain():
    with pytest.raises(DomainError):
        params_of(-0.1, 3)
    with pytest.raises(DomainError):
        params_of(4.0, 3)
    with pytest.raises(DomainError):
        params_of(0.1, 2)
    assert params_of_p(4.9, 3).eps == pytest.approx(0.1)


def test_uniform_grid_and_step():
    grid = uniform_grid(-1.0, 1.0, 0.1)
    assert grid[0] == -1.0 and grid[-1] == 1.0
    assert grid_step(grid) == pytest.approx(0.1)
    with pytest.raises(GridError):
        uniform_grid(1.0, 0.0, 0.1)
    with pytest.raises(GridError):
        grid_step(np.array([0.0, 0.1, 0.3, 0.4, 0.5]))


def test_finite_differences_fourth_order():
    h = 1e-2
    t = uniform_grid(0.0, 2.0, h)
    f = np.sin(t)
    assert np.max(np.abs(d1(f, h)[2:-2] - np.cos(t[2:-2]))) < 1e-8
    assert np.max(np.abs(d2(f, h)[2:-2] + np.sin(t[2:-2]))) < 1e-7


def test_signed_power_and_sign_changes():
    values = np.array([-8.0, -1.0, 0.0, 1.0, 8.0])
    assert np.allclose(signed_power(values, 1.0 / 3.0), [-2.0, -1.0, 0.0, 1.0, 2.0])
    t = np.linspace(-1.0, 1.0, 201)
    roots = sign_changes(t, t - 0.123)
    assert len(roots) == 1 and roots[0] == pytest.approx(0.123, abs=1e-12)


def test_pure_power_maps_to_constant():
    params = params_of(0.1, 3)
    t = uniform_grid(-3.0, 3.0, 1e-2)
    r = np.exp(t)
    u = RadialSolution(
        grid_r=r,
        values_u=r ** (-params.alpha_exp),
        values_du=-params.alpha_exp * r ** (-params.alpha_exp - 1.0),
        alpha0=math.inf,
        nodes=(),
        N=3,
        p=params.p,
    )
    v = to_fowler(u, params, uniform_grid(-2.0, 2.0, 1e-2))
    assert np.allclose(v.values_v, 1.0, atol=1e-10)


def test_to_fowler_rejects_mismatched_params(ground_state):
    with pytest.raises(GridError):
        to_fowler(ground_state, params_of(0.2, 3), uniform_grid(-1.0, 0.0, 0.1))


def test_to_fowler_rejects_grid_outside_profile(ground_state, params_n3):
    s = np.log(ground_state.grid_r)
    with pytest.raises(GridError):
        to_fowler(ground_state, params_n3, uniform_grid(s[0] - 1.0, 0.0, 0.1))


def test_roundtrip_on_ground_state(ground_state, params_n3):
    grid = _window_grid(ground_state, params_n3)
    back = from_fowler(to_fowler(ground_state, params_n3, grid))
    inner = slice(10, -10)
    expected_u = resample_monotone(ground_state, back.grid_r[inner])
    assert np.max(np.abs(back.values_u[inner] - expected_u)) < 1e-8 * ground_state.alpha0
    expected_du = np.interp(np.log(back.grid_r[inner]), np.log(ground_state.grid_r), ground_state.values_du)
    assert np.max(np.abs(back.values_du[inner] - expected_du)) < 1e-5 * ground_state.alpha0


def test_transformed_ground_state_solves_fowler_equation(ground_state, params_n3):
    h = 1e-3
    grid = _window_grid(ground_state, params_n3, h)
    v = to_fowler(ground_state, params_n3, grid).values_v
    residual = (
        d2(v, h)
        - params_n3.beta * d1(v, h)
        - (params_n3.gamma + np.exp(2.0 * grid)) * v
        + signed_power(v, params_n3.p)
    )
    assert np.max(np.abs(residual[2:-2])) < 10 * h**2


def test_node_count_preserved(nodal_one, params_n3):
    grid = _window_grid(nodal_one, params_n3)
    back = from_fowler(to_fowler(nodal_one, params_n3, grid))
    assert len(back.nodes) == 1
    assert back.nodes[0] == pytest.approx(nodal_one.nodes[0], rel=1e-4)


def test_weighted_products():
    params = params_of(0.0, 3)
    consts = params.profile
    grid = uniform_grid(-40.0, 30.0, 1e-3)
    w = eval_w(grid + 5.0, consts)
    oracle, _ = integrate.quad(lambda t: float(eval_w(t + 5.0, consts)) ** 2, -40.0, 30.0, limit=400, epsabs=1e-13)
    assert weighted_l2(w, w, grid, params) == pytest.approx(oracle, rel=1e-8)

    def integrand(t: float) -> float:
        return float(eval_w_prime(t + 5.0, consts)) ** 2 + (0.25 + math.exp(2 * t)) * float(eval_w(t + 5.0, consts)) ** 2

    oracle_h, _ = integrate.quad(integrand, -40.0, 30.0, limit=400, epsabs=1e-13)
    assert weighted_inner(w, w, grid, params) == pytest.approx(oracle_h, rel=1e-8)


def test_weighted_products_symmetric_and_definite():
    params = params_of(0.1, 3)
    grid = uniform_grid(-10.0, 2.0, 1e-3)
    f = np.exp(-(grid + 4.0) ** 2)
    g = np.sin(grid) * np.exp(-(grid + 3.0) ** 2)
    assert weighted_inner(f, g, grid, params) == weighted_inner(g, f, grid, params)
    assert weighted_l2(f, g, grid, params) == weighted_l2(g, f, grid, params)
    assert weighted_inner(f, f, grid, params) > 0.0
    with pytest.raises(GridError):
        weighted_l2(f[:-1], g[:-1], grid, params)


def _refinement_errors(quadrature, oracle, steps):
    return [abs(quadrature(uniform_grid(*window, step)) - oracle) for window, step in steps]


def test_weighted_inner_converges_under_step_halving():
    params = params_of(0.0, 3)
    oracle = math.sqrt(math.pi / 2.0) * (1.0 + params.gamma + math.exp(-7.5))

    def quadrature(grid):
        f = np.exp(-((grid + 4.0) ** 2))
        return weighted_inner(f, f, grid, params)

    errors = _refinement_errors(quadrature, oracle, [((-14.0, 6.0), h) for h in (0.2, 0.1, 0.05)])
    assert errors[0] / errors[1] > 3.0
    assert errors[1] / errors[2] > 3.0
    assert errors[2] < 1e-4


def test_weighted_l2_converges_under_step_halving():
    params = params_of(0.1, 3)
    rate = complex(-params.beta, 1.0)
    oracle = ((np.exp(3.2 * rate) - 1.0) / rate).real

    def quadrature(grid):
        return weighted_l2(np.cos(grid), np.ones_like(grid), grid, params)

    errors = _refinement_errors(quadrature, oracle, [((0.0, 3.2), h) for h in (0.2, 0.1, 0.05)])
    assert errors[0] / errors[1] > 3.0
    assert errors[1] / errors[2] > 3.0


def test_energy_of_zero_and_truncation_warning():
    params = params_of(0.1, 3)
    grid = uniform_grid(-5.0, 2.0, 1e-2)
    assert energy(TransformedSolution(grid, np.zeros_like(grid), params)).value == 0.0
    ramp = TransformedSolution(grid, np.ones_like(grid), params)
    assert energy(ramp).warnings


def test_energy_matches_radial_energy(ground_state, params_n3):
    grid = _window_grid(ground_state, params_n3)
    v = to_fowler(ground_state, params_n3, grid)
    assert energy(v).value == pytest.approx(energy_radial(ground_state), rel=1e-6)
    identities = radial_identities(ground_state, v)
    assert max(identities.values()) < 1e-6
