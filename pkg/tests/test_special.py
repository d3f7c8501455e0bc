import math

import numpy as np
import pytest
from scipy import integrate

from nodalkit.core.errors import DomainError
from nodalkit.services.special import (
    amplitude_A,
    bessel_k,
    correction_profile,
    correction_profile_prime,
    correction_profile_second,
    eval_w,
    eval_w_prime,
    pohozaev_check,
    profile_constants,
)
from nodalkit.services.transform import d2, uniform_grid


@pytest.fixture(scope="module")
def critical_n3():
    return profile_constants(5.0, 3)


def test_w_at_origin(critical_n3):
    assert eval_w(0.0, critical_n3) == pytest.approx(0.75**0.25, abs=1e-12)
    assert eval_w(0.0, critical_n3) == pytest.approx(0.930605, abs=1e-6)


def test_w_is_even(critical_n3):
    t = np.linspace(0.1, 30.0, 50)
    assert np.allclose(eval_w(t, critical_n3), eval_w(-t, critical_n3), rtol=0, atol=0)


def test_w_tail_matches_amplitude(critical_n3):
    ratio = eval_w(20.0, critical_n3) / (critical_n3.amplitude_A * math.exp(-10.0))
    assert abs(ratio - 1.0) < 1e-8


def test_w_rejects_non_finite(critical_n3):
    with pytest.raises(DomainError):
        eval_w(float("nan"), critical_n3)
    with pytest.raises(ValueError):
        eval_w(np.array([0.0, np.inf]), critical_n3)


def test_w_prime_matches_finite_difference(critical_n3):
    h = 1e-5
    fd = (eval_w(1.0 + h, critical_n3) - eval_w(1.0 - h, critical_n3)) / (2 * h)
    assert eval_w_prime(1.0, critical_n3) == pytest.approx(fd, abs=1e-8)
    assert eval_w_prime(0.0, critical_n3) == 0.0


def test_w_prime_tail(critical_n3):
    expected = -0.5 * critical_n3.amplitude_A * math.exp(-10.0)
    assert eval_w_prime(20.0, critical_n3) / expected == pytest.approx(1.0, abs=1e-6)


def test_amplitude_value():
    assert amplitude_A(5.0, 3) == pytest.approx(0.75**0.25 * math.sqrt(2.0), rel=1e-14)
    assert amplitude_A(5.0, 3) == pytest.approx(1.316074, abs=1e-6)


@pytest.mark.parametrize("N,p", [(3, 5.0), (3, 4.9), (4, 3.0), (5, 2.2), (6, 1.9)])
def test_amplitude_exceeds_peak(N, p):
    consts = profile_constants(p, N)
    assert consts.amplitude_A > eval_w(0.0, consts)


def test_amplitude_from_tail_regression():
    consts = profile_constants(4.9, 3)
    t = np.linspace(15.0, 25.0, 101)
    shifted = np.log(eval_w(t, consts)) + consts.sqrt_gamma0 * t
    assert np.ptp(shifted) < 1e-6
    assert math.exp(shifted.mean()) == pytest.approx(consts.amplitude_A, rel=1e-6)


def test_profile_constants_domain():
    with pytest.raises(DomainError):
        profile_constants(1.0, 3)
    with pytest.raises(DomainError):
        profile_constants(3.0, 2)
    assert profile_constants(1.5, 7).lambda_N is None
    assert profile_constants(5.0, 3).gamma0 == 0.25


def test_bessel_small_argument_limits():
    z = 1e-4
    assert z * bessel_k(1, z) == pytest.approx(1.0, rel=1e-3)
    assert z * z * bessel_k(2, z) == pytest.approx(2.0, rel=1e-3)


def test_bessel_k1_against_integral_representation():
    oracle, _ = integrate.quad(lambda s: math.exp(-math.cosh(s)) * math.cosh(s), 0.0, np.inf, epsabs=1e-15, epsrel=1e-13)
    assert bessel_k(1, 1.0) == pytest.approx(oracle, rel=1e-10)


@pytest.mark.parametrize("order", [1, 2])
def test_bessel_continuous_across_series_cutoff(order):
    below, above = bessel_k(order, np.array([2.0 - 1e-9, 2.0 + 1e-9]))
    assert below == pytest.approx(above, rel=1e-7)


@pytest.mark.parametrize("order", [1, 2])
def test_bessel_series_range_against_integral_representation(order):
    z = 1.5
    oracle, _ = integrate.quad(
        lambda s: math.exp(-z * math.cosh(s)) * math.cosh(order * s), 0.0, np.inf, epsabs=1e-15, epsrel=1e-13
    )
    assert bessel_k(order, z) == pytest.approx(oracle, rel=1e-10)


def test_bessel_is_positive_and_decreasing():
    z = np.geomspace(1e-3, 20.0, 200)
    for order in (1, 2):
        values = bessel_k(order, z)
        assert np.all(values > 0)
        assert np.all(np.diff(values) < 0)


def test_bessel_rejects_nonpositive_argument():
    with pytest.raises(DomainError):
        bessel_k(1, 0.0)
    with pytest.raises(DomainError):
        bessel_k(3, 1.0)


def test_correction_profile_value():
    assert correction_profile(0.0, 3) == pytest.approx(-(1.0 - math.exp(-1.0)), abs=1e-12)
    assert correction_profile(0.0, 3) == pytest.approx(-0.632121, abs=1e-6)


def test_correction_profile_vanishes_above_six():
    s = np.linspace(-5.0, 5.0, 11)
    assert np.all(correction_profile(s, 7) == 0.0)
    assert np.all(correction_profile_prime(s, 8) == 0.0)


@pytest.mark.parametrize("N", [3, 4, 5, 6])
def test_correction_profile_equation(N):
    h = 1e-3
    s = uniform_grid(-10.0, 3.0, h)
    phi = correction_profile(s, N)
    residual = d2(phi, h) - ((N - 2) ** 2 / 4.0 + np.exp(2.0 * s)) * phi - np.exp(-(N - 6) * s / 2.0)
    assert np.max(np.abs(residual[2:-2])) < 1e-6


@pytest.mark.parametrize("N", [3, 4, 5, 6])
def test_correction_profile_sign_and_decay(N):
    s = np.linspace(-30.0, 30.0, 601)
    phi = correction_profile(s, N)
    assert np.all(phi <= 0.0)
    assert abs(phi[-1]) < 1e-6
    if N < 6:
        assert abs(phi[0]) < 1e-3
    else:
        # forzamiento constante: phi_6 tiende a -1/gamma0 por la izquierda
        assert phi[0] == pytest.approx(-0.25, rel=1e-6)


@pytest.mark.parametrize("N", [3, 4, 5, 6])
def test_correction_profile_derivatives_consistent(N):
    h = 1e-5
    s = np.array([-2.0, -0.5, 0.3, 1.2])
    fd = (correction_profile(s + h, N) - correction_profile(s - h, N)) / (2 * h)
    assert np.allclose(correction_profile_prime(s, N), fd, atol=1e-8)
    fd2 = (correction_profile_prime(s + h, N) - correction_profile_prime(s - h, N)) / (2 * h)
    assert np.allclose(correction_profile_second(s, N), fd2, atol=1e-6)


@pytest.mark.parametrize("N,p", [(3, 5.0), (4, 2.9), (4, 3.0), (5, 2.2), (3, 4.9)])
def test_pohozaev_identities(N, p):
    first, second = pohozaev_check(profile_constants(p, N))
    assert first < 1e-8
    assert second < 1e-8
