"""Perfil unidimensional w, su amplitud asintótica, K1/K2 y los perfiles de corrección.

Todas las funciones son puras y aceptan escalares o arreglos de numpy; las
mallas las construye quien llama.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from numpy.typing import ArrayLike, NDArray
from scipy import integrate, special

from nodalkit.core.errors import ConvergenceError, DomainError

# Serie de potencias para z < 2; desde z = 2 la evaluación asintótica de Cephes (k1, kn)
_SERIES_CUTOFF = 2.0
_SERIES_TERMS = 24
# e^s por encima de este valor deja los corchetes de phi_4 y phi_6 en 1 exacto
_BESSEL_S_CLIP = 6.5


@dataclass(frozen=True)
class ProfileConstants:
    """Constantes del perfil w para un par (N, p)."""

    p: float
    N: int
    gamma0: float
    amplitude_A: float
    lambda_N: float | None

    @property
    def sqrt_gamma0(self) -> float:
        return (self.N - 2) / 2.0

    @property
    def prefactor(self) -> float:
        """Valor de w en el origen."""
        return (self.gamma0 * (self.p + 1) / 2.0) ** (1.0 / (self.p - 1))


@dataclass(frozen=True)
class QuadratureSpec:
    """Dominio y tolerancias para integrar funciones de w sobre la recta."""

    half_width: float = 40.0
    epsabs: float = 1e-14
    epsrel: float = 1e-12
    limit: int = 400


def profile_constants(p: float, N: int) -> ProfileConstants:
    """Construye las constantes del perfil validando el dominio."""
    if N < 3:
        raise DomainError(f"La dimensión debe ser >= 3 (N={N}).", N=N)
    if not p > 1.0:
        raise DomainError(f"El exponente debe ser > 1 (p={p}).", p=p)
    gamma0 = (N - 2) ** 2 / 4.0
    lambda_N = float((N - 2) ** (-(N - 2))) if N <= 6 else None
    return ProfileConstants(
        p=float(p),
        N=int(N),
        gamma0=gamma0,
        amplitude_A=amplitude_A(p, N),
        lambda_N=lambda_N,
    )


def amplitude_A(p: float, N: int) -> float:
    """Coeficiente A de la cola w(t) ~ A e^{-sqrt(gamma0)|t|}."""
    if N < 3 or not p > 1.0:
        raise DomainError(f"Parámetros fuera de dominio (N={N}, p={p}).", N=N, p=p)
    gamma0 = (N - 2) ** 2 / 4.0
    return (gamma0 * (p + 1) / 2.0) ** (1.0 / (p - 1)) * 2.0 ** (2.0 / (p - 1))


def _as_finite(t: ArrayLike) -> NDArray[np.float64]:
    arr = np.asarray(t, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("El argumento t debe ser finito.")
    return arr


def _scalar_or_array(arr: NDArray[np.float64]) -> float | NDArray[np.float64]:
    return float(arr) if arr.ndim == 0 else arr


def eval_w(t: ArrayLike, consts: ProfileConstants) -> float | NDArray[np.float64]:
    """Perfil par w(t), solución positiva de w'' - gamma0 w + w^p = 0."""
    x = np.abs(_as_finite(t)) * (consts.p - 1) * consts.sqrt_gamma0 / 2.0
    q = 2.0 / (consts.p - 1)
    # cosh(x)^{-q} = 2^q e^{-q x} (1 + e^{-2x})^{-q}
    log_w = math.log(consts.amplitude_A) - q * (x + np.log1p(np.exp(-2.0 * x)))
    return _scalar_or_array(np.exp(log_w))


def eval_w_prime(t: ArrayLike, consts: ProfileConstants) -> float | NDArray[np.float64]:
    """Derivada analítica w'(t) = -sqrt(gamma0) tanh(x) w(t)."""
    arr = _as_finite(t)
    x = arr * (consts.p - 1) * consts.sqrt_gamma0 / 2.0
    return _scalar_or_array(-consts.sqrt_gamma0 * np.tanh(x) * np.asarray(eval_w(arr, consts)))


def eval_w_second(t: ArrayLike, consts: ProfileConstants) -> float | NDArray[np.float64]:
    """Segunda derivada obtenida de la propia ecuación de w."""
    w = np.asarray(eval_w(t, consts))
    return _scalar_or_array(consts.gamma0 * w - w**consts.p)


def _k1_series_complement(z: NDArray[np.float64]) -> NDArray[np.float64]:
    """1 - z K1(z) por la serie ascendente, sin cancelación para z pequeño."""
    y = z * z / 4.0
    total = np.zeros_like(z)
    term = np.ones_like(z)
    for k in range(_SERIES_TERMS):
        if k > 0:
            term = term * y / (k * (k + 1))
        total = total + (special.digamma(k + 1) + special.digamma(k + 2)) * term
    return -z * np.log(z / 2.0) * special.i1(z) + y * total


def _k2_series_complement(z: NDArray[np.float64]) -> NDArray[np.float64]:
    """1 - z^2 K2(z)/2 por la serie ascendente."""
    y = z * z / 4.0
    total = np.zeros_like(z)
    term = np.full_like(z, 0.5)
    for k in range(_SERIES_TERMS):
        if k > 0:
            term = term * y / (k * (k + 2))
        total = total + (special.digamma(k + 1) + special.digamma(k + 3)) * term
    return y + (z * z / 2.0) * np.log(z / 2.0) * special.iv(2, z) - y * y * total


def bessel_k(order: int, z: ArrayLike) -> float | NDArray[np.float64]:
    """Función de Bessel modificada de segunda especie K1 o K2."""
    if order not in (1, 2):
        raise DomainError(f"Solo se admiten los órdenes 1 y 2 (order={order}).", order=order)
    shape = np.shape(z)
    arr = np.atleast_1d(np.asarray(z, dtype=float))
    if not np.all(arr > 0.0):
        raise DomainError("K_nu requiere z > 0.")
    small = arr < _SERIES_CUTOFF
    out = np.empty_like(arr)
    zs = arr[small]
    if order == 1:
        out[small] = (1.0 - _k1_series_complement(zs)) / zs
        out[~small] = special.k1(arr[~small])
    else:
        out[small] = 2.0 * (1.0 - _k2_series_complement(zs)) / (zs * zs)
        out[~small] = special.kn(2, arr[~small])
    return _scalar_or_array(out.reshape(shape))


def _bracket(s: NDArray[np.float64], N: int) -> tuple[NDArray[np.float64], NDArray[np.float64]]:
    """Devuelve B(s) y B'(s) con phi_N = -e^{-(N-2)s/2} B(s)."""
    if N in (3, 5):
        sc = np.clip(s, -700.0, 700.0)
        z = np.exp(sc)
        power = 1.0 if N == 3 else 2.0
        return special.gammainc(power, z), np.exp(power * sc - z)

    zc = np.exp(np.clip(s, -700.0, _BESSEL_S_CLIP))
    small = zc < _SERIES_CUTOFF
    bracket = np.empty_like(zc)
    if N == 4:
        bracket[small] = _k1_series_complement(zc[small])
        bracket[~small] = 1.0 - zc[~small] * special.k1(zc[~small])
        derivative = zc * zc * special.k0(zc)
    else:
        bracket[small] = _k2_series_complement(zc[small])
        bracket[~small] = 1.0 - 0.5 * zc[~small] ** 2 * special.kn(2, zc[~small])
        derivative = 0.5 * zc**3 * special.k1(zc)
    clipped = s > _BESSEL_S_CLIP
    bracket[clipped] = 1.0
    derivative[clipped] = 0.0
    return bracket, derivative


def correction_profile(s: ArrayLike, N: int) -> float | NDArray[np.float64]:
    """Corrección normalizada phi_N(s), nula para N > 6."""
    if N < 3:
        raise DomainError(f"La dimensión debe ser >= 3 (N={N}).", N=N)
    arr = np.asarray(s, dtype=float)
    if N > 6:
        return _scalar_or_array(np.zeros_like(arr))
    bracket, _ = _bracket(np.atleast_1d(arr), N)
    value = -np.exp(-(N - 2) * np.atleast_1d(arr) / 2.0) * bracket
    return _scalar_or_array(value.reshape(arr.shape))


def correction_profile_prime(s: ArrayLike, N: int) -> float | NDArray[np.float64]:
    """Derivada analítica de phi_N respecto de s."""
    if N < 3:
        raise DomainError(f"La dimensión debe ser >= 3 (N={N}).", N=N)
    arr = np.asarray(s, dtype=float)
    if N > 6:
        return _scalar_or_array(np.zeros_like(arr))
    flat = np.atleast_1d(arr)
    bracket, derivative = _bracket(flat, N)
    k = (N - 2) / 2.0
    decay = np.exp(-k * flat)
    value = k * decay * bracket - decay * derivative
    return _scalar_or_array(value.reshape(arr.shape))


def correction_profile_second(s: ArrayLike, N: int) -> float | NDArray[np.float64]:
    """phi_N'' despejada de phi'' = (gamma0 + e^{2s}) phi + e^{-(N-6)s/2}."""
    arr = np.asarray(s, dtype=float)
    if N > 6:
        return _scalar_or_array(np.zeros_like(arr))
    gamma0 = (N - 2) ** 2 / 4.0
    phi = np.asarray(correction_profile(arr, N))
    with np.errstate(over="ignore", invalid="ignore"):
        value = (gamma0 + np.exp(2.0 * arr)) * phi + np.exp(-(N - 6) * arr / 2.0)
    return _scalar_or_array(np.where(np.isfinite(value), value, 0.0))


def integrate_profile(
    integrand: Callable[[float], float],
    quadrature: QuadratureSpec,
    *,
    even: bool = False,
) -> tuple[float, float]:
    """Integra sobre [-L, L] con quad y devuelve (valor, error estimado)."""
    L = quadrature.half_width
    pieces = [(0.0, L)] if even else [(-L, 0.0), (0.0, L)]
    total = 0.0
    error = 0.0
    for lo, hi in pieces:
        value, err = integrate.quad(
            integrand, lo, hi, epsabs=quadrature.epsabs, epsrel=quadrature.epsrel, limit=quadrature.limit
        )
        total += value
        error += err
    factor = 2.0 if even else 1.0
    return factor * total, factor * error


def checked_quadrature(value: float, error: float, quadrature: QuadratureSpec, name: str) -> float:
    tolerance = max(quadrature.epsabs, quadrature.epsrel * abs(value)) * 100.0
    if not np.isfinite(value) or error > tolerance:
        raise ConvergenceError(
            f"La cuadratura de {name} no convergió (error estimado {error:.3e}).",
            achieved=error,
            requested=tolerance,
        )
    return value


def pohozaev_check(consts: ProfileConstants, quadrature: QuadratureSpec | None = None) -> tuple[float, float]:
    """Residuos relativos de las dos identidades integrales de w."""
    quadrature = quadrature or QuadratureSpec()
    if quadrature.half_width < 40.0:
        raise DomainError("La ventana de cuadratura debe cubrir |t| <= 40.", half_width=quadrature.half_width)
    p = consts.p

    def w(t: float) -> float:
        return float(eval_w(t, consts))

    def wp(t: float) -> float:
        return float(eval_w_prime(t, consts))

    grad = checked_quadrature(*integrate_profile(lambda t: wp(t) ** 2, quadrature, even=True), quadrature, "|w'|^2")
    power = checked_quadrature(*integrate_profile(lambda t: w(t) ** (p + 1), quadrature, even=True), quadrature, "w^{p+1}")
    mass = checked_quadrature(*integrate_profile(lambda t: w(t) ** 2, quadrature, even=True), quadrature, "w^2")

    residual1 = abs(grad - (0.5 - 1.0 / (p + 1)) * power) / grad
    residual2 = abs(grad - consts.gamma0 * (p - 1) / (p + 3) * mass) / grad
    return residual1, residual2
