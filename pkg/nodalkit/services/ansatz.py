"""Ansatz de dos bultos w_{eps,t} = w_{1,t1} - w_{2,t2}, funciones Z y residuo S_eps."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from numpy.typing import NDArray
from scipy import integrate, sparse

from nodalkit.core.errors import ConvergenceError, DomainError, GridError
from nodalkit.services.special import (
    correction_profile,
    correction_profile_prime,
    correction_profile_second,
    eval_w,
    eval_w_prime,
    eval_w_second,
)
from nodalkit.services.transform import (
    FowlerParams,
    TransformedSolution,
    d1,
    d2,
    grid_step,
    signed_power,
    uniform_grid,
)

FloatArray = NDArray[np.float64]

DEFAULT_MARGIN = 20.0
DEFAULT_RIGHT_EDGE = 4.0


@dataclass(frozen=True)
class AnsatzParams:
    """Ubicaciones de los bultos: máximo en t1 y mínimo en t2."""

    t1: float
    t2: float
    params: FowlerParams

    def __post_init__(self) -> None:
        if not (math.isfinite(self.t1) and math.isfinite(self.t2)):
            raise DomainError("Las ubicaciones de los bultos deben ser finitas.")
        if self.t1 > self.t2:
            raise DomainError(f"Se requiere t1 <= t2 (t1={self.t1}, t2={self.t2}).", t1=self.t1, t2=self.t2)

    @property
    def separation(self) -> float:
        return self.t2 - self.t1

    def location(self, j: int) -> float:
        if j not in (1, 2):
            raise DomainError(f"Índice de bulto inválido j={j}.", j=j)
        return self.t1 if j == 1 else self.t2


def w_shift(t: FloatArray | float, tj: float, params: FowlerParams) -> FloatArray | float:
    """Bulto trasladado w(t - tj) con el exponente dependiente de epsilon."""
    return eval_w(np.asarray(t, dtype=float) - tj, params.profile)


def _correction_scale(tj: float, params: FowlerParams) -> float:
    return params.profile.amplitude_A * math.exp((params.N - 2) * tj / 2.0)


def w_corrected(t: FloatArray | float, tj: float, params: FowlerParams) -> FloatArray | float:
    """Bulto corregido w_{j,tj} = w_{tj} + A e^{(N-2)tj/2} phi_N(t); sin corrección para N > 6."""
    base = w_shift(t, tj, params)
    if params.N > 6:
        return base
    return base + _correction_scale(tj, params) * correction_profile(t, params.N)


def _bump_jet(t: FloatArray, tj: float, params: FowlerParams) -> tuple[FloatArray, FloatArray, FloatArray]:
    """Valor, primera y segunda derivada en t del bulto corregido."""
    consts = params.profile
    s = t - tj
    value = np.asarray(eval_w(s, consts))
    first = np.asarray(eval_w_prime(s, consts))
    second = np.asarray(eval_w_second(s, consts))
    if params.N <= 6:
        scale = _correction_scale(tj, params)
        value = value + scale * np.asarray(correction_profile(t, params.N))
        first = first + scale * np.asarray(correction_profile_prime(t, params.N))
        second = second + scale * np.asarray(correction_profile_second(t, params.N))
    return value, first, second


def dt_bump(t: FloatArray | float, tj: float, params: FowlerParams) -> tuple[FloatArray, FloatArray]:
    """Derivada de w_{j,tj} respecto de tj y la derivada en t de esa cantidad."""
    arr = np.asarray(t, dtype=float)
    consts = params.profile
    value = -np.asarray(eval_w_prime(arr - tj, consts))
    derivative = -np.asarray(eval_w_second(arr - tj, consts))
    if params.N <= 6:
        k = (params.N - 2) / 2.0
        scale = k * _correction_scale(tj, params)
        value = value + scale * np.asarray(correction_profile(arr, params.N))
        derivative = derivative + scale * np.asarray(correction_profile_prime(arr, params.N))
    return value, derivative


def dt_ansatz(j: int, ap: AnsatzParams, grid_t: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Derivada del ansatz respecto de tj: (-1)^{j+1} veces la del bulto j."""
    value, derivative = dt_bump(grid_t, ap.location(j), ap.params)
    sign = 1.0 if j == 1 else -1.0
    return sign * value, sign * derivative


def check_margin(
    ap: AnsatzParams,
    grid_t: FloatArray,
    margin: float = DEFAULT_MARGIN,
    right_edge: float = DEFAULT_RIGHT_EDGE,
) -> float:
    """Valida que la malla cubra ambos bultos y devuelve su paso."""
    h = grid_step(grid_t)
    left_needed = ap.t1 - margin
    right_needed = max(min(ap.t2 + margin, right_edge), ap.t2)
    if grid_t[0] > left_needed + 1e-9 or grid_t[-1] < right_needed - 1e-9:
        raise GridError(
            f"La malla [{grid_t[0]:.3f}, {grid_t[-1]:.3f}] no cubre [{left_needed:.3f}, {right_needed:.3f}].",
            t1=ap.t1,
            t2=ap.t2,
        )
    return h


def ansatz_grid(ap: AnsatzParams, step: float, margin: float = DEFAULT_MARGIN, right_edge: float = DEFAULT_RIGHT_EDGE) -> FloatArray:
    """Malla uniforme estándar para un par de ubicaciones."""
    right = max(right_edge, ap.t2 + 1.0)
    return uniform_grid(ap.t1 - margin, right, step)


def build_ansatz(
    ap: AnsatzParams,
    grid_t: FloatArray,
    *,
    margin: float = DEFAULT_MARGIN,
    right_edge: float = DEFAULT_RIGHT_EDGE,
) -> TransformedSolution:
    check_margin(ap, grid_t, margin, right_edge)
    values = np.asarray(w_corrected(grid_t, ap.t1, ap.params)) - np.asarray(w_corrected(grid_t, ap.t2, ap.params))
    return TransformedSolution(grid_t=np.asarray(grid_t, dtype=float), values_v=values, params=ap.params)


def z_vector(j: int, ap: AnsatzParams, grid_t: FloatArray) -> FloatArray:
    """Z_{eps,tj} = (-1)^j [p w_{tj}^{p-1} w_{tj}' - beta (d_tj w_j)' - (gamma - gamma0) d_tj w_j]."""
    params = ap.params
    tj = ap.location(j)
    consts = params.profile
    s = np.asarray(grid_t, dtype=float) - tj
    w = np.asarray(eval_w(s, consts))
    wp = np.asarray(eval_w_prime(s, consts))
    dw, dw_prime = dt_bump(grid_t, tj, params)
    bracket = params.p * w ** (params.p - 1) * wp - params.beta * dw_prime - (params.gamma - params.gamma0) * dw
    return bracket if j == 2 else -bracket


def residual_S(v: TransformedSolution) -> FloatArray:
    """S_eps[v] = v'' - beta v' - (gamma + e^{2t}) v + |v|^{p-1} v por diferencias de cuarto orden."""
    params = v.params
    h = grid_step(v.grid_t)
    values = v.values_v
    return (
        d2(values, h)
        - params.beta * d1(values, h)
        - (params.gamma + np.exp(2.0 * v.grid_t)) * values
        + signed_power(values, params.p)
    )


def ansatz_residual(ap: AnsatzParams, grid_t: FloatArray) -> FloatArray:
    """S_eps[w_{eps,t}] con las derivadas analíticas de ambos bultos."""
    params = ap.params
    grid_t = np.asarray(grid_t, dtype=float)
    v1, dv1, ddv1 = _bump_jet(grid_t, ap.t1, params)
    v2, dv2, ddv2 = _bump_jet(grid_t, ap.t2, params)
    v, dv, ddv = v1 - v2, dv1 - dv2, ddv1 - ddv2
    return ddv - params.beta * dv - (params.gamma + np.exp(2.0 * grid_t)) * v + signed_power(v, params.p)


def residual_bound(ap: AnsatzParams, tau: float) -> float:
    """Lado derecho de la cota del residuo según la dimensión."""
    params = ap.params
    if not tau > 0.0:
        raise DomainError(f"tau debe ser positivo (tau={tau}).", tau=tau)
    gap = abs(ap.t1 - ap.t2)
    if params.N == 3:
        return params.beta + math.exp(tau * ap.t2) + math.exp(-tau * gap / 2.0)
    if params.N == 4:
        return params.beta + abs(ap.t2) ** tau * math.exp(2.0 * tau * ap.t2) + math.exp(-tau * gap)
    return params.beta + math.exp(2.0 * tau * ap.t2) + math.exp(-tau * (params.N - 2) * gap / 2.0)


class ResidualNorms(NamedTuple):
    sup: float
    weighted_l1: float
    bound: float
    ratio: float


def residual_norms(
    ap: AnsatzParams,
    tau: float,
    *,
    step: float = 1e-3,
    margin: float = DEFAULT_MARGIN,
    right_edge: float = DEFAULT_RIGHT_EDGE,
) -> ResidualNorms:
    """Normas sup y L^1 ponderada del residuo del ansatz y su cociente con la cota."""
    grid_t = ansatz_grid(ap, step, margin, right_edge)
    residual = ansatz_residual(ap, grid_t)
    sup = float(np.max(np.abs(residual)))
    weighted = float(integrate.simpson(np.abs(residual) * np.exp(-ap.params.beta * grid_t), x=grid_t))
    bound = residual_bound(ap, tau)
    return ResidualNorms(sup=sup, weighted_l1=weighted, bound=bound, ratio=(sup + weighted) / bound)


class InteractionResult(NamedTuple):
    lhs: float
    rhs_prediction: float

    @property
    def relative_error(self) -> float:
        return abs(self.lhs / self.rhs_prediction - 1.0)


def _quad(func, lo: float, hi: float) -> float:
    value, error = integrate.quad(func, lo, hi, epsabs=1e-15, epsrel=1e-12, limit=500)
    if not math.isfinite(value):
        raise ConvergenceError("La cuadratura de interacción no es finita.", lo=lo, hi=hi)
    return value


def interaction(eta: float, theta: float, r: float, s: float, params: FowlerParams) -> InteractionResult:
    """Integral de interacción entre dos bultos y su predicción asintótica."""
    if not eta > theta > 0.0:
        raise DomainError(f"Se requiere eta > theta > 0 (eta={eta}, theta={theta}).", eta=eta, theta=theta)
    consts = params.profile
    lo, hi = sorted((r, s))

    def product(t: float) -> float:
        return float(eval_w(t - r, consts)) ** eta * float(eval_w(t - s, consts)) ** theta

    lhs = _quad(product, -np.inf, lo) + _quad(product, lo, hi) + _quad(product, hi, np.inf)
    rate = theta * consts.sqrt_gamma0
    moment = _quad(lambda x: float(eval_w(x, consts)) ** eta * math.exp(rate * x), -np.inf, np.inf)
    rhs = float(eval_w(hi - lo, consts)) ** theta * moment
    return InteractionResult(lhs=lhs, rhs_prediction=rhs)


def interaction_sup_ratio(eta: float, theta: float, r: float, s: float, params: FowlerParams, step: float = 1e-2) -> float:
    """sup_t w^eta(t-r) w^theta(t-s) dividido por w^theta(|r-s|)."""
    if not eta > theta > 0.0:
        raise DomainError(f"Se requiere eta > theta > 0 (eta={eta}, theta={theta}).", eta=eta, theta=theta)
    consts = params.profile
    lo, hi = sorted((r, s))
    grid = uniform_grid(lo - 20.0, hi + 20.0, step)
    product = np.asarray(eval_w(grid - r, consts)) ** eta * np.asarray(eval_w(grid - s, consts)) ** theta
    return float(product.max() / float(eval_w(hi - lo, consts)) ** theta)


def nonlinear_term(phi: FloatArray, w: FloatArray, p: float) -> FloatArray:
    """N_eps[phi] = |w+phi|^{p-1}(w+phi) - |w|^{p-1}w - p|w|^{p-1}phi."""
    return signed_power(w + phi, p) - signed_power(w, p) - p * np.abs(w) ** (p - 1) * phi


def linear_operator(base: FloatArray, grid_t: FloatArray, params: FowlerParams) -> sparse.csc_matrix:
    """Discretización centrada de segundo orden de
    phi'' - beta phi' - (gamma + e^{2t}) phi + p|base|^{p-1} phi
    sobre los nodos interiores, con phi = 0 en ambos extremos."""
    h = grid_step(grid_t)
    interior = np.asarray(grid_t)[1:-1]
    potential = params.p * np.abs(np.asarray(base)[1:-1]) ** (params.p - 1)
    diagonal = -2.0 / h**2 - params.gamma - np.exp(2.0 * interior) + potential
    lower = np.full(interior.size - 1, 1.0 / h**2 + params.beta / (2.0 * h))
    upper = np.full(interior.size - 1, 1.0 / h**2 - params.beta / (2.0 * h))
    return sparse.diags([lower, diagonal, upper], [-1, 0, 1], format="csc")


def apply_operator(f: FloatArray, base: FloatArray, grid_t: FloatArray, params: FowlerParams) -> FloatArray:
    """Aplica el mismo operador en forma fuerte con diferencias de cuarto orden."""
    h = grid_step(grid_t)
    potential = params.p * np.abs(base) ** (params.p - 1)
    return d2(f, h) - params.beta * d1(f, h) - (params.gamma + np.exp(2.0 * grid_t)) * f + potential * f
