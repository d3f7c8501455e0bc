"""Transformación de Emden-Fowler, productos internos ponderados y energías."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import simpson
from scipy.interpolate import CubicHermiteSpline, PchipInterpolator

from nodalkit.core.errors import DomainError, GridError
from nodalkit.services.special import ProfileConstants, profile_constants

FloatArray = NDArray[np.float64]


@dataclass(frozen=True)
class FowlerParams:
    """Parámetros escalares que dependen de epsilon y de la dimensión."""

    eps: float
    N: int
    p: float
    beta: float
    gamma: float
    gamma0: float
    alpha_exp: float

    @property
    def critical_p(self) -> float:
        return (self.N + 2) / (self.N - 2)

    @property
    def profile(self) -> ProfileConstants:
        """Constantes del perfil w con el exponente subcrítico."""
        return profile_constants(self.p, self.N)


def params_of(eps: float, N: int) -> FowlerParams:
    """Deriva (p, beta, gamma, alpha) a partir de epsilon y N."""
    if N < 3:
        raise DomainError(f"La dimensión debe ser >= 3 (N={N}).", N=N)
    upper = 4.0 / (N - 2)
    if not (0.0 <= eps < upper) or not math.isfinite(eps):
        raise DomainError(f"epsilon={eps} fuera de [0, {upper}).", eps=eps, N=N)
    gamma0 = (N - 2) ** 2 / 4.0
    beta = (N - 2) ** 2 * eps / (4.0 - (N - 2) * eps)
    p = (N + 2) / (N - 2) - eps
    return FowlerParams(
        eps=float(eps),
        N=int(N),
        p=p,
        beta=beta,
        gamma=gamma0 - beta**2 / 4.0,
        gamma0=gamma0,
        alpha_exp=2.0 / (p - 1),
    )


def params_of_p(p: float, N: int) -> FowlerParams:
    """Variante de params_of que recibe el exponente en lugar de epsilon."""
    if N < 3:
        raise DomainError(f"La dimensión debe ser >= 3 (N={N}).", N=N)
    return params_of((N + 2) / (N - 2) - p, N)


@dataclass(frozen=True)
class TailFit:
    """Ajuste c·r^{-nu}K_nu(r) del campo lejano lineal, nu = (N-2)/2."""

    coefficient: float
    r_match: float
    window: tuple[float, float]
    mismatch: float


@dataclass
class RadialSolution:
    """Perfil radial u(r) sobre una malla uniforme en log r."""

    grid_r: FloatArray
    values_u: FloatArray
    values_du: FloatArray
    alpha0: float
    nodes: tuple[float, ...]
    N: int
    p: float
    tail: TailFit | None = None
    meta: dict[str, Any] = field(default_factory=dict)

    @property
    def node_count(self) -> int:
        return len(self.nodes)

    def to_payload(self) -> dict[str, Any]:
        """Representación JSON con precisión de ida y vuelta."""
        return {
            "N": self.N,
            "p": self.p,
            "alpha0": self.alpha0,
            "nodes": list(self.nodes),
            "grid_r": self.grid_r.tolist(),
            "values_u": self.values_u.tolist(),
            "values_du": self.values_du.tolist(),
            "tail": None
            if self.tail is None
            else {
                "coefficient": self.tail.coefficient,
                "r_match": self.tail.r_match,
                "window": list(self.tail.window),
                "mismatch": self.tail.mismatch,
            },
            "meta": self.meta,
        }

    @classmethod
    def from_payload(cls, payload: dict[str, Any]) -> "RadialSolution":
        tail = payload.get("tail")
        return cls(
            grid_r=np.asarray(payload["grid_r"], dtype=float),
            values_u=np.asarray(payload["values_u"], dtype=float),
            values_du=np.asarray(payload["values_du"], dtype=float),
            alpha0=float(payload["alpha0"]),
            nodes=tuple(float(x) for x in payload["nodes"]),
            N=int(payload["N"]),
            p=float(payload["p"]),
            tail=None
            if tail is None
            else TailFit(
                coefficient=float(tail["coefficient"]),
                r_match=float(tail["r_match"]),
                window=(float(tail["window"][0]), float(tail["window"][1])),
                mismatch=float(tail["mismatch"]),
            ),
            meta=dict(payload.get("meta", {})),
        )


@dataclass
class TransformedSolution:
    """Perfil v(t) sobre una malla uniforme en t."""

    grid_t: FloatArray
    values_v: FloatArray
    params: FowlerParams

    @property
    def step(self) -> float:
        return grid_step(self.grid_t)


def uniform_grid(left: float, right: float, step: float) -> FloatArray:
    """Malla uniforme que contiene ambos extremos con paso lo más cercano posible a ``step``."""
    if not right > left or not step > 0.0:
        raise GridError(f"Ventana inválida [{left}, {right}] con paso {step}.")
    count = int(math.ceil((right - left) / step - 1e-9)) + 1
    return np.linspace(left, right, max(count, 5))


def grid_step(grid: FloatArray) -> float:
    """Paso de una malla uniforme; falla si la malla no es uniforme."""
    if grid.ndim != 1 or grid.size < 5:
        raise GridError("La malla debe ser unidimensional con al menos 5 puntos.")
    diffs = np.diff(grid)
    h = float(diffs.mean())
    if not np.allclose(diffs, h, rtol=1e-8, atol=1e-12 * max(1.0, abs(grid).max())):
        raise GridError("La malla no es uniforme.")
    return h


def d1(f: FloatArray, h: float) -> FloatArray:
    """Primera derivada de cuarto orden en el interior y de segundo orden en los bordes."""
    out = np.gradient(f, h, edge_order=2)
    out[2:-2] = (f[:-4] - 8.0 * f[1:-3] + 8.0 * f[3:-1] - f[4:]) / (12.0 * h)
    return out


def d2(f: FloatArray, h: float) -> FloatArray:
    """Segunda derivada de cuarto orden en el interior."""
    out = np.empty_like(f)
    out[2:-2] = (-f[:-4] + 16.0 * f[1:-3] - 30.0 * f[2:-2] + 16.0 * f[3:-1] - f[4:]) / (12.0 * h * h)
    out[1] = (f[0] - 2.0 * f[1] + f[2]) / (h * h)
    out[-2] = (f[-3] - 2.0 * f[-2] + f[-1]) / (h * h)
    out[0] = (2.0 * f[0] - 5.0 * f[1] + 4.0 * f[2] - f[3]) / (h * h)
    out[-1] = (2.0 * f[-1] - 5.0 * f[-2] + 4.0 * f[-3] - f[-4]) / (h * h)
    return out


def signed_power(values: FloatArray, p: float) -> FloatArray:
    """|x|^{p-1} x elemento a elemento."""
    return np.sign(values) * np.abs(values) ** p


def sign_changes(grid: FloatArray, values: FloatArray) -> tuple[float, ...]:
    """Ceros simples por cambio de signo, refinados por interpolación lineal."""
    s = np.sign(values)
    idx = np.nonzero(s[:-1] * s[1:] < 0)[0]
    roots = []
    for i in idx:
        f0, f1 = values[i], values[i + 1]
        roots.append(float(grid[i] - f0 * (grid[i + 1] - grid[i]) / (f1 - f0)))
    return tuple(roots)


def fowler_window(t_first: float, params: FowlerParams, left_margin: float, right_edge: float) -> tuple[float, float]:
    """Ventana de truncamiento [t_first - margen, right_edge].

    El margen crece para N pequeño de modo que las colas e^{-sqrt(gamma0)|t|}
    queden por debajo de 1e-7 en el extremo izquierdo.
    """
    margin = max(left_margin, 16.0 / math.sqrt(params.gamma0))
    return t_first - margin, right_edge


def to_fowler(u: RadialSolution, params: FowlerParams, grid_t: FloatArray) -> TransformedSolution:
    """v(t) = e^{alpha t} u(e^t) por interpolación cúbica de Hermite en log r.

    Las pendientes son r u'(r), exactas del integrador, no estimadas como en PCHIP:
    PCHIP anula la pendiente en los extremos de u y baja a primer orden allí.
    Los cruces por cero quedan en los mismos intervalos de la malla del perfil,
    que es la misma malla logarítmica del disparo. ``resample_monotone`` ofrece
    la variante monótona.
    """
    if abs(params.p - u.p) > 1e-12 or params.N != u.N:
        raise GridError("Los parámetros de Fowler no corresponden al perfil radial.", p=params.p, profile_p=u.p)
    s = np.log(u.grid_r)
    lo, hi = float(s[0]), float(s[-1])
    grid_t = np.asarray(grid_t, dtype=float)
    slack = 1e-9 * max(1.0, abs(lo), abs(hi))
    if grid_t[0] < lo - slack or grid_t[-1] > hi + slack:
        raise GridError(
            f"La malla en t [{grid_t[0]:.4f}, {grid_t[-1]:.4f}] excede el perfil [{lo:.4f}, {hi:.4f}].",
        )
    spline = CubicHermiteSpline(s, u.values_u, u.grid_r * u.values_du)
    values_u = spline(np.clip(grid_t, lo, hi))
    return TransformedSolution(
        grid_t=grid_t,
        values_v=np.exp(params.alpha_exp * grid_t) * values_u,
        params=params,
    )


def from_fowler(v: TransformedSolution) -> RadialSolution:
    """Inversa de to_fowler: u(r) = r^{-alpha} v(log r)."""
    params = v.params
    h = grid_step(v.grid_t)
    t = v.grid_t
    alpha = params.alpha_exp
    dv = d1(v.values_v, h)
    values_u = np.exp(-alpha * t) * v.values_v
    values_du = np.exp(-(alpha + 1.0) * t) * (dv - alpha * v.values_v)
    nodes = tuple(math.exp(x) for x in sign_changes(t, v.values_v))
    return RadialSolution(
        grid_r=np.exp(t),
        values_u=values_u,
        values_du=values_du,
        alpha0=float(values_u[0]),
        nodes=nodes,
        N=params.N,
        p=params.p,
    )


def resample_monotone(u: RadialSolution, radii: FloatArray) -> FloatArray:
    """Evalúa u en radios arbitrarios con interpolación monótona (PCHIP) en log r."""
    spline = PchipInterpolator(np.log(u.grid_r), u.values_u, extrapolate=False)
    return spline(np.log(radii))


def _check_common(f: FloatArray, g: FloatArray, grid_t: FloatArray) -> float:
    if f.shape != grid_t.shape or g.shape != grid_t.shape:
        raise GridError("Las funciones de malla deben compartir la malla.", f=f.shape, g=g.shape, grid=grid_t.shape)
    return grid_step(grid_t)


def weighted_inner(f: FloatArray, g: FloatArray, grid_t: FloatArray, params: FowlerParams) -> float:
    """Producto de H: integral de [f'g' + (gamma + e^{2t}) f g] e^{-beta t}."""
    h = _check_common(f, g, grid_t)
    weight = np.exp(-params.beta * grid_t)
    integrand = (d1(f, h) * d1(g, h) + (params.gamma + np.exp(2.0 * grid_t)) * f * g) * weight
    return float(simpson(integrand, x=grid_t))


def weighted_l2(f: FloatArray, g: FloatArray, grid_t: FloatArray, params: FowlerParams) -> float:
    """Producto L^2 con peso e^{-beta t}."""
    _check_common(f, g, grid_t)
    return float(simpson(f * g * np.exp(-params.beta * grid_t), x=grid_t))


@dataclass(frozen=True)
class Energy:
    """Valor de la energía con las advertencias de truncamiento asociadas."""

    value: float
    endpoint_values: tuple[float, float]
    warnings: tuple[str, ...] = ()

    def __float__(self) -> float:
        return self.value


def energy(v: TransformedSolution, truncation_tol: float = 1e-8) -> Energy:
    """E_eps(v) por cuadratura de Simpson compuesta."""
    params = v.params
    t = v.grid_t
    h = grid_step(t)
    values = v.values_v
    weight = np.exp(-params.beta * t)
    quadratic = (d1(values, h) ** 2 + (params.gamma + np.exp(2.0 * t)) * values**2) * weight
    power = np.abs(values) ** (params.p + 1) * weight
    value = 0.5 * simpson(quadratic, x=t) - simpson(power, x=t) / (params.p + 1)
    ends = (float(values[0]), float(values[-1]))
    warnings: tuple[str, ...] = ()
    if max(abs(ends[0]), abs(ends[1])) > truncation_tol:
        warnings = (f"truncation: valores en los extremos {ends[0]:.3e}, {ends[1]:.3e} > {truncation_tol:.1e}",)
    return Energy(value=float(value), endpoint_values=ends, warnings=warnings)


def _radial_integrals(u: RadialSolution) -> tuple[float, float, float]:
    s = np.log(u.grid_r)
    jac = u.grid_r**u.N
    grad = float(simpson(u.values_du**2 * jac, x=s))
    mass = float(simpson(u.values_u**2 * jac, x=s))
    power = float(simpson(np.abs(u.values_u) ** (u.p + 1) * jac, x=s))
    return grad, mass, power


def energy_radial(u: RadialSolution) -> float:
    """Energía en variables radiales, integrada en log r."""
    grad, mass, power = _radial_integrals(u)
    return 0.5 * (grad + mass) - power / (u.p + 1)


def radial_identities(u: RadialSolution, v: TransformedSolution) -> dict[str, float]:
    """Discrepancias relativas de las tres identidades del cambio de variables."""
    params = v.params
    t = v.grid_t
    h = grid_step(t)
    weight = np.exp(-params.beta * t)
    grad_r, mass_r, power_r = _radial_integrals(u)
    grad_t = float(simpson((d1(v.values_v, h) ** 2 + params.gamma * v.values_v**2) * weight, x=t))
    mass_t = float(simpson(np.exp(2.0 * t) * v.values_v**2 * weight, x=t))
    power_t = float(simpson(np.abs(v.values_v) ** (params.p + 1) * weight, x=t))
    return {
        "gradient": abs(grad_r - grad_t) / abs(grad_r),
        "mass": abs(mass_r - mass_t) / abs(mass_r),
        "power": abs(power_r - power_t) / abs(power_r),
    }
