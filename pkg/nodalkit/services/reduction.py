"""Reducción finito-dimensional: constantes, energía reducida, punto crítico y resolución proyectada."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Any

import numpy as np
from numpy.typing import NDArray
from scipy import optimize, sparse
from scipy.sparse.linalg import splu

from nodalkit.core.errors import BracketError, ConvergenceError, DomainError, GridError
from nodalkit.services.ansatz import (
    DEFAULT_MARGIN,
    DEFAULT_RIGHT_EDGE,
    AnsatzParams,
    ansatz_residual,
    apply_operator,
    build_ansatz,
    check_margin,
    dt_ansatz,
    linear_operator,
    nonlinear_term,
    z_vector,
)
from nodalkit.services.special import (
    QuadratureSpec,
    checked_quadrature,
    eval_w,
    eval_w_prime,
    integrate_profile,
    profile_constants,
)
from nodalkit.services.transform import (
    FowlerParams,
    TransformedSolution,
    energy,
    grid_step,
    params_of,
    weighted_l2,
)

FloatArray = NDArray[np.float64]
Point = tuple[float, float]

_LOGGER = logging.getLogger("nodalkit").getChild("reduction")

_N4_BRACKET = (-40.0, -1.0)
_GROWTH_LIMIT = 3


@dataclass(frozen=True)
class ReductionConstants:
    """Constantes límite (a0, b0) en el exponente crítico y las integrales en el exponente actual."""

    N: int
    p: float
    a0: float
    b0: float
    a: float
    b: float
    grad_sq: float
    power: float
    mass: float
    coupling: float
    second_moment: float | None
    amplitude: float

    @property
    def pohozaev_coefficient(self) -> float:
        """(1/2 - 1/(p+1)) veces la integral de w^{p+1}."""
        return (0.5 - 1.0 / (self.p + 1.0)) * self.power

    @property
    def interaction(self) -> float:
        """A por la integral de w^p e^{sqrt(gamma0) t}."""
        return self.amplitude * self.coupling

    @property
    def integrals(self) -> dict[str, float | None]:
        return {
            "grad_sq": self.grad_sq,
            "power": self.power,
            "mass": self.mass,
            "coupling": self.coupling,
            "second_moment": self.second_moment,
            "amplitude": self.amplitude,
        }

    def to_payload(self) -> dict[str, Any]:
        return {
            "N": self.N,
            "p": self.p,
            "a0": self.a0,
            "b0": self.b0,
            "a": self.a,
            "b": self.b,
            "D": self.pohozaev_coefficient,
            "C": self.interaction,
            "lambda_N": profile_constants(self.p, self.N).lambda_N,
            "integrals": self.integrals,
        }


@lru_cache(maxsize=64)
def _profile_integrals(p: float, N: int, quadrature: QuadratureSpec) -> tuple[float, float, float, float, float | None]:
    consts = profile_constants(p, N)
    k = consts.sqrt_gamma0

    def w(t: float) -> float:
        return float(eval_w(t, consts))

    def run(name: str, func, *, even: bool) -> float:
        return checked_quadrature(*integrate_profile(func, quadrature, even=even), quadrature, name)

    grad_sq = run("|w'|^2", lambda t: float(eval_w_prime(t, consts)) ** 2, even=True)
    power = run("w^{p+1}", lambda t: w(t) ** (p + 1), even=True)
    mass = run("w^2", lambda t: w(t) ** 2, even=True)
    coupling = run("w^p e^{kt}", lambda t: w(t) ** p * math.exp(k * t), even=False)
    second = run("w^2 e^{2t}", lambda t: w(t) ** 2 * math.exp(2.0 * t), even=False) if N >= 5 else None
    return grad_sq, power, mass, coupling, second


def _quotients(N: int, grad_sq: float, coupling: float, amplitude: float, second: float | None) -> tuple[float, float]:
    C = amplitude * coupling
    if N == 3:
        return 4.0 * grad_sq / C, 2.0 * grad_sq / C
    if N == 4:
        return 8.0 * grad_sq / C, grad_sq / C
    assert second is not None
    return 2.0 * grad_sq / second, 2.0 * grad_sq / ((N - 2) * C)


def constants_ab(N: int, params: FowlerParams | None = None, quadrature: QuadratureSpec | None = None) -> ReductionConstants:
    """Constantes (a0, b0) del balance de la energía reducida y las integrales asociadas.

    Sin ``params`` todo se evalúa en el exponente crítico.
    """
    if N < 3:
        raise DomainError(f"La dimensión debe ser >= 3 (N={N}).", N=N)
    quadrature = quadrature or QuadratureSpec()
    params = params or params_of(0.0, N)
    if params.N != N:
        raise DomainError("La dimensión de params no coincide con N.", N=N, params_N=params.N)

    p_crit = (N + 2) / (N - 2)
    crit = _profile_integrals(p_crit, N, quadrature)
    a0, b0 = _quotients(N, crit[0], crit[3], profile_constants(p_crit, N).amplitude_A, crit[4])

    grad_sq, power, mass, coupling, second = _profile_integrals(params.p, N, quadrature)
    amplitude = params.profile.amplitude_A
    a, b = _quotients(N, grad_sq, coupling, amplitude, second)
    if not (a0 > 0 and b0 > 0):
        raise ConvergenceError("Las constantes a0, b0 deben ser positivas.", a0=a0, b0=b0)
    return ReductionConstants(
        N=N,
        p=params.p,
        a0=a0,
        b0=b0,
        a=a,
        b=b,
        grad_sq=grad_sq,
        power=power,
        mass=mass,
        coupling=coupling,
        second_moment=second,
        amplitude=amplitude,
    )


def _require_beta(params: FowlerParams) -> None:
    if not params.beta > 0.0:
        raise DomainError("Se requiere beta > 0 (epsilon > 0).", eps=params.eps)


def _solve_n4(value: float) -> float:
    """Raíz t2 < -1 de -2 t2 e^{2 t2} = value."""
    lo, hi = _N4_BRACKET

    def g(t2: float) -> float:
        return -2.0 * t2 * math.exp(2.0 * t2) - value

    if g(lo) * g(hi) > 0:
        raise BracketError(f"Sin cambio de signo para -2t e^(2t) = {value:.3e} en {_N4_BRACKET}.", value=value)
    return float(optimize.brentq(g, lo, hi, xtol=1e-15, rtol=4 * np.finfo(float).eps, maxiter=200))


def predicted_t(params: FowlerParams, consts: ReductionConstants) -> Point:
    """Ubicaciones asintóticas de los bultos a partir del balance de K tilde."""
    _require_beta(params)
    beta, a, b, N = params.beta, consts.a, consts.b, params.N
    if N == 3:
        return (
            math.log(a) + 2.0 * math.log(b) + 3.0 * math.log(beta),
            math.log(a) + math.log(beta),
        )
    if N == 4:
        t2 = _solve_n4(a * beta)
        return t2 + math.log(b) + math.log(beta), t2
    t2 = 0.5 * math.log(a) + 0.5 * math.log(beta)
    t1 = 0.5 * math.log(a) + 2.0 / (N - 2) * math.log(b) + (N + 2) / (2.0 * (N - 2)) * math.log(beta)
    return t1, t2


def lambda_coordinates(t: Point, N: int) -> Point:
    """Cantidades acotadas por la caja Lambda: (en t2, en t1 - t2)."""
    t1, t2 = t
    if N == 3:
        return math.exp(t2), math.exp((t1 - t2) / 2.0)
    if N == 4:
        return -2.0 * t2 * math.exp(2.0 * t2), math.exp(t1 - t2)
    return math.exp(2.0 * t2), math.exp((N - 2) * (t1 - t2) / 2.0)


def from_lambda_coordinates(x: float, y: float, N: int) -> Point:
    """Inversa de lambda_coordinates."""
    if N == 3:
        t2 = math.log(x)
        return t2 + 2.0 * math.log(y), t2
    if N == 4:
        t2 = _solve_n4(x)
        return t2 + math.log(y), t2
    t2 = 0.5 * math.log(x)
    return t2 + 2.0 / (N - 2) * math.log(y), t2


def lambda_box(params: FowlerParams, consts: ReductionConstants) -> dict[str, list[float]]:
    beta = params.beta
    return {
        "t2_quantity": [0.5 * consts.a0 * beta, 1.5 * consts.a0 * beta],
        "gap_quantity": [0.5 * consts.b0 * beta, 1.5 * consts.b0 * beta],
    }


def in_lambda(t: Point, params: FowlerParams, consts: ReductionConstants) -> bool:
    """Prueba de pertenencia a la caja abierta Lambda."""
    if params.beta <= 0.0:
        return False
    x, y = lambda_coordinates(t, params.N)
    box = lambda_box(params, consts)
    (x_lo, x_hi), (y_lo, y_hi) = box["t2_quantity"], box["gap_quantity"]
    return x_lo < x < x_hi and y_lo < y < y_hi


def _t2_term(t2: float, params: FowlerParams, consts: ReductionConstants) -> tuple[float, float, float]:
    """Término que depende solo de t2 y sus dos derivadas."""
    N = params.N
    if N == 3:
        value = 0.5 * consts.interaction * math.exp(t2)
        return value, value, value
    if N == 4:
        C = consts.interaction
        e2 = math.exp(2.0 * t2)
        return -0.25 * C * t2 * e2, -0.25 * C * (1.0 + 2.0 * t2) * e2, -C * (1.0 + t2) * e2
    assert consts.second_moment is not None
    e2 = math.exp(2.0 * t2)
    return 0.5 * consts.second_moment * e2, consts.second_moment * e2, 2.0 * consts.second_moment * e2


def _coupling_term(t: Point, params: FowlerParams, consts: ReductionConstants) -> tuple[float, float]:
    """Interacción C e^{-k|t1-t2|} y el signo de t2 - t1."""
    k = (params.N - 2) / 2.0
    t1, t2 = t
    return consts.interaction * math.exp(-k * abs(t1 - t2)), (1.0 if t2 >= t1 else -1.0)


def K_tilde(
    t: Point,
    params: FowlerParams,
    consts: ReductionConstants,
    logger: logging.Logger | None = None,
) -> float:
    """Energía reducida en forma cerrada."""
    if not in_lambda(t, params, consts):
        (logger or _LOGGER).warning("K tilde evaluada fuera de Lambda en t=(%.6f, %.6f)", *t)
    t1, t2 = t
    D = consts.pohozaev_coefficient
    X, _ = _coupling_term(t, params, consts)
    return D * (math.exp(-params.beta * t1) + math.exp(-params.beta * t2)) + _t2_term(t2, params, consts)[0] + X


def grad_K_tilde(t: Point, params: FowlerParams, consts: ReductionConstants) -> FloatArray:
    t1, t2 = t
    beta = params.beta
    k = (params.N - 2) / 2.0
    D = consts.pohozaev_coefficient
    X, sign = _coupling_term(t, params, consts)
    _, T1, _ = _t2_term(t2, params, consts)
    return np.array(
        [
            -beta * D * math.exp(-beta * t1) + k * sign * X,
            -beta * D * math.exp(-beta * t2) + T1 - k * sign * X,
        ]
    )


def hess_K_tilde(t: Point, params: FowlerParams, consts: ReductionConstants) -> FloatArray:
    t1, t2 = t
    beta = params.beta
    k2 = ((params.N - 2) / 2.0) ** 2
    D = consts.pohozaev_coefficient
    X, _ = _coupling_term(t, params, consts)
    _, _, T2 = _t2_term(t2, params, consts)
    return np.array(
        [
            [beta**2 * D * math.exp(-beta * t1) + k2 * X, -k2 * X],
            [-k2 * X, beta**2 * D * math.exp(-beta * t2) + T2 + k2 * X],
        ]
    )


@dataclass
class ReducedEnergyReport:
    t_star: Point
    t_pred: Point
    K_tilde_value: float
    hessian_scaled: list[list[float]]
    hessian_eigs: list[float]
    lambda_box: dict[str, list[float]]
    K_numeric_value: float | None = None
    discrepancies: dict[str, float] = field(default_factory=dict)
    trace: list[dict[str, Any]] = field(default_factory=list)
    starts: list[Point] = field(default_factory=list)

    def to_payload(self) -> dict[str, Any]:
        return {
            "t_star": list(self.t_star),
            "t_pred": list(self.t_pred),
            "K_tilde_value": self.K_tilde_value,
            "K_numeric_value": self.K_numeric_value,
            "hessian_scaled": self.hessian_scaled,
            "hessian_eigs": self.hessian_eigs,
            "lambda_box": self.lambda_box,
            "discrepancies": self.discrepancies,
            "newton_iterations": len(self.trace),
            "multistart": [list(item) for item in self.starts],
        }


def newton_critical(
    start: Point,
    params: FowlerParams,
    consts: ReductionConstants,
    *,
    max_iter: int = 60,
    grad_tol: float = 1e-12,
) -> tuple[Point, list[dict[str, Any]]]:
    """Newton amortiguado sobre grad K tilde; devuelve el punto y la traza."""
    x = np.array(start, dtype=float)
    scale = params.beta * consts.pohozaev_coefficient
    trace: list[dict[str, Any]] = []
    g = grad_K_tilde((x[0], x[1]), params, consts)
    for iteration in range(max_iter):
        norm = float(np.linalg.norm(g))
        trace.append({"iteration": iteration, "t": x.tolist(), "grad_norm": norm})
        if norm <= grad_tol * scale:
            return (float(x[0]), float(x[1])), trace
        step = np.linalg.solve(hess_K_tilde((x[0], x[1]), params, consts), -g)
        for _ in range(40):
            candidate = x + step
            g_new = grad_K_tilde((candidate[0], candidate[1]), params, consts)
            if np.linalg.norm(g_new) < norm:
                break
            step = 0.5 * step
        else:
            raise ConvergenceError("Newton no logra reducir el gradiente.", trace=trace)
        x, g = candidate, g_new
    raise ConvergenceError(f"Newton no convergió en {max_iter} iteraciones.", trace=trace)


def multistart_points(params: FowlerParams, consts: ReductionConstants) -> list[Point]:
    """Nueve arranques distribuidos en el interior de Lambda."""
    beta = params.beta
    factors = (0.6, 1.0, 1.4)
    return [
        from_lambda_coordinates(fx * consts.a0 * beta, fy * consts.b0 * beta, params.N)
        for fx in factors
        for fy in factors
    ]


def critical_point(
    params: FowlerParams,
    consts: ReductionConstants,
    *,
    max_iter: int = 60,
    grad_tol: float = 1e-12,
    multistart: bool = False,
    logger: logging.Logger | None = None,
) -> ReducedEnergyReport:
    """Punto crítico de K tilde en Lambda partiendo de las ubicaciones predichas."""
    logger = logger or _LOGGER
    _require_beta(params)
    t_pred = predicted_t(params, consts)
    t_star, trace = newton_critical(t_pred, params, consts, max_iter=max_iter, grad_tol=grad_tol)
    if not in_lambda(t_star, params, consts):
        raise ConvergenceError("El punto crítico salió de Lambda.", t_star=t_star, trace=trace)
    logger.info("Punto crítico de K tilde: t=(%.10f, %.10f) en %d iteraciones", *t_star, len(trace))

    hessian = hess_K_tilde(t_star, params, consts) / params.beta
    eigs = np.linalg.eigvalsh(hessian)
    starts: list[Point] = []
    if multistart:
        for start in multistart_points(params, consts):
            point, _ = newton_critical(start, params, consts, max_iter=max_iter, grad_tol=grad_tol)
            starts.append(point)
    return ReducedEnergyReport(
        t_star=t_star,
        t_pred=t_pred,
        K_tilde_value=K_tilde(t_star, params, consts, logger),
        hessian_scaled=hessian.tolist(),
        hessian_eigs=eigs.tolist(),
        lambda_box=lambda_box(params, consts),
        trace=trace,
        starts=starts,
    )


def reduction_grid(
    t: Point,
    step: float,
    margin: float = DEFAULT_MARGIN,
    right_edge: float = DEFAULT_RIGHT_EDGE,
) -> FloatArray:
    """Malla uniforme con un número impar de nodos (regla de Simpson compuesta exacta)."""
    left = t[0] - margin
    right = max(right_edge, t[1] + 1.0)
    count = int(math.ceil((right - left) / step)) + 1
    if count % 2 == 0:
        count += 1
    return np.linspace(left, right, count)


def simpson_weights(grid_t: FloatArray) -> FloatArray:
    """Pesos de Simpson compuesto para una malla uniforme de tamaño impar."""
    n = grid_t.size
    if n % 2 == 0:
        raise GridError("La regla de Simpson compuesta requiere un número impar de nodos.", size=n)
    h = grid_step(grid_t)
    weights = np.full(n, 2.0)
    weights[1::2] = 4.0
    weights[0] = weights[-1] = 1.0
    return weights * h / 3.0


@dataclass
class ProjectedSolve:
    """Corrección phi ortogonal a Z_1, Z_2 y los multiplicadores asociados."""

    t: Point
    grid_t: FloatArray
    phi: FloatArray
    c1: float
    c2: float
    ortho_defects: tuple[float, float]
    iterations: int
    sup_norm: float
    history: list[float] = field(default_factory=list)

    @property
    def multipliers(self) -> FloatArray:
        return np.array([self.c1, self.c2])


def solve_projected(
    t: Point,
    params: FowlerParams,
    grid_t: FloatArray,
    *,
    tol: float = 1e-12,
    max_iter: int = 100,
    margin: float = DEFAULT_MARGIN,
    right_edge: float = DEFAULT_RIGHT_EDGE,
    logger: logging.Logger | None = None,
) -> ProjectedSolve:
    """Resuelve L[phi] = -S[w] - N[phi] + sum c_j Z_j con <phi, Z_j> = 0 por punto fijo."""
    logger = logger or _LOGGER
    ap = AnsatzParams(t[0], t[1], params)
    check_margin(ap, grid_t, margin, right_edge)
    weights = simpson_weights(grid_t)

    w = build_ansatz(ap, grid_t).values_v
    S = ansatz_residual(ap, grid_t)
    Z = [z_vector(1, ap, grid_t), z_vector(2, ap, grid_t)]
    rows = [(z * weights * np.exp(-params.beta * grid_t))[1:-1] for z in Z]

    operator = linear_operator(w, grid_t, params)
    columns = sparse.csc_matrix(np.column_stack([-Z[0][1:-1], -Z[1][1:-1]]))
    constraints = sparse.csc_matrix(np.vstack(rows))
    bordered = sparse.bmat([[operator, columns], [constraints, None]], format="csc")
    try:
        lu = splu(bordered)
    except RuntimeError as exc:
        raise ConvergenceError("El sistema bordeado es singular.", t=t) from exc

    n = grid_t.size
    phi = np.zeros(n)
    multipliers = np.zeros(2)
    history: list[float] = []
    growth = 0
    damping = 1.0
    for iteration in range(1, max_iter + 1):
        rhs = np.concatenate([(-S - nonlinear_term(phi, w, params.p))[1:-1], np.zeros(2)])
        solution = lu.solve(rhs)
        candidate = np.zeros(n)
        candidate[1:-1] = solution[:-2]
        update = float(np.max(np.abs(candidate - phi)))
        if history and update > history[-1]:
            growth += 1
            damping = 0.5
            if growth >= _GROWTH_LIMIT:
                raise ConvergenceError(
                    "El punto fijo no contrae (la actualización crece en iteraciones consecutivas).",
                    history=history + [update],
                )
        else:
            growth = 0
        history.append(update)
        phi = phi + damping * (candidate - phi)
        multipliers = solution[-2:]
        if update < tol:
            break
    else:
        raise ConvergenceError(f"El punto fijo no convergió en {max_iter} iteraciones.", history=history)

    defects = (weighted_l2(phi, Z[0], grid_t, params), weighted_l2(phi, Z[1], grid_t, params))
    logger.debug("Resolución proyectada en t=(%.6f, %.6f): %d iteraciones, |phi|=%.3e", t[0], t[1], iteration, np.abs(phi).max())
    return ProjectedSolve(
        t=(float(t[0]), float(t[1])),
        grid_t=grid_t,
        phi=phi,
        c1=float(multipliers[0]),
        c2=float(multipliers[1]),
        ortho_defects=(float(defects[0]), float(defects[1])),
        iterations=iteration,
        sup_norm=float(np.max(np.abs(phi))),
        history=history,
    )


def corrected_solution(t: Point, params: FowlerParams, solve: ProjectedSolve) -> TransformedSolution:
    """w_{eps,t} + phi_{eps,t} sobre la malla de la resolución."""
    ap = AnsatzParams(t[0], t[1], params)
    w = build_ansatz(ap, solve.grid_t).values_v
    return TransformedSolution(grid_t=solve.grid_t, values_v=w + solve.phi, params=params)


def K_numeric(t: Point, params: FowlerParams, grid_t: FloatArray, **solve_options: Any) -> float:
    """K_eps(t) = E_eps[w_{eps,t} + phi_{eps,t}]."""
    solve = solve_projected(t, params, grid_t, **solve_options)
    return energy(corrected_solution(t, params, solve)).value


def _fd_step(params: FowlerParams) -> float:
    return max(1e-3, params.beta / 10.0)


def grad_K_numeric(t: Point, params: FowlerParams, grid_t: FloatArray, **solve_options: Any) -> FloatArray:
    """Gradiente de K_numeric por diferencias centradas."""
    h = _fd_step(params)
    grad = np.zeros(2)
    for i in range(2):
        plus, minus = list(t), list(t)
        plus[i] += h
        minus[i] -= h
        grad[i] = (
            K_numeric((plus[0], plus[1]), params, grid_t, **solve_options)
            - K_numeric((minus[0], minus[1]), params, grid_t, **solve_options)
        ) / (2.0 * h)
    return grad


def hess_K_numeric(t: Point, params: FowlerParams, grid_t: FloatArray, **solve_options: Any) -> FloatArray:
    """Hessiana de K_numeric por diferencias centradas (solo diagnóstico)."""
    h = _fd_step(params)
    center = K_numeric(t, params, grid_t, **solve_options)

    def value(d1: float, d2: float) -> float:
        return K_numeric((t[0] + d1, t[1] + d2), params, grid_t, **solve_options)

    h11 = (value(h, 0.0) - 2.0 * center + value(-h, 0.0)) / h**2
    h22 = (value(0.0, h) - 2.0 * center + value(0.0, -h)) / h**2
    h12 = (value(h, h) - value(h, -h) - value(-h, h) + value(-h, -h)) / (4.0 * h**2)
    return np.array([[h11, h12], [h12, h22]])


@dataclass
class NumericCriticalPoint:
    """Punto crítico de K_eps con su gradiente y la resolución proyectada en ese punto."""

    t_star: Point
    gradient: FloatArray
    solve: ProjectedSolve
    residual_sup: float
    evaluations: int

    @property
    def grad_norm(self) -> float:
        return float(np.linalg.norm(self.gradient))

    @property
    def multiplier_sum(self) -> float:
        return float(np.sum(np.abs(self.solve.multipliers)))

    def to_payload(self) -> dict[str, Any]:
        return {
            "t_star": list(self.t_star),
            "gradient": self.gradient.tolist(),
            "multipliers": self.solve.multipliers.tolist(),
            "residual_sup": self.residual_sup,
            "evaluations": self.evaluations,
        }


def numeric_critical_point(
    start: Point,
    params: FowlerParams,
    grid_t: FloatArray,
    *,
    xtol: float = 1e-12,
    grad_tol: float = 1e-6,
    **solve_options: Any,
) -> NumericCriticalPoint:
    """Raíz del gradiente en diferencias de K_numeric partiendo de ``start``.

    Los multiplicadores c_1, c_2 se calculan después, en el punto hallado, y no
    intervienen en la búsqueda.
    """
    _require_beta(params)
    scale = params.beta
    evaluations = 0

    def gradient(x: FloatArray) -> FloatArray:
        nonlocal evaluations
        evaluations += 1
        return grad_K_numeric((float(x[0]), float(x[1])), params, grid_t, **solve_options) / scale

    result = optimize.root(gradient, np.asarray(start, dtype=float), method="hybr", options={"xtol": xtol})
    point = (float(result.x[0]), float(result.x[1]))
    grad = grad_K_numeric(point, params, grid_t, **solve_options)
    if float(np.linalg.norm(grad)) >= grad_tol * scale:
        raise ConvergenceError(
            f"No se encontró el punto crítico numérico: {result.message}",
            start=start,
            grad_norm=float(np.linalg.norm(grad)),
        )
    solve = solve_projected(point, params, grid_t, **solve_options)
    residual = ansatz_residual(AnsatzParams(point[0], point[1], params), grid_t)
    return NumericCriticalPoint(
        t_star=point,
        gradient=grad,
        solve=solve,
        residual_sup=float(np.max(np.abs(residual))),
        evaluations=evaluations,
    )


def energy_expansion_check(
    t: Point,
    params: FowlerParams,
    consts: ReductionConstants,
    *,
    step: float = 1e-3,
    margin: float = DEFAULT_MARGIN,
    right_edge: float = DEFAULT_RIGHT_EDGE,
) -> float:
    """|E_eps[w_{eps,t}] - forma cerrada| / beta."""
    _require_beta(params)
    grid_t = reduction_grid(t, step, margin, right_edge)
    direct = energy(build_ansatz(AnsatzParams(t[0], t[1], params), grid_t, margin=margin, right_edge=right_edge)).value
    return abs(direct - K_tilde(t, params, consts)) / params.beta


def fill_discrepancies(
    report: ReducedEnergyReport,
    params: FowlerParams,
    consts: ReductionConstants,
    *,
    numeric: bool = False,
    step: float = 1e-3,
    margin: float = DEFAULT_MARGIN,
    right_edge: float = DEFAULT_RIGHT_EDGE,
    **solve_options: Any,
) -> ReducedEnergyReport:
    """Completa ``discrepancies`` del reporte en t*; con ``numeric`` también K_numeric y su gradiente."""
    t = report.t_star
    report.discrepancies["expansion"] = energy_expansion_check(
        t, params, consts, step=step, margin=margin, right_edge=right_edge
    )
    if numeric:
        options = {"margin": margin, "right_edge": right_edge, **solve_options}
        grid = reduction_grid(t, step, margin, right_edge)
        report.K_numeric_value = K_numeric(t, params, grid, **options)
        report.discrepancies["energy"] = abs(report.K_numeric_value - K_tilde(t, params, consts)) / params.beta
        gap = grad_K_numeric(t, params, grid, **options) - grad_K_tilde(t, params, consts)
        report.discrepancies["gradient"] = float(np.linalg.norm(gap)) / params.beta
    return report


def lbar_pairing(
    i: int,
    j: int,
    t: Point,
    params: FowlerParams,
    grid_t: FloatArray,
    consts: ReductionConstants | None = None,
    solve: ProjectedSolve | None = None,
    **solve_options: Any,
) -> tuple[float, float]:
    """Pareo ponderado de L-barra[d_ti w] con d_tj w y su predicción en forma cerrada (N=3)."""
    if i not in (1, 2) or j not in (1, 2):
        raise DomainError(f"Índices inválidos (i={i}, j={j}).", i=i, j=j)
    solve = solve or solve_projected(t, params, grid_t, **solve_options)
    v = corrected_solution(t, params, solve).values_v
    ap = AnsatzParams(t[0], t[1], params)
    dwi, _ = dt_ansatz(i, ap, grid_t)
    dwj, _ = dt_ansatz(j, ap, grid_t)
    measured = weighted_l2(apply_operator(dwi, v, grid_t, params), dwj, grid_t, params)
    if params.N != 3:
        return measured, math.nan
    consts = consts or constants_ab(3, params)
    C = consts.interaction
    X = math.exp((t[0] - t[1]) / 2.0)
    if i == j == 1:
        predicted = -0.25 * X * C
    elif i != j:
        predicted = 0.25 * X * C
    else:
        predicted = -(0.25 * X + 0.5 * math.exp(t[1])) * C
    return measured, predicted
