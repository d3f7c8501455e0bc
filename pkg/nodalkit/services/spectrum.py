"""Análisis espectral del operador linealizado por modos esféricos."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import sparse
from scipy.integrate import simpson
from scipy.interpolate import CubicHermiteSpline
from scipy.linalg import eigh_tridiagonal
from scipy.sparse.linalg import eigs
from scipy.special import comb

from nodalkit.core.config import SolverConfig
from nodalkit.core.errors import DomainError, GridError, NodalkitError
from nodalkit.services.ansatz import AnsatzParams, dt_ansatz
from nodalkit.services.reduction import constants_ab, critical_point
from nodalkit.services.shooting import find_nodal
from nodalkit.services.special import eval_w, eval_w_prime, profile_constants
from nodalkit.services.transform import (
    FowlerParams,
    RadialSolution,
    d1,
    d2,
    fowler_window,
    grid_step,
    params_of,
    params_of_p,
    signed_power,
    to_fowler,
)

FloatArray = NDArray[np.float64]

_LOGGER = logging.getLogger("nodalkit").getChild("spectrum")

DEFAULT_STEP = 5e-3
DEFAULT_LEFT_MARGIN = 30.0
DEFAULT_RIGHT_EDGE = 5.0
DEFAULT_GRID_TOL = 1e-4


@dataclass(frozen=True)
class ModeSpec:
    """Nivel j del Laplace-Beltrami en S^{N-1}: lambda = j(N-2+j)."""

    k: int
    level: int
    lambda_k: float
    multiplicity: int


def level_multiplicity(N: int, j: int) -> int:
    """Dimensión de los armónicos esféricos de grado j en R^N."""
    if j == 0:
        return 1
    lower = int(comb(N + j - 3, j - 2, exact=True)) if j >= 2 else 0
    return int(comb(N + j - 1, j, exact=True)) - lower


def mode_of_level(N: int, j: int) -> ModeSpec:
    if N < 3 or j < 0:
        raise DomainError(f"Nivel inválido (N={N}, j={j}).", N=N, level=j)
    first_index = sum(level_multiplicity(N, i) for i in range(j))
    return ModeSpec(k=first_index, level=j, lambda_k=float(j * (N - 2 + j)), multiplicity=level_multiplicity(N, j))


def laplace_beltrami(N: int, count: int) -> list[ModeSpec]:
    """Primeros ``count`` autovalores del Laplace-Beltrami contados con multiplicidad."""
    modes: list[ModeSpec] = []
    j = 0
    while len(modes) < count:
        spec = mode_of_level(N, j)
        for offset in range(spec.multiplicity):
            modes.append(ModeSpec(k=spec.k + offset, level=j, lambda_k=spec.lambda_k, multiplicity=spec.multiplicity))
        j += 1
    return modes[:count]


@dataclass
class SpectrumReport:
    mode: ModeSpec
    eigenvalues: FloatArray
    eigenvectors: FloatArray
    grid_t: FloatArray
    eps: float
    coarse_eigenvalues: FloatArray | None = None
    fits: dict[str, Any] = field(default_factory=dict)
    xi: list[float] = field(default_factory=list)
    c0_estimate: float | None = None

    def smallest_abs(self, count: int = 1) -> FloatArray:
        order = np.argsort(np.abs(self.eigenvalues))
        return self.eigenvalues[order[:count]]

    def to_payload(self, include_vectors: bool = False) -> dict[str, Any]:
        payload: dict[str, Any] = {
            "mode": {
                "k": self.mode.k,
                "level": self.mode.level,
                "lambda": self.mode.lambda_k,
                "multiplicity": self.mode.multiplicity,
            },
            "eps": self.eps,
            "eigenvalues": self.eigenvalues.tolist(),
            "coarse_eigenvalues": None if self.coarse_eigenvalues is None else self.coarse_eigenvalues.tolist(),
            "fits": self.fits,
            "xi": self.xi,
            "c0_estimate": self.c0_estimate,
        }
        if include_vectors:
            payload["grid_t"] = self.grid_t.tolist()
            payload["eigenvectors"] = self.eigenvectors.tolist()
        return payload


def _odd_grid(left: float, right: float, step: float) -> FloatArray:
    count = int(math.ceil((right - left) / step)) + 1
    if count % 2 == 0:
        count += 1
    return np.linspace(left, right, count)


def _local_extrema(grid_t: FloatArray, values: FloatArray, rel: float = 1e-3) -> list[float]:
    slope = np.diff(values)
    idx = np.nonzero(slope[:-1] * slope[1:] < 0)[0] + 1
    peak = np.abs(values).max()
    return [float(grid_t[i]) for i in idx if abs(values[i]) > rel * peak]


def spectral_grid(
    u: RadialSolution,
    params: FowlerParams,
    *,
    step: float = DEFAULT_STEP,
    left_margin: float = DEFAULT_LEFT_MARGIN,
    right_edge: float = DEFAULT_RIGHT_EDGE,
) -> FloatArray:
    """Malla impar desde el primer extremo de v menos el margen hasta right_edge."""
    s = np.log(u.grid_r)
    v = np.exp(params.alpha_exp * s) * u.values_u
    extrema = _local_extrema(s, v)
    if not extrema:
        raise DomainError("El perfil no tiene extremos locales en variables de Fowler.")
    left, right = fowler_window(extrema[0], params, left_margin, right_edge)
    left = max(left, float(s[0]))
    right = min(right, float(s[-1]))
    return _odd_grid(left, right, step)


def _symmetric_tridiagonal(
    potential: FloatArray, grid_t: FloatArray, constant: float
) -> tuple[FloatArray, FloatArray]:
    """chi'' + (potential - constant) chi sobre nodos interiores, Dirichlet en los extremos."""
    h = grid_step(grid_t)
    diagonal = -2.0 / h**2 - constant + potential[1:-1]
    off = np.full(grid_t.size - 3, 1.0 / h**2)
    return diagonal, off


def _top_eigenpairs(diagonal: FloatArray, off: FloatArray, m: int) -> tuple[FloatArray, FloatArray]:
    n = diagonal.size
    if m > n:
        raise GridError(f"Se pidieron {m} autovalores en una malla de {n} nodos interiores.")
    values, vectors = eigh_tridiagonal(diagonal, off, select="i", select_range=(n - m, n - 1))
    return values, vectors


def _normalize(vector: FloatArray, grid_t: FloatArray) -> FloatArray:
    norm = math.sqrt(float(simpson(vector**2, x=grid_t)))
    vector = vector / norm
    if vector[np.argmax(np.abs(vector))] < 0:
        vector = -vector
    return vector


def _solve_level(potential: FloatArray, grid_t: FloatArray, constant: float, m: int) -> tuple[FloatArray, FloatArray]:
    """Autopares en la malla fina y su extrapolación de Richardson sobre la malla gruesa."""
    fine_vals, fine_vecs = _top_eigenpairs(*_symmetric_tridiagonal(potential, grid_t, constant), m)
    coarse_grid = grid_t[::2]
    coarse_vals, coarse_vecs = _top_eigenpairs(
        *_symmetric_tridiagonal(potential[::2], coarse_grid, constant), m
    )

    def full(vector: FloatArray, size: int) -> FloatArray:
        out = np.zeros(size)
        out[1:-1] = vector
        return out

    extrapolated = []
    for i in range(m):
        fine = _normalize(full(fine_vecs[:, i], grid_t.size)[::2], coarse_grid)
        coarse = _normalize(full(coarse_vecs[:, i], coarse_grid.size), coarse_grid)
        if float(np.dot(fine, coarse)) < 0:
            coarse = -coarse
        extrapolated.append(_normalize((4.0 * fine - coarse) / 3.0, coarse_grid))
    values = (4.0 * fine_vals - coarse_vals) / 3.0
    return np.vstack([values, fine_vals, coarse_vals]), np.array(extrapolated)


def _mode_potential(u: RadialSolution, params: FowlerParams, grid_t: FloatArray) -> FloatArray:
    """p|v|^{p-1} - e^{2t} en la malla dada."""
    v = to_fowler(u, params, grid_t).values_v
    return params.p * np.abs(v) ** (params.p - 1) - np.exp(2.0 * grid_t)


def _richardson_check(stack: FloatArray, tolerance: float, label: str) -> FloatArray:
    fine, coarse = stack[1], stack[2]
    shift = np.abs(fine - coarse)
    if np.any(shift > tolerance):
        raise GridError(
            f"La discretización de {label} no converge (cambio {shift.max():.3e} > {tolerance:.1e}).",
            fine=fine.tolist(),
            coarse=coarse.tolist(),
        )
    return stack[0]


def mode_eigens(
    u: RadialSolution,
    k_level: int,
    m: int,
    grid_t: FloatArray | None = None,
    *,
    step: float = DEFAULT_STEP,
    left_margin: float = DEFAULT_LEFT_MARGIN,
    right_edge: float = DEFAULT_RIGHT_EDGE,
    grid_tol: float = DEFAULT_GRID_TOL,
) -> SpectrumReport:
    """Los m autovalores superiores del operador de Fowler del modo k_level, en orden ascendente."""
    if m < 1:
        raise DomainError("m debe ser >= 1.", m=m)
    params = params_of_p(u.p, u.N)
    mode = mode_of_level(u.N, k_level)
    if grid_t is None:
        grid_t = spectral_grid(u, params, step=step, left_margin=left_margin, right_edge=right_edge)
    elif grid_t.size % 2 == 0:
        raise GridError("La malla espectral debe tener un número impar de nodos.")
    potential = _mode_potential(u, params, grid_t)
    stack, vectors = _solve_level(potential, grid_t, params.gamma0 + mode.lambda_k, m)
    values = _richardson_check(stack, grid_tol, f"modo {k_level}")
    coarse_grid = grid_t[::2]
    # psi = e^{beta t/2} chi; la norma ponderada de psi coincide con la de chi
    eigenvectors = vectors * np.exp(params.beta * coarse_grid / 2.0)
    return SpectrumReport(
        mode=mode,
        eigenvalues=values,
        eigenvectors=eigenvectors,
        grid_t=coarse_grid,
        eps=params.eps,
        coarse_eigenvalues=stack[2],
    )


def unsymmetrized_eigens(
    u: RadialSolution, k_level: int, m: int, grid_t: FloatArray, target: float
) -> FloatArray:
    """Autovalores del operador sin simetrizar (con el término -beta psi') cerca de ``target``."""
    params = params_of_p(u.p, u.N)
    mode = mode_of_level(u.N, k_level)
    h = grid_step(grid_t)
    v = to_fowler(u, params, grid_t).values_v
    interior = grid_t[1:-1]
    diagonal = (
        -2.0 / h**2
        - params.gamma
        - np.exp(2.0 * interior)
        + params.p * np.abs(v[1:-1]) ** (params.p - 1)
        - mode.lambda_k
    )
    lower = np.full(interior.size - 1, 1.0 / h**2 + params.beta / (2.0 * h))
    upper = np.full(interior.size - 1, 1.0 / h**2 - params.beta / (2.0 * h))
    matrix = sparse.diags([lower, diagonal, upper], [-1, 0, 1], format="csc")
    values = eigs(matrix, k=m, sigma=target, return_eigenvectors=False)
    return np.sort(values.real)


def symmetrized_eigens_fine(u: RadialSolution, k_level: int, m: int, grid_t: FloatArray) -> FloatArray:
    """Autovalores simetrizados en la malla fina, sin extrapolar."""
    params = params_of_p(u.p, u.N)
    mode = mode_of_level(u.N, k_level)
    potential = _mode_potential(u, params, grid_t)
    values, _ = _top_eigenpairs(*_symmetric_tridiagonal(potential, grid_t, params.gamma0 + mode.lambda_k), m)
    return values


def _variational_matrices(
    v: FloatArray, grid_t: FloatArray, params: FowlerParams, include_potential: bool
) -> tuple[FloatArray, FloatArray]:
    """Forma cuadrática conservativa con peso e^{-beta t}, simetrizada por M^{-1/2}."""
    h = grid_step(grid_t)
    mid = 0.5 * (grid_t[:-1] + grid_t[1:])
    stiffness = np.exp(-params.beta * mid) / h
    interior = grid_t[1:-1]
    mass = h * np.exp(-params.beta * interior)
    if not np.all(mass > 0.0):
        raise NodalkitError("La matriz de peso no es definida positiva.")
    q = params.gamma + np.exp(2.0 * interior)
    if include_potential:
        q = q - params.p * np.abs(v[1:-1]) ** (params.p - 1)
    diagonal = (stiffness[:-1] + stiffness[1:] + mass * q) / mass
    off = -stiffness[1:-1] / np.sqrt(mass[:-1] * mass[1:])
    return diagonal, off


def nu_sequence(
    u: RadialSolution,
    count: int,
    grid_t: FloatArray | None = None,
    *,
    step: float = DEFAULT_STEP,
    left_margin: float = DEFAULT_LEFT_MARGIN,
    right_edge: float = DEFAULT_RIGHT_EDGE,
    grid_tol: float = DEFAULT_GRID_TOL,
) -> FloatArray:
    """nu_1 <= ... <= nu_count de la caracterización variacional con peso de Hardy."""
    if count < 1:
        raise DomainError("count debe ser >= 1.", count=count)
    params = params_of_p(u.p, u.N)
    if grid_t is None:
        grid_t = spectral_grid(u, params, step=step, left_margin=left_margin, right_edge=right_edge)
    v = to_fowler(u, params, grid_t).values_v

    hardy_diag, hardy_off = _variational_matrices(v, grid_t, params, include_potential=False)
    hardy_min = eigh_tridiagonal(hardy_diag, hardy_off, eigvals_only=True, select="i", select_range=(0, 0))[0]
    if hardy_min < params.gamma0 * (1.0 - 1e-4):
        raise NodalkitError(
            f"La forma sin potencial viola la cota de Hardy ({hardy_min:.6g} < {params.gamma0:.6g}).",
            hardy_min=float(hardy_min),
        )

    levels = []
    for grid in (grid_t, grid_t[::2]):
        diag, off = _variational_matrices(v if grid is grid_t else v[::2], grid, params, include_potential=True)
        levels.append(eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, count - 1)))
    fine, coarse = levels
    stack = np.vstack([(4.0 * fine - coarse) / 3.0, fine, coarse])
    return _richardson_check(stack, grid_tol, "nu")


def nu(u: RadialSolution, l: int, **options: Any) -> float:
    """l-ésimo autovalor nu_l(p)."""
    if l < 1:
        raise DomainError(f"l debe ser >= 1 (l={l}).", l=l)
    return float(nu_sequence(u, l, **options)[l - 1])


def hardy_form_minimum(u: RadialSolution, grid_t: FloatArray | None = None, **options: Any) -> float:
    """Mínimo discreto de la forma sin el término |u|^{p-1}; acotado por gamma0."""
    params = params_of_p(u.p, u.N)
    if grid_t is None:
        grid_t = spectral_grid(u, params, **options)
    v = to_fowler(u, params, grid_t).values_v
    diag, off = _variational_matrices(v, grid_t, params, include_potential=False)
    return float(eigh_tridiagonal(diag, off, eigvals_only=True, select="i", select_range=(0, 0))[0])


def _fowler_derivative(u: RadialSolution, params: FowlerParams, grid_t: FloatArray) -> tuple[FloatArray, FloatArray]:
    """psi = r^alpha u'(r) en la malla t y su derivada exacta vía u''."""
    s = np.log(u.grid_r)
    second = -(u.N - 1) * u.values_du / u.grid_r + u.values_u - signed_power(u.values_u, u.p)
    values = CubicHermiteSpline(s, u.values_u, u.grid_r * u.values_du)(grid_t)
    du = CubicHermiteSpline(s, u.values_du, u.grid_r * second)(grid_t)
    r = np.exp(grid_t)
    ddu = -(u.N - 1) * du / r + values - signed_power(values, u.p)
    alpha = params.alpha_exp
    psi = np.exp(alpha * grid_t) * du
    dpsi = alpha * psi + np.exp((alpha + 1.0) * grid_t) * ddu
    return psi, dpsi


def cosine_similarity(f: FloatArray, g: FloatArray, grid_t: FloatArray, params: FowlerParams) -> float:
    weight = np.exp(-params.beta * grid_t)
    inner = float(simpson(f * g * weight, x=grid_t))
    return abs(inner) / math.sqrt(float(simpson(f * f * weight, x=grid_t)) * float(simpson(g * g * weight, x=grid_t)))


def kernel_mode1_check(
    u: RadialSolution,
    *,
    step: float = 2e-2,
    spectral_step: float = DEFAULT_STEP,
    left_margin: float = DEFAULT_LEFT_MARGIN,
    right_edge: float = DEFAULT_RIGHT_EDGE,
    grid_tol: float = DEFAULT_GRID_TOL,
) -> tuple[float, float]:
    """Residuo del operador del modo 1 aplicado a u' y desvío del wronskiano con el autovector."""
    params = params_of_p(u.p, u.N)
    wide = spectral_grid(u, params, step=spectral_step, left_margin=left_margin, right_edge=right_edge)
    grid_t = _odd_grid(float(wide[0]), float(wide[-1]), step)
    psi, dpsi = _fowler_derivative(u, params, grid_t)
    v = to_fowler(u, params, grid_t).values_v
    h = grid_step(grid_t)
    residual = (
        d2(psi, h)
        - params.beta * d1(psi, h)
        - (params.gamma + np.exp(2.0 * grid_t) + (u.N - 1)) * psi
        + params.p * np.abs(v) ** (params.p - 1) * psi
    )
    inner = slice(2, -2)
    weight = np.exp(-params.beta * grid_t[inner])
    op_residual = math.sqrt(
        float(simpson(residual[inner] ** 2 * weight, x=grid_t[inner]))
        / float(simpson(psi[inner] ** 2 * weight, x=grid_t[inner]))
    )

    report = mode_eigens(u, 1, 2, wide, grid_tol=grid_tol)
    index = int(np.argmin(np.abs(report.eigenvalues)))
    phi_grid = report.grid_t
    phi = report.eigenvectors[index]
    psi_c, dpsi_c = _fowler_derivative(u, params, phi_grid)
    scale = np.abs(psi_c).max()
    psi_c, dpsi_c = psi_c / scale, dpsi_c / scale
    anchor = int(np.argmax(np.abs(psi_c)))
    phi = phi * psi_c[anchor] / phi[anchor]
    dphi = d1(phi, grid_step(phi_grid))
    wronskian = (dphi * psi_c - phi * dpsi_c) * np.exp(-params.beta * phi_grid)
    return op_residual, float(np.max(np.abs(wronskian[inner])))


def mode1_alignment(u: RadialSolution, report: SpectrumReport) -> float:
    """Similitud coseno entre el autovector casi nulo del modo 1 y r^alpha u'."""
    params = params_of_p(u.p, u.N)
    index = int(np.argmin(np.abs(report.eigenvalues)))
    psi, _ = _fowler_derivative(u, params, report.grid_t)
    return cosine_similarity(report.eigenvectors[index], psi, report.grid_t, params)


def limit_spectrum(
    N: int,
    m: int,
    grid_t: FloatArray | None = None,
    *,
    half_width: float = 30.0,
    step: float = DEFAULT_STEP,
    grid_tol: float = DEFAULT_GRID_TOL,
) -> SpectrumReport:
    """Espectro de psi'' - gamma0 psi + p* w0^{p*-1} psi en la recta truncada."""
    if m < 3:
        raise DomainError("limit_spectrum requiere m >= 3.", m=m)
    consts = profile_constants((N + 2) / (N - 2), N)
    if grid_t is None:
        grid_t = _odd_grid(-half_width, half_width, step)
    elif grid_t.size % 2 == 0:
        raise GridError("La malla espectral debe tener un número impar de nodos.")
    w0 = np.asarray(eval_w(grid_t, consts))
    stack, vectors = _solve_level(consts.p * w0 ** (consts.p - 1), grid_t, consts.gamma0, m)
    values = _richardson_check(stack, grid_tol, "espectro límite")
    return SpectrumReport(
        mode=mode_of_level(N, 0),
        eigenvalues=values,
        eigenvectors=vectors,
        grid_t=grid_t[::2],
        eps=0.0,
        coarse_eigenvalues=stack[2],
    )


def limit_eigenfunctions(N: int, grid_t: FloatArray) -> tuple[FloatArray, FloatArray]:
    """Autofunciones explícitas: w0^{N/(N-2)} (principal) y w0' (núcleo)."""
    consts = profile_constants((N + 2) / (N - 2), N)
    w0 = np.asarray(eval_w(grid_t, consts))
    return w0 ** (N / (N - 2)), np.asarray(eval_w_prime(grid_t, consts))


@dataclass
class SmallEigenScan:
    N: int
    entries: list[dict[str, Any]]
    c0_estimate: float

    def to_payload(self) -> dict[str, Any]:
        return {"N": self.N, "entries": self.entries, "c0_estimate": self.c0_estimate}


def _span_alignment(vector: FloatArray, basis: Sequence[FloatArray], grid_t: FloatArray, params: FowlerParams) -> float:
    """Coseno entre ``vector`` y su proyección ponderada sobre el span de ``basis``."""
    weight = np.exp(-params.beta * grid_t)

    def inner(f: FloatArray, g: FloatArray) -> float:
        return float(simpson(f * g * weight, x=grid_t))

    gram = np.array([[inner(a, b) for b in basis] for a in basis])
    rhs = np.array([inner(a, vector) for a in basis])
    coeffs = np.linalg.solve(gram, rhs)
    projected = float(rhs @ coeffs)
    return math.sqrt(max(projected, 0.0) / inner(vector, vector))


def small_eigen_scan(
    eps_list: Sequence[float],
    N: int,
    cfg: SolverConfig,
    *,
    small_factor: float = 10.0,
    step: float = DEFAULT_STEP,
    left_margin: float = DEFAULT_LEFT_MARGIN,
    right_edge: float = DEFAULT_RIGHT_EDGE,
    grid_tol: float = DEFAULT_GRID_TOL,
    logger: logging.Logger | None = None,
) -> SmallEigenScan:
    """Autovalores pequeños del modo 0 de la solución con un nodo a lo largo de epsilon."""
    logger = logger or _LOGGER
    eps_list = list(eps_list)
    if len(eps_list) < 3 or any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise DomainError("eps_list debe ser decreciente con al menos 3 entradas.", eps_list=eps_list)

    entries: list[dict[str, Any]] = []
    for eps in eps_list:
        params = params_of(eps, N)
        u = find_nodal(1, N, params.p, cfg, logger)
        report = mode_eigens(u, 0, 4, step=step, left_margin=left_margin, right_edge=right_edge, grid_tol=grid_tol)
        order = np.argsort(np.abs(report.eigenvalues))
        small_idx = [int(i) for i in order[:2]]
        small = [float(report.eigenvalues[i]) for i in small_idx]
        count_small = int(np.sum(np.abs(report.eigenvalues) < small_factor * eps))

        consts = constants_ab(N, params)
        crit = critical_point(params, consts, logger=logger)
        xi = sorted(float(x) for x in crit.hessian_eigs)
        # mu ~ -c0 xi eps: el mu más negativo corresponde al xi mayor
        mu_desc = sorted(small, reverse=True)
        ratios = [(mu / eps) / (-x) for mu, x in zip(mu_desc, xi)]

        grid = report.grid_t
        v = to_fowler(u, params, grid).values_v
        extrema = _local_extrema(grid, v)
        t1 = float(grid[np.argmax(v)])
        t2 = float(grid[np.argmin(v)])
        ap = AnsatzParams(min(t1, t2), max(t1, t2), params)
        basis = [dt_ansatz(1, ap, grid)[0], dt_ansatz(2, ap, grid)[0]]
        alignment = [_span_alignment(report.eigenvectors[i], basis, grid, params) for i in small_idx]

        logger.info("eps=%.4g: autovalores pequeños %s, xi %s, cocientes %s", eps, small, xi, ratios)
        entries.append(
            {
                "eps": eps,
                "mu": small,
                "small_count": count_small,
                "third_abs": float(np.abs(report.eigenvalues[order[2]])),
                "xi": xi,
                "ratios": ratios,
                "alignment": alignment,
                "extrema": extrema[:2],
                "t_star": list(crit.t_star),
            }
        )
    return SmallEigenScan(N=N, entries=entries, c0_estimate=float(np.mean(entries[-1]["ratios"])))
