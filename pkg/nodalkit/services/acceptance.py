"""Suites de verificación de propiedades y escalamientos.

Cada suite devuelve una lista de ``CheckResult``; ``run_suites`` las agrega
y el subcomando ``verify`` imprime la tabla resultante. Los perfiles de
disparo se reutilizan entre suites a través de ``VerificationContext``.
"""
from __future__ import annotations

import logging
import math
import tempfile
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from nodalkit.core.config import Settings, SolverConfig
from nodalkit.core.errors import CacheNotFoundError, NodalkitError
from nodalkit.services import cache
from nodalkit.services.ansatz import AnsatzParams, interaction, residual_bound, residual_norms
from nodalkit.services.reduction import (
    K_tilde,
    K_numeric,
    constants_ab,
    critical_point,
    energy_expansion_check,
    grad_K_numeric,
    grad_K_tilde,
    lambda_coordinates,
    lbar_pairing,
    numeric_critical_point,
    predicted_t,
    reduction_grid,
    solve_projected,
)
from nodalkit.services.shooting import decay_thresholds, sweep
from nodalkit.services.special import (
    correction_profile,
    eval_w,
    pohozaev_check,
    profile_constants,
)
from nodalkit.services.spectrum import (
    cosine_similarity,
    kernel_mode1_check,
    laplace_beltrami,
    limit_eigenfunctions,
    limit_spectrum,
    mode_eigens,
    nu,
    small_eigen_scan,
    spectral_grid,
)
from nodalkit.services.transform import RadialSolution, d2, params_of, params_of_p, to_fowler, uniform_grid

_LOGGER = logging.getLogger("nodalkit").getChild("acceptance")

IDENTITY_CASES = ((3, 5.0), (4, 3.0), (5, 2.2), (3, 4.9))
SHOOTING_CASES = ((3, 4.9), (5, 7.0 / 3.0 - 0.05))
P_LADDER_N3 = (4.9, 4.95, 4.975, 4.99)
EPS_LADDER = (0.1, 0.05, 0.025, 0.0125)


@dataclass(frozen=True)
class CheckResult:
    suite: str
    name: str
    passed: bool
    value: float | None = None
    threshold: float | None = None
    detail: str = ""

    def row(self) -> tuple[str, str, str, str, str]:
        value = "" if self.value is None else f"{self.value:.6g}"
        threshold = "" if self.threshold is None else f"{self.threshold:.3g}"
        return ("PASS" if self.passed else "FAIL", self.suite, self.name, value, threshold)


@dataclass
class VerificationContext:
    """Configuración compartida y memoria de perfiles ya calculados."""

    settings: Settings
    N: int = 3
    logger: logging.Logger = field(default_factory=lambda: _LOGGER)
    use_cache: bool = True
    _profiles: dict[tuple[int, int, float], RadialSolution] = field(default_factory=dict)

    @property
    def solver(self) -> SolverConfig:
        return self.settings.solver_config()

    @property
    def eps_list(self) -> list[float]:
        return sorted(self.settings.sweep_eps, reverse=True)

    def nodal(self, k: int, N: int, p: float) -> RadialSolution:
        key = (k, N, p)
        if key not in self._profiles:
            self._profiles[key] = cache.cached_nodal(
                k, N, p, self.solver, self.settings.cache_path, use_cache=self.use_cache, logger=self.logger
            )
        return self._profiles[key]


def strictly_decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))


def strictly_increasing(values: Sequence[float]) -> bool:
    return all(b > a for a, b in zip(values, values[1:]))


def _check(suite: str, name: str, value: float, threshold: float, detail: str = "") -> CheckResult:
    return CheckResult(suite, name, bool(math.isfinite(value) and value < threshold), value, threshold, detail)


def _flag(suite: str, name: str, passed: bool, detail: str = "") -> CheckResult:
    return CheckResult(suite, name, bool(passed), detail=detail)


def suite_identities(ctx: VerificationContext) -> list[CheckResult]:
    results = []
    for N, p in IDENTITY_CASES:
        consts = profile_constants(p, N)
        first, second = pohozaev_check(consts)
        results.append(_check("identities", f"pohozaev N={N} p={p:g}", max(first, second), 1e-8))

        h = 1e-3
        grid = uniform_grid(-20.0, 20.0, h)
        w = np.asarray(eval_w(grid, consts))
        residual = d2(w, h) - consts.gamma0 * w + w**p
        results.append(_check("identities", f"ecuación de w N={N} p={p:g}", float(np.max(np.abs(residual[2:-2]))), 1e-8))

    for N in (3, 4, 5, 6):
        h = 1e-3
        grid = uniform_grid(-10.0, 3.0, h)
        phi = np.asarray(correction_profile(grid, N))
        residual = d2(phi, h) - ((N - 2) ** 2 / 4.0 + np.exp(2.0 * grid)) * phi - np.exp(-(N - 6) * grid / 2.0)
        results.append(_check("identities", f"ecuación de phi_{N}", float(np.max(np.abs(residual[2:-2]))), 1e-6))
    return results


def suite_interaction(ctx: VerificationContext) -> list[CheckResult]:
    params = params_of(0.0, ctx.N)
    errors = [interaction(2.0, 1.0, 0.0, separation, params).relative_error for separation in (14.0, 28.0)]
    return [
        _check("interaction", "cociente a separación 14", errors[0], 0.02),
        _flag("interaction", "error decrece al duplicar la separación", errors[1] < errors[0], f"{errors}"),
    ]


def suite_shooting(ctx: VerificationContext) -> list[CheckResult]:
    results = []
    cfg = ctx.solver
    for N, p in SHOOTING_CASES:
        a0, a1, a2 = (ctx.nodal(k, N, p).alpha0 for k in range(3))
        upper = math.sqrt(a1 * a2)
        intervals = sweep((0.5 * a0, upper), 48, N, p, cfg, workers=ctx.settings.workers, logger=ctx.logger)
        tags = [item.tag for item in decay_thresholds(intervals)]
        label = f"N={N} p={p:.6g}"
        results.append(_flag("shooting", f"un umbral Decay(0) {label}", tags.count("Decay(0)") == 1, f"{tags}"))
        results.append(_flag("shooting", f"un umbral Decay(1) {label}", tags.count("Decay(1)") == 1, f"{tags}"))
        u = ctx.nodal(1, N, p)
        results.append(
            _flag("shooting", f"k=1 con un nodo y u(0)>0 {label}", u.node_count == 1 and u.values_u[0] > 0.0)
        )

    ladder = [ctx.nodal(1, 3, p) for p in P_LADDER_N3]
    heights = [u.alpha0 for u in ladder]
    nodes = [u.nodes[0] for u in ladder]
    results.append(_flag("shooting", "u(0) crece con p", strictly_increasing(heights), f"{heights}"))
    results.append(_flag("shooting", "el primer nodo decrece con p", strictly_decreasing(nodes), f"{nodes}"))
    return results


def _extrema_locations(u: RadialSolution) -> tuple[float, float]:
    params = params_of_p(u.p, u.N)
    grid = spectral_grid(u, params)
    v = to_fowler(u, params, grid).values_v
    return float(grid[np.argmax(v)]), float(grid[np.argmin(v)])


def suite_locations(ctx: VerificationContext) -> list[CheckResult]:
    errors, gaps = [], []
    for eps in ctx.eps_list:
        params = params_of(eps, ctx.N)
        consts = constants_ab(ctx.N, params)
        report = critical_point(params, consts, logger=ctx.logger)
        x, _ = lambda_coordinates(report.t_star, ctx.N)
        errors.append(abs(x / params.beta - consts.a0) / consts.a0)
        t_max, t_min = _extrema_locations(ctx.nodal(1, ctx.N, params.p))
        gaps.append(abs(t_max - report.t_star[0]) + abs(t_min - report.t_star[1]))
    return [
        _check("locations", "error relativo de t2* frente a a0", errors[-1], 0.15, f"{errors}"),
        _flag("locations", "el error decrece con epsilon", strictly_decreasing(errors), f"{errors}"),
        _flag("locations", "extremos del disparo se acercan a t*", strictly_decreasing(gaps), f"{gaps}"),
    ]


def suite_residual(ctx: VerificationContext) -> list[CheckResult]:
    tau = ctx.settings.tau_for(ctx.N)
    ratios = []
    for eps in ctx.eps_list:
        params = params_of(eps, ctx.N)
        t = predicted_t(params, constants_ab(ctx.N, params))
        norms = residual_norms(AnsatzParams(t[0], t[1], params), tau, step=ctx.settings.grid_step_energy)
        ratios.append(norms.sup / norms.bound)
    spread = max(ratios) / ratios[0]
    return [_check("residual", "residuo/cota acotado uniformemente", spread, 2.0, f"{ratios}")]


def suite_reduction(ctx: VerificationContext) -> list[CheckResult]:
    settings = ctx.settings
    options = {"tol": settings.fixed_point_tol, "max_iter": settings.fixed_point_max_iter}
    tau = settings.tau_for(ctx.N)
    energy_gaps, grad_gaps, phi_ratios, gradients, multipliers = [], [], [], [], []
    for eps in ctx.eps_list:
        params = params_of(eps, ctx.N)
        consts = constants_ab(ctx.N, params)
        t = critical_point(params, consts, logger=ctx.logger).t_star
        grid = reduction_grid(t, settings.grid_step_energy)
        energy_gaps.append(abs(K_numeric(t, params, grid, **options) - K_tilde(t, params, consts)) / params.beta)
        difference = grad_K_numeric(t, params, grid, **options) - grad_K_tilde(t, params, consts)
        grad_gaps.append(float(np.linalg.norm(difference)) / params.beta)
        solve = solve_projected(t, params, grid, **options)
        phi_ratios.append(solve.sup_norm / residual_bound(AnsatzParams(t[0], t[1], params), tau))
        critical = numeric_critical_point(t, params, grid, **options)
        gradients.append(critical.grad_norm / params.beta)
        multipliers.append(critical.multiplier_sum / critical.residual_sup)
    return [
        _flag("reduction", "|K - K tilde|/beta decrece", strictly_decreasing(energy_gaps), f"{energy_gaps}"),
        _flag("reduction", "|grad K - grad K tilde|/beta decrece", strictly_decreasing(grad_gaps), f"{grad_gaps}"),
        _check("reduction", "norma de phi con constante uniforme", max(phi_ratios) / phi_ratios[0], 2.0, f"{phi_ratios}"),
        _check("reduction", "gradiente de K_numeric en su punto crítico", max(gradients), 1e-6, f"{gradients}"),
        _check("reduction", "multiplicadores en el punto crítico de K_numeric", max(multipliers), 1e-6, f"{multipliers}"),
    ]


def suite_uniqueness(ctx: VerificationContext) -> list[CheckResult]:
    spreads, eigs = [], []
    for eps in ctx.eps_list:
        params = params_of(eps, ctx.N)
        report = critical_point(params, constants_ab(ctx.N, params), multistart=True, logger=ctx.logger)
        star = np.asarray(report.t_star)
        spreads.append(max(float(np.max(np.abs(np.asarray(s) - star))) for s in report.starts))
        eigs.append(sorted(report.hessian_eigs))
    table = np.asarray(eigs)
    drift = float(np.max((table.max(axis=0) - table.min(axis=0)) / np.abs(table).max(axis=0)))
    return [
        _check("uniqueness", "9 arranques convergen al mismo punto", max(spreads), 1e-8),
        _flag("uniqueness", "autovalores de la hessiana positivos", bool(np.all(table > 0.0)), f"{eigs}"),
        _check("uniqueness", "deriva de la hessiana", drift, 0.10),
    ]


def suite_appendix(ctx: VerificationContext) -> list[CheckResult]:
    settings = ctx.settings
    discrepancies = []
    for eps in ctx.eps_list:
        params = params_of(eps, ctx.N)
        consts = constants_ab(ctx.N, params)
        t = predicted_t(params, consts)
        discrepancies.append(energy_expansion_check(t, params, consts, step=settings.grid_step_energy))
    results = [
        _flag("appendix", "discrepancia de la energía decrece", strictly_decreasing(discrepancies), f"{discrepancies}")
    ]

    params = params_of(0.02, 3)
    consts = constants_ab(3, params)
    t = critical_point(params, consts, logger=ctx.logger).t_star
    grid = reduction_grid(t, settings.grid_step_energy)
    solve = solve_projected(t, params, grid, tol=settings.fixed_point_tol, max_iter=settings.fixed_point_max_iter)
    for i in (1, 2):
        for j in (1, 2):
            measured, predicted = lbar_pairing(i, j, t, params, grid, consts=consts, solve=solve)
            gap = abs(measured - predicted) / params.beta
            same_sign = math.copysign(1.0, measured) == math.copysign(1.0, predicted)
            results.append(_check("appendix", f"pareo L-barra ({i},{j})", gap if same_sign else math.inf, 0.2))
    return results


def suite_spectrum(ctx: VerificationContext) -> list[CheckResult]:
    settings = ctx.settings
    N = ctx.N
    results = []

    limit = limit_spectrum(N, 3, step=settings.spectrum_step, grid_tol=settings.eigen_grid_tol)
    principal, kernel = limit.eigenvalues[-1], limit.eigenvalues[-2]
    results.append(_check("spectrum", "mu1 del problema límite", abs(principal - (N - 1)), 1e-3))
    results.append(_check("spectrum", "mu2 del problema límite", abs(kernel), 1e-3))
    expected, _ = limit_eigenfunctions(N, limit.grid_t)
    cosine = cosine_similarity(limit.eigenvectors[-1], expected, limit.grid_t, params_of(0.0, N))
    results.append(_check("spectrum", "autofunción principal w0^{N/(N-2)}", 1.0 - cosine, 1e-4))

    scan = small_eigen_scan(
        ctx.eps_list,
        N,
        ctx.solver,
        small_factor=settings.small_eigen_factor,
        step=settings.spectrum_step,
        left_margin=settings.spectrum_left_margin,
        right_edge=settings.spectrum_right_edge,
        grid_tol=settings.eigen_grid_tol,
        logger=ctx.logger,
    )
    counts = [entry["small_count"] for entry in scan.entries]
    results.append(_flag("spectrum", "exactamente dos autovalores pequeños en el modo 0", all(c == 2 for c in counts), f"{counts}"))
    ratios = scan.entries[-1]["ratios"]
    agreement = max(ratios) / min(ratios) - 1.0 if min(ratios) > 0 else math.inf
    results.append(_check("spectrum", "cocientes (mu/eps)/(-xi) concuerdan", agreement, 0.25, f"{ratios}"))

    u = ctx.nodal(1, N, params_of(ctx.eps_list[-1], N).p)
    op_residual, wronskian = kernel_mode1_check(
        u,
        step=settings.kernel_check_step,
        spectral_step=settings.spectrum_step,
        left_margin=settings.spectrum_left_margin,
        right_edge=settings.spectrum_right_edge,
        grid_tol=settings.eigen_grid_tol,
    )
    results.append(_check("spectrum", "u' en el núcleo del modo 1", op_residual, 1e-6))
    results.append(_check("spectrum", "wronskiano del modo 1", wronskian, 1e-6))

    ladder = P_LADDER_N3 if N == 3 else tuple(params_of(e, N).p for e in EPS_LADDER)
    gaps = [abs(nu(ctx.nodal(1, N, p), 1) + (N - 1)) for p in ladder]
    results.append(_flag("spectrum", "|nu_1 + (N-1)| decrece con p", strictly_decreasing(gaps), f"{gaps}"))

    high = next(mode for mode in laplace_beltrami(N, 8) if mode.lambda_k >= 2 * N)
    report = mode_eigens(
        u,
        high.level,
        2,
        step=settings.spectrum_step,
        left_margin=settings.spectrum_left_margin,
        right_edge=settings.spectrum_right_edge,
        grid_tol=settings.eigen_grid_tol,
    )
    nearest = float(np.min(np.abs(report.eigenvalues)))
    results.append(
        CheckResult("spectrum", f"sin núcleo en el modo lambda={high.lambda_k:g}", nearest > 1e-3, nearest, 1e-3)
    )
    return results


def suite_plumbing(ctx: VerificationContext) -> list[CheckResult]:
    cfg = ctx.solver
    p = params_of(ctx.eps_list[0], ctx.N).p
    profile = ctx.nodal(1, ctx.N, p)
    with tempfile.TemporaryDirectory(prefix="nodalkit-verify-") as directory:
        key = cache.cache_store(profile, directory, cfg, k=1)
        loaded = cache.cache_load(key, directory)
        identical = all(
            np.array_equal(getattr(profile, name), getattr(loaded, name))
            for name in ("grid_r", "values_u", "values_du")
        ) and loaded.alpha0 == profile.alpha0 and loaded.nodes == profile.nodes
        try:
            cache.cache_load(cache.CacheQuery(ctx.N, p, 1, cfg.tightened()), directory)
            isolated = False
        except CacheNotFoundError:
            isolated = True

    consts = [constants_ab(ctx.N, params_of(ctx.eps_list[0], ctx.N)) for _ in range(2)]
    deterministic = cache.canonical_json(consts[0].to_payload()) == cache.canonical_json(consts[1].to_payload())
    return [
        _flag("plumbing", "ida y vuelta de la caché bit a bit", identical),
        _flag("plumbing", "tolerancias distintas no reutilizan la entrada", isolated),
        _flag("plumbing", "reportes idénticos para la misma configuración", deterministic),
    ]


SUITES: dict[str, Callable[[VerificationContext], list[CheckResult]]] = {
    "identities": suite_identities,
    "interaction": suite_interaction,
    "shooting": suite_shooting,
    "locations": suite_locations,
    "residual": suite_residual,
    "reduction": suite_reduction,
    "uniqueness": suite_uniqueness,
    "appendix": suite_appendix,
    "spectrum": suite_spectrum,
    "plumbing": suite_plumbing,
}


def run_suites(names: Sequence[str], ctx: VerificationContext) -> list[CheckResult]:
    """Ejecuta las suites pedidas; un error dentro de una suite se reporta como FAIL."""
    selected = list(SUITES) if "all" in names else list(names)
    results: list[CheckResult] = []
    for name in selected:
        ctx.logger.info("Ejecutando suite %s (N=%d)", name, ctx.N)
        try:
            results.extend(SUITES[name](ctx))
        except NodalkitError as error:
            ctx.logger.warning("La suite %s falló: %s", name, error)
            results.append(CheckResult(name, "ejecución", False, detail=f"{type(error).__name__}: {error}"))
    return results


def summarize(results: Sequence[CheckResult]) -> dict[str, Any]:
    return {
        "passed": sum(1 for item in results if item.passed),
        "failed": sum(1 for item in results if not item.passed),
        "checks": [
            {
                "suite": item.suite,
                "name": item.name,
                "passed": item.passed,
                "value": item.value,
                "threshold": item.threshold,
                "detail": item.detail,
            }
            for item in results
        ],
    }
