"""Método de disparo para las soluciones radiales con k nodos."""
from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Any, Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.integrate import solve_ivp
from scipy.special import kv

from nodalkit.core.config import SolverConfig
from nodalkit.core.errors import BracketError, ConvergenceError, DomainError
from nodalkit.services.transform import RadialSolution, TailFit

FloatArray = NDArray[np.float64]

_LOGGER = logging.getLogger("nodalkit").getChild("shooting")


class Tag(str, Enum):
    BLOWUP_POSITIVE = "BlowUpPositive"
    BLOWUP_NEGATIVE = "BlowUpNegative"
    DECAY = "Decay"
    INDETERMINATE = "Indeterminate"


@dataclass(frozen=True)
class Classification:
    """Etiqueta terminal de una trayectoria y número de cambios de signo observados."""

    tag: Tag
    k: int

    def __str__(self) -> str:
        return f"{self.tag.value}({self.k})"

    @classmethod
    def parse(cls, text: str) -> "Classification":
        name, _, rest = text.partition("(")
        return cls(Tag(name), int(rest.rstrip(")")))


@dataclass
class Trajectory:
    """Resultado de integrar el problema de valor inicial radial."""

    alpha0: float
    N: int
    p: float
    grid_r: FloatArray
    values_u: FloatArray
    values_du: FloatArray
    crossings: tuple[float, ...]
    terminal: str
    r_start: float
    dense: Any = None
    message: str = ""


@dataclass(frozen=True)
class SweepInterval:
    alpha_lo: float
    alpha_hi: float
    tag: str
    crossings: int


def _validate(N: int, p: float) -> None:
    if N < 3:
        raise DomainError(f"La dimensión debe ser >= 3 (N={N}).", N=N)
    if not 1.0 < p < (N + 2) / (N - 2):
        raise DomainError(f"p={p} debe ser subcrítico en N={N}.", N=N, p=p)


def _taylor(alpha0: float, r: FloatArray | float, N: int, p: float) -> tuple[Any, Any]:
    """Serie de orden 4 de la solución regular en el origen."""
    c = (alpha0 - alpha0**p) / (2.0 * N)
    d = (1.0 - p * alpha0 ** (p - 1)) * c / (4.0 * (N + 2))
    u = alpha0 + c * r**2 + d * r**4
    du = 2.0 * c * r + 4.0 * d * r**3
    return u, du


def _start_radius(alpha0: float, p: float, cfg: SolverConfig) -> float:
    # escala natural del bulto: alpha^{-(p-1)/2}
    return cfg.r0 * min(1.0, alpha0 ** (-(p - 1) / 2.0))


def integrate(
    alpha0: float,
    N: int,
    p: float,
    cfg: SolverConfig,
    *,
    stop_on_decay: bool = False,
    dense: bool = False,
) -> Trajectory:
    """Integra u'' + (N-1)u'/r - u + |u|^{p-1}u = 0 desde u(0) = alpha0."""
    if not alpha0 > 0.0:
        raise DomainError(f"alpha0 debe ser positivo (alpha0={alpha0}).", alpha0=alpha0)
    if not (cfg.rtol > 0 and cfg.atol > 0):
        raise DomainError("Las tolerancias del integrador deben ser positivas.")

    r_start = _start_radius(alpha0, p, cfg)
    u0, du0 = _taylor(alpha0, r_start, N, p)
    threshold = cfg.blowup_factor * max(1.0, alpha0)

    def rhs(r: float, y: FloatArray) -> list[float]:
        u, du = y
        return [du, -(N - 1) * du / r + u - math.copysign(abs(u) ** p, u)]

    def zero(r: float, y: FloatArray) -> float:
        return y[0]

    def blowup(r: float, y: FloatArray) -> float:
        return abs(y[0]) - threshold

    def decay(r: float, y: FloatArray) -> float:
        return max(abs(y[0]), abs(y[1])) - cfg.decay_tol

    blowup.terminal = True  # type: ignore[attr-defined]
    blowup.direction = 1  # type: ignore[attr-defined]
    decay.terminal = True  # type: ignore[attr-defined]
    decay.direction = -1  # type: ignore[attr-defined]

    events: list[Callable[[float, FloatArray], float]] = [zero, blowup]
    if stop_on_decay:
        events.append(decay)

    sol = solve_ivp(
        rhs,
        (r_start, cfg.r_max),
        [u0, du0],
        method="RK45",
        rtol=cfg.rtol,
        atol=cfg.atol,
        events=events,
        dense_output=dense,
    )

    if sol.status == -1:
        terminal = "failed"
    elif sol.status == 1 and sol.t_events[1].size:
        terminal = "blowup"
    elif sol.status == 1:
        terminal = "decay"
    else:
        terminal = "rmax"

    return Trajectory(
        alpha0=float(alpha0),
        N=N,
        p=p,
        grid_r=sol.t,
        values_u=sol.y[0],
        values_du=sol.y[1],
        crossings=tuple(float(r) for r in sol.t_events[0]),
        terminal=terminal,
        r_start=r_start,
        dense=sol.sol if dense else None,
        message=str(sol.message),
    )


def passes_tail_test(r: float, u: float, du: float, N: int, cfg: SolverConfig) -> bool:
    """Prueba de cola contra el campo lejano r^{-(N-1)/2} e^{-r}."""
    if not (abs(u) <= cfg.decay_tol * (1.0 + 1e-6) and abs(du) <= cfg.decay_tol * (1.0 + 1e-6)):
        return False
    if u == 0.0 or u * du >= 0.0:
        return False
    return abs(du / u + 1.0 + (N - 1) / (2.0 * r)) < cfg.decay_slope_tol


def classify(traj: Trajectory, cfg: SolverConfig) -> Classification:
    """Etiqueta determinista de una trayectoria ya integrada."""
    k = len(traj.crossings)
    u_end = float(traj.values_u[-1])
    if traj.terminal == "blowup":
        return Classification(Tag.BLOWUP_POSITIVE if u_end > 0 else Tag.BLOWUP_NEGATIVE, k)
    if traj.terminal in ("decay", "rmax") and passes_tail_test(
        float(traj.grid_r[-1]), u_end, float(traj.values_du[-1]), traj.N, cfg
    ):
        return Classification(Tag.DECAY, k)
    return Classification(Tag.INDETERMINATE, k)


def _crossing_count(alpha0: float, N: int, p: float, cfg: SolverConfig) -> int:
    return len(integrate(alpha0, N, p, cfg).crossings)


def _bisect(
    lo: float,
    hi: float,
    above: Callable[[float], bool],
    cfg: SolverConfig,
) -> tuple[float, float, int]:
    """Bisección sobre un predicado monótono con above(lo) falso y above(hi) verdadero."""
    iterations = 0
    while hi - lo > cfg.bisection_rel_width * hi and iterations < cfg.bisection_max_iter:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if above(mid):
            hi = mid
        else:
            lo = mid
        iterations += 1
    return lo, hi, iterations


def _bracket(k: int, N: int, p: float, cfg: SolverConfig, logger: logging.Logger) -> tuple[float, float]:
    alpha = max(cfg.alpha_min, 1.0 + 1e-3)
    previous = alpha
    while alpha <= cfg.alpha_max:
        count = _crossing_count(alpha, N, p, cfg)
        logger.debug("Corchete k=%d: alpha=%.6g cruces=%d", k, alpha, count)
        if count >= k + 1:
            if alpha == previous:
                raise BracketError(
                    f"El extremo inferior alpha={alpha} ya tiene {count} cruces.", k=k, alpha=alpha
                )
            return previous, alpha
        previous = alpha
        alpha *= cfg.bracket_factor
    raise BracketError(
        f"No se encontró corchete para k={k} en [{cfg.alpha_min}, {cfg.alpha_max}].",
        k=k,
        alpha_max=cfg.alpha_max,
    )


def _decaying_trajectory(
    candidates: Sequence[float], k: int, N: int, p: float, cfg: SolverConfig
) -> Trajectory | None:
    for alpha in candidates:
        traj = integrate(alpha, N, p, cfg, stop_on_decay=True, dense=True)
        if classify(traj, cfg) == Classification(Tag.DECAY, k):
            return traj
    return None


def _profile_grid(cfg: SolverConfig) -> FloatArray:
    """Malla común en log r, idéntica para todos los perfiles con la misma configuración."""
    count = int(math.floor((math.log(cfg.tail_r_max) - cfg.t_min) / cfg.grid_step)) + 1
    return cfg.t_min + cfg.grid_step * np.arange(count)


def _sample(traj: Trajectory, cfg: SolverConfig) -> RadialSolution:
    log_r = _profile_grid(cfg)
    r_end = float(traj.grid_r[-1])
    log_r = log_r[log_r <= math.log(r_end)]
    radii = np.exp(log_r)
    u = np.empty_like(radii)
    du = np.empty_like(radii)
    inner = radii < traj.r_start
    u[inner], du[inner] = _taylor(traj.alpha0, radii[inner], traj.N, traj.p)
    values = traj.dense(radii[~inner])
    u[~inner] = values[0]
    du[~inner] = values[1]
    return RadialSolution(
        grid_r=radii,
        values_u=u,
        values_du=du,
        alpha0=traj.alpha0,
        nodes=traj.crossings,
        N=traj.N,
        p=traj.p,
        meta={"r_decay": r_end, "classification": str(Classification(Tag.DECAY, len(traj.crossings)))},
    )


def _far_field(r: FloatArray, N: int) -> tuple[FloatArray, FloatArray]:
    """Solución decreciente de u'' + (N-1)u'/r - u = 0 y su derivada."""
    nu = (N - 2) / 2.0
    return r ** (-nu) * kv(nu, r), -(r ** (-nu)) * kv(nu + 1.0, r)


def attach_tail(sol: RadialSolution, cfg: SolverConfig) -> RadialSolution:
    """Ajusta c·r^{-nu}K_nu(r) en la ventana final y extiende el perfil hasta tail_r_max.

    Para r grande el ajuste se comporta como c·r^{-(N-1)/2} e^{-r}.
    """
    r_end = float(sol.grid_r[-1])
    in_window = sol.grid_r >= r_end - cfg.tail_window
    u_window = sol.values_u[in_window]
    if in_window.sum() < 5 or not np.all(np.abs(u_window) > 0.0):
        raise DomainError("El perfil no tiene una ventana de decaimiento utilizable.")
    classification = sol.meta.get("classification", "")
    if classification and not classification.startswith(Tag.DECAY.value):
        raise DomainError(f"attach_tail requiere una trayectoria Decay (recibida {classification}).")

    basis, _ = _far_field(sol.grid_r[in_window], sol.N)
    coefficient = float(np.dot(u_window, basis) / np.dot(basis, basis))
    mismatch = float(np.max(np.abs(u_window - coefficient * basis) / np.abs(u_window)))
    if mismatch > cfg.tail_fit_tol:
        raise ConvergenceError(
            f"El ajuste de cola no alcanza la tolerancia (desajuste {mismatch:.3e}).",
            mismatch=mismatch,
            tolerance=cfg.tail_fit_tol,
        )

    log_r = _profile_grid(cfg)
    extra = np.exp(log_r[log_r > math.log(r_end) + 1e-12])
    tail_u, tail_du = _far_field(extra, sol.N)
    window = (float(sol.grid_r[in_window][0]), r_end)
    return RadialSolution(
        grid_r=np.concatenate([sol.grid_r, extra]),
        values_u=np.concatenate([sol.values_u, coefficient * tail_u]),
        values_du=np.concatenate([sol.values_du, coefficient * tail_du]),
        alpha0=sol.alpha0,
        nodes=sol.nodes,
        N=sol.N,
        p=sol.p,
        tail=TailFit(coefficient=coefficient, r_match=r_end, window=window, mismatch=mismatch),
        meta=dict(sol.meta),
    )


def find_nodal(
    k: int,
    N: int,
    p: float,
    cfg: SolverConfig,
    logger: logging.Logger | None = None,
) -> RadialSolution:
    """Solución radial decreciente con exactamente k nodos y u(0) > 0."""
    logger = logger or _LOGGER
    _validate(N, p)
    if k < 0:
        raise DomainError(f"k debe ser >= 0 (k={k}).", k=k)

    lo, hi = _bracket(k, N, p, cfg, logger)
    lo, hi, iterations = _bisect(lo, hi, lambda a: _crossing_count(a, N, p, cfg) >= k + 1, cfg)
    logger.info("Bisección k=%d N=%d p=%.6g: alpha en [%.17g, %.17g] tras %d pasos", k, N, p, lo, hi, iterations)

    traj = _decaying_trajectory((0.5 * (lo + hi), lo, hi), k, N, p, cfg)
    if traj is None:
        raise ConvergenceError(
            f"La prueba de cola no se cumple en el corchete más fino para k={k}.",
            interval=(lo, hi),
            iterations=iterations,
        )
    sol = _sample(traj, cfg)
    sol.meta.update({"bracket": [lo, hi], "iterations": iterations})
    return attach_tail(sol, cfg)


def _classify_sample(args: tuple[float, int, float, SolverConfig]) -> Classification:
    alpha, N, p, cfg = args
    label = classify(integrate(alpha, N, p, cfg), cfg)
    if label.tag is Tag.INDETERMINATE:
        # un único reintento con tolerancias más estrictas
        label = classify(integrate(alpha, N, p, cfg.tightened()), cfg)
    return label


def sweep(
    alpha_range: tuple[float, float],
    samples: int,
    N: int,
    p: float,
    cfg: SolverConfig,
    *,
    workers: int = 1,
    geometric: bool = True,
    logger: logging.Logger | None = None,
) -> list[SweepInterval]:
    """Clasifica alphas muestreados y los fusiona en intervalos de etiqueta constante."""
    logger = logger or _LOGGER
    _validate(N, p)
    if samples < 2:
        raise DomainError("El barrido requiere al menos 2 muestras.", samples=samples)
    a_lo, a_hi = alpha_range
    if not 0.0 < a_lo < a_hi:
        raise DomainError(f"Rango de alpha inválido {alpha_range}.")
    alphas = np.geomspace(a_lo, a_hi, samples) if geometric else np.linspace(a_lo, a_hi, samples)

    tasks = [(float(a), N, p, cfg) for a in alphas]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            labels = list(pool.map(_classify_sample, tasks))
    else:
        labels = [_classify_sample(task) for task in tasks]

    intervals: list[SweepInterval] = []
    start = float(alphas[0])
    for i in range(1, len(alphas)):
        left, right = labels[i - 1], labels[i]
        if left == right:
            continue
        boundary_lo, boundary_hi = float(alphas[i - 1]), float(alphas[i])
        if right.k == left.k + 1 and Tag.INDETERMINATE not in (left.tag, right.tag):
            boundary_lo, boundary_hi, _ = _bisect(
                boundary_lo, boundary_hi, lambda a: _crossing_count(a, N, p, cfg) >= left.k + 1, cfg
            )
            intervals.append(SweepInterval(start, boundary_lo, str(left), left.k))
            traj = _decaying_trajectory((0.5 * (boundary_lo + boundary_hi),), left.k, N, p, cfg)
            threshold_tag = Classification(Tag.DECAY, left.k) if traj is not None else Classification(
                Tag.INDETERMINATE, left.k
            )
            intervals.append(SweepInterval(boundary_lo, boundary_hi, str(threshold_tag), left.k))
            logger.info("Umbral %s localizado en alpha=%.15g", threshold_tag, boundary_lo)
        else:
            intervals.append(SweepInterval(start, boundary_lo, str(left), left.k))
        start = boundary_hi
    intervals.append(SweepInterval(start, float(alphas[-1]), str(labels[-1]), labels[-1].k))
    return intervals


def decay_thresholds(intervals: Sequence[SweepInterval]) -> list[SweepInterval]:
    """Intervalos degenerados con etiqueta Decay encontrados por el barrido."""
    return [item for item in intervals if item.tag.startswith(Tag.DECAY.value)]
