"""Interfaz de línea de comandos: solve, sweep, reduce, spectrum, constants y verify.

Códigos de salida: 0 éxito, 1 chequeo fallido o error numérico, 2 uso incorrecto.
Los reportes van a stdout (o a ``--out``) y los diagnósticos a stderr.
"""
from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Sequence, TextIO

from pydantic import BaseModel, ConfigDict, Field, ValidationError, model_validator

from nodalkit.api import reports
from nodalkit.core.config import Settings, get_settings
from nodalkit.core.errors import NodalkitError
from nodalkit.core.logging_config import configure_logging
from nodalkit.services import acceptance, cache
from nodalkit.services.reduction import constants_ab, critical_point, fill_discrepancies
from nodalkit.services.shooting import sweep
from nodalkit.services.spectrum import (
    kernel_mode1_check,
    mode1_alignment,
    mode_eigens,
    small_eigen_scan,
    spectral_grid,
)
from nodalkit.services.transform import (
    FowlerParams,
    RadialSolution,
    params_of,
    params_of_p,
    radial_identities,
    to_fowler,
)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_USAGE = 2

_NEEDS_EXPONENT = {"solve", "sweep", "reduce", "spectrum"}


class RunConfig(BaseModel):
    """Parámetros de una ejecución validados antes de tocar los servicios."""

    model_config = ConfigDict(frozen=True)

    command: str
    N: int = Field(3, ge=3)
    eps: float | None = Field(None, ge=0.0)
    p: float | None = Field(None, gt=1.0)
    k: int = Field(1, ge=0)
    grid_step: float | None = Field(None, gt=0.0)
    left_margin: float | None = Field(None, gt=0.0)
    right_edge: float | None = None
    rtol: float | None = Field(None, gt=0.0)
    atol: float | None = Field(None, gt=0.0)
    bisection_rel_width: float | None = Field(None, gt=0.0)
    quadrature_epsrel: float | None = Field(None, gt=0.0)
    eigen_grid_tol: float | None = Field(None, gt=0.0)
    tau: float | None = Field(None, gt=0.0)
    out: Path | None = None
    cache_dir: str | None = None
    workers: int | None = Field(None, ge=1)
    use_cache: bool = True

    @model_validator(mode="after")
    def exponent_inputs(self) -> "RunConfig":
        if self.eps is not None and self.p is not None:
            raise ValueError("--eps y --p son mutuamente excluyentes")
        if self.command in _NEEDS_EXPONENT and self.eps is None and self.p is None:
            raise ValueError(f"el subcomando {self.command} requiere --eps o --p")
        return self

    def params(self) -> FowlerParams:
        """Parámetros de Fowler; sin exponente explícito se usa el crítico."""
        if self.p is not None:
            return params_of_p(self.p, self.N)
        return params_of(self.eps or 0.0, self.N)

    def apply(self, settings: Settings) -> Settings:
        """Settings con los valores de la línea de comandos superpuestos."""
        overrides: dict[str, Any] = {
            "rtol": self.rtol,
            "atol": self.atol,
            "grid_step_energy": self.grid_step,
            "left_margin": self.left_margin,
            "right_edge": self.right_edge,
            "bisection_rel_width": self.bisection_rel_width,
            "quadrature_epsrel": self.quadrature_epsrel,
            "eigen_grid_tol": self.eigen_grid_tol,
            "cache_dir": self.cache_dir,
            "workers": self.workers,
        }
        if self.tau is not None:
            overrides["tau_n3"] = overrides["tau_high"] = self.tau
        return settings.model_copy(update={key: value for key, value in overrides.items() if value is not None})


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _common(parser: argparse.ArgumentParser, *, exponent: bool = True) -> None:
    parser.add_argument("--dim", type=int, default=3, help="Dimensión N >= 3.")
    if exponent:
        group = parser.add_mutually_exclusive_group()
        group.add_argument("--eps", type=float, default=None, help="Distancia al exponente crítico.")
        group.add_argument("--p", type=float, default=None, help="Exponente subcrítico.")
    parser.add_argument("--out", type=Path, default=None, help="Archivo de salida (por defecto stdout).")
    parser.add_argument("--cache-dir", default=None, help="Directorio de caché (NODALKIT_CACHE).")
    parser.add_argument("--no-cache", action="store_true", help="No lee ni escribe la caché de perfiles.")
    parser.add_argument("--workers", type=int, default=None)
    parser.add_argument("--rtol", type=float, default=None)
    parser.add_argument("--atol", type=float, default=None)
    parser.add_argument("--grid-step", type=float, default=None)
    parser.add_argument("--left-margin", type=float, default=None)
    parser.add_argument("--right-edge", type=float, default=None)
    parser.add_argument("--bisection-tol", type=float, default=None)
    parser.add_argument("--quadrature-tol", type=float, default=None)
    parser.add_argument("--eigen-tol", type=float, default=None)
    parser.add_argument("--tau", type=float, default=None)
    parser.add_argument("--log-level", default=None)
    parser.add_argument("--no-metadata", action="store_true", help="Omite el bloque metadata del JSON.")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="nodalkit", description="Soluciones radiales nodales cerca del exponente crítico.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    solve_cmd = sub.add_parser("solve", help="Solución radial con k nodos por disparo.")
    _common(solve_cmd)
    solve_cmd.add_argument("--nodes", type=int, default=1)

    sweep_cmd = sub.add_parser("sweep", help="Clasificación de trayectorias en un rango de alpha (CSV).")
    _common(sweep_cmd)
    sweep_cmd.add_argument("--alpha-min", type=float, default=0.5)
    sweep_cmd.add_argument("--alpha-max", type=float, default=50.0)
    sweep_cmd.add_argument("--samples", type=int, default=64)
    sweep_cmd.add_argument("--linear", action="store_true", help="Muestreo lineal en lugar de geométrico.")

    reduce_cmd = sub.add_parser("reduce", help="Punto crítico de la energía reducida.")
    _common(reduce_cmd)
    reduce_cmd.add_argument("--multistart", action="store_true")
    reduce_cmd.add_argument("--numeric", action="store_true", help="Compara con la energía numérica K_eps.")

    spectrum_cmd = sub.add_parser("spectrum", help="Autovalores de un modo del operador linealizado.")
    _common(spectrum_cmd)
    spectrum_cmd.add_argument("--nodes", type=int, default=1)
    spectrum_cmd.add_argument("--mode", type=int, default=0, help="Nivel j del armónico esférico.")
    spectrum_cmd.add_argument("--count", type=int, default=4)
    spectrum_cmd.add_argument("--vectors", action="store_true")
    spectrum_cmd.add_argument("--scan", action="store_true", help="Barrido en epsilon de los autovalores pequeños.")

    constants_cmd = sub.add_parser("constants", help="Constantes a0, b0 e integrales del perfil.")
    _common(constants_cmd)

    verify_cmd = sub.add_parser("verify", help="Ejecuta las suites de verificación.")
    _common(verify_cmd, exponent=False)
    verify_cmd.add_argument(
        "--suite", action="append", choices=sorted([*acceptance.SUITES, "all"]), default=None
    )
    return parser


def _run_config(args: argparse.Namespace) -> RunConfig:
    return RunConfig(
        command=args.command,
        N=args.dim,
        eps=getattr(args, "eps", None),
        p=getattr(args, "p", None),
        k=getattr(args, "nodes", 1),
        grid_step=args.grid_step,
        left_margin=args.left_margin,
        right_edge=args.right_edge,
        rtol=args.rtol,
        atol=args.atol,
        bisection_rel_width=args.bisection_tol,
        quadrature_epsrel=args.quadrature_tol,
        eigen_grid_tol=args.eigen_tol,
        tau=args.tau,
        out=args.out,
        cache_dir=args.cache_dir,
        workers=args.workers,
        use_cache=not args.no_cache,
    )


class _Session:
    """Estado compartido por los manejadores de subcomandos."""

    def __init__(
        self,
        args: argparse.Namespace,
        config: RunConfig,
        settings: Settings,
        logger: logging.Logger,
        stdout: TextIO,
    ) -> None:
        self.args = args
        self.config = config
        self.settings = settings
        self.logger = logger
        self.stdout = stdout

    def profile(self, k: int) -> RadialSolution:
        params = self.config.params()
        return cache.cached_nodal(
            k,
            self.config.N,
            params.p,
            self.settings.solver_config(),
            self.settings.cache_path,
            use_cache=self.config.use_cache,
            logger=self.logger.getChild("shooting"),
        )

    def emit_json(self, kind: str, report: dict[str, Any]) -> None:
        metadata = None if self.args.no_metadata else reports.build_metadata(self.settings, kind)
        text = reports.dumps_report(reports.report_envelope(kind, report, metadata))
        reports.write_text(text, self.config.out, self.stdout)
        if self.config.out is not None:
            self.logger.info("Reporte %s escrito en %s", kind, self.config.out)


def _solve(session: _Session) -> int:
    u = session.profile(session.config.k)
    params = session.config.params()
    settings = session.settings
    grid = spectral_grid(
        u, params, step=settings.grid_step_energy, left_margin=settings.left_margin, right_edge=settings.right_edge
    )
    identities = radial_identities(u, to_fowler(u, params, grid))
    report = u.to_payload()
    report["residual"] = {
        "identities": identities,
        "tail_mismatch": None if u.tail is None else u.tail.mismatch,
    }
    session.emit_json("solve", report)
    return EXIT_OK


def _sweep(session: _Session) -> int:
    args = session.args
    params = session.config.params()
    intervals = sweep(
        (args.alpha_min, args.alpha_max),
        args.samples,
        session.config.N,
        params.p,
        session.settings.solver_config(),
        workers=session.settings.workers,
        geometric=not args.linear,
        logger=session.logger.getChild("shooting"),
    )
    reports.write_text(reports.sweep_csv(intervals), session.config.out, session.stdout)
    return EXIT_OK


def _reduce(session: _Session) -> int:
    settings = session.settings
    params = session.config.params()
    consts = constants_ab(session.config.N, params)
    report = critical_point(
        params,
        consts,
        max_iter=settings.newton_max_iter,
        grad_tol=settings.newton_grad_tol,
        multistart=session.args.multistart,
        logger=session.logger.getChild("reduction"),
    )
    fill_discrepancies(
        report,
        params,
        consts,
        numeric=session.args.numeric,
        step=settings.grid_step_energy,
        margin=settings.left_margin,
        right_edge=settings.right_edge,
        tol=settings.fixed_point_tol,
        max_iter=settings.fixed_point_max_iter,
    )
    payload = report.to_payload()
    payload.update({"N": params.N, "eps": params.eps, "beta": params.beta, "a0": consts.a0, "b0": consts.b0})
    session.emit_json("reduce", payload)
    return EXIT_OK


def _spectrum(session: _Session) -> int:
    settings = session.settings
    args = session.args
    options = {
        "step": settings.spectrum_step,
        "left_margin": settings.spectrum_left_margin,
        "right_edge": settings.spectrum_right_edge,
        "grid_tol": settings.eigen_grid_tol,
    }
    if args.scan:
        scan = small_eigen_scan(
            sorted(settings.sweep_eps, reverse=True),
            session.config.N,
            settings.solver_config(),
            small_factor=settings.small_eigen_factor,
            logger=session.logger.getChild("spectrum"),
            **options,
        )
        session.emit_json("spectrum-scan", scan.to_payload())
        return EXIT_OK

    u = session.profile(session.config.k)
    report = mode_eigens(u, args.mode, args.count, **options)
    if report.mode.k == 1:
        report.fits["kernel_alignment"] = mode1_alignment(u, report)
        residual, wronskian = kernel_mode1_check(
            u,
            step=settings.kernel_check_step,
            spectral_step=settings.spectrum_step,
            left_margin=settings.spectrum_left_margin,
            right_edge=settings.spectrum_right_edge,
            grid_tol=settings.eigen_grid_tol,
        )
        report.fits["kernel_residual"] = residual
        report.fits["wronskian"] = wronskian
    else:
        report.fits["small_count"] = int(
            sum(abs(value) < settings.small_eigen_factor * report.eps for value in report.eigenvalues)
        )
    session.emit_json("spectrum", report.to_payload(include_vectors=args.vectors))
    return EXIT_OK


def _constants(session: _Session) -> int:
    params = session.config.params()
    consts = constants_ab(session.config.N, params)
    payload = consts.to_payload()
    payload.update({"eps": params.eps, "beta": params.beta, "A": params.profile.amplitude_A})
    session.emit_json("constants", payload)
    return EXIT_OK


def _format_table(results: Sequence[acceptance.CheckResult]) -> str:
    header = ("estado", "suite", "chequeo", "valor", "umbral")
    rows = [header, *(item.row() for item in results)]
    widths = [max(len(row[i]) for row in rows) for i in range(len(header))]
    lines = ["  ".join(cell.ljust(width) for cell, width in zip(row, widths)).rstrip() for row in rows]
    return "\n".join(lines) + "\n"


def _verify(session: _Session) -> int:
    suites = session.args.suite or ["all"]
    ctx = acceptance.VerificationContext(
        settings=session.settings,
        N=session.config.N,
        logger=session.logger.getChild("acceptance"),
        use_cache=session.config.use_cache,
    )
    results = acceptance.run_suites(suites, ctx)
    summary = acceptance.summarize(results)
    session.stdout.write(_format_table(results))
    if session.config.out is not None:
        session.emit_json("verify", summary)
    session.logger.info("Verificación: %d aprobados, %d fallidos", summary["passed"], summary["failed"])
    return EXIT_OK if summary["failed"] == 0 else EXIT_FAILED


HANDLERS: dict[str, Callable[[_Session], int]] = {
    "solve": _solve,
    "sweep": _sweep,
    "reduce": _reduce,
    "spectrum": _spectrum,
    "constants": _constants,
    "verify": _verify,
}


def run(argv: Sequence[str] | None = None, *, stdout: TextIO | None = None, stderr: TextIO | None = None) -> int:
    """Punto de entrada del CLI; devuelve el código de salida."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(list(sys.argv[1:] if argv is None else argv))
    except SystemExit as exit_:
        return int(exit_.code or 0)

    try:
        config = _run_config(args)
    except ValidationError as error:
        parser.print_usage(stderr)
        for item in error.errors():
            stderr.write(f"nodalkit: error: {item['msg']}\n")
        return EXIT_USAGE

    settings = config.apply(get_settings())
    if args.log_level:
        settings = settings.model_copy(update={"log_level": args.log_level.upper()})
    logger = configure_logging(settings)
    session = _Session(args, config, settings, logger.getChild("cli"), stdout)

    try:
        return HANDLERS[config.command](session)
    except NodalkitError as error:
        logger.error("El subcomando %s falló: %s", config.command, error)
        if error.details:
            logger.debug("Detalles: %s", error.details)
        return EXIT_FAILED
    except Exception as error:
        logger.exception("Error no controlado en %s: %s", config.command, error)
        return EXIT_FAILED
