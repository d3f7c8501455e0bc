"""Configuración central del toolkit nodalkit."""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Annotated, Any

from pydantic import AliasChoices, Field, field_validator
from pydantic_settings import BaseSettings, NoDecode, SettingsConfigDict


@dataclass(frozen=True)
class SolverConfig:
    """Vista inmutable de las tolerancias del integrador radial y de la bisección."""

    rtol: float
    atol: float
    r0: float
    r_max: float
    blowup_factor: float
    decay_tol: float
    decay_slope_tol: float
    bisection_rel_width: float
    bisection_max_iter: int
    alpha_min: float
    alpha_max: float
    bracket_factor: float
    grid_step: float
    t_min: float
    tail_window: float
    tail_fit_tol: float
    tail_r_max: float

    def tightened(self, factor: float = 100.0) -> "SolverConfig":
        """Devuelve una copia con tolerancias del integrador más estrictas."""
        values = dict(self.__dict__)
        values["rtol"] = max(self.rtol / factor, 1e-13)
        values["atol"] = max(self.atol / factor, 1e-15)
        return SolverConfig(**values)

    def cache_fingerprint(self) -> dict[str, float]:
        """Campos que forman parte de la clave de caché de un perfil."""
        return {"rtol": self.rtol, "atol": self.atol, "grid_step": self.grid_step}


class Settings(BaseSettings):
    """Valores de configuración obtenidos desde variables de entorno o valores por defecto."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_prefix="NODALKIT_",
        case_sensitive=False,
        populate_by_name=True,
    )

    app_name: str = "nodalkit"
    version: str = "1.0.0"
    log_level: str = Field("INFO", description="Nivel de logging (DEBUG, INFO, WARNING, ERROR).")
    log_dir: str = Field("logs", description="Directorio base para almacenar los archivos de log.")
    log_filename: str = Field("nodalkit.log", description="Nombre del archivo principal de log.")
    log_backup_count: int = Field(7, ge=1, description="Cantidad de archivos de log históricos a mantener.")
    log_to_file: bool = Field(True, description="Activa el handler de archivo con rotación diaria.")
    include_resource_metrics: bool = Field(
        True,
        description="Incluye métricas de CPU/RAM (psutil) en el bloque metadata de los reportes.",
    )

    cache_dir: str = Field(
        ".nodalkit_cache",
        validation_alias=AliasChoices("NODALKIT_CACHE", "NODALKIT_CACHE_DIR", "cache_dir"),
        description="Directorio de la caché de perfiles radiales.",
    )
    workers: int = Field(1, ge=1, description="Procesos en paralelo para barridos en alpha y en epsilon.")

    # Integración radial y bisección
    rtol: float = Field(1e-10, gt=0.0, description="Tolerancia relativa del integrador RK45.")
    atol: float = Field(1e-12, gt=0.0, description="Tolerancia absoluta del integrador RK45.")
    r0: float = Field(1e-4, gt=0.0, description="Radio de arranque de la serie de Taylor para alpha de orden 1.")
    r_max: float = Field(40.0, gt=1.0, description="Radio máximo de integración para clasificar trayectorias.")
    blowup_factor: float = Field(10.0, gt=1.0, description="Umbral de explosión |u| > factor·max(1, alpha).")
    decay_tol: float = Field(1e-6, gt=0.0, description="Umbral de |u| y |u'| para la prueba de cola.")
    decay_slope_tol: float = Field(0.2, gt=0.0, description="Tolerancia de |u'/u + 1 + (N-1)/(2r)| en la prueba de cola.")
    bisection_rel_width: float = Field(1e-14, gt=0.0, description="Ancho relativo de parada de la bisección.")
    bisection_max_iter: int = Field(200, ge=1, description="Iteraciones máximas de la bisección.")
    alpha_min: float = Field(1e-3, gt=0.0, description="Extremo inferior de la búsqueda de corchetes en alpha.")
    alpha_max: float = Field(1e6, gt=1.0, description="Extremo superior de la búsqueda de corchetes en alpha.")
    bracket_factor: float = Field(1.25, gt=1.0, description="Razón geométrica del muestreo de corchetes.")
    t_min: float = Field(-60.0, lt=0.0, description="Extremo izquierdo (log r) de la malla de los perfiles.")
    tail_window: float = Field(2.0, gt=0.0, description="Longitud de la ventana de ajuste de la cola lineal.")
    tail_fit_tol: float = Field(1e-4, gt=0.0, description="Desajuste relativo máximo del ajuste de cola.")
    tail_r_max: float = Field(160.0, gt=1.0, description="Radio hasta el que se extiende la cola ajustada.")

    # Mallas en la variable de Emden-Fowler
    grid_step_energy: float = Field(1e-3, gt=0.0, description="Paso en t para energías y perfiles.")
    grid_step_sweep: float = Field(1e-2, gt=0.0, description="Paso en t para barridos exploratorios.")
    left_margin: float = Field(20.0, gt=0.0, description="Margen a la izquierda del primer bulto.")
    right_edge: float = Field(4.0, description="Extremo derecho de la ventana de truncamiento.")
    truncation_tol: float = Field(1e-8, gt=0.0, description="Valor máximo admitido en los extremos truncados.")
    quadrature_epsabs: float = Field(1e-14, gt=0.0, description="Tolerancia absoluta de quad.")
    quadrature_epsrel: float = Field(1e-12, gt=0.0, description="Tolerancia relativa de quad.")

    # Ansatz y reducción
    tau_n3: float = Field(0.75, gt=0.5, lt=1.0, description="Exponente tau de las cotas del residuo para N=3.")
    tau_high: float = Field(0.9, gt=0.5, lt=1.0, description="Exponente tau de las cotas del residuo para N>=4.")
    fixed_point_tol: float = Field(1e-12, gt=0.0, description="Tolerancia del punto fijo del término no lineal.")
    fixed_point_max_iter: int = Field(100, ge=1, description="Iteraciones máximas del punto fijo.")
    newton_max_iter: int = Field(60, ge=1, description="Iteraciones máximas de Newton sobre el gradiente reducido.")
    newton_grad_tol: float = Field(1e-12, gt=0.0, description="Tolerancia relativa de |grad K| en Newton.")

    # Espectro
    spectrum_step: float = Field(5e-3, gt=0.0, description="Paso fino de las discretizaciones espectrales.")
    spectrum_right_edge: float = Field(5.0, description="Extremo derecho (t) de los problemas espectrales.")
    spectrum_left_margin: float = Field(30.0, gt=0.0, description="Margen a la izquierda de t2 en el espectro.")
    eigen_grid_tol: float = Field(1e-4, gt=0.0, description="Cambio máximo de un autovalor al refinar la malla.")
    kernel_check_step: float = Field(2e-2, gt=0.0, description="Paso de las diferencias en las pruebas de núcleo.")
    small_eigen_factor: float = Field(10.0, gt=0.0, description="Autovalor pequeño: |mu| < factor·epsilon.")

    sweep_eps: Annotated[list[float], NoDecode] = Field(
        default_factory=lambda: [0.08, 0.04, 0.02],
        description="Sucesión de epsilon usada por los chequeos de escalamiento.",
    )

    @field_validator("sweep_eps", mode="before")
    @classmethod
    def split_eps_list(cls, value: Any) -> list[float]:
        """Permite especificar la sucesión de epsilon como cadena separada por comas."""
        if value is None or value == "":
            return []
        if isinstance(value, str):
            return [float(item) for item in value.split(",") if item.strip()]
        if isinstance(value, (list, tuple)):
            return [float(item) for item in value]
        raise TypeError("sweep_eps debe ser una cadena o una colección de números")

    @field_validator("log_level")
    @classmethod
    def normalize_level(cls, value: str) -> str:
        """Normaliza el nivel de logging a mayúsculas."""
        return value.upper()

    @property
    def log_path(self) -> Path:
        """Obtiene la ruta completa del archivo de log principal."""
        return Path(self.log_dir).expanduser() / self.log_filename

    @property
    def cache_path(self) -> Path:
        """Directorio de caché resuelto."""
        return Path(self.cache_dir).expanduser().resolve()

    def tau_for(self, dim: int) -> float:
        """Exponente tau según la dimensión."""
        return self.tau_n3 if dim == 3 else self.tau_high

    def solver_config(self) -> SolverConfig:
        """Construye la vista inmutable usada por el módulo de disparo."""
        return SolverConfig(
            rtol=self.rtol,
            atol=self.atol,
            r0=self.r0,
            r_max=self.r_max,
            blowup_factor=self.blowup_factor,
            decay_tol=self.decay_tol,
            decay_slope_tol=self.decay_slope_tol,
            bisection_rel_width=self.bisection_rel_width,
            bisection_max_iter=self.bisection_max_iter,
            alpha_min=self.alpha_min,
            alpha_max=self.alpha_max,
            bracket_factor=self.bracket_factor,
            grid_step=self.grid_step_energy,
            t_min=self.t_min,
            tail_window=self.tail_window,
            tail_fit_tol=self.tail_fit_tol,
            tail_r_max=self.tail_r_max,
        )


@lru_cache()
def get_settings() -> Settings:
    """Obtiene una instancia cacheada de la configuración."""
    return Settings()
