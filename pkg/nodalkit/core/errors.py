"""Jerarquía de excepciones del toolkit."""
from __future__ import annotations

from typing import Any


class NodalkitError(Exception):
    """Error base de nodalkit; ``details`` acompaña el diagnóstico en los reportes."""

    def __init__(self, message: str, **details: Any) -> None:
        super().__init__(message)
        self.details: dict[str, Any] = details


class DomainError(NodalkitError, ValueError):
    """Argumento fuera del dominio de la operación."""


class GridError(NodalkitError, ValueError):
    """Malla incompatible o con margen insuficiente."""


class ConvergenceError(NodalkitError):
    """Un proceso iterativo o una cuadratura no alcanzó la tolerancia pedida."""


class BracketError(ConvergenceError):
    """No se encontró un corchete válido para la bisección o la búsqueda de raíces."""


class CacheNotFoundError(NodalkitError, KeyError):
    """La clave solicitada no existe en la caché."""

    def __str__(self) -> str:
        return str(self.args[0]) if self.args else ""


class CacheIntegrityError(NodalkitError):
    """El archivo de caché no coincide con su suma de verificación."""
