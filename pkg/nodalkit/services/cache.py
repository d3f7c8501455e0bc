"""Caché de perfiles radiales direccionada por contenido.

Cada archivo ``<clave>.json`` guarda el perfil serializado junto con una suma
sha256 del bloque ``payload``. La escritura se hace sobre un temporal en el
mismo directorio seguido de ``os.replace``, de modo que los lectores nunca
observan un archivo a medio escribir.
"""
from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import tempfile
from pathlib import Path
from typing import Any, NamedTuple

from nodalkit.core.config import SolverConfig
from nodalkit.core.errors import CacheIntegrityError, CacheNotFoundError, DomainError
from nodalkit.services.shooting import find_nodal
from nodalkit.services.transform import RadialSolution

SCHEMA_VERSION = 1
_KEY_PATTERN = re.compile(r"^[0-9a-f]{64}$")

_LOGGER = logging.getLogger("nodalkit").getChild("cache")


class CacheQuery(NamedTuple):
    """Parámetros que identifican un perfil almacenado."""

    N: int
    p: float
    k: int
    config: SolverConfig


def canonical_json(value: Any) -> str:
    """JSON determinista: claves ordenadas, sin espacios y floats con repr exacto."""
    return json.dumps(value, sort_keys=True, separators=(",", ":"), allow_nan=True)


def cache_key(N: int, p: float, k: int, config: SolverConfig) -> str:
    """Clave sha256 de (N, p, k, tolerancias del integrador, paso de malla)."""
    material = {"N": int(N), "p": repr(float(p)), "k": int(k)}
    material.update({name: repr(float(value)) for name, value in config.cache_fingerprint().items()})
    return hashlib.sha256(canonical_json(material).encode("utf-8")).hexdigest()


def payload_checksum(payload: dict[str, Any]) -> str:
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()


def resolve_cache_dir(directory: Path | str, *, create: bool = False) -> Path:
    """Valida que el directorio de caché exista (o lo crea) y sea un directorio."""
    resolved = Path(directory).expanduser().resolve()
    if not resolved.exists():
        if not create:
            raise CacheNotFoundError(f"El directorio de caché {resolved} no existe.", directory=str(resolved))
        resolved.mkdir(parents=True, exist_ok=True)
    if not resolved.is_dir():
        raise DomainError(f"La ruta {resolved} no es un directorio válido.", directory=str(resolved))
    return resolved


def is_subpath(path: Path, base: Path) -> bool:
    """Indica si una ruta se encuentra dentro de otra ruta base."""
    try:
        path.relative_to(base)
    except ValueError:
        return False
    return True


def _entry_path(key: str, directory: Path) -> Path:
    if not _KEY_PATTERN.match(key):
        raise CacheNotFoundError(f"Clave de caché inválida: {key!r}.", key=key)
    path = (directory / f"{key}.json").resolve()
    if not is_subpath(path, directory):
        raise CacheNotFoundError("La clave solicitada apunta fuera del directorio de caché.", key=key)
    return path


def cache_store(
    profile: RadialSolution,
    directory: Path | str,
    config: SolverConfig,
    *,
    k: int | None = None,
    logger: logging.Logger | None = None,
) -> str:
    """Guarda ``profile`` y devuelve su clave. ``k`` se toma de los nodos si no se indica."""
    log = logger or _LOGGER
    nodes = profile.node_count if k is None else int(k)
    base = resolve_cache_dir(directory, create=True)
    key = cache_key(profile.N, profile.p, nodes, config)
    payload = profile.to_payload()
    document = {
        "schema": SCHEMA_VERSION,
        "key": key,
        "fingerprint": {"N": profile.N, "p": profile.p, "k": nodes, **config.cache_fingerprint()},
        "checksum": payload_checksum(payload),
        "payload": payload,
    }
    target = _entry_path(key, base)
    handle = tempfile.NamedTemporaryFile(
        "w", encoding="utf-8", dir=base, prefix=f".{key[:12]}-", suffix=".tmp", delete=False
    )
    try:
        with handle:
            handle.write(canonical_json(document))
            handle.flush()
            os.fsync(handle.fileno())
        os.replace(handle.name, target)
    except BaseException:
        Path(handle.name).unlink(missing_ok=True)
        raise
    log.info("Perfil N=%d p=%r k=%d guardado en caché con clave %s", profile.N, profile.p, nodes, key[:12])
    return key


def cache_load(
    key: str | CacheQuery,
    directory: Path | str,
    *,
    logger: logging.Logger | None = None,
) -> RadialSolution:
    """Recupera el perfil asociado a ``key`` o a la consulta ``(N, p, k, config)``."""
    log = logger or _LOGGER
    if isinstance(key, tuple):
        key = cache_key(*key)
    base = resolve_cache_dir(directory)
    path = _entry_path(key, base)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as error:
        raise CacheNotFoundError(f"No existe la entrada {key} en la caché {base}.", key=key) from error

    try:
        document = json.loads(text)
        payload = document["payload"]
        recorded = document["checksum"]
    except (json.JSONDecodeError, KeyError, TypeError) as error:
        raise CacheIntegrityError(f"La entrada {key} está dañada: {error}.", key=key) from error
    if document.get("schema") != SCHEMA_VERSION:
        raise CacheIntegrityError(
            f"Versión de esquema no soportada en {key}: {document.get('schema')!r}.", key=key
        )
    if payload_checksum(payload) != recorded:
        raise CacheIntegrityError(f"La suma de verificación de {key} no coincide.", key=key)

    log.debug("Entrada %s leída de la caché", key[:12])
    return RadialSolution.from_payload(payload)


def cached_nodal(
    k: int,
    N: int,
    p: float,
    config: SolverConfig,
    directory: Path | str,
    *,
    use_cache: bool = True,
    logger: logging.Logger | None = None,
) -> RadialSolution:
    """find_nodal con lectura y escritura en la caché."""
    log = logger or _LOGGER
    if use_cache:
        try:
            return cache_load(CacheQuery(N, p, k, config), directory, logger=log)
        except CacheNotFoundError:
            log.debug("Sin entrada en caché para N=%d p=%r k=%d", N, p, k)
        except CacheIntegrityError as error:
            log.warning("Entrada de caché descartada: %s", error)
    profile = find_nodal(k, N, p, config, log)
    if use_cache:
        cache_store(profile, directory, config, k=k, logger=log)
    return profile
