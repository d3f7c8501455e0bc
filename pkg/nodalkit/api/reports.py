"""Serialización de reportes: sobre JSON versionado, bloque metadata y CSV de barridos."""
from __future__ import annotations

import csv
import importlib.util
import io
import json
import math
import platform
from datetime import datetime, timezone
from pathlib import Path
from typing import Any, Iterable, TextIO

import numpy as np
import scipy

from nodalkit.core.config import Settings
from nodalkit.services.shooting import SweepInterval

SCHEMA_VERSION = 1
SWEEP_COLUMNS = ("alpha_lo", "alpha_hi", "tag", "crossings")


def gather_resource_metrics() -> dict[str, float]:
    """Obtiene métricas básicas de CPU y memoria si psutil está disponible."""
    if importlib.util.find_spec("psutil") is None:
        return {}

    import psutil  # type: ignore

    return {
        "cpu_percent": psutil.cpu_percent(interval=None),
        "memory_percent": psutil.virtual_memory().percent,
    }


def build_metadata(settings: Settings, command: str) -> dict[str, Any]:
    """Bloque excluido de las comparaciones de determinismo."""
    metadata: dict[str, Any] = {
        "command": command,
        "timestamp": datetime.now(timezone.utc).isoformat(),
        "version": settings.version,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }
    if settings.include_resource_metrics:
        metrics = gather_resource_metrics()
        if metrics:
            metadata["resources"] = metrics
    return metadata


def to_jsonable(value: Any) -> Any:
    """Convierte arreglos y escalares de numpy; los floats no finitos pasan a null."""
    if isinstance(value, dict):
        return {str(key): to_jsonable(item) for key, item in value.items()}
    if isinstance(value, (list, tuple)):
        return [to_jsonable(item) for item in value]
    if isinstance(value, np.ndarray):
        return to_jsonable(value.tolist())
    if isinstance(value, np.generic):
        return to_jsonable(value.item())
    if isinstance(value, float) and not math.isfinite(value):
        return None
    return value


def report_envelope(kind: str, report: dict[str, Any], metadata: dict[str, Any] | None = None) -> dict[str, Any]:
    envelope: dict[str, Any] = {"schema": SCHEMA_VERSION, "kind": kind, "report": to_jsonable(report)}
    if metadata is not None:
        envelope["metadata"] = metadata
    return envelope


def dumps_report(envelope: dict[str, Any]) -> str:
    """JSON con claves ordenadas; json usa repr para los floats (precisión de ida y vuelta)."""
    return json.dumps(envelope, indent=2, sort_keys=True, allow_nan=False) + "\n"


def deterministic_part(text: str) -> str:
    """Reserializa un reporte sin el bloque metadata."""
    data = json.loads(text)
    data.pop("metadata", None)
    return dumps_report(data)


def write_text(text: str, out: Path | None, stream: TextIO) -> None:
    if out is None:
        stream.write(text)
        return
    out = out.expanduser()
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(text, encoding="utf-8")


def sweep_csv(intervals: Iterable[SweepInterval]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(SWEEP_COLUMNS)
    for item in intervals:
        writer.writerow([repr(item.alpha_lo), repr(item.alpha_hi), item.tag, item.crossings])
    return buffer.getvalue()


def read_sweep_csv(text: str) -> list[SweepInterval]:
    reader = csv.DictReader(io.StringIO(text))
    return [
        SweepInterval(float(row["alpha_lo"]), float(row["alpha_hi"]), row["tag"], int(row["crossings"]))
        for row in reader
    ]
