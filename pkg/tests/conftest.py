from __future__ import annotations

import logging
import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).resolve().parents[1]
if str(ROOT) not in sys.path:
    sys.path.insert(0, str(ROOT))

from nodalkit.core.config import Settings, get_settings  # noqa: E402
from nodalkit.services.shooting import find_nodal  # noqa: E402
from nodalkit.services.transform import params_of  # noqa: E402


@pytest.fixture
def settings(tmp_path, monkeypatch) -> Settings:
    """Settings aislados: caché en tmp_path y sin archivo de log."""
    monkeypatch.setenv("NODALKIT_CACHE", str(tmp_path / "cache"))
    monkeypatch.setenv("NODALKIT_LOG_TO_FILE", "false")
    monkeypatch.setenv("NODALKIT_INCLUDE_RESOURCE_METRICS", "false")
    get_settings.cache_clear()
    yield get_settings()
    get_settings.cache_clear()


@pytest.fixture(scope="session")
def solver_config():
    return Settings(log_to_file=False).solver_config()


@pytest.fixture(scope="session")
def null_logger() -> logging.Logger:
    logger = logging.getLogger("nodalkit.tests")
    logger.addHandler(logging.NullHandler())
    logger.propagate = False
    return logger


@pytest.fixture(scope="session")
def params_n3():
    return params_of(0.1, 3)


@pytest.fixture(scope="session")
def ground_state(solver_config, null_logger, params_n3):
    return find_nodal(0, 3, params_n3.p, solver_config, null_logger)


@pytest.fixture(scope="session")
def nodal_one(solver_config, null_logger, params_n3):
    return find_nodal(1, 3, params_n3.p, solver_config, null_logger)
