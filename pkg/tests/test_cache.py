import json
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest

from nodalkit.core.errors import CacheIntegrityError, CacheNotFoundError, DomainError
from nodalkit.services import cache


def _assert_same_profile(left, right):
    for name in ("grid_r", "values_u", "values_du"):
        assert np.array_equal(getattr(left, name), getattr(right, name))
    assert left.alpha0 == right.alpha0
    assert left.nodes == right.nodes
    assert left.tail == right.tail


def test_key_depends_on_every_field(solver_config):
    base = cache.cache_key(3, 4.9, 1, solver_config)
    assert len(base) == 64 and int(base, 16) >= 0
    assert cache.cache_key(3, 4.9, 1, solver_config) == base
    variants = {
        cache.cache_key(4, 4.9, 1, solver_config),
        cache.cache_key(3, 4.95, 1, solver_config),
        cache.cache_key(3, 4.9, 2, solver_config),
        cache.cache_key(3, 4.9, 1, solver_config.tightened()),
    }
    assert base not in variants
    assert len(variants) == 4


def test_roundtrip_is_bit_exact(ground_state, solver_config, tmp_path):
    key = cache.cache_store(ground_state, tmp_path, solver_config)
    assert (tmp_path / f"{key}.json").is_file()
    assert not list(tmp_path.glob("*.tmp"))
    _assert_same_profile(cache.cache_load(key, tmp_path), ground_state)
    by_query = cache.cache_load(cache.CacheQuery(3, ground_state.p, 0, solver_config), tmp_path)
    _assert_same_profile(by_query, ground_state)


def test_different_tolerances_miss(ground_state, solver_config, tmp_path):
    cache.cache_store(ground_state, tmp_path, solver_config)
    with pytest.raises(CacheNotFoundError):
        cache.cache_load(cache.CacheQuery(3, ground_state.p, 0, solver_config.tightened()), tmp_path)


def test_checksum_detects_tampering(ground_state, solver_config, tmp_path):
    key = cache.cache_store(ground_state, tmp_path, solver_config)
    path = tmp_path / f"{key}.json"
    document = json.loads(path.read_text(encoding="utf-8"))
    document["payload"]["alpha0"] += 1e-9
    path.write_text(json.dumps(document), encoding="utf-8")
    with pytest.raises(CacheIntegrityError):
        cache.cache_load(key, tmp_path)


def test_truncated_entry_is_reported(ground_state, solver_config, tmp_path):
    key = cache.cache_store(ground_state, tmp_path, solver_config)
    path = tmp_path / f"{key}.json"
    path.write_text(path.read_text(encoding="utf-8")[:100], encoding="utf-8")
    with pytest.raises(CacheIntegrityError):
        cache.cache_load(key, tmp_path)


def test_unknown_schema_is_rejected(ground_state, solver_config, tmp_path):
    key = cache.cache_store(ground_state, tmp_path, solver_config)
    path = tmp_path / f"{key}.json"
    document = json.loads(path.read_text(encoding="utf-8"))
    document["schema"] = 99
    path.write_text(json.dumps(document), encoding="utf-8")
    with pytest.raises(CacheIntegrityError):
        cache.cache_load(key, tmp_path)


def test_invalid_keys_and_directories(tmp_path):
    with pytest.raises(CacheNotFoundError):
        cache.cache_load("../../etc/passwd", tmp_path)
    with pytest.raises(CacheNotFoundError):
        cache.cache_load("0" * 64, tmp_path)
    with pytest.raises(CacheNotFoundError):
        cache.cache_load("0" * 64, tmp_path / "missing")
    not_a_dir = tmp_path / "file.txt"
    not_a_dir.write_text("x", encoding="utf-8")
    with pytest.raises(DomainError):
        cache.resolve_cache_dir(not_a_dir)


def test_concurrent_readers_see_complete_entries(ground_state, solver_config, tmp_path):
    key = cache.cache_store(ground_state, tmp_path, solver_config)

    def load_and_rewrite(index: int):
        if index % 4 == 0:
            cache.cache_store(ground_state, tmp_path, solver_config)
        return cache.cache_load(key, tmp_path)

    with ThreadPoolExecutor(max_workers=8) as pool:
        loaded = list(pool.map(load_and_rewrite, range(32)))
    for profile in loaded:
        _assert_same_profile(profile, ground_state)


def test_cached_nodal_computes_once(ground_state, solver_config, tmp_path, monkeypatch, null_logger):
    calls = []

    def fake_find_nodal(k, N, p, cfg, logger=None):
        calls.append((k, N, p))
        return ground_state

    monkeypatch.setattr(cache, "find_nodal", fake_find_nodal)
    first = cache.cached_nodal(0, 3, ground_state.p, solver_config, tmp_path, logger=null_logger)
    second = cache.cached_nodal(0, 3, ground_state.p, solver_config, tmp_path, logger=null_logger)
    assert len(calls) == 1
    _assert_same_profile(first, second)

    cache.cached_nodal(0, 3, ground_state.p, solver_config, tmp_path, use_cache=False, logger=null_logger)
    assert len(calls) == 2


def test_cached_nodal_recomputes_corrupt_entry(ground_state, solver_config, tmp_path, monkeypatch, null_logger):
    monkeypatch.setattr(cache, "find_nodal", lambda *args, **kwargs: ground_state)
    key = cache.cache_store(ground_state, tmp_path, solver_config, k=0)
    (tmp_path / f"{key}.json").write_text("{", encoding="utf-8")
    profile = cache.cached_nodal(0, 3, ground_state.p, solver_config, tmp_path, logger=null_logger)
    _assert_same_profile(profile, ground_state)
    _assert_same_profile(cache.cache_load(key, tmp_path), ground_state)
