import dataclasses
import math

import numpy as np
import pytest

from nodalkit.core.errors import DomainError
from nodalkit.services.shooting import (
    Classification,
    Tag,
    attach_tail,
    classify,
    decay_thresholds,
    find_nodal,
    integrate,
    passes_tail_test,
    sweep,
)


def test_classification_text_roundtrip():
    label = Classification(Tag.DECAY, 2)
    assert str(label) == "Decay(2)"
    assert Classification.parse("BlowUpNegative(1)") == Classification(Tag.BLOWUP_NEGATIVE, 1)
    with pytest.raises(ValueError):
        Classification.parse("Explota(0)")


def test_small_alpha_blows_up_positive(solver_config, params_n3):
    traj = integrate(1e-3, 3, params_n3.p, solver_config)
    assert traj.terminal == "blowup"
    assert classify(traj, solver_config) == Classification(Tag.BLOWUP_POSITIVE, 0)


def test_integrate_rejects_bad_input(solver_config):
    with pytest.raises(DomainError):
        integrate(0.0, 3, 4.9, solver_config)


def test_crossings_switch_at_ground_state_alpha(solver_config, ground_state):
    below = integrate(ground_state.alpha0 * (1.0 - 1e-6), 3, ground_state.p, solver_config)
    above = integrate(ground_state.alpha0 * (1.0 + 1e-6), 3, ground_state.p, solver_config)
    assert len(below.crossings) == 0
    assert len(above.crossings) >= 1


def test_tail_test_accepts_far_field_only(solver_config):
    r = 20.0
    u = math.exp(-r) / r
    du = -u * (1.0 + 1.0 / r)
    assert passes_tail_test(r, u, du, 3, solver_config)
    assert not passes_tail_test(r, u, -du, 3, solver_config)
    assert not passes_tail_test(r, 1e-3, -1e-3, 3, solver_config)


def test_ground_state_structure(ground_state, solver_config):
    assert ground_state.nodes == ()
    assert ground_state.values_u[0] == pytest.approx(ground_state.alpha0, rel=1e-6)
    assert np.all(ground_state.values_u > 0.0)
    assert ground_state.meta["classification"] == "Decay(0)"
    assert ground_state.tail is not None
    assert ground_state.tail.mismatch < solver_config.tail_fit_tol


def test_one_node_solution(nodal_one, ground_state, params_n3):
    assert nodal_one.node_count == 1
    assert nodal_one.alpha0 > ground_state.alpha0
    node = nodal_one.nodes[0]
    assert np.all(nodal_one.values_u[nodal_one.grid_r < 0.99 * node] > 0.0)
    assert np.all(nodal_one.values_u[nodal_one.grid_r > 1.01 * node] < 0.0)
    assert nodal_one.p == params_n3.p


def test_profiles_share_log_grid(ground_state, nodal_one, solver_config):
    log_r = np.log(ground_state.grid_r)
    assert np.allclose(np.diff(log_r), solver_config.grid_step, rtol=1e-9)
    assert ground_state.grid_r[-1] == pytest.approx(nodal_one.grid_r[-1])
    assert ground_state.grid_r[-1] <= solver_config.tail_r_max


def test_attached_tail_is_continuous(ground_state):
    tail = ground_state.tail
    index = int(np.searchsorted(ground_state.grid_r, tail.r_match))
    left, right = ground_state.values_u[index - 1 : index + 1]
    assert abs(right / left - 1.0) < 0.05
    assert abs(ground_state.values_u[-1]) < 1e-60


def test_attach_tail_requires_decay(ground_state, solver_config):
    bad = dataclasses.replace(ground_state, meta={"classification": "BlowUpPositive(0)"})
    with pytest.raises(DomainError):
        attach_tail(bad, solver_config)


def test_find_nodal_domain(solver_config):
    with pytest.raises(DomainError):
        find_nodal(-1, 3, 4.9, solver_config)
    with pytest.raises(DomainError):
        find_nodal(0, 3, 5.0, solver_config)


def test_sweep_validation(solver_config):
    with pytest.raises(DomainError):
        sweep((1.0, 2.0), 1, 3, 4.9, solver_config)
    with pytest.raises(DomainError):
        sweep((2.0, 1.0), 8, 3, 4.9, solver_config)


@pytest.mark.slow
def test_sweep_locates_ground_state_threshold(solver_config, ground_state, nodal_one, null_logger):
    alpha_range = (0.5 * ground_state.alpha0, math.sqrt(ground_state.alpha0 * nodal_one.alpha0))
    intervals = sweep(alpha_range, 12, 3, ground_state.p, solver_config, logger=null_logger)
    assert intervals[0].tag == "BlowUpPositive(0)"
    thresholds = decay_thresholds(intervals)
    assert [item.tag for item in thresholds] == ["Decay(0)"]
    assert thresholds[0].alpha_lo == pytest.approx(ground_state.alpha0, rel=1e-8)
    for left, right in zip(intervals, intervals[1:]):
        assert left.alpha_hi <= right.alpha_lo
