import numpy as np
import pytest

from nodalkit.core.errors import DomainError, GridError
from nodalkit.services.spectrum import (
    cosine_similarity,
    hardy_form_minimum,
    kernel_mode1_check,
    laplace_beltrami,
    level_multiplicity,
    limit_eigenfunctions,
    limit_spectrum,
    mode1_alignment,
    mode_eigens,
    mode_of_level,
    nu,
    nu_sequence,
    small_eigen_scan,
    spectral_grid,
    symmetrized_eigens_fine,
    unsymmetrized_eigens,
)
from nodalkit.services.transform import params_of


@pytest.mark.parametrize("N,expected", [(3, [1, 3, 5, 7]), (4, [1, 4, 9, 16]), (5, [1, 5, 14, 30])])
def test_level_multiplicities(N, expected):
    assert [level_multiplicity(N, j) for j in range(4)] == expected


def test_laplace_beltrami_counts_multiplicity():
    modes = laplace_beltrami(3, 5)
    assert [m.lambda_k for m in modes] == [0.0, 2.0, 2.0, 2.0, 6.0]
    assert [m.k for m in modes] == [0, 1, 2, 3, 4]
    assert mode_of_level(4, 2).lambda_k == 2 * (4 - 2 + 2)
    assert mode_of_level(4, 2).k == 5
    with pytest.raises(DomainError):
        mode_of_level(3, -1)


@pytest.fixture(scope="module")
def limit_n3():
    return limit_spectrum(3, 3)


def test_limit_spectrum_top_eigenvalues(limit_n3):
    values = limit_n3.eigenvalues
    assert np.all(np.diff(values) > 0)
    assert values[-1] == pytest.approx(2.0, abs=1e-3)
    assert abs(values[-2]) < 1e-3
    assert values[-3] < 0.0


def test_limit_eigenvectors_match_explicit_functions(limit_n3):
    params = params_of(0.0, 3)
    principal, kernel = limit_eigenfunctions(3, limit_n3.grid_t)
    assert cosine_similarity(limit_n3.eigenvectors[-1], principal, limit_n3.grid_t, params) > 0.999
    assert cosine_similarity(limit_n3.eigenvectors[-2], kernel, limit_n3.grid_t, params) > 0.999


def test_limit_spectrum_validation():
    with pytest.raises(DomainError):
        limit_spectrum(3, 2)
    with pytest.raises(GridError):
        limit_spectrum(3, 3, np.linspace(-10.0, 10.0, 100))


def test_spectral_grid_is_odd(ground_state, params_n3):
    grid = spectral_grid(ground_state, params_n3)
    assert grid.size % 2 == 1
    assert grid[-1] <= 5.0 + 1e-12


def test_ground_state_mode1_has_translation_kernel(ground_state):
    report = mode_eigens(ground_state, 1, 2)
    assert report.mode.lambda_k == 2.0
    assert np.min(np.abs(report.eigenvalues)) < 1e-3
    assert mode1_alignment(ground_state, report) > 0.999
    payload = report.to_payload(include_vectors=True)
    assert len(payload["eigenvectors"]) == 2
    assert len(payload["grid_t"]) == report.grid_t.size


def test_kernel_check_on_ground_state(ground_state):
    op_residual, wronskian = kernel_mode1_check(ground_state)
    assert op_residual < 1e-5
    assert wronskian < 1e-3


def test_mode_eigens_validation(ground_state):
    with pytest.raises(DomainError):
        mode_eigens(ground_state, 0, 0)
    with pytest.raises(GridError):
        mode_eigens(ground_state, 0, 2, np.linspace(-20.0, 2.0, 1000))


def test_symmetrization_preserves_kernel_eigenvalue(ground_state, params_n3):
    grid = spectral_grid(ground_state, params_n3)
    symmetric = symmetrized_eigens_fine(ground_state, 1, 2, grid)
    raw = unsymmetrized_eigens(ground_state, 1, 2, grid, target=0.0)
    assert raw[-1] == pytest.approx(symmetric[-1], abs=1e-6)


def test_hardy_bound(ground_state, params_n3):
    value = hardy_form_minimum(ground_state)
    assert value >= params_n3.gamma0 * (1.0 - 1e-4)
    assert value < params_n3.gamma0 + 0.05


def test_radial_morse_index(ground_state, nodal_one):
    ground = nu_sequence(ground_state, 2)
    assert ground[0] < 0.0 < ground[1]
    nodal = nu_sequence(nodal_one, 3)
    assert nodal[0] < nodal[1] < 0.0 < nodal[2]
    assert nu(nodal_one, 2) == pytest.approx(nodal[1], rel=1e-12)
    with pytest.raises(DomainError):
        nu(nodal_one, 0)


def test_small_eigen_scan_requires_decreasing_eps(solver_config):
    with pytest.raises(DomainError):
        small_eigen_scan([0.02, 0.04, 0.08], 3, solver_config)
    with pytest.raises(DomainError):
        small_eigen_scan([0.08, 0.04], 3, solver_config)


@pytest.mark.slow
def test_small_eigenvalues_of_nodal_solution(solver_config, null_logger):
    scan = small_eigen_scan([0.08, 0.04, 0.02], 3, solver_config, logger=null_logger)
    for entry in scan.entries:
        assert entry["small_count"] == 2
        assert len(entry["xi"]) == 2 and min(entry["xi"]) > 0.0
    assert np.isfinite(scan.c0_estimate)
