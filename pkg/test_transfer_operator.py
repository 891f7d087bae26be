"""
Tests for the discretized transfer operators, their spectrum and the invariant density.
"""
import numpy as np
import pytest

from conftest import ulam_density
from unimodal_response.core.chart_atlas import AffineBranch, BranchSystem
from unimodal_response.core.transfer_operator import (apply_pointwise, assemble_operators,
                                                      check_structure, invariant_density,
                                                      spectrum)


@pytest.fixture(scope="module")
def doubling():
    """y -> 2y mod 1 on two half intervals, all branches increasing."""
    branches = {(0, 0): AffineBranch(0.5, 0.0), (0, 1): AffineBranch(0.5, 0.0),
                (1, 0): AffineBranch(0.5, 0.5), (1, 1): AffineBranch(0.5, 0.5)}
    return BranchSystem.synthetic([0.5, 0.5], branches, {edge: 1 for edge in branches})


def test_doubling_spectrum(doubling):
    op = assemble_operators(doubling, 12)
    values = op.eigen()[0]
    np.testing.assert_allclose(values[:4].real, [1.0, 0.5, 0.25, 0.125], atol=1e-10)
    density = invariant_density(op)
    np.testing.assert_allclose(density.values, 1.0, atol=1e-10)


def test_doubling_structure(doubling):
    report = check_structure(assemble_operators(doubling, 12), n_random=5)
    assert report["mass_drift"] <= report["mass_tol"]
    assert report["positivity_min"] >= report["positivity_tol"]


def test_ulam_eigenvalues(ulam_run):
    report = ulam_run.spectrum
    expected = 4.0 ** -np.arange(4)
    np.testing.assert_allclose(np.real(report["eigenvalues"]), expected, atol=1e-8)
    np.testing.assert_allclose(np.imag(report["eigenvalues"]), 0.0, atol=1e-8)
    assert all(report["converged"])
    assert report["leading_error"] <= 1e-9
    assert report["mass_left_residual"] <= 1e-10


def test_ulam_flat_traces(ulam_run):
    traces = np.real(ulam_run.spectrum["flat_traces"])
    n = np.arange(1, 7)
    np.testing.assert_allclose(traces, 4.0 ** n / (4.0 ** n - 1.0), rtol=1e-8)


def test_ulam_density_matches_arcsine_law(ulam_run):
    density = ulam_run.density
    x = np.linspace(0.1, 0.9, 9)
    np.testing.assert_allclose(density.rho(x), ulam_density(x), atol=1e-8)
    assert density.total_mass() == pytest.approx(1.0, abs=1e-12)


def test_ulam_structure(ulam_run):
    report = ulam_run.structure
    assert report["mass_drift"] <= 1e-11
    assert report["positivity_min"] >= -1e-10
    assert max(report["h1_residuals"].values()) <= 1e-7


def test_matrix_agrees_with_pointwise_operator(ulam_run):
    op = ulam_run.op
    funcs = [lambda z: np.cos(z), lambda z: 1.0 + z * z]
    values = op.basis.project(funcs)
    image = op.L @ values
    for k, piece in enumerate(op.basis.pieces):
        expected = apply_pointwise(op.branches, funcs, k, piece.nodes, weighted=True)
        np.testing.assert_allclose(image[op.basis.slice(k)], np.real(expected), atol=1e-9)


def test_coarse_degree_is_not_converged(ulam_run):
    coarse = assemble_operators(ulam_run.branches, 8)
    report = spectrum(coarse, n_keep=4, degree_step=8, tol=1e-8)
    assert not all(report["converged"])
