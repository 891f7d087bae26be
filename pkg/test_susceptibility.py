"""
Tests for the polar decomposition of Y, the meromorphic continuation of Ψ and the direct series.
"""
import numpy as np
import pytest
from numpy.polynomial import Polynomial

from unimodal_response.core.config import lambda_grid
from unimodal_response.core.errors import ConfigError, SeriesDivergence
from unimodal_response.core.pipeline import analyze_perturbation
from unimodal_response.core.susceptibility import (MeromorphicPsi, Observable, PiecewiseFunction,
                                                   SidedPoint, birkhoff_average, derivative_integral,
                                                   graded_quadrature, polar_eigen_relation,
                                                   richardson_limit)


def result_for(run, name):
    return next(r for r in run.perturbations if r.name == name)


def test_observable_families():
    X = Observable.from_config("endpoint_vanishing", (0.0, 1.0))
    assert X(0.0) == 0.0 and X(1.0) == 0.0
    assert X(0.5) == pytest.approx(0.25)
    custom = Observable.from_config({"coeffs": [1.0, 2.0]}, (0.0, 1.0))
    assert custom.derivative(3.0) == pytest.approx(2.0)
    with pytest.raises(ConfigError):
        Observable.from_config("cubic", (0.0, 1.0))


def test_graded_quadrature_is_exact_for_polynomials():
    nodes, weights = graded_quadrature(0.0, 2.0)
    assert np.sum(weights) == pytest.approx(2.0, rel=1e-14)
    assert np.sum(weights * nodes ** 2) == pytest.approx(8.0 / 3.0, rel=1e-13)
    assert np.all(np.diff(nodes) > 0)


def test_richardson_limit():
    steps = [1e-2, 5e-3, 2.5e-3, 1.25e-3]
    assert richardson_limit(lambda xi: 3.0 + 2.0 * xi + xi ** 2, steps) == pytest.approx(3.0, abs=1e-12)


def test_sided_pole_vanishes_at_far_end():
    sp = SidedPoint(cut_index=2, side="-", point=1.0, gamma=2.0, interval=1, other_end=1.0, length=1.0)
    assert sp.pole(1.0) == pytest.approx(0.0, abs=1e-15)
    assert sp.pole(1.9) == pytest.approx(1.0 / 0.1 - 0.1, rel=1e-12)


def test_ulam_pole_basis(ulam_run):
    poles = result_for(ulam_run, "constant").decomposition.poles
    assert poles.kappa == pytest.approx([2.0, -2.0])
    assert poles.cycles == [[0]]
    assert poles.preperiod == 1
    assert poles.expansion(poles.cycles[0]) == pytest.approx(2.0)
    alpha, factor = poles.matching[1]
    assert alpha == 0 and factor == pytest.approx(-1.0)
    assert poles.stretch[1] == pytest.approx(2.0)
    np.testing.assert_allclose(poles.polar_eigenvalues(), [2.0])
    assert poles.checks["cocycle_residue"] <= 1e-7
    assert polar_eigen_relation(ulam_run.op, poles) <= 1e-7


def test_ulam_symmetric_residues_cancel(ulam_run):
    decomposition = result_for(ulam_run, "constant").decomposition
    assert decomposition.coefficients[0] == pytest.approx(0.0, abs=1e-8)
    assert decomposition.checks["Y0_derivative_integral"] <= 1e-9
    vanishing = result_for(ulam_run, "endpoint_vanishing").decomposition
    assert vanishing.coefficients[0] == pytest.approx(0.0, abs=1e-12)
    assert vanishing.preperiodic_coefficients[1] == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("name", ["endpoint_vanishing", "constant", "identity"])
def test_two_path_agreement(ulam_run, name):
    result = result_for(ulam_run, name)
    grid = lambda_grid({"disk": {"radius": 0.4, "n_radial": 2, "n_angular": 4}})
    assert len(grid) == 9
    for lam in grid:
        direct = result.direct(lam)
        assert abs(result.psi.value(lam) - direct) <= 1e-7 * max(abs(direct), 1e-10)


@pytest.mark.parametrize("name", ["endpoint_vanishing", "constant", "identity"])
def test_finite_on_unit_circle(ulam_run, name):
    result = result_for(ulam_run, name)
    for lam in np.exp(2j * np.pi * np.arange(64) / 64):
        value, flag = result.psi(lam)
        assert flag == "ok"
        assert np.isfinite(value)


def test_pole_dichotomy(ulam_run):
    for name in ("endpoint_vanishing", "constant", "identity"):
        for entry in result_for(ulam_run, name).poles:
            if entry["family"] == "polar":
                assert entry["modulus"] <= 0.5 + 1e-6
            else:
                assert entry["modulus"] >= 4.0 - 1e-4
            if entry["resolved"]:
                assert entry["agrees"]
            else:
                assert entry["residue"] is None


def test_polar_pole_and_term_ratio(ulam_run):
    result = result_for(ulam_run, "identity")
    polar = [entry for entry in result.poles if entry["family"] == "polar"]
    assert len(polar) == 1
    assert polar[0]["location"] == pytest.approx(0.5, abs=1e-10)
    assert abs(polar[0]["residue"]) > 1e-6
    assert result.direct.ratio == pytest.approx(2.0, rel=1e-3)
    assert result.psi(0.5)[1] == "near_pole"


def test_direct_series_refuses_large_lambda(ulam_run):
    with pytest.raises(SeriesDivergence):
        result_for(ulam_run, "identity").direct(0.9)


def test_psi_is_linear_in_X(ulam_run):
    first = result_for(ulam_run, "endpoint_vanishing")
    second = result_for(ulam_run, "identity")
    combined = Observable("combined", first.X.poly + 2.0 * second.X.poly)
    result = analyze_perturbation(ulam_run, "combined", combined, np.array([0.3 + 0.1j]))
    expected = first.psi.value(0.3 + 0.1j) + 2.0 * second.psi.value(0.3 + 0.1j)
    assert result.grid[0]["psi"] == pytest.approx(expected, rel=1e-9, abs=1e-12)


def test_psi_at_zero_matches_orbit_average(ulam_run):
    result = result_for(ulam_run, "endpoint_vanishing")
    estimate = birkhoff_average(ulam_run.map_stage.fmap, result.X, ulam_run.observable,
                                n_samples=400_000, n_orbits=2000, seed=1)
    assert result.psi.value(0.0).real == pytest.approx(estimate, abs=1e-2)


def psi_for(run, name, A):
    return MeromorphicPsi(result_for(run, name).decomposition, run.op, run.density, A)


def test_psi_is_linear_in_A(ulam_run):
    square = Observable("square", Polynomial([0.0, 0.0, 1.0]))
    identity = Observable("identity", Polynomial([0.0, 1.0]))
    combined = Observable("combined", square.poly + 2.0 * identity.poly)
    for lam in (0.3 + 0.1j, -0.7j, np.exp(0.4j)):
        expected = (psi_for(ulam_run, "identity", square).value(lam)
                    + 2.0 * psi_for(ulam_run, "identity", identity).value(lam))
        assert psi_for(ulam_run, "identity", combined).value(lam) == pytest.approx(
            expected, rel=1e-9, abs=1e-12)


def test_constant_A_has_no_response(ulam_run):
    psi = psi_for(ulam_run, "endpoint_vanishing", Observable("one", Polynomial([1.0])))
    for lam in np.exp(2j * np.pi * np.arange(16) / 16):
        assert abs(psi.value(lam)) < 1e-8


def test_constant_X_series_does_not_grow(ulam_run):
    direct = result_for(ulam_run, "constant").direct
    assert direct.tail_dropped or abs(direct.ratio) < 0.5
    assert direct.certified_radius() == pytest.approx(direct.max_modulus)
    assert np.isfinite(direct(0.4))


def test_unresolved_terms_sit_below_their_floor(ulam_run):
    direct = result_for(ulam_run, "identity").direct
    assert np.all(direct.floors > 0)
    np.testing.assert_array_equal(direct.resolved, np.abs(direct.terms) > direct.floors)
    assert direct.certified_radius() <= 0.9 / abs(direct.ratio) + 1e-12


def test_derivative_integral_from_end_limits(ulam_run):
    atlas = ulam_run.atlas
    linear = PiecewiseFunction([lambda z: z, lambda z: 3.0 * z])
    expected = sum(scale * (chart.y_right - chart.y_left)
                   for scale, chart in zip((1.0, 3.0), atlas.charts))
    assert derivative_integral(linear, atlas) == pytest.approx(expected, rel=1e-12)


def test_Y0_derivative_integral_is_measured_off_nodes(ulam_run):
    decomposition = result_for(ulam_run, "constant").decomposition
    Y0 = decomposition.Y.piecewise() - decomposition.Y1 - decomposition.Y2
    assert decomposition.checks["Y0_derivative_integral"] == pytest.approx(
        abs(derivative_integral(Y0, decomposition.Y.atlas)), abs=1e-15)
    assert "Y0_derivative_integral_nodal" in decomposition.checks
