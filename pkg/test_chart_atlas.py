"""
Tests for the singular charts, the spectral basis and the conjugated branches.
"""
import numpy as np
import pytest

from unimodal_response.core.chart_atlas import (MIXED, SINE_SQUARED, AFFINE, IntervalChart,
                                                assumption_margin,
                                                mixed_profile, solve_mixed_chart,
                                                stadium_boundary, verify_assumption_A,
                                                verify_chart_asymptotics)
from unimodal_response.core.errors import AssumptionAUnverified, ConfigError, SingularEvaluation
from unimodal_response.core.spectral_basis import SpectralBasis


def test_mixed_chart_of_half_height_is_quadratic():
    r, L = solve_mixed_chart(0.5)
    assert r == pytest.approx(0.0, abs=1e-12)
    assert L == pytest.approx(1.0, abs=1e-12)
    assert mixed_profile(0.3, 0.0) == pytest.approx(0.045, abs=1e-15)


@pytest.mark.parametrize("left_polar,right_polar,family", [
    (False, False, AFFINE),
    (True, True, SINE_SQUARED),
    (True, False, MIXED),
    (False, True, MIXED),
])
def test_chart_families(left_polar, right_polar, family):
    chart = IntervalChart(0, 0.2, 0.9, left_polar, right_polar, y_left=1.0)
    assert chart.family == family
    assert chart.omega(chart.y_left) == pytest.approx(0.2, abs=1e-14)
    assert chart.omega(chart.y_right) == pytest.approx(0.9, abs=1e-14)
    y = np.linspace(chart.y_left, chart.y_right, 41)[1:-1]
    np.testing.assert_allclose(chart.varpi(chart.omega(y)), y, atol=1e-11)
    report = verify_chart_asymptotics(chart)
    for entry in report["sides"].values():
        assert entry["order"] >= entry["threshold"]


def test_sine_squared_length():
    chart = IntervalChart(0, 0.0, 2.0, True, True)
    assert chart.length == pytest.approx(np.pi)


def test_ulam_atlas(ulam_run):
    atlas = ulam_run.atlas
    assert [c.family for c in atlas.charts] == [MIXED, MIXED]
    np.testing.assert_allclose(atlas.lengths, [1.0, 1.0], atol=1e-12)
    y = np.array([0.25, 0.5, 0.75])
    np.testing.assert_allclose(atlas[0].omega(y), y ** 2 / 2, atol=1e-14)
    np.testing.assert_allclose(atlas[1].omega(1.0 + y), 1.0 - (1.0 - y) ** 2 / 2, atol=1e-14)


def test_ulam_asymptotics_reported(ulam_run):
    for report in ulam_run.asymptotics:
        polar = [entry for entry in report["sides"].values() if entry["polar"]]
        assert len(polar) == 1
        assert polar[0]["coefficient"] == pytest.approx(0.5, abs=1e-6)


def test_basis_degree_floor():
    with pytest.raises(ConfigError):
        SpectralBasis.build([1.0, 1.0], 7)


def test_basis_quadrature_and_derivative():
    basis = SpectralBasis.build([1.0, 1.0], 12)
    y = basis.nodes
    assert basis.mass @ y ** 3 == pytest.approx(4.0, rel=1e-13)
    np.testing.assert_allclose(basis.differentiation @ y ** 2, 2 * y, atol=1e-10)
    values, ends = basis.antiderivative(np.ones(basis.size))
    assert ends[-1][1] == pytest.approx(2.0, abs=1e-12)
    np.testing.assert_allclose(values, y, atol=1e-12)


def test_stadium_boundary_distance():
    points = stadium_boundary(0.0, 1.0, 0.1, 256)
    distance = np.abs(points - np.clip(points.real, 0.0, 1.0))
    np.testing.assert_allclose(distance, 0.1, atol=1e-12)


def test_branch_round_trip_and_derivative(ulam_run):
    branches = ulam_run.branches
    for (j, k), branch in branches.branches.items():
        y_left, y_right = branches.interval(k)
        y = np.linspace(y_left, y_right, 21)[1:-1]
        np.testing.assert_allclose(branches.conjugated_map(j, k, branch(y)), y, atol=1e-10)
        h = 1e-5
        difference = (branch(y + h) - branch(y - h)) / (2 * h)
        np.testing.assert_allclose(branch.derivative(y), difference, rtol=1e-6)


def test_branches_extend_to_complex_points(ulam_run):
    branches = ulam_run.branches
    branch = branches.branches[(0, 1)]
    y_left, y_right = branches.interval(1)
    z = 0.5 * (y_left + y_right) + 0.1 * np.exp(2j * np.pi * np.arange(8) / 8)
    values = branch(z)
    assert np.all(np.isfinite(values))
    assert np.any(np.abs(values.imag) > 0)


def test_assumption_a_margin(ulam_run):
    report = ulam_run.assumption
    assert report["margin"] > 0
    again = verify_assumption_A(ulam_run.branches, report["epsilon"], search=False, n_points=128)
    assert again["margin"] > 0


def test_ulam_charts_pass_endpoint_asymptotics(ulam_run):
    xi = np.geomspace(1e-4, 1e-2, 12)
    left, right = ulam_run.atlas.charts
    np.testing.assert_allclose(left.slope_fall(xi), 1.0 - xi, rtol=1e-14)
    np.testing.assert_allclose(right.slope_fall(xi), xi, rtol=1e-14)
    np.testing.assert_allclose(right.fall(xi), 0.5 * xi ** 2, rtol=1e-14)
    for chart in (left, right):
        report = verify_chart_asymptotics(chart)
        for entry in report["sides"].values():
            assert entry["order"] >= entry["threshold"]


def ulam_closed_forms():
    """ψ_00 and ψ_01 written without a branch cut near their corners."""
    def psi00(z):
        return z / np.sqrt(2.0 * (1.0 + np.sqrt(1.0 - z * z / 2.0)))

    def psi01(z):
        return np.sqrt(1.0 - (2.0 - z) / np.sqrt(2.0))

    return {(0, 0): (psi00, 0.0), (0, 1): (psi01, 2.0)}


@pytest.mark.parametrize("edge", [(0, 0), (0, 1)])
def test_branch_near_corner_matches_closed_form(ulam_run, edge):
    closed, corner = ulam_closed_forms()[edge]
    branch = ulam_run.branches.branches[edge]
    inward = 1.0 if corner == 0.0 else -1.0
    angles = np.linspace(-0.45 * np.pi, 0.45 * np.pi, 9)
    for radius in (1e-9, 1e-6, 1e-3, 0.05, 0.2):
        z = corner + inward * radius * np.exp(1j * angles)
        np.testing.assert_allclose(branch(z), closed(z), rtol=1e-10)
    real = corner + inward * np.geomspace(1e-10, 0.5, 20)
    np.testing.assert_allclose(branch(real), closed(real), rtol=1e-12)


def test_assumption_a_holds_at_default_radius(ulam_run):
    result = assumption_margin(ulam_run.branches, 0.15)
    assert result["margin"] > 0
    assert all(np.isfinite(v) for v in result["edges"].values())
    assert max(result["holomorphy_defects"].values()) <= 1e-8


def test_assumption_a_fails_for_huge_radius(ulam_run):
    with pytest.raises(AssumptionAUnverified):
        verify_assumption_A(ulam_run.branches, 5.0, search=False, n_points=64)


def test_branches_satisfy_cauchy_riemann(ulam_run):
    branches = ulam_run.branches
    for (j, k), branch in branches.branches.items():
        y_left, y_right = branches.interval(k)
        length = y_right - y_left
        z = 0.5 * (y_left + y_right) + 0.1 * length * np.exp(2j * np.pi * np.arange(16) / 16)
        h = 1e-5 * length
        along = (branch(z + h) - branch(z - h)) / (2 * h)
        across = (branch(z + 1j * h) - branch(z - 1j * h)) / (2j * h)
        exact = branch.derivative(z)
        scale = np.max(np.abs(exact))
        assert np.max(np.abs(along - across)) <= 1e-6 * scale
        assert np.max(np.abs(along - exact)) <= 1e-6 * scale


def test_branch_derivative_sign_matches_edge(ulam_run):
    branches = ulam_run.branches
    for edge, branch in branches.branches.items():
        y_left, y_right = branches.interval(edge[1])
        y = np.linspace(y_left, y_right, 102)[1:-1]
        assert np.all(np.sign(branch.derivative(y)) == branches.signs[edge])


def test_corner_taylor_model(ulam_run):
    branch = ulam_run.branches.branches[(0, 0)]
    z = np.array([1e-7, 5e-5, 8e-5 + 4e-5j])
    values, slopes = branch.taylor(z)
    np.testing.assert_allclose(values, branch(z), rtol=1e-8)
    np.testing.assert_allclose(slopes, branch.derivative(z), rtol=1e-8)
    assert slopes[0] == pytest.approx(0.5, rel=1e-10)


def test_taylor_model_refuses_interior_points(ulam_run):
    branch = ulam_run.branches.branches[(0, 0)]
    with pytest.raises(SingularEvaluation):
        branch.taylor(np.array([0.5]))
