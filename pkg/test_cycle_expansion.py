"""
Tests for periodic orbits, flat traces and the dynamical determinant.
"""
import numpy as np
import pytest
from mpmath import mp, mpf

from unimodal_response.core.cycle_expansion import (closed_paths, cycle_expansion,
                                                    determinant_coefficients,
                                                    determinant_eigenvalues, path_count,
                                                    periodic_points)
from unimodal_response.core.errors import ConfigError


def test_closed_paths_match_adjacency_trace():
    adjacency = np.array([[1, 1, 0], [0, 0, 1], [1, 1, 1]])
    for n in range(1, 6):
        paths = closed_paths(adjacency, n)
        assert len(paths) == path_count(adjacency, n)
        assert len(set(paths)) == len(paths)
        for path in paths:
            assert all(adjacency[a, b] for a, b in zip(path, path[1:] + path[:1]))


def test_determinant_of_geometric_traces():
    with mp.workdps(40):
        mu = mpf(1) / 3
        coefficients = determinant_coefficients([mu ** n for n in range(1, 6)])
        assert float(coefficients[1]) == pytest.approx(-1.0 / 3.0, abs=1e-15)
        assert max(abs(c) for c in coefficients[2:]) < mpf(10) ** -35
        values = determinant_eigenvalues([(mpf(1) / 2) ** n + (mpf(1) / 5) ** n for n in (1, 2)])
    np.testing.assert_allclose([complex(v).real for v in values], [0.5, 0.2], atol=1e-25)


def test_ulam_fixed_points(ulam_run):
    stage = ulam_run.map_stage
    points = sorted(periodic_points(stage.fmap, stage.partition, stage.graph, 1, 40),
                    key=lambda p: float(p.x))
    assert [float(p.x) for p in points] == pytest.approx([0.0, 0.75], abs=1e-30)
    origin, interior = points
    assert origin.polar and interior.side is None
    assert float(origin.chart_multiplier) == pytest.approx(0.5, abs=1e-30)
    assert float(interior.derivative) == pytest.approx(-2.0, abs=1e-30)
    assert float(origin.trace_term + interior.trace_term) == pytest.approx(4.0 / 3.0, abs=1e-30)


def test_ulam_periodic_points_per_period(ulam_run):
    cycles = ulam_run.cycles
    for n, points in cycles.points.items():
        assert len(points) == 2 ** n
        away = [p for p in points if not p.polar]
        np.testing.assert_allclose([abs(float(p.derivative)) for p in away], 2.0 ** n, rtol=1e-13)


def test_ulam_flat_traces_from_orbits(ulam_run):
    cycles = ulam_run.cycles
    n = np.arange(1, cycles.order + 1)
    traces = np.array([cycles.flat_trace(k) for k in n])
    np.testing.assert_allclose(traces, 4.0 ** n / (4.0 ** n - 1.0), rtol=1e-14)


def test_ulam_determinant_eigenvalues(ulam_run):
    cycles = ulam_run.cycles
    leading = cycles.leading(4)
    np.testing.assert_allclose(leading.real, 4.0 ** -np.arange(4), atol=1e-10)
    np.testing.assert_allclose(leading.imag, 0.0, atol=1e-10)
    assert max(cycles.truncation_deltas) < 1e-8
    assert abs(cycles.leading_eigenvalue - 1.0) < 1e-9


def test_spectrum_report_uses_determinant(ulam_run):
    report = ulam_run.spectrum
    assert report["method"] == "cycle_expansion"
    assert len(report["degree_deltas"]) == ulam_run.config.collocation_checked
    assert max(report["degree_deltas"]) < ulam_run.config.eigen_tol
    np.testing.assert_allclose(np.real(report["collocation_eigenvalues"]), [1.0, 0.25], atol=1e-8)
    assert report["spectral_gap"] == pytest.approx(0.75, abs=1e-8)


def test_lower_order_agrees(ulam_run):
    stage = ulam_run.map_stage
    coarse = cycle_expansion(stage.fmap, stage.partition, stage.graph, order=8, dps=50)
    np.testing.assert_allclose(coarse.leading(3).real, [1.0, 0.25, 0.0625], atol=1e-9)


def test_order_too_small(ulam_run):
    stage = ulam_run.map_stage
    with pytest.raises(ConfigError):
        cycle_expansion(stage.fmap, stage.partition, stage.graph, order=2)


def test_band_merging_determinant_converges(band_merging_run):
    report = band_merging_run.spectrum
    assert report["method"] == "cycle_expansion"
    assert abs(report["determinant_leading"] - 1.0) < 1e-9
    assert max(report["truncation_deltas"][:2]) < 1e-8
    assert abs(report["collocation_offsets"][1]) < 1e-7
