"""
Tests for the postcritical orbit, Markov partition, covering graph and polarity.
"""
from dataclasses import replace

import numpy as np
import pytest

from unimodal_response.core.errors import (ConfigError, DomainMismatch, NoSignChange,
                                           NotMarkov, NotMixing, OrbitNotFinite,
                                           UnstableClassification)
from unimodal_response.core.map_model import (MINUS, PLUS, AnalyticMap, band_merging_parameter,
                                              build_partition, classify_polarity,
                                              covering_graph, critical_points_of_iterate,
                                              graph_period, postcritical_orbit,
                                              renormalize_band)


@pytest.fixture
def ulam():
    return AnalyticMap.logistic(4.0)


def test_logistic_domain_is_critical_band(ulam):
    assert ulam.domain == (0.0, 1.0)
    assert ulam.critical_point == pytest.approx(0.5, abs=1e-14)


def test_logistic_parameter_range():
    with pytest.raises(ConfigError):
        AnalyticMap.logistic(1.5)


def test_non_unimodal_polynomial_rejected():
    with pytest.raises(NoSignChange):
        AnalyticMap([0.0, 1.0, 1.0], [0.0, 1.0])


def test_ulam_orbit(ulam):
    orbit = postcritical_orbit(ulam)
    assert orbit.points == pytest.approx((1.0, 0.0))
    assert (orbit.preperiod, orbit.period) == (1, 1)
    assert orbit.index_of_iterate(5) == 1


def test_chebyshev_orbit_and_partition():
    fmap = AnalyticMap.from_config({"family": "polynomial", "coeffs": [1.0, 0.0, -2.0],
                                    "domain": [-1.0, 1.0]})
    orbit = postcritical_orbit(fmap)
    partition = build_partition(orbit, fmap)
    assert partition.cuts == pytest.approx((-1.0, 0.0, 1.0))
    graph = covering_graph(partition, fmap)
    assert graph.mixing_exponent == 1


def test_non_postcritically_finite_parameter():
    with pytest.raises(OrbitNotFinite):
        postcritical_orbit(AnalyticMap.logistic(3.9), max_iter=500)


def test_domain_must_be_critical_band():
    with pytest.raises(DomainMismatch):
        AnalyticMap([1.0, 0.0, -2.0], [-0.5, 1.0])


def test_ulam_partition_and_polarity(ulam):
    orbit = postcritical_orbit(ulam)
    partition = classify_polarity(build_partition(orbit, ulam), ulam, orbit)
    assert partition.m == 2
    assert partition.critical_index == 1
    assert partition.is_polar(0, PLUS)
    assert partition.is_polar(2, MINUS)
    assert not partition.is_polar(1, MINUS)
    assert not partition.is_polar(1, PLUS)
    assert partition.mixed_joins == ()


def test_ulam_graph_is_complete(ulam):
    partition = build_partition(postcritical_orbit(ulam), ulam)
    graph = covering_graph(partition, ulam)
    assert graph.adjacency.tolist() == [[1, 1], [1, 1]]
    assert graph.signs == (1, -1)
    assert graph.covering(0) == [0, 1]


def test_band_merging_parameter_root():
    lam = band_merging_parameter()
    assert lam ** 3 - 2 * lam ** 2 - 4 * lam - 8 == pytest.approx(0.0, abs=1e-12)
    assert 3.67 < lam < 3.68


def test_band_merging_graph_is_periodic():
    fmap = AnalyticMap.from_config({"family": "logistic", "lambda": "band_merging"})
    orbit = postcritical_orbit(fmap)
    assert (orbit.preperiod, orbit.period) == (2, 1)
    partition = build_partition(orbit, fmap)
    assert partition.m == 3
    with pytest.raises(NotMixing) as info:
        covering_graph(partition, fmap)
    assert info.value.details["period"] == 2

    band_map, band, period = renormalize_band(fmap, partition)
    assert period == 2
    assert band[1] == pytest.approx(orbit.points[0])
    band_orbit = postcritical_orbit(band_map)
    band_partition = build_partition(band_orbit, band_map)
    assert covering_graph(band_partition, band_map).mixing_exponent >= 1


def test_graph_period_of_cycle():
    irreducible, period, classes = graph_period(np.array([[0, 1], [1, 0]]))
    assert irreducible and period == 2
    assert classes[0] != classes[1]


def test_critical_points_of_iterate_levels(ulam):
    points, level = critical_points_of_iterate(ulam, 3)
    assert len(points) == 7
    for x, n in zip(points, level):
        y = x
        for _ in range(int(n)):
            y = ulam(y)
        assert y == pytest.approx(0.5, abs=1e-10)


def test_postcritical_point_on_critical_point_is_not_markov(ulam):
    orbit = replace(postcritical_orbit(ulam), points=(1.0, 0.0, 0.5))
    with pytest.raises(NotMarkov):
        build_partition(orbit, ulam)


def test_image_off_cut_set_is_not_markov(ulam):
    orbit = replace(postcritical_orbit(ulam), points=(1.0, 0.0, 0.3))
    with pytest.raises(NotMarkov):
        build_partition(orbit, ulam)


def test_critical_value_off_orbit_is_unstable(ulam):
    orbit = postcritical_orbit(ulam)
    partition = build_partition(orbit, ulam)
    with pytest.raises(UnstableClassification):
        classify_polarity(partition, ulam, replace(orbit, points=(1.0, 0.3)), 2)
