"""Geodesic integration and two-point segment search."""

import numpy as np
import pytest

from convlab.errors import OutOfDomain
from convlab.geodesics import exp_map, minimizing_segments, shoot
from convlab.models import get_model


def test_exp_map_euclidean_is_translation():
    mdl = get_model("euclidean")
    p = np.array([0.4, -0.7])
    v = np.array([1.3, 0.2])
    _, q = exp_map(mdl.chart, p, v)
    np.testing.assert_allclose(q, p + v, atol=1e-10)


def test_shoot_preserves_speed():
    mdl = get_model("ellipsoid", {"a": 1.0, "b": 1.0, "c": 1.3})
    path = shoot(mdl.chart, np.array([1.1, 0.8]), np.array([0.6, -0.3]), 3.0)
    assert path.speed_drift() < 1e-7


def test_sphere_distance_matches_great_circle():
    mdl = get_model("sphere")
    rng = np.random.default_rng(3)
    p, q = mdl.sample_points(rng, 2)
    ss = minimizing_segments(mdl.chart, p, q, use_oracle=False, n_starts=24,
                             length_hint=3.3)
    e1, e2 = mdl.chart.embed(p), mdl.chart.embed(q)
    ref = np.arccos(np.clip(np.dot(e1, e2), -1.0, 1.0))
    assert abs(ss.distance - ref) < 1e-6
    assert ss.unique


def test_torus_diametral_pair_has_two_segments():
    mdl = get_model("flat_torus")
    p = np.array([0.2, 0.6])
    q = np.array([0.7, 0.6])   # opposite point along one axis
    ss = minimizing_segments(mdl.chart, p, q, use_oracle=False, n_starts=24,
                             length_hint=0.8)
    assert abs(ss.distance - 0.5) < 1e-6
    assert ss.n_segments == 2
    assert not ss.unique


def test_shoot_rejects_points_outside_domain():
    mdl = get_model("hyperbolic_halfplane")
    with pytest.raises(OutOfDomain):
        shoot(mdl.chart, np.array([0.0, -1.0]), np.array([1.0, 0.0]), 1.0)
