"""Jacobi propagation, index forms and per-direction radii."""

import numpy as np
import pytest

from convlab.jacobi import (JacobiSweep, conjugate_radius, g_eval,
                            index_matrix, scc_breakdown_radius,
                            wronskian_defect)
from convlab.models import get_model


def _unit(g, v):
    return v / np.sqrt(v @ g @ v)


def test_g_eval_quadratic_homogeneity():
    mdl = get_model("ellipsoid", {"a": 1.0, "b": 1.0, "c": 1.3})
    p = np.array([1.0, 0.7])
    g = mdl.chart.metric(p)
    rng = np.random.default_rng(1)
    v = _unit(g, rng.standard_normal(2))
    w = rng.standard_normal(2)
    base = g_eval(mdl.chart, p, v, w, 0.9)
    for lam in (0.25, 2.0, -3.0):
        val = g_eval(mdl.chart, p, v, lam * w, 0.9)
        assert abs(val - lam**2 * base) <= 1e-9 * max(1.0, abs(base))


def test_sphere_conjugate_and_breakdown_radii():
    mdl = get_model("sphere")
    p = np.array([0.8, 2.0])
    g = mdl.chart.metric(p)
    v = _unit(g, np.array([0.3, -1.0]))
    assert abs(conjugate_radius(mdl.chart, p, v, 4.0) - np.pi) < 1e-6
    assert abs(scc_breakdown_radius(mdl.chart, p, v, 4.0) - np.pi / 2) < 1e-6


def test_flat_directions_have_no_conjugate_points():
    for name in ("euclidean", "flat_torus"):
        mdl = get_model(name)
        p = np.array([0.3, 0.4])
        v = _unit(mdl.chart.metric(p), np.array([1.0, 0.7]))
        assert conjugate_radius(mdl.chart, p, v, 10.0) == np.inf
        assert scc_breakdown_radius(mdl.chart, p, v, 10.0) == np.inf


def test_index_matrix_sign_flips_across_breakdown():
    mdl = get_model("sphere")
    p = np.array([1.2, 0.5])
    v = _unit(mdl.chart.metric(p), np.array([1.0, 0.0]))
    before = index_matrix(mdl.chart, p, v, 1.4)
    after = index_matrix(mdl.chart, p, v, 1.8)
    assert before.min_eig > 0
    assert after.min_eig < 0
    assert before.positive_definite and not after.positive_definite


def test_signed_volume_vanishes_at_conjugate_point():
    mdl = get_model("sphere")
    p = np.array([0.5, 1.0])
    v = _unit(mdl.chart.metric(p), np.array([0.0, 1.0]))
    sweep = JacobiSweep(mdl.chart, p, v, 3.3)
    assert abs(sweep.signed_volume(np.pi)) < 1e-7
    assert sweep.signed_volume(np.pi / 2) > 0


def test_wronskian_defect_small_on_curved_model():
    mdl = get_model("hyperbolic_halfplane")
    p = np.array([0.1, 0.9])
    g = mdl.chart.metric(p)
    v = _unit(g, np.array([1.0, 0.4]))
    d = wronskian_defect(mdl.chart, p, v, np.array([1.0, 0.0]),
                         np.array([0.3, -1.1]), np.linspace(0.2, 2.0, 6))
    assert d < 1e-9
