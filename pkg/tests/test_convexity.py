"""Ball convexity checks and radii bookkeeping on cheap models."""

import numpy as np
import pytest

from convlab.convexity import (RadiusValue, ball_convexity_check,
                               radii_estimate, scc_check,
                               uniquely_geodesic_check)
from convlab.errors import RadiusBeyondInjectivity


def _torus():
    from convlab.models import get_model
    return get_model("flat_torus")


def test_radius_value_serialization():
    rv = RadiusValue(1.25, 0.01, False, 4.0)
    assert rv.as_dict() == {"value": 1.25, "half_width": 0.01}
    assert rv.lower == 1.24 and rv.upper == 1.26
    beyond = RadiusValue(4.0, 0.0, True, 4.0)
    assert beyond.as_dict() == {"exceeds_bound": 4.0}
    assert beyond.upper == np.inf


def test_torus_radii_and_lattice():
    mdl = _torus()
    est = radii_estimate(mdl.chart, np.array([0.1, 0.45]), bound=2.0)
    assert abs(est.i_g.value - 0.5) < 0.01
    assert abs(est.c_g.value - 0.25) < 0.01
    assert all(ok for *_, ok in est.lattice_relations())
    assert not est.partial


def test_torus_ball_verdicts():
    mdl = _torus()
    p = np.array([0.3, 0.3])
    est = radii_estimate(mdl.chart, p, bound=2.0)
    pm = est._internals[1]
    inside = ball_convexity_check(mdl.chart, p, 0.2, pm=pm)
    assert inside.verdict == "strongly_convex"
    outside = ball_convexity_check(mdl.chart, p, 0.3, pm=pm)
    assert outside.verdict == "not_convex"
    assert outside.witness is not None


def test_uniquely_geodesic_check_holds_in_small_ball():
    mdl = _torus()
    res = uniquely_geodesic_check(mdl.chart, np.array([0.6, 0.2]), 0.2)
    assert res.holds


def test_scc_check_requires_radius_below_injectivity():
    mdl = _torus()
    p = np.array([0.5, 0.5])
    assert scc_check(mdl.chart, p, 0.3, n_dirs=32, i_est=0.5).status == "holds"
    with pytest.raises(RadiusBeyondInjectivity):
        scc_check(mdl.chart, p, 0.7, n_dirs=32, i_est=0.5)
