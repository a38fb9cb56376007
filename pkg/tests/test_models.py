"""Built-in model registry and chart sanity."""

import numpy as np
import pytest

from convlab.errors import BadParams, UnknownModel
from convlab.models import chart_from_json, get_model, model_names


def test_model_registry_lists_all_builtins():
    names = model_names()
    for name in ("euclidean", "sphere", "hyperbolic_halfplane",
                 "flat_torus", "ellipsoid"):
        assert name in names


def test_unknown_model_raises():
    with pytest.raises(UnknownModel):
        get_model("sphereX")


def test_bad_params_raise():
    with pytest.raises(BadParams):
        get_model("ellipsoid", {"a": -1.0, "b": 1.0, "c": 1.0})
    with pytest.raises(BadParams):
        get_model("sphere", {"radius": 0.0})


def test_chart_from_json_builtin():
    chart = chart_from_json({"metric": "builtin:flat_torus"})
    assert chart.dimension == 2
    with pytest.raises(BadParams):
        chart_from_json({"metric": {"g11": "1"}})


def test_sample_points_stay_in_domain():
    rng = np.random.default_rng(0)
    for name in model_names():
        mdl = get_model(name)
        for q in mdl.sample_points(rng, 8):
            assert bool(mdl.chart.contains(q))


def test_metrics_are_positive_definite_at_samples():
    rng = np.random.default_rng(1)
    for name in model_names():
        mdl = get_model(name)
        for q in mdl.sample_points(rng, 4):
            eig = np.linalg.eigvalsh(mdl.chart.metric(q))
            assert eig.min() > 0


def test_flat_torus_wraps_coordinates():
    chart = get_model("flat_torus").chart
    wrapped = chart.wrap(np.array([1.25, -0.5]))
    np.testing.assert_allclose(wrapped, [0.25, 0.5], atol=1e-12)
