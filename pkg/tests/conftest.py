"""Shared fixtures: built-in models and cached radii estimates.

The radii estimators dominate suite runtime, so every estimate a test
needs is computed once per session (in a small thread pool) and shared
across the acceptance criteria.
"""

import numpy as np
import pytest
from concurrent.futures import ThreadPoolExecutor

from convlab.convexity import radii_estimate
from convlab.models import get_model

ELLIPSOID_PARAMS = {"a": 1.0, "b": 1.0, "c": 1.3}

# search bounds sized to each model's known radii scale
BOUNDS = {"sphere": 4.0, "flat_torus": 2.0, "ellipsoid": 4.0,
          "euclidean": 10.0, "hyperbolic_halfplane": 10.0}


@pytest.fixture(scope="session")
def models():
    out = {}
    for name in ("euclidean", "sphere", "hyperbolic_halfplane",
                 "flat_torus", "ellipsoid"):
        params = ELLIPSOID_PARAMS if name == "ellipsoid" else None
        out[name] = get_model(name, params)
    return out


def _batch_estimates(model, points, bound):
    with ThreadPoolExecutor(max_workers=4) as pool:
        futs = [pool.submit(radii_estimate, model.chart, q, bound)
                for q in points]
        return [f.result() for f in futs]


@pytest.fixture(scope="session")
def sphere_points(models):
    rng = np.random.default_rng(7)
    return models["sphere"].sample_points(rng, 10)


@pytest.fixture(scope="session")
def sphere_estimates(models, sphere_points):
    return _batch_estimates(models["sphere"], sphere_points,
                            BOUNDS["sphere"])


@pytest.fixture(scope="session")
def torus_points(models):
    rng = np.random.default_rng(11)
    return models["flat_torus"].sample_points(rng, 10)


@pytest.fixture(scope="session")
def torus_estimates(models, torus_points):
    return _batch_estimates(models["flat_torus"], torus_points,
                            BOUNDS["flat_torus"])


@pytest.fixture(scope="session")
def ellipsoid_points(models):
    rng = np.random.default_rng(13)
    return models["ellipsoid"].sample_points(rng, 20)


@pytest.fixture(scope="session")
def ellipsoid_estimates(models, ellipsoid_points):
    return _batch_estimates(models["ellipsoid"], ellipsoid_points,
                            BOUNDS["ellipsoid"])
