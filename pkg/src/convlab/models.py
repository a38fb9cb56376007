"""Registry of built-in manifolds with analytic metric data.

Chart conventions:

* ``euclidean``: identity metric on R^n.
* ``sphere``: radius-R round sphere, polar chart (theta, phi) with
  g = diag(R^2, R^2 sin^2 theta).  A second polar chart, rotated so its
  poles sit on the first chart's equator, is linked as ``partner`` and
  the integrators hop between the two away from either singular set.
* ``hyperbolic_halfplane``: upper half-space y > 0 with g = y^-2 I
  (curvature -1); the chart is global.
* ``flat_torus``: single periodic chart with identity metric; matching
  of endpoints uses the chordal circle embedding of each coordinate.
* ``ellipsoid``: surface (x/a)^2 + (y/b)^2 + (z/c)^2 = 1, parameterized
  through the polar angles of its unit-sphere preimage, with the same
  two-chart structure as the sphere.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .charts import ManifoldChart
from .errors import BadParams, UnknownModel

INF = float("inf")


@dataclass
class ModelRecord:
    chart: ManifoldChart
    ground_truth: Optional[dict]
    provenance: str
    name: str = ""
    params: dict = field(default_factory=dict)

    def sample_points(self, rng, k):
        """k seeded in-domain points, kept clear of chart singularities."""
        return _POINT_SAMPLERS[self.name](self.params, rng, k)


# ---------------------------------------------------------------------------
# euclidean


def _euclidean(params):
    n = int(params.get("n", 2))
    if n < 2:
        raise BadParams("euclidean requires n >= 2")

    def metric(x):
        shape = x.shape[:-1]
        return np.broadcast_to(np.eye(n), shape + (n, n)).copy()

    def christoffel(x):
        return np.zeros(x.shape[:-1] + (n, n, n))

    def curvature(x, u, w):
        return np.zeros(np.broadcast_shapes(x.shape, u.shape, w.shape))

    chart = ManifoldChart(
        dimension=n,
        domain=[(-INF, INF)] * n,
        periodicity=[None] * n,
        metric_fn=metric,
        christoffel_fn=christoffel,
        curvature_fn=curvature,
        label=f"euclidean{n}",
    )
    gt = {"i_g": INF, "lc_g": INF, "slc_g": INF, "c_g": INF, "sc_g": INF,
          "sectional_curvature": 0.0}
    return ModelRecord(chart, gt, "flat space: all radii infinite", "euclidean",
                       {"n": n})


# ---------------------------------------------------------------------------
# flat torus


def _flat_torus(params):
    periods = params.get("periods", (1.0, 1.0))
    periods = tuple(float(p) for p in periods)
    if len(periods) < 2 or any(p <= 0 for p in periods):
        raise BadParams("flat_torus requires >= 2 positive periods")
    n = len(periods)
    parr = np.array(periods)

    def metric(x):
        shape = x.shape[:-1]
        return np.broadcast_to(np.eye(n), shape + (n, n)).copy()

    def christoffel(x):
        return np.zeros(x.shape[:-1] + (n, n, n))

    def curvature(x, u, w):
        return np.zeros(np.broadcast_shapes(x.shape, u.shape, w.shape))

    def embed(x):
        ang = 2.0 * np.pi * x / parr
        r = parr / (2.0 * np.pi)
        pieces = np.stack([r * np.cos(ang), r * np.sin(ang)], axis=-1)
        return pieces.reshape(x.shape[:-1] + (2 * n,))

    chart = ManifoldChart(
        dimension=n,
        domain=[(0.0, p) for p in periods],
        periodicity=list(periods),
        metric_fn=metric,
        christoffel_fn=christoffel,
        curvature_fn=curvature,
        embed_fn=embed,
        label=f"flat_torus{periods}",
    )
    pmin = min(periods)
    gt = {"i_g": pmin / 2, "lc_g": pmin / 2, "slc_g": pmin / 2,
          "c_g": pmin / 4, "sc_g": pmin / 4, "sectional_curvature": 0.0}
    return ModelRecord(chart, gt,
                       "lattice analysis: injectivity = half shortest period, "
                       "convexity = quarter", "flat_torus", {"periods": periods})


# ---------------------------------------------------------------------------
# hyperbolic half-space


def _hyperbolic(params):
    n = int(params.get("n", 2))
    if n < 2:
        raise BadParams("hyperbolic_halfplane requires n >= 2")

    def metric(x):
        y = x[..., -1]
        shape = x.shape[:-1]
        g = np.zeros(shape + (n, n))
        idx = np.arange(n)
        g[..., idx, idx] = (1.0 / y**2)[..., None]
        return g

    def christoffel(x):
        y = x[..., -1]
        shape = x.shape[:-1]
        gam = np.zeros(shape + (n, n, n))
        inv_y = 1.0 / y
        last = n - 1
        for k in range(n):
            # conformal factor f = -log y:  Gamma^k_ij = d_ik f_j + d_jk f_i - d_ij f_k
            for i in range(n):
                for j in range(n):
                    val = 0.0
                    if i == k and j == last:
                        val += -1.0
                    if j == k and i == last:
                        val += -1.0
                    if i == j and k == last:
                        val += 1.0
                    if val:
                        gam[..., k, i, j] = val * inv_y
        return gam

    def curvature(x, u, w):
        g = metric(x)
        uu = np.einsum("...ij,...i,...j->...", g, u, u)
        wu = np.einsum("...ij,...i,...j->...", g, w, u)
        return -(uu[..., None] * w - wu[..., None] * u)

    chart = ManifoldChart(
        dimension=n,
        domain=[(-INF, INF)] * (n - 1) + [(0.0, INF)],
        periodicity=[None] * n,
        metric_fn=metric,
        christoffel_fn=christoffel,
        curvature_fn=curvature,
        label=f"hyperbolic{n}",
    )
    gt = {"i_g": INF, "lc_g": INF, "slc_g": INF, "c_g": INF, "sc_g": INF,
          "sectional_curvature": -1.0}
    return ModelRecord(chart, gt, "simply connected, nonpositive curvature: "
                       "all radii infinite", "hyperbolic_halfplane", {"n": n})


# ---------------------------------------------------------------------------
# embedded surfaces (sphere, ellipsoid)

_ROT_B = np.array([[0.0, 0.0, 1.0],
                   [0.0, 1.0, 0.0],
                   [-1.0, 0.0, 0.0]])  # maps e_z to e_x

POLE_MARGIN = 0.2


def _sph(x):
    th, ph = x[..., 0], x[..., 1]
    st, ct = np.sin(th), np.cos(th)
    sp, cp = np.sin(ph), np.cos(ph)
    shape = th.shape + (3,)
    u = np.empty(shape)
    u[..., 0] = st * cp
    u[..., 1] = st * sp
    u[..., 2] = ct
    du_th = np.empty(shape)
    du_th[..., 0] = ct * cp
    du_th[..., 1] = ct * sp
    du_th[..., 2] = -st
    du_ph = np.zeros(shape)
    du_ph[..., 0] = -st * sp
    du_ph[..., 1] = st * cp
    d2_thth = -u
    d2_thph = np.zeros(shape)
    d2_thph[..., 0] = -ct * sp
    d2_thph[..., 1] = ct * cp
    d2_phph = np.zeros(shape)
    d2_phph[..., 0] = -st * cp
    d2_phph[..., 1] = -st * sp
    return u, (du_th, du_ph), (d2_thth, d2_thph, d2_phph)


def _surface_chart(scale, rot, gauss_k, label):
    """Chart for the surface scale @ rot @ sph(theta, phi)."""
    mat = np.diag(scale) @ rot

    def embed(x):
        u, _, _ = _sph(x)
        return u @ mat.T

    def jacobian(x):
        _, (dth, dph), _ = _sph(x)
        j = np.empty(dth.shape[:-1] + (3, 2))
        j[..., 0] = dth @ mat.T
        j[..., 1] = dph @ mat.T
        return j

    def metric(x):
        j = jacobian(x)
        return np.einsum("...mi,...mj->...ij", j, j)

    def christoffel(x):
        x = np.asarray(x, dtype=float)
        _, (dth, dph), (d2tt, d2tp, d2pp) = _sph(x)
        j = np.empty(dth.shape[:-1] + (3, 2))
        j[..., 0] = dth @ mat.T
        j[..., 1] = dph @ mat.T
        g = np.einsum("...mi,...mj->...ij", j, j)
        ginv = np.linalg.inv(g)
        sec = np.empty(dth.shape[:-1] + (2, 2, 3))
        sec[..., 0, 0, :] = d2tt @ mat.T
        sec[..., 0, 1, :] = d2tp @ mat.T
        sec[..., 1, 0, :] = sec[..., 0, 1, :]
        sec[..., 1, 1, :] = d2pp @ mat.T
        low = np.einsum("...ijm,...ml->...lij", sec, j)
        return np.einsum("...kl,...lij->...kij", ginv, low)

    def gauss(x):
        return gauss_k(embed(x))

    def curvature(x, u, w):
        g = metric(x)
        uu = np.einsum("...ij,...i,...j->...", g, u, u)
        wu = np.einsum("...ij,...i,...j->...", g, w, u)
        return gauss(x)[..., None] * (uu[..., None] * w - wu[..., None] * u)

    def margin(x):
        th = x[..., 0]
        return np.minimum(th, np.pi - th)

    chart = ManifoldChart(
        dimension=2,
        domain=[(0.0, np.pi), (-INF, INF)],
        periodicity=[None, 2.0 * np.pi],
        metric_fn=metric,
        christoffel_fn=christoffel,
        curvature_fn=curvature,
        embed_fn=embed,
        margin_fn=margin,
        label=label,
    )
    chart.gauss_fn = gauss
    return chart


def _link_surface_pair(scale, gauss_k, label):
    a = _surface_chart(scale, np.eye(3), gauss_k, label)
    b = _surface_chart(scale, _ROT_B, gauss_k, label + "#alt")

    def make_transition(rot_from, rot_to):
        q = rot_to.T @ rot_from

        def to_other(x):
            u, _, _ = _sph(x)
            v = u @ q.T
            th = np.arccos(np.clip(v[..., 2], -1.0, 1.0))
            ph = np.arctan2(v[..., 1], v[..., 0])
            return np.stack([th, ph], axis=-1)

        return to_other

    a.partner, a.to_partner = b, make_transition(np.eye(3), _ROT_B)
    b.partner, b.to_partner = a, make_transition(_ROT_B, np.eye(3))
    return a


def _sphere(params):
    r = float(params.get("R", params.get("radius", 1.0)))
    n = int(params.get("n", 2))
    if r <= 0:
        raise BadParams("sphere requires R > 0")
    if n != 2:
        raise BadParams("sphere is implemented for n = 2 only")

    def gauss_k(p):
        return np.full(p.shape[:-1], 1.0 / r**2)

    chart = _link_surface_pair(np.array([r, r, r]), gauss_k, f"sphere(R={r})")
    gt = {"i_g": np.pi * r, "lc_g": np.pi * r / 2, "slc_g": np.pi * r / 2,
          "c_g": np.pi * r / 2, "sc_g": np.pi * r / 2,
          "sectional_curvature": 1.0 / r**2}
    return ModelRecord(chart, gt, "constant curvature 1/R^2: injectivity pi R, "
                       "all convexity radii pi R / 2", "sphere",
                       {"R": r, "n": n})


def _ellipsoid(params):
    axes = params.get("semi_axes", params.get("axes"))
    if axes is None:
        axes = (params.get("a", 1.0), params.get("b", 1.0), params.get("c", 1.0))
    a, b, c = (float(v) for v in axes)
    if min(a, b, c) <= 0:
        raise BadParams("ellipsoid requires positive semi-axes")

    def gauss_k(p):
        s = (p[..., 0] / a**2) ** 2 + (p[..., 1] / b**2) ** 2 + (p[..., 2] / c**2) ** 2
        return 1.0 / ((a * b * c) ** 2 * s**2)

    chart = _link_surface_pair(np.array([a, b, c]), gauss_k,
                               f"ellipsoid({a},{b},{c})")
    return ModelRecord(chart, None, "variable curvature; no closed-form radii",
                       "ellipsoid", {"a": a, "b": b, "c": c})


# ---------------------------------------------------------------------------
# registry

_BUILDERS = {
    "euclidean": _euclidean,
    "sphere": _sphere,
    "hyperbolic_halfplane": _hyperbolic,
    "flat_torus": _flat_torus,
    "ellipsoid": _ellipsoid,
}


def model_names():
    return sorted(_BUILDERS)


def get_model(name, params=None, **kw) -> ModelRecord:
    if name not in _BUILDERS:
        raise UnknownModel(f"unknown model {name!r}; available: {model_names()}")
    merged = dict(params or {})
    merged.update(kw)
    return _BUILDERS[name](merged)


def chart_from_json(spec: dict) -> ManifoldChart:
    """Build a chart from the JSON model-file schema.

    Only ``"metric": "builtin:<name>"`` is supported; expression metrics
    are rejected.
    """
    metric = spec.get("metric")
    if isinstance(metric, dict):
        raise BadParams("expression-based metrics are not supported")
    if not (isinstance(metric, str) and metric.startswith("builtin:")):
        raise BadParams("metric must be 'builtin:<name>'")
    record = get_model(metric.split(":", 1)[1], spec.get("params"))
    n = spec.get("dimension")
    if n is not None and int(n) != record.chart.dimension:
        raise BadParams(
            f"dimension {n} does not match builtin chart "
            f"({record.chart.dimension})"
        )
    return record.chart


# ---------------------------------------------------------------------------
# seeded point samplers (kept clear of singular sets)


def _sample_box(rng, k, lows, highs):
    lows = np.asarray(lows, float)
    highs = np.asarray(highs, float)
    return lows + (highs - lows) * rng.random((k, len(lows)))

_POINT_SAMPLERS = {
    "euclidean": lambda p, rng, k: _sample_box(rng, k, [-2.0] * p["n"], [2.0] * p["n"]),
    "flat_torus": lambda p, rng, k: _sample_box(rng, k, [0.0] * len(p["periods"]),
                                                list(p["periods"])),
    "hyperbolic_halfplane": lambda p, rng, k: _sample_box(
        rng, k, [-2.0] * (p["n"] - 1) + [0.5], [2.0] * (p["n"] - 1) + [3.0]),
    "sphere": lambda p, rng, k: _sample_box(rng, k, [0.7, 0.0],
                                            [np.pi - 0.7, 2.0 * np.pi]),
    "ellipsoid": lambda p, rng, k: _sample_box(rng, k, [0.7, 0.0],
                                               [np.pi - 0.7, 2.0 * np.pi]),
}
