"""Acceptance suite: closed-form oracle equivalence on constant-curvature
models plus property checks on the variable-curvature ellipsoid.

Each criterion prints one pass/fail line so the suite output doubles as
a report.
"""

import numpy as np
import pytest

from convlab.convexity import (ball_convexity_check, make_ball_pairs,
                               scc_check, uniquely_geodesic_check)
from convlab.geodesics import minimizing_segments, shoot
from convlab.jacobi import (conjugate_radius, g_eval, scc_breakdown_radius,
                            wronskian_defect)
from convlab.reports import AnalysisConfig, canonical_json, run_analyze
from convlab.theorems import berger_check, classify_cut_point, condition_check

from conftest import BOUNDS

PI = np.pi
EPS_E = 1e-7


def _line(num, label, ok):
    print(f"[{'pass' if ok else 'FAIL'}] criterion {num}: {label}")
    assert ok, f"criterion {num}: {label}"


def _unit(g, v):
    return v / np.sqrt(v @ g @ v)


def _perp_unit(g, v, rng):
    u = rng.standard_normal(v.shape)
    u = u - (u @ g @ v) / (v @ g @ v) * v
    return u / np.sqrt(u @ g @ u)


def _rv(rv):
    return None if rv.exceeds_bound else rv.value


# ---------------------------------------------------------------------------
# 1. sphere radii against constant-curvature closed forms


def test_criterion_1_sphere_radii(sphere_estimates):
    ok = True
    for est in sphere_estimates[:5]:
        ok &= abs(est.i_g.value - PI) <= 0.02
        for rv in (est.lc_g, est.slc_g, est.c_g, est.sc_g):
            ok &= not rv.exceeds_bound and abs(rv.value - PI / 2) <= 0.02
    _line(1, "sphere radii i=pi, lc=slc=c=sc=pi/2 at 5 seeded points", ok)


# ---------------------------------------------------------------------------
# 2. index-form closed forms G(t,v,w) = f(t) |w|^2


def test_criterion_2_index_form_closed_forms(models):
    rng = np.random.default_rng(202)
    cases = [("sphere", lambda t: np.sin(t) * np.cos(t), 17),
             ("hyperbolic_halfplane", lambda t: np.sinh(t) * np.cosh(t), 17),
             ("euclidean", lambda t: t, 16)]
    worst = 0.0
    for name, f, k in cases:
        mdl = models[name]
        pts = mdl.sample_points(rng, k)
        for q in pts:
            g = mdl.chart.metric(q)
            v = _unit(g, rng.standard_normal(2))
            lam = rng.uniform(0.3, 2.0)
            w = lam * _perp_unit(g, v, rng)
            t = rng.uniform(0.1, 3.0)
            worst = max(worst, abs(g_eval(mdl.chart, q, v, w, t)
                                   - f(t) * lam**2))
    _line(2, f"G(t,v,w) closed forms, worst |err|={worst:.2e} <= 1e-5",
          worst <= 1e-5)


# ---------------------------------------------------------------------------
# 3. breakdown vs conjugate radii ordering


def test_criterion_3_breakdown_vs_conjugate(models):
    rng = np.random.default_rng(33)
    ch = models["sphere"].chart
    p = models["sphere"].sample_points(rng, 1)[0]
    g = ch.metric(p)
    ok = True
    for k in range(32):
        th = 2 * PI * k / 32
        v = _unit(g, np.array([np.cos(th), np.sin(th)]))
        ok &= abs(scc_breakdown_radius(ch, p, v, 4.0) - PI / 2) <= 1e-4
        ok &= abs(conjugate_radius(ch, p, v, 4.0) - PI) <= 1e-4
    for name in ("euclidean", "hyperbolic_halfplane", "flat_torus"):
        mdl = models[name]
        q = mdl.sample_points(rng, 1)[0]
        gq = mdl.chart.metric(q)
        for _ in range(8):
            v = _unit(gq, rng.standard_normal(2))
            ok &= not np.isfinite(conjugate_radius(mdl.chart, q, v, 10.0))
            ok &= not np.isfinite(scc_breakdown_radius(mdl.chart, q, v, 10.0))
    _line(3, "sphere breakdown=pi/2, conjugate=pi (32 dirs); "
             "flat models exceed bound 10", ok)


# ---------------------------------------------------------------------------
# 4. flat torus radii, Berger equality and condition B failure witness


def test_criterion_4_flat_torus(models, torus_points, torus_estimates):
    ch = models["flat_torus"].chart
    ok = True
    for est in torus_estimates:
        ok &= abs(est.i_g.value - 0.5) <= 0.01
        ok &= abs(est.lc_g.value - 0.5) <= 0.01
        ok &= abs(est.slc_g.value - 0.5) <= 0.01
        ok &= abs(est.c_g.value - 0.25) <= 0.01
        ok &= abs(est.sc_g.value - 0.25) <= 0.01
        ok &= abs(est.c_g.value - est.i_g.value / 2) <= 0.02
    p = torus_points[0]
    ug = uniquely_geodesic_check(ch, p, 0.25, tie_tol=1e-4)
    ok &= (not ug.holds) and ug.n_segments == 2
    if ug.pair is not None:
        for x in ug.pair:
            d = minimizing_segments(ch, p, x, use_oracle=False,
                                    length_hint=0.8).distance
            ok &= d <= 0.25 + 1e-6
    else:
        ok = False
    rep = condition_check(ch, p, "B", bound=BOUNDS["flat_torus"],
                          est=torus_estimates[0])
    ok &= rep.status == "fails"
    _line(4, "flat torus radii, |c - i/2| <= 0.02, condition B fails via a "
             "2-segment pair in the ball of radius 0.25", ok)


# ---------------------------------------------------------------------------
# 5. sphere distinguishing ball at pi/2


def test_criterion_5_sphere_distinguishing_ball(models, sphere_points,
                                                sphere_estimates):
    ch = models["sphere"].chart
    p = sphere_points[0]
    pm = sphere_estimates[0]._internals[1]
    big = ball_convexity_check(ch, p, PI / 2, pm=pm)
    small = ball_convexity_check(ch, p, 1.0, pm=pm)
    ok = big.verdict == "properly_convex_only"
    ok &= big.witness is not None and (big.witness.n_segments or 0) >= 2
    ok &= small.verdict == "strongly_convex"
    rep = condition_check(ch, p, "B", bound=BOUNDS["sphere"],
                          est=sphere_estimates[0])
    ok &= rep.status == "fails"
    _line(5, "sphere ball(pi/2) properly convex only with a multi-segment "
             "closure pair; ball(1.0) strongly convex; condition B fails", ok)


# ---------------------------------------------------------------------------
# 6. Berger inequality c_M <= i_M/2 at manifold level


def test_criterion_6_berger(models, sphere_points, sphere_estimates,
                            torus_points, torus_estimates,
                            ellipsoid_points, ellipsoid_estimates):
    ok = True
    for name, pts, ests in [
            ("sphere", sphere_points, sphere_estimates),
            ("flat_torus", torus_points, torus_estimates),
            ("ellipsoid", ellipsoid_points[:10], ellipsoid_estimates[:10])]:
        res = berger_check(models[name].chart, pts, bound=BOUNDS[name],
                           estimates=ests)
        ok &= res.satisfied
        ok &= res.c_M.value <= res.i_M.value / 2 + 0.02
        if name in ("sphere", "flat_torus"):
            ok &= abs(res.c_M.value - res.i_M.value / 2) <= 0.02
    _line(6, "Berger c_M <= i_M/2 + 0.02 on sphere/torus/ellipsoid, "
             "equality on sphere and torus", ok)


# ---------------------------------------------------------------------------
# 7. radius lattice on the ellipsoid


def test_criterion_7_radius_lattice(ellipsoid_estimates):
    ok = True
    for est in ellipsoid_estimates:
        for _, _, _, _, rel_ok in est.lattice_relations():
            ok &= rel_ok
    _line(7, "radius lattice inequalities at 20 seeded ellipsoid points", ok)


# ---------------------------------------------------------------------------
# 8. Wronskian symmetry of Jacobi fields


def test_criterion_8_wronskian(models):
    rng = np.random.default_rng(88)
    worst = 0.0
    for name, mdl in models.items():
        for q in mdl.sample_points(rng, 4):
            g = mdl.chart.metric(q)
            for _ in range(5):
                v = _unit(g, rng.standard_normal(2))
                w1 = rng.standard_normal(2)
                w2 = rng.standard_normal(2)
                ts = np.linspace(0.1, 2.5, 8)
                worst = max(worst, wronskian_defect(mdl.chart, q, v,
                                                    w1, w2, ts))
    _line(8, f"Wronskian defect over 100 seeded cases, "
             f"worst={worst:.2e} <= 1e-8", worst <= 1e-8)


# ---------------------------------------------------------------------------
# 9. cut point classification


def test_criterion_9_cut_classification(models, sphere_points, torus_points):
    rng = np.random.default_rng(99)
    ok = True
    ch = models["sphere"].chart
    p = sphere_points[1]
    v = _unit(ch.metric(p), rng.standard_normal(2))
    rec = classify_cut_point(ch, p, v, bound=4.0)
    ok &= rec.classification == "ordinary" and rec.n_segments >= 2
    ok &= abs(rec.jacobi_det) <= EPS_E

    cht = models["flat_torus"].chart
    q = torus_points[0]
    axis = classify_cut_point(cht, q, np.array([1.0, 0.0]), bound=2.0)
    ok &= axis.classification == "ordinary" and axis.n_segments == 2
    ok &= abs(axis.t_cut - 0.5) <= 0.01 and abs(axis.jacobi_det) >= 0.1
    diag = classify_cut_point(cht, q, np.array([1.0, 1.0]), bound=2.0)
    ok &= diag.n_segments >= 2

    for name in ("euclidean", "hyperbolic_halfplane"):
        mdl = models[name]
        x = mdl.sample_points(rng, 1)[0]
        v = _unit(mdl.chart.metric(x), rng.standard_normal(2))
        r = classify_cut_point(mdl.chart, x, v, bound=10.0)
        ok &= r.exceeds_bound and r.classification is None
    _line(9, "cut classes: sphere ordinary (det~0), torus axis ordinary "
             "(2 segments, det>=0.1), torus diagonal multi-segment, "
             "flat models cut-free to 10", ok)


# ---------------------------------------------------------------------------
# 10. strictness plus convexity implication properties


def _torus_dist(a, b):
    d = np.abs(np.asarray(a) - np.asarray(b))
    d = np.minimum(d, 1.0 - d)
    return float(np.hypot(d[0], d[1]))


def _hyp_dist(a, b):
    num = (a[0] - b[0])**2 + (a[1] - b[1])**2
    return float(np.arccosh(1.0 + num / (2.0 * a[1] * b[1])))


def _model_dist(name, chart, chart0, a, b):
    """Distance oracle for the containment check; exact closed forms
    where available, segment search on the ellipsoid."""
    if np.linalg.norm(np.asarray(a) - np.asarray(b)) < 1e-9:
        return 0.0
    if name == "euclidean":
        return float(np.hypot(*(np.asarray(a) - np.asarray(b))))
    if name == "flat_torus":
        return _torus_dist(a, b)
    if name == "hyperbolic_halfplane":
        return _hyp_dist(a, b)
    if name == "sphere":
        e1, e2 = chart0.embed(a), chart0.embed(b)
        c = np.dot(e1, e2) / (np.linalg.norm(e1) * np.linalg.norm(e2))
        return float(np.arccos(np.clip(c, -1.0, 1.0)))
    return minimizing_segments(chart0, np.asarray(a), np.asarray(b),
                               use_oracle=False, n_starts=12,
                               length_hint=1.5).distance


def test_criterion_10_implications(models, sphere_points, sphere_estimates,
                                   torus_points, torus_estimates,
                                   ellipsoid_points, ellipsoid_estimates):
    ok = True
    est0 = sphere_estimates[0]
    ok &= est0.c_g.value < est0.i_g.value - 0.5

    # model -> (point, strongly convex trial radius, injectivity hint)
    setups = {
        "euclidean": (np.array([0.3, -1.2]), 1.0, 10.0),
        "hyperbolic_halfplane": (np.array([0.2, 1.1]), 1.0, 10.0),
        "sphere": (sphere_points[0], 1.0, sphere_estimates[0]._internals[2]),
        "flat_torus": (torus_points[0], 0.2,
                       torus_estimates[0]._internals[2]),
        "ellipsoid": (ellipsoid_points[0], 1.0,
                      ellipsoid_estimates[0]._internals[2]),
    }
    for name, (p, r, i_hint) in setups.items():
        mdl = models[name]
        pm = None
        if name == "sphere":
            pm = sphere_estimates[0]._internals[1]
        elif name == "flat_torus":
            pm = torus_estimates[0]._internals[1]
        elif name == "ellipsoid":
            pm = ellipsoid_estimates[0]._internals[1]
        ball = ball_convexity_check(mdl.chart, p, r, pm=pm)
        ok &= ball.verdict == "strongly_convex"
        # strongly convex ball => positive index form at every smaller radius
        for s in r * np.linspace(0.05, 0.95, 20):
            res = scc_check(mdl.chart, p, float(s), n_dirs=64,
                            i_est=float(i_hint))
            ok &= res.status == "holds"
        # half-radius containment: segments between points of the closed
        # ball of radius r' stay inside it
        rp = 0.45 * r
        chart0, x0, pairs = make_ball_pairs(mdl.chart, p, rp, n_pairs=6,
                                            seed=3)
        for pair in pairs[:4]:
            ss = minimizing_segments(chart0, pair.x, pair.y,
                                     use_oracle=False, n_starts=12,
                                     length_hint=2.2 * rp + 0.1, seed=1)
            for path in ss.segments:
                for f in (0.25, 0.5, 0.75):
                    chz, z, _ = path.state(f * ss.distance)
                    if chz is not chart0:
                        z = chz.to_partner(z)
                    d = _model_dist(name, mdl.chart, chart0, x0, z)
                    ok &= d <= rp + 1e-6
    _line(10, "sphere c_g < i_g - 0.5; strong convexity implies positive "
              "index forms below r and half-radius segment containment", ok)


# ---------------------------------------------------------------------------
# 11. determinism of the analysis pipeline


def test_criterion_11_determinism():
    cfg = AnalysisConfig.from_dict({
        "model": "flat_torus",
        "points": [[0.37, 0.81]],
        "bound": 2.0,
        "seed": 42,
        "conditions": ["B"],
        "ball_radii": [0.2],
        "cut_directions": [[1.0, 0.0]],
    })
    a = canonical_json(run_analyze(cfg))
    b = canonical_json(run_analyze(cfg))
    _line(11, "repeated run_analyze with a fixed seed is canonically "
              "identical", a == b)
