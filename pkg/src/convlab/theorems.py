"""Cut-point classification and manifold-level inequality checks.

Three consumers of the radius estimators live here:

* ``classify_cut_point``: locate the cut parameter along a single
  direction and classify the cut point as ordinary (reached by several
  minimizing segments) or singular (conjugate, single segment).
* ``berger_check``: the half-injectivity inequality c_M <= i_M / 2
  over a sample of points.
* ``condition_check``: bounded-search evidence for the two ball
  convexity equivalence conditions (A: every properly convex ball is
  strongly convex; B: additionally tied to the largest uniquely
  geodesic closed ball).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil
from typing import Optional

import numpy as np

from .charts import eval_metric
from .convexity import (EPS_E, INF, Budget, RadiiEstimate, RadiusValue,
                        ball_convexity_check, injectivity_scan,
                        radii_estimate, uniquely_geodesic_check)
from .errors import (NoConvergence, NonFiniteState, OracleMismatch,
                     OutOfDomain, RadiusBeyondInjectivity)
from .geodesics import minimizing_segments, shoot
from .integrate import BatchFlow
from .jacobi import JacobiSweep, conjugate_radius, scc_breakdown_radius
from .polar import PolarMap, canonical_base


# ---------------------------------------------------------------------------
# cut point classification


@dataclass
class CutPointRecord:
    """The cut point along one unit direction out of p.

    ``classification`` is "ordinary" when several minimizing segments
    reach the cut point, "singular" when it is a first conjugate point
    reached by a single segment, "undetermined" when the evidence
    conflicts within tolerances, and None when no cut point was found
    within the search bound (``exceeds_bound`` set).
    """

    p: np.ndarray
    v: np.ndarray
    t_cut: float
    classification: Optional[str]
    n_segments: int
    jacobi_det: Optional[float]
    exceeds_bound: bool
    bound: float

    def as_dict(self):
        return {
            "p": list(map(float, np.atleast_1d(self.p))),
            "v": list(map(float, np.atleast_1d(self.v))),
            "t_cut": None if self.exceeds_bound else float(self.t_cut),
            "classification": self.classification,
            "n_segments": int(self.n_segments),
            "jacobi_det": (None if self.jacobi_det is None
                           else float(self.jacobi_det)),
            "exceeds_bound": bool(self.exceeds_bound),
            "bound": float(self.bound),
        }


def _ray_distance_record(chart0, x0, v0, t_max, h=0.005):
    """Dense record of the single geodesic ray t -> exp_p(t v)."""
    flow = BatchFlow(chart0)
    n_steps = max(16, ceil(t_max / h))
    cid, _, _, rec = flow.run(x0[None], v0[None], t_max, t_max / n_steps,
                              record_stride=1)
    return flow, rec


def _ray_point(flow, rec, j):
    """Chart-0 coordinates of the recorded ray at sample index j, or
    None when the point cannot be expressed in chart 0."""
    chart0 = flow.charts[0]
    qc = rec["x"][0, j]
    if rec["cid"][0, j] != 0:
        qc = flow.charts[1].to_partner(qc)
    qc = chart0.wrap(qc)
    if not bool(chart0.contains(qc)):
        return None
    return qc


def _ray_shortcut(pm, v0, t_max, b, seed, gap_tol=3e-3):
    """First parameter along v where a shorter geodesic overtakes the
    ray, refined with exact two-point distances; inf when none."""
    chart0, x0 = pm.chart, pm.p
    flow, rec = _ray_distance_record(chart0, x0, v0, t_max)
    ts = rec["t"]
    sub = np.arange(4, ts.size, 4)
    est = pm.estimate(rec["e"][0, sub])
    gap = np.where(est.ok, ts[sub] - est.d, 0.0)
    idx = np.flatnonzero(gap > gap_tol)
    if idx.size == 0:
        return INF
    j = int(idx[0])
    g0 = gap[j]
    dt_sub = float(ts[sub[1]] - ts[sub[0]])
    if j + 1 < sub.size and gap[j + 1] > g0:
        slope = (gap[j + 1] - g0) / dt_sub
    else:
        slope = 1.0
    cross = ts[sub[j]] - g0 / max(slope, g0 / dt_sub)
    if j >= 1:
        cross = max(cross, float(ts[sub[j - 1]]))

    # refine over the kink by a secant through two exact gaps
    dt = float(ts[1] - ts[0])
    def exact_gap(t):
        k = min(int(round(t / dt)), ts.size - 1)
        qc = _ray_point(flow, rec, k)
        if qc is None:
            return None, None
        try:
            ss = minimizing_segments(chart0, x0, qc, use_oracle=False,
                                     n_starts=max(32, b.n_starts),
                                     fan_h=b.pair_fan_h, h=b.gn_h,
                                     length_hint=1.1 * ts[k] + 0.1,
                                     seed=seed)
        except (NoConvergence, NonFiniteState):
            return None, None
        return float(ts[k]), float(ts[k] - ss.distance)

    t1, g1 = exact_gap(min(cross + 0.006, t_max))
    t2, g2 = exact_gap(min(cross + 0.018, t_max))
    if t1 is None or t2 is None or g2 < 1e-4:
        return INF if (g2 is None or g2 < 1e-4) else cross
    if g2 > g1 > 1e-6 and t2 > t1:
        root = t1 - g1 * (t2 - t1) / (g2 - g1)
    else:
        root = t1 - max(g1, 0.0)
    return float(np.clip(root, cross - 2.0 * dt_sub, t1))


def classify_cut_point(chart, p, v, bound=10.0, budget=None, seed=0, *,
                       pm=None, tie_tol=0.01):
    """Cut parameter and Bishop-style class along one direction."""
    b = budget or Budget()
    p = chart.wrap(np.asarray(p, dtype=float))
    if not bool(chart.contains(p)):
        raise OutOfDomain(p, chart.label)
    if bound <= 0:
        raise ValueError("bound must be positive")
    chart0, x0, jac = canonical_base(chart, p)
    v = np.asarray(v, dtype=float)
    v0 = jac @ v if jac is not None else v.copy()
    g0 = eval_metric(chart0, x0)
    nrm = float(np.sqrt(v0 @ g0 @ v0))
    if nrm <= 0.0:
        raise ValueError("direction must be nonzero")
    v0 = v0 / nrm
    v_unit = v / nrm

    t_conj = conjugate_radius(chart0, x0, v0, 1.02 * bound)
    scan_len = min(1.02 * bound + 0.1, min(t_conj, bound) * 1.02 + 0.1)
    if pm is None:
        pm = PolarMap(chart, p, scan_len,
                      n_dirs=b.dirs_for(chart0.dimension), h=0.02, seed=seed)
    t_short = _ray_shortcut(pm, v0, min(scan_len, pm.length) * 0.99, b, seed)

    # when the two candidates tie, take the conjugate parameter: the
    # Jacobi determinant is then evaluated exactly at its root
    t_cut = t_conj if t_conj <= t_short + 0.02 else t_short
    if not np.isfinite(t_cut) or t_cut > bound:
        return CutPointRecord(p, v_unit, INF, None, 0, None, True,
                              float(bound))

    path = shoot(chart0, x0, v0, t_cut)
    q_chart, qc = path.position(t_cut)
    if q_chart is chart0:
        base, pq = chart0, x0
    else:
        base, pq = q_chart, chart0.to_partner(x0)
    ss = minimizing_segments(base, pq, qc, tol=tie_tol, use_oracle=False,
                             n_starts=64, fan_h=b.pair_fan_h, h=b.gn_h,
                             length_hint=1.1 * t_cut + 0.1, seed=seed)
    sweep = JacobiSweep(chart0, x0, v0, t_cut)
    det = float(sweep.signed_volume(t_cut))

    n_seg = max(ss.n_segments, 1)
    if ss.distance < t_cut - 0.02:
        cls = "undetermined"     # the claimed cut parameter overshoots
    elif n_seg >= 2:
        cls = "ordinary"
    elif abs(det) <= EPS_E:
        cls = "singular"
    else:
        cls = "undetermined"
    return CutPointRecord(p, v_unit, float(t_cut), cls, n_seg, det, False,
                          float(bound))


# ---------------------------------------------------------------------------
# half-injectivity inequality


@dataclass
class BergerResult:
    """Manifold-level inequality c_M <= i_M / 2 over sampled points."""

    c_M: RadiusValue
    i_M: RadiusValue
    satisfied: bool
    margin: object               # float slack i_M/2 - c_M, or "unbounded"
    tau: float
    points: list
    estimates: list = field(repr=False, default_factory=list)

    def as_dict(self):
        return {
            "c_M": self.c_M.as_dict(),
            "i_M": self.i_M.as_dict(),
            "satisfied": bool(self.satisfied),
            "margin": self.margin,
            "tau": float(self.tau),
            "points": [list(map(float, np.atleast_1d(q)))
                       for q in self.points],
        }


def _min_radius(estimates, name, bound):
    vals = [getattr(e, name) for e in estimates]
    finite = [rv for rv in vals if not rv.exceeds_bound]
    if not finite:
        return RadiusValue(float(bound), max(rv.half_width for rv in vals),
                           True, float(bound))
    return min(finite, key=lambda rv: rv.value)


def berger_check(chart, sample_points, bound=10.0, budget=None, seed=0,
                 estimates=None):
    """Check c_M <= i_M / 2 + tau with infima over the sampled points."""
    pts = [np.asarray(q, dtype=float) for q in sample_points]
    if not pts:
        raise ValueError("sample_points must be nonempty")
    if estimates is None:
        estimates = [radii_estimate(chart, q, bound=bound, budget=budget,
                                    seed=seed) for q in pts]
    c_M = _min_radius(estimates, "c_g", bound)
    i_M = _min_radius(estimates, "i_g", bound)
    tau = c_M.half_width + 0.5 * i_M.half_width
    if c_M.exceeds_bound and i_M.exceeds_bound:
        return BergerResult(c_M, i_M, True, "unbounded", tau, pts, estimates)
    # a bound-capped i_M only strengthens the inequality being checked
    margin = 0.5 * i_M.value - c_M.value
    return BergerResult(c_M, i_M, bool(margin + tau >= 0.0), float(margin),
                        tau, pts, estimates)


# ---------------------------------------------------------------------------
# conditions A and B


@dataclass
class ConditionReport:
    """Bounded-search verdict for ball convexity condition A or B."""

    point: np.ndarray
    condition: str               # "A" | "B"
    status: str                  # holds_up_to_bound | fails
    evidence: list = field(default_factory=list)

    def as_dict(self):
        return {
            "point": list(map(float, np.atleast_1d(self.point))),
            "condition": self.condition,
            "status": self.status,
            "evidence": self.evidence,
        }


def _shortcut_tie_radius(chart0, x0, u, half, b, seed):
    """Radius at which the two shortest geodesics between diametral
    points exp(+s u), exp(-s u) tie, by a secant over exact gaps.

    ``u`` seeds the direction; it is refined to the bisector of the
    two tied segment directions so that the diameter aligns with the
    shortest geodesic loop through the center.
    """
    g0 = eval_metric(chart0, x0)

    def unit(w):
        return w / np.sqrt(w @ g0 @ w)

    def segments_to(t):
        flow = BatchFlow(chart0)
        n_steps = max(16, ceil(t / 0.005))
        cid, xe, _, _ = flow.run(x0[None], u[None] * t, 1.0, 1.0 / n_steps)
        q = xe[0]
        if cid[0] != 0:
            q = flow.charts[1].to_partner(q)
        q = chart0.wrap(q)
        if not bool(chart0.contains(q)):
            return None
        try:
            return minimizing_segments(chart0, x0, q, tol=0.05,
                                       use_oracle=False,
                                       n_starts=max(32, b.n_starts),
                                       fan_h=b.pair_fan_h, h=b.gn_h,
                                       length_hint=1.1 * t + 0.1, seed=seed)
        except (NoConvergence, NonFiniteState):
            return None

    ss = segments_to(2.0 * half + 0.02)
    if ss is not None and ss.n_segments == 2:
        w1 = unit(ss.velocities[0])
        w2 = unit(ss.velocities[1])
        w = w1 - w2
        nrm = float(np.sqrt(w @ g0 @ w))
        if nrm > 1e-6:
            w = w / nrm
            if float(w @ g0 @ u) < 0:
                w = -w
            u = w

    def gap(s):
        flow = BatchFlow(chart0)
        n_steps = max(16, ceil(s / 0.005))
        cid, xe, _, _ = flow.run(np.vstack([x0, x0]),
                                 np.vstack([u, -u]) * s, 1.0, 1.0 / n_steps)
        ends = []
        for i in (0, 1):
            q = xe[i]
            if cid[i] != 0:
                q = flow.charts[1].to_partner(q)
            q = chart0.wrap(q)
            if not bool(chart0.contains(q)):
                return None
            ends.append(q)
        try:
            ss = minimizing_segments(chart0, ends[0], ends[1],
                                     use_oracle=False,
                                     n_starts=max(32, b.n_starts),
                                     fan_h=b.pair_fan_h, h=b.gn_h,
                                     length_hint=2.2 * s + 0.1, seed=seed)
        except (NoConvergence, NonFiniteState):
            return None
        return 2.0 * s - ss.distance

    s1, s2 = half + 0.01, half + 0.02
    g1, g2 = gap(s1), gap(s2)
    if g1 is None or g2 is None or not (g2 > g1 > 1e-6):
        return None
    return float(s1 - g1 * (s2 - s1) / (g2 - g1))


def _distinguishing_ball_search(chart, p, est, internals, b, seed):
    """Look for a ball that is properly but not strongly convex.

    Candidate radii: the refined index-form breakdown radius along the
    worst scanned direction, the diametral tie radius of the shortest
    shortcut, and the estimated proper convexity radius itself.
    """
    scan, pm, i_val, cross = internals
    cands = []
    k = int(np.argmin(scan.slc))
    if np.isfinite(scan.slc[k]):
        r = scc_breakdown_radius(scan.chart0, scan.x0, scan.dirs[k],
                                 min(est.bound, i_val) * 1.01)
        if np.isfinite(r):
            cands.append(float(r))
    k = int(np.argmin(cross))
    if np.isfinite(cross[k]):
        r = _shortcut_tie_radius(scan.chart0, scan.x0, pm.dirs[k],
                                 0.5 * float(cross[k]), b, seed)
        if r is not None:
            cands.append(float(r))
    if not est.c_g.exceeds_bound:
        cands.append(float(est.c_g.value))
    tried = []
    for r in cands:
        if not (0.0 < r < i_val * (1.0 - 1e-6)):
            continue
        if any(abs(r - r0) < 1e-9 for r0 in tried):
            continue
        tried.append(r)
        try:
            verdict = ball_convexity_check(chart, p, r, n_pairs=b.n_pairs,
                                           seed=seed, pm=pm, i_est=i_val,
                                           budget=b)
        except (RadiusBeyondInjectivity, NoConvergence, NonFiniteState,
                OracleMismatch):
            continue
        if verdict.verdict == "properly_convex_only":
            return verdict
    return None


def condition_check(chart, p, which, bound=10.0, budget=None, seed=0,
                    est=None):
    """Bounded-search check of ball convexity condition A or B at p."""
    which = str(which).upper()
    if which not in ("A", "B"):
        raise ValueError("condition must be 'A' or 'B'")
    b = budget or Budget()
    p = chart.wrap(np.asarray(p, dtype=float))
    if not bool(chart.contains(p)):
        raise OutOfDomain(p, chart.label)
    if est is None:
        est = radii_estimate(chart, p, bound=bound, budget=b, seed=seed)
    evidence = [{"kind": "radii", "estimate": est.as_dict()}]
    for name, verdict in est.witnesses.items():
        evidence.append({"kind": "bisection_witness", "radius": name,
                         "ball": verdict.as_dict()})
    all_beyond = (est.c_g.exceeds_bound and est.sc_g.exceeds_bound
                  and est.slc_g.exceeds_bound)
    if all_beyond:
        return ConditionReport(p, which, "holds_up_to_bound", evidence)

    internals = getattr(est, "_internals", None)
    if internals is None:
        internals = injectivity_scan(chart, p, bound, budget=b, seed=seed)

    failed = False
    c_val = float(est.c_g.value)
    if which == "B":
        # (i) the closed ball of radius c_g should be uniquely geodesic
        # while slightly larger balls should not be; the wide tie slack
        # absorbs the half-width error carried by c_val itself
        ug_c = uniquely_geodesic_check(chart, p, c_val, n_pairs=b.n_pairs,
                                       seed=seed, tie_tol=0.01, budget=b)
        item = {"kind": "uniquely_geodesic", "radius": c_val,
                "holds": bool(ug_c.holds)}
        if not ug_c.holds:
            item["pair"] = [list(map(float, x)) for x in ug_c.pair]
            item["n_segments"] = int(ug_c.n_segments)
            item["distance"] = float(ug_c.distance)
            failed = True
        evidence.append(item)
        delta = 0.02 * bound
        r_plus = min(c_val + delta, internals[2] * 0.999, bound)
        if r_plus > c_val:
            ug_plus = uniquely_geodesic_check(chart, p, r_plus,
                                              n_pairs=b.n_pairs, seed=seed,
                                              tie_tol=0.01, budget=b)
            evidence.append({"kind": "uniquely_geodesic", "radius": r_plus,
                             "holds": bool(ug_plus.holds)})
        # (ii) the strong local radius must strictly exceed c_g
        tau = est.slc_g.half_width + est.c_g.half_width
        slc_gt_c = (est.slc_g.exceeds_bound
                    or est.slc_g.value > c_val + tau)
        evidence.append({"kind": "slc_vs_c",
                         "slc": est.slc_g.as_dict(), "c": est.c_g.as_dict(),
                         "tau": tau, "strictly_greater": bool(slc_gt_c)})
        if not slc_gt_c:
            failed = True
    else:
        # A: the strong and proper convexity radii must agree; a gap
        # means some ball is properly but not strongly convex
        tau = est.sc_g.half_width + est.c_g.half_width
        gap = (not est.sc_g.exceeds_bound
               and est.sc_g.value < c_val - tau)
        evidence.append({"kind": "sc_vs_c",
                         "sc": est.sc_g.as_dict(), "c": est.c_g.as_dict(),
                         "tau": tau, "strictly_smaller": bool(gap)})
        if gap:
            failed = True

    ball = _distinguishing_ball_search(chart, p, est, internals, b, seed)
    if ball is not None:
        evidence.append({"kind": "distinguishing_ball",
                         "ball": ball.as_dict()})
        failed = True
    else:
        evidence.append({"kind": "distinguishing_ball", "ball": None})

    return ConditionReport(p, which, "fails" if failed else
                           "holds_up_to_bound", evidence)
