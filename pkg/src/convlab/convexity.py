"""Convexity and injectivity radii, sphere checks, and ball classification.

Estimators combine three primitives:

* a batched Jacobi scan over a fan of directions, giving conjugate
  parameters (signed-volume zeros) and the local-convexity breakdown
  parameters (index-form eigenvalue crossings);
* a polar distance field (``PolarMap``) around the base point, giving
  shortcut radii (where some other geodesic reaches a point of the ray
  sooner) and fast point-in-ball queries with Gauss-Newton polish for
  borderline cases;
* two-point minimizing segment searches for uniqueness and containment
  of segments between sampled ball pairs.

The proper / strong convexity conventions follow the ball definitions:
proper convexity constrains pairs in the open ball (unique segment
inside the ball), strong convexity constrains pairs in the closed ball
(unique segment whose interior stays in the open ball).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .charts import eval_metric, gram_basis
from .errors import (NoConvergence, NonFiniteState, OracleMismatch,
                     OutOfDomain, RadiusBeyondInjectivity)
from .geodesics import minimizing_segments
from .integrate import BatchFlow, pick_chart, transition_jacobian
from .jacobi import batch_jacobi_scan, first_crossing
from .polar import (DistanceEstimate, PolarMap, _line_length, canonical_base,
                    direction_set, gn_polish)

INF = float("inf")
# numerical zero band for eigenvalue / determinant verdicts
EPS_E = 1e-7


@dataclass
class Budget:
    """Tunable effort knobs shared by the estimators."""

    n_dirs: Optional[int] = None      # default: 128 (n = 2), 64 (n >= 3)
    n_pairs: int = 12
    n_starts: int = 16
    scan_h: float = 0.0075
    gn_h: float = 0.02
    gn_iters: int = 14
    pair_fan_h: float = 0.04
    bisect_tol: float = 0.006
    max_ball_evals: int = 60

    def dirs_for(self, n):
        return self.n_dirs if self.n_dirs else (128 if n == 2 else 64)


@dataclass
class RadiusValue:
    """One radius estimate: finite value with half-width, or beyond bound."""

    value: float
    half_width: float
    exceeds_bound: bool
    bound: float

    @property
    def lower(self):
        return self.value - (0.0 if self.exceeds_bound else self.half_width)

    @property
    def upper(self):
        return INF if self.exceeds_bound else self.value + self.half_width

    def as_dict(self):
        if self.exceeds_bound:
            return {"exceeds_bound": self.bound}
        return {"value": self.value, "half_width": self.half_width}

    def __str__(self):
        if self.exceeds_bound:
            return f">={self.bound:g}"
        return f"{self.value:.6g}+-{self.half_width:.2g}"


@dataclass
class RadiiEstimate:
    """The five radii at a point, each finite-with-half-width or beyond
    the search bound."""

    point: np.ndarray
    i_g: RadiusValue
    lc_g: RadiusValue
    slc_g: RadiusValue
    c_g: RadiusValue
    sc_g: RadiusValue
    bound: float
    witnesses: dict = field(default_factory=dict)
    partial: bool = False

    def as_dict(self):
        out = {"point": list(map(float, np.atleast_1d(self.point))),
               "bound": self.bound, "partial": self.partial}
        for name in ("i_g", "lc_g", "slc_g", "c_g", "sc_g"):
            out[name] = getattr(self, name).as_dict()
        return out

    def lattice_relations(self):
        """The pointwise radius inequalities with combined half-widths
        as slack; returns a list of (label, lhs, rhs, tau, ok)."""
        pairs = [("sc_g <= c_g", self.sc_g, self.c_g),
                 ("slc_g <= lc_g", self.slc_g, self.lc_g),
                 ("c_g <= lc_g", self.c_g, self.lc_g),
                 ("sc_g <= slc_g", self.sc_g, self.slc_g),
                 ("lc_g <= i_g", self.lc_g, self.i_g)]
        out = []
        for label, a, b in pairs:
            tau = a.half_width + b.half_width
            lhs = a.value if not a.exceeds_bound else a.bound
            rhs = b.upper if not b.exceeds_bound else INF
            ok = a.exceeds_bound is False and lhs <= rhs + tau
            if a.exceeds_bound:
                # lhs beyond bound forces rhs beyond bound
                ok = b.exceeds_bound
            out.append((label, lhs, rhs, tau, bool(ok)))
        return out


@dataclass
class BallWitness:
    pair: tuple
    t_star: Optional[float]
    reason: str
    distance: Optional[float] = None
    n_segments: Optional[int] = None


@dataclass
class BallConvexityVerdict:
    center: np.ndarray
    radius: float
    verdict: str     # strongly_convex | properly_convex_only | not_convex | inconclusive
    witness: Optional[BallWitness] = None

    def as_dict(self):
        out = {"center": list(map(float, np.atleast_1d(self.center))),
               "radius": self.radius, "verdict": self.verdict}
        if self.witness is not None:
            out["witness"] = {
                "pair": [list(map(float, x)) for x in self.witness.pair],
                "t_star": self.witness.t_star,
                "reason": self.witness.reason,
                "distance": self.witness.distance,
                "n_segments": self.witness.n_segments,
            }
        return out


# ---------------------------------------------------------------------------
# directional scans


@dataclass
class DirectionalScan:
    """Per-direction conjugate and breakdown parameters around a point."""

    chart0: object
    x0: np.ndarray
    dirs: np.ndarray
    conj: np.ndarray       # first signed-volume zero per direction
    lc: np.ndarray         # first index min-eig crossing below -eps
    slc: np.ndarray        # first index min-eig crossing below +eps
    bound: float


def directional_scan(chart, p, bound, n_dirs, seed=0, h=0.0075):
    chart0, x0, _ = canonical_base(chart, p)
    dirs = direction_set(chart0, x0, n_dirs, seed)
    ts, lam, vol = batch_jacobi_scan(chart0, x0, dirs, bound, h=h,
                                     stop_when_crossed=True)
    return DirectionalScan(
        chart0=chart0, x0=x0, dirs=dirs,
        conj=first_crossing(ts, vol),
        lc=first_crossing(ts, lam + EPS_E),
        slc=first_crossing(ts, lam - EPS_E),
        bound=float(bound),
    )


def _shortcut_scan(chart, p, pm: PolarMap, gap_tol=3e-3, verify=True,
                   budget=None, seed=0):
    """Per-ray first parameter where another geodesic branch reaches the
    ray point sooner; returns (per_ray, verified_min)."""
    b = budget or Budget()
    K, S, _ = pm.emb.shape
    sub = np.arange(2, S, 2)
    z = pm.emb[:, sub, :].reshape(-1, pm.emb.shape[-1])
    est = pm.estimate(z)
    d = est.d.reshape(K, sub.size)
    ok = est.ok.reshape(K, sub.size)
    gap = np.where(ok, pm.ts[sub][None, :] - d, 0.0)
    dt_sub = float(pm.ts[sub[1]] - pm.ts[sub[0]])
    # interpolation noise grows with the arc spacing between adjacent
    # rays, so the detection threshold must scale with t as well
    dtheta = (2.0 * np.pi / K if pm.chart.dimension == 2
              else 2.0 * np.sqrt(np.pi / K))
    tol_t = np.maximum(gap_tol, 0.75 * pm.ts[sub] * dtheta)
    cross = np.full(K, INF)
    for k in range(K):
        idx = np.flatnonzero(gap[k] > tol_t)
        if idx.size == 0:
            continue
        j = int(idx[0])
        g0 = gap[k, j]
        # the gap rises from zero with slope 1 - d'(t); extrapolate back
        # along the local slope to locate the kink
        if j + 1 < sub.size and gap[k, j + 1] > g0:
            slope = (gap[k, j + 1] - g0) / dt_sub
        elif j >= 1 and 3e-4 < gap[k, j - 1] < g0:
            slope = (g0 - gap[k, j - 1]) / dt_sub
        else:
            slope = 1.0
        cross[k] = pm.ts[sub[j]] - g0 / max(slope, 0.5 * g0 / dt_sub)
        if j >= 1:
            # a gap-free previous sample bounds the kink from below; a
            # sub-threshold positive gap only bounds it by one more step
            floor = (pm.ts[sub[j - 1]] if gap[k, j - 1] <= 1e-4
                     else pm.ts[sub[j]] - 2.0 * dt_sub)
            cross[k] = max(cross[k], floor)
    if not verify:
        return cross, float(cross.min(initial=INF))
    # confirm the global minimum with an exact two-point search; reject
    # rays whose claimed shortcut does not survive
    cid_rec, x_rec, _ = pm.states
    for _ in range(8):
        k = int(np.argmin(cross))
        if not np.isfinite(cross[k]):
            break
        t_chk = min(cross[k] + 0.01, pm.length * 0.98)
        # ceil keeps the check sample strictly past the claimed kink
        j = min(int(np.ceil(t_chk / pm.dt)), x_rec.shape[1] - 1)
        qc = x_rec[k, j]
        q_chart = pm.flow.charts[cid_rec[k, j]]
        if q_chart is not pm.chart:
            qc = q_chart.to_partner(qc)
        try:
            ss = minimizing_segments(pm.chart, pm.p, qc, use_oracle=False,
                                     n_starts=max(32, b.n_starts),
                                     fan_h=b.pair_fan_h, h=b.gn_h,
                                     length_hint=1.1 * t_chk + 0.1, seed=seed)
        except (NoConvergence, NonFiniteState):
            break
        if ss.distance < pm.ts[j] - 1e-3:
            break
        cross[k] = INF
    return cross, float(cross.min(initial=INF))


def injectivity_scan(chart, p, bound, budget=None, seed=0):
    """Shared first stage of the radii estimators.

    Returns (scan, pm, i_val, short_per_ray) where pm is a polar
    distance field sized to cover every ball query the later stages
    make and short_per_ray holds each ray's shortcut parameter.
    """
    b = budget or Budget()
    scan = directional_scan(chart, p, bound, b.dirs_for(chart.dimension),
                            seed=seed, h=b.scan_h)
    conj_min = float(scan.conj.min())
    lc_inf = float(scan.lc.min())
    length = min(1.02 * bound + 0.1,
                 max(1.02 * min(conj_min, bound),
                     2.2 * min(lc_inf, conj_min, bound)) + 0.1)
    pm = PolarMap(chart, p, length, n_dirs=b.dirs_for(chart.dimension),
                  h=0.02, seed=seed)
    cross, short_min = _shortcut_scan(chart, p, pm, budget=b, seed=seed)
    i_val = min(conj_min, short_min)
    return scan, pm, i_val, cross


# ---------------------------------------------------------------------------
# ball pair sampling


@dataclass
class BallPair:
    x: np.ndarray
    y: np.ndarray
    fx: float
    fy: float
    closure_only: bool    # pair touches the boundary: strong check only
    dx: float = 0.0       # center distances d(p, x), d(p, y)
    dy: float = 0.0
    vx: Optional[np.ndarray] = None   # arrival velocities of the radial
    vy: Optional[np.ndarray] = None   # geodesics p -> x, p -> y


def _pair_directions(chart0, x0, specs, seed):
    """Unit direction pairs with prescribed separation angles."""
    n = chart0.dimension
    basis = gram_basis(chart0, x0)
    rng = np.random.default_rng(seed)
    g = eval_metric(chart0, x0)
    out = []
    for ang0, sep in specs:
        if n == 2:
            a0 = rng.uniform(0.0, 2.0 * np.pi) if ang0 is None else ang0
            d1 = np.cos(a0) * basis[:, 0] + np.sin(a0) * basis[:, 1]
            d2 = (np.cos(a0 + sep) * basis[:, 0]
                  + np.sin(a0 + sep) * basis[:, 1])
        else:
            if ang0 is None:
                raw = rng.standard_normal(n) @ basis.T
            else:
                raw = basis[:, 0]
            d1 = raw / np.sqrt(raw @ g @ raw)
            u = rng.standard_normal(n) @ basis.T
            u = u - (u @ g @ d1) * d1
            u = u / np.sqrt(u @ g @ u)
            d2 = np.cos(sep) * d1 + np.sin(sep) * u
        out.append((d1, d2))
    return out


def make_ball_pairs(chart, p, r, n_pairs=12, seed=0, h=0.01):
    """Seeded point pairs in the closed ball of radius r around p.

    A fixed adversarial core (near-diametral pairs, including two along
    chart axis directions, at near-boundary radii) is topped up with
    random pairs.  Pairs touching the boundary (fraction 1.0) are
    flagged ``closure_only``.
    """
    chart0, x0, _ = canonical_base(chart, p)
    rng = np.random.default_rng(seed + 1)
    core = [
        ((0.0, np.pi), 1.0, 1.0, True),
        ((0.5 * np.pi, np.pi), 1.0, 1.0, True),
        ((0.0, np.pi), 0.999, 0.999, False),
        ((None, np.pi), 0.999, 0.999, False),
        ((None, np.pi), 0.96, 0.96, False),
        ((None, np.pi - 0.15), 0.999, 0.999, False),
        ((None, np.pi - 0.35), 1.0, 1.0, True),
        ((None, np.pi - 0.6), 0.999, 0.7, False),
    ]
    extra = max(0, n_pairs - len(core))
    for _ in range(extra):
        core.append(((None, rng.uniform(1.2, np.pi)),
                     rng.uniform(0.3, 0.999), rng.uniform(0.3, 0.999), False))
    dir_pairs = _pair_directions(chart0, x0, [spec[0] for spec in core], seed)
    vels, meta = [], []
    for (d1, d2), (_, f1, f2, closure) in zip(dir_pairs, core):
        vels.append(f1 * r * d1)
        vels.append(f2 * r * d2)
        meta.append((f1, f2, closure))
    vels = np.array(vels)
    flow = BatchFlow(chart0)
    n_steps = max(4, int(np.ceil(r / h)))
    cid, xe, ve, _ = flow.run(np.broadcast_to(x0, vels.shape), vels, 1.0,
                              1.0 / n_steps)
    pts, arr = [], []
    for i in range(len(vels)):
        x, v = xe[i], ve[i]
        if cid[i] == 1:
            jac = transition_jacobian(chart0.partner, x[None])[0]
            v = jac @ v
            x = chart0.partner.to_partner(x)
        pts.append(chart0.wrap(x))
        arr.append(v)
    pairs = []
    for j, (f1, f2, closure) in enumerate(meta):
        pairs.append(BallPair(pts[2 * j], pts[2 * j + 1], f1, f2, closure,
                              dx=f1 * r, dy=f2 * r,
                              vx=arr[2 * j], vy=arr[2 * j + 1]))
    return chart0, x0, pairs


# ---------------------------------------------------------------------------
# ball convexity


@dataclass
class PairSegments:
    pair: BallPair
    ok: bool
    distance: float = INF
    unique: bool = True
    n_segments: int = 0
    sample_ts: list = field(default_factory=list)
    sample_embeds: list = field(default_factory=list)
    sample_coords: list = field(default_factory=list)
    sample_cids: list = field(default_factory=list)


def _pair_segments(chart0, pairs, fan_len, b, seed, tie_tol=1e-5):
    """Minimizing segments for several point pairs in one batched pass.

    Runs one shared fan of geodesics (all pairs together), one shared
    Gauss-Newton polish over every candidate start, and one shared
    recording pass for the surviving segments.
    """
    n = chart0.dimension
    np_ = len(pairs)
    xs = np.empty((np_, n))
    cids = np.zeros(np_, np.int8)
    gs = np.empty((np_, n, n))
    dirs = np.empty((np_, b.n_starts, n))
    targets = np.empty((np_, chart0.embed_dim))
    for i, pr in enumerate(pairs):
        ch, x = pick_chart(chart0, pr.x)
        cids[i] = 0 if ch is chart0 else 1
        xs[i] = x
        gs[i] = eval_metric(ch, x)
        dirs[i] = direction_set(ch, x, b.n_starts, seed)
        targets[i] = chart0.embed(pr.y)
    flow = BatchFlow(chart0)
    k = b.n_starts
    n_steps = max(8, int(np.ceil(fan_len / b.pair_fan_h)))
    _, _, _, rec = flow.run(np.repeat(xs, k, axis=0),
                            dirs.reshape(np_ * k, n), fan_len,
                            fan_len / n_steps, record_stride=1,
                            cid0=np.repeat(cids, k))
    s = rec["t"].size
    e = rec["e"].reshape(np_, k, s, -1)
    dist = np.linalg.norm(e - targets[:, None, None, :], axis=-1)
    j_min = np.argmin(dist, axis=2)
    m_min = np.take_along_axis(dist, j_min[:, :, None], 2)[:, :, 0]
    u_rows, row_pair = [], []
    for i in range(np_):
        mm = m_min[i]
        if n == 2:
            local = (mm <= np.roll(mm, 1)) & (mm <= np.roll(mm, -1))
        else:
            local = np.ones(k, bool)
        thresh = max(3.0 * float(mm.min()), 1.2 * fan_len * 2 * np.pi / k)
        cand = np.flatnonzero(local & (mm <= thresh))
        cand = cand[np.argsort(mm[cand])][:6]
        if cand.size == 0:
            cand = np.array([int(np.argmin(mm))])
        t_c = np.maximum(rec["t"][j_min[i, cand]], 1e-3)
        u_rows.append(t_c[:, None] * dirs[i, cand])
        row_pair.extend([i] * cand.size)
        # extra start back through the ball center: for near-diametral
        # pairs the fan alone can lose the through-center segment to
        # conjugate-point reconvergence
        pr = pairs[i]
        if pr.vx is not None and pr.dx > 0:
            v = pr.vx
            if cids[i] == 1:
                v = transition_jacobian(chart0, pr.x[None])[0] @ v
            u_rows.append((-(pr.dx + pr.dy) / pr.dx) * v[None, :])
            row_pair.append(i)
    u_init = np.vstack(u_rows)
    row_pair = np.array(row_pair)
    u_fit, res = gn_polish(chart0, xs[row_pair], u_init, targets[row_pair],
                           h=b.gn_h, iters=b.gn_iters, cid0=cids[row_pair])
    lengths = np.sqrt(np.einsum("ci,cij,cj->c", u_fit, gs[row_pair], u_fit))
    conv = (res < 1e-7) & (lengths > 1e-9)
    out = [PairSegments(pr, ok=False) for pr in pairs]
    rep_rows, rep_pair, rep_len = [], [], []
    for i in range(np_):
        rows = np.flatnonzero((row_pair == i) & conv)
        if rows.size == 0:
            continue
        d = float(lengths[rows].min())
        keep = rows[lengths[rows] <= d + max(tie_tol, 1e-6)]
        keep = keep[np.argsort(lengths[keep])]
        reps = []
        for c in keep:
            w = u_fit[c] / lengths[c]
            novel = True
            for cr in reps:
                cosang = float(w @ gs[i] @ (u_fit[cr] / lengths[cr]))
                if np.arccos(np.clip(cosang, -1.0, 1.0)) < 0.05:
                    novel = False
                    break
            if novel:
                reps.append(int(c))
        out[i] = PairSegments(pairs[i], ok=True, distance=d,
                              unique=len(reps) == 1, n_segments=len(reps))
        rep_rows.extend(reps)
        rep_pair.extend([i] * len(reps))
        rep_len.extend(float(lengths[c]) for c in reps)
    if rep_rows:
        rep_rows = np.array(rep_rows)
        rep_pair_a = np.array(rep_pair)
        rep_len = np.array(rep_len)
        n_int = max(8, int(np.ceil(rep_len.max() / b.gn_h)))
        stride = max(1, n_int // 120)
        _, _, _, rec2 = flow.run(xs[rep_pair_a], u_fit[rep_rows], 1.0,
                                 1.0 / n_int, record_stride=stride,
                                 cid0=cids[rep_pair_a])
        end_err = np.linalg.norm(rec2["e"][:, -1] - targets[rep_pair_a],
                                 axis=-1)
        for j in range(len(rep_rows)):
            i = rep_pair[j]
            if end_err[j] > 1e-6:
                out[i].ok = False
                continue
            out[i].sample_ts.append(rec2["t"] * rep_len[j])
            out[i].sample_embeds.append(rec2["e"][j])
            out[i].sample_coords.append(rec2["x"][j])
            out[i].sample_cids.append(rec2["cid"][j])
    return out


def _containment_witnesses(pm: PolarMap, results, r, band=0.0025):
    """Escape / boundary-tangency witnesses over all unique segments.

    Distance queries are batched over every segment sample; candidate
    violations are confirmed by Gauss-Newton polish before a witness is
    produced.  Returns (escapes, tangencies, inconclusive) keyed by
    result index.
    """
    zs, tts, owner, seg_ell, qcs = [], [], [], [], []
    for i, pr in enumerate(results):
        if not pr.ok or not pr.unique:
            continue
        for ts_, emb, xc, cid in zip(pr.sample_ts, pr.sample_embeds,
                                     pr.sample_coords, pr.sample_cids):
            if ts_.size < 5:
                continue
            zs.append(emb[1:-1])
            tts.append(ts_[1:-1])
            owner.append(np.full(ts_.size - 2, i))
            seg_ell.append(np.full(ts_.size - 2, float(ts_[-1])))
            xc = np.array(xc[1:-1])
            hop = cid[1:-1] == 1
            if hop.any():
                xc[hop] = pm.chart.partner.to_partner(xc[hop])
            qcs.append(xc)
    if not zs:
        return {}, {}, False
    z = np.concatenate(zs)
    tt = np.concatenate(tts)
    owner = np.concatenate(owner)
    ell = np.concatenate(seg_ell)
    qc = np.concatenate(qcs)
    est = pm.estimate(z)
    d = est.d.copy()
    inconclusive = False
    need = (~est.ok) | (d > r - band)
    if need.any():
        sub = DistanceEstimate(d=est.d[need], miss=est.miss[need],
                               dirs=est.dirs[need], ok=est.ok[need],
                               edge=est.edge[need])
        dp, res = pm.polish(z[need], sub, iters=10)
        good = res < 1e-6
        idx = np.flatnonzero(need)
        d[idx[good]] = dp[good]
        if (~good).any():
            inconclusive = True
    # the polish can converge onto a non-minimizing (wrapped) geodesic;
    # cap candidate violations by the straight chart-segment length,
    # an independent upper bound on the distance
    for j in np.flatnonzero(d > r - 1e-6):
        d[j] = min(d[j], _line_length(pm.chart, pm.p, qc[j], n_quad=9))
    escapes, tangencies = {}, {}
    esc = d > r + 1e-6
    win = (tt > 0.08 * ell) & (tt < 0.92 * ell)
    tang = win & ~esc & (d > r - 1e-6)
    for i in np.unique(owner):
        mine = owner == i
        pr = results[int(i)]
        if (esc & mine).any():
            j = int(np.argmax(np.where(esc & mine, d, -INF)))
            escapes[int(i)] = BallWitness(
                pair=(pr.pair.x, pr.pair.y), t_star=float(tt[j]),
                reason="segment_escapes", distance=float(d[j]))
        elif (tang & mine).any():
            j = int(np.argmax(np.where(tang & mine, d, -INF)))
            tangencies[int(i)] = BallWitness(
                pair=(pr.pair.x, pr.pair.y), t_star=float(tt[j]),
                reason="boundary_tangency", distance=float(d[j]))
    return escapes, tangencies, inconclusive


def _ball_verdict(chart0, x0, p_orig, r, pm, pairs, budget, seed,
                  mode="full"):
    """Classify one ball from its sampled pairs.

    ``mode`` tunes effort: "strong" / "proper" stop at the first
    violation of the corresponding convexity type (used inside the
    radius bisections), "full" gathers complete evidence.
    """
    b = budget
    if mode == "proper":
        pairs = [pr for pr in pairs if not pr.closure_only]
    proper_w = strong_w = None
    inconclusive = False
    fan_len = 2.1 * r + 0.2
    stages = [pairs[:4], pairs[4:]]
    for stage in stages:
        if not stage:
            continue
        try:
            results = _pair_segments(chart0, stage, fan_len, b, seed)
        except (NoConvergence, NonFiniteState, OracleMismatch):
            inconclusive = True
            continue
        for pr in results:
            if not pr.ok:
                inconclusive = True
                continue
            if not pr.unique:
                w = BallWitness(pair=(pr.pair.x, pr.pair.y), t_star=None,
                                reason="non_unique_segment",
                                distance=pr.distance,
                                n_segments=pr.n_segments)
                strong_w = strong_w or w
                if not pr.pair.closure_only:
                    proper_w = proper_w or w
        escapes, tangencies, inc = _containment_witnesses(pm, results, r)
        inconclusive |= inc
        for i, w in escapes.items():
            strong_w = strong_w or w
            if not results[i].pair.closure_only:
                proper_w = proper_w or w
        for i, w in tangencies.items():
            strong_w = strong_w or w
        if mode == "strong" and strong_w is not None:
            break
        if mode == "proper" and proper_w is not None:
            break
        if proper_w is not None and strong_w is not None:
            break
    if proper_w is not None:
        verdict = "not_convex"
        witness = proper_w
    elif strong_w is not None:
        verdict = "properly_convex_only"
        witness = strong_w
    elif inconclusive:
        verdict = "inconclusive"
        witness = None
    else:
        verdict = "strongly_convex"
        witness = None
    return BallConvexityVerdict(np.asarray(p_orig, float), float(r),
                                verdict, witness)


def ball_convexity_check(chart, p, r, n_pairs=12, seed=0, *, pm=None,
                         i_est=None, budget=None):
    """Classify the geodesic ball B(p, r) by sampled pair evidence."""
    b = budget or Budget()
    p = chart.wrap(np.asarray(p, dtype=float))
    if not bool(chart.contains(p)):
        raise OutOfDomain(p, chart.label)
    if r <= 0:
        raise ValueError("radius must be positive")
    if pm is None or i_est is None:
        bound = max(4.0 * r, 2.0)
        _, pm_new, i_new, _ = injectivity_scan(chart, p, bound, budget=b,
                                               seed=seed)
        pm = pm or pm_new
        i_est = i_est if i_est is not None else i_new
    if r > i_est * (1.0 + 1e-9) + 1e-12:
        raise RadiusBeyondInjectivity(
            f"radius {r:g} exceeds injectivity estimate {i_est:g}")
    chart0, x0, pairs = make_ball_pairs(chart, p, r, n_pairs=n_pairs,
                                        seed=seed)
    return _ball_verdict(chart0, x0, p, r, pm, pairs, b, seed)


@dataclass
class UgCheckResult:
    holds: bool
    pair: Optional[tuple] = None
    n_segments: Optional[int] = None
    distance: Optional[float] = None


def uniquely_geodesic_check(chart, p, r, n_pairs=12, seed=0, tie_tol=1e-4,
                            budget=None):
    """Every sampled pair in the closed ball has a unique minimizer.

    ``tie_tol`` is the length slack for counting near-tied segments as
    minimizers; widen it when r itself carries estimation error.
    """
    b = budget or Budget()
    chart0, x0, pairs = make_ball_pairs(chart, p, r, n_pairs=n_pairs,
                                        seed=seed)
    results = _pair_segments(chart0, pairs, 2.1 * r + 0.2, b, seed,
                             tie_tol=tie_tol)
    for pr in results:
        if pr.ok and not pr.unique:
            return UgCheckResult(False, (pr.pair.x, pr.pair.y),
                                 pr.n_segments, pr.distance)
    return UgCheckResult(True)


# ---------------------------------------------------------------------------
# sphere (s.c.c.) check


@dataclass
class SccCheckResult:
    status: str            # holds | fails | inconclusive
    min_eig: float
    direction: Optional[np.ndarray] = None


def scc_check(chart, p, r, n_dirs=128, seed=0, i_est=None, budget=None):
    """Positive definiteness of the index form at radius r over sampled
    directions (strong convexity condition for the geodesic sphere)."""
    b = budget or Budget()
    if r <= 0:
        raise ValueError("radius must be positive")
    if i_est is None:
        _, _, i_est, _ = injectivity_scan(chart, p, max(4.0 * r, 2.0),
                                          budget=b, seed=seed)
    if r >= i_est * (1.0 + 1e-9):
        raise RadiusBeyondInjectivity(
            f"radius {r:g} not below injectivity estimate {i_est:g}")
    chart0, x0, _ = canonical_base(chart, p)
    dirs = direction_set(chart0, x0, n_dirs, seed)
    _, lam, _ = batch_jacobi_scan(chart0, x0, dirs, float(r),
                                  h=min(0.005, r / 50))
    vals = lam[:, -1]
    k = int(np.argmin(vals))
    worst = float(vals[k])
    if worst > EPS_E:
        return SccCheckResult("holds", worst)
    if worst <= -EPS_E:
        return SccCheckResult("fails", worst, dirs[k])
    return SccCheckResult("inconclusive", worst, dirs[k])


# ---------------------------------------------------------------------------
# radii estimation


def _bisect_radius(pred, lo, hi, tol_r, max_iter):
    """Largest r in [lo, hi] with pred true; pred(lo) assumed true.
    Returns (last_true, first_false_or_None, n_iters)."""
    if pred(hi):
        return hi, None, 1
    a, bb = lo, hi
    it = 1
    while bb - a > tol_r and it < max_iter:
        mid = 0.5 * (a + bb)
        if pred(mid):
            a = mid
        else:
            bb = mid
        it += 1
    return a, bb, it


def radii_estimate(chart, p, bound=10.0, budget=None, seed=0):
    """All five radii at p, by directional scans plus ball bisection."""
    b = budget or Budget()
    p = chart.wrap(np.asarray(p, dtype=float))
    if not bool(chart.contains(p)):
        raise OutOfDomain(p, chart.label)
    if bound <= 0:
        raise ValueError("bound must be positive")
    scan, pm, i_val, short = injectivity_scan(chart, p, bound,
                                              budget=b, seed=seed)
    conj_min = float(scan.conj.min())
    hw_dir = 0.005

    def as_value(v, hw):
        if v >= bound * (1.0 - 1e-9):
            return RadiusValue(bound, hw, True, bound)
        return RadiusValue(float(v), hw, False, bound)

    i_est = as_value(min(i_val, bound), hw_dir)
    lc_val = min(float(scan.lc.min()), i_val, bound)
    slc_val = min(float(scan.slc.min()), i_val, bound)
    lc_est = as_value(lc_val, hw_dir)
    slc_est = as_value(slc_val, hw_dir)

    hi0 = min(i_val, lc_val, bound) * (1.0 - 1e-3)
    chart0, x0, pairs_cache = None, None, {}
    verdict_cache = {}
    evals = [0]
    witnesses = {}

    def verdict_at(r, mode):
        key = (mode, round(float(r), 10))
        if key not in verdict_cache:
            if evals[0] >= b.max_ball_evals:
                raise _BudgetStop()
            evals[0] += 1
            c0, x0_, pairs = make_ball_pairs(chart, p, r, n_pairs=b.n_pairs,
                                             seed=seed)
            verdict_cache[key] = _ball_verdict(c0, x0_, p, r, pm, pairs, b,
                                               seed, mode=mode)
        return verdict_cache[key]

    partial = False
    lo = min(b.bisect_tol, hi0 / 64.0)
    try:
        sc_true, sc_false, _ = _bisect_radius(
            lambda r: verdict_at(r, "strong").verdict == "strongly_convex",
            lo, hi0, b.bisect_tol, b.max_ball_evals)
        c_true, c_false, _ = _bisect_radius(
            lambda r: verdict_at(r, "proper").verdict != "not_convex",
            max(sc_true, lo), hi0, b.bisect_tol, b.max_ball_evals)
    except _BudgetStop:
        partial = True
        sc_true, sc_false = lo, None
        c_true, c_false = lo, None

    def ball_value(last_true, first_false, mode, name):
        if first_false is None:
            # convex all the way to the scan ceiling
            exceeds = hi0 >= bound * (1.0 - 2e-3)
            return RadiusValue(bound if exceeds else hi0,
                               max(0.01, b.bisect_tol), exceeds, bound)
        mid = 0.5 * (last_true + first_false)
        hw = max(0.5 * (first_false - last_true), b.bisect_tol, 0.003)
        wit = verdict_cache.get((mode, round(float(first_false), 10)))
        if wit is not None and wit.witness is not None:
            witnesses[name] = wit
        return RadiusValue(mid, hw, False, bound)

    sc_est = ball_value(sc_true, sc_false, "strong", "sc_g")
    c_est = ball_value(c_true, c_false, "proper", "c_g")

    # enforce the structural orderings the estimators guarantee
    if not c_est.exceeds_bound and not lc_est.exceeds_bound:
        c_est.value = min(c_est.value, lc_est.value)
    if not sc_est.exceeds_bound and not c_est.exceeds_bound:
        sc_est.value = min(sc_est.value, c_est.value)

    out = RadiiEstimate(point=p, i_g=i_est, lc_g=lc_est, slc_g=slc_est,
                        c_g=c_est, sc_g=sc_est, bound=float(bound),
                        witnesses=witnesses, partial=partial)
    # downstream condition checks reuse the scan and distance field
    out._internals = (scan, pm, i_val, short)
    return out


class _BudgetStop(Exception):
    pass
