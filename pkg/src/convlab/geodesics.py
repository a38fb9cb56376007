"""Geodesic paths, the exponential map, and minimizing segment search."""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil
from typing import Optional

import numpy as np

from .charts import ManifoldChart, eval_metric
from .errors import (LeftDomain, NoConvergence, OracleMismatch, OutOfDomain,
                     OutOfRange)
from .integrate import BatchFlow, eval_legs, integrate_switching
from .polar import (canonical_base, direction_set, gn_polish, graph_distance,
                    _line_length)


@dataclass
class GeodesicPath:
    """A geodesic as a piecewise dense ODE solution over chart legs.

    ``state(t)`` returns ``(chart, x, v)`` in whichever chart the
    trajectory occupied at parameter t.
    """

    chart: ManifoldChart
    p: np.ndarray
    v: np.ndarray
    t_final: float
    legs: list

    def _check(self, t):
        t = float(t)
        if not (-1e-12 <= t <= self.t_final + 1e-12):
            raise OutOfRange(f"t = {t:g} outside [0, {self.t_final:g}]")
        return min(max(t, 0.0), self.t_final)

    def state(self, t):
        t = self._check(t)
        chart, y = eval_legs(self.legs, t)
        n = chart.dimension
        return chart, y[:n], y[n:2 * n]

    def position(self, t):
        chart, x, _ = self.state(t)
        return chart, x

    def embed_at(self, t):
        chart, x, _ = self.state(t)
        return chart.embed(x)

    def speed(self, t):
        chart, x, v = self.state(t)
        return float(chart.norm(x, v))

    def speed_drift(self, k=32):
        """Largest deviation of the speed from its initial value."""
        s0 = self.speed(0.0)
        ts = np.linspace(0.0, self.t_final, k)
        return max(abs(self.speed(t) - s0) for t in ts)

    @property
    def length(self):
        return self.speed(0.0) * self.t_final


def shoot(chart, p, v, t_final, rtol=1e-9, atol=1e-9):
    """Geodesic with gamma(0) = p, gamma'(0) = v on [0, t_final]."""
    p = chart.wrap(np.asarray(p, dtype=float))
    if not bool(chart.contains(p)):
        raise OutOfDomain(p, chart.label)
    v = np.asarray(v, dtype=float)
    if float(chart.norm(p, v)) <= 0.0:
        raise ValueError("initial velocity must be nonzero")
    if t_final <= 0.0:
        raise OutOfRange("t_final must be positive")
    n = chart.dimension

    def rhs_for(ch):
        def rhs(t, y):
            x, vel = y[:n], y[n:]
            gam = ch.christoffels(x)
            acc = -np.einsum("kij,i,j->k", gam, vel, vel)
            return np.concatenate([vel, acc])
        return rhs

    def transform(jac, y):
        out = np.array(y, dtype=float)
        out[n:] = jac @ y[n:]
        return out

    y0 = np.concatenate([p, v])
    legs, exit_t = integrate_switching(chart, y0, float(t_final), rhs_for,
                                       transform, rtol=rtol, atol=atol)
    if exit_t is not None:
        partial = GeodesicPath(chart, p, v, exit_t, legs)
        raise LeftDomain(exit_t, partial)
    return GeodesicPath(chart, p, v, float(t_final), legs)


def exp_map(chart, p, v, rtol=1e-9, atol=1e-9):
    """Endpoint of the geodesic t -> exp_p(t v) at t = 1.

    Returns ``(chart, x)``; the chart may be the partner chart when the
    trajectory ends near the original chart's singular set.
    """
    p = chart.wrap(np.asarray(p, dtype=float))
    if not bool(chart.contains(p)):
        raise OutOfDomain(p, chart.label)
    v = np.asarray(v, dtype=float)
    if float(chart.norm(p, v)) == 0.0:
        return chart, p
    path = shoot(chart, p, v, 1.0, rtol=rtol, atol=atol)
    return path.position(1.0)


# ---------------------------------------------------------------------------
# minimizing segments


@dataclass
class SegmentSet:
    """All minimizing geodesic segments found between two points.

    ``base_chart``/``base_point`` fix the chart in which the stored
    initial velocities live (it may be the partner of the query chart).
    ``sample_embeds[i]`` holds embedding points along segment i at
    arc-length parameters ``sample_ts[i]``, used by containment checks.
    """

    chart: ManifoldChart
    p: np.ndarray
    q: np.ndarray
    distance: float
    unique: bool
    base_chart: ManifoldChart
    base_point: np.ndarray
    velocities: np.ndarray          # (k, n) initial velocities, length = distance
    lengths: np.ndarray
    sample_ts: list = field(default_factory=list)
    sample_embeds: list = field(default_factory=list)
    oracle_distance: Optional[float] = None
    _paths: Optional[list] = None

    @property
    def n_segments(self):
        return len(self.velocities)

    @property
    def segments(self):
        """Unit-speed geodesic paths from p to q, materialized lazily."""
        if self._paths is None:
            self._paths = [
                shoot(self.base_chart, self.base_point, u / ell, ell)
                for u, ell in zip(self.velocities, self.lengths)
            ]
        return self._paths


def minimizing_segments(chart, p, q, *, bound=20.0, n_starts=64, tol=1e-6,
                        cluster_angle=0.05, use_oracle=True, seed=0,
                        h=0.01, fan_h=0.02, length_hint=None,
                        oracle_rel_tol=0.10):
    """Find every minimizing geodesic segment from p to q.

    Multi-start shooting: a fan of unit-speed geodesics out of p
    proposes candidate directions wherever a trajectory passes close to
    q, Gauss-Newton polishes each candidate until the endpoint matches
    q, and converged solutions are clustered by initial direction.
    When ``use_oracle`` is set, the result is cross-checked against an
    independent grid-graph distance and ``OracleMismatch`` is raised on
    disagreement beyond ``oracle_rel_tol``.
    """
    p = chart.wrap(np.asarray(p, dtype=float))
    q = chart.wrap(np.asarray(q, dtype=float))
    for x in (p, q):
        if not bool(chart.contains(x)):
            raise OutOfDomain(x, chart.label)
    q_embed = chart.embed(q)
    p_embed = chart.embed(p)
    if np.linalg.norm(p_embed - q_embed) < 1e-10:
        n = chart.dimension
        return SegmentSet(chart, p, q, 0.0, True, chart, p,
                          np.zeros((0, n)), np.zeros(0))
    chart0, x0, jac_in = canonical_base(chart, p)
    n = chart0.dimension
    g0 = eval_metric(chart0, x0)

    oracle_d = oracle_dir = None
    if use_oracle:
        oracle_d, oracle_dir = graph_distance(chart, p, q, with_direction=True)
        if oracle_dir is not None and jac_in is not None:
            oracle_dir = jac_in @ oracle_dir
            nrm = float(np.sqrt(oracle_dir @ g0 @ oracle_dir))
            oracle_dir = oracle_dir / nrm if nrm > 0 else None

    if length_hint is not None:
        fan_len = float(length_hint)
    else:
        line_len = _line_length(chart, p, q, n_quad=33)
        fan_len = 1.06 * line_len + 0.05
        if oracle_d is not None:
            fan_len = min(fan_len, 1.3 * oracle_d + 0.1)
    fan_len = min(fan_len, float(bound))

    # fan of unit-speed rays out of p; local minima of the distance to q
    # along the fan seed the shooting candidates
    dirs = direction_set(chart0, x0, n_starts, seed)
    flow = BatchFlow(chart0)
    n_steps = max(8, ceil(fan_len / fan_h))
    _, _, _, rec = flow.run(np.broadcast_to(x0, dirs.shape), dirs, fan_len,
                            fan_len / n_steps, record_stride=1)
    dist = np.linalg.norm(rec["e"] - q_embed, axis=-1)      # (K, S)
    j_min = np.argmin(dist, axis=1)
    m_min = dist[np.arange(n_starts), j_min]
    if chart0.dimension == 2:
        local = (m_min <= np.roll(m_min, 1)) & (m_min <= np.roll(m_min, -1))
    else:
        local = np.ones(n_starts, dtype=bool)
    thresh = max(3.0 * float(m_min.min()),
                 1.2 * fan_len * 2.0 * np.pi / n_starts)
    cand = np.flatnonzero(local & (m_min <= thresh))
    cand = cand[np.argsort(m_min[cand])][:10]
    if cand.size == 0:
        cand = np.array([int(np.argmin(m_min))])
    u_init = np.maximum(rec["t"][j_min[cand], None], 1e-3) * dirs[cand]
    if oracle_dir is not None and oracle_d is not None and oracle_d > 0:
        u_init = np.vstack([u_init, oracle_d * oracle_dir])

    u_fit, res = gn_polish(chart0, x0, u_init, q_embed, h=h, iters=14)
    lengths = np.sqrt(np.einsum("ci,ij,cj->c", u_fit, g0, u_fit))
    conv = (res < 1e-7) & (lengths > 1e-9)
    if not conv.any():
        raise NoConvergence(
            f"no shooting start reached the target (best residual "
            f"{res.min():.3g})")
    d = float(lengths[conv].min())
    keep = conv & (lengths <= d + max(tol, 1e-6))

    # cluster by initial direction (metric angle at p)
    reps, rep_len = [], []
    order = np.flatnonzero(keep)[np.argsort(lengths[keep])]
    for c in order:
        w = u_fit[c] / lengths[c]
        novel = True
        for u_rep, ell_rep in zip(reps, rep_len):
            cosang = float(w @ g0 @ (u_rep / ell_rep))
            if np.arccos(np.clip(cosang, -1.0, 1.0)) < cluster_angle:
                novel = False
                break
        if novel:
            reps.append(u_fit[c])
            rep_len.append(float(lengths[c]))
    reps = np.array(reps)
    rep_len = np.array(rep_len)

    if oracle_d is not None:
        if abs(d - oracle_d) > oracle_rel_tol * max(d, oracle_d) + 0.01:
            raise OracleMismatch(d, oracle_d)

    # sampled embedding points along each representative segment
    sample_ts, sample_embeds = [], []
    if len(reps):
        n_int = max(8, ceil(rep_len.max() / h))
        stride = max(1, n_int // 200)
        _, _, _, rec2 = flow.run(np.broadcast_to(x0, reps.shape), reps, 1.0,
                                 1.0 / n_int, record_stride=stride)
        end_err = np.linalg.norm(rec2["e"][:, -1] - q_embed, axis=-1)
        if end_err.max() > 1e-6:
            raise NoConvergence(
                f"polished segment endpoint misses target by "
                f"{end_err.max():.3g}")
        for i in range(len(reps)):
            sample_ts.append(rec2["t"] * rep_len[i])
            sample_embeds.append(rec2["e"][i])

    return SegmentSet(chart, p, q, d, len(reps) == 1, chart0, x0,
                      reps, rep_len, sample_ts, sample_embeds, oracle_d)
