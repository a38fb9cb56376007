"""Geodesic integration engines.

Two engines share the same chart conventions:

* a batched fixed-step RK4 used by the multi-start shooting solver and
  the polar distance fields, where many trajectories advance together;
* scipy's adaptive solvers (via ``solve_ivp``) for single high-accuracy
  dense trajectories (public ``shoot`` and the Jacobi systems).

Both hop between the two charts of a linked pair when a trajectory
comes within ``SWITCH_MARGIN`` of the active chart's singular set.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import solve_ivp

from .errors import NonFiniteState

SWITCH_MARGIN = 0.2
# hop only improves the margin by at least this much (hysteresis)
SWITCH_GAIN = 0.05


def geodesic_accel(chart, x, v):
    gam = chart.christoffels(x)
    return -np.einsum("...kij,...i,...j->...k", gam, v, v)


def transition_jacobian(chart, x, h=1e-6):
    """Jacobian of ``chart.to_partner`` at points x, batched.

    Differences in periodic output coordinates are unwrapped so the
    atan2 branch cut does not corrupt the derivative.
    """
    x = np.asarray(x, dtype=float)
    n = chart.dimension
    partner = chart.partner
    cols = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        d = chart.to_partner(x + e) - chart.to_partner(x - e)
        for j, p in enumerate(partner.periodicity):
            if p is not None:
                d[..., j] = (d[..., j] + p / 2) % p - p / 2
        cols.append(d / (2 * h))
    return np.stack(cols, axis=-1)  # (..., out, in)


def pick_chart(chart, x):
    """Start from whichever chart of the pair has the larger margin."""
    if chart.margin_fn is None or chart.partner is None:
        return chart, np.asarray(x, dtype=float)
    m = float(chart.margin_fn(np.asarray(x, dtype=float)))
    if m >= SWITCH_MARGIN:
        return chart, np.asarray(x, dtype=float)
    xo = chart.to_partner(np.asarray(x, dtype=float))
    mo = float(chart.partner.margin_fn(xo))
    if mo > m + SWITCH_GAIN:
        return chart.partner, xo
    return chart, np.asarray(x, dtype=float)


# ---------------------------------------------------------------------------
# batched fixed-step RK4


class BatchFlow:
    """Batched geodesic flow x'' = -Gamma(x) x' x' over a chart pair."""

    def __init__(self, chart):
        self.charts = (chart, chart.partner)
        self.switching = chart.margin_fn is not None and chart.partner is not None

    def _accel(self, cid, x, v):
        if not self.switching or not cid.any():
            return geodesic_accel(self.charts[0], x, v)
        acc = np.empty_like(v)
        for b in (0, 1):
            m = cid == b
            if m.any():
                acc[m] = geodesic_accel(self.charts[b], x[m], v[m])
        return acc

    def _switch(self, cid, x, v, extra=None):
        if not self.switching:
            return
        for b in (0, 1):
            ch = self.charts[b]
            m = cid == b
            if not m.any():
                continue
            mg = ch.margin_fn(x[m])
            hop = mg < SWITCH_MARGIN
            if not hop.any():
                continue
            idx = np.flatnonzero(m)[hop]
            jac = transition_jacobian(ch, x[idx])
            x[idx] = ch.to_partner(x[idx])
            v[idx] = np.einsum("bij,bj->bi", jac, v[idx])
            if extra is not None:
                extra[idx] = np.einsum("bij,b...j->b...i", jac, extra[idx])
            cid[idx] = 1 - b

    def step(self, cid, x, v, h):
        k1x, k1v = v, self._accel(cid, x, v)
        k2x = v + 0.5 * h * k1v
        k2v = self._accel(cid, x + 0.5 * h * k1x, k2x)
        k3x = v + 0.5 * h * k2v
        k3v = self._accel(cid, x + 0.5 * h * k2x, k3x)
        k4x = v + h * k3v
        k4v = self._accel(cid, x + h * k3x, k4x)
        x = x + (h / 6.0) * (k1x + 2 * k2x + 2 * k3x + k4x)
        v = v + (h / 6.0) * (k1v + 2 * k2v + 2 * k3v + k4v)
        return x, v

    def run(self, x0, v0, t_final, h_target, record_stride=0, cid0=None):
        """Advance all trajectories to ``t_final``.

        Returns ``(cid, x, v, record)`` where ``record`` is None unless
        ``record_stride`` > 0, in which case it is a dict with sample
        times and per-sample chart ids, states and embedding points.
        """
        x = np.array(x0, dtype=float, ndmin=2)
        v = np.array(v0, dtype=float, ndmin=2)
        nb = x.shape[0]
        cid = (np.zeros(nb, dtype=np.int8) if cid0 is None
               else np.array(cid0, dtype=np.int8))
        self._switch(cid, x, v)
        n_steps = max(1, int(np.ceil(t_final / max(h_target, 1e-12))))
        h = t_final / n_steps
        rec = None
        if record_stride:
            idxs = list(range(0, n_steps + 1, record_stride))
            if idxs[-1] != n_steps:
                idxs.append(n_steps)
            rec = {"t": np.array(idxs, dtype=float) * h,
                   "cid": [], "x": [], "v": [], "e": []}
            rec_set = set(idxs)
            self._record(rec, cid, x, v)
        for s in range(1, n_steps + 1):
            x, v = self.step(cid, x, v, h)
            self._switch(cid, x, v)
            if rec is not None and s in rec_set:
                self._record(rec, cid, x, v)
        if not (np.isfinite(x).all() and np.isfinite(v).all()):
            raise NonFiniteState("batched geodesic flow blew up")
        if rec is not None:
            for key in ("cid", "x", "v", "e"):
                rec[key] = np.stack(rec[key], axis=1)  # (B, S, ...)
        return cid, x, v, rec

    def _record(self, rec, cid, x, v):
        rec["cid"].append(cid.copy())
        rec["x"].append(x.copy())
        rec["v"].append(v.copy())
        e = np.empty((x.shape[0], self.charts[0].embed_dim))
        if self.switching and (cid == 1).any():
            for b in (0, 1):
                m = cid == b
                if m.any():
                    e[m] = self.charts[b].embed(x[m])
        else:
            e[:] = self.charts[0].embed(x)
        rec["e"].append(e)

    def embed_state(self, cid, x):
        e = np.empty((x.shape[0], self.charts[0].embed_dim))
        for b in (0, 1):
            m = cid == b
            if m.any():
                e[m] = self.charts[b].embed(x[m])
        return e


# ---------------------------------------------------------------------------
# adaptive legs with chart switching (scipy)


def integrate_switching(chart, y0, t_final, rhs_for, transform, rtol, atol,
                        max_legs=64, method="RK45"):
    """Integrate ``y' = rhs_for(chart)(t, y)`` with dense output, hopping
    charts when the base point nears the singular set.

    ``y[:n]`` must be the base point.  ``transform(jac, y)`` maps the
    full state through a chart transition with Jacobian ``jac``;
    coordinates ``y[:n]`` are replaced by ``to_partner`` separately.

    Returns ``(legs, exit_t)``; ``legs`` is a list of
    ``(chart, t0, t1, OdeSolution)`` and ``exit_t`` is None unless the
    trajectory left the chart domain.
    """
    n = chart.dimension
    cur, x0 = pick_chart(chart, np.asarray(y0[:n], dtype=float))
    if cur is not chart:
        jac = transition_jacobian(chart, np.asarray(y0[:n], float)[None])[0]
        y0 = transform(jac, np.array(y0, dtype=float))
        y0[:n] = x0
    y = np.array(y0, dtype=float)
    t = 0.0
    legs = []
    exit_t = None
    for _ in range(max_legs):
        events = _leg_events(cur, n)
        sol = solve_ivp(rhs_for(cur), (t, t_final), y, method=method,
                        dense_output=True, rtol=rtol, atol=atol,
                        events=events)
        if not sol.success and sol.status != 1:
            raise NonFiniteState(f"integrator failed: {sol.message}")
        t_end = sol.t[-1]
        legs.append((cur, t, t_end, sol.sol))
        if sol.status != 1:  # reached t_final
            break
        # which terminal event fired?
        has_margin = cur.margin_fn is not None and cur.partner is not None
        hit_margin = has_margin and sol.t_events[0].size > 0
        if hit_margin:
            y = sol.y[:, -1].copy()
            jac = transition_jacobian(cur, y[:n][None])[0]
            xo = cur.to_partner(y[:n])
            y = transform(jac, y)
            y[:n] = xo
            cur = cur.partner
            t = t_end
        else:
            exit_t = t_end
            break
    else:
        raise NonFiniteState("too many chart transitions")
    if not np.isfinite(legs[-1][3](min(t_final, legs[-1][2]))).all():
        raise NonFiniteState("non-finite state in dense solution")
    return legs, exit_t


def _leg_events(chart, n):
    events = []
    if chart.margin_fn is not None and chart.partner is not None:
        def margin_event(t, y, _ch=chart):
            return float(_ch.margin_fn(y[:n])) - SWITCH_MARGIN
        margin_event.terminal = True
        margin_event.direction = -1
        events.append(margin_event)
    bounds = [(i, lo, hi) for i, (lo, hi) in enumerate(chart.domain)
              if chart.periodicity[i] is None and
              (np.isfinite(lo) or np.isfinite(hi))]
    # charts with a margin function delegate their finite bounds to the
    # margin event; everything else gets an explicit exit event
    if bounds and chart.margin_fn is None:
        def exit_event(t, y, _b=bounds):
            vals = []
            for i, lo, hi in _b:
                if np.isfinite(lo):
                    vals.append(y[i] - lo)
                if np.isfinite(hi):
                    vals.append(hi - y[i])
            return min(vals)
        exit_event.terminal = True
        exit_event.direction = -1
        events.append(exit_event)
    return events


def eval_legs(legs, t):
    """Evaluate a dense leg list at parameter t, returning (chart, y)."""
    t = float(t)
    for chart, t0, t1, sol in legs:
        if t <= t1:
            return chart, sol(min(max(t, t0), t1))
    chart, t0, t1, sol = legs[-1]
    return chart, sol(t1)
