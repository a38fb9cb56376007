"""Jacobi fields, index forms, and conjugate / breakdown radii.

A field J along a unit-speed geodesic gamma satisfies the Jacobi
equation D_t^2 J + R(J, gamma') gamma' = 0 with J(0) = 0 and covariant
derivative D_t J(0) = w perpendicular to gamma'(0).  In chart
coordinates the state (J, W = D_t J) evolves as

    J' = W - A J,   W' = -A W - R(J, v) v,   A = Gamma(v, .)

co-integrated with the geodesic itself.  The index form of J at radius
r reduces to the boundary term <D_t J(r), J(r)>, and positivity of that
quantity over all initial derivatives w (equivalently, positive
definiteness of the matrix M_kl(r) = <W_k(r), J_l(r)> over a basis of
fields) characterizes strong convexity of the geodesic ball of radius
r in the corresponding direction.

Conjugate points are located as sign changes of the signed volume
D(t) = sqrt(det g) det[J_1, ..., J_{n-1}, gamma'], which vanishes
exactly where the fields become linearly dependent on gamma'.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import ceil

import numpy as np
from scipy.optimize import brentq

from .charts import eval_metric, orth_complement_basis
from .errors import NonFiniteState, OutOfRange
from .integrate import eval_legs, integrate_switching
from .polar import canonical_base

INF = float("inf")


class JacobiSweep:
    """Geodesic plus k Jacobi fields as one dense ODE solution.

    ``v`` and the field initializers live in the tangent space at p in
    the given chart; all are moved to the working chart internally.
    """

    def __init__(self, chart, p, v, t_max, fields=None, rtol=1e-9, atol=1e-9):
        chart0, x0, jac = canonical_base(chart, p)
        v = np.asarray(v, dtype=float)
        if jac is not None:
            v = jac @ v
        if fields is None:
            fields = orth_complement_basis(chart0, x0, v)
        else:
            fields = np.array(fields, dtype=float, ndmin=2)
            if jac is not None:
                fields = fields @ jac.T
        self.chart0 = chart0
        self.p0 = x0
        self.v0 = v
        self.w0 = fields
        self.k = fields.shape[0]
        self.t_max = float(t_max)
        n = chart0.dimension
        self.n = n
        k = self.k

        def rhs_for(ch):
            def rhs(t, y):
                x, vel = y[:n], y[n:2 * n]
                jf = y[2 * n:2 * n + k * n].reshape(k, n)
                wf = y[2 * n + k * n:].reshape(k, n)
                gam = ch.christoffels(x)
                a = np.einsum("cib,i->cb", gam, vel)       # A^c_b = Gamma^c_ib v^i
                acc = -a @ vel
                jp = wf - jf @ a.T
                rr = ch.curvature(x[None], vel[None], jf)
                wp = -wf @ a.T - rr
                return np.concatenate([vel, acc, jp.ravel(), wp.ravel()])
            return rhs

        def transform(jc, y):
            out = np.array(y, dtype=float)
            out[n:2 * n] = jc @ y[n:2 * n]
            for blk in range(2 * k):
                s = 2 * n + blk * n
                out[s:s + n] = jc @ y[s:s + n]
            return out

        y0 = np.concatenate([x0, v, np.zeros(k * n), fields.ravel()])
        self.legs, self.exit_t = integrate_switching(
            chart0, y0, self.t_max, rhs_for, transform, rtol=rtol, atol=atol)
        if self.exit_t is not None:
            self.t_max = float(self.exit_t)

    def state(self, t):
        t = float(t)
        if not (-1e-12 <= t <= self.t_max + 1e-12):
            raise OutOfRange(f"t = {t:g} outside [0, {self.t_max:g}]")
        chart, y = eval_legs(self.legs, min(max(t, 0.0), self.t_max))
        n, k = self.n, self.k
        x, v = y[:n], y[n:2 * n]
        jf = y[2 * n:2 * n + k * n].reshape(k, n)
        wf = y[2 * n + k * n:].reshape(k, n)
        return chart, x, v, jf, wf

    def field(self, i):
        return JacobiField(self, i)

    # -- index form -------------------------------------------------------

    def index_matrix_at(self, t):
        """M_kl(t) = <W_k(t), J_l(t)>_g, symmetrized."""
        chart, x, _, jf, wf = self.state(t)
        g = chart.metric(x)
        m = np.einsum("ki,ij,lj->kl", wf, g, jf)
        return 0.5 * (m + m.T)

    def min_eig(self, t):
        m = self.index_matrix_at(t)
        if m.shape == (1, 1):
            return float(m[0, 0])
        return float(np.linalg.eigvalsh(m)[0])

    def signed_volume(self, t):
        """sqrt(det g) det[J_1, ..., J_k, gamma'] at parameter t."""
        chart, x, v, jf, _ = self.state(t)
        g = chart.metric(x)
        mat = np.empty((self.n, self.n))
        mat[:, :self.k] = jf.T
        mat[:, self.k:] = v[:, None]
        return float(np.sqrt(max(np.linalg.det(g), 0.0)) * np.linalg.det(mat))


@dataclass
class JacobiField:
    """One Jacobi field of a sweep: J(0) = 0, D_t J(0) = w0."""

    sweep: JacobiSweep
    index: int

    @property
    def w0(self):
        return self.sweep.w0[self.index]

    def value(self, t):
        chart, _, _, jf, _ = self.sweep.state(t)
        return chart, jf[self.index]

    def derivative(self, t):
        """Covariant derivative D_t J as chart components."""
        chart, _, _, _, wf = self.sweep.state(t)
        return chart, wf[self.index]

    def index_value(self, t):
        """Boundary form <D_t J(t), J(t)>_g."""
        chart, x, _, jf, wf = self.sweep.state(t)
        g = chart.metric(x)
        return float(wf[self.index] @ g @ jf[self.index])


@dataclass
class IndexFormMatrix:
    """Index form at radius r over a basis of perpendicular fields."""

    matrix: np.ndarray
    basis: np.ndarray
    r: float

    @property
    def min_eig(self):
        return float(np.linalg.eigvalsh(self.matrix)[0])

    @property
    def positive_definite(self):
        return self.min_eig > 0.0


def propagate_jacobi(chart, p, v, w0, t_max, rtol=1e-9, atol=1e-9):
    """Jacobi field along the geodesic from p with velocity v."""
    sweep = JacobiSweep(chart, p, v, t_max, fields=[np.asarray(w0, float)],
                        rtol=rtol, atol=atol)
    return sweep.field(0)


def index_form_value(field: JacobiField, r) -> float:
    return field.index_value(r)


def g_eval(chart, p, v, w, r, rtol=1e-9, atol=1e-9) -> float:
    """Index form of the Jacobi field with initial derivative w at r.

    The field is propagated with w normalized and the result rescaled,
    so exact quadratic homogeneity in w holds by construction.
    """
    chart0, x0, jac = canonical_base(chart, p)
    w = np.asarray(w, dtype=float)
    v0 = np.asarray(v, dtype=float)
    if jac is not None:
        w = jac @ w
        v0 = jac @ v0
    g = eval_metric(chart0, x0)
    nw = float(np.sqrt(w @ g @ w))
    if nw == 0.0:
        return 0.0
    field = propagate_jacobi(chart0, x0, v0, w / nw, r, rtol=rtol, atol=atol)
    return nw**2 * field.index_value(r)


def index_matrix(chart, p, v, r, rtol=1e-9, atol=1e-9) -> IndexFormMatrix:
    """Index form matrix over a perpendicular orthonormal basis at p."""
    sweep = JacobiSweep(chart, p, v, r, rtol=rtol, atol=atol)
    return IndexFormMatrix(sweep.index_matrix_at(r), sweep.w0, float(r))


# ---------------------------------------------------------------------------
# first-root scans


def _first_root(fn, t_lo, t_hi, n_scan, tol):
    """First sign change of fn on [t_lo, t_hi], refined by brentq."""
    ts = np.linspace(t_lo, t_hi, n_scan)
    prev_t, prev_f = ts[0], fn(ts[0])
    for t in ts[1:]:
        f = fn(t)
        if prev_f > 0.0 >= f:
            return float(brentq(fn, prev_t, t, xtol=tol))
        prev_t, prev_f = t, f
    return None


def conjugate_radius(chart, p, v, t_max, tol=1e-8, rtol=1e-10, atol=1e-10):
    """Parameter of the first conjugate point along t -> exp_p(t v),
    or inf if there is none before t_max."""
    sweep = JacobiSweep(chart, p, v, t_max, rtol=rtol, atol=atol)
    t_skip = min(1e-3, 0.01 * sweep.t_max)
    sign = 1.0 if sweep.signed_volume(t_skip) >= 0 else -1.0
    n_scan = max(64, ceil(sweep.t_max / 0.02))
    root = _first_root(lambda t: sign * sweep.signed_volume(t),
                       t_skip, sweep.t_max, n_scan, tol)
    return INF if root is None else root


def scc_breakdown_radius(chart, p, v, t_max, tol=1e-8, rtol=1e-10,
                         atol=1e-10):
    """First radius where the index form loses positive definiteness
    along the given direction, or inf if it stays positive to t_max."""
    sweep = JacobiSweep(chart, p, v, t_max, rtol=rtol, atol=atol)
    t_skip = min(1e-3, 0.01 * sweep.t_max)
    n_scan = max(64, ceil(sweep.t_max / 0.02))
    root = _first_root(sweep.min_eig, t_skip, sweep.t_max, n_scan, tol)
    return INF if root is None else root


def wronskian_defect(chart, p, v, w1, w2, ts, rtol=1e-11, atol=1e-11):
    """max over ts of |<D_tJ, K> - <J, D_tK>| for the Jacobi fields
    J, K with J(0) = K(0) = 0 and D_tJ(0) = w1, D_tK(0) = w2.

    The defect vanishes identically for exact Jacobi fields; its size
    measures the integrator's symplectic consistency.
    """
    ts = np.atleast_1d(np.asarray(ts, dtype=float))
    sweep = JacobiSweep(chart, p, v, float(ts.max()), fields=[w1, w2],
                        rtol=rtol, atol=atol)
    worst = 0.0
    for t in ts:
        ch, x, _, jf, wf = sweep.state(t)
        g = ch.metric(x)
        worst = max(worst, abs(float(wf[0] @ g @ jf[1] - jf[0] @ g @ wf[1])))
    return worst


# ---------------------------------------------------------------------------
# batched scan over many directions (fixed-step RK4)


class BatchJacobiFlow:
    """Batched geodesic + Jacobi system over a chart pair."""

    def __init__(self, chart):
        self.charts = (chart, chart.partner)
        self.switching = (chart.margin_fn is not None
                          and chart.partner is not None)
        from .integrate import SWITCH_MARGIN, transition_jacobian
        self._margin = SWITCH_MARGIN
        self._tjac = transition_jacobian

    def _rhs(self, cid, x, v, jf, wf):
        xp = np.empty_like(x)
        vp = np.empty_like(v)
        jp = np.empty_like(jf)
        wp = np.empty_like(wf)
        for b in (0, 1):
            m = cid == b if self.switching else slice(None)
            if self.switching and not np.any(cid == b):
                continue
            ch = self.charts[b]
            xm, vm, jm, wm = x[m], v[m], jf[m], wf[m]
            gam = ch.christoffels(xm)
            a = np.einsum("bcie,bi->bce", gam, vm)   # A^c_e = Gamma^c_ie v^i
            xp[m] = vm
            vp[m] = -np.einsum("bce,be->bc", a, vm)
            jp[m] = wm - np.einsum("bce,bke->bkc", a, jm)
            rr = ch.curvature(xm[:, None, :], vm[:, None, :], jm)
            wp[m] = -np.einsum("bce,bke->bkc", a, wm) - rr
            if not self.switching:
                break
        return xp, vp, jp, wp

    def _switch(self, cid, x, v, jf, wf):
        if not self.switching:
            return
        for b in (0, 1):
            ch = self.charts[b]
            m = cid == b
            if not m.any():
                continue
            mg = ch.margin_fn(x[m])
            hop = mg < self._margin
            if not hop.any():
                continue
            idx = np.flatnonzero(m)[hop]
            jc = self._tjac(ch, x[idx])
            x[idx] = ch.to_partner(x[idx])
            v[idx] = np.einsum("bij,bj->bi", jc, v[idx])
            jf[idx] = np.einsum("bij,bkj->bki", jc, jf[idx])
            wf[idx] = np.einsum("bij,bkj->bki", jc, wf[idx])
            cid[idx] = 1 - b

    def step(self, cid, x, v, jf, wf, h):
        k1 = self._rhs(cid, x, v, jf, wf)
        s2 = [a + 0.5 * h * d for a, d in zip((x, v, jf, wf), k1)]
        k2 = self._rhs(cid, *s2)
        s3 = [a + 0.5 * h * d for a, d in zip((x, v, jf, wf), k2)]
        k3 = self._rhs(cid, *s3)
        s4 = [a + h * d for a, d in zip((x, v, jf, wf), k3)]
        k4 = self._rhs(cid, *s4)
        out = []
        for a, d1, d2, d3, d4 in zip((x, v, jf, wf), k1, k2, k3, k4):
            out.append(a + (h / 6.0) * (d1 + 2 * d2 + 2 * d3 + d4))
        return out


def batch_jacobi_scan(chart, p, dirs, t_max, h=0.005, stop_when_crossed=False):
    """Scan min index-form eigenvalue and signed volume along many
    directions at once.

    Returns ``(ts, lam, vol)`` with ``lam[b, s]`` the smallest
    eigenvalue of the index matrix and ``vol[b, s]`` the signed volume
    for direction b at parameter ``ts[s]`` (volume sign normalized to
    start positive).  With ``stop_when_crossed`` the scan ends early
    once every direction has seen both a volume zero and an eigenvalue
    crossing, truncating the returned arrays.
    """
    chart0, x0, jac = canonical_base(chart, p)
    dirs = np.array(dirs, dtype=float, ndmin=2)
    if jac is not None:
        dirs = dirs @ jac.T
    nb, n = dirs.shape
    k = n - 1
    bases = np.stack([orth_complement_basis(chart0, x0, d) for d in dirs])
    flow = BatchJacobiFlow(chart0)
    x = np.broadcast_to(x0, (nb, n)).copy()
    v = dirs.copy()
    jf = np.zeros((nb, k, n))
    wf = bases.copy()
    cid = np.zeros(nb, dtype=np.int8)
    flow._switch(cid, x, v, jf, wf)
    n_steps = max(8, ceil(t_max / h))
    hh = t_max / n_steps
    ts = np.arange(n_steps + 1) * hh
    lam = np.empty((nb, n_steps + 1))
    vol = np.empty((nb, n_steps + 1))
    _scan_record(flow, cid, x, v, jf, wf, lam, vol, 0)
    s_last = n_steps
    for s in range(1, n_steps + 1):
        x, v, jf, wf = flow.step(cid, x, v, jf, wf, hh)
        flow._switch(cid, x, v, jf, wf)
        _scan_record(flow, cid, x, v, jf, wf, lam, vol, s)
        if stop_when_crossed and s % 64 == 0 and ts[s] > 0.1:
            sgn0 = np.sign(vol[:, 1])
            sgn0[sgn0 == 0] = 1.0
            crossed = ((vol[:, 1:s + 1] * sgn0[:, None] <= 0).any(axis=1)
                       & (lam[:, 1:s + 1] <= -1e-6).any(axis=1))
            if crossed.all():
                s_last = s
                break
    ts = ts[:s_last + 1]
    lam = lam[:, :s_last + 1]
    vol = vol[:, :s_last + 1]
    if not (np.isfinite(lam).all() and np.isfinite(vol).all()):
        raise NonFiniteState("batched Jacobi scan blew up")
    # normalize the volume sign from the first post-start sample
    sgn = np.sign(vol[:, 1])
    sgn[sgn == 0] = 1.0
    vol *= sgn[:, None]
    return ts, lam, vol


def _scan_record(flow, cid, x, v, jf, wf, lam, vol, s):
    nb, k, n = jf.shape
    g = np.empty((nb, n, n))
    detg = np.empty(nb)
    for b in (0, 1):
        if flow.switching:
            m = cid == b
            if not m.any():
                continue
            g[m] = flow.charts[b].metric(x[m])
        else:
            g[:] = flow.charts[0].metric(x)
    detg = np.linalg.det(g)
    m_mat = np.einsum("bki,bij,blj->bkl", wf, g, jf)
    m_mat = 0.5 * (m_mat + np.swapaxes(m_mat, 1, 2))
    if k == 1:
        lam[:, s] = m_mat[:, 0, 0]
    else:
        lam[:, s] = np.linalg.eigvalsh(m_mat)[:, 0]
    mat = np.concatenate([np.swapaxes(jf, 1, 2), v[:, :, None]], axis=2)
    vol[:, s] = np.sqrt(np.maximum(detg, 0.0)) * np.linalg.det(mat)


def first_crossing(ts, vals, t_skip=1e-3):
    """Per-row parameter of the first downward zero crossing of vals,
    quadratically interpolated; inf where there is none."""
    vals = np.asarray(vals)
    nb, ns = vals.shape
    out = np.full(nb, INF)
    active = ts >= t_skip
    for b in range(nb):
        row = vals[b]
        neg = np.flatnonzero(active & (row <= 0.0))
        if neg.size == 0:
            continue
        i = neg[0]
        if i == 0:
            out[b] = ts[0]
            continue
        t0, t1 = ts[i - 1], ts[i]
        f0, f1 = row[i - 1], row[i]
        if f0 == f1:
            out[b] = t1
        else:
            out[b] = t0 + (t1 - t0) * f0 / (f0 - f1)
    return out
