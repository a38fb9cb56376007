"""Distance fields around a point and a grid-graph distance oracle.

``PolarMap`` shoots a fan of unit-speed geodesics out of a base point
and interpolates a distance estimate at arbitrary query points from the
recorded trajectories.  The estimate is a screening tool; queries that
need high accuracy are polished with Gauss-Newton shooting
(``gn_polish``), which refines an initial velocity until the geodesic
endpoint matches the target in the embedding.

``graph_distance`` is an independent cross-check: Dijkstra on a metric
grid graph.  It systematically overestimates by a few percent (edge
directions are quantized) but cannot miss a shorter homotopy class the
shooting search failed to find.
"""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from math import ceil, gcd

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra
from scipy.spatial import cKDTree

from .charts import eval_metric, gram_basis
from .errors import NonFiniteState
from .integrate import BatchFlow, pick_chart, transition_jacobian


def canonical_base(chart, p):
    """Pick the chart of the pair best suited to work around ``p``.

    Returns ``(chart0, x0, jac)``; ``jac`` maps tangent components at
    ``p`` from ``chart`` into ``chart0`` (None when no hop happened).
    """
    p = chart.wrap(np.asarray(p, dtype=float))
    chart0, x0 = pick_chart(chart, p)
    if chart0 is chart:
        return chart0, x0, None
    jac = transition_jacobian(chart, p[None])[0]
    return chart0, x0, jac


def direction_set(chart, x, k, seed=0):
    """k unit tangent directions at x: an even angular grid in dimension
    two, seeded random directions otherwise."""
    n = chart.dimension
    basis = gram_basis(chart, x)
    if n == 2:
        ang = 2.0 * np.pi * np.arange(k) / k
        return (np.cos(ang)[:, None] * basis[:, 0]
                + np.sin(ang)[:, None] * basis[:, 1])
    rng = np.random.default_rng(seed)
    raw = rng.standard_normal((k, n))
    dirs = raw @ basis.T
    g = eval_metric(chart, x)
    nrm = np.sqrt(np.einsum("ki,ij,kj->k", dirs, g, dirs))
    return dirs / nrm[:, None]


# ---------------------------------------------------------------------------
# Gauss-Newton endpoint shooting


def gn_polish(chart0, x0, u_init, targets, h=0.01, iters=12, tol=1e-10,
              step_cap=0.4, cid0=None):
    """Refine initial velocities so geodesic endpoints hit targets.

    For each row ``u`` of ``u_init`` the geodesic from ``x0`` with
    velocity ``u`` is integrated over unit time; Gauss-Newton updates
    ``u`` until the endpoint matches the corresponding row of
    ``targets`` (embedding coordinates).  ``x0`` may be a single point
    or one base point per row (with per-row chart ids ``cid0``, 0 for
    ``chart0`` and 1 for its partner).  Returns ``(u, res)`` with the
    best velocities found and their endpoint residual norms.
    """
    flow = BatchFlow(chart0)
    u = np.array(u_init, dtype=float, ndmin=2).copy()
    targets = np.array(targets, dtype=float, ndmin=2)
    nc, n = u.shape
    if targets.shape[0] == 1 and nc > 1:
        targets = np.broadcast_to(targets, (nc, targets.shape[1]))
    x0 = np.array(x0, dtype=float, ndmin=2)
    if x0.shape[0] == 1 and nc > 1:
        x0 = np.broadcast_to(x0, (nc, n))
    cid0 = (np.zeros(nc, dtype=np.int8) if cid0 is None
            else np.asarray(cid0, dtype=np.int8))
    charts = (chart0, chart0.partner)
    g0 = np.empty((nc, n, n))
    for b in (0, 1):
        m = cid0 == b
        if m.any():
            g0[m] = charts[b].metric(x0[m])
    best_u = u.copy()
    best_res = np.full(nc, np.inf)
    eye = np.eye(n)
    prev_res = np.full(nc, np.inf)
    for it in range(iters):
        delta = 1e-6 * np.maximum(1.0, np.abs(u).max(axis=1))  # (nc,)
        blocks = [u]
        for i in range(n):
            blocks.append(u + delta[:, None] * eye[i])
            blocks.append(u - delta[:, None] * eye[i])
        u_all = np.concatenate(blocks, axis=0)
        x_all = np.tile(x0, (2 * n + 1, 1))
        cid_all = np.tile(cid0, 2 * n + 1)
        speeds = np.sqrt(np.einsum("ci,cij,cj->c", u, g0, u))
        n_steps = max(2, ceil(speeds.max() / h))
        cid, xe, ve, _ = flow.run(x_all, u_all, 1.0, 1.0 / n_steps,
                                  cid0=cid_all)
        e_all = flow.embed_state(cid, xe)
        r = e_all[:nc] - targets
        res = np.linalg.norm(r, axis=1)
        gain = res < best_res
        best_res[gain] = res[gain]
        best_u[gain] = u[gain]
        if best_res.max() < tol:
            break
        # stop once every start has either converged or truly plateaued
        # (near-conjugate targets converge slowly but steadily)
        if it >= 6 and np.all((best_res < 1e-9) | (res > 0.92 * prev_res)):
            break
        prev_res = res
        jac = np.empty((nc, targets.shape[1], n))
        for i in range(n):
            ep = e_all[(1 + 2 * i) * nc:(2 + 2 * i) * nc]
            em = e_all[(2 + 2 * i) * nc:(3 + 2 * i) * nc]
            jac[:, :, i] = (ep - em) / (2.0 * delta[:, None])
        jtj = np.einsum("cmi,cmj->cij", jac, jac)
        jtr = np.einsum("cmi,cm->ci", jac, r)
        lam = 1e-12 * np.trace(jtj, axis1=1, axis2=2) / n + 1e-15
        du = -np.einsum("cij,cj->ci",
                        np.linalg.pinv(jtj + lam[:, None, None] * eye), jtr)
        cap = step_cap * np.maximum(1.0, np.linalg.norm(u, axis=1))
        mag = np.linalg.norm(du, axis=1)
        over = mag > cap
        if over.any():
            du[over] *= (cap[over] / mag[over])[:, None]
        u = u + du
    if not np.isfinite(best_u).all():
        raise NonFiniteState("endpoint shooting produced non-finite velocities")
    return best_u, best_res


# ---------------------------------------------------------------------------
# polar distance field


@dataclass
class DistanceEstimate:
    d: np.ndarray        # distance estimate per query
    miss: np.ndarray     # embedding-space residual of the matched ray
    dirs: np.ndarray     # initial unit direction of the matched ray
    ok: np.ndarray       # miss below tolerance (estimate trustworthy)
    edge: np.ndarray     # matched at the far edge of the fan


class PolarMap:
    """Fan of unit-speed geodesics out of p with distance interpolation."""

    def __init__(self, chart, p, length, n_dirs=128, h=0.02, seed=0):
        self.src_chart = chart
        self.chart, self.p, _ = canonical_base(chart, p)
        self.length = float(length)
        self.n_dirs = int(n_dirs)
        self.dirs = direction_set(self.chart, self.p, self.n_dirs, seed)
        self.flow = BatchFlow(self.chart)
        n_steps = max(4, ceil(self.length / h))
        x0 = np.broadcast_to(self.p, self.dirs.shape)
        _, _, _, rec = self.flow.run(x0, self.dirs, self.length,
                                     self.length / n_steps, record_stride=1)
        self.ts = rec["t"]
        self.emb = rec["e"]          # (K, S, m)
        self.states = (rec["cid"], rec["x"], rec["v"])
        self.n_samples = self.ts.size
        self.dt = self.ts[1] - self.ts[0]
        self.tree = cKDTree(self.emb.reshape(-1, self.emb.shape[-1]))
        self.circular = self.chart.dimension == 2
        self.g0 = eval_metric(self.chart, self.p)
        self.p_embed = self.chart.embed(self.p)

    # -- interpolation ----------------------------------------------------

    def _ray_min(self, rays, z, j_center, w=8):
        """Parabola-refined closest approach of each ray to its target.

        Returns (t, f, edge): parameter of closest approach, squared
        embedding distance there, and whether the minimum sits at the
        far end of the fan.
        """
        s = self.n_samples
        w = min(w, (s - 1) // 2)
        lo = np.clip(j_center - w, 0, s - (2 * w + 1))
        jwin = lo[:, None] + np.arange(2 * w + 1)
        ew = self.emb[rays[:, None], jwin]
        f = ((ew - z[:, None, :]) ** 2).sum(axis=-1)
        a = np.argmin(f, axis=1)
        ac = np.clip(a, 1, 2 * w - 1)
        f0 = np.take_along_axis(f, ac[:, None], 1)[:, 0]
        fm = np.take_along_axis(f, (ac - 1)[:, None], 1)[:, 0]
        fp = np.take_along_axis(f, (ac + 1)[:, None], 1)[:, 0]
        denom = fm + fp - 2.0 * f0
        safe = denom > 1e-300
        delta = np.where(safe, 0.5 * (fm - fp) / np.where(safe, denom, 1.0), 0.0)
        delta = np.clip(delta, -1.0, 1.0)
        t = (lo + ac + delta) * self.dt
        fstar = f0 + 0.5 * (fp - fm) * delta + 0.5 * denom * delta**2
        edge = (lo + a) >= s - 2
        return t, np.maximum(fstar, 0.0), edge

    def estimate(self, z, n_branches=4, k_query=32, miss_tol=0.03):
        """Interpolated distance from p to each row of ``z`` (embedding
        coordinates).  Distinct nearby rays are treated as distinct
        geodesic branches and the shortest trustworthy branch wins."""
        z = np.array(z, dtype=float, ndmin=2)
        nq = z.shape[0]
        kq = min(k_query, self.tree.n)
        dq, ii = self.tree.query(z, k=kq)
        ii = np.atleast_2d(ii.reshape(nq, kq))
        dq = np.atleast_2d(dq.reshape(nq, kq))
        rays = ii // self.n_samples
        jcen = ii % self.n_samples
        # earliest arrivals first, so the shortest branch always claims
        # a candidate slot (long fans can re-pass a point many times)
        order = np.argsort(jcen, axis=1, kind="stable")
        rays = np.take_along_axis(rays, order, axis=1)
        jcen = np.take_along_axis(jcen, order, axis=1)
        dq = np.take_along_axis(dq, order, axis=1)
        cand_r = np.full((nq, n_branches), -1, dtype=int)
        cand_j = np.zeros((nq, n_branches), dtype=int)
        cand_d = np.full((nq, n_branches), np.inf)
        count = np.zeros(nq, dtype=int)
        for c in range(kq):
            r = rays[:, c]
            if self.circular:
                diff = np.abs(cand_r - r[:, None])
                diff = np.minimum(diff, self.n_dirs - diff)
            else:
                diff = np.abs(cand_r - r[:, None])
            # same pass of the same (or adjacent) ray: merge, keeping
            # the sample closest to the query as the window center
            same = (cand_r >= 0) & (diff <= 1) \
                & (np.abs(cand_j - jcen[:, c, None]) <= 16)
            closer = same & (dq[:, c, None] < cand_d)
            cand_j[closer] = np.broadcast_to(jcen[:, c, None],
                                             cand_j.shape)[closer]
            cand_d[closer] = np.broadcast_to(dq[:, c, None],
                                             cand_d.shape)[closer]
            dup = same.any(axis=1)
            take = (count < n_branches) & ~dup
            cand_r[take, count[take]] = r[take]
            cand_j[take, count[take]] = jcen[take, c]
            cand_d[take, count[take]] = dq[take, c]
            count[take] += 1
        n = self.chart.dimension
        d_ok = np.full(nq, np.inf)
        dir_ok = np.zeros((nq, n))
        miss_ok = np.full(nq, np.inf)
        edge_ok = np.zeros(nq, dtype=bool)
        d_fb = np.full(nq, np.inf)
        dir_fb = np.zeros((nq, n))
        miss_fb = np.full(nq, np.inf)
        edge_fb = np.ones(nq, dtype=bool)
        for s in range(n_branches):
            sel = np.flatnonzero(cand_r[:, s] >= 0)
            if sel.size == 0:
                continue
            r = cand_r[sel, s]
            j = cand_j[sel, s]
            zs = z[sel]
            t0, f0, e0 = self._ray_min(r, zs, j)
            if self.circular and self.n_dirs >= 3:
                rm = (r - 1) % self.n_dirs
                rp = (r + 1) % self.n_dirs
                tm, fm, em = self._ray_min(rm, zs, j)
                tp, fp, ep = self._ray_min(rp, zs, j)
                denom = fm + fp - 2.0 * f0
                safe = denom > 1e-300
                delta = np.where(
                    safe, 0.5 * (fm - fp) / np.where(safe, denom, 1.0), 0.0)
                delta = np.clip(delta, -1.0, 1.0)
                t = t0 + 0.5 * (tp - tm) * delta \
                    + 0.5 * (tp + tm - 2.0 * t0) * delta**2
                f = f0 + 0.5 * (fp - fm) * delta + 0.5 * denom * delta**2
                dirv = self.dirs[r] \
                    + 0.5 * delta[:, None] * (self.dirs[rp] - self.dirs[rm])
                edge = e0 | em | ep
            else:
                t, f, edge, dirv = t0, f0, e0, self.dirs[r].copy()
            nrm = np.sqrt(np.einsum("ci,ij,cj->c", dirv, self.g0, dirv))
            dirv = dirv / nrm[:, None]
            miss = np.sqrt(np.maximum(f, 0.0))
            ok = (miss <= miss_tol) & ~edge
            for cond, (dd, di, mi, ed) in (
                (ok, (d_ok, dir_ok, miss_ok, edge_ok)),
                (np.ones_like(ok), (d_fb, dir_fb, miss_fb, edge_fb)),
            ):
                better = cond & (miss < mi[sel]) if dd is d_fb else cond & (t < dd[sel])
                idx = sel[better]
                dd[idx] = t[better]
                di[idx] = dirv[better]
                mi[idx] = miss[better]
                ed[idx] = edge[better]
        have = np.isfinite(d_ok)
        d = np.where(have, d_ok, d_fb)
        dirs = np.where(have[:, None], dir_ok, dir_fb)
        miss = np.where(have, miss_ok, miss_fb)
        edge = np.where(have, edge_ok, edge_fb)
        return DistanceEstimate(d=d, miss=miss, dirs=dirs, ok=have, edge=edge)

    def polish(self, z, est=None, h=0.01, iters=12):
        """High-accuracy distances by Gauss-Newton shooting seeded from
        an interpolated estimate.  Returns (d, residual_norm)."""
        z = np.array(z, dtype=float, ndmin=2)
        if est is None:
            est = self.estimate(z)
        u0 = est.d[:, None] * est.dirs
        u, res = gn_polish(self.chart, self.p, u0, z, h=h, iters=iters)
        d = np.sqrt(np.einsum("ci,ij,cj->c", u, self.g0, u))
        return d, res


# ---------------------------------------------------------------------------
# grid-graph oracle


def _grid_offsets(n):
    if n == 2:
        return [o for o in product(range(-2, 3), repeat=2)
                if o != (0, 0) and gcd(abs(o[0]), abs(o[1])) == 1]
    return [o for o in product((-1, 0, 1), repeat=n) if any(o)]


def _line_length(chart, p, q, n_quad=17):
    """Length of the straight chart segment p -> q (min-image for
    periodic coordinates).  Always an upper bound on distance."""
    p = np.asarray(p, dtype=float)
    dq = np.asarray(q, dtype=float) - p
    for i, per in enumerate(chart.periodicity):
        if per is not None:
            dq[i] = (dq[i] + per / 2) % per - per / 2
    s = (np.arange(n_quad) + 0.5) / n_quad
    xs = p + s[:, None] * dq
    g = chart.metric(xs)
    seg = np.sqrt(np.maximum(np.einsum("sij,i,j->s", g, dq, dq), 0.0))
    return float(seg.mean())


def graph_distance(chart, p, q, n_grid=None, with_direction=False):
    """Shortest-path distance p -> q on a metric grid graph.

    Independent of the shooting machinery: nodes are a coordinate grid
    (wrapping periodic axes), edge weights are metric lengths of the
    straight chart steps, and p, q join the graph through their local
    neighborhoods plus a direct straight-segment edge.  Quantization
    makes the result an overestimate by at most a few percent.
    """
    n = chart.dimension
    if n_grid is None:
        n_grid = 57 if n == 2 else 13
    p = chart.wrap(np.asarray(p, dtype=float))
    q = chart.wrap(np.asarray(q, dtype=float))
    span = float(np.max(np.abs(q - p))) + 1e-9
    axes, wraps = [], []
    for i, (lo, hi) in enumerate(chart.domain):
        per = chart.periodicity[i]
        lo_pt, hi_pt = min(p[i], q[i]), max(p[i], q[i])
        if per is not None:
            base = lo if np.isfinite(lo) else 0.0
            axes.append(base + per * np.arange(n_grid) / n_grid)
            wraps.append(True)
            continue
        wraps.append(False)
        if np.isfinite(lo) and np.isfinite(hi):
            pad = 0.02 * (hi - lo)
            a = lo + min(pad, 0.5 * (lo_pt - lo))
            b = hi - min(pad, 0.5 * (hi - hi_pt))
        elif np.isfinite(lo):
            a = lo + 0.45 * (lo_pt - lo)
            b = hi_pt + 0.75 * span + 0.5
        elif np.isfinite(hi):
            a = lo_pt - 0.75 * span - 0.5
            b = hi - 0.45 * (hi - hi_pt)
        else:
            a = lo_pt - 0.35 * span - 0.3
            b = hi_pt + 0.35 * span + 0.3
        axes.append(np.linspace(a, b, n_grid))
    sizes = [ax.size for ax in axes]
    steps = np.array([ax[1] - ax[0] for ax in axes])
    mesh = np.meshgrid(*axes, indexing="ij")
    coords = np.stack([m.ravel() for m in mesh], axis=-1)   # (N, n)
    n_nodes = coords.shape[0]
    idx = np.indices(sizes).reshape(n, -1).T                # (N, n)

    rows, cols, vals = [], [], []
    for off in _grid_offsets(n):
        tgt = idx + np.array(off)
        valid = np.ones(n_nodes, dtype=bool)
        for i in range(n):
            if wraps[i]:
                tgt[:, i] %= sizes[i]
            else:
                valid &= (tgt[:, i] >= 0) & (tgt[:, i] < sizes[i])
        src = np.flatnonzero(valid)
        if src.size == 0:
            continue
        tflat = np.ravel_multi_index(tgt[src].T, sizes)
        disp = np.array(off) * steps
        mid = coords[src] + 0.5 * disp
        g = chart.metric(mid)
        w = np.sqrt(np.maximum(np.einsum("bij,i,j->b", g, disp, disp), 0.0))
        rows.append(src)
        cols.append(tflat)
        vals.append(w)

    # attach p and q through their local grid neighborhoods
    extra_rows, extra_cols, extra_vals = [], [], []
    attach_ids = (n_nodes, n_nodes + 1)
    for node_id, x in zip(attach_ids, (p, q)):
        near = []
        for i in range(n):
            ji = int(np.argmin(np.abs(axes[i] - x[i])))
            rng_i = range(ji - 2, ji + 3)
            if wraps[i]:
                near.append([r % sizes[i] for r in rng_i])
            else:
                near.append([r for r in rng_i if 0 <= r < sizes[i]])
        for multi in product(*near):
            nid = int(np.ravel_multi_index(multi, sizes))
            w = _line_length(chart, x, coords[nid], n_quad=5)
            extra_rows.append(node_id)
            extra_cols.append(nid)
            extra_vals.append(w)
    # direct straight-segment edge keeps nearby pairs accurate
    extra_rows.append(attach_ids[0])
    extra_cols.append(attach_ids[1])
    extra_vals.append(_line_length(chart, p, q))

    rows = np.concatenate(rows + [np.array(extra_rows)])
    cols = np.concatenate(cols + [np.array(extra_cols)])
    vals = np.concatenate(vals + [np.array(extra_vals)])
    graph = coo_matrix((vals, (rows, cols)),
                       shape=(n_nodes + 2, n_nodes + 2)).tocsr()
    if with_direction:
        dist, pred = dijkstra(graph, directed=False, indices=attach_ids[0],
                              return_predecessors=True)
    else:
        dist = dijkstra(graph, directed=False, indices=attach_ids[0])
        pred = None
    d = float(dist[attach_ids[1]])
    if not with_direction:
        return d
    # walk predecessors back from q to recover the first hop out of p
    node = attach_ids[1]
    path = [node]
    while node != attach_ids[0] and node >= 0:
        node = int(pred[node])
        path.append(node)
    direction = None
    if len(path) >= 2 and path[-1] == attach_ids[0]:
        first = path[-2]
        if first < n_nodes:
            dv = coords[first] - p
        else:
            dv = q - p
        for i, per in enumerate(chart.periodicity):
            if per is not None:
                dv[i] = (dv[i] + per / 2) % per - per / 2
        g = eval_metric(chart, p)
        nrm = float(np.sqrt(dv @ g @ dv))
        if nrm > 1e-12:
            direction = dv / nrm
    return d, direction
