"""Metric evaluation on coordinate charts.

A chart carries the metric tensor (and optionally analytic Christoffel
symbols and a curvature rule) as plain callables over chart coordinates.
All callables follow the batched convention: they accept arrays of shape
``(..., n)`` and return results with matching leading dimensions, so the
integrators can evaluate many points at once.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .errors import NotPositiveDefinite, OutOfDomain, StencilOutsideDomain

# Central finite-difference step scale for metric derivatives.
FD_STEP = 1e-4


@dataclass
class ManifoldChart:
    """A coordinate chart with metric data.

    Optional hooks used by the built-in models:

    * ``embed_fn``: injective map into R^m used for endpoint matching and
      distance interpolation (identity when None).
    * ``margin_fn`` / ``partner`` / ``to_partner``: support for a two-chart
      atlas.  ``margin_fn`` measures how far a point is from the chart's
      singular set; integrators hop to ``partner`` (via ``to_partner``)
      when the margin drops below a threshold.
    """

    dimension: int
    domain: Sequence[tuple[float, float]]
    periodicity: Sequence[Optional[float]]
    metric_fn: Callable
    christoffel_fn: Optional[Callable] = None
    curvature_fn: Optional[Callable] = None
    label: str = ""
    embed_fn: Optional[Callable] = None
    margin_fn: Optional[Callable] = None
    partner: Optional["ManifoldChart"] = None
    to_partner: Optional[Callable] = None

    def __post_init__(self):
        if self.dimension < 2:
            raise ValueError("chart dimension must be >= 2")
        self.domain = [tuple(map(float, b)) for b in self.domain]
        if len(self.domain) != self.dimension:
            raise ValueError("domain bounds must match dimension")
        if len(self.periodicity) != self.dimension:
            raise ValueError("periodicity must match dimension")

    # -- point handling -------------------------------------------------

    def wrap(self, x):
        """Reduce periodic coordinates modulo their period."""
        x = np.asarray(x, dtype=float).copy()
        for i, p in enumerate(self.periodicity):
            if p is not None:
                lo = self.domain[i][0]
                base = lo if np.isfinite(lo) else 0.0
                x[..., i] = base + np.mod(x[..., i] - base, p)
        return x

    def contains(self, x):
        x = self.wrap(x)
        ok = np.ones(x.shape[:-1], dtype=bool)
        for i, (lo, hi) in enumerate(self.domain):
            if self.periodicity[i] is not None:
                continue
            ok &= (x[..., i] > lo) & (x[..., i] < hi)
        return ok

    def embed(self, x):
        """Map chart points into the matching space R^m."""
        if self.embed_fn is None:
            return np.asarray(x, dtype=float)
        return self.embed_fn(np.asarray(x, dtype=float))

    @property
    def embed_dim(self):
        if self.embed_fn is None:
            return self.dimension
        probe = np.array([0.5 * (max(lo, -1.0) + min(hi, 1.0))
                          for lo, hi in self.domain])
        return self.embed(probe).shape[-1]

    # -- batched tensor evaluation (no domain checks) --------------------

    def metric(self, x):
        return self.metric_fn(np.asarray(x, dtype=float))

    def christoffels(self, x):
        x = np.asarray(x, dtype=float)
        if self.christoffel_fn is not None:
            gam = self.christoffel_fn(x)
        else:
            gam = _fd_christoffel(self, x)
        # enforce lower-index symmetry exactly
        return 0.5 * (gam + np.swapaxes(gam, -1, -2))

    def curvature(self, x, u, w):
        """Curvature term R(w, u)u entering the Jacobi equation."""
        x = np.asarray(x, dtype=float)
        u = np.asarray(u, dtype=float)
        w = np.asarray(w, dtype=float)
        if self.curvature_fn is not None:
            return self.curvature_fn(x, u, w)
        return _fd_curvature(self, x, u, w)

    # -- inner products ---------------------------------------------------

    def inner(self, x, u, w):
        g = self.metric(x)
        return np.einsum("...ij,...i,...j->...", g, u, w)

    def norm(self, x, u):
        return np.sqrt(np.maximum(self.inner(x, u, u), 0.0))


@dataclass
class TangentVector:
    """A tangent vector given by chart components at a base point."""

    chart: ManifoldChart
    base: np.ndarray
    comps: np.ndarray

    def __post_init__(self):
        self.base = np.asarray(self.base, dtype=float)
        self.comps = np.asarray(self.comps, dtype=float)
        if not bool(self.chart.contains(self.base)):
            raise OutOfDomain(self.base, self.chart.label)

    @property
    def norm(self):
        return float(self.chart.norm(self.base, self.comps))


# ---------------------------------------------------------------------------
# public single-point operations with validation


def eval_metric(chart: ManifoldChart, x) -> np.ndarray:
    """Metric tensor g(x) as a symmetric positive definite matrix."""
    x = chart.wrap(x)
    if not bool(chart.contains(x)):
        raise OutOfDomain(x, chart.label)
    g = np.asarray(chart.metric(x), dtype=float)
    g = 0.5 * (g + g.T)
    min_eig = float(np.linalg.eigvalsh(g)[0])
    if min_eig <= 0.0:
        raise NotPositiveDefinite(x, min_eig)
    return g


def christoffel(chart: ManifoldChart, x) -> np.ndarray:
    """Christoffel symbols Gamma^k_ij, symmetric in (i, j).

    Output axes are ordered ``[k, i, j]``.
    """
    x = chart.wrap(x)
    if not bool(chart.contains(x)):
        raise OutOfDomain(x, chart.label)
    if chart.christoffel_fn is None:
        _check_stencil(chart, x, _fd_h(x))
    return chart.christoffels(x)


def curvature_apply(chart: ManifoldChart, x, u, w) -> np.ndarray:
    """Components of R(w, u)u at x."""
    x = chart.wrap(x)
    if not bool(chart.contains(x)):
        raise OutOfDomain(x, chart.label)
    if chart.curvature_fn is None:
        # nested differencing widens the stencil
        _check_stencil(chart, x, 2 * _fd_h(x))
    return chart.curvature(x, np.asarray(u, float), np.asarray(w, float))


# ---------------------------------------------------------------------------
# frames


def gram_basis(chart: ManifoldChart, x) -> np.ndarray:
    """Columns form a g-orthonormal basis of the tangent space at x."""
    g = eval_metric(chart, x)
    ell = np.linalg.cholesky(g)
    return np.linalg.inv(ell).T


def orth_complement_basis(chart: ManifoldChart, x, v) -> np.ndarray:
    """(n-1) g-orthonormal vectors spanning the complement of v at x.

    Deterministic: Gram-Schmidt of the g-orthonormal frame against v,
    dropping the frame vector most aligned with v.
    """
    g = eval_metric(chart, x)
    v = np.asarray(v, dtype=float)
    nv = np.sqrt(v @ g @ v)
    if nv <= 0:
        raise ValueError("v must be nonzero")
    v = v / nv
    frame = gram_basis(chart, x)
    align = np.abs(frame.T @ g @ v)
    order = np.argsort(-align)
    keep = [frame[:, j] for j in order[1:][::-1]]
    basis = []
    for w in keep:
        w = w - (w @ g @ v) * v
        for b in basis:
            w = w - (w @ g @ b) * b
        nw = np.sqrt(w @ g @ w)
        if nw < 1e-12:
            raise np.linalg.LinAlgError("degenerate complement basis")
        basis.append(w / nw)
    return np.stack(basis, axis=0)


# ---------------------------------------------------------------------------
# finite-difference fallbacks


def _fd_h(x):
    return FD_STEP * max(1.0, float(np.max(np.abs(x))))


def _check_stencil(chart, x, h):
    for sgn in (-1.0, 1.0):
        for i in range(chart.dimension):
            xp = np.array(x, dtype=float)
            xp[i] += sgn * h
            if not bool(chart.contains(xp)):
                raise StencilOutsideDomain(
                    f"stencil point {xp} leaves chart {chart.label!r}"
                )


def _fd_metric_grad(chart, x):
    """d g_ij / d x_l by central differences; axes [..., l, i, j]."""
    x = np.asarray(x, dtype=float)
    n = chart.dimension
    h = FD_STEP * np.maximum(1.0, np.max(np.abs(x), axis=-1))
    h = np.asarray(h)[..., None]
    cols = []
    for l in range(n):
        e = np.zeros(n)
        e[l] = 1.0
        gp = chart.metric(x + h * e)
        gm = chart.metric(x - h * e)
        cols.append((gp - gm) / (2.0 * h[..., None]))
    return np.stack(cols, axis=-3), h[..., 0]


def _fd_christoffel(chart, x):
    dg, _ = _fd_metric_grad(chart, x)
    g = chart.metric(x)
    ginv = np.linalg.inv(g)
    low = _lower_christoffel(dg)
    return np.einsum("...kl,...lij->...kij", ginv, low)


def _lower_christoffel(dg):
    """Gamma_{l,ij} = 0.5 (d_i g_jl + d_j g_il - d_l g_ij) from dg[..., l, i, j]."""
    d_i_g_jl = np.einsum("...ijl->...lij", dg)
    d_j_g_il = np.einsum("...jil->...lij", dg)
    return 0.5 * (d_i_g_jl + d_j_g_il - dg)


def _fd_christoffel_grad(chart, x):
    """d Gamma^l_jk / d x_i by central differences; axes [..., i, l, j, k]."""
    x = np.asarray(x, dtype=float)
    n = chart.dimension
    h = FD_STEP * np.maximum(1.0, np.max(np.abs(x), axis=-1))
    h = np.asarray(h)[..., None]
    rows = []
    for i in range(n):
        e = np.zeros(n)
        e[i] = 1.0
        gp = chart.christoffels(x + h * e)
        gm = chart.christoffels(x - h * e)
        rows.append((gp - gm) / (2.0 * h[..., None, None]))
    return np.stack(rows, axis=-4)


def _fd_curvature(chart, x, u, w):
    """R(w, u)u via R^l_{ijk} w^i u^j u^k with finite-difference dGamma."""
    dgam = _fd_christoffel_grad(chart, x)          # [..., i, l, j, k]
    gam = chart.christoffels(x)                    # [..., l, j, k]
    quad = (np.einsum("...lim,...mjk->...iljk", gam, gam)
            - np.einsum("...ljm,...mik->...iljk", gam, gam))
    # R^l_{ijk} = d_i Gamma^l_jk - d_j Gamma^l_ik + quadratic terms
    r_up = dgam - np.einsum("...jlik->...iljk", dgam) + quad
    return np.einsum("...iljk,...i,...j,...k->...l", r_up, w, u, u)
