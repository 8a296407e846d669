"""The QuEST function: population spectrum -> smoothed quantiles of the sample law."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_simpson

from .mp import (
    Atoms,
    SupportIntervals,
    _interval_grid,
    companion_on_real_line,
    group_atoms,
    support_from_atoms,
)
from .spectral import ConcentrationContext, ValidationError, as_spectrum

GRID_POINTS = 1000


@dataclass(frozen=True)
class SampleSpectralModel:
    """Limiting sample spectral law generated by a candidate spectrum ``t``.

    ``grid``, ``density`` and ``cdf`` are lists with one array per support
    interval.  ``cdf`` includes the atom at zero and ends at exactly 1.
    """

    t: np.ndarray
    ctx: ConcentrationContext
    support: SupportIntervals
    grid: list
    density: list
    cdf: list
    atoms: Atoms
    raw_mass: float
    # per interval: (theta, u, s, dx/dtheta) quadrature nodes in the angle variable
    quadrature: list = field(default_factory=list, repr=False)

    @property
    def mass_at_zero(self) -> float:
        return self.support.mass_at_zero

    def knots(self) -> tuple[np.ndarray, np.ndarray]:
        """Concatenated (cdf, x) knots of the piecewise-linear quantile function."""
        m0 = self.mass_at_zero
        levels = [np.array([0.0, m0])] + self.cdf
        xs = [np.zeros(2)] + self.grid
        return np.concatenate(levels), np.concatenate(xs)

    def stieltjes(self, x: float) -> complex:
        """Boundary value of the Stieltjes transform at real x != 0."""
        c = self.ctx.c
        mb = companion_on_real_line(self.atoms, self.support, float(x))
        return mb / c + (1.0 - c) / (c * x)

    def companion(self, x: float) -> complex:
        return companion_on_real_line(self.atoms, self.support, float(x))


def build_sample_spectral_model(
    t, ctx: ConcentrationContext, *, grid_points: int = GRID_POINTS
) -> SampleSpectralModel:
    """Support, density and cdf of the sample law generated by ``t``.

    Each support interval gets ``grid_points`` abscissae, cosine-spaced in the
    internal u coordinate so that they cluster at the square-root edges.
    """
    values = as_spectrum(t)
    atoms = group_atoms(values, ctx)
    if atoms.t.size == 0:
        raise ValidationError("the spectrum is identically zero; the sample law is a point mass")
    support = support_from_atoms(atoms)
    bsum = float(atoms.b.sum())
    c = atoms.c
    grids, dens, cums, quad = [], [], [], []
    for k, (ua, ub) in enumerate(support.u_bounds):
        theta, u, s, x, dxdu = _interval_grid(ua, ub, grid_points, atoms.t, atoms.a, bsum)
        with np.errstate(invalid="ignore", divide="ignore"):
            f = np.sqrt(s) / (math.pi * c * (u * u + s))
        f[0] = 0.0
        f[-1] = 0.0
        # integrate in the angle variable, where the integrand is smooth even
        # at square-root (and inverse square-root) edges
        dxdth = dxdu * 0.5 * (ub - ua) * np.sin(theta)
        dxdth[0] = dxdth[-1] = 0.0
        quad.append((theta, u, s, dxdth))
        g = f * dxdth
        if support.hard_edge and k == 0:
            g[0] = (4.0 * g[1] - g[2]) / 3.0
        else:
            g[0] = 0.0
        x[0], x[-1] = support.intervals[k]
        grids.append(x)
        dens.append(f)
        cums.append(cumulative_simpson(g, x=theta, initial=0.0))
    m0 = support.mass_at_zero
    raw = float(sum(ck[-1] for ck in cums))
    scale = (1.0 - m0) / raw
    cdfs = []
    level = m0
    for ck in cums:
        cum = level + np.maximum.accumulate(ck) * scale
        level = cum[-1]
        cdfs.append(cum)
    cdfs[-1][-1] = 1.0
    return SampleSpectralModel(values, ctx, support, grids, dens, cdfs, atoms, raw + m0, quad)


def inverse_cdf(model: SampleSpectralModel, u) -> np.ndarray | float:
    """Quantile function sup{x : F(x) <= u}, piecewise-linear between grid nodes.

    ``u = 1`` returns the upper edge of the support.
    """
    uu = np.asarray(u, dtype=np.float64)
    if np.any(~np.isfinite(uu)) or np.any(uu < 0) or np.any(uu > 1):
        raise ValidationError("u must lie in [0, 1]")
    levels, xs = model.knots()
    k = np.searchsorted(levels, uu, side="right") - 1
    k = np.clip(k, 0, levels.size - 2)
    lo, hi = levels[k], levels[k + 1]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(hi > lo, (uu - lo) / (hi - lo), 0.0)
    out = xs[k] + frac * (xs[k + 1] - xs[k])
    out = np.where(uu >= 1.0, model.support.upper, out)
    out = np.where(uu < model.mass_at_zero, 0.0, out)
    return float(out) if out.ndim == 0 else out


def _quantile_integral(levels: np.ndarray, xs: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Exact integral from 0 to u of the piecewise-linear quantile function."""
    dl = np.diff(levels)
    seg = 0.5 * dl * (xs[:-1] + xs[1:])
    G = np.concatenate([[0.0], np.cumsum(seg)])
    k = np.searchsorted(levels, u, side="right") - 1
    k = np.clip(k, 0, levels.size - 2)
    d = np.clip(u - levels[k], 0.0, None)
    with np.errstate(invalid="ignore", divide="ignore"):
        slope = np.where(dl[k] > 0, (xs[k + 1] - xs[k]) / dl[k], 0.0)
    d = np.minimum(d, dl[k])
    return G[k] + d * xs[k] + 0.5 * d * d * slope


def smoothed_quantiles(model: SampleSpectralModel) -> np.ndarray:
    """p times the integral of the quantile function over each bin [(i-1)/p, i/p]."""
    p = model.ctx.p
    levels, xs = model.knots()
    edges = np.arange(p + 1) / p
    edges[-1] = 1.0
    G = _quantile_integral(levels, xs, edges)
    q = p * np.diff(G)
    # bins lying entirely in the atom at zero are exactly zero
    q[edges[1:] <= model.mass_at_zero + 1e-12] = 0.0
    q = np.maximum(q, 0.0)
    return np.maximum.accumulate(q)


def plain_quantiles(model: SampleSpectralModel) -> np.ndarray:
    """Quantiles at (i - 0.5) / p."""
    p = model.ctx.p
    return np.asarray(inverse_cdf(model, (np.arange(p) + 0.5) / p))


def quest_quantiles(t, ctx: ConcentrationContext, *, smoothed: bool = True) -> np.ndarray:
    """QuEST function Q_{n,p}(t): sorted quantiles of the sample law generated by t."""
    values = as_spectrum(t)
    if values.size != ctx.p:
        raise ValidationError(f"spectrum has length {values.size}, expected p={ctx.p}")
    if not np.any(values > 0):
        return np.zeros(ctx.p)
    model = build_sample_spectral_model(values, ctx)
    return smoothed_quantiles(model) if smoothed else plain_quantiles(model)


def _tie_groups(t: np.ndarray) -> list[np.ndarray]:
    bounds = np.flatnonzero(np.diff(t) != 0) + 1
    return np.split(np.arange(t.size), bounds)


def _analytic_jacobian(model: SampleSpectralModel) -> np.ndarray:
    """Closed-form Jacobian of the smoothed quantiles.

    At fixed x the cdf moves as dF(x)/dt_j = -v / (pi p ((u - t_j)^2 + v^2)),
    where u + iv = -1/mbar(x).  Differentiating the bin integrals of the
    quantile function at fixed levels then gives
    dq_i/dt_j = (1/pi) * integral over bin i of v / ((u - t_j)^2 + v^2) dx.
    """
    t = model.t
    p = t.size
    tv, inverse = np.unique(t, return_inverse=True)
    scale = (1.0 - model.mass_at_zero) / (model.raw_mass - model.mass_at_zero)
    blocks = [np.zeros((2, tv.size))]
    offset = np.zeros(tv.size)
    for theta, u, s, dxdth in model.quadrature:
        kern = np.sqrt(s)[:, None] / ((u[:, None] - tv[None, :]) ** 2 + s[:, None])
        kern *= (dxdth / math.pi)[:, None]
        if model.support.hard_edge and u[0] == 0.0 and s[0] == 0.0:
            kern[0] = (4.0 * kern[1] - kern[2]) / 3.0
        cum = cumulative_simpson(kern, x=theta, axis=0, initial=0.0) * scale + offset
        offset = cum[-1]
        blocks.append(cum)
    C = np.concatenate(blocks)
    levels, _ = model.knots()
    edges = np.arange(p + 1) / p
    edges[-1] = 1.0
    k = np.clip(np.searchsorted(levels, edges, side="right") - 1, 0, levels.size - 2)
    dl = levels[k + 1] - levels[k]
    with np.errstate(invalid="ignore", divide="ignore"):
        frac = np.where(dl > 0, np.clip((edges - levels[k]) / dl, 0.0, 1.0), 0.0)
    Ce = C[k] + frac[:, None] * (C[k + 1] - C[k])
    return np.diff(Ce, axis=0)[:, inverse]


def quest_jacobian(
    t,
    ctx: ConcentrationContext,
    *,
    q0: np.ndarray | None = None,
    central: bool = False,
    method: str = "fd",
) -> np.ndarray:
    """Jacobian dQ_i / dt_j of the QuEST function.

    ``method="fd"`` uses forward differences with step
    ``1e-6 * max(t_j, mean(t))``; ``central=True`` switches to central
    differences.  Tied coordinates are perturbed together and share the group
    derivative divided by the group size.  ``method="analytic"`` evaluates the
    closed-form derivative on the quadrature grid at the cost of one model
    build.
    """
    values = as_spectrum(t, sort=False)
    if np.any(values < 0) or not np.any(values > 0):
        raise ValidationError("the Jacobian needs a nonnegative, nonzero spectrum")
    if method == "analytic":
        return _analytic_jacobian(build_sample_spectral_model(values, ctx))
    if method != "fd":
        raise ValidationError(f"unknown Jacobian method {method!r}")
    p = values.size
    if q0 is None and not central:
        q0 = quest_quantiles(values, ctx)
    mean = values.mean()
    J = np.empty((p, p))
    for group in _tie_groups(values):
        h = 1e-6 * max(values[group[0]], mean)
        up = values.copy()
        up[group] += h
        qp = quest_quantiles(up, ctx)
        if central:
            dn = values.copy()
            dn[group] -= h
            col = (qp - quest_quantiles(dn, ctx)) / (2 * h)
        else:
            col = (qp - q0) / h
        J[:, group] = (col / group.size)[:, None]
    return J
