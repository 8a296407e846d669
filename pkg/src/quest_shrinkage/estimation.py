"""Population spectrum estimation by inverting the QuEST function.

The estimator minimizes ``mean((Q(t) - lambda)**2)`` over ``t >= lower_bound``
with a projected Levenberg-Marquardt iteration driven by the Jacobian of
``Q`` (closed form by default, finite differences on request).
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .quest import quest_jacobian, quest_quantiles
from .spectral import ConcentrationContext, ValidationError, as_spectrum, spectral_distance_p

log = logging.getLogger(__name__)

# Worst-case error of a single QuEST quantile relative to mean(t) on the
# default grid; objective changes below the matching level are not resolved.
QUADRATURE_RESOLUTION = 5e-6


@dataclass(frozen=True)
class EstimationOptions:
    max_iterations: int = 500
    objective_tolerance: float = 1e-8
    num_starts: int = 3
    lower_bound: float = 0.0
    jacobian: str = "analytic"

    def __post_init__(self) -> None:
        if self.jacobian not in ("analytic", "fd"):
            raise ValidationError("jacobian must be 'analytic' or 'fd'")
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1")
        if not self.objective_tolerance > 0:
            raise ValidationError("objective_tolerance must be positive")
        if self.num_starts < 1:
            raise ValidationError("num_starts must be at least 1")
        if self.lower_bound < 0:
            raise ValidationError("lower_bound must be nonnegative")


@dataclass(frozen=True)
class ClusteredSpec:
    multiplicities: tuple

    def __post_init__(self) -> None:
        k = tuple(int(v) for v in self.multiplicities)
        if not k or any(v < 1 for v in k):
            raise ValidationError("multiplicities must be positive integers")
        object.__setattr__(self, "multiplicities", k)

    @property
    def p(self) -> int:
        return sum(self.multiplicities)

    def expand(self, gamma) -> np.ndarray:
        return np.repeat(np.asarray(gamma, dtype=np.float64), self.multiplicities)


@dataclass
class EstimationResult:
    tau: np.ndarray
    objective: float
    iterations: int
    converged: bool
    start_objectives: list = field(default_factory=list)
    initial_objectives: list = field(default_factory=list)


def objective(t, lam, ctx: ConcentrationContext) -> float:
    """Squared quantile distance between Q(t) and the sample eigenvalues."""
    lam = as_spectrum(lam)
    t = as_spectrum(t)
    if t.size != lam.size:
        raise ValidationError(f"length mismatch: t has {t.size}, lambda has {lam.size}")
    return spectral_distance_p(quest_quantiles(t, ctx), lam) ** 2


def isotonic_regression(values, weights=None) -> np.ndarray:
    """L2 projection onto nondecreasing sequences (pool adjacent violators)."""
    y = np.asarray(values, dtype=np.float64).ravel()
    if y.size == 0:
        raise ValidationError("isotonic_regression needs a nonempty input")
    w = np.ones_like(y) if weights is None else np.asarray(weights, dtype=np.float64).ravel()
    means, wts, sizes = [], [], []
    for yi, wi in zip(y, w):
        means.append(yi)
        wts.append(wi)
        sizes.append(1)
        while len(means) > 1 and means[-2] > means[-1]:
            m2, w2, n2 = means.pop(), wts.pop(), sizes.pop()
            m1, w1, n1 = means.pop(), wts.pop(), sizes.pop()
            wt = w1 + w2
            means.append((w1 * m1 + w2 * m2) / wt)
            wts.append(wt)
            sizes.append(n1 + n2)
    return np.repeat(means, sizes)


def lawley_corrected(lam, ctx: ConcentrationContext) -> np.ndarray:
    """First-order bias-corrected sample eigenvalues, made monotone and nonnegative.

    ``lam_i - (lam_i / n) * sum_{j != i} lam_j / (lam_i - lam_j)``; pairs
    closer than ``1e-10 * mean(lam)`` are treated as tied and skipped.
    """
    lam = as_spectrum(lam)
    if lam.size != ctx.p:
        raise ValidationError(f"lambda has length {lam.size}, expected p={ctx.p}")
    diff = lam[:, None] - lam[None, :]
    tied = np.abs(diff) < 1e-10 * max(lam.mean(), np.finfo(float).tiny)
    with np.errstate(divide="ignore", invalid="ignore"):
        ratio = np.where(tied, 0.0, lam[None, :] / np.where(tied, 1.0, diff))
    corrected = lam - lam / ctx.n * ratio.sum(axis=1)
    return np.clip(isotonic_regression(corrected), 0.0, None)


# ---------------------------------------------------------------------------
# optimizer


def _levenberg_marquardt(fun, jac, x0, *, lower, max_iter, ftol, resolution, sort):
    """Projected Levenberg-Marquardt on 0.5 * ||fun(x)||^2 subject to x >= lower.

    Stops when an accepted step lowers the sum of squares by less than
    ``ftol`` relative, or by less than ``2 * ||r|| * resolution``, the amount
    by which the residuals themselves are uncertain.
    Returns (x, r, iterations, converged).
    """
    x = np.maximum(np.asarray(x0, dtype=np.float64), lower)
    if sort:
        x = np.sort(x)
    r = fun(x)
    f = r @ r
    J = jac(x, r)
    A = J.T @ J
    mu = 1e-3 * max(np.max(np.diag(A)), 1e-300)
    converged = False
    it = 0
    while it < max_iter:
        if f == 0.0:
            converged = True
            break
        it += 1
        g = J.T @ r
        D = np.maximum(np.diag(A), 1e-12 * max(np.max(np.diag(A)), 1e-300))
        try:
            step = -np.linalg.solve(A + mu * np.diag(D), g)
        except np.linalg.LinAlgError:
            step = -g / (mu * D)
        xn = np.maximum(x + step, lower)
        if sort:
            xn = np.sort(xn)
        if np.array_equal(xn, x):
            converged = True
            break
        rn = fun(xn)
        fn = rn @ rn
        if fn < f:
            decrease = f - fn
            x, r, f = xn, rn, fn
            mu = max(mu * 0.3, 1e-12 * np.max(D))
            if decrease <= ftol * (f + decrease) or decrease <= 2.0 * np.sqrt(f) * resolution:
                converged = True
                break
            J = jac(x, r)
            A = J.T @ J
        else:
            mu *= 4.0
            if mu > 1e16 * np.max(D):
                converged = True
                break
    return x, r, it, converged


def _initial_points(lam: np.ndarray, ctx: ConcentrationContext, num_starts: int) -> list:
    p, n = ctx.p, ctx.n
    mean = lam.mean()
    floor = 1e-3 * mean
    if p <= n:
        first = lam.copy()
    else:
        pos = lam[lam > 1e-12 * mean]
        grid = (np.arange(p) + 0.5) / p
        first = np.interp(grid, (np.arange(pos.size) + 0.5) / pos.size, pos)
        first *= mean / first.mean()
    # an exactly constant vector would stay tied forever: tied coordinates
    # share a Jacobian column, so a +-10% ramp breaks the symmetry
    flat = mean * np.linspace(0.9, 1.1, p)
    starts = [first, lawley_corrected(lam, ctx), flat]
    return [np.maximum(s, floor) for s in starts[:num_starts]]


def estimate_spectrum(
    lam, ctx: ConcentrationContext, opts: EstimationOptions | None = None
) -> EstimationResult:
    """Population eigenvalues minimizing the quantile distance to ``lam``.

    Every start is refined and the lowest final objective wins.  Hitting
    ``max_iterations`` is reported through ``converged=False``, not raised.
    """
    opts = opts or EstimationOptions()
    lam = as_spectrum(lam)
    if lam.size != ctx.p:
        raise ValidationError(f"lambda has length {lam.size}, expected p={ctx.p}")
    p = ctx.p
    if not np.any(lam > 0):
        return EstimationResult(np.zeros(p), 0.0, 0, True)

    def fun(t):
        return quest_quantiles(t, ctx) - lam

    def jac(t, r):
        return quest_jacobian(t, ctx, method=opts.jacobian)

    resolution = QUADRATURE_RESOLUTION * float(lam.mean()) * np.sqrt(p)

    best = None
    start_obj, init_obj = [], []
    for x0 in _initial_points(lam, ctx, opts.num_starts):
        init_obj.append(float(np.mean(fun(np.sort(x0)) ** 2)))
        x, r, it, ok = _levenberg_marquardt(
            fun,
            jac,
            x0,
            lower=opts.lower_bound,
            max_iter=opts.max_iterations,
            ftol=opts.objective_tolerance,
            resolution=resolution,
            sort=True,
        )
        obj = float(np.mean(r**2))
        start_obj.append(obj)
        log.debug("start objective %.3e -> %.3e in %d iterations", init_obj[-1], obj, it)
        if best is None or obj < best.objective:
            best = EstimationResult(np.sort(x), obj, it, ok)
    best.start_objectives = start_obj
    best.initial_objectives = init_obj
    if not best.converged:
        log.warning("spectrum estimation stopped after %d iterations", best.iterations)
    return best


def estimate_clustered_spectrum(
    lam, ctx: ConcentrationContext, spec: ClusteredSpec, opts: EstimationOptions | None = None
) -> EstimationResult:
    """Distinct eigenvalues gamma_1 < ... < gamma_M with known multiplicities.

    Optimizes over ``s`` with ``gamma = cumsum(exp(s))``, which keeps the
    ordering strict without constraints.  ``result.tau`` holds gamma.
    """
    opts = opts or EstimationOptions()
    lam = as_spectrum(lam)
    if spec.p != ctx.p or lam.size != ctx.p:
        raise ValidationError("multiplicities must sum to p and match the length of lambda")
    bounds = np.cumsum((0,) + spec.multiplicities)

    def gamma_of(s):
        return np.cumsum(np.exp(s))

    def fun(s):
        return quest_quantiles(spec.expand(gamma_of(s)), ctx) - lam

    def jac(s, r):
        gamma = gamma_of(s)
        M = gamma.size
        if opts.jacobian == "analytic":
            Jt = quest_jacobian(spec.expand(gamma), ctx, method="analytic")
            Jg = np.add.reduceat(Jt, bounds[:-1], axis=1)
        else:
            q0 = r + lam
            Jg = np.empty((ctx.p, M))
            for j in range(M):
                h = 1e-6 * max(gamma[j], gamma.mean())
                g2 = gamma.copy()
                g2[j] += h
                Jg[:, j] = (quest_quantiles(spec.expand(g2), ctx) - q0) / h
        # d gamma_k / d s_i = exp(s_i) for i <= k
        dg = np.tril(np.ones((M, M))) * np.exp(s)[None, :]
        return Jg @ dg

    def params_of(gamma):
        g = np.maximum.accumulate(np.maximum(gamma, 1e-6 * max(gamma.max(), 1e-300)))
        inc = np.diff(np.concatenate([[0.0], g]))
        inc = np.maximum(inc, 1e-4 * g[-1] / g.size)
        return np.log(inc)

    block_means = np.array([lam[a:b].mean() for a, b in zip(bounds[:-1], bounds[1:])])
    law = lawley_corrected(lam, ctx)
    law_means = np.array([law[a:b].mean() for a, b in zip(bounds[:-1], bounds[1:])])
    starts = [block_means, law_means][: opts.num_starts]
    best = None
    for g0 in starts:
        x, r, it, ok = _levenberg_marquardt(
            fun,
            jac,
            params_of(g0),
            lower=-np.inf,
            max_iter=opts.max_iterations,
            ftol=opts.objective_tolerance,
            resolution=QUADRATURE_RESOLUTION * float(lam.mean()) * np.sqrt(ctx.p),
            sort=False,
        )
        obj = float(np.mean(r**2))
        if best is None or obj < best.objective:
            best = EstimationResult(gamma_of(x), obj, it, ok)
    if np.any(np.diff(best.tau) <= 0):
        raise RuntimeError("clustered estimate lost its strict ordering")
    return best
