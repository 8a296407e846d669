"""Marchenko-Pastur equation for a discrete population spectrum.

The limiting sample spectral law generated by a candidate spectrum ``t`` is
handled through its companion Stieltjes transform ``mbar`` (the transform of
the law of the n x n matrix ``Y Y' / n``).  Writing ``mbar = -1 / (u + i v)``,
the equation

    z = -1/mbar + (p/n) * (1/p) * sum_i t_i / (1 + t_i * mbar)

has a real solution ``z = x`` exactly when ``v`` solves

    phi(u, v**2) := (p/n) * (1/p) * sum_i t_i**2 / ((u - t_i)**2 + v**2) = 1,

and ``x`` is then an explicit function of ``u``.  The support of the sample
law is the image of ``{u : phi(u, 0) > 1}`` and the density there is
``v / (pi * c * (u**2 + v**2))``.  Everything in this module works in these
``u`` coordinates; the hot loops are compiled with numba.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit
from scipy.optimize import brentq

from .spectral import ConcentrationContext, SolverError, ValidationError, as_spectrum

ZERO_REL = 1e-12

_EPS = np.finfo(np.float64).eps


@dataclass(frozen=True)
class Atoms:
    """Distinct positive values of a spectrum with their frequencies.

    ``a = c * w * t**2`` and ``b = c * w * t`` are the coefficients that enter
    every evaluation of ``phi`` and of the real-line map ``x(u)``.
    """

    t: np.ndarray
    w: np.ndarray
    zero_weight: float
    c: float
    a: np.ndarray
    b: np.ndarray

    @property
    def scale(self) -> float:
        return float(self.t[-1]) if self.t.size else 0.0


def group_atoms(t, ctx: ConcentrationContext) -> Atoms:
    values = as_spectrum(t)
    if values.size != ctx.p:
        raise ValidationError(f"spectrum has length {values.size}, expected p={ctx.p}")
    mean = values.mean()
    positive = values[values >= ZERO_REL * mean] if mean > 0 else values[:0]
    tv, counts = np.unique(positive, return_counts=True)
    w = counts / ctx.p
    zero_weight = 1.0 - positive.size / ctx.p
    c = ctx.c
    return Atoms(tv, w, zero_weight, c, c * w * tv**2, c * w * tv)


def mass_at_zero(atoms: Atoms) -> float:
    return max(1.0 - 1.0 / atoms.c, atoms.zero_weight)


# ---------------------------------------------------------------------------
# compiled kernels


@njit(cache=True, error_model="numpy")
def _phi(u, t, a):
    s = 0.0
    for j in range(t.size):
        d = u - t[j]
        s += a[j] / (d * d)
    return s


@njit(cache=True, error_model="numpy")
def _dphi(u, t, a):
    s = 0.0
    for j in range(t.size):
        d = u - t[j]
        s += a[j] / (d * d * d)
    return -2.0 * s


@njit(cache=True, error_model="numpy")
def _d2phi(u, t, a):
    s = 0.0
    for j in range(t.size):
        d = u - t[j]
        d2 = d * d
        s += a[j] / (d2 * d2)
    return 6.0 * s


@njit(cache=True, error_model="numpy")
def _x_real(u, t, a, bsum):
    s = 0.0
    for j in range(t.size):
        s += a[j] / (u - t[j])
    return u + bsum + s


@njit(cache=True, error_model="numpy")
def _root_phi_one(lo, hi, t, a, increasing, atol):
    # phi(u, 0) = 1 on (lo, hi) where phi is monotone; Newton on log(phi)
    # safeguarded by bisection.
    u = 0.5 * (lo + hi)
    for _ in range(300):
        ph = _phi(u, t, a)
        f = math.log(ph)
        if f == 0.0:
            return u
        if (f > 0.0) == increasing:
            hi = u
        else:
            lo = u
        un = u - f * ph / _dphi(u, t, a)
        if not (lo < un < hi):
            un = 0.5 * (lo + hi)
        tol = 4.0 * 2.220446049250313e-16 * max(abs(un), atol)
        if abs(un - u) <= tol or hi - lo <= tol:
            return un
        u = un
    return u


@njit(cache=True, error_model="numpy")
def _argmin_phi(lo, hi, t, a, atol):
    # phi is convex between consecutive poles; its derivative increases from
    # -inf to +inf there.
    u = 0.5 * (lo + hi)
    for _ in range(300):
        g = _dphi(u, t, a)
        if g == 0.0:
            return u
        if g > 0.0:
            hi = u
        else:
            lo = u
        un = u - g / _d2phi(u, t, a)
        if not (lo < un < hi):
            un = 0.5 * (lo + hi)
        tol = 4.0 * 2.220446049250313e-16 * max(abs(un), atol)
        if abs(un - u) <= tol or hi - lo <= tol:
            return un
        u = un
    return u


@njit(cache=True, error_model="numpy")
def _support_u(t, a, atol):
    """Endpoints, in u coordinates, of the intervals where phi(u, 0) > 1."""
    K = t.size
    r = 1.01 * math.sqrt(a.sum()) + atol
    starts = np.empty(K)
    ends = np.empty(K)
    starts[0] = _root_phi_one(t[0] - r, t[0], t, a, True, atol)
    m = 0
    for j in range(K - 1):
        A = a[j] ** (1.0 / 3.0)
        B = a[j + 1] ** (1.0 / 3.0)
        d = t[j + 1] - t[j]
        # lower bound of phi on (t_j, t_{j+1}) from the two adjacent poles
        if (A + B) ** 3 >= d * d:
            continue
        us = _argmin_phi(t[j], t[j + 1], t, a, atol)
        if _phi(us, t, a) >= 1.0:
            continue
        ends[m] = _root_phi_one(t[j], us, t, a, False, atol)
        starts[m + 1] = _root_phi_one(us, t[j + 1], t, a, True, atol)
        m += 1
    ends[m] = _root_phi_one(t[K - 1], t[K - 1] + r, t, a, False, atol)
    return starts[: m + 1].copy(), ends[: m + 1].copy()


@njit(cache=True, error_model="numpy")
def _phi_s(u, s, t, a):
    f = 0.0
    g = 0.0
    for j in range(t.size):
        d = u - t[j]
        q = 1.0 / (d * d + s)
        f += a[j] * q
        g += a[j] * q * q
    return f, g


@njit(cache=True, error_model="numpy")
def _solve_s(u, t, a, guess):
    """Squared imaginary part v**2 solving phi(u, v**2) = 1 (assumes phi(u, 0) > 1)."""
    lo = 0.0
    hi = a.sum()
    # phi is convex decreasing in s: its tangent at s = 0 undershoots the root
    f0 = 0.0
    g0 = 0.0
    for j in range(t.size):
        d = u - t[j]
        d2 = d * d
        f0 += a[j] / d2
        g0 += a[j] / (d2 * d2)
    if math.isfinite(f0) and g0 > 0.0 and math.isfinite(g0):
        lo = max(lo, (f0 - 1.0) / g0)
    s = guess if lo < guess < hi else lo
    if s <= 0.0:
        s = 0.5 * hi
    for _ in range(200):
        f, g = _phi_s(u, s, t, a)
        lf = math.log(f)
        if lf > 0.0:
            lo = s
        elif lf < 0.0:
            hi = s
        else:
            return s
        sn = s + lf * f / g
        if not (lo < sn < hi):
            sn = 0.5 * (lo + hi)
        if abs(sn - s) <= 1e-15 * sn or hi - lo <= 1e-15 * hi:
            return sn
        s = sn
    return s


@njit(cache=True, error_model="numpy")
def _x_complex(u, s, t, a, bsum):
    acc = 0.0
    for j in range(t.size):
        d = u - t[j]
        acc += a[j] * d / (d * d + s)
    return u + bsum + acc


@njit(cache=True, error_model="numpy")
def _dx_du(u, s, t, a):
    # total derivative of x(u, s(u)) along the curve phi(u, s) = 1
    xu = 1.0
    xs = 0.0
    pu = 0.0
    ps = 0.0
    for j in range(t.size):
        d = u - t[j]
        q = 1.0 / (d * d + s)
        q2 = q * q
        xu += a[j] * (s - d * d) * q2
        xs -= a[j] * d * q2
        pu -= 2.0 * a[j] * d * q2
        ps -= a[j] * q2
    return xu - xs * pu / ps


@njit(cache=True, error_model="numpy")
def _interval_grid(ua, ub, npts, t, a, bsum):
    theta = np.pi * np.arange(npts) / (npts - 1)
    u = ua + (ub - ua) * 0.5 * (1.0 - np.cos(theta))
    u[0] = ua
    u[npts - 1] = ub
    s = np.zeros(npts)
    x = np.empty(npts)
    dxdu = np.zeros(npts)
    guess = 0.0
    for i in range(1, npts - 1):
        s[i] = _solve_s(u[i], t, a, guess)
        # linear extrapolation from the two previous nodes as the next guess
        if i >= 2:
            du = (u[i + 1] - u[i]) / (u[i] - u[i - 1])
            guess = s[i] + (s[i] - s[i - 1]) * du
        else:
            guess = s[i]
        dxdu[i] = _dx_du(u[i], s[i], t, a)
    for i in range(npts):
        x[i] = _x_complex(u[i], s[i], t, a, bsum)
    return theta, u, s, x, dxdu


@njit(cache=True, error_model="numpy")
def _invert_x_complex(target, ulo, uhi, t, a, bsum):
    """u in [ulo, uhi] with x(u, s(u)) = target; x is increasing along the interval."""
    lo = ulo
    hi = uhi
    s_lo = 0.0
    u = 0.5 * (lo + hi)
    s = _solve_s(u, t, a, 0.0)
    xlo = _x_complex(lo, 0.0, t, a, bsum) - target
    xhi = _x_complex(hi, 0.0, t, a, bsum) - target
    for _ in range(200):
        f = _x_complex(u, s, t, a, bsum) - target
        if f == 0.0:
            break
        if f > 0.0:
            hi = u
            xhi = f
        else:
            lo = u
            xlo = f
        # secant through the bracket, bisection when it stalls
        un = lo - xlo * (hi - lo) / (xhi - xlo)
        if not (lo < un < hi) or abs(un - u) > 0.5 * (hi - lo):
            un = 0.5 * (lo + hi)
        if hi - lo <= 4e-16 * max(abs(lo), abs(hi), 1e-300):
            break
        if abs(un - u) <= 1e-16 * max(abs(u), 1e-300):
            u = un
            s = _solve_s(u, t, a, s)
            break
        u = un
        s = _solve_s(u, t, a, s)
    return u, s


# ---------------------------------------------------------------------------
# public surface


@dataclass(frozen=True)
class SupportIntervals:
    """Support of the continuous part of the sample spectral law.

    ``intervals`` holds (lower, upper) eigenvalue pairs; ``u_bounds`` the same
    endpoints in the u coordinates used internally.  ``hard_edge`` flags a
    lowest interval starting at zero with an inverse-square-root density,
    which happens only when p = n and no population eigenvalue is zero.
    """

    intervals: np.ndarray
    mass_at_zero: float
    u_bounds: np.ndarray
    hard_edge: bool = False

    @property
    def lower(self) -> float:
        return float(self.intervals[0, 0]) if len(self.intervals) else 0.0

    @property
    def upper(self) -> float:
        return float(self.intervals[-1, 1]) if len(self.intervals) else 0.0

    def locate(self, x) -> np.ndarray:
        """Index of the interval containing each x, or -1."""
        x = np.atleast_1d(np.asarray(x, dtype=np.float64))
        idx = np.searchsorted(self.intervals[:, 0], x, side="right") - 1
        inside = (idx >= 0) & (x <= self.intervals[np.maximum(idx, 0), 1])
        return np.where(inside, idx, -1)


def support_from_atoms(atoms: Atoms) -> SupportIntervals:
    m0 = mass_at_zero(atoms)
    if atoms.t.size == 0:
        return SupportIntervals(np.zeros((0, 2)), 1.0, np.zeros((0, 2)))
    atol = atoms.scale
    starts, ends = _support_u(atoms.t, atoms.a, atol)
    bsum = float(atoms.b.sum())
    xs = np.array([_x_real(u, atoms.t, atoms.a, bsum) for u in starts])
    xe = np.array([_x_real(u, atoms.t, atoms.a, bsum) for u in ends])
    hard = False
    if abs(starts[0]) <= 1e-9 * atol:
        # the lower edge sits on the origin (c * (1 - zero_weight) == 1)
        starts[0] = 0.0
        xs[0] = 0.0
        hard = True
    if np.any(xe <= xs) or np.any(xs[1:] < xe[:-1]):
        raise SolverError("support endpoints are not ordered; boundary root finding failed")
    return SupportIntervals(np.column_stack([xs, xe]), m0, np.column_stack([starts, ends]), hard)


def compute_support(t, ctx: ConcentrationContext) -> SupportIntervals:
    """Support intervals and mass at zero of the sample spectral law generated by ``t``."""
    atoms = group_atoms(t, ctx)
    if atoms.t.size == 0:
        raise ValidationError("compute_support needs at least one positive eigenvalue")
    return support_from_atoms(atoms)


def _companion_to_stieltjes(mbar, z, c):
    return mbar / c + (1.0 - c) / (c * z)


def mp_residual(m, t, ctx: ConcentrationContext, z) -> float:
    """|m - RHS(m)| for the discretized equation of the Stieltjes transform."""
    tv = np.asarray(t, dtype=np.float64)
    c = ctx.c
    rhs = np.mean(1.0 / (tv * (1.0 - c - c * z * m) - z))
    return float(abs(m - rhs))


def solve_mp_fixed_point(t, ctx: ConcentrationContext, z, *, max_iter: int = 10_000) -> complex:
    """Stieltjes transform of the sample law at ``z`` in the upper half plane.

    The companion equation ``mbar = -1 / (z - c * mean(t / (1 + t * mbar)))``
    is iterated from ``mbar = -1/z`` (damped when the residual grows), then
    polished by Newton's method.
    """
    z = complex(z)
    if not z.imag > 0:
        raise ValidationError(f"z must lie in the upper half plane, got {z}")
    atoms = group_atoms(t, ctx)
    if atoms.t.size == 0:
        return -1.0 / z
    tv, b = atoms.t, atoms.b
    c = atoms.c

    def step(mb):
        return -1.0 / (z - np.sum(b / (1.0 + tv * mb)))

    mb = -1.0 / z
    damping = 1.0
    prev = math.inf
    res = math.inf
    for _ in range(max_iter):
        new = step(mb)
        res = abs(new - mb)
        if res > prev:
            damping = 0.5
        prev = res
        mb = mb + damping * (new - mb)
        if res <= 1e-6 * max(1.0, abs(mb)):
            break
    for _ in range(100):
        q = 1.0 + tv * mb
        h = mb * (z - np.sum(b / q)) + 1.0
        dh = z - np.sum(b / q) + mb * np.sum(b * tv / q**2)
        delta = h / dh
        mb = mb - delta
        if abs(delta) <= 1e-15 * max(1.0, abs(mb)):
            break
    m = _companion_to_stieltjes(mb, z, c)
    res = mp_residual(m, as_spectrum(t), ctx, z)
    if not res < 1e-10 * max(1.0, abs(m)) or not mb.imag > 0:
        raise SolverError(f"fixed-point solve at z={z} did not converge", residual=res)
    return complex(m)


def _real_branch_u(atoms: Atoms, support: SupportIntervals, x: float) -> float:
    """u on the increasing real branch of x(u) mapping to a point outside the support."""
    tv, a = atoms.t, atoms.a
    bsum = float(atoms.b.sum())

    def f(u):
        return _x_real(u, tv, a, bsum) - x

    ub = support.u_bounds
    scale = atoms.scale
    k = np.searchsorted(support.intervals[:, 0], x)
    if k == 0:
        hi = ub[0, 0]
        lo = min(hi, 0.0) - scale
        if x > 0 and hi > 0 and not support.hard_edge:
            lo = 0.0
        while f(lo) > 0:
            lo = hi - 2.0 * (hi - lo)
    elif k == len(ub):
        lo = ub[-1, 1]
        hi = lo + scale
        while f(hi) < 0:
            hi = lo + 2.0 * (hi - lo)
    else:
        lo, hi = ub[k - 1, 1], ub[k, 0]
    if f(lo) == 0:
        return lo
    if f(hi) == 0:
        return hi
    return brentq(f, lo, hi, xtol=1e-300, rtol=4 * _EPS, maxiter=500)


def companion_on_real_line(atoms: Atoms, support: SupportIntervals, x: float) -> complex:
    """Boundary value of the companion transform mbar at real ``x != 0``."""
    if atoms.t.size == 0:
        return complex(-1.0 / x)
    idx = int(support.locate(x)[0])
    if idx >= 0:
        ua, ub = support.u_bounds[idx]
        u, s = _invert_x_complex(float(x), ua, ub, atoms.t, atoms.a, float(atoms.b.sum()))
        return -1.0 / complex(u, math.sqrt(max(s, 0.0)))
    u = _real_branch_u(atoms, support, float(x))
    return complex(-1.0 / u, 0.0)


def stieltjes_on_real_line(
    t, ctx: ConcentrationContext, x: float, *, support: SupportIntervals | None = None
) -> complex:
    """Limit of the Stieltjes transform as z approaches the real point ``x``.

    The imaginary part divided by pi is the density of the sample law at x.
    """
    x = float(x)
    if x == 0.0 or not math.isfinite(x):
        raise ValidationError("x must be a finite nonzero real")
    atoms = group_atoms(t, ctx)
    if support is None:
        support = support_from_atoms(atoms)
    mb = companion_on_real_line(atoms, support, x)
    m = _companion_to_stieltjes(mb, x, atoms.c)
    res = mp_residual(m, as_spectrum(t), ctx, x)
    if not res <= 1e-8 * max(1.0, abs(m)):
        raise SolverError(f"real-line solve at x={x} did not converge", residual=res)
    return complex(m.real, max(m.imag, 0.0))


def solve_mbar_at_zero(tau_hat, ctx: ConcentrationContext) -> float:
    """Positive root m of m = 1 / ((1/n) * sum_i tau_i / (1 + tau_i * m)), for p > n."""
    if ctx.p <= ctx.n:
        raise ValidationError(f"solve_mbar_at_zero requires p > n (p={ctx.p}, n={ctx.n})")
    tau = as_spectrum(tau_hat)
    if tau.size != ctx.p:
        raise ValidationError(f"spectrum has length {tau.size}, expected p={ctx.p}")
    if not np.any(tau > 0):
        raise ValidationError("at least one eigenvalue must be positive")
    n = ctx.n

    def f(m):
        return np.sum(tau * m / (1.0 + tau * m)) / n - 1.0

    # f increases from -1 towards (#positive / n) - 1
    if np.count_nonzero(tau > 0) <= n:
        raise SolverError("no positive root: at most n population eigenvalues are positive")
    hi = 1.0 / tau.max()
    while f(hi) <= 0:
        hi *= 2.0
        if not math.isfinite(hi):
            raise SolverError("could not bracket the root of the zero-point equation")
    m = brentq(f, 0.0, hi, xtol=1e-300, rtol=4 * _EPS, maxiter=500)
    res = abs(m - 1.0 / (np.sum(tau / (1.0 + tau * m)) / n))
    if not res <= 1e-10 * m:
        raise SolverError("zero-point equation did not converge", residual=res)
    return float(m)
