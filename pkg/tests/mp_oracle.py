"""Closed-form Marchenko-Pastur law for a unit-variance population, used as a test oracle."""

from __future__ import annotations

import numpy as np
from scipy import integrate, optimize


def edges(c: float, sigma2: float = 1.0) -> tuple[float, float]:
    return sigma2 * (1 - np.sqrt(c)) ** 2, sigma2 * (1 + np.sqrt(c)) ** 2


def density(x, c: float, sigma2: float = 1.0):
    a, b = edges(c, sigma2)
    x = np.asarray(x, dtype=float)
    inside = (x > a) & (x < b)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.sqrt(np.clip((b - x) * (x - a), 0, None)) / (2 * np.pi * sigma2 * c * x)
    return np.where(inside, f, 0.0)


def atom(c: float) -> float:
    return max(0.0, 1.0 - 1.0 / c)


def cdf(x: float, c: float, sigma2: float = 1.0) -> float:
    a, b = edges(c, sigma2)
    if x < 0:
        return 0.0
    if x <= a:
        return atom(c)
    # substitute x = a + (b - a) (1 - cos th) / 2 to remove the edge singularities
    hi = np.arccos(1 - 2 * (min(x, b) - a) / (b - a))

    def g(th):
        xx = a + 0.5 * (b - a) * (1 - np.cos(th))
        return density(xx, c, sigma2) * 0.5 * (b - a) * np.sin(th)

    val, _ = integrate.quad(g, 0.0, hi, epsabs=1e-13, epsrel=1e-12, limit=200)
    return atom(c) + val


def quantile(u: float, c: float, sigma2: float = 1.0) -> float:
    a, b = edges(c, sigma2)
    if u <= atom(c):
        return 0.0
    if u >= 1:
        return b
    return optimize.brentq(lambda x: cdf(x, c, sigma2) - u, a, b, xtol=1e-14)


def bin_averages(p: int, c: float, sigma2: float = 1.0) -> np.ndarray:
    """p * integral of the quantile function over each bin [(i-1)/p, i/p].

    Computed as p * integral of x f(x) between consecutive quantiles; the atom
    at zero contributes nothing.
    """
    a, b = edges(c, sigma2)
    xq = np.array([quantile(i / p, c, sigma2) for i in range(p + 1)])
    xq = np.clip(xq, a, b)

    def g(th):
        xx = a + 0.5 * (b - a) * (1 - np.cos(th))
        return xx * density(xx, c, sigma2) * 0.5 * (b - a) * np.sin(th)

    th = np.arccos(np.clip(1 - 2 * (xq - a) / (b - a), -1, 1))
    out = np.empty(p)
    for i in range(p):
        val, _ = integrate.quad(g, th[i], th[i + 1], epsabs=1e-13, epsrel=1e-12)
        out[i] = p * val
    return out


def stieltjes_outside(x: float, c: float) -> float:
    """Real root of c x m^2 + (x - (1 - c)) m + 1 = 0 that vanishes at infinity."""
    A, B, C = c * x, x - (1 - c), 1.0
    disc = np.sqrt(B * B - 4 * A * C)
    r1, r2 = (-B + disc) / (2 * A), (-B - disc) / (2 * A)
    # m ~ -1/x for large x
    return r1 if abs(r1 + 1 / x) < abs(r2 + 1 / x) else r2


def stieltjes_upper(z: complex, c: float) -> complex:
    """Root of c z m^2 + (z - (1 - c)) m + 1 = 0 with positive imaginary part."""
    roots = np.roots([c * z, z - (1 - c), 1.0])
    return complex(roots[np.argmax(roots.imag)])
