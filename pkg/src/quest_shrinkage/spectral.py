"""Spectra, discrete spectral distributions and the quantile distance."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

WEIGHT_TOL = 1e-12


class ValidationError(ValueError):
    """Raised when an input violates a documented precondition."""


class SolverError(RuntimeError):
    """Raised when an iterative solver fails to converge.

    ``residual`` carries the last residual seen, when one is available.
    """

    def __init__(self, message: str, residual: float | None = None):
        super().__init__(message)
        self.residual = residual


def as_spectrum(values, *, sort: bool = True) -> np.ndarray:
    """Validate a vector of eigenvalues and return it as a sorted float array."""
    arr = np.asarray(values, dtype=np.float64).ravel()
    if arr.size == 0:
        raise ValidationError("spectrum must contain at least one eigenvalue")
    if not np.all(np.isfinite(arr)):
        raise ValidationError("spectrum contains non-finite values")
    if np.any(arr < 0):
        raise ValidationError("spectrum must be nonnegative")
    if sort:
        arr = np.sort(arr)
    elif np.any(np.diff(arr) < 0):
        raise ValidationError("spectrum must be sorted in ascending order")
    return arr


@dataclass(frozen=True)
class SpectrumVector:
    """Nonnegative eigenvalues sorted ascending."""

    values: np.ndarray

    def __post_init__(self) -> None:
        object.__setattr__(self, "values", as_spectrum(self.values, sort=False))
        self.values.setflags(write=False)

    @classmethod
    def from_unsorted(cls, values) -> SpectrumVector:
        return cls(as_spectrum(values))

    @property
    def p(self) -> int:
        return self.values.size

    def __len__(self) -> int:
        return self.values.size

    def __array__(self, dtype=None, copy=None):
        return np.asarray(self.values, dtype=dtype)


@dataclass(frozen=True)
class ConcentrationContext:
    """Sample size ``n``, dimension ``p`` and their ratio ``c = p / n``."""

    n: int
    p: int
    c: float = field(init=False)

    def __post_init__(self) -> None:
        if int(self.n) != self.n or self.n < 1:
            raise ValidationError(f"n must be a positive integer, got {self.n}")
        if int(self.p) != self.p or self.p < 1:
            raise ValidationError(f"p must be a positive integer, got {self.p}")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", int(self.p))
        object.__setattr__(self, "c", self.p / self.n)


@dataclass(frozen=True)
class DiscreteSpectralDistribution:
    """Finite mixture of point masses (an e.d.f. of eigenvalues or a clustered law).

    Weights within ``WEIGHT_TOL`` of summing to one are renormalized; anything
    further off is rejected.
    """

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        loc = np.asarray(self.locations, dtype=np.float64).ravel()
        w = np.asarray(self.weights, dtype=np.float64).ravel()
        if loc.size == 0 or loc.shape != w.shape:
            raise ValidationError("locations and weights must be nonempty and of equal length")
        if not (np.all(np.isfinite(loc)) and np.all(np.isfinite(w))):
            raise ValidationError("locations and weights must be finite")
        if np.any(w < 0):
            raise ValidationError("weights must be nonnegative")
        total = w.sum()
        if abs(total - 1.0) > WEIGHT_TOL:
            raise ValidationError(f"weights sum to {total!r}, not 1")
        order = np.argsort(loc, kind="stable")
        object.__setattr__(self, "locations", loc[order])
        object.__setattr__(self, "weights", w[order] / total)

    @classmethod
    def from_sample(cls, values) -> DiscreteSpectralDistribution:
        """Empirical distribution putting mass 1/p on every entry."""
        v = np.asarray(values, dtype=np.float64).ravel()
        return cls(v, np.full(v.size, 1.0 / v.size))

    @classmethod
    def clustered(cls, locations, multiplicities) -> DiscreteSpectralDistribution:
        k = np.asarray(multiplicities, dtype=np.float64)
        return cls(locations, k / k.sum())

    def cdf(self, x):
        cum = np.cumsum(self.weights)
        idx = np.searchsorted(self.locations, x, side="right")
        return np.where(idx > 0, cum[np.maximum(idx - 1, 0)], 0.0)


def edf_quantiles(dist: DiscreteSpectralDistribution, p: int) -> np.ndarray:
    """Quantiles of ``dist`` at levels (i - 0.5) / p, i = 1..p.

    Uses the right-continuous inverse ``sup{x : H(x) <= u}``, which for a
    discrete law is the first atom whose cumulative weight exceeds ``u``.
    """
    if int(p) != p or p < 1:
        raise ValidationError(f"p must be a positive integer, got {p}")
    if not isinstance(dist, DiscreteSpectralDistribution):
        raise ValidationError("dist must be a DiscreteSpectralDistribution")
    cum = np.cumsum(dist.weights)
    cum[-1] = 1.0
    levels = (np.arange(int(p)) + 0.5) / p
    idx = np.searchsorted(cum, levels, side="right")
    return dist.locations[np.minimum(idx, cum.size - 1)]


def spectral_distance_p(q1, q2) -> float:
    """Dimension-normalized Euclidean distance sqrt(mean((q1 - q2)**2))."""
    a = np.asarray(q1, dtype=np.float64).ravel()
    b = np.asarray(q2, dtype=np.float64).ravel()
    if a.size == 0 or a.shape != b.shape:
        raise ValidationError(
            f"quantile vectors must be nonempty and equally long ({a.size} vs {b.size})"
        )
    return float(np.sqrt(np.mean((a - b) ** 2)))
