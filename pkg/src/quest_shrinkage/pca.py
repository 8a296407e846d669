"""Explained-variation curves and the retention rule for principal components."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .spectral import ValidationError

BASES = ("sample", "population", "shrinkage", "finite_sample_optimal")


@dataclass(frozen=True)
class ExplainedVariationCurve:
    """f[k-1] = share of total variation in the k largest components."""

    f: np.ndarray
    basis: str = "shrinkage"

    def __post_init__(self) -> None:
        f = np.asarray(self.f, dtype=np.float64)
        if self.basis not in BASES:
            raise ValidationError(f"unknown basis {self.basis!r}")
        if f.ndim != 1 or f.size == 0:
            raise ValidationError("curve must be a nonempty vector")
        if np.any(np.diff(f) < 0) or f[0] < 0 or abs(f[-1] - 1.0) > 1e-12:
            raise ValidationError("curve must increase weakly from >= 0 to 1")
        object.__setattr__(self, "f", f)

    @property
    def p(self) -> int:
        return self.f.size

    def ascending(self) -> np.ndarray:
        """Share of total variation in the k smallest components, k = 1..p."""
        return np.concatenate([1.0 - self.f[-2::-1], [1.0]])


def explained_fraction_curve(d, basis: str = "shrinkage", *, strict: bool = True) -> ExplainedVariationCurve:
    """Cumulative shares of the largest entries of ``d``.

    ``strict=False`` admits zeros, as in sample spectra with p > n.
    """
    d = np.asarray(d, dtype=np.float64).ravel()
    if d.size == 0 or not np.all(np.isfinite(d)):
        raise ValidationError("d must be a nonempty finite vector")
    if strict and np.any(d <= 0):
        raise ValidationError("all entries of d must be positive")
    if np.any(d < 0) or not d.sum() > 0:
        raise ValidationError("d must be nonnegative with a positive sum")
    desc = np.sort(d)[::-1]
    f = np.cumsum(desc) / desc.sum()
    f = np.minimum(np.maximum.accumulate(f), 1.0)
    f[-1] = 1.0
    return ExplainedVariationCurve(f, basis)


def components_to_retain(curve: ExplainedVariationCurve, q: float) -> int:
    """Smallest k with f[k] >= q."""
    if not 0 < q < 1:
        raise ValidationError(f"q must lie in (0, 1), got {q}")
    return int(np.argmax(curve.f >= q)) + 1


def variation_attributable(W, Sigma) -> float:
    """tr(W' Sigma W): total variance of the k orthonormal combinations W'y."""
    W = np.asarray(W, dtype=np.float64)
    Sigma = np.asarray(Sigma, dtype=np.float64)
    if W.ndim != 2 or Sigma.shape != (W.shape[0], W.shape[0]):
        raise ValidationError(f"dimension mismatch: W {W.shape}, Sigma {Sigma.shape}")
    k = W.shape[1]
    if np.max(np.abs(W.T @ W - np.eye(k))) > 1e-10:
        raise ValidationError("W must have orthonormal columns within 1e-10")
    return float(np.einsum("ij,ij->", W, Sigma @ W))
