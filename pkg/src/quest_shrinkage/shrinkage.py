"""Rotation-equivariant covariance estimators and their loss bookkeeping."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .mp import companion_on_real_line, group_atoms, solve_mbar_at_zero, support_from_atoms
from .spectral import ConcentrationContext, ValidationError, as_spectrum

log = logging.getLogger(__name__)

ZERO_REL = 1e-12
EDGE_REL = 1e-6
KINDS = ("finite_sample_optimal", "oracle", "bona_fide", "linear")


@dataclass(frozen=True)
class Eigensystem:
    """Sample eigenvalues (ascending) with eigenvectors in matching columns."""

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    ctx: ConcentrationContext

    def __post_init__(self) -> None:
        lam = as_spectrum(self.eigenvalues, sort=False)
        U = np.asarray(self.eigenvectors, dtype=np.float64)
        p = lam.size
        if U.shape != (p, p) or p != self.ctx.p:
            raise ValidationError(f"eigenvectors must be {p}x{p} with p={self.ctx.p}")
        if np.max(np.abs(U.T @ U - np.eye(p))) > 1e-10:
            raise ValidationError("eigenvectors are not orthonormal within 1e-10")
        object.__setattr__(self, "eigenvalues", lam)
        object.__setattr__(self, "eigenvectors", U)

    @classmethod
    def from_matrix(cls, S, ctx: ConcentrationContext) -> "Eigensystem":
        """Eigendecomposition of a symmetric matrix; tiny eigenvalues snap to 0."""
        S = np.asarray(S, dtype=np.float64)
        lam, U = np.linalg.eigh(0.5 * (S + S.T))
        scale = max(float(np.mean(np.abs(lam))), np.finfo(float).tiny)
        lam = np.where(lam < ZERO_REL * scale, 0.0, lam)
        return cls(lam, U, ctx)

    @classmethod
    def from_data(cls, Y) -> "Eigensystem":
        """Eigensystem of S = Y'Y / n for an n x p data matrix."""
        Y = np.asarray(Y, dtype=np.float64)
        if Y.ndim != 2:
            raise ValidationError("data must be a 2-d array")
        n, p = Y.shape
        return cls.from_matrix(Y.T @ Y / n, ConcentrationContext(n, p))

    @property
    def p(self) -> int:
        return self.eigenvalues.size

    def reconstruct(self, d) -> np.ndarray:
        U = self.eigenvectors
        M = (U * np.asarray(d, dtype=np.float64)) @ U.T
        return 0.5 * (M + M.T)


@dataclass(frozen=True)
class ShrinkageResult:
    d: np.ndarray
    matrix: np.ndarray
    kind: str

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValidationError(f"unknown kind {self.kind!r}")
        if not np.all(self.d > 0):
            raise ValidationError("shrinkage constants must be positive")


def finite_sample_optimal_d(U, Sigma) -> np.ndarray:
    """d*_i = u_i' Sigma u_i, the best diagonal in the basis U."""
    U = np.asarray(U, dtype=np.float64)
    Sigma = np.asarray(Sigma, dtype=np.float64)
    if U.ndim != 2 or Sigma.shape != (U.shape[0], U.shape[0]) or U.shape[0] != U.shape[1]:
        raise ValidationError(f"dimension mismatch: U {U.shape}, Sigma {Sigma.shape}")
    return np.einsum("ij,ij->j", U, Sigma @ U)


def oracle_d(lam, ctx: ConcentrationContext, mbreve_at_lambda, mbar_at_zero=None) -> np.ndarray:
    """Shrinkage constants from the Stieltjes transform at the sample eigenvalues.

    ``lam_i / |1 - c - c lam_i m(lam_i)|^2`` for positive ``lam_i`` and
    ``1 / ((c - 1) mbar0)`` for zero eigenvalues when c > 1.  ``mbreve_at_lambda``
    is aligned with ``lam``; its entries at zero eigenvalues are ignored.
    """
    lam = np.asarray(lam, dtype=np.float64)
    m = np.asarray(mbreve_at_lambda, dtype=np.complex128)
    if m.shape != lam.shape:
        raise ValidationError("mbreve_at_lambda must align with lambda")
    c = ctx.c
    zero = lam <= ZERO_REL * max(float(lam.mean()), np.finfo(float).tiny)
    d = np.empty_like(lam)
    pos = ~zero
    d[pos] = lam[pos] / np.abs(1.0 - c - c * lam[pos] * m[pos]) ** 2
    if np.any(zero):
        if c <= 1:
            raise ValidationError("zero sample eigenvalues need p > n for the zero-branch formula")
        if mbar_at_zero is None or not mbar_at_zero > 0:
            raise ValidationError("a positive mbar_at_zero is required when zeros are present")
        d[zero] = 1.0 / ((c - 1.0) * mbar_at_zero)
    return d


def _mbreve(atoms, support, ctx: ConcentrationContext, x: float) -> complex:
    """Stieltjes transform of the sample law at real x > 0, with edge snapping."""
    if support.locate(x)[0] < 0:
        edges = support.intervals.ravel()
        e = edges[np.argmin(np.abs(edges - x))]
        if e > 0 and abs(x - e) <= EDGE_REL * e:
            x_eval = float(e)
        else:
            x_eval = x
    else:
        x_eval = x
    mb = companion_on_real_line(atoms, support, x_eval)
    c = ctx.c
    return mb / c + (1.0 - c) / (c * x_eval)


def stieltjes_at_eigenvalues(lam, tau_hat, ctx: ConcentrationContext) -> np.ndarray:
    """m(lam_i) of the sample law generated by ``tau_hat``; NaN at zero eigenvalues."""
    lam = np.asarray(lam, dtype=np.float64)
    atoms = group_atoms(as_spectrum(tau_hat), ctx)
    if atoms.t.size == 0:
        raise ValidationError("tau_hat must have a positive entry")
    support = support_from_atoms(atoms)
    zero = lam <= ZERO_REL * max(float(lam.mean()), np.finfo(float).tiny)
    out = np.full(lam.shape, np.nan, dtype=np.complex128)
    for i in np.flatnonzero(~zero):
        out[i] = _mbreve(atoms, support, ctx, float(lam[i]))
    return out


def nonlinear_shrinkage(eig: Eigensystem, tau_hat) -> ShrinkageResult:
    """Bona fide nonlinear shrinkage driven by an estimated population spectrum."""
    ctx = eig.ctx
    tau_hat = as_spectrum(tau_hat)
    if tau_hat.size != ctx.p:
        raise ValidationError(f"tau_hat has length {tau_hat.size}, expected p={ctx.p}")
    lam = eig.eigenvalues
    zero = lam <= ZERO_REL * max(float(lam.mean()), np.finfo(float).tiny)
    m = stieltjes_at_eigenvalues(lam, tau_hat, ctx)
    if np.any(zero) and ctx.p > ctx.n:
        d = oracle_d(lam, ctx, m, solve_mbar_at_zero(tau_hat, ctx))
    elif np.any(zero):
        # p <= n with exact zeros: no limiting formula applies at the origin
        msg = f"{zero.sum()} zero sample eigenvalues with p <= n; using the smallest positive constant"
        warnings.warn(msg, RuntimeWarning, stacklevel=2)
        log.warning(msg)
        m[zero] = 0.0
        d = oracle_d(np.where(zero, 1.0, lam), ctx, m)
        d[zero] = d[~zero].min() if np.any(~zero) else float(tau_hat.mean())
    else:
        d = oracle_d(lam, ctx, m)
    return ShrinkageResult(d, eig.reconstruct(d), "bona_fide")


def oracle_shrinkage(eig: Eigensystem, tau) -> ShrinkageResult:
    """The same formula evaluated with the true population spectrum."""
    result = nonlinear_shrinkage(eig, tau)
    return ShrinkageResult(result.d, result.matrix, "oracle")


def finite_sample_optimal(eig: Eigensystem, Sigma) -> ShrinkageResult:
    d = finite_sample_optimal_d(eig.eigenvectors, Sigma)
    return ShrinkageResult(d, eig.reconstruct(d), "finite_sample_optimal")


def linear_shrinkage_intensity(S, Y) -> tuple[float, float]:
    """(rho, mu) of the single-target linear shrinkage toward mu * I.

    ``m = tr(S)/p``, ``d2 = ||S - mI||^2``, ``b2 = min(mean_k ||y_k y_k' - S||^2 / n, d2)``
    and ``rho = b2 / d2``, with ``||A||^2 = tr(AA')/p``.
    """
    S = np.asarray(S, dtype=np.float64)
    Y = np.asarray(Y, dtype=np.float64)
    n, p = Y.shape
    if S.shape != (p, p):
        raise ValidationError(f"S is {S.shape} but the data have p={p}")
    mu = np.trace(S) / p
    d2 = np.sum((S - mu * np.eye(p)) ** 2) / p
    if d2 <= 0:
        return 0.0, float(mu)
    # ||y y' - S||^2 p = |y|^4 - 2 y'Sy + ||S||^2 p
    sq = np.einsum("ij,ij->i", Y, Y)
    quad = np.einsum("ij,ij->i", Y @ S, Y)
    per_obs = (sq**2 - 2.0 * quad + np.sum(S * S)) / p
    b2bar = per_obs.sum() / n**2
    b2 = min(b2bar, d2)
    return float(np.clip(b2 / d2, 0.0, 1.0)), float(mu)


def linear_shrinkage(S, ctx: ConcentrationContext, Y=None, *, rho=None) -> ShrinkageResult:
    """rho * mu * I + (1 - rho) * S, with rho from the data or supplied directly."""
    S = np.asarray(S, dtype=np.float64)
    p = ctx.p
    if S.shape != (p, p):
        raise ValidationError(f"S must be {p}x{p}")
    S = 0.5 * (S + S.T)
    mu = float(np.trace(S) / p)
    if rho is None:
        if Y is None:
            raise ValidationError("linear shrinkage needs the data matrix or an explicit rho")
        rho, mu = linear_shrinkage_intensity(S, Y)
    rho = float(np.clip(rho, 0.0, 1.0))
    lam, U = np.linalg.eigh(S)
    d = rho * mu + (1.0 - rho) * np.maximum(lam, 0.0)
    if rho == 0.0:
        return ShrinkageResult(np.maximum(d, np.finfo(float).tiny), S.copy(), "linear")
    M = rho * mu * np.eye(p) + (1.0 - rho) * S
    return ShrinkageResult(d, 0.5 * (M + M.T), "linear")


def frobenius_loss(A, B) -> float:
    """sqrt(tr((A - B)(A - B)') / p)."""
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    if A.shape != B.shape or A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValidationError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return float(np.sqrt(np.sum((A - B) ** 2) / A.shape[0]))


def prial(candidate_losses, benchmark_losses) -> float:
    """Percentage relative improvement in average loss over the benchmark."""
    cand = np.asarray(candidate_losses, dtype=np.float64)
    bench = np.asarray(benchmark_losses, dtype=np.float64)
    base = bench.mean()
    if not base > 0:
        raise ValidationError("benchmark mean loss must be positive")
    return float(100.0 * (1.0 - cand.mean() / base))
