"""Replicated Monte Carlo experiments with deterministic per-replication seeding.

Replication ``r`` of a design draws from
``np.random.default_rng(np.random.SeedSequence(master_seed, spawn_key=(r,)))``,
so results do not depend on how replications are distributed over workers.
"""

from __future__ import annotations

import csv
import json
import logging
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from functools import partial

import numpy as np
from scipy.stats import beta as beta_dist

from .estimation import (
    ClusteredSpec,
    EstimationOptions,
    estimate_clustered_spectrum,
    estimate_spectrum,
    lawley_corrected,
)
from .pca import components_to_retain, explained_fraction_curve
from .shrinkage import Eigensystem, finite_sample_optimal_d, linear_shrinkage_intensity, nonlinear_shrinkage
from .spectral import ConcentrationContext, ValidationError, as_spectrum

log = logging.getLogger(__name__)

EIGENVALUE_ESTIMATORS = ("sample", "lawley", "quest", "quest_clustered", "truth")
PCA_BASES = ("sample", "population", "shrinkage", "finite_sample_optimal")


def make_beta_spectrum(a_shift: float, scale: float, alpha: float, beta: float, p: int) -> np.ndarray:
    """tau_i = a_shift + scale * BetaQuantile((i - 0.5) / p), ascending."""
    if not scale > 0:
        raise ValidationError("scale must be positive")
    if not (alpha > 0 and beta > 0):
        raise ValidationError("Beta parameters must be positive")
    if p < 1:
        raise ValidationError("p must be at least 1")
    u = (np.arange(p) + 0.5) / p
    return np.sort(a_shift + scale * beta_dist.ppf(u, alpha, beta))


def clustered_multiplicities(fractions, p: int) -> tuple:
    """Integer multiplicities summing to p, proportional to ``fractions``."""
    fr = np.asarray(fractions, dtype=np.float64)
    if np.any(fr <= 0):
        raise ValidationError("fractions must be positive")
    raw = fr / fr.sum() * p
    k = np.floor(raw).astype(int)
    # largest remainders take the leftover units
    for i in np.argsort(-(raw - k), kind="stable")[: p - k.sum()]:
        k[i] += 1
    if np.any(k < 1):
        raise ValidationError(f"p={p} is too small for {fr.size} clusters")
    return tuple(int(v) for v in k)


@dataclass(frozen=True)
class SimulationDesign:
    """One simulation cell.

    ``spectrum`` is a dict with ``kind`` in {"beta_shifted", "explicit",
    "clustered"}; see ``population_spectrum`` for the keys of each kind.
    ``law`` is {"kind": "gaussian"} or {"kind": "student_t", "df": 3}.
    """

    spectrum: dict
    n: int
    p: int
    replications: int = 100
    master_seed: int = 0
    law: dict = field(default_factory=lambda: {"kind": "gaussian"})
    estimation: EstimationOptions = field(default_factory=EstimationOptions)
    skip_failures: bool = False

    def __post_init__(self) -> None:
        if self.n < 2 or self.p < 2:
            raise ValidationError("n and p must be at least 2")
        if self.replications < 1:
            raise ValidationError("replications must be at least 1")
        if not 0 <= int(self.master_seed) < 2**64:
            raise ValidationError("master_seed must be a 64-bit unsigned integer")
        kind = self.law.get("kind")
        if kind == "student_t":
            if not self.law.get("df", 0) > 2:
                raise ValidationError("student_t needs df > 2 for unit-variance scaling")
        elif kind != "gaussian":
            raise ValidationError(f"unknown variate law {kind!r}")
        if isinstance(self.estimation, dict):
            object.__setattr__(self, "estimation", EstimationOptions(**self.estimation))
        self.population_spectrum()

    @property
    def ctx(self) -> ConcentrationContext:
        return ConcentrationContext(self.n, self.p)

    def population_spectrum(self) -> np.ndarray:
        spec = self.spectrum
        kind = spec.get("kind")
        if kind == "beta_shifted":
            return make_beta_spectrum(
                spec.get("a_shift", 1.0), spec.get("scale", 10.0), spec["alpha"], spec["beta"], self.p
            )
        if kind == "explicit":
            tau = as_spectrum(spec["values"])
            if tau.size != self.p:
                raise ValidationError(f"explicit spectrum has length {tau.size}, expected {self.p}")
            return tau
        if kind == "clustered":
            return ClusteredSpec(self.multiplicities()).expand(spec["locations"])
        raise ValidationError(f"unknown spectrum kind {kind!r}")

    def multiplicities(self) -> tuple:
        spec = self.spectrum
        if spec.get("kind") != "clustered":
            raise ValidationError("multiplicities are defined for clustered spectra only")
        if "multiplicities" in spec:
            k = tuple(int(v) for v in spec["multiplicities"])
            if sum(k) != self.p:
                raise ValidationError("multiplicities must sum to p")
            return k
        return clustered_multiplicities(spec["fractions"], self.p)

    def to_dict(self) -> dict:
        out = asdict(self)
        out["estimation"] = asdict(self.estimation)
        return out

    @classmethod
    def from_dict(cls, data: dict) -> "SimulationDesign":
        data = dict(data)
        data.pop("version", None)
        unknown = set(data) - {f for f in cls.__dataclass_fields__}
        if unknown:
            raise ValidationError(f"unknown design fields: {sorted(unknown)}")
        return cls(**data)


@dataclass
class SimulationReport:
    experiment: str
    design: dict
    per_estimator_mse: dict = field(default_factory=dict)
    prial: dict = field(default_factory=dict)
    pca_rmse: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    per_replication: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)
    replication_count: int = 0
    elapsed: float = 0.0

    def results(self) -> dict:
        """Everything except timing, for reproducibility comparisons."""
        out = asdict(self)
        out.pop("elapsed")
        return out

    def to_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2, default=_json_default)

    def to_csv(self, path) -> None:
        """Long format: metric, name, q, value."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["metric", "name", "q", "value"])
            for name, v in self.per_estimator_mse.items():
                w.writerow(["mse", name, "", repr(float(v))])
            for name, v in self.prial.items():
                w.writerow(["prial", name, "", repr(float(v))])
            for key, v in self.pca_rmse.items():
                basis, q = key.split("@")
                w.writerow(["pca_rmse", basis, q, repr(float(v))])
            for name, v in self.metrics.items():
                w.writerow([name, "", "", repr(float(v))])


def _json_default(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, np.generic):
        return obj.item()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def load_design(path) -> SimulationDesign:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: line {exc.lineno}, column {exc.colno}: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ValidationError(f"{path}: the design must be a JSON object")
    try:
        return SimulationDesign.from_dict(data)
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"{path}: invalid design: {exc}") from exc


def save_design(design: SimulationDesign, path) -> None:
    with open(path, "w") as fh:
        json.dump({"version": 1, **design.to_dict()}, fh, indent=2)


# ---------------------------------------------------------------------------
# sampling


def replication_rng(master_seed: int, r: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(int(r),)))


def draw_variates(rng: np.random.Generator, shape, law: dict) -> np.ndarray:
    if law.get("kind", "gaussian") == "gaussian":
        return rng.standard_normal(shape)
    df = float(law["df"])
    return rng.standard_t(df, size=shape) / np.sqrt(df / (df - 2.0))


def simulate_sample(tau, ctx: ConcentrationContext, law: dict | None = None, seed=0, *, rng=None, return_data=False):
    """Eigensystem of S = Y'Y/n with Y = X diag(sqrt(tau)) and unit-variance X."""
    tau = as_spectrum(tau, sort=False)
    if tau.size != ctx.p:
        raise ValidationError(f"tau has length {tau.size}, expected p={ctx.p}")
    law = law or {"kind": "gaussian"}
    if rng is None:
        rng = np.random.default_rng(np.random.SeedSequence(int(seed)))
    X = draw_variates(rng, (ctx.n, ctx.p), law)
    Y = X * np.sqrt(tau)
    eig = Eigensystem.from_matrix(Y.T @ Y / ctx.n, ctx)
    return (eig, Y) if return_data else eig


# ---------------------------------------------------------------------------
# per-replication work


def _eigenvalue_replication(design: SimulationDesign, estimators: tuple, r: int) -> dict:
    tau = design.population_spectrum()
    ctx = design.ctx
    eig = simulate_sample(tau, ctx, design.law, rng=replication_rng(design.master_seed, r))
    lam = eig.eigenvalues
    out = {}
    for name in estimators:
        if name == "sample":
            est = lam
        elif name == "lawley":
            est = lawley_corrected(lam, ctx)
        elif name == "quest":
            est = estimate_spectrum(lam, ctx, design.estimation).tau
        elif name == "quest_clustered":
            spec = ClusteredSpec(design.multiplicities())
            est = spec.expand(estimate_clustered_spectrum(lam, ctx, spec, design.estimation).tau)
        else:
            est = tau
        out[name] = float(np.mean((est - tau) ** 2))
    return out


def _shrinkage_replication(design: SimulationDesign, r: int) -> dict:
    tau = design.population_spectrum()
    ctx = design.ctx
    eig, Y = simulate_sample(tau, ctx, design.law, rng=replication_rng(design.master_seed, r), return_data=True)
    lam, U = eig.eigenvalues, eig.eigenvectors
    # every estimator below is diagonal in U, so losses reduce to eigenvalue gaps
    d_star = finite_sample_optimal_d(U, np.diag(tau))
    rho, mu = linear_shrinkage_intensity(Y.T @ Y / ctx.n, Y)
    d_lin = rho * mu + (1.0 - rho) * lam
    tau_hat = estimate_spectrum(lam, ctx, design.estimation).tau
    d_hat = nonlinear_shrinkage(eig, tau_hat).d
    d_or = nonlinear_shrinkage(eig, tau).d
    return {
        "linear": float(np.mean((d_lin - d_star) ** 2)),
        "nonlinear": float(np.mean((d_hat - d_star) ** 2)),
        "oracle": float(np.mean((d_or - d_star) ** 2)),
        "sample": float(np.mean((lam - d_star) ** 2)),
        "nonlinear_to_oracle": float(np.mean((d_hat - d_or) ** 2)),
    }


def _pca_replication(design: SimulationDesign, targets: tuple, r: int) -> dict:
    tau = design.population_spectrum()
    ctx = design.ctx
    eig = simulate_sample(tau, ctx, design.law, rng=replication_rng(design.master_seed, r))
    d_star = finite_sample_optimal_d(eig.eigenvectors, np.diag(tau))
    tau_hat = estimate_spectrum(eig.eigenvalues, ctx, design.estimation).tau
    d_hat = nonlinear_shrinkage(eig, tau_hat).d
    curves = {
        "sample": explained_fraction_curve(eig.eigenvalues, "sample", strict=False),
        "population": explained_fraction_curve(tau, "population"),
        "shrinkage": explained_fraction_curve(d_hat, "shrinkage"),
        "finite_sample_optimal": explained_fraction_curve(d_star, "finite_sample_optimal"),
    }
    out = {}
    for q in targets:
        for basis, curve in curves.items():
            out[f"{basis}@{q:g}"] = components_to_retain(curve, q)
    return out


def worker_count() -> int:
    env = os.environ.get("WORKERS")
    if env:
        try:
            value = int(env)
        except ValueError as exc:
            raise ValidationError(f"WORKERS must be an integer, got {env!r}") from exc
        if value < 1:
            raise ValidationError("WORKERS must be at least 1")
        return value
    return os.cpu_count() or 1


def _guarded(fn, r):
    try:
        return r, fn(r), None
    except Exception as exc:  # reported per replication, re-raised by the caller
        return r, None, f"{type(exc).__name__}: {exc}"


def _run_replications(design: SimulationDesign, fn, workers: int | None) -> tuple[list, list]:
    workers = worker_count() if workers is None else workers
    job = partial(_guarded, fn)
    reps = range(design.replications)
    if workers <= 1:
        outcomes = [job(r) for r in reps]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            outcomes = list(pool.map(job, reps))
    results, failures = [], []
    for r, res, err in outcomes:
        if err is None:
            results.append(res)
        elif design.skip_failures:
            failures.append({"replication": r, "error": err})
        else:
            raise RuntimeError(f"replication {r} failed: {err}")
    if not results:
        raise RuntimeError("every replication failed")
    return results, failures


def _collect(results: list, keys) -> dict:
    return {k: np.array([res[k] for res in results], dtype=np.float64) for k in keys}


def run_eigenvalue_experiment(
    design: SimulationDesign, estimators=("sample", "lawley", "quest"), *, workers: int | None = None
) -> SimulationReport:
    """Mean of (1/p) * sum (est_i - tau_i)^2 over replications, per estimator."""
    estimators = tuple(estimators)
    bad = set(estimators) - set(EIGENVALUE_ESTIMATORS)
    if bad:
        raise ValidationError(f"unknown estimators: {sorted(bad)}")
    start = time.perf_counter()
    results, failures = _run_replications(design, partial(_eigenvalue_replication, design, estimators), workers)
    per = _collect(results, estimators)
    return SimulationReport(
        experiment="eigenvalues",
        design=design.to_dict(),
        per_estimator_mse={k: float(np.mean(v)) for k, v in per.items()},
        per_replication={k: v.tolist() for k, v in per.items()},
        failures=failures,
        replication_count=len(results),
        elapsed=time.perf_counter() - start,
    )


def run_shrinkage_experiment(design: SimulationDesign, *, workers: int | None = None) -> SimulationReport:
    """PRIAL against linear shrinkage, with losses measured to the best diagonal in the sample basis."""
    start = time.perf_counter()
    results, failures = _run_replications(design, partial(_shrinkage_replication, design), workers)
    keys = ("linear", "nonlinear", "oracle", "sample", "nonlinear_to_oracle")
    per = _collect(results, keys)
    bench = per["linear"]
    prials = {}
    for name in ("linear", "nonlinear", "oracle", "sample"):
        prials[name] = float(100.0 * (1.0 - per[name].mean() / bench.mean()))
    prials["finite_sample_optimal"] = 100.0
    return SimulationReport(
        experiment="shrinkage",
        design=design.to_dict(),
        per_estimator_mse={k: float(per[k].mean()) for k in ("linear", "nonlinear", "oracle", "sample")},
        prial=prials,
        metrics={"nonlinear_to_oracle": float(per["nonlinear_to_oracle"].mean())},
        per_replication={k: v.tolist() for k, v in per.items()},
        failures=failures,
        replication_count=len(results),
        elapsed=time.perf_counter() - start,
    )


def run_pca_experiment(
    design: SimulationDesign, targets=(0.7, 0.8, 0.9), *, workers: int | None = None
) -> SimulationReport:
    """RMSE of the retained-component count around the count from the d* curve."""
    targets = tuple(float(q) for q in targets)
    if any(not 0 < q < 1 for q in targets):
        raise ValidationError("targets must lie in (0, 1)")
    start = time.perf_counter()
    results, failures = _run_replications(design, partial(_pca_replication, design, targets), workers)
    rmse, per_rep = {}, {}
    for q in targets:
        truth = np.array([res[f"finite_sample_optimal@{q:g}"] for res in results], dtype=np.float64)
        for basis in PCA_BASES:
            key = f"{basis}@{q:g}"
            k = np.array([res[key] for res in results], dtype=np.float64)
            rmse[key] = float(np.sqrt(np.mean((k - truth) ** 2)))
            per_rep[key] = k.astype(int).tolist()
    return SimulationReport(
        experiment="pca",
        design=design.to_dict(),
        pca_rmse=rmse,
        per_replication=per_rep,
        failures=failures,
        replication_count=len(results),
        elapsed=time.perf_counter() - start,
    )
