"""Command-line front end.

Exit status: 0 on success, 1 on invalid input, 2 when a numerical solver fails.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import secrets
import sys
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np

from .estimation import EstimationOptions, estimate_spectrum
from .pca import components_to_retain, explained_fraction_curve
from .quest import build_sample_spectral_model, quest_quantiles
from .shrinkage import Eigensystem, nonlinear_shrinkage
from .simulation import (
    load_design,
    run_eigenvalue_experiment,
    run_pca_experiment,
    run_shrinkage_experiment,
)
from .spectral import ConcentrationContext, SolverError, ValidationError

log = logging.getLogger(__name__)

EXIT_OK, EXIT_INVALID, EXIT_SOLVER = 0, 1, 2


@dataclass(frozen=True)
class CliConfig:
    subcommand: str
    input_path: Path
    output_path: Path
    seed: int | None = None
    header: bool = False


# ---------------------------------------------------------------------------
# CSV


def read_matrix_csv(path, *, header: bool = False) -> np.ndarray:
    """Rows are observations; every row must have the same number of numeric cells."""
    rows = []
    width = None
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        for lineno, row in enumerate(reader, start=1):
            if header and lineno == 1:
                continue
            if not row or all(not cell.strip() for cell in row):
                raise ValidationError(f"{path}: row {lineno} is empty")
            if width is None:
                width = len(row)
            elif len(row) != width:
                raise ValidationError(f"{path}: row {lineno} has {len(row)} fields, expected {width}")
            values = []
            for col, cell in enumerate(row, start=1):
                try:
                    values.append(float(cell))
                except ValueError:
                    raise ValidationError(f"{path}: row {lineno}, column {col}: not a number: {cell!r}") from None
            rows.append(values)
    if not rows:
        raise ValidationError(f"{path}: no data rows")
    out = np.array(rows, dtype=np.float64)
    if not np.all(np.isfinite(out)):
        raise ValidationError(f"{path}: non-finite values are not allowed")
    return out


def write_matrix_csv(matrix, path, *, header: list | None = None) -> None:
    """17 significant digits, which round-trips every double exactly."""
    arr = np.asarray(matrix, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[:, None]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if header:
            w.writerow(header)
        for row in arr:
            w.writerow([format(v, ".17g") for v in row])


def read_vector_csv(path, *, header: bool = False) -> np.ndarray:
    m = read_matrix_csv(path, header=header)
    if m.shape[1] != 1:
        raise ValidationError(f"{path}: expected a single column, got {m.shape[1]}")
    return m[:, 0]


# ---------------------------------------------------------------------------
# subcommands


def _cmd_quest(args) -> int:
    t = read_vector_csv(args.spectrum, header=args.header)
    ctx = ConcentrationContext(args.n, t.size)
    t = np.sort(t)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    q = quest_quantiles(t, ctx)
    write_matrix_csv(q, out / "quantiles.csv")
    model = build_sample_spectral_model(t, ctx)
    rows = [
        (k, x, f, F)
        for k, (xs, fs, Fs) in enumerate(zip(model.grid, model.density, model.cdf))
        for x, f, F in zip(xs, fs, Fs)
    ]
    write_matrix_csv(np.array(rows), out / "grid.csv", header=["interval", "x", "density", "cdf"])
    write_matrix_csv(model.support.intervals, out / "support.csv", header=["lower", "upper"])
    print(f"wrote {out}/quantiles.csv, grid.csv, support.csv (mass at zero {model.mass_at_zero:.6g})")
    return EXIT_OK


def _cmd_estimate(args) -> int:
    lam = np.sort(read_vector_csv(args.eigenvalues, header=args.header))
    ctx = ConcentrationContext(args.n, lam.size)
    opts = EstimationOptions(num_starts=args.starts, max_iterations=args.max_iterations)
    res = estimate_spectrum(lam, ctx, opts)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(res.tau, out / "tau_hat.csv")
    meta = {
        "objective": res.objective,
        "iterations": res.iterations,
        "converged": res.converged,
        "start_objectives": res.start_objectives,
        "n": ctx.n,
        "p": ctx.p,
    }
    (out / "estimate.json").write_text(json.dumps(meta, indent=2))
    print(f"objective {res.objective:.6g} after {res.iterations} iterations; wrote {out}/tau_hat.csv")
    return EXIT_OK


def _shrink_from_data(path, header: bool):
    Y = read_matrix_csv(path, header=header)
    if Y.shape[0] < 2 or Y.shape[1] < 2:
        raise ValidationError(f"{path}: need at least 2 rows and 2 columns")
    eig = Eigensystem.from_data(Y)
    res = estimate_spectrum(eig.eigenvalues, eig.ctx)
    return eig, res, nonlinear_shrinkage(eig, res.tau)


def _cmd_shrink(args) -> int:
    eig, res, shrunk = _shrink_from_data(args.data, args.header)
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    write_matrix_csv(np.column_stack([eig.eigenvalues, shrunk.d]), out / "shrinkage.csv", header=["lambda", "d_hat"])
    write_matrix_csv(shrunk.matrix, out / "covariance.csv")
    write_matrix_csv(res.tau, out / "tau_hat.csv")
    print(f"wrote {out}/shrinkage.csv, covariance.csv, tau_hat.csv")
    return EXIT_OK


def _parse_targets(text: str) -> list:
    try:
        qs = [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ValidationError(f"--targets must be comma-separated numbers, got {text!r}") from None
    if not qs or any(not 0 < q < 1 for q in qs):
        raise ValidationError("--targets must lie in (0, 1)")
    return qs


def _cmd_pca(args) -> int:
    targets = _parse_targets(args.targets)
    eig, _, shrunk = _shrink_from_data(args.data, args.header)
    sample = explained_fraction_curve(eig.eigenvalues, "sample", strict=False)
    shrink = explained_fraction_curve(shrunk.d, "shrinkage")
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    k = np.arange(1, eig.p + 1)
    write_matrix_csv(np.column_stack([k, sample.f, shrink.f]), out / "curve.csv", header=["k", "f_sample", "f_shrinkage"])
    rows = [(q, components_to_retain(sample, q), components_to_retain(shrink, q)) for q in targets]
    write_matrix_csv(np.array(rows), out / "retention.csv", header=["q", "k_sample", "k_shrinkage"])
    for q, ks, kh in rows:
        print(f"q={q:g}: retain {kh} components (sample curve says {ks})")
    return EXIT_OK


def _cmd_simulate(args) -> int:
    design = load_design(args.design)
    if args.seed is not None:
        design = replace(design, master_seed=args.seed)
    elif "master_seed" not in json.loads(Path(args.design).read_text()):
        seed = secrets.randbits(63)
        design = replace(design, master_seed=seed)
        print(f"no seed given; using master_seed={seed}")
    kind = args.experiment
    if kind == "eigenvalues":
        estimators = ["sample", "lawley", "quest"]
        if design.spectrum.get("kind") == "clustered":
            estimators.append("quest_clustered")
        report = run_eigenvalue_experiment(design, estimators)
    elif kind == "shrinkage":
        report = run_shrinkage_experiment(design)
    else:
        report = run_pca_experiment(design, _parse_targets(args.targets))
    out = Path(args.output)
    out.mkdir(parents=True, exist_ok=True)
    report.to_json(out / "report.json")
    report.to_csv(out / "report.csv")
    print(f"{report.replication_count} replications in {report.elapsed:.1f} s; wrote {out}/report.json, report.csv")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="quest-shrinkage", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def common(p, default_out):
        p.add_argument("--header", action="store_true", help="skip one header line in input CSVs")
        p.add_argument("--output", "-o", default=default_out, help="output directory")

    q = sub.add_parser("quest", help="evaluate the QuEST function")
    qsub = q.add_subparsers(dest="action", required=True)
    qe = qsub.add_parser("eval", help="model grid and quantiles for a population spectrum")
    qe.add_argument("--spectrum", required=True, help="single-column CSV of population eigenvalues")
    qe.add_argument("--n", type=int, required=True, help="sample size")
    common(qe, "quest_out")
    qe.set_defaults(func=_cmd_quest)

    e = sub.add_parser("estimate", help="estimate population eigenvalues from sample eigenvalues")
    e.add_argument("--eigenvalues", required=True)
    e.add_argument("--n", type=int, required=True)
    e.add_argument("--starts", type=int, default=EstimationOptions.num_starts)
    e.add_argument("--max-iterations", type=int, default=EstimationOptions.max_iterations)
    common(e, "estimate_out")
    e.set_defaults(func=_cmd_estimate)

    s = sub.add_parser("shrink", help="nonlinear shrinkage of the covariance of a data matrix")
    s.add_argument("--data", required=True, help="n x p CSV, rows are observations")
    common(s, "shrink_out")
    s.set_defaults(func=_cmd_shrink)

    pc = sub.add_parser("pca", help="explained-variation curve and retention counts")
    pc.add_argument("--data", required=True)
    pc.add_argument("--targets", default="0.7,0.8,0.9")
    common(pc, "pca_out")
    pc.set_defaults(func=_cmd_pca)

    sm = sub.add_parser("simulate", help="run a Monte Carlo design")
    sm.add_argument("--design", required=True, help="JSON design file")
    sm.add_argument("--experiment", choices=("eigenvalues", "shrinkage", "pca"), default="eigenvalues")
    sm.add_argument("--targets", default="0.7,0.8,0.9", help="PCA targets")
    sm.add_argument("--seed", type=int, default=None, help="overrides master_seed in the design")
    common(sm, "simulate_out")
    sm.set_defaults(func=_cmd_simulate)
    return parser


def run_cli(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on usage errors; usage problems are input errors here
        return EXIT_OK if exc.code == 0 else EXIT_INVALID
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (ValidationError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return EXIT_SOLVER


def main() -> None:
    sys.exit(run_cli())


if __name__ == "__main__":
    main()
