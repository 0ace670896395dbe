"""Problem generation, Matrix Market IO, and experiment orchestration.

Random test matrices are built as U D V^T with orthonormalized Gaussian
factors and a uniform spectrum in [1, kappa], so rank and conditioning are
controlled exactly.  Experiments run each configured method for a fixed
number of trials with per-trial seeds ``base + t`` and aggregate iteration
counts, wall time, and optional certification outcomes into a result that
serializes to CSV or JSON.
"""

from __future__ import annotations

import csv
import io
import json
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy.io
import scipy.sparse as sp

from .analysis import certify_trace
from .linalg import (
    InconsistentSystemError,
    Problem,
    RowAccessMatrix,
    min_norm_solution,
    smallest_nonzero_singular_value,
)
from .selection import GammaMode, ProbabilityRule
from .solvers import SolverConfig, Trace, TraceRecord, run

__all__ = [
    "RandomProblemSpec",
    "ExperimentSpec",
    "TrialResult",
    "MethodResult",
    "ExperimentResult",
    "gen_random_problem",
    "read_matrix_market",
    "write_matrix_market",
    "read_vector",
    "write_vector",
    "load_problem_from_file",
    "run_experiment",
    "emit_results",
    "write_trace_csv",
    "read_trace_csv",
]

# Dense SVD for x* is only attempted up to this size.
ORACLE_SIZE_LIMIT = 2000


@dataclass(frozen=True)
class RandomProblemSpec:
    """Shape, rank, condition bound, and seed of a synthetic problem."""

    m: int
    n: int
    r: int
    kappa: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.r < 1 or self.r > min(self.m, self.n):
            raise ValueError(f"rank {self.r} must lie in [1, min(m, n) = {min(self.m, self.n)}]")
        if self.kappa <= 1.0:
            raise ValueError(f"kappa must exceed 1, got {self.kappa}")


def gen_random_problem(spec: RandomProblemSpec) -> Problem:
    """Dense random problem A = U D V^T with spectrum in [1, kappa].

    U (m x r) and V (n x r) come from thin QR of standard Gaussian matrices,
    D is diagonal with entries 1 + (kappa - 1) * uniform(0, 1).  The right-hand
    side is b = A x_true for a standard Gaussian x_true, and the stored
    reference solution is the minimum-norm one.
    """
    rng = np.random.default_rng(spec.seed)
    u, _ = np.linalg.qr(rng.standard_normal((spec.m, spec.r)))
    v, _ = np.linalg.qr(rng.standard_normal((spec.n, spec.r)))
    d = 1.0 + (spec.kappa - 1.0) * rng.uniform(size=spec.r)
    a = (u * d) @ v.T
    x_true = rng.standard_normal(spec.n)
    b = a @ x_true
    matrix = RowAccessMatrix(a)
    return Problem(matrix, b, min_norm_solution(matrix, b))


# -- Matrix Market ----------------------------------------------------------


def read_matrix_market(path) -> RowAccessMatrix:
    """Read a real-valued Matrix Market file (coordinate or array).

    Symmetric files are expanded to full storage.  Complex, pattern, and
    skew-symmetric files are rejected, as are matrices containing a zero row.
    Coordinate files load as CSR, array files as dense.
    """
    path = Path(path)
    try:
        rows, cols, entries, fmt, fieldkind, symmetry = scipy.io.mminfo(path)
    except Exception as exc:
        raise ValueError(f"{path}: not a valid Matrix Market file ({exc})") from exc
    if fieldkind == "complex":
        raise ValueError(f"{path}: complex matrices are not supported (real-valued only)")
    if fieldkind == "pattern":
        raise ValueError(f"{path}: pattern matrices carry no values; real-valued data required")
    if symmetry not in ("general", "symmetric"):
        raise ValueError(f"{path}: symmetry '{symmetry}' is not supported (general or symmetric)")
    try:
        data = scipy.io.mmread(path)
    except Exception as exc:
        raise ValueError(f"{path}: failed to parse body ({exc})") from exc
    try:
        if sp.issparse(data):
            return RowAccessMatrix(data.tocsr())
        return RowAccessMatrix(np.asarray(data, dtype=np.float64))
    except ValueError as exc:
        raise ValueError(f"{path}: {exc}") from exc


def write_matrix_market(A: RowAccessMatrix | np.ndarray, path, comment: str = "") -> Path:
    """Write a matrix in Matrix Market format (coordinate for sparse input)."""
    path = Path(path)
    if isinstance(A, RowAccessMatrix):
        payload = sp.coo_array(A._csr) if A.is_sparse else A.to_dense()
    elif sp.issparse(A):
        payload = sp.coo_array(A)
    else:
        payload = np.asarray(A, dtype=np.float64)
    scipy.io.mmwrite(path, payload, comment=comment)
    return path


def read_vector(path) -> np.ndarray:
    """Read a vector stored as an m-by-1 (or 1-by-n) Matrix Market array."""
    data = scipy.io.mmread(Path(path))
    arr = data.toarray() if sp.issparse(data) else np.asarray(data, dtype=np.float64)
    if arr.ndim == 2 and 1 not in arr.shape:
        raise ValueError(f"{path}: expected a vector, got shape {arr.shape}")
    return arr.ravel().astype(np.float64)


def write_vector(v: np.ndarray, path, comment: str = "") -> Path:
    path = Path(path)
    scipy.io.mmwrite(path, np.asarray(v, dtype=np.float64).reshape(-1, 1), comment=comment)
    return path


def load_problem_from_file(path, seed: int = 0) -> Problem:
    """Problem from a Matrix Market matrix with a synthetic right-hand side.

    Consistency is guaranteed by construction: x_true = randn(n), b = A x_true.
    The minimum-norm reference solution is computed by the dense SVD oracle
    when the matrix is small enough; otherwise solvers fall back to
    residual-based stopping.
    """
    A = read_matrix_market(path)
    rng = np.random.default_rng(seed)
    x_true = rng.standard_normal(A.n)
    b = A.matvec(x_true)
    x_star = None
    if min(A.shape) <= ORACLE_SIZE_LIMIT:
        try:
            x_star = min_norm_solution(A, b)
        except InconsistentSystemError:
            x_star = None
    return Problem(A, b, x_star)


# -- experiments --------------------------------------------------------------


@dataclass
class ExperimentSpec:
    """A problem source plus the labelled solver configs to race on it."""

    source: RandomProblemSpec | str | Path
    methods: list[tuple[str, SolverConfig]]
    trials: int = 20
    certify: bool = False
    keep_traces: bool = False  # attach each trial's full trace to the result
    problem_seed: int = 0      # b-synthesis seed for file sources
    out_path: str | None = None
    out_format: str = "csv"

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be at least 1")
        labels = [label for label, _ in self.methods]
        if len(set(labels)) != len(labels):
            raise ValueError(f"method labels must be unique, got {labels}")
        if not self.methods:
            raise ValueError("at least one method is required")
        if self.out_format not in ("csv", "json"):
            raise ValueError(f"out_format must be csv or json, got {self.out_format!r}")


@dataclass
class TrialResult:
    trial: int
    seed: int
    iters: int
    seconds: float
    final_rse: float | None
    certified: bool | None  # None when certification was not run
    termination: str
    trace: Trace | None = None  # kept only when the spec asks for it


@dataclass
class MethodResult:
    label: str
    mean_iters: float
    mean_seconds: float
    trials: list[TrialResult]
    hit_max_iters: int  # number of trials that stopped on the iteration cap


@dataclass
class ExperimentResult:
    problem: dict
    trials: int
    methods: list[MethodResult]

    def to_dict(self) -> dict:
        return {
            "problem": dict(self.problem),
            "trials": self.trials,
            "methods": [
                {
                    "label": meth.label,
                    "mean_iters": meth.mean_iters,
                    "mean_seconds": meth.mean_seconds,
                    "hit_max_iters": meth.hit_max_iters,
                    "trials": [
                        {
                            "trial": t.trial,
                            "seed": t.seed,
                            "iters": t.iters,
                            "seconds": t.seconds,
                            "final_rse": t.final_rse,
                            "certified": t.certified,
                            "termination": t.termination,
                        }
                        for t in meth.trials
                    ],
                }
                for meth in self.methods
            ],
        }


def _problem_summary(spec: ExperimentSpec, problem: Problem) -> dict:
    summary = {"m": problem.A.m, "n": problem.A.n, "has_x_star": problem.x_star is not None}
    if isinstance(spec.source, RandomProblemSpec):
        summary.update(source="random", rank=spec.source.r,
                       kappa=spec.source.kappa, seed=spec.source.seed)
    else:
        summary.update(source=str(spec.source), seed=spec.problem_seed)
    return summary


def run_experiment(spec: ExperimentSpec, problem: Problem | None = None) -> ExperimentResult:
    """Run every configured method for ``spec.trials`` independent solves.

    Trial t of a method uses seed ``config.seed + t`` on the shared problem.
    Trials that stop on the iteration cap are kept and counted, never
    dropped.  With ``certify=True`` each trace is checked against its bound
    (skipped, reported as None, when the matrix is too large for the dense
    sigma_min oracle).
    """
    if problem is None:
        if isinstance(spec.source, RandomProblemSpec):
            problem = gen_random_problem(spec.source)
        else:
            problem = load_problem_from_file(spec.source, seed=spec.problem_seed)

    sigma_min_sq = None
    if spec.certify and problem.x_star is not None and min(problem.A.shape) <= ORACLE_SIZE_LIMIT:
        sigma_min_sq = smallest_nonzero_singular_value(problem.A) ** 2

    methods = []
    for label, config in spec.methods:
        trials = []
        hit_cap = 0
        for t in range(spec.trials):
            cfg = replace(config, seed=config.seed + t)
            tic = time.perf_counter()
            trace = run(problem, cfg)
            seconds = time.perf_counter() - tic
            if trace.termination == "max_iters":
                hit_cap += 1
            certified = None
            if sigma_min_sq is not None:
                try:
                    certified = certify_trace(trace, sigma_min_sq).passed
                except ValueError:
                    certified = None
            trials.append(TrialResult(
                trial=t,
                seed=cfg.seed,
                iters=trace.iterations,
                seconds=seconds,
                final_rse=trace.final_rse(),
                certified=certified,
                termination=trace.termination,
                trace=trace if spec.keep_traces else None,
            ))
        methods.append(MethodResult(
            label=label,
            mean_iters=float(np.mean([t.iters for t in trials])),
            mean_seconds=float(np.mean([t.seconds for t in trials])),
            trials=trials,
            hit_max_iters=hit_cap,
        ))
    return ExperimentResult(problem=_problem_summary(spec, problem),
                            trials=spec.trials, methods=methods)


CSV_COLUMNS = ["method", "trial", "seed", "iters", "seconds", "final_rse", "certified"]


def emit_results(result: ExperimentResult, format: str = "csv", path=None) -> str:
    """Serialize an experiment result to CSV or JSON.

    CSV holds one row per (method, trial) followed by one summary row per
    method (trial column = "mean").  JSON nests the same data.  Returns the
    rendered text; writes it to ``path`` when given.
    """
    if format == "json":
        text = json.dumps(result.to_dict(), indent=2)
    elif format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf)
        writer.writerow(CSV_COLUMNS)
        for meth in result.methods:
            for t in meth.trials:
                writer.writerow([
                    meth.label, t.trial, t.seed, t.iters, f"{t.seconds:.6f}",
                    "" if t.final_rse is None else f"{t.final_rse:.6e}",
                    "" if t.certified is None else t.certified,
                ])
        for meth in result.methods:
            n_cert = sum(1 for t in meth.trials if t.certified)
            writer.writerow([
                meth.label, "mean", "", f"{meth.mean_iters:.2f}",
                f"{meth.mean_seconds:.6f}", "", n_cert,
            ])
        text = buf.getvalue()
    else:
        raise ValueError(f"unknown format {format!r} (expected csv or json)")
    if path is not None:
        Path(path).write_text(text)
    return text


# -- trace files --------------------------------------------------------------

TRACE_COLUMNS = ["k", "index", "set_size", "gamma", "err_sq", "res_sq"]


def write_trace_csv(trace: Trace, path) -> Path:
    """Per-iteration trace CSV with a JSON metadata comment on line one."""
    meta = {
        "variant": trace.config.variant.value,
        "alpha": trace.config.alpha,
        "beta": trace.config.beta,
        "theta": trace.config.theta,
        "gamma_mode": trace.config.resolved_gamma_mode().value,
        "prob_rule": trace.config.prob_rule.value,
        "seed": trace.config.seed,
        "termination": trace.termination,
        "initial_err_sq": trace.initial_err_sq,
        "initial_res_sq": trace.initial_res_sq,
        "frobenius_sq": trace.frobenius_sq,
        "b_inf_norm": trace.b_inf_norm,
        "x_star_norm_sq": trace.x_star_norm_sq,
    }
    path = Path(path)
    with path.open("w", newline="") as fh:
        fh.write("# " + json.dumps(meta) + "\n")
        writer = csv.writer(fh)
        writer.writerow(TRACE_COLUMNS)
        for rec in trace.records:
            writer.writerow([
                rec.k, rec.index,
                "" if rec.set_size is None else rec.set_size,
                "" if rec.gamma is None else repr(rec.gamma),
                "" if rec.err_sq is None else repr(rec.err_sq),
                repr(rec.res_sq),
            ])
    return path


def read_trace_csv(path) -> Trace:
    """Rebuild a trace from ``write_trace_csv`` output (metrics only).

    Timing, iterates, and per-record extras are not stored in the file; the
    reconstructed trace carries everything certification needs.
    """
    path = Path(path)
    with path.open() as fh:
        first = fh.readline()
        if not first.startswith("#"):
            raise ValueError(f"{path}: missing metadata line")
        meta = json.loads(first[1:].strip())
        reader = csv.DictReader(fh)
        records = []
        for row in reader:
            records.append(TraceRecord(
                k=int(row["k"]),
                index=int(row["index"]),
                set_size=int(row["set_size"]) if row["set_size"] else None,
                gamma=float(row["gamma"]) if row["gamma"] else None,
                active_count=None,
                err_sq=float(row["err_sq"]) if row["err_sq"] else None,
                res_sq=float(row["res_sq"]),
                row_residual_after=float("nan"),
                elapsed_ns=0,
            ))
    config = SolverConfig(
        variant=meta["variant"],
        alpha=meta["alpha"],
        beta=meta["beta"],
        theta=meta["theta"],
        gamma_mode=meta["gamma_mode"],
        prob_rule=meta["prob_rule"],
        seed=meta["seed"],
    )
    return Trace(
        records=records,
        termination=meta["termination"],
        initial_err_sq=meta["initial_err_sq"],
        initial_res_sq=meta["initial_res_sq"],
        final_x=None,
        config=config,
        frobenius_sq=meta["frobenius_sq"],
        b_inf_norm=meta["b_inf_norm"],
        x_star_norm_sq=meta["x_star_norm_sq"],
    )
