"""Row-action solver drivers: cyclic, randomized, greedy, and momentum.

One ``run`` entry point drives all four variants behind a shared config,
stopping-rule, and trace format.  A single run is strictly sequential;
concurrent runs over the same immutable ``Problem`` are safe because all
mutable state (iterates, residual, generator, trace) is per-run.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import NamedTuple

import numpy as np

from .linalg import Problem, RowAccessMatrix
from .selection import (
    GammaMode,
    ProbabilityRule,
    active_set_gamma,
    greedy_set,
    sample_index,
    sampling_distribution,
)

__all__ = [
    "SolverVariant",
    "SolverConfig",
    "SolverState",
    "TraceRecord",
    "Trace",
    "kaczmarz_project",
    "momentum_step",
    "residual_update",
    "run",
]

# Residual recomputed from scratch this often to bound incremental drift.
DEFAULT_REFRESH_EVERY = 1000

# Cap on cached residual-update directions (A @ a_i), in bytes.
_IMAGE_CACHE_BYTES = 64_000_000


class SolverVariant(str, Enum):
    CYCLIC = "cyclic"
    RK = "rk"
    GRK = "grk"
    MGRK = "mgrk"


@dataclass
class SolverConfig:
    """Variant selector plus step, momentum, and stopping parameters.

    ``gamma_mode=None`` resolves per variant: the plain greedy solver uses
    the exact active-set mass, the momentum solver the full Frobenius mass.
    ``res_zero_tol=None`` resolves to ``1e-14 * max(1, ||b||_inf)`` at run
    time; it is the floating-point test for "this residual entry is zero".
    """

    variant: SolverVariant = SolverVariant.GRK
    alpha: float = 1.0
    beta: float = 0.0
    theta: float = 0.5
    gamma_mode: GammaMode | None = None
    prob_rule: ProbabilityRule = ProbabilityRule.RESIDUAL
    seed: int = 0
    max_iters: int = 100_000
    rse_tol: float = 1e-12
    residual_tol: float = 1e-12
    res_zero_tol: float | None = None
    refresh_every: int = DEFAULT_REFRESH_EVERY

    def __post_init__(self):
        self.variant = SolverVariant(self.variant)
        if self.gamma_mode is not None:
            self.gamma_mode = GammaMode(self.gamma_mode)
        self.prob_rule = ProbabilityRule(self.prob_rule)
        if self.alpha <= 0.0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")
        if self.beta < 0.0:
            raise ValueError(f"beta must be nonnegative, got {self.beta}")
        if not 0.0 <= self.theta <= 1.0:
            raise ValueError(f"theta must lie in [0, 1], got {self.theta}")
        if self.variant is SolverVariant.GRK and self.beta != 0.0:
            raise ValueError("the grk variant runs without momentum; use mgrk for beta > 0")
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.rse_tol <= 0.0 or self.residual_tol <= 0.0:
            raise ValueError("stopping tolerances must be positive")

    def resolved_gamma_mode(self) -> GammaMode:
        if self.gamma_mode is not None:
            return self.gamma_mode
        if self.variant is SolverVariant.MGRK:
            return GammaMode.FROBENIUS
        return GammaMode.EXACT


@dataclass
class SolverState:
    """Mutable per-run state; ``x == x_prev`` at k = 0."""

    x: np.ndarray
    x_prev: np.ndarray
    r: np.ndarray
    r_prev: np.ndarray
    k: int = 0
    last_index: int | None = None


class TraceRecord(NamedTuple):
    """One completed iteration; metrics refer to the iterate after the step."""

    k: int
    index: int
    set_size: int | None
    gamma: float | None
    active_count: int | None
    err_sq: float | None
    res_sq: float
    row_residual_after: float
    elapsed_ns: int


@dataclass
class Trace:
    """Per-iteration records plus the run's initial metrics and outcome."""

    records: list[TraceRecord]
    termination: str
    initial_err_sq: float | None
    initial_res_sq: float
    final_x: np.ndarray | None
    config: SolverConfig
    frobenius_sq: float
    b_inf_norm: float
    x_star_norm_sq: float | None
    iterates: list[np.ndarray] | None = None

    @property
    def iterations(self) -> int:
        return len(self.records)

    def final_rse(self) -> float | None:
        """Relative solution error of the last iterate, if x* is known."""
        if self.initial_err_sq is None or self.x_star_norm_sq is None:
            return None
        err = self.records[-1].err_sq if self.records else self.initial_err_sq
        denom = self.x_star_norm_sq if self.x_star_norm_sq > 0.0 else 1.0
        return float(err) / denom

    def err_history(self) -> np.ndarray:
        """Squared errors [initial, after step 0, after step 1, ...]."""
        if self.initial_err_sq is None:
            raise ValueError("trace has no error metric (x* was unknown)")
        return np.array([self.initial_err_sq] + [rec.err_sq for rec in self.records])

    def selections(self) -> list[int]:
        return [rec.index for rec in self.records]


def kaczmarz_project(x: np.ndarray, a_i: np.ndarray, b_i: float, alpha: float = 1.0) -> np.ndarray:
    """Relaxed projection of x onto the hyperplane <a_i, x> = b_i.

    With alpha = 1 the result satisfies the i-th equation exactly.
    """
    a_i = np.asarray(a_i, dtype=np.float64)
    norm_sq = float(a_i @ a_i)
    if norm_sq <= 0.0:
        raise ValueError("row has zero norm")
    r_i = float(a_i @ x) - b_i
    return x - alpha * (r_i / norm_sq) * a_i


def momentum_step(
    state: SolverState, a_i: np.ndarray, b_i: float, alpha: float, beta: float
) -> np.ndarray:
    """Heavy-ball update: relaxed projection plus beta * (x - x_prev)."""
    new_x = kaczmarz_project(state.x, a_i, b_i, alpha)
    if beta != 0.0:
        new_x += beta * (state.x - state.x_prev)
    return new_x


def residual_update(
    r: np.ndarray,
    A: RowAccessMatrix,
    index: int,
    scale: float,
    beta: float = 0.0,
    r_prev: np.ndarray | None = None,
    row_image: np.ndarray | None = None,
) -> np.ndarray:
    """Residual after a rank-1 iterate change, without touching x.

    ``scale`` is the step coefficient alpha * r_index / ||a_index||^2, so the
    projection part is ``r - scale * (A @ a_index)``; with momentum the term
    ``beta * (r - r_prev)`` is added on top.
    """
    if row_image is None:
        row_image = A.row_image(index)
    out = r - scale * row_image
    if beta != 0.0:
        if r_prev is None:
            raise ValueError("momentum residual update needs the previous residual")
        out += beta * (r - r_prev)
    return out


def _initial_termination(err_sq, res_sq, x_star_norm_sq, b_norm_sq, config) -> str | None:
    if err_sq is not None:
        denom = x_star_norm_sq if x_star_norm_sq > 0.0 else 1.0
        if err_sq / denom <= config.rse_tol:
            return "rse_tol"
        return None
    denom = b_norm_sq if b_norm_sq > 0.0 else 1.0
    if res_sq / denom <= config.residual_tol:
        return "residual_tol"
    return None


def run(
    problem: Problem,
    config: SolverConfig,
    x0: np.ndarray | None = None,
    capture_iterates: bool = False,
) -> Trace:
    """Drive one solver run to a stopping rule and record its trace.

    Starts from zero unless ``x0`` is given.  Error metrics are measured
    against ``problem.x_star``, which is the correct target for x0 = 0 (and
    for any x0 whose offset from x* lies in Range(A^T)).  Identical
    (problem, config) pairs produce identical traces apart from timings.
    """
    A, b = problem.A, problem.b
    m, n = A.shape
    variant = config.variant
    gamma_mode = config.resolved_gamma_mode()
    alpha, beta, theta = config.alpha, config.beta, config.theta
    rng = np.random.default_rng(config.seed)

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=np.float64).ravel()
    if x.shape[0] != n:
        raise ValueError(f"x0 has length {x.shape[0]}, expected {n}")
    r = A.matvec(x) - b
    state = SolverState(x=x, x_prev=x.copy(), r=r, r_prev=r.copy())

    x_star = problem.x_star
    x_star_norm_sq = float(x_star @ x_star) if x_star is not None else None
    b_norm_sq = float(b @ b)
    b_inf = float(np.max(np.abs(b))) if m else 0.0
    tau_res = config.res_zero_tol
    if tau_res is None:
        tau_res = 1e-14 * max(1.0, b_inf)

    err_sq = float(np.sum((x - x_star) ** 2)) if x_star is not None else None
    res_sq = float(r @ r)
    iterates = [x.copy()] if capture_iterates else None

    trace = Trace(
        records=[],
        termination="max_iters",
        initial_err_sq=err_sq,
        initial_res_sq=res_sq,
        final_x=None,
        config=config,
        frobenius_sq=A.frobenius_sq,
        b_inf_norm=b_inf,
        x_star_norm_sq=x_star_norm_sq,
        iterates=iterates,
    )

    reason = _initial_termination(err_sq, res_sq, x_star_norm_sq, b_norm_sq, config)
    if reason is not None:
        trace.termination = reason
        trace.final_x = state.x.copy()
        return trace

    norms_sq = A.row_norms_sq
    greedy = variant in (SolverVariant.GRK, SolverVariant.MGRK)
    rk_cdf = np.cumsum(norms_sq) if variant is SolverVariant.RK else None
    image_cache: dict[int, np.ndarray] = {}
    cache_cap = max(16, _IMAGE_CACHE_BYTES // (8 * m))
    refresh = config.refresh_every
    t0 = time.perf_counter_ns()

    for k in range(config.max_iters):
        state.k = k
        set_size = gamma_rec = active_rec = None

        if greedy:
            last = state.last_index if gamma_mode is GammaMode.LAST_ROW else None
            gamma, active = active_set_gamma(A, state.r, gamma_mode, last, tau_res)
            if active == 0:
                trace.termination = "converged"
                break
            ws = greedy_set(A, state.r, gamma, theta, active_count=active)
            probs = sampling_distribution(state.r, ws, config.prob_rule)
            i = int(ws.indices[sample_index(probs, rng)])
            set_size, gamma_rec, active_rec = len(ws), gamma, active
        elif variant is SolverVariant.RK:
            u = rng.random() * rk_cdf[-1]
            i = min(int(np.searchsorted(rk_cdf, u, side="right")), m - 1)
        else:
            i = k % m

        coeff = alpha * state.r[i] / norms_sq[i]
        image = image_cache.get(i)
        if image is None:
            image = A.row_image(i)
            if len(image_cache) < cache_cap:
                image_cache[i] = image

        if beta != 0.0:
            new_x = state.x + beta * (state.x - state.x_prev)
            A.axpy_row(i, -coeff, new_x)
            new_r = state.r - coeff * image + beta * (state.r - state.r_prev)
        else:
            new_x = state.x.copy()
            A.axpy_row(i, -coeff, new_x)
            new_r = state.r - coeff * image
        state.x_prev, state.x = state.x, new_x
        state.r_prev, state.r = state.r, new_r
        state.last_index = i

        if refresh and (k + 1) % refresh == 0:
            state.r = A.matvec(state.x) - b
            if beta != 0.0:
                state.r_prev = A.matvec(state.x_prev) - b

        if x_star is not None:
            err_sq = float(np.sum((state.x - x_star) ** 2))
        res_sq = float(state.r @ state.r)
        trace.records.append(TraceRecord(
            k=k,
            index=i,
            set_size=set_size,
            gamma=gamma_rec,
            active_count=active_rec,
            err_sq=err_sq,
            res_sq=res_sq,
            row_residual_after=abs(float(state.r[i])),
            elapsed_ns=time.perf_counter_ns() - t0,
        ))
        if capture_iterates:
            iterates.append(state.x.copy())

        if x_star is not None:
            denom = x_star_norm_sq if x_star_norm_sq > 0.0 else 1.0
            if err_sq / denom <= config.rse_tol:
                trace.termination = "rse_tol"
                break
        else:
            denom = b_norm_sq if b_norm_sq > 0.0 else 1.0
            if res_sq / denom <= config.residual_tol:
                trace.termination = "residual_tol"
                break

    trace.final_x = state.x.copy()
    return trace


def config_for_trial(config: SolverConfig, trial: int) -> SolverConfig:
    """Copy of ``config`` with the per-trial seed ``config.seed + trial``."""
    return replace(config, seed=config.seed + trial)
