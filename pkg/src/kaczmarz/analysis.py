"""Closed-form convergence constants and pathwise trace certification.

Everything here is pure arithmetic on (sigma_min^2, ||A||_F^2, gamma, alpha,
beta) plus checks of recorded solver traces against the implied bounds:

* per-step contraction factor 1 - sigma^2/gamma_k for the greedy solver,
* the k-step envelopes (plain and momentum),
* iteration-complexity constants from both the in-expectation and the
  pathwise rate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .linalg import RowAccessMatrix, smallest_nonzero_singular_value
from .solvers import Trace

__all__ = [
    "RateReport",
    "MomentumReport",
    "ComplexityReport",
    "CertificationResult",
    "gamma_leaveout",
    "grk_bounds",
    "rate_report",
    "momentum_factors",
    "beta_upper",
    "iteration_complexity",
    "certify_trace",
]

# Relative slack absorbed by pathwise certification, scaled by the initial error.
CERT_SLACK_SCALE = 1e-9


@dataclass(frozen=True)
class RateReport:
    """Per-step and k-step rate constants for the greedy solver family."""

    sigma_min_sq: float
    frob_sq: float
    gamma_leaveout: float
    grk_expectation_factor: float  # per-step factor of the classic averaged rate
    igrk_factor: float             # per-step factor 1 - sigma^2/gamma (tighter)
    first_step_factor: float       # 1 - sigma^2/||A||_F^2, the k = 1 factor

    def deterministic_bound(self, k: int) -> float:
        return grk_bounds(self.sigma_min_sq, self.frob_sq, self.gamma_leaveout, k)[1]

    def expectation_bound(self, k: int) -> float:
        return grk_bounds(self.sigma_min_sq, self.frob_sq, self.gamma_leaveout, k)[0]

    def bound_curve(self, ks, kind: str = "deterministic") -> np.ndarray:
        """Bound on ||x_k - x*||^2 / ||x_0 - x*||^2 for each k in ``ks``."""
        pick = self.deterministic_bound if kind == "deterministic" else self.expectation_bound
        return np.array([pick(int(k)) for k in np.atleast_1d(ks)])


@dataclass(frozen=True)
class MomentumReport:
    """Constants of the two-term momentum recursion and its envelope."""

    alpha: float
    beta: float
    sigma_min_sq: float
    frob_sq: float
    gamma1: float
    gamma2: float
    q: float
    delta: float
    feasible: bool               # gamma1 + gamma2 < 1, so the envelope applies
    beta_upper: float | None     # largest provably safe beta (alpha <= 1 only)
    tau1: float
    tau2: float

    def envelope(self, k: int, err0_sq: float = 1.0) -> float:
        """Bound on the squared error after step k: q^k (1 + delta) err0."""
        if not self.feasible:
            raise ValueError("recursion constants infeasible (gamma1 + gamma2 >= 1)")
        return self.q**k * (1.0 + self.delta) * err0_sq


@dataclass(frozen=True)
class ComplexityReport:
    """Iteration counts guaranteeing squared error <= epsilon."""

    K1: float  # from the in-expectation rate, with confidence level rho
    K2: float  # from the pathwise rate; always <= K1
    epsilon: float
    rho: float


@dataclass(frozen=True)
class CertificationResult:
    """Outcome of checking a trace against its convergence bound."""

    passed: bool
    first_violation: int | None
    checked: int
    mode: str  # "per_step" or "envelope"


def gamma_leaveout(A: RowAccessMatrix) -> float:
    """Largest leave-one-row-out mass max_i (||A||_F^2 - ||a_i||^2).

    This bounds the active-set mass from the second iteration onward, since
    the previously projected row has zero residual.
    """
    if A.m < 2:
        raise ValueError("leave-one-out mass needs at least two rows")
    return float(A.frobenius_sq - A.row_norms_sq.min())


def grk_bounds(
    sigma_min_sq: float, frob_sq: float, gamma: float, k: int
) -> tuple[float, float]:
    """The two k-step error-ratio bounds for the greedy solver.

    Returns ``(expectation_bound, deterministic_bound)``:

    * expectation form: (1 - (frob/gamma + 1)/2 * sigma^2/frob)^(k-1) * (1 - sigma^2/frob)
    * tight pathwise form: (1 - sigma^2/gamma)^(k-1) * (1 - sigma^2/frob)

    The second is never larger than the first.
    """
    if not 0.0 < sigma_min_sq <= gamma:
        raise ValueError(f"need 0 < sigma_min_sq <= gamma, got {sigma_min_sq}, {gamma}")
    if not gamma < frob_sq:
        raise ValueError(f"need gamma < frob_sq, got {gamma}, {frob_sq}")
    if k < 0:
        raise ValueError("k must be nonnegative")
    if k == 0:
        return 1.0, 1.0
    first = 1.0 - sigma_min_sq / frob_sq
    exp_step = 1.0 - 0.5 * (frob_sq / gamma + 1.0) * sigma_min_sq / frob_sq
    det_step = 1.0 - sigma_min_sq / gamma
    return exp_step ** (k - 1) * first, det_step ** (k - 1) * first


def rate_report(A: RowAccessMatrix, sigma_min_sq: float | None = None) -> RateReport:
    """Rate constants for ``A``; computes sigma_min by dense SVD if not given."""
    if sigma_min_sq is None:
        sigma_min_sq = smallest_nonzero_singular_value(A) ** 2
    frob = A.frobenius_sq
    gamma = gamma_leaveout(A)
    return RateReport(
        sigma_min_sq=float(sigma_min_sq),
        frob_sq=frob,
        gamma_leaveout=gamma,
        grk_expectation_factor=1.0 - 0.5 * (frob / gamma + 1.0) * sigma_min_sq / frob,
        igrk_factor=1.0 - sigma_min_sq / gamma,
        first_step_factor=1.0 - sigma_min_sq / frob,
    )


def _check_momentum_hypotheses(alpha: float, beta: float) -> None:
    if beta < 0.0:
        raise ValueError(f"beta must be nonnegative, got {beta}")
    if beta == 0.0:
        if not 0.0 < alpha < 2.0:
            raise ValueError(f"with beta = 0, alpha must lie in (0, 2), got {alpha}")
    elif not 0.0 < alpha < 1.0 + beta:
        raise ValueError(f"with beta > 0, alpha must lie in (0, 1 + beta), got {alpha}")


def momentum_factors(
    alpha: float, beta: float, sigma_min_sq: float, frob_sq: float
) -> MomentumReport:
    """Two-term recursion constants for the momentum solver.

    gamma1 = 2 b^2 + 3 b + 1 - (3 a b + 2 a - a^2) sigma^2/frob,
    gamma2 = 2 b^2 + b, with envelope base q = (gamma1 + sqrt(gamma1^2
    + 4 gamma2)) / 2 (or gamma1 when gamma2 = 0) and offset delta = q - gamma1.
    The envelope applies only when gamma1 + gamma2 < 1.
    """
    _check_momentum_hypotheses(alpha, beta)
    if sigma_min_sq <= 0.0 or frob_sq <= 0.0:
        raise ValueError("sigma_min_sq and frob_sq must be positive")
    ratio = sigma_min_sq / frob_sq
    gamma1 = 2.0 * beta**2 + 3.0 * beta + 1.0 - (3.0 * alpha * beta + 2.0 * alpha - alpha**2) * ratio
    gamma2 = 2.0 * beta**2 + beta
    if gamma2 > 0.0:
        q = 0.5 * (gamma1 + math.sqrt(gamma1**2 + 4.0 * gamma2))
    else:
        q = gamma1
    delta = q - gamma1
    bound = beta_upper(alpha, sigma_min_sq, frob_sq) if alpha <= 1.0 else None
    tau1 = 4.0 - 3.0 * alpha * ratio
    tau2 = (2.0 * alpha - alpha**2) * ratio
    return MomentumReport(
        alpha=alpha, beta=beta, sigma_min_sq=sigma_min_sq, frob_sq=frob_sq,
        gamma1=gamma1, gamma2=gamma2, q=q, delta=delta,
        feasible=gamma1 + gamma2 < 1.0, beta_upper=bound, tau1=tau1, tau2=tau2,
    )


def beta_upper(alpha: float, sigma_min_sq: float, frob_sq: float) -> float:
    """Largest momentum weight with a provable envelope, for alpha in (0, 1].

    Every beta in [0, bound) makes ``momentum_factors`` feasible, where
    bound = (sqrt(tau1^2 + 16 tau2) - tau1) / 8 with tau1 = 4 - 3 alpha
    sigma^2/frob and tau2 = (2 alpha - alpha^2) sigma^2/frob.
    """
    if not 0.0 < alpha <= 1.0:
        raise ValueError(f"alpha must lie in (0, 1], got {alpha}")
    if sigma_min_sq <= 0.0 or frob_sq <= 0.0:
        raise ValueError("sigma_min_sq and frob_sq must be positive")
    ratio = sigma_min_sq / frob_sq
    tau1 = 4.0 - 3.0 * alpha * ratio
    tau2 = (2.0 * alpha - alpha**2) * ratio
    return 0.125 * (math.sqrt(tau1**2 + 16.0 * tau2) - tau1)


def iteration_complexity(
    sigma_min_sq: float, frob_sq: float, err0_sq: float, epsilon: float, rho: float
) -> ComplexityReport:
    """Iteration counts K1 (expectation route) and K2 (pathwise route).

    K1 = (frob/sigma^2) ln(err0 / (epsilon rho)) guarantees the target with
    probability 1 - rho; K2 = (frob/sigma^2) ln(err0 / epsilon) guarantees it
    outright and is never larger.
    """
    if sigma_min_sq <= 0.0 or frob_sq <= 0.0:
        raise ValueError("sigma_min_sq and frob_sq must be positive")
    if not 0.0 < epsilon < err0_sq:
        raise ValueError(f"need 0 < epsilon < err0_sq, got {epsilon}, {err0_sq}")
    if not 0.0 < rho < 1.0:
        raise ValueError(f"rho must lie in (0, 1), got {rho}")
    scale = frob_sq / sigma_min_sq
    return ComplexityReport(
        K1=scale * math.log(err0_sq / (epsilon * rho)),
        K2=scale * math.log(err0_sq / epsilon),
        epsilon=epsilon,
        rho=rho,
    )


def certify_trace(
    trace: Trace, sigma_min_sq: float, slack_scale: float = CERT_SLACK_SCALE
) -> CertificationResult:
    """Check a recorded trace against its convergence bound, step by step.

    Runs without momentum are held to the per-step contraction
    ``err_{k+1} <= (1 - sigma^2/gamma_k) err_k + slack`` using the gamma
    recorded at each step; momentum runs are held to the envelope
    ``err_{k+1} <= q^k (1 + delta) err_0 + slack``.  The slack is
    ``slack_scale`` times the initial squared error, absorbing floating-point
    accumulation only.  Returns the first violating step, if any.
    """
    if trace.initial_err_sq is None:
        raise ValueError("trace has no error metric; run with a known x_star to certify")
    err0 = trace.initial_err_sq
    slack = slack_scale * err0
    beta = trace.config.beta

    if beta == 0.0:
        prev = err0
        for rec in trace.records:
            if rec.err_sq is None:
                raise ValueError(f"record {rec.k} is missing the error metric")
            if rec.gamma is None:
                raise ValueError(
                    f"record {rec.k} has no gamma; per-step certification "
                    "applies to greedy traces only"
                )
            bound = (1.0 - sigma_min_sq / rec.gamma) * prev + slack
            if rec.err_sq > bound:
                return CertificationResult(False, rec.k, len(trace.records), "per_step")
            prev = rec.err_sq
        return CertificationResult(True, None, len(trace.records), "per_step")

    report = momentum_factors(trace.config.alpha, beta, sigma_min_sq, trace.frobenius_sq)
    if not report.feasible:
        raise ValueError(
            f"momentum constants infeasible (gamma1 + gamma2 = "
            f"{report.gamma1 + report.gamma2:.6g} >= 1); no envelope to certify against"
        )
    scale = (1.0 + report.delta) * err0
    for rec in trace.records:
        if rec.err_sq is None:
            raise ValueError(f"record {rec.k} is missing the error metric")
        if rec.err_sq > report.q**rec.k * scale + slack:
            return CertificationResult(False, rec.k, len(trace.records), "envelope")
    return CertificationResult(True, None, len(trace.records), "envelope")
