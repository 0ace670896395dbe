"""Greedy row selection: threshold masses, working sets, and sampling.

The greedy methods score each row by its squared residual normalized by the
squared row norm, keep the rows whose score clears a threshold mixing the
maximum score with the mean-level term ``||r||^2 / gamma``, and then sample
one working row from that set.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

import numpy as np

from .linalg import RowAccessMatrix

__all__ = [
    "GammaMode",
    "ProbabilityRule",
    "WorkingSet",
    "active_set_gamma",
    "greedy_set",
    "sampling_distribution",
    "sample_index",
]


class GammaMode(str, Enum):
    """How the threshold mass gamma_k is computed each iteration."""

    EXACT = "exact"          # sum of squared norms over rows with nonzero residual
    LAST_ROW = "lastrow"     # Frobenius mass minus the previously projected row
    FROBENIUS = "frobenius"  # full Frobenius mass (classic greedy rule)


class ProbabilityRule(str, Enum):
    RESIDUAL = "residual"  # p_i proportional to r_i^2 over the working set
    UNIFORM = "uniform"


@dataclass(frozen=True)
class WorkingSet:
    """Rows that cleared the greedy threshold for the current residual."""

    indices: np.ndarray   # sorted row indices
    gamma: float          # threshold mass used to build the set
    active_count: int     # rows with |r_i| above the zero tolerance
    threshold: float      # right-hand side of the greedy inequality

    def __len__(self) -> int:
        return int(self.indices.size)


def active_set_gamma(
    A: RowAccessMatrix,
    r: np.ndarray,
    mode: GammaMode,
    last_index: int | None = None,
    tau_res: float = 0.0,
) -> tuple[float, int]:
    """Threshold mass gamma_k and the active-row count for residual ``r``.

    ``tau_res`` is the floating-point stand-in for "residual is nonzero";
    callers that know b should pass ``1e-14 * max(1, ||b||_inf)``.  In exact
    mode an all-quiet residual returns ``(0.0, 0)``, signalling that the
    system is already solved.  Last-row mode needs ``last_index`` from the
    previous iteration (``None`` means the first iteration, where the full
    Frobenius mass applies).
    """
    mode = GammaMode(mode)
    r = np.asarray(r)
    if r.shape[0] != A.m:
        raise ValueError(f"residual has length {r.shape[0]}, expected {A.m}")
    loud = np.abs(r) > tau_res
    count = int(np.count_nonzero(loud))
    if mode is GammaMode.EXACT:
        if count == 0:
            return 0.0, 0
        gamma = float(A.row_norms_sq[loud].sum())
    elif mode is GammaMode.LAST_ROW:
        gamma = A.frobenius_sq
        if last_index is not None:
            gamma -= float(A.row_norms_sq[last_index])
    else:
        gamma = A.frobenius_sq
    return float(gamma), count


def greedy_set(
    A: RowAccessMatrix,
    r: np.ndarray,
    gamma: float,
    theta: float = 0.5,
    active_count: int | None = None,
) -> WorkingSet:
    """Rows whose normalized squared residual clears the mixed threshold.

    Keeps every i with ``r_i^2/||a_i||^2 >= theta*max + (1-theta)*||r||^2/gamma``
    (ties included).  The best-scoring row is always a member, so the set is
    never empty for a nonzero residual.
    """
    if gamma <= 0.0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if not 0.0 <= theta <= 1.0:
        raise ValueError(f"theta must lie in [0, 1], got {theta}")
    r = np.asarray(r, dtype=np.float64)
    if r.shape[0] != A.m:
        raise ValueError(f"residual has length {r.shape[0]}, expected {A.m}")
    rss = float(r @ r)
    if rss == 0.0:
        raise ValueError("residual is zero: system already solved")

    scores = (r * r) / A.row_norms_sq
    best = int(np.argmax(scores))
    threshold = theta * float(scores[best]) + (1.0 - theta) * rss / gamma
    mask = scores >= threshold
    mask[best] = True  # guard against the argmax dropping out to rounding
    indices = np.flatnonzero(mask)

    if active_count is None:
        active_count = int(np.count_nonzero(r))

    # Every member is certified to sit at or above the mean level ||r||^2/gamma.
    assert float(scores[indices].min()) >= (rss / gamma) * (1.0 - 1e-9), (
        "greedy member below the ||r||^2/gamma certificate; "
        "gamma is smaller than the active-set mass"
    )
    return WorkingSet(indices=indices, gamma=float(gamma),
                      active_count=active_count, threshold=float(threshold))


def sampling_distribution(
    r: np.ndarray, ws: WorkingSet, rule: ProbabilityRule
) -> np.ndarray:
    """Selection probabilities over ``ws.indices``.

    Residual rule: p_i proportional to r_i^2 restricted to the working set.
    Uniform rule: 1/|ws|.  Probabilities are normalized to sum to one.
    """
    rule = ProbabilityRule(rule)
    size = len(ws)
    if size == 0:
        raise ValueError("working set is empty")
    if rule is ProbabilityRule.UNIFORM:
        return np.full(size, 1.0 / size)
    r = np.asarray(r, dtype=np.float64)
    weights = r[ws.indices] ** 2
    total = float(weights.sum())
    if total <= 0.0:
        raise ValueError("all working-set residuals are zero")
    return weights / total


def sample_index(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw from ``probs``; deterministic given the generator state.

    Returns a position into ``probs`` (the caller maps it back to a row).
    """
    probs = np.asarray(probs, dtype=np.float64)
    if probs.size == 0:
        raise ValueError("cannot sample from an empty distribution")
    cdf = np.cumsum(probs)
    if abs(cdf[-1] - 1.0) > 1e-9:
        raise ValueError(f"probabilities sum to {cdf[-1]!r}, expected 1")
    u = rng.random() * cdf[-1]
    return min(int(np.searchsorted(cdf, u, side="right")), probs.size - 1)
