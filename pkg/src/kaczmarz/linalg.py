"""Row-access matrices and the dense spectral oracles built on top of them.

Every solver in this package touches the matrix only through per-row dot
products, row axpy updates, and full matvecs, so dense and CSR storage sit
behind a single class that caches the squared row norms once at
construction.  The SVD-based helpers (smallest nonzero singular value,
minimum-norm solution) are analysis and test utilities for desk-scale
matrices; they never run on the solver hot path.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp

__all__ = [
    "InconsistentSystemError",
    "RowAccessMatrix",
    "Problem",
    "residual",
    "smallest_nonzero_singular_value",
    "min_norm_solution",
]

# Consistency test for Ax = b, relative to max(1, ||b||_2).
CONSISTENCY_RTOL = 1e-8


class InconsistentSystemError(ValueError):
    """Raised when a right-hand side is not (numerically) in Range(A)."""


def _as_vector(v, length: int, name: str) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64).ravel()
    if arr.shape[0] != length:
        raise ValueError(f"{name} has length {arr.shape[0]}, expected {length}")
    return arr


class RowAccessMatrix:
    """An immutable m-by-n matrix with cached squared row norms.

    Accepts a dense 2-D array-like or any scipy sparse matrix (stored in
    canonical CSR form).  Rows with zero norm are rejected outright: every
    row must define a hyperplane for projection methods to make sense.
    """

    def __init__(self, matrix):
        if sp.issparse(matrix):
            csr = sp.csr_array(matrix, dtype=np.float64, copy=True)
            csr.sum_duplicates()
            csr.sort_indices()
            csr.eliminate_zeros()
            if csr.shape[0] < 1 or csr.shape[1] < 1:
                raise ValueError("matrix must have at least one row and column")
            self._dense = None
            self._csr = csr
            sq = csr.copy()
            sq.data **= 2
            self.row_norms_sq = np.asarray(sq.sum(axis=1)).ravel()
            for arr in (csr.data, csr.indices, csr.indptr):
                arr.setflags(write=False)
        else:
            dense = np.array(matrix, dtype=np.float64, copy=True, order="C")
            if dense.ndim != 2:
                raise ValueError(f"expected a 2-D matrix, got ndim={dense.ndim}")
            if dense.shape[0] < 1 or dense.shape[1] < 1:
                raise ValueError("matrix must have at least one row and column")
            self._dense = dense
            self._csr = None
            self.row_norms_sq = np.einsum("ij,ij->i", dense, dense)
            dense.setflags(write=False)

        zero_rows = np.flatnonzero(self.row_norms_sq == 0.0)
        if zero_rows.size:
            raise ValueError(
                f"row {int(zero_rows[0])} has zero norm "
                f"({zero_rows.size} zero row(s) total); all rows must be nonzero"
            )
        self.row_norms_sq.setflags(write=False)
        self.frobenius_sq = float(self.row_norms_sq.sum())

    # -- shape -------------------------------------------------------------

    @property
    def shape(self) -> tuple[int, int]:
        return self._dense.shape if self._dense is not None else self._csr.shape

    @property
    def m(self) -> int:
        return self.shape[0]

    @property
    def n(self) -> int:
        return self.shape[1]

    @property
    def is_sparse(self) -> bool:
        return self._csr is not None

    def __repr__(self) -> str:
        kind = "sparse" if self.is_sparse else "dense"
        return f"RowAccessMatrix({self.m}x{self.n}, {kind})"

    # -- row access ---------------------------------------------------------

    def row(self, i: int) -> np.ndarray:
        """Row i as a dense length-n vector (a view for dense storage)."""
        if self._dense is not None:
            return self._dense[i]
        out = np.zeros(self.n)
        lo, hi = self._csr.indptr[i], self._csr.indptr[i + 1]
        out[self._csr.indices[lo:hi]] = self._csr.data[lo:hi]
        return out

    def row_dot(self, i: int, x: np.ndarray) -> float:
        """<a_i, x> without densifying sparse rows."""
        if self._dense is not None:
            return float(self._dense[i] @ x)
        lo, hi = self._csr.indptr[i], self._csr.indptr[i + 1]
        return float(self._csr.data[lo:hi] @ x[self._csr.indices[lo:hi]])

    def axpy_row(self, i: int, coeff: float, out: np.ndarray) -> None:
        """In-place out += coeff * a_i."""
        if self._dense is not None:
            out += coeff * self._dense[i]
        else:
            lo, hi = self._csr.indptr[i], self._csr.indptr[i + 1]
            out[self._csr.indices[lo:hi]] += coeff * self._csr.data[lo:hi]

    def row_image(self, i: int) -> np.ndarray:
        """A @ a_i, the image of row i; the rank-1 residual-update direction."""
        if self._dense is not None:
            return self._dense @ self._dense[i]
        return self._csr @ self.row(i)

    # -- whole-matrix products ----------------------------------------------

    def matvec(self, x: np.ndarray) -> np.ndarray:
        if self._dense is not None:
            return self._dense @ x
        return self._csr @ x

    def __matmul__(self, x: np.ndarray) -> np.ndarray:
        return self.matvec(x)

    def to_dense(self) -> np.ndarray:
        if self._dense is not None:
            return self._dense
        return self._csr.toarray()

    def validate(self, rtol: float = 1e-12) -> None:
        """Check the construction invariants; used by tests."""
        total = float(self.row_norms_sq.sum())
        if abs(total - self.frobenius_sq) > rtol * max(1.0, abs(self.frobenius_sq)):
            raise AssertionError("cached Frobenius mass disagrees with row norms")
        if self.is_sparse:
            indptr, indices = self._csr.indptr, self._csr.indices
            if np.any(np.diff(indptr) < 0):
                raise AssertionError("CSR row pointers must be nondecreasing")
            for i in range(self.m):
                cols = indices[indptr[i]:indptr[i + 1]]
                if cols.size > 1 and np.any(np.diff(cols) <= 0):
                    raise AssertionError(f"CSR column indices not strictly increasing in row {i}")


class Problem:
    """A consistent linear system Ax = b with an optional reference solution.

    ``x_star`` is the minimum-norm solution (the limit of all solvers here
    when started from zero); when present it must satisfy the system to
    within ``CONSISTENCY_RTOL``.
    """

    def __init__(self, A: RowAccessMatrix, b, x_star=None):
        if not isinstance(A, RowAccessMatrix):
            A = RowAccessMatrix(A)
        self.A = A
        self.b = _as_vector(b, A.m, "b")
        self.b.setflags(write=False)
        if x_star is not None:
            x_star = _as_vector(x_star, A.n, "x_star")
            gap = float(np.linalg.norm(A.matvec(x_star) - self.b))
            limit = CONSISTENCY_RTOL * max(1.0, float(np.linalg.norm(self.b)))
            if gap > limit:
                raise InconsistentSystemError(
                    f"x_star does not solve the system: ||Ax*-b|| = {gap:.3e} > {limit:.3e}"
                )
            x_star.setflags(write=False)
        self.x_star = x_star

    def __repr__(self) -> str:
        star = "with x*" if self.x_star is not None else "no x*"
        return f"Problem({self.A!r}, {star})"


def residual(A: RowAccessMatrix, x, b) -> np.ndarray:
    """Residual vector r with r_i = <a_i, x> - b_i."""
    x = _as_vector(x, A.n, "x")
    b = _as_vector(b, A.m, "b")
    return A.matvec(x) - b


def _svd_rank_cutoff(s: np.ndarray, m: int, n: int) -> float:
    # Standard numerical-rank convention: max(m, n) * sigma_max * eps.
    return max(m, n) * float(s[0]) * np.finfo(np.float64).eps


def smallest_nonzero_singular_value(A: RowAccessMatrix) -> float:
    """Smallest singular value above the numerical-rank cutoff.

    Computed by full dense SVD, so intended for desk-scale matrices
    (min(m, n) up to roughly 2000).
    """
    s = np.linalg.svd(A.to_dense(), compute_uv=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("matrix is numerically zero")
    cutoff = _svd_rank_cutoff(s, A.m, A.n)
    nonzero = s[s > cutoff]
    if nonzero.size == 0:
        raise ValueError("matrix is numerically zero (all singular values below cutoff)")
    return float(nonzero[-1])


def min_norm_solution(A: RowAccessMatrix, b) -> np.ndarray:
    """Least-Euclidean-norm solution of a consistent system Ax = b.

    Uses the same SVD and rank cutoff as ``smallest_nonzero_singular_value``.
    Raises ``InconsistentSystemError`` when b is not in Range(A).
    """
    b = _as_vector(b, A.m, "b")
    u, s, vt = np.linalg.svd(A.to_dense(), full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        raise ValueError("matrix is numerically zero")
    cutoff = _svd_rank_cutoff(s, A.m, A.n)
    keep = s > cutoff
    x = vt[keep].T @ ((u[:, keep].T @ b) / s[keep])
    gap = float(np.linalg.norm(A.matvec(x) - b))
    limit = CONSISTENCY_RTOL * max(1.0, float(np.linalg.norm(b)))
    if gap > limit:
        raise InconsistentSystemError(
            f"system is inconsistent: best residual ||Ax-b|| = {gap:.3e} > {limit:.3e}"
        )
    return x
