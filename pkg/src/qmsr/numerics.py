"""Dense linear-algebra kernels: reduced SVD, column-pivoted QR, ridge solves.

Matrices are plain float64 numpy arrays; snapshots are stored as columns.
"""

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from qmsr.exceptions import ValidationError

DEFAULT_RANK_TOLERANCE = 1e-12


def as_matrix(A, name="matrix", allow_empty=False):
    """Return `A` as a finite 2-D float64 array or raise ValidationError."""
    A = np.asarray(A, dtype=np.float64)
    if A.ndim != 2:
        raise ValidationError(f"{name} must be 2-D, got shape {A.shape}")
    if not allow_empty and (A.shape[0] < 1 or A.shape[1] < 1):
        raise ValidationError(f"{name} must be non-empty, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValidationError(f"{name} contains non-finite entries")
    return A


@dataclass(frozen=True)
class SvdFactors:
    """Reduced singular value decomposition ``A = left @ diag(s) @ right_t``.

    Only the ``rho`` singular triplets above ``rank_tolerance * s[0]`` are kept.
    """

    left: np.ndarray
    singular_values: np.ndarray
    right_t: np.ndarray
    rank_tolerance: float = DEFAULT_RANK_TOLERANCE

    @property
    def rank(self):
        return self.singular_values.shape[0]

    def reconstruct(self):
        return (self.left * self.singular_values) @ self.right_t

    def coefficients(self):
        """Return ``diag(s) @ right_t``, the data expressed in the left basis."""
        return self.singular_values[:, None] * self.right_t


def reduced_svd(A, rank_tolerance=DEFAULT_RANK_TOLERANCE):
    """Compute the reduced SVD of `A`, truncated at its numerical rank.

    Parameters
    ----------
    A : array_like, shape (n, k)
        Finite input matrix.
    rank_tolerance : float
        Singular values ``<= rank_tolerance * sigma_1`` are discarded.

    Returns
    -------
    SvdFactors
        Factors with ``rho`` columns/rows. Signs are fixed so that the entry of
        largest magnitude in each left singular vector is positive.
    """
    A = as_matrix(A, "A")
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s.size == 0 or s[0] == 0.0:
        rho = 0
    else:
        rho = int(np.count_nonzero(s > rank_tolerance * s[0]))
    U = U[:, :rho]
    s = s[:rho]
    Vt = Vt[:rho]
    if rho:
        # deterministic sign convention
        pivot = np.argmax(np.abs(U), axis=0)
        signs = np.sign(U[pivot, np.arange(rho)])
        signs[signs == 0] = 1.0
        U = U * signs
        Vt = Vt * signs[:, None]
    return SvdFactors(
        left=np.ascontiguousarray(U),
        singular_values=s.copy(),
        right_t=np.ascontiguousarray(Vt),
        rank_tolerance=float(rank_tolerance),
    )


def pivoted_qr_column_order(A, count=None):
    """Greedy column pivoting order of a QR factorization with pivoting.

    Pivot ``i`` is the column with the largest residual norm after
    orthogonalizing against pivots ``0..i-1``; exact ties go to the lowest
    index. Once ``min(rows, cols)`` pivots are taken the residual is zero and
    the remaining columns follow in ascending order.

    Parameters
    ----------
    A : array_like, shape (rows, cols)
    count : int, optional
        Number of leading pivots to return. Defaults to all columns.

    Returns
    -------
    numpy.ndarray of int
    """
    A = as_matrix(A, "A")
    rows, cols = A.shape
    if count is None:
        count = cols
    if not 0 <= count <= cols:
        raise ValidationError(f"count must lie in [0, {cols}], got {count}")

    residual = A.copy()
    basis = np.empty((rows, 0))
    chosen = np.zeros(cols, dtype=bool)
    order = []
    for _ in range(min(count, rows, cols)):
        norms = np.einsum("ij,ij->j", residual, residual)
        norms[chosen] = -1.0
        j = int(np.argmax(norms))
        if norms[j] <= 0.0:
            break
        q = residual[:, j].copy()
        # second projection keeps the basis orthonormal to working precision
        q -= basis @ (basis.T @ q)
        nq = np.linalg.norm(q)
        order.append(j)
        chosen[j] = True
        if nq == 0.0:
            continue
        q /= nq
        residual -= np.outer(q, q @ residual)
        basis = np.column_stack([basis, q])
    if len(order) < count:
        rest = np.flatnonzero(~chosen)
        order.extend(rest[: count - len(order)].tolist())
    return np.asarray(order, dtype=np.int64)


def ridge_lsq_left(R, H, gamma):
    """Solve ``min_W ||R + W H||_F^2 + gamma ||W||_F^2``.

    The closed form is ``W = -R H^T (H H^T + gamma I)^{-1}``; the symmetric
    positive definite ``p x p`` system is solved with a Cholesky factorization.

    Parameters
    ----------
    R : array_like, shape (q, k)
    H : array_like, shape (p, k)
    gamma : float
        Positive regularization weight.

    Returns
    -------
    numpy.ndarray, shape (q, p)
    """
    R = as_matrix(R, "R", allow_empty=True)
    H = as_matrix(H, "H", allow_empty=True)
    if R.shape[1] != H.shape[1]:
        raise ValidationError(
            f"R and H need the same column count, got {R.shape[1]} and {H.shape[1]}"
        )
    if not gamma > 0:
        raise ValidationError(f"gamma must be positive, got {gamma}")
    p = H.shape[0]
    if p == 0 or R.shape[0] == 0:
        return np.zeros((R.shape[0], p))
    gram = H @ H.T
    gram[np.diag_indices_from(gram)] += gamma
    rhs = H @ R.T
    try:
        factor = sla.cho_factor(gram, lower=True, check_finite=False)
        X = sla.cho_solve(factor, rhs, check_finite=False)
    except np.linalg.LinAlgError:
        # gram is numerically indefinite when ||H||^2 >> gamma / eps
        evals, evecs = np.linalg.eigh(gram)
        evals = np.maximum(evals, gamma)
        X = evecs @ ((evecs.T @ rhs) / evals[:, None])
    return -X.T


def ridge_objective(R, H, W, gamma):
    """Value of ``||R + W H||_F^2 + gamma ||W||_F^2``."""
    resid = R + W @ H
    return float(np.sum(resid * resid) + gamma * np.sum(W * W))


def pseudo_inverse(A, rank_tolerance=DEFAULT_RANK_TOLERANCE):
    """Moore-Penrose pseudo-inverse via SVD together with the numerical rank."""
    A = as_matrix(A, "A", allow_empty=True)
    m, r = A.shape
    if m == 0 or r == 0:
        return np.zeros((r, m)), 0
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    if s[0] == 0.0:
        return np.zeros((r, m)), 0
    rank = int(np.count_nonzero(s > rank_tolerance * s[0]))
    pinv = (Vt[:rank].T / s[:rank]) @ U[:, :rank].T
    return pinv, rank


def pseudo_inverse_apply(A, b, rank_tolerance=DEFAULT_RANK_TOLERANCE):
    """Minimum-norm least-squares solution ``A^+ b`` and the numerical rank of `A`.

    Rank deficiency is reported, never raised, at this level.
    """
    A = as_matrix(A, "A")
    b = np.asarray(b, dtype=np.float64)
    if b.shape[0] != A.shape[0]:
        raise ValidationError(f"b has {b.shape[0]} rows, A has {A.shape[0]}")
    pinv, rank = pseudo_inverse(A, rank_tolerance)
    return pinv @ b, rank
