"""Row-selection sampling operators and QDEIM point selection."""

from dataclasses import dataclass

import numpy as np

from qmsr.exceptions import ValidationError
from qmsr.numerics import as_matrix, pivoted_qr_column_order

ORTHONORMALITY_TOLERANCE = 1e-8


@dataclass(frozen=True, eq=False)
class SamplingOperator:
    """Select the rows ``indices`` (0-based, ordered) of vectors in ``R^ambient_dim``."""

    ambient_dim: int
    indices: np.ndarray

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        if idx.size < 1:
            raise ValidationError("a sampling operator needs at least one index")
        if idx.min() < 0 or idx.max() >= self.ambient_dim:
            raise ValidationError(
                f"sampling indices must lie in [0, {self.ambient_dim})"
            )
        if np.unique(idx).size != idx.size:
            raise ValidationError("sampling indices must be distinct")
        idx.setflags(write=False)
        object.__setattr__(self, "ambient_dim", int(self.ambient_dim))
        object.__setattr__(self, "indices", idx)

    @property
    def m(self):
        return self.indices.size

    @property
    def is_full(self):
        """True when every row is sampled in natural order."""
        return self.m == self.ambient_dim and bool(
            np.all(self.indices == np.arange(self.ambient_dim))
        )

    @classmethod
    def full(cls, n):
        return cls(n, np.arange(n))

    def __eq__(self, other):
        if not isinstance(other, SamplingOperator):
            return NotImplemented
        return self.ambient_dim == other.ambient_dim and np.array_equal(
            self.indices, other.indices
        )

    def __call__(self, x):
        return apply_sampling(self, x)


def apply_sampling(P, x):
    """Return rows ``P.indices`` of a vector or of a matrix of column snapshots."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim not in (1, 2) or x.shape[0] != P.ambient_dim:
        raise ValidationError(
            f"expected leading dimension {P.ambient_dim}, got shape {x.shape}"
        )
    return x[P.indices]


def qdeim_select(U_m):
    """QDEIM sampling points from a basis with orthonormal columns.

    Runs column-pivoted QR on ``U_m.T`` and keeps the first ``m`` pivots, i.e.
    the rows of `U_m` chosen greedily by residual norm.

    Parameters
    ----------
    U_m : array_like, shape (n, m)
        Orthonormal columns, ``m <= n``.

    Returns
    -------
    SamplingOperator
    """
    U_m = as_matrix(U_m, "U_m")
    n, m = U_m.shape
    if m > n:
        raise ValidationError(f"cannot select {m} samples from dimension {n}")
    gram_err = np.max(np.abs(U_m.T @ U_m - np.eye(m)))
    if gram_err > ORTHONORMALITY_TOLERANCE:
        raise ValidationError(
            f"U_m columns are not orthonormal (max |U^T U - I| = {gram_err:.3e})"
        )
    return SamplingOperator(n, pivoted_qr_column_order(U_m.T, count=m))
