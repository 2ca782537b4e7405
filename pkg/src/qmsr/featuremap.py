"""Quadratic feature map and its Jacobian.

Features are ordered as the row-major upper triangle of ``q q^T`` including
the diagonal: ``[q1 q1, q1 q2, ..., q1 qr, q2 q2, ..., qr qr]``. All
coefficients are one (no sqrt(2) scaling of cross terms).
"""

import numpy as np


def feature_dim(r):
    """Number of quadratic features for reduced dimension `r`."""
    return r * (r + 1) // 2


def _index_pairs(r):
    return np.triu_indices(r)


def quad_features(q):
    q = np.asarray(q, dtype=np.float64)
    i, j = _index_pairs(q.shape[0])
    return q[i] * q[j]


def quad_features_matrix(Q):
    """Apply :func:`quad_features` to every column of `Q` (shape ``r x k``)."""
    Q = np.asarray(Q, dtype=np.float64)
    i, j = _index_pairs(Q.shape[0])
    return Q[i] * Q[j]


def quad_features_jacobian(q):
    """Jacobian of the feature map at `q`, shape ``(r(r+1)/2, r)``.

    Row ``(i, j)`` holds ``d(q_i q_j)/dq_l = delta_il q_j + delta_jl q_i``.
    """
    q = np.asarray(q, dtype=np.float64)
    r = q.shape[0]
    i, j = _index_pairs(r)
    rows = np.arange(i.size)
    jac = np.zeros((i.size, r))
    np.add.at(jac, (rows, i), q[j])
    np.add.at(jac, (rows, j), q[i])
    return jac
