"""Fitting quadratic manifolds: sparse greedy selection, weight fits, baselines."""

import logging
import time
from dataclasses import dataclass

import numpy as np

from qmsr.exceptions import RankDeficientError, ValidationError
from qmsr.featuremap import feature_dim, quad_features_matrix
from qmsr.manifold import ENCODER_RANK_TOLERANCE, QuadraticManifoldModel
from qmsr.numerics import (
    DEFAULT_RANK_TOLERANCE,
    as_matrix,
    pseudo_inverse,
    reduced_svd,
    ridge_lsq_left,
    ridge_objective,
)
from qmsr.sampling import SamplingOperator, apply_sampling, qdeim_select

log = logging.getLogger(__name__)

OBJECTIVE_MODES = ("direct", "reduced")


def default_candidates(r, k, rank):
    """Candidate pool size used when none is given: ``min(k, rank, 4r + 50)``."""
    return min(k, rank, 4 * r + 50)


@dataclass(frozen=True)
class TrainingConfig:
    """Inputs of the greedy training.

    Attributes
    ----------
    r : int
        Reduced dimension.
    m : int or None
        Number of sparse samples; ``m >= r``. Ignored by full-data training.
    M : int or None
        Candidate pool size (leading left singular vectors scanned). ``None``
        selects :func:`default_candidates`.
    gamma : float
        Ridge regularization of the weight fit.
    rank_tolerance : float
        Relative cut-off defining the numerical rank of the data.
    objective_mode : {"reduced", "direct"}
    generator : str
        Provenance label stored in the model.
    """

    r: int
    m: int | None = None
    M: int | None = None
    gamma: float = 1e-8
    rank_tolerance: float = DEFAULT_RANK_TOLERANCE
    objective_mode: str = "reduced"
    generator: str = ""

    def __post_init__(self):
        if self.r < 1:
            raise ValidationError("r must be at least 1")
        if self.m is not None and self.m < self.r:
            raise ValidationError(f"m={self.m} must be at least r={self.r}")
        if self.M is not None and self.M < self.r:
            raise ValidationError(f"M={self.M} must be at least r={self.r}")
        if not self.gamma > 0:
            raise ValidationError("gamma must be positive")
        if self.objective_mode not in OBJECTIVE_MODES:
            raise ValidationError(f"unknown objective mode {self.objective_mode!r}")


def _sparse_encode_matrix(V, P, rank_tolerance=ENCODER_RANK_TOLERANCE):
    """``(P V)^+`` or RankDeficientError; ``V^T`` for a full sampler."""
    if P.is_full:
        return V.T
    pinv, rank = pseudo_inverse(V[P.indices], rank_tolerance)
    if rank < V.shape[1]:
        raise RankDeficientError(rank, V.shape[1])
    return pinv


def fit_weights(V, P, S, gamma):
    """Weights minimizing ``||V f(PS) + W h(f(PS)) - S||^2 + gamma ||W||^2``.

    ``f`` is the sparse linear encoder ``(P V)^+`` applied to each column.
    """
    V = as_matrix(V, "V")
    S = as_matrix(S, "S")
    if S.shape[0] != V.shape[0]:
        raise ValidationError("V and S must have the same number of rows")
    E = _sparse_encode_matrix(V, P)
    Q = E @ apply_sampling(P, S)
    R = V @ Q - S
    W = ridge_lsq_left(R, quad_features_matrix(Q), gamma)
    # (PV)^+ P W vanishes in exact arithmetic; rounding in R is amplified by up
    # to 1/sqrt(gamma) in W, so remove the leftover component explicitly
    rows = P.indices
    W[rows] -= V[rows] @ (E @ W[rows])
    return W


def greedy_objective_direct(candidate, V_partial, P, S, gamma):
    """Greedy objective of appending `candidate` to `V_partial`, full-size form.

    Returns
    -------
    value : float
        ``min_W ||[V, v] f(PS) + W h(f(PS)) - S||^2 + gamma ||W||^2``, or
        ``inf`` when ``P [V, v]`` is rank deficient.
    W : ndarray or None
        The minimizing weights.
    """
    S = as_matrix(S, "S")
    candidate = np.asarray(candidate, dtype=np.float64).reshape(-1, 1)
    V_partial = np.asarray(V_partial, dtype=np.float64).reshape(S.shape[0], -1)
    Vc = np.hstack([V_partial, candidate])
    try:
        enc = _sparse_encode_matrix(Vc, P)
    except RankDeficientError:
        return float("inf"), None
    Q = enc @ apply_sampling(P, S)
    R = Vc @ Q - S
    H = quad_features_matrix(Q)
    W = ridge_lsq_left(R, H, gamma)
    return ridge_objective(R, H, W, gamma), W


class _ReducedProblem:
    """Precomputed pieces of the reduced greedy objective.

    With ``S = Phi Sigma Psi^T`` the residual lives in the coordinates of
    ``Phi``: target ``T = Sigma Psi^T`` (rho x k), and the linear part places
    encoded row ``l`` into row ``j_l`` of an otherwise zero matrix.
    """

    def __init__(self, svd, P, sampled_data=None):
        self.T = svd.coefficients()
        self.rho = svd.rank
        self.full = P is None or P.is_full
        if not self.full:
            self.sampled_phi = svd.left[P.indices]
            if sampled_data is None:
                sampled_data = self.sampled_phi @ self.T
            self.sampled_data = sampled_data

    def encode(self, indices):
        if self.full:
            return self.T[indices]
        pinv, rank = pseudo_inverse(self.sampled_phi[:, indices], ENCODER_RANK_TOLERANCE)
        if rank < len(indices):
            return None
        return pinv @ self.sampled_data

    def objective(self, indices, gamma):
        Q = self.encode(indices)
        if Q is None:
            return float("inf")
        R = -self.T.copy()
        R[indices] += Q
        H = quad_features_matrix(Q)
        W = ridge_lsq_left(R, H, gamma)
        return ridge_objective(R, H, W, gamma)


def greedy_objective_reduced(candidate_index, selected_indices, svd, P, gamma):
    """Greedy objective in the ``rho``-dimensional coordinates of the left singular vectors.

    Takes the same minimum value as :func:`greedy_objective_direct` for
    ``candidate = svd.left[:, candidate_index]`` and
    ``V_partial = svd.left[:, selected_indices]`` whenever the factors cover
    the data exactly, but never forms an n-row residual.
    """
    indices = [int(i) for i in selected_indices] + [int(candidate_index)]
    if len(set(indices)) != len(indices):
        raise ValidationError("candidate is already selected")
    if max(indices) >= svd.rank or min(indices) < 0:
        raise ValidationError("index outside the available singular vectors")
    return _ReducedProblem(svd, P).objective(indices, gamma)


def _greedy_select(S, svd, P, r, M, gamma, mode):
    """Pick `r` of the first `M` left singular vectors; returns indices and log."""
    reduced = _ReducedProblem(svd, P, None if P is None else apply_sampling(P, S))
    full_P = P if P is not None else SamplingOperator.full(S.shape[0])
    selected = []
    history = []
    t0 = time.perf_counter()
    for step in range(r):
        best_val, best_j, skipped = float("inf"), None, 0
        V_partial = svd.left[:, selected]
        for j in range(M):
            if j in selected:
                continue
            if mode == "reduced":
                val = reduced.objective(selected + [j], gamma)
            else:
                val, _ = greedy_objective_direct(svd.left[:, j], V_partial, full_P, S, gamma)
            if not np.isfinite(val):
                skipped += 1
                continue
            if val < best_val:
                best_val, best_j = val, j
        if best_j is None:
            raise RankDeficientError(
                len(selected), len(selected) + 1,
                f"greedy step {step + 1}: every candidate gives a rank-deficient "
                f"sampled basis; lower r or raise m",
            )
        selected.append(best_j)
        entry = {
            "step": step + 1,
            "index": best_j,
            "objective": best_val,
            "pool_size": M - step,
            "skipped": skipped,
            "wall_time": time.perf_counter() - t0,
        }
        history.append(entry)
        log.debug("greedy step %(step)d picked %(index)d objective %(objective).6e", entry)
    return selected, history


def _check_rank(svd, cfg, need):
    if svd.rank < need:
        raise RankDeficientError(
            svd.rank, need,
            f"training data has numerical rank {svd.rank} < {need}; lower m, M or r",
        )


def _resolve_candidates(cfg, k, rank):
    M = cfg.M if cfg.M is not None else default_candidates(cfg.r, k, rank)
    if M < cfg.r:
        raise RankDeficientError(
            rank, cfg.r, f"only {M} candidates available for r={cfg.r}"
        )
    return M


def train_qmsr(S, cfg, svd=None):
    """Sparse greedy training of a quadratic manifold.

    1. reduced SVD of `S`;
    2. QDEIM sampling on the first ``m`` left singular vectors;
    3. greedy choice of ``r`` of the first ``M`` left singular vectors;
    4. ridge fit of the weights with the sparse encoder.

    A precomputed `svd` of `S` may be passed to share it between runs.
    """
    S = as_matrix(S, "S")
    n, k = S.shape
    if cfg.m is None:
        raise ValidationError("train_qmsr needs the sample count m")
    if cfg.m > n:
        raise ValidationError(f"m={cfg.m} exceeds the state dimension {n}")
    svd = svd if svd is not None else reduced_svd(S, cfg.rank_tolerance)
    M = _resolve_candidates(cfg, k, svd.rank)
    _check_rank(svd, cfg, max(cfg.m, M))
    P = qdeim_select(svd.left[:, : cfg.m])
    selected, history = _greedy_select(S, svd, P, cfg.r, M, cfg.gamma, cfg.objective_mode)
    V = svd.left[:, selected]
    W = fit_weights(V, P, S, cfg.gamma)
    return QuadraticManifoldModel(
        V=V, W=W, sampler=P, selected_indices=np.asarray(selected), gamma=cfg.gamma,
        method="qmsr", n_candidates=M, generator=cfg.generator, training_log=history,
    )


def train_qm_full(S, cfg, svd=None):
    """Greedy quadratic manifold with the full-data encoder ``V^T s``.

    The model's sampler selects every row, so sparse and full encoding agree.
    """
    S = as_matrix(S, "S")
    n, k = S.shape
    svd = svd if svd is not None else reduced_svd(S, cfg.rank_tolerance)
    M = _resolve_candidates(cfg, k, svd.rank)
    _check_rank(svd, cfg, M)
    P = SamplingOperator.full(n)
    selected, history = _greedy_select(S, svd, P, cfg.r, M, cfg.gamma, cfg.objective_mode)
    V = svd.left[:, selected]
    W = fit_weights(V, P, S, cfg.gamma)
    return QuadraticManifoldModel(
        V=V, W=W, sampler=P, selected_indices=np.asarray(selected), gamma=cfg.gamma,
        method="qm-full", n_candidates=M, generator=cfg.generator, training_log=history,
    )


def train_gappy_pod(S, cfg, svd=None):
    """Linear gappy POD / QDEIM baseline: leading ``r`` singular vectors, ``W = 0``."""
    S = as_matrix(S, "S")
    n, _ = S.shape
    if cfg.m is None:
        raise ValidationError("train_gappy_pod needs the sample count m")
    if cfg.m > n:
        raise ValidationError(f"m={cfg.m} exceeds the state dimension {n}")
    svd = svd if svd is not None else reduced_svd(S, cfg.rank_tolerance)
    _check_rank(svd, cfg, max(cfg.m, cfg.r))
    P = qdeim_select(svd.left[:, : cfg.m])
    V = svd.left[:, : cfg.r]
    return QuadraticManifoldModel(
        V=V, W=np.zeros((n, feature_dim(cfg.r))), sampler=P,
        selected_indices=np.arange(cfg.r), gamma=cfg.gamma, method="gappy-pod",
        n_candidates=cfg.r, generator=cfg.generator,
    )


TRAINERS = {
    "qmsr": train_qmsr,
    "qm-full": train_qm_full,
    "gappy-pod": train_gappy_pod,
}
