"""Quadratic manifold model with its encoders and decoder.

A model stores an orthonormal basis ``V`` (n x r), a weight matrix ``W``
(n x r(r+1)/2) and a sampling operator ``P``. The decoder is
``g(q) = V q + W h(q)`` with the quadratic feature map ``h``; the sparse linear
encoder is ``q = (P V)^+ P s``.
"""

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg as sla

from qmsr.exceptions import RankDeficientError, ValidationError
from qmsr.featuremap import feature_dim, quad_features_jacobian, quad_features_matrix
from qmsr.numerics import pseudo_inverse
from qmsr.sampling import SamplingOperator, apply_sampling

ENCODER_RANK_TOLERANCE = 1e-10
ORTHONORMALITY_TOLERANCE = 1e-10
ANNIHILATION_TOLERANCE = 1e-8

METHODS = ("qmsr", "qm-full", "gappy-pod")
ENCODERS = ("sparse_linear", "gauss_newton", "full")


@dataclass(frozen=True, eq=False)
class QuadraticManifoldModel:
    """Trained quadratic manifold ``{V q + W h(q)}`` plus its sampling operator.

    Parameters
    ----------
    V : ndarray, shape (n, r)
        Basis with orthonormal columns.
    W : ndarray, shape (n, r(r+1)/2)
        Weights of the quadratic correction.
    sampler : SamplingOperator
        Rows observed at reconstruction time; full for ``qm-full`` models.
    selected_indices : ndarray of int
        Indices (0-based, selection order) of the left singular vectors in `V`.
    gamma : float
        Regularization used when fitting `W`.
    method : str
        One of ``qmsr``, ``qm-full``, ``gappy-pod``.
    n_candidates : int
        Size of the candidate pool scanned by the greedy selection.
    generator : str
        Free-form provenance label of the training data.
    """

    V: np.ndarray
    W: np.ndarray
    sampler: SamplingOperator
    selected_indices: np.ndarray
    gamma: float
    method: str = "qmsr"
    n_candidates: int = 0
    generator: str = ""
    training_log: list = field(default_factory=list, compare=False, repr=False)

    def __post_init__(self):
        # one fixed memory layout keeps results bit-identical after a file round trip
        V = np.array(self.V, dtype=np.float64, order="C")
        W = np.array(self.W, dtype=np.float64, order="C")
        if V.ndim != 2 or W.ndim != 2:
            raise ValidationError("V and W must be 2-D")
        n, r = V.shape
        if r < 1:
            raise ValidationError("reduced dimension must be at least 1")
        if W.shape != (n, feature_dim(r)):
            raise ValidationError(
                f"W must have shape ({n}, {feature_dim(r)}), got {W.shape}"
            )
        if self.sampler.ambient_dim != n:
            raise ValidationError("sampler ambient dimension does not match V")
        sel = np.asarray(self.selected_indices, dtype=np.int64).reshape(-1)
        if sel.size != r:
            raise ValidationError(f"expected {r} selected indices, got {sel.size}")
        if self.method not in METHODS:
            raise ValidationError(f"unknown method {self.method!r}")
        for arr in (V, W, sel):
            arr.setflags(write=False)
        object.__setattr__(self, "V", V)
        object.__setattr__(self, "W", W)
        object.__setattr__(self, "selected_indices", sel)
        object.__setattr__(self, "gamma", float(self.gamma))
        object.__setattr__(self, "n_candidates", int(self.n_candidates))

    @property
    def n(self):
        return self.V.shape[0]

    @property
    def r(self):
        return self.V.shape[1]

    @property
    def p(self):
        return self.W.shape[1]

    @property
    def m(self):
        return self.sampler.m

    @cached_property
    def sampled_V(self):
        return self.V[self.sampler.indices]

    @cached_property
    def sampled_W(self):
        return self.W[self.sampler.indices]

    @cached_property
    def _encoder_pinv(self):
        return pseudo_inverse(self.sampled_V, ENCODER_RANK_TOLERANCE)

    @property
    def sampled_rank(self):
        return self._encoder_pinv[1]

    @property
    def encoder_matrix(self):
        """``(P V)^+``; raises RankDeficientError when ``P V`` is rank deficient."""
        pinv, rank = self._encoder_pinv
        if rank < self.r:
            raise RankDeficientError(rank, self.r)
        return pinv

    def invariant_report(self):
        """Evaluate the model invariants.

        Returns a list of ``(name, passed, value, tolerance)`` tuples.
        """
        r = self.r
        ortho = float(np.max(np.abs(self.V.T @ self.V - np.eye(r))))
        rank = self.sampled_rank
        w_norm = float(np.linalg.norm(self.W))
        if rank == r:
            annihilation = float(np.linalg.norm(self.encoder_matrix @ self.sampled_W))
        else:
            annihilation = float("inf")
        ann_tol = ANNIHILATION_TOLERANCE * max(1.0, w_norm)
        return [
            ("orthonormal_basis", ortho <= ORTHONORMALITY_TOLERANCE, ortho,
             ORTHONORMALITY_TOLERANCE),
            ("sampled_basis_full_rank", rank == r, float(rank), float(r)),
            ("encoder_annihilates_weights", annihilation <= ann_tol, annihilation,
             ann_tol),
            ("finite_entries",
             bool(np.all(np.isfinite(self.V)) and np.all(np.isfinite(self.W))),
             0.0, 0.0),
        ]

    def validate(self):
        """Raise ValidationError naming the first failed invariant."""
        for name, passed, value, tol in self.invariant_report():
            if not passed:
                raise ValidationError(
                    f"model invariant {name!r} violated: value {value:.3e}, "
                    f"tolerance {tol:.3e}"
                )
        return self


@dataclass(frozen=True)
class GaussNewtonConfig:
    """Settings for the damped Gauss-Newton sparse encoder.

    ``selection`` is ``"sampled"`` (pick the damping with smallest sampled
    residual, deployable) or ``"full"`` (smallest error against a full
    reference vector, for experiment parity).
    """

    max_iterations: int = 20
    stop_tolerance: float = 1e-12
    damping_sweep: tuple = (1e-8, 1e-4, 1.0, 1e4, 1e8)
    selection: str = "sampled"

    def __post_init__(self):
        if self.max_iterations < 1:
            raise ValidationError("max_iterations must be at least 1")
        if any(not lam > 0 for lam in self.damping_sweep):
            raise ValidationError("damping values must be positive")
        if self.selection not in ("sampled", "full"):
            raise ValidationError(f"unknown selection mode {self.selection!r}")
        object.__setattr__(self, "damping_sweep", tuple(float(v) for v in self.damping_sweep))


@dataclass
class DampingRun:
    damping: float
    iterations: int
    residual: float
    status: str
    full_error: float = float("nan")


@dataclass
class GaussNewtonDiagnostics:
    initial_residual: float
    residual: float
    chosen_damping: float | None
    selection: str
    runs: list = field(default_factory=list)


def _check_reduced(model, q):
    q = np.asarray(q, dtype=np.float64)
    if q.shape[0] != model.r:
        raise ValidationError(f"expected {model.r} reduced coordinates, got {q.shape[0]}")
    return q


def decode(model, q):
    """``V q + W h(q)`` for a vector or for the columns of a matrix."""
    q = _check_reduced(model, q)
    if q.ndim == 1:
        return model.V @ q + model.W @ quad_features_matrix(q[:, None])[:, 0]
    return model.V @ q + model.W @ quad_features_matrix(q)


def encode_full(model, s):
    """Linear encoder ``V^T s`` that reads every component."""
    s = np.asarray(s, dtype=np.float64)
    if s.shape[0] != model.n:
        raise ValidationError(f"expected dimension {model.n}, got {s.shape[0]}")
    return model.V.T @ s


def encode_sparse(model, sampled):
    """Sparse linear encoder ``(P V)^+ sampled``.

    Raises
    ------
    RankDeficientError
        If ``P V`` has numerical rank below ``r`` (tolerance 1e-10).
    """
    sampled = np.asarray(sampled, dtype=np.float64)
    if sampled.shape[0] != model.m:
        raise ValidationError(f"expected {model.m} samples, got {sampled.shape[0]}")
    return model.encoder_matrix @ sampled


def _sampled_decode(model, q):
    return model.sampled_V @ q + model.sampled_W @ quad_features_matrix(q[:, None])[:, 0]


def _gauss_newton_run(model, sampled, q0, lam, cfg):
    PV, PW = model.sampled_V, model.sampled_W
    scale = np.linalg.norm(sampled)
    scale = scale if scale > 0 else 1.0
    q = q0.copy()
    res = _sampled_decode(model, q) - sampled
    rel = np.linalg.norm(res) / scale
    eye = np.eye(model.r)
    for it in range(1, cfg.max_iterations + 1):
        J = PV + PW @ quad_features_jacobian(q)
        normal = J.T @ J + lam * eye
        try:
            step = sla.solve(normal, J.T @ res, assume_a="pos", check_finite=False)
        except (np.linalg.LinAlgError, ValueError):
            return q, it - 1, "singular"
        q = q - step
        res = _sampled_decode(model, q) - sampled
        if not np.all(np.isfinite(res)):
            return q, it, "diverged"
        new_rel = np.linalg.norm(res) / scale
        if abs(new_rel - rel) < cfg.stop_tolerance:
            return q, it, "converged"
        rel = new_rel
    return q, cfg.max_iterations, "max_iterations"


def encode_gauss_newton(model, sampled, cfg=None, reference=None):
    """Encode by damped Gauss-Newton on ``||P g(q) - sampled||``.

    Every damping value in ``cfg.damping_sweep`` starts from the sparse linear
    encoding. Among the initializer and the final iterate of each run, the one
    with the smallest sampled residual is returned (or, with
    ``cfg.selection == "full"``, the one closest to `reference`), so the result
    never has a larger selection criterion than the sparse linear encoding.

    Parameters
    ----------
    model : QuadraticManifoldModel
    sampled : ndarray, shape (m,)
    cfg : GaussNewtonConfig, optional
    reference : ndarray, shape (n,), optional
        Full vector, required for ``selection="full"``.

    Returns
    -------
    q : ndarray, shape (r,)
    diagnostics : GaussNewtonDiagnostics
    """
    cfg = cfg or GaussNewtonConfig()
    sampled = np.asarray(sampled, dtype=np.float64)
    if sampled.ndim != 1:
        raise ValidationError("encode_gauss_newton takes one sample vector")
    if cfg.selection == "full":
        if reference is None:
            raise ValidationError("full-data selection needs a reference vector")
        reference = np.asarray(reference, dtype=np.float64)
        if reference.shape != (model.n,):
            raise ValidationError(f"reference must have shape ({model.n},)")

    q0 = encode_sparse(model, sampled)

    def criterion(q, residual):
        if cfg.selection == "full":
            return float(np.linalg.norm(decode(model, q) - reference))
        return residual

    r0 = float(np.linalg.norm(_sampled_decode(model, q0) - sampled))
    best_q, best_res, best_crit, best_lam = q0, r0, criterion(q0, r0), None
    runs = []
    for lam in cfg.damping_sweep:
        q, iters, status = _gauss_newton_run(model, sampled, q0, lam, cfg)
        if status in ("singular", "diverged") or not np.all(np.isfinite(q)):
            runs.append(DampingRun(lam, iters, float("nan"), status))
            continue
        res = float(np.linalg.norm(_sampled_decode(model, q) - sampled))
        crit = criterion(q, res)
        run = DampingRun(lam, iters, res, status)
        if cfg.selection == "full":
            run.full_error = crit
        runs.append(run)
        if crit < best_crit:
            best_q, best_res, best_crit, best_lam = q, res, crit, lam
    diag = GaussNewtonDiagnostics(
        initial_residual=r0,
        residual=best_res,
        chosen_damping=best_lam,
        selection=cfg.selection,
        runs=runs,
    )
    return best_q, diag


def encode(model, sampled, encoder="sparse_linear", gn_config=None, reference=None):
    """Encode one sample vector or the columns of a sample matrix.

    ``encoder="full"`` expects full vectors and applies ``V^T``.
    """
    if encoder == "full":
        return encode_full(model, sampled)
    if encoder == "sparse_linear":
        return encode_sparse(model, sampled)
    if encoder == "gauss_newton":
        sampled = np.asarray(sampled, dtype=np.float64)
        if sampled.ndim == 1:
            return encode_gauss_newton(model, sampled, gn_config, reference)[0]
        cols = []
        for c in range(sampled.shape[1]):
            ref = None if reference is None else reference[:, c]
            cols.append(encode_gauss_newton(model, sampled[:, c], gn_config, ref)[0])
        return np.column_stack(cols) if cols else np.zeros((model.r, 0))
    raise ValidationError(f"unknown encoder {encoder!r}")


def reconstruct(model, sampled, encoder="sparse_linear", gn_config=None, reference=None):
    """QMSR approximation ``g(f(sampled))`` from sparse samples."""
    return decode(model, encode(model, sampled, encoder, gn_config, reference))


def reconstruction_error(model, s, encoder="sparse_linear", gn_config=None):
    """Squared error ``||g(f(s)) - s||^2`` of a full vector `s`.

    Sparse encoders read only ``P s``; ``encoder="full"`` reads all of `s`.
    """
    s = np.asarray(s, dtype=np.float64)
    if s.shape[0] != model.n:
        raise ValidationError(f"expected dimension {model.n}, got {s.shape[0]}")
    if encoder == "full":
        s_hat = decode(model, encode_full(model, s))
    else:
        s_hat = reconstruct(model, apply_sampling(model.sampler, s), encoder, gn_config,
                            reference=s)
    diff = s_hat - s
    return float(np.sum(diff * diff))


def relative_error(S_test, S_hat):
    """``||S_hat - S_test||_F / ||S_test||_F``."""
    S_test = np.asarray(S_test, dtype=np.float64)
    S_hat = np.asarray(S_hat, dtype=np.float64)
    if S_test.shape != S_hat.shape:
        raise ValidationError(f"shape mismatch {S_test.shape} vs {S_hat.shape}")
    ref = np.linalg.norm(S_test)
    if ref == 0:
        raise ValidationError("reference matrix has zero norm")
    return float(np.linalg.norm(S_hat - S_test) / ref)
