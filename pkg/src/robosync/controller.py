"""Decentralized RBF learning controller (second control layer).

Functions broadcast over a leading agent axis: gains given as arrays of
shape ``(N,)`` (``K`` as ``(N, n, n)``) apply agent-wise to ``(N, n)``
signals. Only local signals are read here.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import manipulator as mm
from .errors import DimensionMismatch, ValidationError
from .rbf import RbfLattice, project, regressor

DEFAULT_LAMBDA = 5.0


@dataclass(frozen=True)
class ControllerGains:
    """``lam`` filtered-error slope (1/s), ``K`` feedback gain, ``Gamma``
    adaptation rate, ``sigma`` leakage. A scalar ``K`` means ``K * I``."""

    lam: float = DEFAULT_LAMBDA
    K: float | tuple = 10.0
    Gamma: float = 10.0
    sigma: float = 0.001

    def __post_init__(self):
        for name in ("lam", "Gamma", "sigma"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValidationError(f"controller.{name}", f"must be strictly positive, got {v}")
        K = np.asarray(self.K, dtype=float)
        if K.ndim == 0:
            if not np.isfinite(K) or K <= 0:
                raise ValidationError("controller.K", f"gain positivity: K must be positive definite, got {self.K}")
        else:
            check_positive_definite(K, "controller.K")

    def K_matrix(self, n: int = 2) -> np.ndarray:
        K = np.asarray(self.K, dtype=float)
        if K.ndim == 0:
            return float(K) * np.eye(n)
        if K.shape != (n, n):
            raise DimensionMismatch(f"K has shape {K.shape}, expected {(n, n)}")
        return K


def check_positive_definite(K: np.ndarray, field: str) -> None:
    if K.ndim != 2 or K.shape[0] != K.shape[1]:
        raise ValidationError(field, f"gain matrix must be square, got shape {K.shape}")
    if not np.all(np.isfinite(K)) or not np.allclose(K, K.T, rtol=0, atol=1e-12 * max(1.0, np.abs(K).max())):
        raise ValidationError(field, "gain positivity: K must be symmetric")
    if np.linalg.eigvalsh(K).min() <= 0:
        raise ValidationError(field, "gain positivity: K must be positive definite")


def _agentwise(gain, like: np.ndarray) -> np.ndarray:
    return np.asarray(gain, dtype=like.dtype)[..., None]


def tracking_errors(q, qdot, xhat_pos, xhat_pos_dot, lam):
    """Position error ``e = q - xhat``, ``edot = qdot - d(xhat)/dt`` and
    ``r = edot + lam * e``."""
    q = np.asarray(q, dtype=float)
    if np.shape(xhat_pos) != q.shape or np.shape(qdot) != q.shape or np.shape(xhat_pos_dot) != q.shape:
        raise DimensionMismatch("joint and estimate vectors disagree in shape")
    e = q - xhat_pos
    edot = np.asarray(qdot) - xhat_pos_dot
    r = edot + _agentwise(lam, e) * e
    return e, edot, r


def reference_signals(xhat_pos_dot, xhat_pos_ddot, e, edot, lam):
    """``xr_dot = d(xhat)/dt - lam e`` and ``xr_ddot = d2(xhat)/dt2 - lam edot``."""
    e = np.asarray(e, dtype=float)
    lam_ = _agentwise(lam, e)
    return np.asarray(xhat_pos_dot) - lam_ * e, np.asarray(xhat_pos_ddot) - lam_ * np.asarray(edot)


def nn_input(q, qdot, xr_dot, xr_ddot, indices) -> np.ndarray:
    """Select the network input from ``[q, qdot, xr_dot, xr_ddot]``."""
    full = np.concatenate([q, qdot, xr_dot, xr_ddot], axis=-1)
    return full[..., list(indices)]


def feedback(K, r) -> np.ndarray:
    return np.einsum("...ij,...j->...i", K, r)


def control_torque(W, lat: RbfLattice, Z, r, K) -> np.ndarray:
    """``tau = W^T S(Z) - K r``; ``K`` is an ``(n, n)`` matrix (batched allowed)."""
    return torque_from_regressor(W, regressor(lat, Z), r, K)


def torque_from_regressor(W, S, r, K) -> np.ndarray:
    W, r = np.asarray(W, dtype=float), np.asarray(r, dtype=float)
    if W.shape[-1] != r.shape[-1] or W.shape[-2] != np.shape(S)[-1]:
        raise DimensionMismatch(f"weights {W.shape} vs regressor {np.shape(S)} / error {r.shape}")
    return project(W, S) - feedback(np.asarray(K, dtype=float), r)


def adapt_weights(W, S, r, Gamma, sigma) -> np.ndarray:
    """Weight rate: column ``j`` is ``-Gamma (S r_j + sigma W_j)``."""
    W, S, r = np.asarray(W, dtype=float), np.asarray(S, dtype=float), np.asarray(r, dtype=float)
    if W.shape[-2:] != (S.shape[-1], r.shape[-1]):
        raise DimensionMismatch(f"weights {W.shape} vs regressor {S.shape} / error {r.shape}")
    Gamma = np.asarray(Gamma, dtype=float)[..., None, None]
    sigma = np.asarray(sigma, dtype=float)[..., None, None]
    out = S[..., :, None] * r[..., None, :]
    out += sigma * W
    out *= -Gamma
    return out


def target_function(p, q, qdot, xr_dot, xr_ddot) -> np.ndarray:
    """Model-based ``H = M(q) xr_ddot + C(q, qdot) xr_dot + g(q)``.

    Diagnostic oracle only; the control law never calls it.
    """
    M = mm.mass_matrix(p, q)
    C = mm.coriolis_matrix(p, q, qdot)
    return (
        (M @ np.asarray(xr_ddot, dtype=float)[..., None])[..., 0]
        + (C @ np.asarray(xr_dot, dtype=float)[..., None])[..., 0]
        + mm.gravity_vector(p, q)
    )
