"""Distributed cooperative estimator (first control layer).

Every follower keeps an estimate ``chi_hat`` of the leader state and
``A_hat`` of the leader matrix and drives both toward its in-neighbors'
values. The per-agent functions mirror the update equations one agent at a
time; :func:`network_derivatives` evaluates the whole network at once from
the Laplacian and is what the simulator integrates.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import DimensionMismatch, ValidationError


@dataclass
class ObserverState:
    chi_hat: np.ndarray
    A_hat: np.ndarray

    def __post_init__(self):
        self.chi_hat = np.asarray(self.chi_hat, dtype=float)
        self.A_hat = np.asarray(self.A_hat, dtype=float)
        m = self.chi_hat.shape[0]
        if self.chi_hat.shape != (m,) or self.A_hat.shape != (m, m):
            raise DimensionMismatch(f"chi_hat {self.chi_hat.shape} and A_hat {self.A_hat.shape} disagree")

    @classmethod
    def zeros(cls, dim: int) -> "ObserverState":
        return cls(np.zeros(dim), np.zeros((dim, dim)))


@dataclass(frozen=True)
class ObserverGains:
    beta1: float = 1.0
    beta2: float = 1.0

    def __post_init__(self):
        for name in ("beta1", "beta2"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValidationError(f"observer.{name}", f"must be strictly positive, got {v}")


def _consensus(own: np.ndarray, neighbors: Sequence[tuple[float, np.ndarray]]) -> np.ndarray:
    total = np.zeros_like(own)
    for weight, value in neighbors:
        value = np.asarray(value, dtype=float)
        if value.shape != own.shape:
            raise DimensionMismatch(f"neighbor value {value.shape} vs own {own.shape}")
        total = total + weight * (value - own)
    return total


def observer_state_derivative(own: ObserverState, neighbor_states, gains: ObserverGains) -> np.ndarray:
    """``A_hat chi_hat + beta1 * sum_j a_ij (chi_hat_j - chi_hat)``.

    ``neighbor_states`` is a list of ``(a_ij, chi_hat_j)``; the leader's entry
    carries its true state.
    """
    return own.A_hat @ own.chi_hat + gains.beta1 * _consensus(own.chi_hat, neighbor_states)


def observer_matrix_derivative(own_A_hat, neighbor_matrices, gains: ObserverGains) -> np.ndarray:
    """``beta2 * sum_j a_ij (A_hat_j - A_hat)``; the leader's entry carries ``A0``."""
    own_A_hat = np.asarray(own_A_hat, dtype=float)
    return gains.beta2 * _consensus(own_A_hat, neighbor_matrices)


def observer_state_second_derivative(
    own: ObserverState,
    own_chi_dot: np.ndarray,
    own_A_dot: np.ndarray,
    neighbor_chi_dots,
    gains: ObserverGains,
) -> np.ndarray:
    """Time derivative of :func:`observer_state_derivative`.

    ``neighbor_chi_dots`` holds ``(a_ij, d chi_hat_j / dt)`` as carried in the
    neighbor messages (``A0 chi0`` for the leader).
    """
    return (
        own_A_dot @ own.chi_hat
        + own.A_hat @ own_chi_dot
        + gains.beta1 * _consensus(np.asarray(own_chi_dot, dtype=float), neighbor_chi_dots)
    )


def estimation_errors(observers: Sequence[ObserverState], chi0, A0) -> np.ndarray:
    """Per-agent ``(|chi_hat - chi0|, |A_hat - A0|_F)``, shape ``(N, 2)``."""
    chi0, A0 = np.asarray(chi0, dtype=float), np.asarray(A0, dtype=float)
    out = np.empty((len(observers), 2))
    for i, ob in enumerate(observers):
        out[i, 0] = np.linalg.norm(ob.chi_hat - chi0)
        out[i, 1] = np.linalg.norm(ob.A_hat - A0)
    return out


@dataclass(frozen=True)
class NetworkObserverRates:
    chi_dot: np.ndarray  # (N, 2n)
    A_dot: np.ndarray  # (N, 2n, 2n)
    chi_ddot: np.ndarray | None  # (N, 2n)


def network_derivatives(L, beta1, beta2, chi0, chi0_dot, A0, chi_hat, A_hat, *, second: bool = True) -> NetworkObserverRates:
    """All followers' observer rates from one snapshot.

    Args:
        L: Full ``(N+1, N+1)`` Laplacian with the leader in row/column 0.
        beta1, beta2: Per-follower gains, shape ``(N,)``.
        chi0, chi0_dot: Leader state and its derivative ``A0 chi0``.
        A0: Leader matrix.
        chi_hat: ``(N, 2n)`` state estimates.
        A_hat: ``(N, 2n, 2n)`` matrix estimates.
        second: Also form ``chi_ddot``; when False it is returned as ``None``.

    The consensus sums ``sum_j a_ij (v_j - v_i)`` are ``-(L v)_i``, computed
    with one fixed-shape product per quantity.
    """
    N = chi_hat.shape[0]
    follower_rows = -np.asarray(L)[1:]
    beta1 = np.asarray(beta1, dtype=chi_hat.dtype)[:, None]
    beta2 = np.asarray(beta2, dtype=chi_hat.dtype)[:, None]

    all_chi = np.concatenate([chi0[None], chi_hat])
    chi_dot = np.einsum("nij,nj->ni", A_hat, chi_hat) + beta1 * (follower_rows @ all_chi)

    all_A = np.concatenate([A0[None], A_hat]).reshape(N + 1, -1)
    A_dot = (beta2 * (follower_rows @ all_A)).reshape(A_hat.shape)

    if not second:
        return NetworkObserverRates(chi_dot=chi_dot, A_dot=A_dot, chi_ddot=None)
    all_chi_dot = np.concatenate([chi0_dot[None], chi_dot])
    chi_ddot = (
        np.einsum("nij,nj->ni", A_dot, chi_hat)
        + np.einsum("nij,nj->ni", A_hat, chi_dot)
        + beta1 * (follower_rows @ all_chi_dot)
    )
    return NetworkObserverRates(chi_dot=chi_dot, A_dot=A_dot, chi_ddot=chi_ddot)
