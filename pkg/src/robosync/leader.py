"""Virtual leader: a linear time-invariant exosystem ``chi' = A0 chi``."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssumptionViolated, DimensionMismatch, NotSquare

DEFAULT_EIG_TOL = 1e-9

DEFAULT_A0 = np.array(
    [
        [0.0, 0.0, 1.0, 0.0],
        [0.0, 0.0, 0.0, 1.0],
        [-1.0, 0.0, 0.0, 0.0],
        [0.0, -1.0, 0.0, 0.0],
    ]
)
DEFAULT_CHI0 = np.array([0.0, 0.8, 0.8, 0.0])


@dataclass(frozen=True)
class LeaderSystem:
    """Leader matrix ``A0`` (2n x 2n) and an initial state ``chi0`` = [positions; velocities]."""

    A0: np.ndarray
    chi0: np.ndarray

    def __post_init__(self):
        A0 = np.asarray(self.A0, dtype=float)
        chi0 = np.asarray(self.chi0, dtype=float)
        if A0.ndim != 2 or A0.shape[0] != A0.shape[1]:
            raise NotSquare(A0.shape)
        if chi0.shape != (A0.shape[0],):
            raise DimensionMismatch(f"chi0 has shape {chi0.shape}, A0 is {A0.shape}")
        if A0.shape[0] % 2:
            raise DimensionMismatch("leader state must split into equal position/velocity blocks")
        object.__setattr__(self, "A0", A0)
        object.__setattr__(self, "chi0", chi0)

    @property
    def joints(self) -> int:
        return self.A0.shape[0] // 2


def validate_leader_matrix(A0, tol: float = DEFAULT_EIG_TOL) -> float:
    """Check that every eigenvalue of ``A0`` lies on the imaginary axis.

    Zero eigenvalues are accepted. Returns the largest ``|Re lambda|`` found.

    Raises:
        NotSquare: ``A0`` is not a square matrix.
        AssumptionViolated: some eigenvalue has ``|Re lambda| > tol``.
    """
    A0 = np.asarray(A0, dtype=float)
    if A0.ndim != 2 or A0.shape[0] != A0.shape[1]:
        raise NotSquare(A0.shape)
    if tol <= 0:
        raise ValueError("tol must be positive")
    eig = np.linalg.eigvals(A0)
    worst = int(np.argmax(np.abs(eig.real))) if eig.size else 0
    if eig.size and abs(eig[worst].real) > tol:
        raise AssumptionViolated(eig[worst], tol)
    return float(abs(eig[worst].real)) if eig.size else 0.0


def leader_vector_field(sys: LeaderSystem, chi) -> np.ndarray:
    chi = np.asarray(chi)
    if chi.shape != sys.chi0.shape:
        raise DimensionMismatch(f"state has shape {chi.shape}, expected {sys.chi0.shape}")
    return sys.A0 @ chi


def closed_form_default_leader(t):
    """Exact trajectory of the default leader from ``[0, 0.8, 0.8, 0]``.

    Accepts ``np.longdouble`` time for extended-precision comparisons.
    """
    s, c = np.sin(t), np.cos(t)
    amp = np.asarray(0.8, dtype=np.result_type(t, np.float64))
    return np.array([amp * s, amp * c, amp * c, -amp * s])
