"""Two-link planar arm: mass, Coriolis and gravity terms, and forward dynamics.

All formula helpers broadcast over a leading batch axis, so the same code
serves a single robot and the stacked parameters of a whole team
(:class:`ManipulatorBank`).
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np

from .errors import SingularMass, ValidationError

GRAVITY = 9.81


@dataclass(frozen=True)
class ManipulatorParams:
    """Physical constants of one 2-DOF arm (SI units).

    ``lc1``/``lc2`` default to half the link lengths. ``viscous`` and
    ``coulomb`` are optional per-joint friction coefficients, zero by default.
    """

    m1: float
    m2: float
    l1: float
    l2: float
    I1: float
    I2: float
    lc1: float | None = None
    lc2: float | None = None
    gravity: float = GRAVITY
    viscous: tuple[float, float] = (0.0, 0.0)
    coulomb: tuple[float, float] = (0.0, 0.0)

    def __post_init__(self):
        for name in ("m1", "m2", "l1", "l2", "I1", "I2"):
            v = getattr(self, name)
            if not np.isfinite(v) or v <= 0:
                raise ValidationError(f"params.{name}", f"must be strictly positive, got {v}")
        if self.lc1 is None:
            object.__setattr__(self, "lc1", self.l1 / 2)
        if self.lc2 is None:
            object.__setattr__(self, "lc2", self.l2 / 2)
        for lc, l, name in ((self.lc1, self.l1, "lc1"), (self.lc2, self.l2, "lc2")):
            if not 0 < lc <= l:
                raise ValidationError(f"params.{name}", f"must lie in (0, link length {l}], got {lc}")
        if not np.isfinite(self.gravity):
            raise ValidationError("params.gravity", "must be finite")
        for name in ("viscous", "coulomb"):
            v = tuple(float(x) for x in getattr(self, name))
            if len(v) != 2 or any(x < 0 or not np.isfinite(x) for x in v):
                raise ValidationError(f"params.{name}", "need two non-negative coefficients")
            object.__setattr__(self, name, v)


# The five bundled arms, robots 1..5.
REFERENCE_ARMS = (
    ManipulatorParams(m1=2.0, m2=0.85, l1=0.35, l2=0.31, I1=61.25e-3, I2=20.42e-3),
    ManipulatorParams(m1=2.2, m2=0.9, l1=0.5, l2=0.4, I1=70e-3, I2=25.21e-3),
    ManipulatorParams(m1=2.3, m2=1.0, l1=0.6, l2=0.5, I1=72.14e-3, I2=27.1e-3),
    ManipulatorParams(m1=1.9, m2=0.9, l1=0.52, l2=0.48, I1=67.21e-3, I2=25.4e-3),
    ManipulatorParams(m1=2.4, m2=1.5, l1=0.57, l2=0.53, I1=73.42e-3, I2=22.63e-3),
)


@dataclass(frozen=True)
class ManipulatorBank:
    """Parameters of several robots stacked into arrays of shape ``(N,)``."""

    m1: np.ndarray
    m2: np.ndarray
    l1: np.ndarray
    lc1: np.ndarray
    lc2: np.ndarray
    I1: np.ndarray
    I2: np.ndarray
    gravity: np.ndarray
    viscous: np.ndarray
    coulomb: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _derive_coefficients(self))

    @classmethod
    def stack(cls, params: Sequence[ManipulatorParams]) -> "ManipulatorBank":
        cols = {f.name: np.array([getattr(p, f.name) for p in params], dtype=float) for f in fields(cls)}
        return cls(**cols)

    def take(self, idx) -> "ManipulatorBank":
        return ManipulatorBank(**{f.name: getattr(self, f.name)[idx] for f in fields(self)})


@dataclass(frozen=True)
class _Coefficients:
    coupling: np.ndarray  # m2 l1 lc2
    m11_const: np.ndarray
    m22: np.ndarray
    g_proximal: np.ndarray
    g_distal: np.ndarray
    has_friction: bool


def _derive_coefficients(p) -> _Coefficients:
    return _Coefficients(
        coupling=np.asarray(p.m2 * p.l1 * p.lc2),
        m11_const=np.asarray(p.m1 * p.lc1**2 + p.m2 * (p.l1**2 + p.lc2**2) + p.I1 + p.I2),
        m22=np.asarray(p.m2 * p.lc2**2 + p.I2),
        g_proximal=np.asarray((p.m1 * p.lc2 + p.m2 * p.l1) * p.gravity),
        g_distal=np.asarray(p.m2 * p.lc2 * p.gravity),
        has_friction=bool(np.any(p.viscous) or np.any(p.coulomb)),
    )


def _coeffs(p) -> _Coefficients:
    cached = getattr(p, "coeffs", None)
    return cached if cached is not None else _derive_coefficients(p)


def _coupling(p) -> np.ndarray:
    return _coeffs(p).coupling


def mass_matrix(p, q) -> np.ndarray:
    """Inertia matrix ``M(q)``; shape ``(..., 2, 2)``, symmetric by construction."""
    q = np.asarray(q, dtype=float)
    h = _coupling(p)
    c2 = np.cos(q[..., 1])
    m22 = np.asarray(p.m2 * p.lc2**2 + p.I2)
    m12 = m22 + h * c2
    m11 = p.m1 * p.lc1**2 + p.m2 * (p.l1**2 + p.lc2**2) + 2 * h * c2 + p.I1 + p.I2
    m22 = np.broadcast_to(m22, m12.shape)
    return np.stack([np.stack([m11, m12], -1), np.stack([m12, m22], -1)], -2)


def mass_matrix_dot(p, q, qdot) -> np.ndarray:
    """Analytic time derivative of ``M(q)`` along ``qdot``."""
    q, qdot = np.asarray(q, dtype=float), np.asarray(qdot, dtype=float)
    d = -_coupling(p) * np.sin(q[..., 1]) * qdot[..., 1]
    zero = np.zeros_like(d)
    return np.stack([np.stack([2 * d, d], -1), np.stack([d, zero], -1)], -2)


def coriolis_matrix(p, q, qdot) -> np.ndarray:
    """Coriolis/centripetal matrix ``C(q, qdot)``; ``C[1, 1]`` is identically zero."""
    q, qdot = np.asarray(q, dtype=float), np.asarray(qdot, dtype=float)
    hs = _coupling(p) * np.sin(q[..., 1])
    c11 = -hs * qdot[..., 1]
    c12 = -hs * (qdot[..., 0] + qdot[..., 1])
    c21 = hs * qdot[..., 0]
    return np.stack([np.stack([c11, c12], -1), np.stack([c21, np.zeros_like(c21)], -1)], -2)


def gravity_vector(p, q) -> np.ndarray:
    """Gravity torques ``g(q)`` in N m.

    The first-link term uses ``m1 * lc2`` exactly as the reference parameter
    list writes it.
    """
    q = np.asarray(q, dtype=float)
    g = p.gravity
    distal = p.m2 * p.lc2 * g * np.cos(q[..., 0] + q[..., 1])
    proximal = (p.m1 * p.lc2 + p.m2 * p.l1) * g * np.cos(q[..., 0])
    return np.stack([proximal + distal, distal], -1)


def friction_torque(p, qdot) -> np.ndarray:
    """Optional viscous plus constant (sign) friction; zero unless configured."""
    qdot = np.asarray(qdot, dtype=float)
    viscous = np.asarray(p.viscous, dtype=float)
    coulomb = np.asarray(p.coulomb, dtype=float)
    if not (viscous.any() or coulomb.any()):
        return np.zeros_like(qdot)
    return viscous * qdot + coulomb * np.sign(qdot)


def inverse_dynamics(p, q, qdot, qddot) -> np.ndarray:
    M = mass_matrix(p, q)
    C = coriolis_matrix(p, q, qdot)
    return (
        (M @ np.asarray(qddot, dtype=float)[..., None])[..., 0]
        + (C @ np.asarray(qdot, dtype=float)[..., None])[..., 0]
        + gravity_vector(p, q)
        + friction_torque(p, qdot)
    )


def forward_dynamics(p, q, qdot, tau, *, rcond: float = 1e-12) -> np.ndarray:
    """Joint accelerations ``M^-1 (tau - C qdot - g - F)``.

    The 2x2 system is solved by elimination on the symmetric entries of
    ``M``; no inverse is formed.

    Raises:
        SingularMass: ``det M`` is below ``rcond * max|M_ij|^2``; cannot
            happen for validated parameters.
    """
    q, qdot = np.asarray(q, dtype=float), np.asarray(qdot, dtype=float)
    tau = np.asarray(tau, dtype=float)
    k = _coeffs(p)
    q1, q2 = q[..., 0], q[..., 1]
    v1, v2 = qdot[..., 0], qdot[..., 1]
    hc = k.coupling * np.cos(q2)
    hs = k.coupling * np.sin(q2)
    m22 = k.m22
    m12 = m22 + hc
    m11 = k.m11_const + 2 * hc
    distal = k.g_distal * np.cos(q1 + q2)
    # rhs = tau - C qdot - g - F
    b1 = tau[..., 0] + hs * v2 * (2 * v1 + v2) - k.g_proximal * np.cos(q1) - distal
    b2 = tau[..., 1] - hs * v1 * v1 - distal
    if k.has_friction:
        fr = friction_torque(p, qdot)
        b1 = b1 - fr[..., 0]
        b2 = b2 - fr[..., 1]
    det = m11 * m22 - m12 * m12
    if np.any(det <= rcond * np.maximum(np.maximum(m11, np.abs(m12)), m22) ** 2):
        raise SingularMass(f"mass matrix ill-conditioned (det={np.min(det):.3g})")
    return np.stack([(m22 * b1 - m12 * b2) / det, (m11 * b2 - m12 * b1) / det], -1)


def kinetic_energy(p, q, qdot) -> np.ndarray:
    qdot = np.asarray(qdot, dtype=float)
    M = mass_matrix(p, q)
    return 0.5 * np.einsum("...i,...ij,...j->...", qdot, M, qdot)
