"""Built-in invariant checks run by ``robosync verify``.

Each check is cheap (a few seconds at most) and independent of any
configuration file: skew-symmetry of ``Mdot - 2C`` on the bundled robots,
Laplacian structure of the bundled topologies, the closed-form observer
matrix on a chain and fourth-order convergence of the integrator.
"""

from __future__ import annotations

import time
from dataclasses import dataclass
from typing import Callable

import numpy as np

from . import manipulator as mm
from .config import bundled_scenario, parse_and_validate
from .engine import ObserverNetwork, integrate, rk4_step
from .graph import chain, laplacian, min_real_eig_H
from .leader import DEFAULT_A0, DEFAULT_CHI0, LeaderSystem, closed_form_default_leader


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    value: float
    tolerance: float
    detail: str
    seconds: float

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        return f"{status} {self.name}: {self.detail} (value={self.value:.3e}, tol={self.tolerance:.1e}, {self.seconds:.2f}s)"


def skew_symmetry_residual(samples: int = 10_000, seed: int = 0) -> float:
    """Largest ``|x^T (Mdot - 2C) x|`` over random states of every bundled robot."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for p in mm.REFERENCE_ARMS:
        q = rng.uniform(-np.pi, np.pi, (samples, 2))
        qd = rng.uniform(-5.0, 5.0, (samples, 2))
        x = rng.uniform(-5.0, 5.0, (samples, 2))
        N = mm.mass_matrix_dot(p, q, qd) - 2 * mm.coriolis_matrix(p, q, qd)
        worst = max(worst, float(np.abs(np.einsum("ki,kij,kj->k", x, N, x)).max()))
    return worst


def laplacian_residual() -> float:
    """Structural defects of the bundled topologies' Laplacians.

    Zero row sums, nonpositive off-diagonals, ``H = L[1:, 1:]``, ``Phi``
    diagonal of leader weights and ``min Re eig(H) > 0``. Returns the worst
    absolute violation (``inf`` if ``H`` is not stable).
    """
    worst = 0.0
    for name in ("default", "chain"):
        g = parse_and_validate(bundled_scenario(name)).graph
        part = laplacian(g)
        L = part.L
        off = L - np.diag(np.diag(L))
        worst = max(
            worst,
            float(np.abs(L.sum(axis=1)).max()),
            float(np.clip(off, 0, None).max()),
            float(np.abs(part.H - L[1:, 1:]).max()),
            float(np.abs(part.Phi - np.diag(g.adjacency()[1:, 0])).max()),
        )
        if not min_real_eig_H(g) > 0:
            return float("inf")
    return worst


def observer_closed_form_error(followers: int = 5, duration: float = 15.0, dt: float = 1e-3) -> float:
    """Worst entrywise gap between agent 1's matrix estimate on a unit chain and
    ``(1 - exp(-t)) A0`` over ``[0, duration]``."""
    net = ObserverNetwork(chain(followers), LeaderSystem(DEFAULT_A0, DEFAULT_CHI0))
    y = net.initial_state()
    steps = int(round(duration / dt))
    worst = 0.0
    for k in range(steps):
        y = rk4_step(net, k * dt, y, dt)
        t = (k + 1) * dt
        A1 = net.split(y)[2][0]
        worst = max(worst, float(np.abs(A1 - (1 - np.exp(-t)) * net.A0).max()))
    return worst


def leader_error(dt_steps: int, T: float = 10.0, dtype=np.longdouble) -> float:
    """Max abs RK4 error of the default leader at ``T`` using ``dt_steps`` steps."""
    A0 = np.asarray(DEFAULT_A0, dtype=dtype)
    h = dtype(T) / dt_steps
    y = integrate(lambda t, y: A0 @ y, np.asarray(DEFAULT_CHI0, dtype=dtype), h, dt_steps)
    return float(np.abs(y - closed_form_default_leader(dtype(T))).max())


def rk4_order_ratio(T: float = 10.0, dt: float = 1e-3) -> float:
    """Error ratio when the step halves; about 16 for a fourth-order method.

    Run in extended precision: in float64 the ``dt = 5e-4`` error at ``T = 10``
    is within a few ulps of round-off and the ratio is noisy.
    """
    n = int(round(T / dt))
    return leader_error(n, T) / leader_error(2 * n, T)


def _timed(name: str, fn: Callable[[], float], ok: Callable[[float], bool], tol: float, detail: str) -> CheckResult:
    t0 = time.perf_counter()
    value = fn()
    return CheckResult(name, bool(ok(value)), value, tol, detail, time.perf_counter() - t0)


def run_all() -> list[CheckResult]:
    return [
        _timed(
            "skew-symmetry",
            skew_symmetry_residual,
            lambda v: v <= 1e-10,
            1e-10,
            "max |x^T (Mdot - 2C) x| over 1e4 states per robot",
        ),
        _timed("laplacian", laplacian_residual, lambda v: v <= 1e-12, 1e-12, "row sums, signs, partition, stable H"),
        _timed(
            "observer-closed-form",
            observer_closed_form_error,
            lambda v: v <= 1e-6,
            1e-6,
            "agent 1 matrix estimate vs (1 - exp(-t)) A0 on [0, 15] s",
        ),
        _timed("rk4-order", rk4_order_ratio, lambda v: abs(v - 16) <= 2, 2.0, "leader error ratio for dt 1e-3 -> 5e-4"),
    ]
