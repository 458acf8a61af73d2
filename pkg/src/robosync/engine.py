"""Fixed-step simulation of the full coupled network.

The world state (leader, every observer, every arm, every weight matrix) is
one flat vector advanced by classical RK4. Each vector-field evaluation runs
in phase order, reading only from the stage snapshot:

1. leader field
2. observer rates for all followers (neighbor exchange)
3. per-agent controller: errors, references, regressor, torque, weight rate
4. per-agent plant forward dynamics

Phases 3-4 touch only local data and may be split over worker threads; each
worker owns a contiguous block of agents and writes only its own slice.
"""

from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import controller as ctl
from . import manipulator as mm
from .config import ExperimentConfig, RbfConfig, SimulationSettings
from .errors import EmptyLog, NumericalBlowup, TorqueCapExceeded, ValidationError
from .estimator import network_derivatives
from .graph import DirectedGraph, laplacian
from .leader import LeaderSystem
from .rbf import WindowAverager, project, regressor

log = logging.getLogger(__name__)


# -- state layout -------------------------------------------------------------


@dataclass(frozen=True)
class Layout:
    followers: int
    joints: int
    nodes: int

    @property
    def m(self) -> int:
        return 2 * self.joints

    @property
    def sizes(self) -> tuple[int, ...]:
        N, m, n = self.followers, self.m, self.joints
        return (m, N * m, N * m * m, N * m, N * self.nodes * n)

    @property
    def size(self) -> int:
        return sum(self.sizes)


@dataclass
class WorldState:
    """Structured view of the flat state vector (arrays share its memory)."""

    t: float
    chi0: np.ndarray  # (2n,)
    chi_hat: np.ndarray  # (N, 2n)
    A_hat: np.ndarray  # (N, 2n, 2n)
    x: np.ndarray  # (N, 2n) = [q, qdot]
    W: np.ndarray  # (N, nodes, n)

    @classmethod
    def view(cls, layout: Layout, t: float, y: np.ndarray) -> "WorldState":
        N, m, n = layout.followers, layout.m, layout.joints
        parts = np.split(y, np.cumsum(layout.sizes)[:-1])
        return cls(
            t=t,
            chi0=parts[0],
            chi_hat=parts[1].reshape(N, m),
            A_hat=parts[2].reshape(N, m, m),
            x=parts[3].reshape(N, m),
            W=parts[4].reshape(N, layout.nodes, n),
        )

    def flatten(self) -> np.ndarray:
        return np.concatenate([a.ravel() for a in (self.chi0, self.chi_hat, self.A_hat, self.x, self.W)])


def rk4_step(f: Callable[[float, np.ndarray], np.ndarray], t: float, y: np.ndarray, h: float) -> np.ndarray:
    """One classical Runge-Kutta step of size ``h``."""
    k1 = f(t, y)
    k2 = f(t + h / 2, y + (h / 2) * k1)
    k3 = f(t + h / 2, y + (h / 2) * k2)
    k4 = f(t + h, y + h * k3)
    return y + (h / 6) * (k1 + 2 * k2 + 2 * k3 + k4)


def integrate(f, y0: np.ndarray, dt: float, steps: int, t0: float = 0.0) -> np.ndarray:
    """Advance ``y0`` by ``steps`` RK4 steps; time of step k is ``t0 + k dt``."""
    y = np.array(y0, copy=True)
    for k in range(steps):
        y = rk4_step(f, t0 + k * dt, y, dt)
    return y


class ObserverNetwork:
    """Leader plus the cooperative estimators alone, without plants.

    The estimator layer never reads plant state, so this reduced system
    reproduces the observer trajectories of a full run; it exists for fast
    checks of the first layer.

    State layout: ``[chi0, chi_hat (N, m), A_hat (N, m, m)]`` flattened.
    """

    def __init__(self, graph: DirectedGraph, leader: LeaderSystem, beta1=1.0, beta2=1.0):
        self.L = laplacian(graph).L
        self.N = graph.followers
        self.A0 = np.asarray(leader.A0)
        self.chi0 = np.asarray(leader.chi0)
        self.m = self.A0.shape[0]
        self.beta1 = np.broadcast_to(np.asarray(beta1, dtype=float), (self.N,))
        self.beta2 = np.broadcast_to(np.asarray(beta2, dtype=float), (self.N,))

    def initial_state(self, chi_hat0=None, A_hat0=None) -> np.ndarray:
        N, m = self.N, self.m
        chi_hat = np.zeros((N, m)) if chi_hat0 is None else np.asarray(chi_hat0, dtype=float)
        A_hat = np.zeros((N, m, m)) if A_hat0 is None else np.asarray(A_hat0, dtype=float)
        return np.concatenate([self.chi0, chi_hat.ravel(), A_hat.ravel()])

    def split(self, y: np.ndarray):
        N, m = self.N, self.m
        return y[:m], y[m : m + N * m].reshape(N, m), y[m + N * m :].reshape(N, m, m)

    def __call__(self, t: float, y: np.ndarray) -> np.ndarray:
        chi0, chi_hat, A_hat = self.split(y)
        chi0_dot = self.A0 @ chi0
        rates = network_derivatives(
            self.L, self.beta1, self.beta2, chi0, chi0_dot, self.A0, chi_hat, A_hat, second=False
        )
        return np.concatenate([chi0_dot, rates.chi_dot.ravel(), rates.A_dot.ravel()])

    def errors(self, y: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per-follower ``|chi_hat - chi0|`` and ``|A_hat - A0|_F``."""
        chi0, chi_hat, A_hat = self.split(y)
        return (
            np.linalg.norm(chi_hat - chi0, axis=1),
            np.linalg.norm((A_hat - self.A0).reshape(self.N, -1), axis=1),
        )


# -- trajectory log -----------------------------------------------------------


SIGNAL_KEYS = ("e", "r", "tau", "Z", "H", "q", "xhat", "chi_tilde", "A_tilde", "nn_residual", "weight_norm")


@dataclass
class TrajectoryLog:
    """Time series sampled every ``stride`` integrator steps.

    Per-agent arrays have the agent on axis 1: ``e`` is ``(T, N, n)``,
    ``chi_tilde`` is ``(T, N)`` and so on.
    """

    agent_names: tuple[str, ...]
    stride: int
    t: np.ndarray
    chi0: np.ndarray
    e: np.ndarray
    r: np.ndarray
    tau: np.ndarray
    Z: np.ndarray
    H: np.ndarray
    q: np.ndarray
    xhat: np.ndarray
    chi_tilde: np.ndarray
    A_tilde: np.ndarray
    nn_residual: np.ndarray
    weight_norm: np.ndarray

    def __len__(self) -> int:
        return len(self.t)

    @property
    def followers(self) -> int:
        return len(self.agent_names)


class _LogBuilder:
    def __init__(self, names, stride):
        self.names = tuple(names)
        self.stride = stride
        self.rows: dict[str, list] = {k: [] for k in ("t", "chi0", *SIGNAL_KEYS)}

    def add(self, t: float, chi0: np.ndarray, signals: dict) -> None:
        self.rows["t"].append(t)
        self.rows["chi0"].append(np.array(chi0, dtype=float))
        for k in SIGNAL_KEYS:
            self.rows[k].append(signals[k])

    def build(self) -> TrajectoryLog:
        arrays = {k: np.asarray(v, dtype=float) for k, v in self.rows.items()}
        return TrajectoryLog(agent_names=self.names, stride=self.stride, **arrays)


# -- simulation ---------------------------------------------------------------


class Simulation:
    """Integrator for one configured network.

    Args:
        config: Validated experiment configuration.
        initial_weights: ``(N, nodes, n)`` starting weights; zero if omitted.
        freeze_weights: Run with adaptation off (``Gamma := 0``).
        workers: Threads for the per-agent phases; defaults to ``config.sim.workers``.
        zero_torque: Force every torque to zero (test hook for layer isolation).
        dtype: Floating type of the state vector.
    """

    def __init__(
        self,
        config: ExperimentConfig,
        *,
        initial_weights=None,
        freeze_weights: bool = False,
        workers: int | None = None,
        zero_torque: bool = False,
        dtype=np.float64,
    ):
        self.config = config
        self.lattice = config.rbf.lattice()
        n = config.joints
        N = config.followers
        self.layout = Layout(N, n, self.lattice.node_count)
        self.dtype = dtype
        self.A0 = config.leader.A0
        self.L = laplacian(config.graph).L
        agents = config.agents
        self.beta1 = np.array([a.observer.beta1 for a in agents])
        self.beta2 = np.array([a.observer.beta2 for a in agents])
        self.lam = np.array([a.controller.lam for a in agents])
        self.K = np.array([a.controller.K_matrix(n) for a in agents]).reshape(N, n, n)
        self.Gamma = np.zeros(N) if freeze_weights else np.array([a.controller.Gamma for a in agents])
        self.sigma = np.array([a.controller.sigma for a in agents])
        self.frozen = freeze_weights
        self.zero_torque = zero_torque
        self.input_indices = config.rbf.input_indices
        self.bank = mm.ManipulatorBank.stack([a.params for a in agents]) if N else None
        self.caps = config.safety

        if initial_weights is None:
            self.W0 = np.zeros((N, self.lattice.node_count, n))
        else:
            W0 = np.asarray(initial_weights, dtype=float)
            if W0.shape != (N, self.lattice.node_count, n):
                raise ValidationError("weights", f"expected shape {(N, self.lattice.node_count, n)}, got {W0.shape}")
            self.W0 = W0

        self.workers = max(1, min(workers or config.sim.workers, max(N, 1)))
        bounds = np.linspace(0, N, self.workers + 1).round().astype(int)
        self.blocks = [slice(lo, hi) for lo, hi in zip(bounds[:-1], bounds[1:]) if hi > lo]
        self.block_banks = [self.bank.take(b) for b in self.blocks] if N else []
        self._pool = ThreadPoolExecutor(self.workers) if self.workers > 1 and len(self.blocks) > 1 else None

    def close(self) -> None:
        if self._pool is not None:
            self._pool.shutdown()
            self._pool = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    # -- state -----------------------------------------------------------

    def initial_state(self) -> np.ndarray:
        cfg = self.config
        N, m = self.layout.followers, self.layout.m
        chi_hat = np.zeros((N, m))
        A_hat = np.zeros((N, m, m))
        x = np.zeros((N, m))
        for i, a in enumerate(cfg.agents):
            if a.chi_hat0 is not None:
                chi_hat[i] = a.chi_hat0
            if a.A_hat0 is not None:
                A_hat[i] = a.A_hat0
            x[i] = [*a.q0, *a.qdot0]
        world = WorldState(0.0, cfg.leader.chi0, chi_hat, A_hat, x, self.W0)
        return world.flatten().astype(self.dtype)

    def world(self, t: float, y: np.ndarray) -> WorldState:
        return WorldState.view(self.layout, t, y)

    # -- vector field ----------------------------------------------------

    def vector_field(self, t: float, y: np.ndarray) -> np.ndarray:
        """Time derivative of the flat world state."""
        dy, _ = self._evaluate(t, y, want_signals=False)
        return dy

    __call__ = vector_field

    def signals(self, t: float, y: np.ndarray) -> dict:
        """Per-agent diagnostics at one state, including the model-based target ``H``."""
        _, sig = self._evaluate(t, y, want_signals=True)
        return sig

    def _evaluate(self, t, y, want_signals):
        n = self.layout.joints
        w = self.world(t, y)
        dy = np.empty_like(y)
        d = self.world(t, dy)

        # 1. leader
        d.chi0[:] = self.A0 @ w.chi0
        if self.layout.followers == 0:
            return dy, _empty_signals(n)

        # 2. observers
        rates = network_derivatives(self.L, self.beta1, self.beta2, w.chi0, d.chi0, self.A0, w.chi_hat, w.A_hat)
        d.chi_hat[:] = rates.chi_dot
        d.A_hat[:] = rates.A_dot

        # 3-4. controllers and plants
        args = (t, w, d, rates, want_signals)
        if self._pool is None:
            parts = [self._agent_block(b, bank, *args) for b, bank in zip(self.blocks, self.block_banks)]
        else:
            futures = [self._pool.submit(self._agent_block, b, bank, *args) for b, bank in zip(self.blocks, self.block_banks)]
            parts = [f.result() for f in futures]

        if not np.all(np.isfinite(dy)):
            bad = np.argwhere(~np.isfinite(self._per_agent_rows(dy)))
            agent = int(bad[0, 0]) + 1 if bad.size else None
            raise NumericalBlowup(t, agent, "non-finite state derivative")

        sig = None
        if want_signals:
            sig = {k: np.concatenate([p[k] for p in parts]) for k in parts[0]}
            sig["chi_tilde"] = np.linalg.norm(w.chi_hat - w.chi0, axis=1)
            sig["A_tilde"] = np.linalg.norm((w.A_hat - self.A0).reshape(self.layout.followers, -1), axis=1)
            sig["weight_norm"] = np.linalg.norm(w.W.reshape(self.layout.followers, -1), axis=1)
        return dy, sig

    def _agent_block(self, sl: slice, bank, t, w: WorldState, d: WorldState, rates, want_signals):
        n = self.layout.joints
        q, qd = w.x[sl, :n], w.x[sl, n:]
        xhat = w.chi_hat[sl, :n]
        xhat_d = rates.chi_dot[sl, :n]
        xhat_dd = rates.chi_ddot[sl, :n]
        lam = self.lam[sl]

        e, ed, r = ctl.tracking_errors(q, qd, xhat, xhat_d, lam)
        xr_d, xr_dd = ctl.reference_signals(xhat_d, xhat_dd, e, ed, lam)
        Z = ctl.nn_input(q, qd, xr_d, xr_dd, self.input_indices)
        S = regressor(self.lattice, Z)
        W = w.W[sl]
        tau = ctl.torque_from_regressor(W, S, r, self.K[sl])
        if self.zero_torque:
            tau = np.zeros_like(tau)
        self._check_caps(t, sl, tau, r)
        d.W[sl] = ctl.adapt_weights(W, S, r, self.Gamma[sl], self.sigma[sl])
        d.x[sl, :n] = qd
        d.x[sl, n:] = mm.forward_dynamics(bank, q, qd, tau)

        if not want_signals:
            return None
        H = ctl.target_function(bank, q, qd, xr_d, xr_dd)
        return {
            "e": e,
            "r": r,
            "tau": tau,
            "Z": Z,
            "H": H,
            "q": np.array(q),
            "xhat": np.array(xhat),
            "nn_residual": np.linalg.norm(project(W, S) - H, axis=1),
        }

    def _check_caps(self, t, sl, tau, r):
        tau_sq = np.einsum("ij,ij->i", tau, tau)
        if tau_sq.max() > self.caps.torque**2:
            i = int(np.argmax(tau_sq))
            raise TorqueCapExceeded(t, sl.start + i + 1, f"|tau|={np.sqrt(tau_sq[i]):.6g} N m exceeds cap {self.caps.torque:g}")
        r_sq = np.einsum("ij,ij->i", r, r)
        if r_sq.max() > self.caps.r**2:
            i = int(np.argmax(r_sq))
            raise NumericalBlowup(t, sl.start + i + 1, f"|r|={np.sqrt(r_sq[i]):.6g} exceeds cap {self.caps.r:g}")

    def _per_agent_rows(self, y):
        w = self.world(0.0, y)
        N = self.layout.followers
        return np.concatenate(
            [w.chi_hat, w.A_hat.reshape(N, -1), w.x, w.W.reshape(N, -1)], axis=1
        )

    # -- stepping --------------------------------------------------------

    def step(self, t: float, y: np.ndarray, dt: float | None = None) -> np.ndarray:
        dt = self.config.sim.dt if dt is None else dt
        y_next = rk4_step(self._evaluate_plain, t, y, dt)
        if self.layout.followers:
            W = self.world(t + dt, y_next).W
            wn = np.linalg.norm(W.reshape(self.layout.followers, -1), axis=1)
            if not np.all(np.isfinite(wn)) or np.any(wn > self.caps.weights):
                i = int(np.argmax(np.where(np.isfinite(wn), wn, np.inf)))
                raise NumericalBlowup(t + dt, i + 1, f"|W|_F={wn[i]:.6g} exceeds cap {self.caps.weights:g}")
        if not np.all(np.isfinite(y_next)):
            raise NumericalBlowup(t + dt, None, "non-finite state after step")
        return y_next

    def _evaluate_plain(self, t, y):
        return self._evaluate(t, y, False)[0]

    def run(self, *, average_window: tuple[float, float] | None = None) -> "RunOutput":
        """Integrate over ``[0, duration]`` logging every ``log_stride`` steps."""
        sim = self.config.sim
        steps = sim.steps
        stride = sim.log_stride
        builder = _LogBuilder([a.name for a in self.config.agents], stride)
        averager = WindowAverager(*average_window) if average_window else None
        y = self.initial_state()
        for k in range(steps + 1):
            t = k * sim.dt
            if k % stride == 0:
                world = self.world(t, y)
                builder.add(t, world.chi0, self.signals(t, y))
                if averager is not None:
                    averager.offer(t, world.W)
            if k == steps:
                break
            y = self.step(t, y)
        return RunOutput(log=builder.build(), final_state=y, averager=averager, sim=self)


def _empty_signals(n):
    return {
        k: np.zeros((0, n)) if k in ("e", "r", "tau", "H", "q", "xhat") else np.zeros((0,))
        for k in SIGNAL_KEYS
    }


@dataclass
class RunOutput:
    log: TrajectoryLog
    final_state: np.ndarray
    averager: WindowAverager | None
    sim: Simulation

    @property
    def final_weights(self) -> np.ndarray:
        return np.array(self.sim.world(self.log.t[-1], self.final_state).W)


# -- experiments --------------------------------------------------------------


@dataclass
class ExperimentResult:
    mode: str
    log: TrajectoryLog
    summary: dict
    weights: np.ndarray | None = None  # time-averaged weights (learn mode)
    final_weights: np.ndarray | None = None
    config: ExperimentConfig | None = field(default=None, repr=False)


def run_experiment(config: ExperimentConfig, weights=None, *, workers: int | None = None) -> ExperimentResult:
    """Run one experiment in the configured mode.

    Learn mode integrates from zero weights and returns the mean weights over
    the averaging window (``None`` if the run ends before the window closes).
    Replay mode starts from ``weights`` with adaptation frozen.
    """
    mode = config.sim.mode
    if mode == "replay":
        if weights is None:
            raise ValidationError("simulation.mode", "replay mode needs stored weights")
        sim = Simulation(config, initial_weights=weights, freeze_weights=True, workers=workers)
        window = None
    else:
        sim = Simulation(config, workers=workers)
        window = tuple(config.sim.window)
    with sim:
        out = sim.run(average_window=window)

    Wbar = None
    if window is not None and out.averager is not None and out.averager.complete:
        Wbar = out.averager.mean()
    elif window is not None:
        log.info("run ended at t=%.6g s before the averaging window closed; no weights emitted", out.log.t[-1])
    summary = compute_metrics(
        out.log,
        threshold=config.metrics.settle_threshold,
        hold=config.metrics.settle_hold,
        window=tuple(config.sim.window),
        weights=Wbar if mode == "learn" else np.asarray(weights, dtype=float),
        lattice=sim.lattice,
    )
    return ExperimentResult(
        mode=mode,
        log=out.log,
        summary=summary,
        weights=Wbar,
        final_weights=out.final_weights,
        config=config,
    )


# -- metrics ------------------------------------------------------------------


def settling_time(t: np.ndarray, err: np.ndarray, threshold: float, hold: float) -> float | None:
    """Earliest sample time after which ``err`` stays below ``threshold`` for ``hold`` seconds.

    If fewer than ``hold`` seconds remain, every remaining sample must be
    below threshold. Returns ``None`` when never settled.
    """
    below = err < threshold
    # suffix run: index of the first failing sample at or after k
    next_fail = np.full(len(t) + 1, len(t))
    for k in range(len(t) - 1, -1, -1):
        next_fail[k] = next_fail[k + 1] if below[k] else k
    for k in range(len(t)):
        if not below[k]:
            continue
        horizon = t[k] + hold
        end = next_fail[k]
        if end == len(t) or t[end] > horizon + 1e-12:
            return float(t[k])
    return None


def _decay_rate(t, values, floor=1e-12):
    mask = values > floor
    if mask.sum() < 2:
        return None
    slope, _ = np.polyfit(t[mask], np.log(values[mask]), 1)
    return float(slope)


def compute_metrics(
    log: TrajectoryLog,
    *,
    threshold: float = 0.05,
    hold: float = 2.0,
    window: tuple[float, float] | None = None,
    weights=None,
    lattice=None,
) -> dict:
    """Summary statistics of a run.

    Per agent: settling time (``None`` = not settled), post-settling
    ``sup |e|``, ``sup |r|``, ``sup |tau|``, ``sup |W|_F``, final
    ``|A_tilde|_F``, the least-squares log-slope of ``|A_tilde|_F`` and,
    when ``weights`` and ``lattice`` are given, the ratio
    ``max |Wbar^T S(Z) - H| / max |H|`` over ``window``.
    """
    if len(log) == 0:
        raise EmptyLog("trajectory log has no samples")
    t = log.t
    e_norm = np.linalg.norm(log.e, axis=2) if log.e.size else np.zeros((len(t), 0))
    agents = []
    for i, name in enumerate(log.agent_names):
        T = settling_time(t, e_norm[:, i], threshold, hold)
        entry = {
            "name": name,
            "settling_time": T,
            "post_settling_sup_e": None if T is None else float(e_norm[t >= T, i].max()),
            "sup_r": float(np.linalg.norm(log.r[:, i], axis=1).max()),
            "sup_tau": float(np.linalg.norm(log.tau[:, i], axis=1).max()),
            "sup_weight_norm": float(log.weight_norm[:, i].max()),
            "final_chi_tilde": float(log.chi_tilde[-1, i]),
            "final_A_tilde": float(log.A_tilde[-1, i]),
            "A_tilde_rate": _decay_rate(t, log.A_tilde[:, i]),
            "nn_residual_ratio": None,
        }
        agents.append(entry)

    if weights is not None and lattice is not None and window is not None:
        mask = (t >= window[0] - 1e-9) & (t <= window[1] + 1e-9)
        if mask.any():
            ratios = nn_residual_ratio(log, np.asarray(weights), lattice, mask)
            for entry, ratio in zip(agents, ratios):
                entry["nn_residual_ratio"] = float(ratio)
    return {"samples": len(t), "t_end": float(t[-1]), "agents": agents}


def nn_residual_ratio(log: TrajectoryLog, weights: np.ndarray, lattice, mask) -> np.ndarray:
    """``max_t |W^T S(Z(t)) - H(t)| / max_t |H(t)|`` per agent over masked samples."""
    Z = log.Z[mask]
    H = log.H[mask]
    approx = project(weights[None], regressor(lattice, Z))
    res = np.linalg.norm(approx - H, axis=2).max(axis=0)
    scale = np.linalg.norm(H, axis=2).max(axis=0)
    return res / scale


def leader_only_config(leader: LeaderSystem, dt: float, duration: float) -> ExperimentConfig:
    """Degenerate network with no followers; only the leader is integrated."""
    return ExperimentConfig(
        graph=DirectedGraph(1, ()),
        leader=leader,
        agents=(),
        rbf=RbfConfig(nodes_per_dim=2, ranges=((-1.0, 1.0),) * 4, width=1.0),
        sim=SimulationSettings(dt=dt, duration=duration, window=(0.0, max(duration, dt))),
    )
