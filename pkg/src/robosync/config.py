"""Experiment configuration: YAML document <-> validated :class:`ExperimentConfig`.

Validation enforces both assumptions of the control scheme (leader
eigenvalues on the imaginary axis, a spanning tree rooted at the leader) and
names the violated rule in every :class:`ValidationError`.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, replace
from importlib import resources
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .controller import DEFAULT_LAMBDA, ControllerGains
from .errors import DimensionMismatch, IoError, ParseError, ValidationError
from .estimator import ObserverGains
from .graph import DirectedGraph, build_graph, unreachable_followers
from .leader import DEFAULT_EIG_TOL, LeaderSystem, validate_leader_matrix
from .manipulator import ManipulatorParams
from .rbf import RbfLattice, build_lattice

SCHEMA_VERSION = 1
MODES = ("learn", "replay")


@dataclass(frozen=True)
class AgentConfig:
    name: str
    params: ManipulatorParams
    q0: tuple[float, ...]
    qdot0: tuple[float, ...]
    observer: ObserverGains
    controller: ControllerGains
    chi_hat0: tuple[float, ...] | None = None
    A_hat0: tuple[tuple[float, ...], ...] | None = None


@dataclass(frozen=True)
class RbfConfig:
    nodes_per_dim: int
    ranges: tuple[tuple[float, float], ...]
    width: float
    input_indices: tuple[int, ...] = (0, 1, 2, 3)

    def lattice(self) -> RbfLattice:
        return build_lattice(len(self.input_indices), self.nodes_per_dim, self.ranges, self.width)


@dataclass(frozen=True)
class SimulationSettings:
    dt: float = 1e-3
    duration: float = 30.0
    window: tuple[float, float] = (20.0, 30.0)
    mode: str = "learn"
    log_stride: int = 10
    workers: int = 1

    @property
    def steps(self) -> int:
        return int(round(self.duration / self.dt))


@dataclass(frozen=True)
class SafetyCaps:
    torque: float = 500.0
    r: float = 100.0
    weights: float = 1e4


@dataclass(frozen=True)
class MetricSettings:
    settle_threshold: float = 0.05
    settle_hold: float = 2.0


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    graph: DirectedGraph
    leader: LeaderSystem
    agents: tuple[AgentConfig, ...]
    rbf: RbfConfig
    sim: SimulationSettings = SimulationSettings()
    safety: SafetyCaps = SafetyCaps()
    metrics: MetricSettings = MetricSettings()
    eigen_tol: float = DEFAULT_EIG_TOL

    @property
    def followers(self) -> int:
        return len(self.agents)

    @property
    def joints(self) -> int:
        return self.leader.joints

    def with_sim(self, **changes) -> "ExperimentConfig":
        return replace(self, sim=replace(self.sim, **changes))

    def to_dict(self) -> dict:
        return to_document(self)

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def __eq__(self, other):
        return isinstance(other, ExperimentConfig) and self.to_dict() == other.to_dict()

    __hash__ = None


# -- document helpers ---------------------------------------------------------


def _mapping(doc: Any, path: str, required: tuple[str, ...], optional: tuple[str, ...] = ()) -> dict:
    if not isinstance(doc, dict):
        raise ValidationError(path or "document", "expected a mapping")
    unknown = sorted(set(doc) - set(required) - set(optional))
    if unknown:
        raise ValidationError(f"{path}.{unknown[0]}" if path else unknown[0], "unknown key")
    for key in required:
        if key not in doc:
            raise ValidationError(f"{path}.{key}" if path else key, "missing required key")
    return doc


def _real(value: Any, path: str, *, positive: bool = False, nonneg: bool = False) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(path, f"expected a number, got {value!r}")
    value = float(value)
    if not np.isfinite(value):
        raise ValidationError(path, "must be finite")
    if positive and value <= 0:
        raise ValidationError(path, f"must be strictly positive, got {value}")
    if nonneg and value < 0:
        raise ValidationError(path, f"must be non-negative, got {value}")
    return value


def _int(value: Any, path: str, minimum: int | None = None) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(path, f"expected an integer, got {value!r}")
    if minimum is not None and value < minimum:
        raise ValidationError(path, f"must be >= {minimum}, got {value}")
    return value


def _vector(value: Any, path: str, length: int | None = None) -> tuple[float, ...]:
    if not isinstance(value, (list, tuple)):
        raise ValidationError(path, "expected a list of numbers")
    out = tuple(_real(v, f"{path}[{i}]") for i, v in enumerate(value))
    if length is not None and len(out) != length:
        raise ValidationError(path, f"expected {length} entries, got {len(out)}")
    return out


def _matrix(value: Any, path: str, shape: tuple[int, int] | None = None) -> tuple[tuple[float, ...], ...]:
    if not isinstance(value, (list, tuple)) or not value:
        raise ValidationError(path, "expected a non-empty list of rows")
    rows = tuple(_vector(r, f"{path}[{i}]") for i, r in enumerate(value))
    if len({len(r) for r in rows}) != 1:
        raise ValidationError(path, "rows have different lengths")
    if shape is not None and (len(rows), len(rows[0])) != shape:
        raise ValidationError(path, f"expected shape {shape}, got {(len(rows), len(rows[0]))}")
    return rows


def _gain_K(value: Any, path: str, n: int):
    if isinstance(value, (list, tuple)):
        return _matrix(value, path, (n, n))
    K = _real(value, path)
    if K <= 0:
        raise ValidationError("gain positivity", f"{path} must be positive definite, got {K}")
    return K


def _observer_gains(doc: dict, path: str, base: ObserverGains) -> ObserverGains:
    _mapping(doc, path, (), ("beta1", "beta2"))
    values = {}
    for key in ("beta1", "beta2"):
        if key in doc:
            v = _real(doc[key], f"{path}.{key}")
            if v <= 0:
                raise ValidationError("gain positivity", f"{path}.{key} must be strictly positive, got {v}")
            values[key] = v
    return replace(base, **values)


def _controller_gains(doc: dict, path: str, base: dict, n: int, required: tuple[str, ...] = ()) -> dict:
    _mapping(doc, path, required, tuple({"lambda", "K", "Gamma", "sigma"} - set(required)))
    out = dict(base)
    for key in ("lambda", "Gamma", "sigma"):
        if key in doc:
            v = _real(doc[key], f"{path}.{key}")
            if v <= 0:
                raise ValidationError("gain positivity", f"{path}.{key} must be strictly positive, got {v}")
            out[key] = v
    if "K" in doc:
        out["K"] = _gain_K(doc["K"], f"{path}.K", n)
    return out


def _make_controller(values: dict, path: str) -> ControllerGains:
    try:
        return ControllerGains(lam=values["lambda"], K=values["K"], Gamma=values["Gamma"], sigma=values["sigma"])
    except ValidationError as exc:
        raise ValidationError("gain positivity", f"{path}: {exc.detail}") from None


def _params(doc: dict, path: str) -> ManipulatorParams:
    _mapping(
        doc,
        path,
        ("m1", "m2", "l1", "l2", "I1", "I2"),
        ("lc1", "lc2", "gravity", "viscous", "coulomb"),
    )
    kw = {k: _real(doc[k], f"{path}.{k}") for k in ("m1", "m2", "l1", "l2", "I1", "I2", "lc1", "lc2", "gravity") if k in doc}
    for k in ("viscous", "coulomb"):
        if k in doc:
            kw[k] = _vector(doc[k], f"{path}.{k}", 2)
    try:
        return ManipulatorParams(**kw)
    except ValidationError as exc:
        raise ValidationError(exc.rule.replace("params", path, 1), exc.detail) from None


# -- parse --------------------------------------------------------------------


def from_document(doc: Any) -> ExperimentConfig:
    """Validate an already-loaded document (nested dicts/lists)."""
    _mapping(
        doc,
        "",
        ("schema_version", "topology", "leader", "controller", "rbf", "agents"),
        ("observer", "simulation", "safety", "metrics"),
    )
    version = doc["schema_version"]
    if version != SCHEMA_VERSION:
        raise ValidationError("schema_version", f"unsupported version {version!r}; this build reads {SCHEMA_VERSION}")

    # leader (Assumption 1)
    ld = _mapping(doc["leader"], "leader", ("A0", "chi0"), ("eigen_tol",))
    A0 = np.array(_matrix(ld["A0"], "leader.A0"))
    if A0.shape[0] != A0.shape[1]:
        raise ValidationError("leader.A0", f"matrix of shape {A0.shape} is not square")
    chi0 = np.array(_vector(ld["chi0"], "leader.chi0", A0.shape[0]))
    eigen_tol = _real(ld.get("eigen_tol", DEFAULT_EIG_TOL), "leader.eigen_tol", positive=True)
    try:
        leader = LeaderSystem(A0, chi0)
    except (DimensionMismatch, ValidationError) as exc:
        raise ValidationError("leader", exc.detail) from None
    validate_leader_matrix(A0, eigen_tol)
    n = leader.joints
    if n != 2:
        raise ValidationError("leader.A0", f"manipulator models are 2-DOF; A0 must be 4x4, got {A0.shape}")

    # topology (Assumption 2)
    td = _mapping(doc["topology"], "topology", ("followers", "edges"))
    followers = _int(td["followers"], "topology.followers", 1)
    if not isinstance(td["edges"], list):
        raise ValidationError("topology.edges", "expected a list of [parent, child, weight]")
    graph = build_graph(followers + 1, [tuple(e) if isinstance(e, (list, tuple)) else (e,) for e in td["edges"]])
    missing = unreachable_followers(graph)
    if missing:
        raise ValidationError(
            "Assumption 2",
            f"no directed spanning tree rooted at node 0: follower(s) {missing} unreachable from the leader",
        )

    # global gains
    obs_base = _observer_gains(doc.get("observer", {}), "observer", ObserverGains())
    ctl_base = _controller_gains(doc["controller"], "controller", {"lambda": DEFAULT_LAMBDA}, n, ("K", "Gamma", "sigma"))

    # rbf
    rd = _mapping(doc["rbf"], "rbf", ("nodes_per_dim", "ranges", "width"), ("input",))
    indices = tuple(_int(v, f"rbf.input[{i}]", 0) for i, v in enumerate(rd.get("input", [0, 1, 2, 3])))
    if not indices or len(set(indices)) != len(indices) or max(indices) >= 4 * n:
        raise ValidationError("rbf.input", f"need distinct indices into the {4 * n}-dim controller signal vector")
    raw_ranges = rd["ranges"]
    if isinstance(raw_ranges, list) and raw_ranges and not isinstance(raw_ranges[0], list):
        ranges = (_vector(raw_ranges, "rbf.ranges", 2),) * len(indices)
    else:
        ranges = _matrix(raw_ranges, "rbf.ranges", (len(indices), 2))
    rbf = RbfConfig(
        nodes_per_dim=_int(rd["nodes_per_dim"], "rbf.nodes_per_dim", 2),
        ranges=tuple((lo, hi) for lo, hi in ranges),
        width=_real(rd["width"], "rbf.width", positive=True),
        input_indices=indices,
    )
    rbf.lattice()  # range checks

    # agents
    if not isinstance(doc["agents"], list):
        raise ValidationError("agents", "expected a list")
    if len(doc["agents"]) != followers:
        raise ValidationError("agents", f"{len(doc['agents'])} agents listed for {followers} followers")
    agents = []
    for i, ad in enumerate(doc["agents"]):
        path = f"agents[{i}]"
        _mapping(ad, path, ("params", "q0"), ("name", "qdot0", "chi_hat0", "A_hat0", "observer", "controller"))
        ctl = _controller_gains(ad.get("controller", {}), f"{path}.controller", ctl_base, n)
        agents.append(
            AgentConfig(
                name=str(ad.get("name", f"agent{i + 1}")),
                params=_params(ad["params"], f"{path}.params"),
                q0=_vector(ad["q0"], f"{path}.q0", n),
                qdot0=_vector(ad.get("qdot0", [0.0] * n), f"{path}.qdot0", n),
                observer=_observer_gains(ad.get("observer", {}), f"{path}.observer", obs_base),
                controller=_make_controller(ctl, f"{path}.controller"),
                chi_hat0=_vector(ad["chi_hat0"], f"{path}.chi_hat0", 2 * n) if "chi_hat0" in ad else None,
                A_hat0=_matrix(ad["A_hat0"], f"{path}.A_hat0", (2 * n, 2 * n)) if "A_hat0" in ad else None,
            )
        )

    sd = _mapping(doc.get("simulation", {}), "simulation", (), ("dt", "duration", "window", "mode", "log_stride", "workers"))
    defaults = SimulationSettings()
    dt = _real(sd.get("dt", defaults.dt), "simulation.dt", positive=True)
    duration = _real(sd.get("duration", defaults.duration), "simulation.duration", nonneg=True)
    window = _vector(sd.get("window", list(defaults.window)), "simulation.window", 2)
    if not window[1] > window[0] >= 0:
        raise ValidationError("simulation.window", f"need t_b > t_a >= 0, got {list(window)}")
    steps = duration / dt
    if abs(steps - round(steps)) > 1e-6 * max(1.0, steps):
        raise ValidationError("simulation.duration", f"duration {duration} is not a whole number of steps of {dt}")
    mode = sd.get("mode", defaults.mode)
    if mode not in MODES:
        raise ValidationError("simulation.mode", f"expected one of {MODES}, got {mode!r}")
    sim = SimulationSettings(
        dt=dt,
        duration=duration,
        window=window,
        mode=mode,
        log_stride=_int(sd.get("log_stride", defaults.log_stride), "simulation.log_stride", 1),
        workers=_int(sd.get("workers", defaults.workers), "simulation.workers", 1),
    )

    sf = _mapping(doc.get("safety", {}), "safety", (), ("torque_cap", "r_cap", "weight_cap"))
    base_caps = SafetyCaps()
    safety = SafetyCaps(
        torque=_real(sf.get("torque_cap", base_caps.torque), "safety.torque_cap", positive=True),
        r=_real(sf.get("r_cap", base_caps.r), "safety.r_cap", positive=True),
        weights=_real(sf.get("weight_cap", base_caps.weights), "safety.weight_cap", positive=True),
    )

    md = _mapping(doc.get("metrics", {}), "metrics", (), ("settle_threshold", "settle_hold"))
    base_metrics = MetricSettings()
    metrics = MetricSettings(
        settle_threshold=_real(md.get("settle_threshold", base_metrics.settle_threshold), "metrics.settle_threshold", positive=True),
        settle_hold=_real(md.get("settle_hold", base_metrics.settle_hold), "metrics.settle_hold", nonneg=True),
    )

    return ExperimentConfig(
        graph=graph,
        leader=leader,
        agents=tuple(agents),
        rbf=rbf,
        sim=sim,
        safety=safety,
        metrics=metrics,
        eigen_tol=eigen_tol,
    )


def parse_and_validate(text: str) -> ExperimentConfig:
    """Parse YAML text into a validated config.

    Raises:
        ParseError: malformed YAML (carries the 1-based line number).
        ValidationError: any semantic violation.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        problem = getattr(exc, "problem", None) or str(exc)
        raise ParseError(problem, None if mark is None else mark.line + 1) from None
    if doc is None:
        raise ParseError("empty document", 1)
    return from_document(doc)


def load_config(path: str | Path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise IoError(f"cannot read config {path}: {exc.strerror or exc}") from None
    return parse_and_validate(text)


def bundled_scenario(name: str = "default") -> str:
    return resources.files("robosync.scenarios").joinpath(f"{name}.yaml").read_text()


def default_config() -> ExperimentConfig:
    return parse_and_validate(bundled_scenario("default"))


# -- serialize ----------------------------------------------------------------


def _K_doc(K):
    return [list(r) for r in K] if isinstance(K, tuple) else K


def to_document(cfg: ExperimentConfig) -> dict:
    """Fully explicit document: every default written out."""
    agents = []
    for a in cfg.agents:
        p = a.params
        ad = {
            "name": a.name,
            "params": {
                "m1": p.m1, "m2": p.m2, "l1": p.l1, "l2": p.l2, "I1": p.I1, "I2": p.I2,
                "lc1": p.lc1, "lc2": p.lc2, "gravity": p.gravity,
                "viscous": list(p.viscous), "coulomb": list(p.coulomb),
            },
            "q0": list(a.q0),
            "qdot0": list(a.qdot0),
            "observer": {"beta1": a.observer.beta1, "beta2": a.observer.beta2},
            "controller": {
                "lambda": a.controller.lam,
                "K": _K_doc(a.controller.K),
                "Gamma": a.controller.Gamma,
                "sigma": a.controller.sigma,
            },
        }
        if a.chi_hat0 is not None:
            ad["chi_hat0"] = list(a.chi_hat0)
        if a.A_hat0 is not None:
            ad["A_hat0"] = [list(r) for r in a.A_hat0]
        agents.append(ad)
    first = cfg.agents[0].controller
    return {
        "schema_version": SCHEMA_VERSION,
        "topology": {
            "followers": cfg.followers,
            "edges": [[e.parent, e.child, e.weight] for e in cfg.graph.edges],
        },
        "leader": {
            "A0": cfg.leader.A0.tolist(),
            "chi0": cfg.leader.chi0.tolist(),
            "eigen_tol": cfg.eigen_tol,
        },
        # per-agent blocks below carry the effective gains; the global block
        # only has to satisfy the required keys
        "controller": {"K": _K_doc(first.K), "Gamma": first.Gamma, "sigma": first.sigma},
        "rbf": {
            "nodes_per_dim": cfg.rbf.nodes_per_dim,
            "ranges": [list(r) for r in cfg.rbf.ranges],
            "width": cfg.rbf.width,
            "input": list(cfg.rbf.input_indices),
        },
        "agents": agents,
        "simulation": {
            "dt": cfg.sim.dt,
            "duration": cfg.sim.duration,
            "window": list(cfg.sim.window),
            "mode": cfg.sim.mode,
            "log_stride": cfg.sim.log_stride,
            "workers": cfg.sim.workers,
        },
        "safety": {"torque_cap": cfg.safety.torque, "r_cap": cfg.safety.r, "weight_cap": cfg.safety.weights},
        "metrics": {"settle_threshold": cfg.metrics.settle_threshold, "settle_hold": cfg.metrics.settle_hold},
    }


def serialize(cfg: ExperimentConfig) -> str:
    return yaml.safe_dump(to_document(cfg), sort_keys=False, default_flow_style=None)
