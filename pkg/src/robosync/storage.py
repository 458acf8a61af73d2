"""Result persistence: CSV time series, the weights artifact and run summaries.

CSV columns per agent (fixed order):
``t, e1, e2, r1, r2, tau1, tau2, chi_tilde_norm, A_tilde_fro, nn_residual``.
The network file holds ``t``, the leader state ``chi0_1..chi0_m`` and the
worst-agent norms ``max_e``, ``max_chi_tilde``, ``max_A_tilde``. Floats are
written with ``repr`` so every value reads back bit-exactly.
"""

from __future__ import annotations

import csv
import json
import os
import re
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable

import numpy as np

from .config import ExperimentConfig
from .engine import TrajectoryLog
from .errors import EmptyLog, IoError, ValidationError
from .rbf import RbfLattice

WEIGHTS_SCHEMA_VERSION = 1
WEIGHTS_KIND = "robosync-weights"

AGENT_COLUMNS = ("t", "e1", "e2", "r1", "r2", "tau1", "tau2", "chi_tilde_norm", "A_tilde_fro", "nn_residual")


def _fmt(x) -> str:
    return repr(float(x))


def agent_file_name(index: int, name: str) -> str:
    """``agent<k>_<name>.csv`` with ``k`` 1-based; unsafe characters become ``_``."""
    safe = re.sub(r"[^A-Za-z0-9_.-]", "_", name)
    return f"agent{index + 1}_{safe}.csv"


def _write_rows(path: Path, header: Iterable[str], rows: Iterable[Iterable[float]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([_fmt(v) for v in row])


def _ensure_dir(dest: Path) -> None:
    try:
        dest.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise IoError(f"cannot create output directory {dest}: {exc}") from exc


def write_timeseries(log: TrajectoryLog, dest: str | os.PathLike) -> list[Path]:
    """Write one CSV per agent plus ``network.csv`` into directory ``dest``.

    Returns:
        Paths written, agents first.

    Raises:
        EmptyLog: the log has no samples; nothing is created.
        IoError: the directory or a file cannot be written.
    """
    if len(log) == 0:
        raise EmptyLog("trajectory log has no samples")
    dest = Path(dest)
    _ensure_dir(dest)
    t = log.t
    written = []
    try:
        for i, name in enumerate(log.agent_names):
            cols = np.column_stack(
                [t, log.e[:, i], log.r[:, i], log.tau[:, i], log.chi_tilde[:, i], log.A_tilde[:, i], log.nn_residual[:, i]]
            )
            path = dest / agent_file_name(i, name)
            _write_rows(path, AGENT_COLUMNS, cols)
            written.append(path)
        m = log.chi0.shape[1]
        e_norm = np.linalg.norm(log.e.reshape(len(t), log.followers, -1), axis=2)
        worst = [a.max(axis=1, initial=0.0) for a in (e_norm, log.chi_tilde.reshape(len(t), -1), log.A_tilde.reshape(len(t), -1))]
        header = ["t", *(f"chi0_{k + 1}" for k in range(m)), "max_e", "max_chi_tilde", "max_A_tilde"]
        cols = np.column_stack([t, log.chi0, *worst])
        path = dest / "network.csv"
        _write_rows(path, header, cols)
        written.append(path)
    except OSError as exc:
        raise IoError(f"cannot write time series to {dest}: {exc}") from exc
    return written


def read_timeseries(path: str | os.PathLike) -> tuple[list[str], np.ndarray]:
    """Header and float matrix of one CSV written by :func:`write_timeseries`."""
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except OSError as exc:
        raise IoError(f"cannot read {path}: {exc}") from exc
    header, body = rows[0], rows[1:]
    return header, np.array([[float(v) for v in r] for r in body], dtype=float).reshape(len(body), len(header))


# -- weights artifact ---------------------------------------------------------


def weights_document(
    weights: np.ndarray,
    lattice: RbfLattice,
    config: ExperimentConfig,
    *,
    created: datetime | None = None,
) -> dict:
    weights = np.asarray(weights, dtype=float)
    names = [a.name for a in config.agents]
    if weights.shape != (len(names), lattice.node_count, config.joints):
        raise ValidationError(
            "weights", f"shape {weights.shape} does not match {(len(names), lattice.node_count, config.joints)}"
        )
    created = created or datetime.now(timezone.utc)
    return {
        "schema_version": WEIGHTS_SCHEMA_VERSION,
        "kind": WEIGHTS_KIND,
        "lattice": lattice.descriptor(),
        "input_indices": list(config.rbf.input_indices),
        "agents": [{"name": n, "W": W.tolist()} for n, W in zip(names, weights)],
        "provenance": {
            "config_sha256": config.digest(),
            "window": list(config.sim.window),
            "created": created.isoformat(),
        },
    }


def save_weights(path: str | os.PathLike, weights: np.ndarray, lattice: RbfLattice, config: ExperimentConfig) -> Path:
    """Store time-averaged weights as JSON; floats round-trip exactly."""
    doc = weights_document(weights, lattice, config)
    path = Path(path)
    try:
        path.write_text(json.dumps(doc, allow_nan=False) + "\n", encoding="utf-8")
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot write weights to {path}: {exc}") from exc
    return path


def load_weights(path: str | os.PathLike, config: ExperimentConfig) -> np.ndarray:
    """Read a weights artifact and check it against ``config``.

    Returns:
        ``(N, nodes, n)`` array.

    Raises:
        IoError: unreadable or not JSON.
        ValidationError: version, lattice, input selection or agent count
            differ from the configuration.
    """
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise IoError(f"cannot read weights file {path}: {exc}") from exc
    return weights_from_document(doc, config)


def weights_from_document(doc: dict, config: ExperimentConfig) -> np.ndarray:
    if not isinstance(doc, dict) or doc.get("kind") != WEIGHTS_KIND:
        raise ValidationError("weights.kind", f"not a {WEIGHTS_KIND} document")
    version = doc.get("schema_version")
    if version != WEIGHTS_SCHEMA_VERSION:
        raise ValidationError("weights.schema_version", f"unsupported version {version!r}, expected {WEIGHTS_SCHEMA_VERSION}")
    lattice = config.rbf.lattice()
    if doc.get("lattice") != lattice.descriptor():
        raise ValidationError(
            "weights.lattice", f"stored lattice {doc.get('lattice')} differs from configured {lattice.descriptor()}"
        )
    if doc.get("input_indices") != list(config.rbf.input_indices):
        raise ValidationError("weights.input_indices", "stored network input selection differs from configuration")
    agents = doc.get("agents")
    if not isinstance(agents, list) or len(agents) != config.followers:
        count = len(agents) if isinstance(agents, list) else None
        raise ValidationError("weights.agents", f"file has {count} agents, configuration has {config.followers}")
    expected = (lattice.node_count, config.joints)
    out = []
    for k, entry in enumerate(agents):
        try:
            W = np.array(entry["W"], dtype=float)
        except (KeyError, TypeError, ValueError) as exc:
            raise ValidationError(f"weights.agents[{k}]", f"malformed matrix: {exc}") from exc
        if W.shape != expected:
            raise ValidationError(f"weights.agents[{k}]", f"shape {W.shape}, expected {expected}")
        if not np.all(np.isfinite(W)):
            raise ValidationError(f"weights.agents[{k}]", "non-finite entries")
        out.append(W)
    return np.stack(out) if out else np.zeros((0, *expected))


# -- summary ------------------------------------------------------------------


def write_summary(path: str | os.PathLike, summary: dict, config: ExperimentConfig, mode: str) -> Path:
    doc = {"mode": mode, "config_sha256": config.digest(), **summary}
    path = Path(path)
    try:
        path.write_text(json.dumps(doc, indent=2, allow_nan=False) + "\n", encoding="utf-8")
    except (OSError, ValueError) as exc:
        raise IoError(f"cannot write summary to {path}: {exc}") from exc
    return path
