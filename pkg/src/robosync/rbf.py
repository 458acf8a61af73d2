"""Gaussian RBF network with centers on a regular Cartesian lattice."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import product
from typing import Sequence

import numpy as np

from .errors import DegenerateRange, DimensionMismatch, EmptyWindow, ValidationError


@dataclass(frozen=True)
class RbfLattice:
    dims: int
    nodes_per_dim: int
    ranges: tuple[tuple[float, float], ...]
    width: float
    centers: np.ndarray  # (nodes_per_dim ** dims, dims), last dimension varies fastest
    axes: np.ndarray  # (dims, nodes_per_dim) per-axis center coordinates

    @property
    def node_count(self) -> int:
        return self.centers.shape[0]

    def descriptor(self) -> dict:
        """Plain-data description used to match a stored weights file."""
        return {
            "dims": self.dims,
            "nodes_per_dim": self.nodes_per_dim,
            "ranges": [list(r) for r in self.ranges],
            "width": self.width,
        }


def build_lattice(
    dims: int,
    nodes_per_dim: int,
    ranges: Sequence[Sequence[float]] | Sequence[float],
    width: float,
) -> RbfLattice:
    """Lay ``nodes_per_dim`` evenly spaced centers per axis, endpoints included.

    ``ranges`` is either one ``[lo, hi]`` pair shared by every axis or one pair
    per axis.
    """
    if dims < 1 or nodes_per_dim < 2:
        raise ValidationError("rbf", f"need dims >= 1 and nodes_per_dim >= 2, got {dims}, {nodes_per_dim}")
    if not np.isfinite(width) or width <= 0:
        raise ValidationError("rbf.width", f"must be positive, got {width}")
    arr = np.asarray(ranges, dtype=float)
    if arr.shape == (2,):
        arr = np.tile(arr, (dims, 1))
    if arr.shape != (dims, 2):
        raise DimensionMismatch(f"ranges of shape {arr.shape} do not match {dims} input dims")
    if np.any(~np.isfinite(arr)) or np.any(arr[:, 1] <= arr[:, 0]):
        raise DegenerateRange(f"every range needs hi > lo, got {arr.tolist()}")
    axes = [np.linspace(lo, hi, nodes_per_dim) for lo, hi in arr]
    centers = np.array(list(product(*axes)), dtype=float)
    return RbfLattice(
        dims=int(dims),
        nodes_per_dim=int(nodes_per_dim),
        ranges=tuple((float(lo), float(hi)) for lo, hi in arr),
        width=float(width),
        centers=centers,
        axes=np.array(axes),
    )


def regressor(lat: RbfLattice, Z) -> np.ndarray:
    """Activations ``exp(-|Z - mu_k|^2 / width^2)``.

    ``Z`` may carry leading batch axes: ``(..., dims) -> (..., node_count)``.
    Inputs outside the lattice are evaluated as-is. On a Cartesian lattice
    the Gaussian factors per axis, so the activations are formed as an outer
    product of per-axis terms.
    """
    Z = np.asarray(Z, dtype=float)
    if Z.shape[-1:] != (lat.dims,):
        raise DimensionMismatch(f"input of shape {Z.shape} for a {lat.dims}-dim lattice")
    per_axis = np.exp(-((Z[..., :, None] - lat.axes) ** 2) / lat.width**2)
    S = per_axis[..., 0, :]
    batch = Z.shape[:-1]
    for d in range(1, lat.dims):
        S = (S[..., :, None] * per_axis[..., d, None, :]).reshape(*batch, -1)
    return S


def regressor_direct(lat: RbfLattice, Z) -> np.ndarray:
    """Unfactored ``exp(-|Z - mu_k|^2 / width^2)`` against the explicit center list."""
    Z = np.asarray(Z, dtype=float)
    diff = Z[..., None, :] - lat.centers
    return np.exp(-np.einsum("...kd,...kd->...k", diff, diff) / lat.width**2)


def evaluate(lat: RbfLattice, W, Z) -> np.ndarray:
    """Network output ``W^T S(Z)``; ``W`` has shape ``(..., node_count, outputs)``."""
    W = np.asarray(W, dtype=float)
    if W.shape[-2] != lat.node_count:
        raise DimensionMismatch(f"weights have {W.shape[-2]} rows, lattice has {lat.node_count} nodes")
    return project(W, regressor(lat, Z))


def project(W, S) -> np.ndarray:
    """``W^T S`` with batch axes; shared by the controller and diagnostics."""
    return np.einsum("...kj,...k->...j", W, S)


def time_average_weights(times, weights, t_a: float, t_b: float) -> np.ndarray:
    """Arithmetic mean of weight samples whose time lies in ``[t_a, t_b]``.

    Args:
        times: Sample times, shape ``(T,)``.
        weights: Weight samples, shape ``(T, ...)``.

    Raises:
        EmptyWindow: the window is empty, inverted, or not covered by samples.
    """
    if not t_b > t_a >= 0:
        raise EmptyWindow(f"need t_b > t_a >= 0, got [{t_a}, {t_b}]")
    times = np.asarray(times, dtype=float)
    weights = np.asarray(weights, dtype=float)
    if times.size == 0 or weights.shape[0] != times.size:
        raise EmptyWindow("no weight samples")
    slack = 1e-9 * max(1.0, t_b)
    if times[0] > t_a + slack or times[-1] < t_b - slack:
        raise EmptyWindow(f"history [{times[0]}, {times[-1]}] does not cover [{t_a}, {t_b}]")
    mask = (times >= t_a - slack) & (times <= t_b + slack)
    if not mask.any():
        raise EmptyWindow(f"no samples in [{t_a}, {t_b}]")
    return weights[mask].mean(axis=0)


class WindowAverager:
    """Streaming mean of weight samples inside ``[t_a, t_b]``.

    Only in-window samples are retained; the result equals
    :func:`time_average_weights` on the same samples.
    """

    def __init__(self, t_a: float, t_b: float):
        if not t_b > t_a >= 0:
            raise EmptyWindow(f"need t_b > t_a >= 0, got [{t_a}, {t_b}]")
        self.t_a, self.t_b = t_a, t_b
        self._slack = 1e-9 * max(1.0, t_b)
        self._samples: list[np.ndarray] = []
        self.first: float | None = None
        self.last: float | None = None

    def offer(self, t: float, W: np.ndarray) -> None:
        if self.t_a - self._slack <= t <= self.t_b + self._slack:
            self._samples.append(np.array(W, dtype=float, copy=True))
            if self.first is None:
                self.first = t
            self.last = t

    @property
    def complete(self) -> bool:
        return self.last is not None and self.last >= self.t_b - self._slack

    def mean(self) -> np.ndarray:
        if not self._samples:
            raise EmptyWindow(f"no samples in [{self.t_a}, {self.t_b}]")
        return np.asarray(self._samples).mean(axis=0)
