"""Weighted communication digraph with a leader at node 0.

An edge ``(parent, child, weight)`` means ``child`` receives the state of
``parent``. The adjacency matrix is stored receiver-major: ``a[child, parent]
= weight``, so row ``i`` of the Laplacian collects everything agent ``i``
listens to.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .errors import DuplicateEdge, InvalidEdge, ValidationError

LEADER = 0


@dataclass(frozen=True)
class Edge:
    parent: int
    child: int
    weight: float


@dataclass(frozen=True)
class DirectedGraph:
    """Validated digraph on nodes ``0..node_count-1``; node 0 is the leader."""

    node_count: int
    edges: tuple[Edge, ...]

    @property
    def followers(self) -> int:
        return self.node_count - 1

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.node_count, self.node_count))
        for e in self.edges:
            a[e.child, e.parent] = e.weight
        return a

    def in_neighbors(self, node: int) -> list[tuple[int, float]]:
        """Sources that ``node`` listens to, as ``(parent, weight)`` sorted by id."""
        return sorted((e.parent, e.weight) for e in self.edges if e.child == node)


@dataclass(frozen=True)
class LaplacianPartition:
    L: np.ndarray
    Phi: np.ndarray
    H: np.ndarray


def build_graph(node_count: int, edges: Iterable[Sequence]) -> DirectedGraph:
    """Validate and freeze a weighted digraph.

    Args:
        node_count: Total number of nodes including the leader (``N + 1``).
        edges: Iterable of ``(parent, child, weight)`` triples.

    Raises:
        InvalidEdge: self-loop, non-positive weight, out-of-range id, or an
            edge pointing into the leader.
        DuplicateEdge: the same ordered pair given twice.
    """
    if int(node_count) != node_count or node_count < 2:
        raise ValidationError("topology.followers", f"need at least one follower, got node_count={node_count}")
    node_count = int(node_count)
    seen: set[tuple[int, int]] = set()
    out: list[Edge] = []
    for raw in edges:
        if len(raw) != 3:
            raise InvalidEdge(f"edge {raw!r} is not a (parent, child, weight) triple")
        parent, child, weight = raw
        if int(parent) != parent or int(child) != child:
            raise InvalidEdge(f"edge {raw!r} has non-integer node id")
        parent, child, weight = int(parent), int(child), float(weight)
        for node in (parent, child):
            if not 0 <= node < node_count:
                raise InvalidEdge(f"node id {node} outside [0, {node_count - 1}]")
        if parent == child:
            raise InvalidEdge(f"self-loop on node {parent}")
        if child == LEADER:
            raise InvalidEdge(f"edge ({parent}, 0) points into the leader")
        if not np.isfinite(weight) or weight <= 0.0:
            raise InvalidEdge(f"edge ({parent}, {child}) has non-positive weight {weight}")
        if (parent, child) in seen:
            raise DuplicateEdge(parent, child)
        seen.add((parent, child))
        out.append(Edge(parent, child, weight))
    return DirectedGraph(node_count, tuple(out))


def laplacian(g: DirectedGraph) -> LaplacianPartition:
    """Laplacian ``L = D - A`` and its leader/follower partition.

    ``Phi`` is the diagonal of leader-edge weights and ``H`` the follower
    block ``L[1:, 1:]``.
    """
    a = g.adjacency()
    L = -a
    L[np.diag_indices_from(L)] = a.sum(axis=1)
    Phi = np.diag(a[1:, LEADER])
    H = L[1:, 1:].copy()
    return LaplacianPartition(L=L, Phi=Phi, H=H)


def has_spanning_tree_from_leader(g: DirectedGraph) -> bool:
    """True iff every follower is reachable from node 0 along edge directions."""
    children: dict[int, list[int]] = {}
    for e in g.edges:
        children.setdefault(e.parent, []).append(e.child)
    reached = {LEADER}
    queue = deque([LEADER])
    while queue:
        node = queue.popleft()
        for c in children.get(node, ()):
            if c not in reached:
                reached.add(c)
                queue.append(c)
    return len(reached) == g.node_count


def unreachable_followers(g: DirectedGraph) -> list[int]:
    """Followers with no directed path from the leader (empty when the tree exists)."""
    if has_spanning_tree_from_leader(g):
        return []
    reach = np.eye(g.node_count, dtype=bool)
    a = g.adjacency() > 0
    for _ in range(g.node_count):
        reach = reach | (a @ reach)
    return [i for i in range(1, g.node_count) if not reach[i, LEADER]]


def min_real_eig_H(g: DirectedGraph) -> float:
    return float(np.linalg.eigvals(laplacian(g).H).real.min())


def chain(followers: int, weight: float = 1.0) -> DirectedGraph:
    """0 -> 1 -> ... -> N."""
    return build_graph(followers + 1, [(k, k + 1, weight) for k in range(followers)])


def star(followers: int, weight: float = 1.0) -> DirectedGraph:
    """0 -> k for every follower k."""
    return build_graph(followers + 1, [(0, k, weight) for k in range(1, followers + 1)])
