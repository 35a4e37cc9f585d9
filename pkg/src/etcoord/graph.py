"""Undirected topologies with a fixed edge orientation and incidence algebra.

Node ids are 1-based at the interface; arrays are indexed from zero.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


class TopologyError(ValueError):
    """Raised for graphs that are disconnected, have self-loops or repeats."""


@dataclass(frozen=True)
class Topology:
    node_count: int
    edges: tuple[tuple[int, int], ...]
    degrees: tuple[int, ...] = field(init=False)
    neighbor_sets: tuple[frozenset[int], ...] = field(init=False)

    def __post_init__(self):
        n = int(self.node_count)
        if n < 2:
            raise TopologyError(f"need at least 2 nodes, got {n}")
        edges = tuple((int(a), int(b)) for a, b in self.edges)
        if not edges:
            raise TopologyError("edge list is empty")
        seen = set()
        for tail, head in edges:
            if not (1 <= tail <= n and 1 <= head <= n):
                raise TopologyError(f"edge ({tail}, {head}) references a node outside 1..{n}")
            if tail == head:
                raise TopologyError(f"self-loop at node {tail}")
            key = frozenset((tail, head))
            if key in seen:
                raise TopologyError(f"edge {{{tail}, {head}}} listed twice")
            seen.add(key)
        nbrs = [set() for _ in range(n)]
        for tail, head in edges:
            nbrs[tail - 1].add(head)
            nbrs[head - 1].add(tail)
        # breadth-first connectivity check
        reached = {1}
        queue = deque([1])
        while queue:
            i = queue.popleft()
            for j in nbrs[i - 1]:
                if j not in reached:
                    reached.add(j)
                    queue.append(j)
        if len(reached) != n:
            missing = sorted(set(range(1, n + 1)) - reached)
            raise TopologyError(f"graph is not connected; unreachable nodes {missing}")
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "neighbor_sets", tuple(frozenset(s) for s in nbrs))
        object.__setattr__(self, "degrees", tuple(len(s) for s in nbrs))

    @property
    def edge_count(self) -> int:
        return len(self.edges)

    @property
    def tails(self) -> np.ndarray:
        """Zero-based tail (negative end) index of every edge."""
        return np.array([t - 1 for t, _ in self.edges], dtype=int)

    @property
    def heads(self) -> np.ndarray:
        """Zero-based head (positive end) index of every edge."""
        return np.array([h - 1 for _, h in self.edges], dtype=int)

    def incident_edges(self, node: int) -> list[int]:
        """Zero-based indices of the edges touching the 1-based ``node``."""
        return [k for k, (t, h) in enumerate(self.edges) if node in (t, h)]

    def flipped(self, which=None) -> "Topology":
        """Copy with the orientation of the selected edges (default: all) reversed."""
        which = range(self.edge_count) if which is None else set(which)
        edges = [(h, t) if k in which else (t, h) for k, (t, h) in enumerate(self.edges)]
        return Topology(self.node_count, tuple(edges))


def from_edge_list(node_count: int, edges) -> Topology:
    """Build a topology from ``[[tail, head], ...]`` pairs (1-based)."""
    return Topology(node_count, tuple(tuple(e) for e in edges))


def build_line_graph(n: int) -> Topology:
    """Path graph 1-2-...-n, each edge oriented from the lower to the higher id."""
    if n < 2:
        raise TopologyError(f"a line graph needs n >= 2, got {n}")
    return Topology(n, tuple((i, i + 1) for i in range(1, n)))


def incidence(topology: Topology) -> np.ndarray:
    """N x M incidence matrix: +1 at the head of each edge, -1 at its tail."""
    D = np.zeros((topology.node_count, topology.edge_count))
    for k, (tail, head) in enumerate(topology.edges):
        D[head - 1, k] = 1.0
        D[tail - 1, k] = -1.0
    return D


def _block_count(arr: np.ndarray, block: int, what: str) -> int:
    if arr.ndim != 1 or arr.size % block:
        raise ValueError(f"{what} must be a flat vector with a multiple of {block} entries")
    return arr.size // block


def relative_distances(D: np.ndarray, p, n_p: int = 1) -> np.ndarray:
    """Stacked edge vector z = (D^T kron I) p; block k is p_head - p_tail."""
    p = np.asarray(p, dtype=float)
    if _block_count(p, n_p, "p") != D.shape[0]:
        raise ValueError(f"p has {p.size} entries, expected {D.shape[0] * n_p}")
    return (D.T @ p.reshape(-1, n_p)).ravel()


def stacked_control(D: np.ndarray, psi_values, n_p: int = 1) -> np.ndarray:
    """Node inputs u = -(D kron I) Psi; node i receives the sum of psi_ij over neighbours."""
    psi_values = np.asarray(psi_values, dtype=float)
    if _block_count(psi_values, n_p, "psi_values") != D.shape[1]:
        raise ValueError(f"psi_values has {psi_values.size} entries, expected {D.shape[1] * n_p}")
    return -(D @ psi_values.reshape(-1, n_p)).ravel()
