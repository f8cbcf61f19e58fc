"""
Time-varying weighted communication graph of the robot team.

Edge orientation convention: the lower node index is the leaving node (-1 in
the incidence column), the higher index is the entering node (+1).
"""

import logging
from dataclasses import dataclass

import networkx as nx
import numpy as np
from numpy.typing import NDArray

from features import matkit

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightLaw:
    alpha: float = 1.0
    beta: float = 0.0

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        if self.beta < 0:
            raise ValueError(f"beta must be >= 0, got {self.beta}")

    def weight(self, distance):
        """omega = alpha * exp(-beta * distance)"""
        return self.alpha * np.exp(-self.beta * np.asarray(distance, dtype=float))


@dataclass(frozen=True)
class CommGraph:
    num_nodes: int
    edges: tuple[tuple[int, int], ...]
    weights: NDArray[np.float64]

    def __post_init__(self):
        if self.num_nodes < 1:
            raise ValueError("graph needs at least one node")
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.num_nodes and 0 <= j < self.num_nodes):
                raise ValueError(f"edge ({i}, {j}) references a node outside 0..{self.num_nodes - 1}")
            key = (min(i, j), max(i, j))
            if key in seen:
                raise ValueError(f"duplicate edge {key}")
            seen.add(key)
        w = np.asarray(self.weights, dtype=float).reshape(-1)
        if w.shape[0] != len(self.edges):
            raise ValueError("one weight per edge is required")
        if np.any(w < 0):
            raise ValueError("edge weights must be nonnegative")
        object.__setattr__(self, "weights", w)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def with_edge(self, i: int, j: int, weight: float) -> "CommGraph":
        a, b = min(i, j), max(i, j)
        return CommGraph(self.num_nodes, self.edges + ((a, b),), np.append(self.weights, weight))


def empty_graph(num_nodes: int) -> CommGraph:
    return CommGraph(num_nodes, (), np.zeros(0))


def topology_edges(topology, num_nodes: int) -> list[tuple[int, int]]:
    """Edge list for a token ('complete', 'ring', 'path') or an explicit list."""
    if isinstance(topology, str):
        if topology == "complete":
            g = nx.complete_graph(num_nodes)
        elif topology == "ring":
            g = nx.cycle_graph(num_nodes) if num_nodes > 2 else nx.path_graph(num_nodes)
        elif topology == "path":
            g = nx.path_graph(num_nodes)
        else:
            raise ValueError(f"unknown topology token: {topology}")
        edges = g.edges()
    else:
        edges = [tuple(e) for e in topology]
    return sorted((min(i, j), max(i, j)) for i, j in edges)


def build_graph(positions, law: WeightLaw, topology) -> CommGraph:
    """Weighted graph over robot positions with omega_ij = alpha exp(-beta |x_i - x_j|)."""
    positions = np.asarray(positions, dtype=float).reshape(-1, 3)
    n = positions.shape[0]
    edges = topology_edges(topology, n)
    for i, j in edges:
        if not (0 <= i < n and 0 <= j < n):
            raise ValueError(f"edge ({i}, {j}) references a node outside 0..{n - 1}")
    if edges:
        idx = np.array(edges)
        dist = np.linalg.norm(positions[idx[:, 0]] - positions[idx[:, 1]], axis=1)
        weights = law.weight(dist)
    else:
        weights = np.zeros(0)
    return CommGraph(n, tuple(edges), weights)


def incidence(graph: CommGraph) -> NDArray:
    c = np.zeros((graph.num_nodes, graph.num_edges))
    for col, (i, j) in enumerate(graph.edges):
        a, b = min(i, j), max(i, j)
        c[a, col] = -1.0
        c[b, col] = 1.0
    return c


def laplacian(graph: CommGraph) -> NDArray:
    c = incidence(graph)
    return matkit.symmetrize((c * graph.weights) @ c.T)


def edge_noise_cov(graph: CommGraph) -> list[NDArray]:
    """Per-edge relative-measurement covariance (1/omega_e) I_3; inf for zero weights."""
    with np.errstate(divide="ignore"):
        return [np.eye(3) / w for w in graph.weights]


def horizon_network_info(graphs, M: int) -> NDArray:
    """blkdiag(L_tau kron I_3) over tau = t..t+M."""
    graphs = list(graphs)
    if len(graphs) != M + 1:
        raise ValueError(f"expected {M + 1} graphs for horizon M={M}, got {len(graphs)}")
    sizes = {g.num_nodes for g in graphs}
    if len(sizes) != 1:
        raise ValueError(f"graphs disagree on node count: {sorted(sizes)}")
    return matkit.block_diag(matkit.kron(laplacian(g), np.eye(3)) for g in graphs)


def relative_measurements(graph: CommGraph, x, rng=None, noiseless: bool = False) -> NDArray:
    """xi = (C kron I_3)^T x + zeta, stacked per edge as 3-blocks."""
    x = np.asarray(x, dtype=float).reshape(graph.num_nodes, 3)
    xi = np.zeros((graph.num_edges, 3))
    for e, (i, j) in enumerate(graph.edges):
        a, b = min(i, j), max(i, j)
        xi[e] = x[b] - x[a]
    if not noiseless and graph.num_edges:
        rng = np.random.default_rng(rng)
        noise = rng.standard_normal((graph.num_edges, 3))
        live = graph.weights > 0
        xi[live] += noise[live] / np.sqrt(graph.weights[live])[:, None]
    return xi.reshape(-1)
