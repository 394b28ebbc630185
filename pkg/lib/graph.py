"""
Weighted interaction graphs: the structure that couples oscillators in the
simulator and shapes the regression penalty.

Generators draw from an owned ``numpy.random.Generator`` in a documented
order so a seed fully determines the graph:

* ER: unordered pairs ``(i, j), i < j`` scanned row-major; one uniform draw
  decides the edge and, if accepted, the next draw is its weight.
* SF: the seed clique's pairs get weights in the same row-major order; each
  new node then draws its ``m_attach`` targets (degree-proportional, without
  replacement) followed by one weight per target in ascending target order.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import networkx as nx
import numpy as np

from lib.utils import ParameterError, ShapeError, as_rng, validate_range

_log = logging.getLogger(__name__)


@dataclass(frozen=True)
class WeightedGraph:
    """Directed weighted adjacency; ``adjacency[i, j]`` is the weight of the
    edge i -> j. Zero diagonal, nonnegative weights, symmetric when
    ``directed`` is False. Immutable once built."""
    n_nodes: int
    adjacency: np.ndarray
    directed: bool = False

    def __post_init__(self):
        if int(self.n_nodes) < 1:
            raise ParameterError(f"graph needs at least one node, got {self.n_nodes}")
        adj = np.array(self.adjacency, dtype=float, copy=True)
        if adj.ndim != 2 or adj.shape[0] != adj.shape[1]:
            raise ShapeError(f"adjacency must be square, got shape {adj.shape}")
        if adj.shape[0] != self.n_nodes:
            raise ShapeError(
                f"adjacency is {adj.shape[0]}x{adj.shape[1]} but n_nodes={self.n_nodes}"
            )
        if not np.all(np.isfinite(adj)):
            raise ParameterError("adjacency contains non-finite weights")
        if np.any(adj < 0):
            raise ParameterError("adjacency contains negative weights")
        if np.any(np.diag(adj) != 0):
            raise ParameterError("adjacency diagonal must be zero (self-influence is implicit)")
        if not self.directed and not np.array_equal(adj, adj.T):
            raise ParameterError("undirected graph needs a symmetric adjacency")
        adj.setflags(write=False)
        object.__setattr__(self, "n_nodes", int(self.n_nodes))
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "directed", bool(self.directed))

    def __eq__(self, other):
        if not isinstance(other, WeightedGraph):
            return NotImplemented
        return (
            self.n_nodes == other.n_nodes
            and self.directed == other.directed
            and np.array_equal(self.adjacency, other.adjacency)
        )

    __hash__ = None

    @classmethod
    def empty(cls, n_nodes: int) -> "WeightedGraph":
        return cls(n_nodes, np.zeros((n_nodes, n_nodes)))

    @property
    def edge_count(self) -> int:
        """Undirected graphs count each pair once."""
        nonzero = int(np.count_nonzero(self.adjacency))
        return nonzero if self.directed else nonzero // 2

    def degrees(self) -> np.ndarray:
        """Unweighted out-degree of every node."""
        return np.count_nonzero(self.adjacency, axis=1)

    def with_weight(self, i: int, j: int, weight: float) -> "WeightedGraph":
        """Copy with edge i -> j (and j -> i when undirected) set to ``weight``."""
        adj = self.adjacency.copy()
        adj[i, j] = weight
        if not self.directed:
            adj[j, i] = weight
        return WeightedGraph(self.n_nodes, adj, self.directed)

    def to_networkx(self) -> nx.Graph:
        G = nx.DiGraph() if self.directed else nx.Graph()
        G.add_nodes_from(range(self.n_nodes))
        rows, cols = np.nonzero(self.adjacency)
        for i, j in zip(rows.tolist(), cols.tolist()):
            if self.directed or i < j:
                G.add_edge(i, j, weight=float(self.adjacency[i, j]))
        return G

    @classmethod
    def from_networkx(cls, G: nx.Graph, n_nodes: Optional[int] = None) -> "WeightedGraph":
        """Nodes must be the integers ``0..n-1``; missing ``weight`` means 1."""
        n = n_nodes if n_nodes is not None else G.number_of_nodes()
        adj = np.zeros((n, n))
        for u, v, data in G.edges(data=True):
            if not (0 <= u < n and 0 <= v < n):
                raise ParameterError(f"edge ({u}, {v}) references a node outside 0..{n - 1}")
            if u == v:
                continue
            w = float(data.get("weight", 1.0))
            adj[u, v] = w
            if not G.is_directed():
                adj[v, u] = w
        return cls(n, adj, directed=G.is_directed())


# ==================== STATE VARIABLE MAP ====================

@dataclass(frozen=True)
class StateVariableMap:
    """Bijection between state indices ``0..K-1`` and ``(node, slot)`` pairs;
    node n owns the contiguous block ``[n * vars_per_node, (n+1) * vars_per_node)``."""
    n_nodes: int
    vars_per_node: int = 2

    def __post_init__(self):
        if self.n_nodes < 1 or self.vars_per_node < 1:
            raise ParameterError(
                f"state map needs positive sizes, got n_nodes={self.n_nodes}, "
                f"vars_per_node={self.vars_per_node}"
            )

    @property
    def total(self) -> int:
        return self.n_nodes * self.vars_per_node

    def node_of(self, state_index: int) -> int:
        if not 0 <= state_index < self.total:
            raise ShapeError(f"state index {state_index} outside 0..{self.total - 1}")
        return state_index // self.vars_per_node

    def slot_of(self, state_index: int) -> int:
        self.node_of(state_index)
        return state_index % self.vars_per_node

    def state_indices_of(self, node: int) -> range:
        if not 0 <= node < self.n_nodes:
            raise ShapeError(f"node {node} outside 0..{self.n_nodes - 1}")
        start = node * self.vars_per_node
        return range(start, start + self.vars_per_node)

    def var_name(self, state_index: int) -> str:
        node = self.node_of(state_index)
        slot = state_index % self.vars_per_node
        if self.vars_per_node == 2:
            return f"{'xy'[slot]}{node}"
        return f"s{node}_{slot}"

    def var_names(self) -> List[str]:
        return [self.var_name(i) for i in range(self.total)]


# ==================== GENERATORS ====================

def _check_weight_range(weight_range) -> Tuple[float, float]:
    return validate_range(weight_range, "weight_range", nonnegative=True)


def generate_er(n_nodes: int, edge_prob: float, weight_range=(1.0, 1.0),
                seed=None) -> WeightedGraph:
    """Undirected Erdos-Renyi graph with uniform edge weights."""
    if n_nodes < 1:
        raise ParameterError(f"n_nodes must be positive, got {n_nodes}")
    if not 0.0 <= edge_prob <= 1.0:
        raise ParameterError(f"edge_prob must lie in [0, 1], got {edge_prob}")
    w_min, w_max = _check_weight_range(weight_range)
    rng = as_rng(seed)

    adj = np.zeros((n_nodes, n_nodes))
    for i in range(n_nodes):
        for j in range(i + 1, n_nodes):
            if rng.random() < edge_prob:
                w = rng.uniform(w_min, w_max)
                adj[i, j] = adj[j, i] = w
    graph = WeightedGraph(n_nodes, adj)
    _log.debug("ER graph n=%d p=%.3f -> %d edges", n_nodes, edge_prob, graph.edge_count)
    return graph


def generate_sf(n_nodes: int, m_attach: int, weight_range=(1.0, 1.0),
                seed=None) -> WeightedGraph:
    """Undirected preferential-attachment (Barabasi-Albert style) graph grown
    from a clique of ``m_attach + 1`` nodes."""
    if n_nodes < 1:
        raise ParameterError(f"n_nodes must be positive, got {n_nodes}")
    if not 1 <= m_attach < n_nodes:
        raise ParameterError(
            f"m_attach must satisfy 1 <= m_attach < n_nodes, got m_attach={m_attach}, n_nodes={n_nodes}"
        )
    w_min, w_max = _check_weight_range(weight_range)
    rng = as_rng(seed)

    adj = np.zeros((n_nodes, n_nodes))
    seed_size = m_attach + 1
    for i in range(seed_size):
        for j in range(i + 1, seed_size):
            adj[i, j] = adj[j, i] = rng.uniform(w_min, w_max)

    # Structural degree, so zero-weight draws still count as attachments.
    degree = np.zeros(n_nodes)
    degree[:seed_size] = m_attach
    for new in range(seed_size, n_nodes):
        existing = degree[:new]
        targets = rng.choice(new, size=m_attach, replace=False, p=existing / existing.sum())
        for t in sorted(int(t) for t in targets):
            adj[new, t] = adj[t, new] = rng.uniform(w_min, w_max)
            degree[t] += 1
        degree[new] = m_attach
    graph = WeightedGraph(n_nodes, adj)
    _log.debug("SF graph n=%d m=%d -> %d edges", n_nodes, m_attach, graph.edge_count)
    return graph


def normalized_adjacency(g: WeightedGraph) -> np.ndarray:
    """Adjacency divided by the global maximum weight, diagonal forced to 1
    (a node always fully influences itself)."""
    max_weight = float(g.adjacency.max()) if g.adjacency.size else 0.0
    if max_weight > 0:
        norm = g.adjacency / max_weight
    else:
        norm = np.zeros_like(g.adjacency)
    np.fill_diagonal(norm, 1.0)
    return norm


SIMPLE_CASE_CONNECTIVITY = np.array([[0.0, 0.0, 0.0],
                                     [0.0, 0.0, 1.0],
                                     [0.0, 1.0, 0.0]])


def simple_case_graph(coupling: float = 1.0) -> WeightedGraph:
    """Three nodes, nodes 1 and 2 connected with weight ``coupling``, node 0
    isolated. The weight doubles as the simulator's coupling strength."""
    if coupling < 0:
        raise ParameterError(f"coupling must be nonnegative, got {coupling}")
    return WeightedGraph(3, SIMPLE_CASE_CONNECTIVITY * coupling)
