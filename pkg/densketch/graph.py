"""Core graph representation shared by the samplers and solvers.

Vertices are dense integers in ``[0, n)``. Undirected edges are stored
canonically with ``u < v``; self-loops and parallel edges are rejected at
construction. Densities are exact ``Fraction`` values.
"""

import logging
from collections.abc import Hashable, Iterable
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional

import networkx as nx

logger = logging.getLogger(__name__)


class SizeGuardError(ValueError):
    """An exact solver refused an input larger than its guard.

    Exact solvers are verification oracles; they refuse rather than run for
    hours. Carries the guarded quantity so the CLI can report it.
    """

    def __init__(self, message: str, *, limit: int, actual: int):
        super().__init__(message)
        self.limit = limit
        self.actual = actual


def _check_pair(u: int, v: int, n: int) -> None:
    if u == v:
        raise ValueError(f"self-loop on vertex {u} is not allowed")
    if not (0 <= u < n and 0 <= v < n):
        raise ValueError(f"edge ({u}, {v}) has an endpoint outside [0, {n})")


@dataclass(frozen=True, order=True)
class Edge:
    """One edge. Undirected edges always satisfy ``u < v``."""

    u: int
    v: int
    directed: bool = False

    def __post_init__(self) -> None:
        if self.u == self.v:
            raise ValueError(f"self-loop on vertex {self.u} is not allowed")
        if self.u < 0 or self.v < 0:
            raise ValueError(f"negative vertex id in edge ({self.u}, {self.v})")
        if not self.directed and self.u > self.v:
            raise ValueError(
                f"undirected edge ({self.u}, {self.v}) is not canonical; use Edge.of"
            )

    @classmethod
    def of(cls, u: int, v: int, directed: bool = False) -> "Edge":
        """Build an edge, canonicalising undirected pairs to ``(min, max)``."""
        if not directed and u > v:
            u, v = v, u
        return cls(u, v, directed)

    def endpoints(self) -> tuple[int, int]:
        return (self.u, self.v)


def encode_edge(u: int, v: int, n: int, directed: bool = False) -> int:
    """Map an edge to its integer id in ``[0, n²)``.

    Undirected pairs are canonicalised first, so ``(3, 1)`` and ``(1, 3)``
    share one id.
    """
    _check_pair(u, v, n)
    if not directed and u > v:
        u, v = v, u
    return u * n + v


def decode_edge(edge_id: int, n: int, directed: bool = False) -> tuple[int, int]:
    """Inverse of :func:`encode_edge`."""
    if not 0 <= edge_id < n * n:
        raise ValueError(f"edge id {edge_id} outside [0, {n * n})")
    u, v = divmod(edge_id, n)
    if u == v or (not directed and u > v):
        raise ValueError(f"edge id {edge_id} is not a valid encoding for n={n}")
    return (u, v)


@dataclass(frozen=True)
class Graph:
    """An immutable simple graph on vertices ``[0, n)``."""

    n: int
    edges: frozenset[Edge] = field(default_factory=frozenset)
    directed: bool = False

    def __post_init__(self) -> None:
        if self.n < 0:
            raise ValueError(f"vertex count must be non-negative, got {self.n}")
        for e in self.edges:
            if e.directed != self.directed:
                raise ValueError(f"edge {e} does not match graph directedness")
            _check_pair(e.u, e.v, self.n)

    @classmethod
    def from_pairs(
        cls, n: int, pairs: Iterable[tuple[int, int]], directed: bool = False
    ) -> "Graph":
        """Build a graph from ``(u, v)`` pairs; duplicates collapse to one edge."""
        return cls(n, frozenset(Edge.of(u, v, directed) for u, v in pairs), directed)

    @property
    def m(self) -> int:
        return len(self.edges)

    @cached_property
    def sorted_edges(self) -> tuple[Edge, ...]:
        """Edges in ``(u, v)`` order; the deterministic iteration order."""
        return tuple(sorted(self.edges))

    @cached_property
    def adjacency(self) -> tuple[frozenset[int], ...]:
        """Undirected neighbourhoods (direction ignored)."""
        adj: list[set[int]] = [set() for _ in range(self.n)]
        for e in self.edges:
            adj[e.u].add(e.v)
            adj[e.v].add(e.u)
        return tuple(frozenset(a) for a in adj)

    @cached_property
    def out_neighbors(self) -> tuple[frozenset[int], ...]:
        out: list[set[int]] = [set() for _ in range(self.n)]
        for e in self.edges:
            out[e.u].add(e.v)
            if not self.directed:
                out[e.v].add(e.u)
        return tuple(frozenset(a) for a in out)

    @cached_property
    def degrees(self) -> tuple[int, ...]:
        return tuple(len(a) for a in self.adjacency)

    def edge_ids(self) -> list[int]:
        return [encode_edge(e.u, e.v, self.n, self.directed) for e in self.sorted_edges]

    def has_edge(self, u: int, v: int) -> bool:
        return Edge.of(u, v, self.directed) in self.edges

    def spanning(self, edges: Iterable[Edge]) -> "Graph":
        """A spanning subgraph: same vertex set, the given subset of edges."""
        subset = frozenset(edges)
        if not subset <= self.edges:
            raise ValueError("spanning subgraph edges must be a subset of the graph's edges")
        return Graph(self.n, subset, self.directed)

    def to_networkx(self) -> nx.Graph:
        g: nx.Graph = nx.DiGraph() if self.directed else nx.Graph()
        g.add_nodes_from(range(self.n))
        g.add_edges_from(e.endpoints() for e in self.sorted_edges)
        return g


def density(g: Graph) -> Fraction:
    """``|E| / |V|`` as an exact fraction."""
    if g.n == 0:
        raise ValueError("density is undefined on a graph with no vertices")
    return Fraction(g.m, g.n)


def _vertex_set(g: Graph, vertices: Iterable[int]) -> frozenset[int]:
    vs = frozenset(vertices)
    for v in vs:
        if not 0 <= v < g.n:
            raise ValueError(f"vertex {v} is not in the graph (n={g.n})")
    return vs


def count_edges_within(g: Graph, vertices: Iterable[int]) -> int:
    """Number of edges of ``g`` with both endpoints in ``vertices``."""
    vs = _vertex_set(g, vertices)
    return sum(1 for e in g.edges if e.u in vs and e.v in vs)


def subgraph_density(g: Graph, vertices: Iterable[int]) -> Fraction:
    """Density of ``g[vertices]`` without materialising the induced graph."""
    vs = _vertex_set(g, vertices)
    if not vs:
        raise ValueError("density is undefined on an empty vertex set")
    return Fraction(count_edges_within(g, vs), len(vs))


@dataclass(frozen=True)
class InducedSubgraph:
    """``G[U]`` reindexed to ``[0, |U|)``; ``vertices[i]`` is the original id of vertex i."""

    graph: Graph
    vertices: tuple[int, ...]

    def original(self, local: int) -> int:
        return self.vertices[local]


def induced_subgraph(g: Graph, vertices: Iterable[int]) -> InducedSubgraph:
    """The subgraph induced on ``vertices``, reindexed with the mapping retained."""
    vs = _vertex_set(g, vertices)
    if not vs:
        raise ValueError("induced subgraph on an empty vertex set has undefined density")
    order = tuple(sorted(vs))
    local = {v: i for i, v in enumerate(order)}
    edges = frozenset(
        Edge.of(local[e.u], local[e.v], g.directed)
        for e in g.edges
        if e.u in local and e.v in local
    )
    return InducedSubgraph(Graph(len(order), edges, g.directed), order)


def relabel_edges(
    pairs: Iterable[tuple[Hashable, Hashable]],
    directed: bool = False,
    n: Optional[int] = None,
) -> tuple[Graph, tuple[Hashable, ...]]:
    """Map arbitrary external vertex labels to dense ids in first-seen order.

    Returns the graph and the label of each dense id. ``n`` may reserve extra
    isolated vertices beyond the labels seen.
    """
    ids: dict[Hashable, int] = {}
    dense: list[tuple[int, int]] = []
    for a, b in pairs:
        for label in (a, b):
            if label not in ids:
                ids[label] = len(ids)
        dense.append((ids[a], ids[b]))
    size = len(ids) if n is None else n
    if size < len(ids):
        raise ValueError(f"n={size} is smaller than the {len(ids)} distinct labels seen")
    labels = tuple(ids)
    logger.debug("Relabelled %d edges onto %d vertices", len(dense), size)
    return Graph.from_pairs(size, dense, directed), labels
