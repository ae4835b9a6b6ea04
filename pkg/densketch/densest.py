"""Densest-subgraph solvers and the sample-and-solve pipeline."""

import heapq
import logging
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional, Union

import networkx as nx
import numpy as np
from networkx.algorithms.flow import minimum_cut, preflow_push

from .graph import Graph, SizeGuardError, induced_subgraph, subgraph_density
from .sketch import LeveledSampler, SampledGraph, draw_sample

logger = logging.getLogger(__name__)

EXACT_FLOW_LIMIT = 5000
BRUTE_FORCE_LIMIT = 20

_SOURCE = -1
_SINK = -2


@dataclass(frozen=True)
class DensestResult:
    """A vertex set with its density in the source graph and, if sampled, in H.

    ``density_in_source`` is None only in stream mode without a reference
    graph. ``density_in_sample`` is the sample-side density scaled by 1/p.
    """

    vertex_set: frozenset[int]
    density_in_source: Optional[Fraction]
    density_in_sample: Optional[Fraction] = None
    sample_size: Optional[int] = None
    p: Fraction = Fraction(1)
    solver: str = "exact"

    @property
    def size(self) -> int:
        return len(self.vertex_set)

    def sorted_vertices(self) -> list[int]:
        return sorted(self.vertex_set)


@dataclass(frozen=True)
class SampleSizeParams:
    n: int
    m: int
    epsilon: float
    delta: float
    sample_size: int

    @property
    def rate(self) -> Fraction:
        """C/m; at least 1 means every edge is kept."""
        return Fraction(self.sample_size, self.m)

    @property
    def stores_everything(self) -> bool:
        return self.sample_size >= self.m


def check_accuracy(epsilon: float, delta: float) -> None:
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    if delta < 1:
        raise ValueError(f"delta must be at least 1, got {delta}")


def compute_sample_size(n: int, m: int, epsilon: float, delta: float = 1.0) -> SampleSizeParams:
    """``C = ceil(12 n (4 + δ) ln(m) / ε²)``."""
    check_accuracy(epsilon, delta)
    if n < 1:
        raise ValueError(f"n must be positive, got {n}")
    if m < 2:
        raise ValueError(f"m must be at least 2, got {m}")
    c = math.ceil(12 * n * (4 + delta) * math.log(m) / epsilon**2)
    return SampleSizeParams(n, m, epsilon, delta, c)


def _require_undirected(g: Graph) -> None:
    if g.directed:
        raise ValueError("densest-subgraph solvers take undirected graphs; see heavy.DirectedDensest")
    if g.n == 0:
        raise ValueError("graph has no vertices")


def charikar_peel(g: Graph) -> DensestResult:
    """Greedy peeling: drop a minimum-degree vertex, keep the densest prefix.

    Ties go to the smallest vertex index; only strict improvements replace the
    incumbent, so the larger prefix wins among equals.
    """
    _require_undirected(g)
    if g.m == 0:
        return DensestResult(frozenset({0}), Fraction(0), solver="charikar")
    deg = list(g.degrees)
    heap = [(d, v) for v, d in enumerate(deg)]
    heapq.heapify(heap)
    alive = [True] * g.n
    edges, remaining = g.m, g.n
    best, best_removed = Fraction(edges, remaining), 0
    order: list[int] = []
    while remaining > 1:
        d, v = heapq.heappop(heap)
        if not alive[v] or d != deg[v]:
            continue
        alive[v] = False
        order.append(v)
        edges -= deg[v]
        remaining -= 1
        for w in g.adjacency[v]:
            if alive[w]:
                deg[w] -= 1
                heapq.heappush(heap, (deg[w], w))
        current = Fraction(edges, remaining)
        if current > best:
            best, best_removed = current, len(order)
    removed = set(order[:best_removed])
    vertices = frozenset(v for v in range(g.n) if v not in removed)
    return DensestResult(vertices, best, solver="charikar")


def _flow_network(g: Graph) -> nx.DiGraph:
    net = nx.DiGraph()
    net.add_nodes_from([_SOURCE, _SINK])
    net.add_nodes_from(range(g.n))
    for e in g.sorted_edges:
        net.add_edge(e.u, e.v)
        net.add_edge(e.v, e.u)
    return net


def _capacities(g: Graph, net: nx.DiGraph, guess: Fraction) -> None:
    a, b = guess.numerator, guess.denominator
    m = g.m
    for v in range(g.n):
        net.add_edge(_SOURCE, v, capacity=m * b)
        net.add_edge(v, _SINK, capacity=m * b + 2 * a - g.degrees[v] * b)
    for e in g.sorted_edges:
        net[e.u][e.v]["capacity"] = b
        net[e.v][e.u]["capacity"] = b


def _denser_than(g: Graph, net: nx.DiGraph, guess: Fraction) -> frozenset[int]:
    """Largest maximiser of ``|E(S)| - guess·|S|``: denser than guess, or tied, or empty."""
    _capacities(g, net, guess)
    _, (source_side, _) = minimum_cut(net, _SOURCE, _SINK, capacity="capacity")
    return frozenset(v for v in source_side if v != _SOURCE)


def _smallest_optimal_set(g: Graph, net: nx.DiGraph, opt: Fraction) -> tuple[int, ...]:
    """Smallest, then lexicographically first, set of density ``opt``.

    At the optimal guess every optimal set is closed in the residual graph, so
    the minimal optimal set holding ``v`` is the residual closure of ``v``.
    """
    _capacities(g, net, opt)
    residual = preflow_push(net, _SOURCE, _SINK, capacity="capacity")
    arcs = {
        u: [w for w, attr in residual[u].items() if attr["capacity"] - attr["flow"] > 0]
        for u in residual
    }
    best: Optional[tuple[int, ...]] = None
    for v in range(g.n):
        seen = {v}
        stack = [v]
        while stack and _SINK not in seen:
            if best is not None and len(seen) - (_SOURCE in seen) > len(best):
                break
            for w in arcs[stack.pop()]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        if _SINK in seen or stack:
            continue
        members = tuple(sorted(x for x in seen if x != _SOURCE))
        if best is None or (len(members), members) < (len(best), best):
            best = members
    assert best is not None
    return best


def _core(g: Graph, threshold: Fraction) -> list[int]:
    """Vertices left after repeatedly removing those of degree below ``threshold``."""
    deg = list(g.degrees)
    alive = [True] * g.n
    stack = [v for v in range(g.n) if deg[v] < threshold]
    for v in stack:
        alive[v] = False
    while stack:
        v = stack.pop()
        for w in g.adjacency[v]:
            if alive[w]:
                deg[w] -= 1
                if deg[w] < threshold:
                    alive[w] = False
                    stack.append(w)
    return [v for v in range(g.n) if alive[v]]


def exact_densest(g: Graph) -> DensestResult:
    """Exact densest subgraph by parametric max-flow (Goldberg's network).

    Starts from the peeling solution. Every vertex of an optimal set has at
    least that density in internal degree, so the flow runs on the matching
    core only. Each min cut returns the set maximising ``|E(S)| - g|S|``;
    the guess moves to that set's density until no denser set exists. Ties
    go to the smaller set, then the lexicographically smaller sorted set.
    """
    _require_undirected(g)
    if g.n > EXACT_FLOW_LIMIT:
        logger.warning("Exact densest refused: n=%d exceeds %d", g.n, EXACT_FLOW_LIMIT)
        raise SizeGuardError(
            f"exact densest needs n <= {EXACT_FLOW_LIMIT}, got n={g.n}",
            limit=EXACT_FLOW_LIMIT,
            actual=g.n,
        )
    if g.m == 0:
        return DensestResult(frozenset({0}), Fraction(0), solver="exact")
    lo = charikar_peel(g).density_in_source
    core = induced_subgraph(g, _core(g, lo))
    h = core.graph
    net = _flow_network(h)
    solves = 0
    while True:
        found = _denser_than(h, net, lo)
        solves += 1
        if not found:
            break
        density = subgraph_density(h, found)
        if density <= lo:
            break
        lo = density
    winner = _smallest_optimal_set(h, net, lo)
    logger.debug(
        "Exact densest: density %s on a %d-vertex core after %d flow solves",
        lo,
        h.n,
        solves,
    )
    return DensestResult(frozenset(core.original(v) for v in winner), lo, solver="exact")


def brute_force_densest(g: Graph) -> DensestResult:
    """Enumerate all ``2^n - 1`` vertex sets (n <= 20).

    Ties go to the smaller set, then the lexicographically smaller sorted set.
    """
    _require_undirected(g)
    if g.n > BRUTE_FORCE_LIMIT:
        raise SizeGuardError(
            f"brute-force densest needs n <= {BRUTE_FORCE_LIMIT}, got n={g.n}",
            limit=BRUTE_FORCE_LIMIT,
            actual=g.n,
        )
    masks = np.arange(1, 1 << g.n, dtype=np.int64)
    sizes = np.zeros_like(masks)
    for v in range(g.n):
        sizes += (masks >> v) & 1
    counts = np.zeros_like(masks)
    for e in g.sorted_edges:
        counts += ((masks >> e.u) & 1) & ((masks >> e.v) & 1)
    ratio = counts / sizes
    top = ratio.max()
    candidates = np.nonzero(ratio >= top - 1e-9)[0]
    best = max(Fraction(int(counts[i]), int(sizes[i])) for i in candidates)

    def members(mask: int) -> tuple[int, ...]:
        return tuple(v for v in range(g.n) if mask >> v & 1)

    tied = [
        members(int(masks[i]))
        for i in candidates
        if Fraction(int(counts[i]), int(sizes[i])) == best
    ]
    winner = min(tied, key=lambda vs: (len(vs), vs))
    return DensestResult(frozenset(winner), best, solver="brute-force")


SOLVERS = {"charikar": charikar_peel, "exact": exact_densest}


def solve_densest(g: Graph, solver: str = "exact") -> DensestResult:
    try:
        fn = SOLVERS[solver]
    except KeyError:
        raise ValueError(f"unknown solver '{solver}' (expected one of {sorted(SOLVERS)})") from None
    return fn(g)


def approx_densest_by_sampling(
    source: Union[Graph, LeveledSampler],
    epsilon: float = 0.5,
    delta: float = 1.0,
    solver: str = "exact",
    seed: int = 0,
    sample_size: Optional[int] = None,
    reference: Optional[Graph] = None,
) -> DensestResult:
    """Sample-and-solve: a (1-ε)-approximate densest subgraph of the source.

    ``source`` is a materialised graph (offline sampling) or a sampler that
    has consumed the stream. The returned density is evaluated in the source
    graph; with a sampler that needs ``reference``.
    """
    check_accuracy(epsilon, delta)
    if isinstance(source, LeveledSampler):
        params = source.params
        if sample_size is not None and sample_size != params.sample_size:
            raise ValueError(
                f"sampler was built for C={params.sample_size}, asked for C={sample_size}"
            )
        sample = source.query()
        return _solve_sample(sample, params.sample_size, solver, reference)

    g = source
    _require_undirected(g)
    if sample_size is None:
        sample_size = compute_sample_size(g.n, max(g.m, 2), epsilon, delta).sample_size
    if g.m <= sample_size:
        logger.info("m=%d <= C=%d: solving the full graph", g.m, sample_size)
        result = solve_densest(g, solver)
        return DensestResult(
            result.vertex_set,
            result.density_in_source,
            result.density_in_source,
            sample_size,
            Fraction(1),
            solver,
        )
    sample = draw_sample(g, sample_size, seed)
    return _solve_sample(sample, sample_size, solver, g)


def _solve_sample(
    sample: SampledGraph, sample_size: int, solver: str, reference: Optional[Graph]
) -> DensestResult:
    h = sample.graph()
    result = solve_densest(h, solver)
    in_sample = result.density_in_source / sample.p
    in_source = subgraph_density(reference, result.vertex_set) if reference is not None else None
    logger.info(
        "Solved sample with %d of %d edges (p=%s): |S|=%d, den_H/p=%s",
        sample.size,
        sample.m,
        sample.p,
        result.size,
        in_sample,
    )
    return DensestResult(result.vertex_set, in_source, in_sample, sample_size, sample.p, solver)
