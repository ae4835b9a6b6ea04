"""Heavy-subgraph problems and the generic sample-and-estimate algorithm.

A heavy-subgraph problem splits its solutions into classes ``k = 1..l``. Within
a class the objective is ``f_k`` times the number of the solution's edges, a
solution of a spanning subgraph is a solution of the full graph in the same
class, and the optimum is at least ``γ · ln|Sol^k| · f_k · m / n``. Under those
three properties the optimum on a uniform edge sample, scaled by ``1/p``,
estimates the optimum on the full graph.

Objectives are stored raw (the textbook value); the factor-n normalisations
used by the analysis only appear in ``normalized_value`` and the bound checks.
"""

import logging
import math
from abc import ABC, abstractmethod
from collections.abc import Iterator
from dataclasses import dataclass
from fractions import Fraction
from typing import Any, Optional, Union

import numpy as np

from .graph import Edge, Graph, SizeGuardError
from .hashing import derive_seed
from .sketch import LeveledSampler, SampledGraph, draw_sample

logger = logging.getLogger(__name__)

# Enumeration guard shared by the labeling solvers: d^n <= this.
LABELING_LIMIT = 10**7
BIPARTITE_LIMIT = 16
DIRECTED_LIMIT = 12

_CHUNK = 3**10


@dataclass(frozen=True)
class Labeling:
    """Total map vertex -> label in ``[0, d)``."""

    labels: tuple[int, ...]
    d: int

    def __post_init__(self) -> None:
        for x in self.labels:
            if not 0 <= x < self.d:
                raise ValueError(f"label {x} outside [0, {self.d})")

    @property
    def is_surjective(self) -> bool:
        return len(set(self.labels)) == self.d

    def classes(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.d)]
        for v, x in enumerate(self.labels):
            out[x].append(v)
        return out


@dataclass(frozen=True)
class BipartitionSolution:
    A: frozenset[int]
    B: frozenset[int]

    @classmethod
    def of(cls, a, b) -> "BipartitionSolution":
        return cls(frozenset(a), frozenset(b))


Solution = Union[Labeling, BipartitionSolution]


@dataclass(frozen=True)
class HeavySolution:
    """A solver's answer: the solution, its raw objective and how it was found."""

    solution: Any
    value: Union[Fraction, float]
    mode: str
    exact: bool


@dataclass(frozen=True)
class GammaBoundReport:
    k: int
    bound: float
    optimum: float

    @property
    def holds(self) -> bool:
        return self.bound <= self.optimum + 1e-9


class HeavyProblem(ABC):
    """Descriptor of one heavy-subgraph problem."""

    name: str = ""
    modes: tuple[str, ...] = ("exact",)

    @abstractmethod
    def num_classes(self, n: int) -> int:
        """``l``, the number of solution classes."""

    @abstractmethod
    def gamma(self, n: int) -> float:
        ...

    @abstractmethod
    def scale(self, k: int, n: int) -> Union[Fraction, float]:
        """``f_k``; the smallest over all classes is 1."""

    @abstractmethod
    def class_of(self, sol: Solution, n: int) -> int:
        ...

    @abstractmethod
    def class_count_log(self, k: int, n: int) -> float:
        """Upper bound on ``ln |Sol^k|``."""

    @abstractmethod
    def solution_edges(self, sol: Solution, g: Graph) -> frozenset[Edge]:
        """The edges of ``g`` the objective counts for ``sol``."""

    @abstractmethod
    def raw_value(self, sol: Solution, g: Graph) -> Union[Fraction, float]:
        ...

    @abstractmethod
    def is_feasible(self, sol: Solution, g: Graph) -> bool:
        ...

    @abstractmethod
    def _solve(self, g: Graph, mode: str, seed: int, restarts: int) -> HeavySolution:
        ...

    def solve(self, g: Graph, mode: str = "exact", seed: int = 0, restarts: int = 8) -> HeavySolution:
        if mode not in self.modes:
            raise ValueError(f"{self.name} supports modes {self.modes}, got '{mode}'")
        return self._solve(g, mode, seed, restarts)

    def normalized_value(self, sol: Solution, g: Graph) -> Union[Fraction, float]:
        """``f_k`` times the solution's edge count in ``g``."""
        return self.scale(self.class_of(sol, g.n), g.n) * len(self.solution_edges(sol, g))

    def restrict(self, sol: Solution, h: Graph) -> Solution:
        """The solution of a spanning subgraph ``h`` induced by ``sol``.

        Solutions are vertex data, so restriction keeps them unchanged and only
        the counted edges shrink.
        """
        if not self.is_feasible(sol, h):
            raise ValueError(f"{sol} is not a feasible {self.name} solution on the subgraph")
        return sol

    def extend(self, sol: Solution, g: Graph) -> Solution:
        if not self.is_feasible(sol, g):
            raise ValueError(f"{sol} is not a feasible {self.name} solution on the supergraph")
        return sol

    def classes(self, n: int) -> range:
        return range(1, self.num_classes(n) + 1)


def _check_n(n: int) -> None:
    if n < 2:
        raise ValueError(f"problem needs at least 2 vertices, got n={n}")


def _ternary_chunks(n: int) -> Iterator[tuple[np.ndarray, np.ndarray]]:
    """All vectors in ``{0,1,2}^n`` as (indices, digits) chunks."""
    powers = 3 ** np.arange(n, dtype=np.int64)
    total = 3**n
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(start + _CHUNK, total), dtype=np.int64)
        yield idx, (idx[:, None] // powers[None, :]) % 3


class DensestBipartite(HeavyProblem):
    """Densest bipartite subgraph: max ``|E(A, B)| / (|A| + |B|)`` over disjoint A, B.

    Class ``k`` holds the solutions with ``|A| + |B| = n - k + 1``.
    """

    name = "densest-bipartite"

    @staticmethod
    def stated_gamma(n: int) -> float:
        """The published 2/(ln n + 1). It violates the bound on C4 (5.33 > 4)."""
        return 2 / (math.log(n) + 1)

    def num_classes(self, n: int) -> int:
        return n

    def gamma(self, n: int) -> float:
        _check_n(n)
        return 1 / (2 * (math.log(n) + 1))

    def scale(self, k: int, n: int) -> Fraction:
        return Fraction(n, n - k + 1)

    def class_of(self, sol: BipartitionSolution, n: int) -> int:
        return n - len(sol.A | sol.B) + 1

    def class_count_log(self, k: int, n: int) -> float:
        s = n - k + 1
        return math.log(math.comb(n, s)) + s * math.log(2)

    def solution_edges(self, sol: BipartitionSolution, g: Graph) -> frozenset[Edge]:
        return frozenset(
            e for e in g.edges
            if (e.u in sol.A and e.v in sol.B) or (e.u in sol.B and e.v in sol.A)
        )

    def raw_value(self, sol: BipartitionSolution, g: Graph) -> Fraction:
        size = len(sol.A | sol.B)
        if size == 0:
            raise ValueError("bipartite solution has no vertices")
        cross = sum(len(g.adjacency[a] & sol.B) for a in sol.A)
        return Fraction(cross, size)

    def is_feasible(self, sol: BipartitionSolution, g: Graph) -> bool:
        verts = sol.A | sol.B
        return (
            not (sol.A & sol.B)
            and bool(verts)
            and all(0 <= v < g.n for v in verts)
        )

    def _solve(self, g: Graph, mode: str, seed: int, restarts: int) -> HeavySolution:
        if g.directed:
            raise ValueError("densest bipartite takes an undirected graph")
        _check_n(g.n)
        if g.n > BIPARTITE_LIMIT:
            raise SizeGuardError(
                f"exact densest bipartite needs n <= {BIPARTITE_LIMIT}, got n={g.n}",
                limit=BIPARTITE_LIMIT,
                actual=g.n,
            )
        best: Optional[tuple[Fraction, int, int]] = None
        for idx, digits in _ternary_chunks(g.n):
            sizes = (digits > 0).sum(axis=1)
            cross = np.zeros(idx.size, dtype=np.int64)
            for e in g.sorted_edges:
                cross += digits[:, e.u] * digits[:, e.v] == 2
            valid = sizes > 0
            ratio = np.where(valid, cross / np.maximum(sizes, 1), -1.0)
            top = ratio.max()
            for i in np.nonzero(ratio >= top - 1e-9)[0]:
                cand = (Fraction(int(cross[i]), int(sizes[i])), -int(sizes[i]), -int(idx[i]))
                if best is None or cand > best:
                    best = cand
        assert best is not None
        value, _, neg_idx = best
        code, a, b = -neg_idx, [], []
        for v in range(g.n):
            code, digit = divmod(code, 3)
            if digit == 1:
                a.append(v)
            elif digit == 2:
                b.append(v)
        return HeavySolution(BipartitionSolution.of(a, b), value, mode, True)


class DirectedDensest(HeavyProblem):
    """Directed densest subgraph: max ``|E(A, B)| / sqrt(|A| |B|)``.

    A and B may overlap. Class ``(i, j) = (|A|, |B|)`` is flattened to
    ``k = (i - 1) n + j``.
    """

    name = "directed-densest"
    modes = ("exact", "greedy")

    def num_classes(self, n: int) -> int:
        return n * n

    def gamma(self, n: int) -> float:
        _check_n(n)
        return 1 / (2 * math.sqrt(n) * math.log(n))

    @staticmethod
    def unflatten(k: int, n: int) -> tuple[int, int]:
        return (k - 1) // n + 1, (k - 1) % n + 1

    def scale(self, k: int, n: int) -> float:
        i, j = self.unflatten(k, n)
        return n / math.sqrt(i * j)

    def class_of(self, sol: BipartitionSolution, n: int) -> int:
        return (len(sol.A) - 1) * n + len(sol.B)

    def class_count_log(self, k: int, n: int) -> float:
        i, j = self.unflatten(k, n)
        return math.log(math.comb(n, i)) + math.log(math.comb(n, j))

    def solution_edges(self, sol: BipartitionSolution, g: Graph) -> frozenset[Edge]:
        return frozenset(e for e in g.edges if e.u in sol.A and e.v in sol.B)

    def raw_value(self, sol: BipartitionSolution, g: Graph) -> float:
        if not sol.A or not sol.B:
            raise ValueError("directed solution needs nonempty A and B")
        arcs = sum(len(g.out_neighbors[a] & sol.B) for a in sol.A)
        return arcs / math.sqrt(len(sol.A) * len(sol.B))

    def is_feasible(self, sol: BipartitionSolution, g: Graph) -> bool:
        return bool(sol.A) and bool(sol.B) and all(0 <= v < g.n for v in sol.A | sol.B)

    def _solve(self, g: Graph, mode: str, seed: int, restarts: int) -> HeavySolution:
        if not g.directed:
            raise ValueError("directed densest takes a directed graph")
        _check_n(g.n)
        if mode == "greedy":
            return self._greedy(g)
        if g.n > DIRECTED_LIMIT:
            raise SizeGuardError(
                f"exact directed densest needs n <= {DIRECTED_LIMIT}, got n={g.n}",
                limit=DIRECTED_LIMIT,
                actual=g.n,
            )
        in_masks = [0] * g.n
        for e in g.edges:
            in_masks[e.v] |= 1 << e.u
        best = (0, 1, 1)
        best_sets: tuple[int, tuple[int, ...]] = (1, (0,))
        for a_mask in range(1, 1 << g.n):
            i = a_mask.bit_count()
            ranked = sorted(range(g.n), key=lambda v: (-(in_masks[v] & a_mask).bit_count(), v))
            arcs = 0
            for j, v in enumerate(ranked, start=1):
                arcs += (in_masks[v] & a_mask).bit_count()
                c, bi, bj = best
                if arcs * arcs * bi * bj > c * c * i * j:
                    best = (arcs, i, j)
                    best_sets = (a_mask, tuple(ranked[:j]))
        a_mask, b = best_sets
        sol = BipartitionSolution.of((v for v in range(g.n) if a_mask >> v & 1), b)
        return HeavySolution(sol, self.raw_value(sol, g), mode, True)

    def _greedy(self, g: Graph) -> HeavySolution:
        """Peel the weakest source or target; no approximation guarantee."""
        a, b = set(range(g.n)), set(range(g.n))
        out_deg = [len(g.out_neighbors[v]) for v in range(g.n)]
        in_deg = [0] * g.n
        preds: list[list[int]] = [[] for _ in range(g.n)]
        for e in g.edges:
            in_deg[e.v] += 1
            preds[e.v].append(e.u)
        arcs = g.m
        best = (arcs / g.n, frozenset(a), frozenset(b))
        while len(a) > 1 or len(b) > 1:
            weakest_a = min(a, key=lambda v: (out_deg[v], v)) if len(a) > 1 else None
            weakest_b = min(b, key=lambda v: (in_deg[v], v)) if len(b) > 1 else None
            if weakest_b is None or (
                weakest_a is not None and out_deg[weakest_a] <= in_deg[weakest_b]
            ):
                a.remove(weakest_a)
                arcs -= out_deg[weakest_a]
                for w in g.out_neighbors[weakest_a]:
                    in_deg[w] -= 1
            else:
                b.remove(weakest_b)
                arcs -= in_deg[weakest_b]
                for u in preds[weakest_b]:
                    out_deg[u] -= 1
            value = arcs / math.sqrt(len(a) * len(b))
            if value > best[0]:
                best = (value, frozenset(a), frozenset(b))
        sol = BipartitionSolution(best[1], best[2])
        return HeavySolution(sol, self.raw_value(sol, g), "greedy", False)


def _labeling_guard(name: str, d: int, n: int) -> None:
    if d**n > LABELING_LIMIT:
        raise SizeGuardError(
            f"exact {name} needs d^n <= {LABELING_LIMIT}, got {d}^{n}",
            limit=LABELING_LIMIT,
            actual=d**n,
        )


def _lower_neighbors(g: Graph) -> list[list[int]]:
    return [sorted(w for w in g.adjacency[v] if w < v) for v in range(g.n)]


def _restricted_growth_search(g: Graph, d: int, want_same: bool, surjective: bool) -> tuple[int, tuple[int, ...]]:
    """Branch and bound over labelings canonical under label permutation.

    Maximises the number of monochromatic edges when ``want_same`` and the
    number of bichromatic edges otherwise.
    """
    n = g.n
    lower = _lower_neighbors(g)
    # Edges whose larger endpoint is >= i are still undecided before vertex i.
    remaining = [0] * (n + 1)
    for v in range(n - 1, -1, -1):
        remaining[v] = remaining[v + 1] + len(lower[v])
    labels = [0] * n
    best = [-1, ()]

    def visit(v: int, used: int, value: int) -> None:
        if v == n:
            if (not surjective or used == d) and value > best[0]:
                best[0], best[1] = value, tuple(labels)
            return
        if value + remaining[v] <= best[0]:
            return
        if surjective and d - used > n - v:
            return
        for c in range(min(used + 1, d)):
            same = sum(1 for w in lower[v] if labels[w] == c)
            gain = same if want_same else len(lower[v]) - same
            labels[v] = c
            visit(v + 1, max(used, c + 1), value + gain)

    visit(0, 0, 0)
    return best[0], best[1]


class DMaxCut(HeavyProblem):
    """d-max cut: label vertices with d labels to maximise bichromatic edges."""

    name = "d-max-cut"
    modes = ("exact", "local_search")

    def __init__(self, d: int = 2):
        if d < 2:
            raise ValueError(f"d must be at least 2, got {d}")
        self.d = d

    def num_classes(self, n: int) -> int:
        return 1

    def gamma(self, n: int) -> float:
        return 1 / (2 * math.log(self.d))

    def scale(self, k: int, n: int) -> Fraction:
        return Fraction(1)

    def class_of(self, sol: Labeling, n: int) -> int:
        return 1

    def class_count_log(self, k: int, n: int) -> float:
        return n * math.log(self.d)

    def solution_edges(self, sol: Labeling, g: Graph) -> frozenset[Edge]:
        return frozenset(e for e in g.edges if sol.labels[e.u] != sol.labels[e.v])

    def raw_value(self, sol: Labeling, g: Graph) -> Fraction:
        return Fraction(sum(1 for e in g.edges if sol.labels[e.u] != sol.labels[e.v]))

    def is_feasible(self, sol: Labeling, g: Graph) -> bool:
        return sol.d == self.d and len(sol.labels) == g.n

    def _solve(self, g: Graph, mode: str, seed: int, restarts: int) -> HeavySolution:
        if mode == "local_search":
            return self._local_search(g, seed, restarts)
        _labeling_guard(self.name, self.d, g.n)
        if g.n == 0:
            return HeavySolution(Labeling((), self.d), Fraction(0), mode, True)
        value, labels = _restricted_growth_search(g, self.d, want_same=False, surjective=False)
        return HeavySolution(Labeling(labels, self.d), Fraction(value), mode, True)

    def _local_search(self, g: Graph, seed: int, restarts: int) -> HeavySolution:
        """Random starts, then move single vertices to their least-shared label."""
        rng = np.random.default_rng(derive_seed(seed, "heavy/local-search"))
        best: Optional[tuple[int, tuple[int, ...]]] = None
        for _ in range(max(1, restarts)):
            labels = [int(x) for x in rng.integers(self.d, size=g.n)]
            improved = True
            while improved:
                improved = False
                for v in range(g.n):
                    counts = [0] * self.d
                    for w in g.adjacency[v]:
                        counts[labels[w]] += 1
                    target = min(range(self.d), key=lambda c: (counts[c], c))
                    if counts[target] < counts[labels[v]]:
                        labels[v] = target
                        improved = True
            value = sum(1 for e in g.edges if labels[e.u] != labels[e.v])
            if best is None or value > best[0]:
                best = (value, tuple(labels))
        assert best is not None
        logger.debug("Local search cut %d after %d restarts", best[0], restarts)
        return HeavySolution(Labeling(best[1], self.d), Fraction(best[0]), "local_search", False)


class DSumMax(HeavyProblem):
    """d-sum-max clustering: use all d labels, maximise monochromatic edges."""

    name = "d-sum-max"
    modes = ("exact", "singleton_heuristic")

    def __init__(self, d: int = 2):
        if d < 2:
            raise ValueError(f"d must be at least 2, got {d}")
        self.d = d

    def _check_size(self, n: int) -> None:
        if n <= 2 * self.d:
            raise ValueError(f"d-sum-max needs n > 2d, got n={n}, d={self.d}")

    def num_classes(self, n: int) -> int:
        return 1

    def gamma(self, n: int) -> float:
        self._check_size(n)
        return (n - 2 * self.d) / (n * math.log(self.d))

    def scale(self, k: int, n: int) -> Fraction:
        return Fraction(1)

    def class_of(self, sol: Labeling, n: int) -> int:
        return 1

    def class_count_log(self, k: int, n: int) -> float:
        return n * math.log(self.d)

    def solution_edges(self, sol: Labeling, g: Graph) -> frozenset[Edge]:
        return frozenset(e for e in g.edges if sol.labels[e.u] == sol.labels[e.v])

    def raw_value(self, sol: Labeling, g: Graph) -> Fraction:
        return Fraction(sum(1 for e in g.edges if sol.labels[e.u] == sol.labels[e.v]))

    def is_feasible(self, sol: Labeling, g: Graph) -> bool:
        return sol.d == self.d and len(sol.labels) == g.n and sol.is_surjective

    def _solve(self, g: Graph, mode: str, seed: int, restarts: int) -> HeavySolution:
        self._check_size(g.n)
        if mode == "singleton_heuristic":
            by_degree = sorted(range(g.n), key=lambda v: (g.degrees[v], v))
            labels = [self.d - 1] * g.n
            for c, v in enumerate(by_degree[: self.d - 1]):
                labels[v] = c
            sol = Labeling(tuple(labels), self.d)
            return HeavySolution(sol, self.raw_value(sol, g), mode, False)
        _labeling_guard(self.name, self.d, g.n)
        value, labels = _restricted_growth_search(g, self.d, want_same=True, surjective=True)
        return HeavySolution(Labeling(labels, self.d), Fraction(value), mode, True)


def get_problem(name: str, d: int = 2) -> HeavyProblem:
    if name == DensestBipartite.name:
        return DensestBipartite()
    if name == DirectedDensest.name:
        return DirectedDensest()
    if name == DMaxCut.name:
        return DMaxCut(d)
    if name == DSumMax.name:
        return DSumMax(d)
    raise ValueError(f"unknown problem '{name}'")


def compute_general_sample_size(n: int, gamma: float, l: int, epsilon: float, delta: float = 1.0) -> int:
    """``C = ceil(12 n (4 + δ) max(ln l, 1) / (γ ε²))``."""
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")
    if l < 1:
        raise ValueError(f"l must be at least 1, got {l}")
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    if delta < 1:
        raise ValueError(f"delta must be at least 1, got {delta}")
    return math.ceil(12 * n * (4 + delta) * max(math.log(l), 1.0) / (gamma * epsilon**2))


@dataclass(frozen=True)
class HeavyEstimate:
    """``value`` estimates the raw optimum on G; ``witness`` is the H-side solution."""

    problem: str
    value: float
    normalized: float
    sample_size: int
    p: Fraction
    m: int
    witness: Any
    exact_solver: bool


def _unscale(value: Union[Fraction, float], p: Fraction) -> float:
    if isinstance(value, Fraction):
        return float(value / p)
    return value / float(p)


def _estimate_from(
    problem: HeavyProblem, sample: SampledGraph, sample_size: int, mode: str, seed: int, restarts: int
) -> HeavyEstimate:
    h = sample.graph()
    found = problem.solve(h, mode, seed, restarts)
    normalized = problem.normalized_value(found.solution, h)
    return HeavyEstimate(
        problem=problem.name,
        value=_unscale(found.value, sample.p),
        normalized=_unscale(normalized, sample.p),
        sample_size=sample_size,
        p=sample.p,
        m=sample.m,
        witness=found.solution,
        exact_solver=found.exact,
    )


def estimate_heavy(
    problem: HeavyProblem,
    source: Union[Graph, LeveledSampler],
    epsilon: float = 0.5,
    delta: float = 1.0,
    mode: str = "exact",
    seed: int = 0,
    sample_size: Optional[int] = None,
    restarts: int = 8,
) -> HeavyEstimate:
    """Solve on a uniform edge sample and scale the value by ``1/p``."""
    if not 0 < epsilon < 1:
        raise ValueError(f"epsilon must be in (0, 1), got {epsilon}")
    if delta < 1:
        raise ValueError(f"delta must be at least 1, got {delta}")
    if isinstance(source, LeveledSampler):
        built = source.params.sample_size
        if sample_size is not None and sample_size != built:
            raise ValueError(f"sampler was built for C={built}, asked for C={sample_size}")
        return _estimate_from(problem, source.query(), built, mode, seed, restarts)

    g = source
    if sample_size is None:
        sample_size = compute_general_sample_size(
            g.n, problem.gamma(g.n), problem.num_classes(g.n), epsilon, delta
        )
    if g.m <= sample_size:
        logger.info("m=%d <= C=%d: solving %s on the full graph", g.m, sample_size, problem.name)
    sample = draw_sample(g, sample_size, seed)
    return _estimate_from(problem, sample, sample_size, mode, seed, restarts)


def check_gamma_bound(problem: HeavyProblem, g: Graph, mode: str = "exact") -> list[GammaBoundReport]:
    """Compare ``γ ln|Sol^k| f_k m/n`` with the normalised optimum for every class."""
    n = g.n
    found = problem.solve(g, mode)
    optimum = float(problem.normalized_value(found.solution, g)) if g.m else 0.0
    gamma = problem.gamma(n)
    reports = []
    for k in problem.classes(n):
        bound = gamma * problem.class_count_log(k, n) * float(problem.scale(k, n)) * g.m / n
        reports.append(GammaBoundReport(k, bound, optimum))
    failed = [r.k for r in reports if not r.holds]
    if failed:
        logger.warning("%s: gamma bound fails for classes %s", problem.name, failed)
    return reports
