"""Tests for densest module."""

import itertools
from fractions import Fraction

import numpy as np
import pytest

from densketch import densest as densest_module
from densketch.densest import (
    approx_densest_by_sampling,
    brute_force_densest,
    charikar_peel,
    compute_sample_size,
    exact_densest,
    solve_densest,
)
from densketch.graph import Graph, SizeGuardError, subgraph_density
from densketch.sketch import LeveledSampler
from densketch.stream import StreamSpec, generate_stream


def _random_graph(n: int, prob: float, seed: int) -> Graph:
    rng = np.random.default_rng(seed)
    pairs = [(u, v) for u, v in itertools.combinations(range(n), 2) if rng.random() < prob]
    return Graph.from_pairs(n, pairs)


def _k4_with_tail() -> Graph:
    pairs = list(itertools.combinations(range(4), 2)) + [(3, 4), (4, 5)]
    return Graph.from_pairs(6, pairs)


def _exhaustive_family() -> list[Graph]:
    """Every labelled graph on up to 5 vertices plus named families up to 12 vertices."""
    graphs = []
    for n in range(1, 6):
        slots = list(itertools.combinations(range(n), 2))
        for mask in range(1 << len(slots)):
            graphs.append(Graph.from_pairs(n, [slots[i] for i in range(len(slots)) if mask >> i & 1]))
    for n in range(2, 13):
        graphs.append(Graph.from_pairs(n, [(i, i + 1) for i in range(n - 1)]))
        graphs.append(Graph.from_pairs(n, [(0, i) for i in range(1, n)]))
        graphs.append(Graph.from_pairs(n, list(itertools.combinations(range(n), 2))))
        if n >= 3:
            graphs.append(Graph.from_pairs(n, [(i, (i + 1) % n) for i in range(n)]))
        if n >= 4:
            rim = [(i, i % (n - 1) + 1) for i in range(1, n)]
            graphs.append(Graph.from_pairs(n, rim + [(0, i) for i in range(1, n)]))
        for a in range(1, n // 2 + 1):
            graphs.append(Graph.from_pairs(n, [(u, v) for u in range(a) for v in range(a, n)]))
    return graphs


@pytest.fixture(scope="module")
def planted():
    """ER(500, 0.05) with a planted K30 and its exact optimum."""
    g = generate_stream(StreamSpec("planted_dense", n=500, prob=0.05, clique=30, seed=1)).graph
    return g, exact_densest(g).density_in_source


class TestComputeSampleSize:
    """Tests for compute_sample_size."""

    def test_large_instance_stores_everything(self):
        """Test n=1000, m=10^6 gives C > m."""
        params = compute_sample_size(1000, 10**6, 0.5, 1)
        assert params.sample_size == 3_315_723
        assert params.stores_everything
        assert params.rate > 1

    def test_small_instance(self):
        """Test n=10, m=100 gives 11,053."""
        assert compute_sample_size(10, 100, 0.5, 1).sample_size == 11_053

    @pytest.mark.parametrize("epsilon,delta", [(1.0, 1.0), (0.0, 1.0), (0.5, 0.5)])
    def test_invalid_accuracy(self, epsilon, delta):
        """Test ε outside (0, 1) and δ < 1 are refused."""
        with pytest.raises(ValueError):
            compute_sample_size(10, 100, epsilon, delta)


class TestCharikarPeel:
    """Tests for charikar_peel."""

    def test_k4_with_pendant_path(self):
        """Test peeling strips the path and keeps K4 at density 3/2."""
        result = charikar_peel(_k4_with_tail())
        assert result.vertex_set == frozenset({0, 1, 2, 3})
        assert result.density_in_source == Fraction(3, 2)

    def test_regular_graph_keeps_everything(self):
        """Test an 8-cycle is its own densest prefix."""
        g = Graph.from_pairs(8, [(i, (i + 1) % 8) for i in range(8)])
        result = charikar_peel(g)
        assert result.vertex_set == frozenset(range(8))
        assert result.density_in_source == 1

    def test_star(self):
        """Test the star K1,5 keeps all six vertices at density 5/6."""
        g = Graph.from_pairs(6, [(0, i) for i in range(1, 6)])
        assert charikar_peel(g).density_in_source == Fraction(5, 6)

    def test_edgeless(self):
        """Test an edgeless graph returns one vertex at density 0."""
        result = charikar_peel(Graph(4))
        assert result.density_in_source == 0
        assert result.size == 1

    def test_directed_refused(self):
        """Test directed input is refused."""
        with pytest.raises(ValueError, match="undirected"):
            charikar_peel(Graph.from_pairs(3, [(0, 1)], directed=True))

    def test_ties_take_smallest_index(self):
        """Test equal minimum degrees remove the smallest vertex first."""
        # Path 1-0-2 beside triangle 3-4-5 with pendant 6 on 3. Smallest-first
        # peels 1, 0, 2 and reaches density 1 with 6 still attached.
        g = Graph.from_pairs(7, [(0, 1), (0, 2), (3, 4), (4, 5), (3, 5), (3, 6)])
        result = charikar_peel(g)
        assert result.vertex_set == frozenset({3, 4, 5, 6})
        assert result.density_in_source == 1

    def test_half_approximation_exhaustive_family(self):
        """Test peeling reaches half the brute-force optimum on every graph of the family."""
        for g in _exhaustive_family():
            opt = brute_force_densest(g).density_in_source
            assert charikar_peel(g).density_in_source >= opt / 2, sorted(g.edges)

    @pytest.mark.slow
    def test_half_approximation_against_flow_oracle(self):
        """Test peeling reaches half the flow optimum on 100 random graphs with n <= 60."""
        rng = np.random.default_rng(6)
        for trial in range(100):
            g = _random_graph(int(rng.integers(2, 61)), float(rng.uniform(0.05, 0.5)), trial)
            opt = exact_densest(g).density_in_source
            assert charikar_peel(g).density_in_source >= opt / 2, trial

    @pytest.mark.parametrize("seed", range(10))
    def test_half_approximation(self, seed):
        """Test peeling reaches at least half the optimum."""
        g = _random_graph(11, 0.35, seed)
        opt = brute_force_densest(g).density_in_source
        assert charikar_peel(g).density_in_source >= opt / 2


class TestExactDensest:
    """Tests for exact_densest and brute_force_densest."""

    @pytest.mark.parametrize("seed", range(12))
    def test_matches_brute_force(self, seed):
        """Test the flow solver finds the brute-force optimum on random graphs."""
        g = _random_graph(12, 0.2 + 0.05 * (seed % 6), seed)
        expected = brute_force_densest(g)
        result = exact_densest(g)
        assert result.density_in_source == expected.density_in_source
        assert subgraph_density(g, result.vertex_set) == expected.density_in_source
        assert result.vertex_set == expected.vertex_set

    @pytest.mark.slow
    def test_matches_brute_force_on_200_graphs(self):
        """Test density and tie-broken vertex set agree with brute force for 200 graphs, n <= 12."""
        rng = np.random.default_rng(7)
        for trial in range(200):
            g = _random_graph(int(rng.integers(1, 13)), float(rng.uniform(0.1, 0.7)), 1_000 + trial)
            expected = brute_force_densest(g)
            result = exact_densest(g)
            assert result.density_in_source == expected.density_in_source, trial
            assert result.vertex_set == expected.vertex_set, trial

    def test_k4_with_tail(self):
        """Test the K4 core is optimal."""
        result = exact_densest(_k4_with_tail())
        assert result.vertex_set == frozenset({0, 1, 2, 3})
        assert result.density_in_source == Fraction(3, 2)

    def _record_guesses(self, monkeypatch) -> list[Fraction]:
        guesses: list[Fraction] = []
        original = densest_module._denser_than

        def counted(g, net, guess):
            guesses.append(guess)
            if len(guesses) > 25:
                raise AssertionError(f"flow search did not stop: last guesses {guesses[-3:]}")
            return original(g, net, guess)

        monkeypatch.setattr(densest_module, "_denser_than", counted)
        return guesses

    def test_search_stops_when_cut_is_tied(self, monkeypatch):
        """Test a cut returning a set of the guessed density ends the search after one call."""
        guesses = self._record_guesses(monkeypatch)
        result = exact_densest(_k4_with_tail())
        assert result.density_in_source == Fraction(3, 2)
        assert guesses == [Fraction(3, 2)]

    def test_guesses_strictly_increase(self, monkeypatch):
        """Test every min-cut call after the first raises the guess, ending at the optimum."""
        g = generate_stream(StreamSpec("planted_dense", n=40, prob=0.15, clique=8, seed=2)).graph
        guesses = self._record_guesses(monkeypatch)
        result = exact_densest(g)
        assert all(a < b for a, b in zip(guesses, guesses[1:]))
        assert guesses[-1] == result.density_in_source

    def test_peel_suboptimal_instance(self):
        """Test a graph where peeling stops short is solved exactly."""
        # K_{3,7} plus a disjoint K5: peeling removes K5 vertices early.
        bip = [(a, b) for a in range(3) for b in range(3, 10)]
        k5 = list(itertools.combinations(range(10, 15), 2))
        g = Graph.from_pairs(15, bip + k5)
        assert exact_densest(g).density_in_source == brute_force_densest(g).density_in_source

    def test_cycle(self):
        """Test C8 has optimum 1."""
        g = Graph.from_pairs(8, [(i, (i + 1) % 8) for i in range(8)])
        assert exact_densest(g).density_in_source == 1

    def test_two_triangles_tie(self):
        """Test tied optima resolve to the smallest, lexicographically first set."""
        g = Graph.from_pairs(6, [(0, 1), (1, 2), (0, 2), (3, 4), (4, 5), (3, 5)])
        assert brute_force_densest(g).vertex_set == frozenset({0, 1, 2})
        assert exact_densest(g).vertex_set == frozenset({0, 1, 2})

    def test_tie_prefers_smaller_nested_set(self):
        """Test a K4 inside a larger set of equal density is returned alone."""
        # 4 hangs off 0, 5 off 1, and 4-5: nine edges on six vertices.
        g = Graph.from_pairs(6, [*itertools.combinations(range(4), 2), (0, 4), (1, 5), (4, 5)])
        assert subgraph_density(g, range(6)) == Fraction(3, 2)
        result = exact_densest(g)
        assert result.density_in_source == Fraction(3, 2)
        assert result.vertex_set == frozenset({0, 1, 2, 3})

    @pytest.mark.parametrize("seed", range(5))
    def test_at_least_average_density(self, seed):
        """Test the optimum is at least m/n."""
        g = _random_graph(30, 0.15, seed)
        assert exact_densest(g).density_in_source >= Fraction(g.m, g.n)

    def test_size_guards(self):
        """Test the exact oracles refuse inputs above their limits."""
        with pytest.raises(SizeGuardError) as exc:
            exact_densest(Graph(5001))
        assert exc.value.limit == 5000
        with pytest.raises(SizeGuardError):
            brute_force_densest(Graph(21))

    def test_solve_densest_dispatch(self):
        """Test solver names dispatch and unknown names are refused."""
        g = _k4_with_tail()
        assert solve_densest(g, "charikar").solver == "charikar"
        with pytest.raises(ValueError, match="unknown solver"):
            solve_densest(g, "greedy")


class TestApproxDensestBySampling:
    """Tests for approx_densest_by_sampling."""

    def test_store_everything_branch_is_exact(self):
        """Test m <= C solves the full graph with p = 1 on a 200-edge fixture."""
        g = generate_stream(StreamSpec("er", n=40, prob=0.25, seed=3)).graph
        assert 150 <= g.m <= 250
        result = approx_densest_by_sampling(g, epsilon=0.5, delta=1, seed=2)
        expected = exact_densest(g)
        assert result.p == 1
        assert result.density_in_source == expected.density_in_source
        assert result.vertex_set == expected.vertex_set

    def test_forced_rate_reports_sample_density(self):
        """Test a forced C reports p = C/m and evaluates the set in G."""
        g = _random_graph(40, 0.3, 4)
        result = approx_densest_by_sampling(g, sample_size=g.m // 4, seed=1, solver="charikar")
        assert result.p == Fraction(g.m // 4, g.m)
        assert result.density_in_source == subgraph_density(g, result.vertex_set)
        assert result.density_in_sample is not None

    def test_stream_mode_with_reference(self):
        """Test a sampler source evaluates den_G only when a reference is given."""
        gen = generate_stream(StreamSpec("churn", n=50, events=2_000, live=300, seed=5))
        sampler = LeveledSampler.create(n=50, directed=False, sample_size=100, seed=5)
        sampler.consume(gen.events)
        with_ref = approx_densest_by_sampling(sampler, reference=gen.graph)
        assert with_ref.density_in_source == subgraph_density(gen.graph, with_ref.vertex_set)
        assert with_ref.sample_size == 100
        without = approx_densest_by_sampling(sampler)
        assert without.density_in_source is None
        assert without.vertex_set == with_ref.vertex_set

    def test_stream_mode_sample_size_mismatch(self):
        """Test asking a sampler for a different C is refused."""
        sampler = LeveledSampler.create(n=10, directed=False, sample_size=5)
        with pytest.raises(ValueError):
            approx_densest_by_sampling(sampler, sample_size=6)

    def test_planted_half_rate(self, planted):
        """Test C = m/2 keeps den_G >= 0.7 opt in at least 18 of 20 trials."""
        g, opt = planted
        passed = sum(
            1
            for seed in range(20)
            if approx_densest_by_sampling(g, sample_size=g.m // 2, seed=seed).density_in_source
            >= Fraction(7, 10) * opt
        )
        assert passed >= 18

    def test_planted_failures_fall_with_rate(self, planted):
        """Test a larger sample fails the 0.7 band no more often than a smaller one."""
        g, opt = planted

        def failures(divisor: int) -> int:
            return sum(
                1
                for seed in range(10)
                if approx_densest_by_sampling(
                    g, sample_size=g.m // divisor, seed=seed
                ).density_in_source
                < Fraction(7, 10) * opt
            )

        assert failures(2) <= failures(20)
