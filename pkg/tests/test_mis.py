import math
from fractions import Fraction

import numpy as np
import pytest

from netdecomp.clustering import validate_mis, validate_ruling_set
from netdecomp.graphs import Graph, generate_graph, induced_subgraph
from netdecomp.mis import (
    IN_MIS,
    REMOVED,
    UNDECIDED,
    MisError,
    MisState,
    build_meta_graph,
    ghaffari_engine,
    ghaffari_round,
    mis_full,
    next_desire,
    ruling_set,
    run_ghaffari,
    shatter_check,
)
from netdecomp.simulate import SimConfig, node_rng


def path(n):
    return Graph(list(range(n)), [(i, i + 1) for i in range(n - 1)])


def clique(n):
    return Graph(list(range(n)), [(i, j) for i in range(n) for j in range(i + 1, n)])


class TestDesireUpdate:
    def test_halves_under_crowding(self):
        assert next_desire(Fraction(1, 2), Fraction(5, 2)) == Fraction(1, 4)

    def test_doubles_when_uncrowded(self):
        assert next_desire(Fraction(1, 8), Fraction(1)) == Fraction(1, 4)

    def test_cap_at_half(self):
        assert next_desire(Fraction(1, 2), Fraction(0)) == Fraction(1, 2)

    def test_round_applies_update(self):
        # star center with 5 undecided neighbors, everyone at desire 1/2
        g = Graph(list(range(6)), [(0, i) for i in range(1, 6)])
        state = MisState.fresh(g)
        nxt = ghaffari_round(g, state, {v: 0.99 for v in range(6)})
        assert nxt.p[0] == Fraction(1, 4)       # sum over neighbors = 5/2
        assert all(nxt.p[v] == Fraction(1, 2) for v in range(1, 6))
        assert all(s == UNDECIDED for s in nxt.status.values())

    def test_desires_stay_dyadic(self):
        g = generate_graph("gnp", {"n": 40, "p": 0.15}, seed=4)
        state = MisState.fresh(g)
        rng = node_rng(11, 0, 0)
        for _ in range(20):
            state = ghaffari_round(
                g, state, {v: float(rng.random()) for v in range(g.n)}
            )
            for v, p in state.p.items():
                assert p.numerator == 1 and p <= Fraction(1, 2)
                assert p.denominator & (p.denominator - 1) == 0


class TestRunGhaffari:
    def test_isolated_node_expected_two_rounds(self):
        g = Graph([0], [])
        rng = node_rng(0, 0, 0)
        total = 0
        trials = 10_000
        for _ in range(trials):
            state = MisState.fresh(g)
            rounds = 0
            while state.status[0] == UNDECIDED:
                state = ghaffari_round(g, state, {0: float(rng.random())})
                rounds += 1
            total += rounds
        assert abs(total / trials - 2.0) < 0.1

    def test_midrun_independence_and_domination(self):
        g = generate_graph("gnp", {"n": 80, "p": 0.08}, seed=9)
        draws = np.vstack([node_rng(3, g.ids[v], 0).random(30) for v in range(g.n)])
        for r in range(1, 31, 3):
            mis, rem, und, _ = run_ghaffari(g, r, seed=3, _draws=draws)
            for v in mis:
                assert not any(u in mis for u in g.neighbors[v])
            for v in rem:
                assert any(u in mis for u in g.neighbors[v])
            assert mis | rem | und == set(range(g.n))

    def test_reference_and_vectorized_paths_agree(self):
        for seed in range(4):
            g = generate_graph("gnp", {"n": 30, "p": 0.15}, seed=seed)
            rounds = 15
            draws = np.vstack(
                [node_rng(seed, g.ids[v], 0).random(rounds) for v in range(g.n)]
            )
            mis, rem, und, _ = run_ghaffari(g, rounds, seed=seed, _draws=draws)
            state = MisState.fresh(g)
            for t in range(rounds):
                state = ghaffari_round(
                    g, state, {v: float(draws[v, t]) for v in range(g.n)}
                )
            assert mis == {v for v, s in state.status.items() if s == IN_MIS}
            assert rem == {v for v, s in state.status.items() if s == REMOVED}

    def test_terminates_to_full_mis_on_small_graph(self):
        g = generate_graph("gnp", {"n": 120, "p": 0.06}, seed=2)
        mis, rem, und, _ = run_ghaffari(g, 120, seed=5)
        assert not und
        ok, why = validate_mis(g, mis)
        assert ok, why

    def test_negative_rounds_rejected(self):
        with pytest.raises(MisError):
            run_ghaffari(path(3), -1)


class TestEngineLanes:
    def test_single_bit_per_lane_and_clean_ledger(self):
        g = generate_graph("gnp", {"n": 16, "p": 0.25}, seed=1)
        lanes = 5
        outs, stats = ghaffari_engine(
            g, rounds=20, lanes=lanes, seed=4, cfg=SimConfig(strict=True)
        )
        assert stats.max_bits_per_edge_round == lanes
        assert not stats.budget_violations

    def test_engine_matches_vectorized_per_lane(self):
        g = generate_graph("gnp", {"n": 20, "p": 0.2}, seed=6)
        lanes = 4
        outs, _ = ghaffari_engine(g, rounds=30, lanes=lanes, seed=8)
        for ln in range(lanes):
            mis, rem, und, _ = run_ghaffari(g, 30, seed=8, lane=ln)
            got = [o[ln] for o in outs]
            want = [
                IN_MIS if v in mis else REMOVED if v in rem else UNDECIDED
                for v in range(g.n)
            ]
            assert got == want


class TestShatterCheck:
    def test_empty_remainder(self):
        r = shatter_check(path(5), set())
        assert r.max_component == 0 and r.component_sizes == []

    def test_exact_component_sizes(self):
        g = path(8)
        r = shatter_check(g, {0, 1, 2, 4, 5, 7})
        assert sorted(r.component_sizes) == [1, 2, 3]
        assert r.max_component == 3
        assert r.p1_witness <= r.max_component

    def test_bound_value_formula(self):
        g = generate_graph("gnp", {"n": 100, "p": 0.1}, seed=0)
        d = max(2, g.max_degree)
        r = shatter_check(g, set(range(g.n)))
        assert r.bound_value == pytest.approx(
            math.log(g.n) / math.log(d) * d**4
        )
        assert r.c_p2 == pytest.approx(r.max_component / r.bound_value)


class TestRulingSet:
    def test_singleton_base(self):
        g = path(6)
        r = ruling_set(g, {3}, 2)
        assert set(r.chosen) == {3}

    def test_p5_full_base(self):
        g = path(5)
        r = ruling_set(g, set(range(5)), 2)
        assert r.beta <= 2 * math.ceil(math.log2(max(g.ids) + 1))
        ok, why = validate_ruling_set(g, r)
        assert ok, why

    def test_clique_picks_one(self):
        g = clique(6)
        r = ruling_set(g, set(range(6)), 2)
        assert len(r.chosen) == 1

    def test_random_graphs_validate(self):
        for seed in range(5):
            g = generate_graph("gnp", {"n": 60, "p": 0.05}, seed=seed)
            B = set(range(0, g.n, 2)) | {1}
            for k in (1, 2, 3):
                r = ruling_set(g, B, k)
                sub = induced_subgraph(g, B)
                remapped = type(r)(
                    base=frozenset(sub.index_of(g.ids[v]) for v in r.base),
                    chosen=frozenset(sub.index_of(g.ids[v]) for v in r.chosen),
                    alpha=r.alpha,
                    beta=r.beta,
                )
                ok, why = validate_ruling_set(sub, remapped)
                assert ok, why

    def test_bad_inputs(self):
        with pytest.raises(MisError):
            ruling_set(path(3), set(), 2)
        with pytest.raises(MisError):
            ruling_set(path(3), {0}, 0)


class TestMetaGraph:
    def test_tie_goes_to_smaller_id(self):
        g = path(3)
        h = build_meta_graph(g, {0, 1, 2}, {0, 2})
        assert h.members == [frozenset({0, 1}), frozenset({2})]
        assert h.graph.edge_indices() == [(0, 1)]

    def test_members_partition_base(self):
        g = generate_graph("gnp", {"n": 70, "p": 0.06}, seed=3)
        B = set(range(g.n))
        r = ruling_set(g, B, 3)
        h = build_meta_graph(g, B, set(r.chosen))
        seen = set()
        for m in h.members:
            assert not (m & seen)
            seen |= m
        assert seen == B

    def test_meta_node_diameter_bounded(self):
        g = generate_graph("gnp", {"n": 70, "p": 0.06}, seed=3)
        B = set(range(g.n))
        r = ruling_set(g, B, 3)
        h = build_meta_graph(g, B, set(r.chosen))
        sub = induced_subgraph(g, B)
        for m in h.members:
            idx = sorted(sub.index_of(g.ids[v]) for v in m)
            for s in idx:
                from netdecomp.graphs import _bfs_idx

                dist = _bfs_idx(sub, [s])
                assert all(0 <= dist[t] <= 2 * r.beta for t in idx)


class TestMisFull:
    @pytest.mark.parametrize("variant", ["fast", "slow"])
    def test_pipeline_valid(self, variant):
        for seed in range(3):
            g = generate_graph("gnp", {"n": 300, "p": 0.04}, seed=seed)
            rep = mis_full(g, seed=seed, variant=variant, c1=1)
            assert rep.phases.get("rulingset", 0) >= 1  # meta path exercised
            ok, why = validate_mis(g, rep.mis)
            assert ok, why

    def test_preshatter_only_when_it_finishes(self):
        g = generate_graph("gnp", {"n": 150, "p": 0.05}, seed=1)
        rep = mis_full(g, seed=1, variant="fast")
        ok, why = validate_mis(g, rep.mis)
        assert ok, why

    def test_deterministic_replay(self):
        g = generate_graph("gnp", {"n": 200, "p": 0.04}, seed=7)
        a = mis_full(g, seed=9, variant="fast", c1=1)
        b = mis_full(g, seed=9, variant="fast", c1=1)
        assert a.mis == b.mis and a.phases == b.phases

    def test_bad_variant(self):
        with pytest.raises(MisError):
            mis_full(path(4), variant="medium")
