from fractions import Fraction

import pytest

from netdecomp.clustering import Cluster, Decomposition, validate_cover
from netdecomp.covers import (
    CoverError,
    MstError,
    cover_from_decomposition,
    cover_mst,
    cycle_enumeration_mu,
    kruskal_oracle,
    mst_radius,
    mst_radius_scipy,
    prim_oracle,
)
from netdecomp.decompose import decompose
from netdecomp.graphs import Graph, GraphError, generate_graph, random_weights


def path(n):
    return Graph(list(range(n)), [(i, i + 1) for i in range(n - 1)])


def four_cycle():
    return Graph(
        [0, 1, 2, 3],
        [(0, 1), (1, 2), (2, 3), (3, 0)],
        {
            (0, 1): Fraction(1),
            (1, 2): Fraction(2),
            (2, 3): Fraction(3),
            (3, 0): Fraction(4),
        },
    )


class TestCoverFromDecomposition:
    def test_star_single_cluster(self):
        g = Graph(list(range(6)), [(0, i) for i in range(1, 6)])
        dec = Decomposition(
            k=2,
            clusters=[
                Cluster(
                    id=0,
                    center=0,
                    members=frozenset(range(6)),
                    tree_edges=frozenset((0, i) for i in range(1, 6)),
                    color=0,
                )
            ],
        )
        cov = cover_from_decomposition(g, 1, dec)
        assert len(cov.clusters) == 1
        assert cov.clusters[0].members == frozenset(range(6))
        rep = validate_cover(g, cov)
        assert rep.valid and rep.stats["sparsity"] == 1

    def test_p9_from_netdecomp(self):
        g = path(9)
        dec = decompose(g, 2).decomposition
        cov = cover_from_decomposition(g, 1, dec)
        rep = validate_cover(g, cov)
        assert rep.valid, rep.failures
        # per color at most one containing cluster per node
        for color in {c.color for c in cov.clusters}:
            for v in range(g.n):
                assert (
                    sum(
                        v in c.members
                        for c in cov.clusters
                        if c.color == color
                    )
                    <= 1
                )

    def test_expansions_at_distance_2k_plus_1_stay_disjoint(self):
        k = 2
        g = path(6)
        clusters = [
            Cluster(id=0, center=0, members=frozenset({0}), color=0),
            Cluster(id=1, center=5, members=frozenset({5}), color=0),
        ] + [
            Cluster(id=1 + v, center=v, members=frozenset({v}), color=v)
            for v in range(1, 5)
        ]
        dec = Decomposition(k=2 * k, clusters=clusters)
        cov = cover_from_decomposition(g, k, dec)
        a, b = (c.members for c in cov.clusters[:2])
        assert a == frozenset({0, 1, 2}) and b == frozenset({3, 4, 5})
        assert not (a & b)

    def test_rejects_insufficient_separation(self):
        g = path(9)
        dec = decompose(g, 2).decomposition
        with pytest.raises(CoverError):
            cover_from_decomposition(g, 2, dec)   # needs separation 4

    def test_sparsity_bounded_by_colors(self):
        for seed in range(3):
            g = generate_graph(
                "gnp", {"n": 150, "p": 0.04, "largest_component": True},
                seed=seed,
            )
            for k in (1, 2):
                dec = decompose(g, 2 * k).decomposition
                cov = cover_from_decomposition(g, k, dec)
                rep = validate_cover(g, cov)
                assert rep.valid, rep.failures
                assert rep.stats["sparsity"] <= len(
                    {c.color for c in dec.clusters}
                )


class TestMstRadius:
    def test_tree_convention(self):
        g = random_weights(path(6), seed=0)
        assert mst_radius(g) == 0

    def test_four_cycle(self):
        g = four_cycle()
        assert mst_radius(g) == 4
        assert cycle_enumeration_mu(g) == 4

    def test_k4_dual_oracle(self):
        g = Graph(
            list(range(4)),
            [(i, j) for i in range(4) for j in range(i + 1, 4)],
            {
                (0, 1): Fraction(1),
                (0, 2): Fraction(2),
                (0, 3): Fraction(3),
                (1, 2): Fraction(4),
                (1, 3): Fraction(5),
                (2, 3): Fraction(6),
            },
        )
        assert mst_radius(g) == cycle_enumeration_mu(g) == mst_radius_scipy(g)

    def test_scipy_oracle_agreement_random(self):
        for seed in range(5):
            g = random_weights(
                generate_graph(
                    "gnp", {"n": 80, "p": 0.06, "largest_component": True},
                    seed=seed,
                ),
                seed=seed,
            )
            assert mst_radius(g) == mst_radius_scipy(g)

    def test_cycle_cap(self):
        assert mst_radius(four_cycle(), cycle_cap=3) is None

    def test_disconnected_rejected(self):
        g = Graph([0, 1, 2, 3], [(0, 1), (2, 3)],
                  {(0, 1): Fraction(1), (2, 3): Fraction(2)})
        with pytest.raises(GraphError):
            mst_radius(g)


class TestMstOracles:
    def test_tree_keeps_all_edges(self):
        g = random_weights(path(8), seed=3)
        assert kruskal_oracle(g) == frozenset((i, i + 1) for i in range(7))

    def test_four_cycle_drops_heaviest(self):
        assert kruskal_oracle(four_cycle()) == frozenset(
            {(0, 1), (1, 2), (2, 3)}
        )

    def test_kruskal_prim_agree(self):
        for seed in range(5):
            g = random_weights(
                generate_graph("gnp", {"n": 200, "p": 0.03}, seed=seed),
                seed=seed,
            )
            assert kruskal_oracle(g) == prim_oracle(g)


class TestCoverMst:
    def test_tree_all_rule_b(self):
        g = random_weights(path(7), seed=1)
        res = cover_mst(g, mu=1)
        assert res.tree_edges == kruskal_oracle(g)
        assert all(r == "rule_B_included" for r in res.classification.values())

    def test_four_cycle_classification(self):
        res = cover_mst(four_cycle(), mu=4)
        assert res.classification[(0, 3)] == "rule_A_excluded"
        assert res.tree_edges == kruskal_oracle(four_cycle())

    def test_random_graphs_exact(self):
        for seed in range(8):
            g = random_weights(
                generate_graph(
                    "gnp", {"n": 150, "p": 0.035, "largest_component": True},
                    seed=seed,
                ),
                seed=seed,
            )
            res = cover_mst(g)
            assert res.tree_edges == kruskal_oracle(g)
            # rule soundness, edge by edge
            for e, rule in res.classification.items():
                in_true = e in res.tree_edges
                assert in_true == (rule == "rule_B_included")

    def test_mu_below_radius_rejected(self):
        g = four_cycle()
        with pytest.raises(MstError):
            cover_mst(g, mu=2)

    def test_json_shape(self):
        g = four_cycle()
        res = cover_mst(g, mu=4)
        j = res.to_json(g)
        assert set(j) == {"mst_edges", "excluded_edges", "mu", "cover_stats"}
        assert j["excluded_edges"] == [[0, 3]]
