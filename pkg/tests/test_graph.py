from fractions import Fraction
from itertools import combinations

import networkx as nx
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from palette_mpc.graph import (
    DEFERRED,
    UNCOLORED,
    ColoringState,
    D1LCInstance,
    Graph,
    ImproperInput,
    NonSymmetricEdge,
    PaletteTooSmall,
    ParseError,
    SelfLoop,
    compute_discrepancy,
    compute_disparity,
    compute_slack,
    compute_slackability,
    compute_sparsity,
    compute_unevenness,
    format_coloring,
    format_edges,
    format_palettes,
    load_instance,
    node_params,
    parse_coloring,
    reduce_instance,
    verify_coloring,
)

from conftest import graphs, instances, random_proper_partial


def inst_of(n, edges, pals=None):
    return D1LCInstance.build(Graph.from_edges(n, edges), pals)


class TestLoad:
    def test_triangle_valid(self):
        inst = load_instance("0 1\n1 2\n0 2\n", "0: 0 1 2\n1: 0 1 2\n2: 0 1 2\n")
        assert inst.n == 3 and inst.graph.m == 3

    def test_edge_with_singleton_palettes(self):
        with pytest.raises(PaletteTooSmall) as err:
            load_instance("0 1\n", "0: 0\n1: 1\n")
        assert err.value.node == 0

    def test_path_palettes(self):
        inst = load_instance("0 1\n1 2\n", "0: 0 1\n1: 0 1 2\n2: 0 1\n")
        assert inst.palette_sizes.tolist() == [2, 3, 2]

    def test_default_palette(self):
        inst = load_instance("# star\n0 1\n0 2\n")
        assert inst.palette(0).tolist() == [0, 1, 2]
        assert inst.palette(1).tolist() == [0, 1]

    def test_self_loop(self):
        with pytest.raises(SelfLoop):
            load_instance("1 1\n")

    def test_asymmetric_adjacency(self):
        with pytest.raises(NonSymmetricEdge):
            Graph.from_adjacency({0: [1], 1: []})

    def test_malformed(self):
        with pytest.raises(ParseError):
            load_instance("0 1 2\n")
        with pytest.raises(ParseError):
            load_instance("n x\n")
        with pytest.raises(ParseError):
            load_instance("0 1\n", "0 1 2\n")

    def test_node_count_header_keeps_isolated_nodes(self):
        inst = load_instance("n 5\n0 1\n")
        assert inst.n == 5 and inst.graph.degrees.tolist() == [1, 1, 0, 0, 0]

    @given(instances())
    def test_round_trip(self, inst):
        again = load_instance(format_edges(inst.graph), format_palettes(inst))
        assert np.array_equal(again.graph.indptr, inst.graph.indptr)
        assert np.array_equal(again.graph.indices, inst.graph.indices)
        assert np.array_equal(again.pal_colors, inst.pal_colors)

    @given(instances())
    def test_loaded_instances_have_slack(self, inst):
        assert (inst.palette_sizes >= inst.graph.degrees + 1).all()


class TestParameters:
    def test_slack_isolated(self):
        inst = inst_of(1, [], [[5]])
        assert compute_slack(inst, ColoringState(1), 0) == 1

    def test_slack_two_uncolored_neighbors(self):
        inst = inst_of(3, [(0, 1), (0, 2)], [[0, 1, 2], [0, 1], [0, 1]])
        assert compute_slack(inst, ColoringState(3), 0) == 1

    def test_slack_deferred_neighbor(self):
        inst = inst_of(3, [(0, 1), (0, 2)], [[0, 1, 2], [0, 1], [0, 1]])
        c = ColoringState(3)
        c.color[1] = DEFERRED
        assert compute_slack(inst, c, 0) == 2

    def test_sparsity_examples(self):
        k4 = inst_of(4, list(combinations(range(4), 2)))
        assert compute_sparsity(k4, 0) == 0
        star = inst_of(6, [(0, i) for i in range(1, 6)])
        assert compute_sparsity(star, 0) == 2
        # neighbors 1, 2, 3 with edges 1-2 and 2-3
        g = inst_of(4, [(0, 1), (0, 2), (0, 3), (1, 2), (2, 3)])
        assert compute_sparsity(g, 0) == Fraction(1, 3)

    def test_disparity_examples(self):
        inst = inst_of(2, [], [[1, 2, 3, 4], [3, 4, 5, 6]])
        assert compute_disparity(inst, 0, 1) == Fraction(1, 2)
        same = inst_of(2, [], [[1, 2], [1, 2]])
        assert compute_disparity(same, 0, 1) == 0
        apart = inst_of(2, [], [[1, 2], [3, 4]])
        assert compute_disparity(apart, 0, 1) == 1

    def test_discrepancy_additive(self):
        inst = inst_of(4, [(0, 1), (0, 2), (0, 3)], [[0, 1, 2, 3], [0, 9], [1, 9], [2, 9]])
        assert compute_discrepancy(inst, 0) == Fraction(3, 2)

    def test_unevenness_examples(self):
        # v=0 of degree 2 with neighbors of degree 2 and 5
        edges = [(0, 1), (0, 2), (1, 3), (2, 4), (2, 5), (2, 6), (2, 7)]
        inst = inst_of(8, edges)
        assert inst.graph.degrees[[0, 1, 2]].tolist() == [2, 2, 5]
        assert compute_unevenness(inst, 0) == Fraction(1, 2)
        star = inst_of(8, [(0, i) for i in range(1, 8)])
        assert compute_unevenness(star, 3) == Fraction(6, 8)
        cycle = inst_of(5, [(i, (i + 1) % 5) for i in range(5)])
        assert all(compute_unevenness(cycle, v) == 0 for v in range(5))

    def test_slackability_examples(self):
        k4 = inst_of(4, list(combinations(range(4), 2)), [[0, 1, 2, 3]] * 4)
        assert compute_slackability(k4, 0) == (0, 0)
        star = inst_of(6, [(0, i) for i in range(1, 6)], [list(range(6))] * 6)
        assert compute_slackability(star, 0) == (2, 2)

    @given(instances(max_n=8))
    def test_discrepancy_matches_direct_sum(self, inst):
        for v in range(inst.n):
            pv = set(inst.palette(v).tolist())
            direct = sum(
                (Fraction(len(set(inst.palette(u).tolist()) - pv), len(inst.palette(u))) for u in inst.graph.neighbors(v).tolist()),
                Fraction(0),
            )
            assert compute_discrepancy(inst, v) == direct

    @given(instances(max_n=8))
    def test_sparsity_matches_networkx(self, inst):
        G = nx.Graph(inst.graph.edge_list().tolist())
        G.add_nodes_from(range(inst.n))
        for v in range(inst.n):
            d = G.degree(v)
            if d == 0:
                assert compute_sparsity(inst, v) == 0
                continue
            inner = G.subgraph(list(G.neighbors(v))).number_of_edges()
            assert compute_sparsity(inst, v) == Fraction(d * (d - 1) // 2 - inner, d)

    @given(instances(max_n=8))
    def test_param_identities(self, inst):
        for v in range(inst.n):
            p = node_params(inst, v)
            assert p.slack == inst.palette_sizes[v] - inst.graph.degree(v)
            assert p.slackability == p.discrepancy + p.sparsity
            assert p.strong_slackability == p.unevenness + p.sparsity
            assert p.strong_slackability - p.slackability == p.unevenness - p.discrepancy
            assert p.sparsity >= 0 and p.unevenness >= 0

    @given(instances(max_n=8), st.integers(0, 2**32 - 1))
    def test_slack_monotone_under_deferral(self, inst, seed):
        rng = np.random.default_rng(seed)
        color = random_proper_partial(inst, rng)
        for v in np.flatnonzero(color == UNCOLORED).tolist():
            before = compute_slack(inst, ColoringState(inst.n, color), v)
            for u in inst.graph.neighbors(v).tolist():
                if color[u] == UNCOLORED:
                    c2 = color.copy()
                    c2[u] = DEFERRED
                    assert compute_slack(inst, ColoringState(inst.n, c2), v) >= before


class TestReduce:
    def test_nothing_colored_is_identity(self, triangle):
        assert reduce_instance(triangle, ColoringState(3)) is triangle

    def test_triangle_one_colored(self, triangle):
        c = ColoringState(3)
        c.color[0] = 0
        red = reduce_instance(triangle, c)
        assert red.n == 2 and red.graph.m == 1
        assert [red.palette(v).tolist() for v in range(2)] == [[1, 2], [1, 2]]
        assert red.labels.tolist() == [1, 2]

    def test_improper_input(self, triangle):
        c = ColoringState(3, [0, 0, -1])
        with pytest.raises(ImproperInput):
            reduce_instance(triangle, c)

    @given(instances(), st.integers(0, 2**32 - 1))
    def test_residual_keeps_guarantee(self, inst, seed):
        color = random_proper_partial(inst, np.random.default_rng(seed))
        red = reduce_instance(inst, ColoringState(inst.n, color))
        assert (red.palette_sizes >= red.graph.degrees + 1).all()
        # brute force: each residual palette is the original minus colored neighbors' colors
        for i, v in enumerate(red.labels.tolist()):
            used = {int(color[u]) for u in inst.graph.neighbors(v).tolist() if color[u] >= 0}
            assert set(red.palette(i).tolist()) == set(inst.palette(v).tolist()) - used

    @given(instances(), st.integers(0, 2**32 - 1))
    def test_reduce_composes(self, inst, seed):
        rng = np.random.default_rng(seed)
        c1 = random_proper_partial(inst, rng, 0.3)
        c2 = c1.copy()
        for v in np.flatnonzero(c1 < 0).tolist():
            if rng.random() < 0.5:
                nb = c2[inst.graph.neighbors(v)]
                free = [c for c in inst.palette(v).tolist() if c not in set(nb.tolist())]
                c2[v] = free[0]
        once = reduce_instance(inst, ColoringState(inst.n, c2))
        r1 = reduce_instance(inst, ColoringState(inst.n, c1))
        twice = reduce_instance(r1, ColoringState(r1.n, c2[r1.labels]))
        assert np.array_equal(once.labels, twice.labels)
        assert np.array_equal(once.pal_colors, twice.pal_colors)
        assert np.array_equal(once.graph.indices, twice.graph.indices)
        # idempotent
        again = reduce_instance(once, ColoringState(once.n))
        assert again is once


class TestVerify:
    def test_triangle_accept(self, triangle):
        assert verify_coloring(triangle, [0, 1, 2]).valid

    def test_monochromatic(self):
        inst = inst_of(2, [(0, 1)], [[3, 4], [3, 5]])
        v = verify_coloring(inst, [3, 3])
        assert not v.valid and v.kind == "Monochromatic"

    def test_off_palette(self, triangle):
        v = verify_coloring(triangle, {0: 0, 1: 1, 2: 7})
        assert v.kind == "OffPalette" and v.node == 2

    def test_missing_node(self, triangle):
        v = verify_coloring(triangle, {0: 0, 1: 1})
        assert v.kind == "Uncolored" and v.node == 2

    def test_coloring_round_trip(self, triangle):
        text = format_coloring(np.array([2, 0, 1]))
        assert parse_coloring(text) == {0: 2, 1: 0, 2: 1}

    @given(instances(max_n=7))
    def test_matches_brute_force(self, inst):
        rng = np.random.default_rng(inst.n)
        for _ in range(5):
            color = np.array([rng.choice(inst.palette(v)) if rng.random() < 0.9 else rng.integers(0, 20) for v in range(inst.n)])
            ok = all(color[v] in set(inst.palette(v).tolist()) for v in range(inst.n)) and all(
                color[u] != color[v] for u, v in inst.graph.edge_list().tolist()
            )
            assert verify_coloring(inst, color).valid == ok
