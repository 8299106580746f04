from fractions import Fraction
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from palette_mpc.config import RunConfig
from palette_mpc.generate import generate
from palette_mpc.graph import D1LCInstance, Graph, verify_coloring
from palette_mpc.mpc import MpcConfig, Simulator
from palette_mpc.partition import (
    DegreeTooHigh,
    NoValidSeed,
    PipelineLog,
    derandomized_mid_degree_color,
    evaluate_hashes,
    hash_candidate,
    low_degree_fallback,
    low_space_color_reduce,
    low_space_partition,
    next_prime,
    partition_violations,
    select_hashes,
)
from palette_mpc.derand import color_power_graph

from conftest import instances

QUARTER = Fraction(1, 4)


def dense_gnp(seed=1, n=256, deg=96):
    return generate("gnp", seed=seed, n=n, avg_degree=deg)


def split_cfg(**kw):
    return RunConfig(delta=QUARTER, mid_degree_threshold=8, **kw)


def blocks(k, count):
    edges = [(b * k + i, b * k + j) for b in range(count) for i, j in combinations(range(k), 2)]
    return D1LCInstance.build(Graph.from_edges(k * count, edges))


class TestHashes:
    def test_bin_counts_n256(self):
        cfg = RunConfig(delta=QUARTER)
        assert cfg.bin_count(256) == 4
        h = hash_candidate(0, 256, 256 * 256, cfg.bin_count(256))
        assert set(h.node_bin(np.arange(256)).tolist()) <= set(range(4))
        assert set(h.color_bin(np.arange(5000)).tolist()) <= set(range(3))

    def test_pure_function_of_index(self):
        assert hash_candidate(17, 300, 90000, 5) == hash_candidate(17, 300, 90000, 5)
        assert hash_candidate(17, 300, 90000, 5) != hash_candidate(18, 300, 90000, 5)

    def test_primes(self):
        assert [next_prime(x) for x in (0, 2, 8, 256, 65536)] == [2, 2, 11, 257, 65537]

    def test_all_mid_accepts_first_seed(self):
        inst = generate("gnp", seed=0, n=64, avg_degree=4)
        cfg = RunConfig(delta=Fraction(1, 3), mid_degree_threshold=100)
        h, tried = select_hashes(inst, cfg.delta, cfg)
        assert tried == 1 and h.index == 0

    def test_selected_seed_rechecked(self):
        inst = dense_gnp()
        cfg = split_cfg()
        h, tried = select_hashes(inst, cfg.delta, cfg)
        mid = inst.graph.degrees <= 8
        # every earlier candidate is rejected, the chosen one passes
        for i in range(tried - 1):
            assert not evaluate_hashes(inst, hash_candidate(i, inst.n, inst.n**2, 4), mid, cfg.delta, inst.n)[0]
        part = low_space_partition(inst, cfg.delta, cfg)
        assert part.hashes == h
        assert partition_violations(inst, part, cfg.delta, inst.n) == []

    def test_no_valid_seed(self):
        # 11 triangles, 5 bins: the degree bullet forces every triangle apart
        inst = blocks(3, 11)
        cfg = RunConfig(delta=Fraction(2, 5), mid_degree_threshold=1, seed_budget=64)
        with pytest.raises(NoValidSeed) as err:
            select_hashes(inst, cfg.delta, cfg)
        assert err.value.budget == 64


class TestPartition:
    def test_edgeless_all_mid(self):
        inst = D1LCInstance.build(Graph.from_edges(256, []))
        part = low_space_partition(inst, QUARTER, RunConfig(delta=QUARTER))
        assert part.hashes is None and len(part.g_mid_nodes) == 256

    def test_star_center_binned(self):
        inst = generate("star-forest", stars=1, leaves=40)
        cfg = RunConfig(delta=Fraction(1, 2), phi=Fraction(3, 4), mid_degree_threshold=2)
        part = low_space_partition(inst, cfg.delta, cfg)
        assert part.g_mid_nodes.tolist() == list(range(1, 41))
        assert sum(len(b) for b in part.bin_nodes) == 1
        assert partition_violations(inst, part, cfg.delta, inst.n) == []

    @pytest.mark.parametrize("seed", range(4))
    def test_parts_partition_and_bounds(self, seed):
        inst = dense_gnp(seed, n=256, deg=80)
        cfg = split_cfg()
        part = low_space_partition(inst, cfg.delta, cfg)
        nodes = np.concatenate([part.g_mid_nodes, *part.bin_nodes])
        assert sorted(nodes.tolist()) == list(range(inst.n))
        assert len(part.bins) == 4
        assert partition_violations(inst, part, cfg.delta, inst.n) == []
        # restricted palettes come from distinct color bins
        for i, j in combinations(range(3), 2):
            assert not set(part.bins[i].pal_colors.tolist()) & set(part.bins[j].pal_colors.tolist())
        # the last bin keeps full palettes
        last = part.bin_nodes[-1]
        assert part.bins[-1].palette_sizes.tolist() == inst.palette_sizes[last].tolist()

    def test_violation_checker_catches_overlap(self):
        inst = dense_gnp()
        cfg = split_cfg()
        part = low_space_partition(inst, cfg.delta, cfg)
        part.bin_nodes[0] = np.concatenate([part.bin_nodes[0], part.bin_nodes[1][:1]])
        assert "parts do not partition V" in partition_violations(inst, part, cfg.delta, inst.n)


class TestReduce:
    def test_low_degree_single_call(self):
        inst = generate("gnp", seed=3, n=128, avg_degree=4)
        log = PipelineLog()
        c = low_space_color_reduce(inst, RunConfig(), None, None, log)
        assert verify_coloring(inst, c).valid
        assert [t.kind for t in log.trace] == ["fallback"]

    def test_recursion_depth_bound(self):
        inst = dense_gnp()
        cfg = split_cfg(low_degree_threshold=40)
        log = PipelineLog()
        c = low_space_color_reduce(inst, cfg, None, None, log)
        assert verify_coloring(inst, c).valid
        assert all(chk == [] for chk in log.partition_checks)
        depth = max(t.depth for t in log.trace if t.kind == "partition") + 1
        # smallest r with D (2 n^-delta)^r <= mid threshold; here 2 n^-delta = 1/2
        r, d = 0, inst.graph.max_degree
        while d > 8:
            d, r = Fraction(d, 2), r + 1
        assert depth <= r

    def test_deterministic(self):
        inst = dense_gnp(seed=2)
        cfg = split_cfg(low_degree_threshold=40)
        a = low_space_color_reduce(inst, cfg).color
        b = low_space_color_reduce(inst, cfg).color
        assert np.array_equal(a, b)

    def test_tight_palettes_surface_no_valid_seed(self):
        # d' < p' has almost no slack once palettes are exactly d + 1
        with pytest.raises(NoValidSeed):
            low_space_color_reduce(dense_gnp(seed=2, deg=64), split_cfg(low_degree_threshold=40))

    @settings(max_examples=40, deadline=None)
    @given(instances(max_n=16))
    def test_valid_on_small_instances(self, inst):
        c = low_space_color_reduce(inst, RunConfig())
        assert verify_coloring(inst, c).valid


class TestMidDegree:
    def test_pure_fallback(self):
        inst = generate("hypercube", dim=5)
        sim = Simulator(MpcConfig.for_instance(RunConfig(), inst.n))
        log = PipelineLog()
        c = derandomized_mid_degree_color(inst, RunConfig(), sim, log=log)
        assert verify_coloring(inst, c).valid
        assert log.records == [] and log.trace[0].kind == "fallback"

    def test_k32_blocks_threshold_16(self):
        inst = blocks(32, 2)
        assert inst.palette_sizes.tolist() == [32] * 64
        cfg = RunConfig(low_degree_threshold=16, max_seed_bits=8)
        log = PipelineLog()
        a = derandomized_mid_degree_color(inst, cfg, log=log)
        b = derandomized_mid_degree_color(inst, cfg)
        assert verify_coloring(inst, a).valid
        assert np.array_equal(a.color, b.color)
        assert log.records


class TestFallback:
    def test_matching(self):
        inst = D1LCInstance.build(Graph.from_edges(6, [(0, 1), (2, 3), (4, 5)]))
        sim = Simulator(MpcConfig.for_instance(RunConfig(), 6))
        c = low_degree_fallback(inst, RunConfig(), sim)
        assert verify_coloring(inst, c).valid
        assert sim.stats.rounds_by_category.get("fallback", 0) >= 2

    def test_degree_too_high(self):
        with pytest.raises(DegreeTooHigh):
            low_degree_fallback(blocks(6, 1), RunConfig(), threshold=4)

    @given(instances(max_n=12))
    def test_any_instance_colored(self, inst):
        c = low_degree_fallback(inst, RunConfig(), threshold=max(inst.graph.max_degree, 1))
        assert verify_coloring(inst, c).valid

    def test_classes_bounded(self):
        inst = generate("gnp", seed=9, n=200, avg_degree=4)
        d = inst.graph.max_degree
        assert color_power_graph(inst.graph, distance=2).color_count <= d * d + 1
