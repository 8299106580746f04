import numpy as np
import pytest

from palette_mpc.config import RunConfig
from palette_mpc.graph import D1LCInstance, Graph
from palette_mpc.mpc import (
    InsufficientGlobalSpace,
    MpcConfig,
    ReceiveOverflow,
    SendOverflow,
    Simulator,
    SpaceExceeded,
    assign_machines,
    ball_words,
    bfs_ball,
)


def path(n):
    return D1LCInstance.build(Graph.from_edges(n, [(i, i + 1) for i in range(n - 1)]))


def cfg_for(n, space_constant=1, machines=0):
    return MpcConfig.for_instance(RunConfig(space_constant=space_constant, machine_count=machines), n)


def test_space_for_sixteen_nodes():
    cfg = cfg_for(16)
    assert cfg.local_space_words == 4
    # a degree-3 node fits on one machine
    star = D1LCInstance.build(Graph.from_edges(16, [(0, 1), (0, 2), (0, 3)]))
    pl = assign_machines(star, cfg)
    assert pl.machine_words.max() <= 4
    assert pl.machine_words[pl.node_machine[0]] >= 3


def test_placement_deterministic_and_within_budget():
    inst = path(40)
    cfg = cfg_for(40, space_constant=2)
    a, b = assign_machines(inst, cfg), assign_machines(inst, cfg)
    assert np.array_equal(a.node_machine, b.node_machine)
    assert a.machine_words.max() <= cfg.local_space_words
    assert a.machine_words.sum() == 2 * inst.graph.m


def test_oversized_node_spans_machines():
    star = D1LCInstance.build(Graph.from_edges(16, [(0, i) for i in range(1, 16)]))
    pl = assign_machines(star, cfg_for(16))
    assert pl.machine_words.max() <= 4 and pl.machine_words.sum() == 30


def test_insufficient_global_space():
    inst = D1LCInstance.build(Graph.from_edges(6, [(i, j) for i in range(6) for j in range(i + 1, 6)]))
    with pytest.raises(InsufficientGlobalSpace):
        assign_machines(inst, cfg_for(6, machines=2))


def test_exchange_orders_by_destination_then_source():
    sim = Simulator(cfg_for(16))
    order = sim.exchange(np.array([3, 1, 2, 1]), np.array([0, 0, 1, 0]), payload=np.arange(4))
    assert order.tolist() == [1, 3, 0, 2]
    assert sim.stats.rounds_elapsed == 1 and sim.stats.total_messages == 4


def test_send_and_receive_overflow():
    sim = Simulator(cfg_for(16))
    with pytest.raises(SendOverflow):
        sim.exchange(np.zeros(5, np.int64), np.arange(5))
    with pytest.raises(ReceiveOverflow):
        sim.exchange(np.arange(5), np.zeros(5, np.int64))


def test_transcript_is_deterministic():
    def run():
        sim = Simulator(cfg_for(16))
        sim.exchange(np.array([1, 2]), np.array([2, 1]), payload=np.array([7, 8]))
        sim.charge("x", 2)
        return sim.transcript_digest(), sim.account()

    (d1, s1), (d2, s2) = run(), run()
    assert d1 == d2 and s1 == s2 and s1.rounds_elapsed == 3


def test_primitives_charge_sort_rounds():
    sim = Simulator(cfg_for(16), sort_rounds=3)
    out = sim.global_sort(np.array([3, 1, 2]))
    assert out.tolist() == [1, 2, 3]
    assert sim.aggregate(np.array([[1, 2], [3, 4]])).tolist() == [4, 6]
    assert sim.stats.rounds_elapsed == 6
    assert sim.stats.primitive_invocations == {"sort": 1, "aggregate": 1}


def test_collect_ball_space_checks():
    inst = path(9)
    sim = Simulator(cfg_for(9, space_constant=20))
    balls = sim.collect_ball(inst, [4], 2)
    assert balls[4].labels.tolist() == [2, 3, 4, 5, 6]
    # 5 nodes, 8 adjacency entries, 5 palettes of size 3
    assert ball_words(balls[4]) == 5 + 8 + 15
    small = Simulator(cfg_for(9, space_constant=1))
    with pytest.raises(SpaceExceeded):
        small.collect_ball(inst, [4], 2)


def test_bfs_ball():
    g = path(6).graph
    assert bfs_ball(g, 0, 2).tolist() == [0, 1, 2]
    assert bfs_ball(g, 3, 0).tolist() == [3]


def test_hold_over_budget():
    sim = Simulator(cfg_for(16))
    sim.hold(4)
    with pytest.raises(SpaceExceeded):
        sim.hold(5)
    assert sim.stats.peak_words_per_machine == 4
