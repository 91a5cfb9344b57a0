import json

import pytest
from hypothesis import given, settings

from owlbench import bruteforce as oracles
from conftest import complete, cycle, graphs, path
from owlbench.graph import GraphGenParams, generate, new_graph
from owlbench.tasks import (
    DISTANCE_BINS,
    NO_PATH,
    ConstraintError,
    Constraints,
    Query,
    TaskError,
    TaskInstance,
    count_triangles,
    distance_bin,
    make_instances,
    max_flow_unit,
    node_on_cycle,
    reachable,
    shortest_path_len,
    validate_instance,
)


def test_triangles():
    assert count_triangles(complete(3)) == 1
    assert count_triangles(complete(4)) == oracles.triangles_by_triples(4, complete(4).edges) == 4
    assert count_triangles(path(5)) == 0


def test_node_on_cycle():
    assert node_on_cycle(cycle(4), 0)
    assert not node_on_cycle(path(5), 2)


def test_cycle_figure_node7(cycle_figure_graph):
    g = cycle_figure_graph
    assert node_on_cycle(g, 7)
    assert oracles.on_cycle_exhaustive(g.n, g.edges, 7)


def test_node_on_cycle_bridge_between_cycles():
    # two triangles joined by the bridge 2-3; node 6 hangs off node 5
    g = new_graph(7, [(0, 1), (1, 2), (0, 2), (2, 3), (3, 4), (4, 5), (3, 5), (5, 6)])
    assert [node_on_cycle(g, v) for v in range(7)] == [True] * 6 + [False]


def test_reachable():
    assert reachable(path(3), 0, 2)
    assert not reachable(new_graph(4, [(0, 1), (2, 3)]), 0, 3)
    assert all(reachable(complete(4), s, t) for s in range(4) for t in range(4) if s != t)


def test_shortest_path():
    assert shortest_path_len(path(3), 0, 2) == 2
    assert shortest_path_len(new_graph(4, [(0, 1), (2, 3)]), 0, 3) is NO_PATH


def test_figure_pair(maxflow_figure_graph):
    g = maxflow_figure_graph
    assert shortest_path_len(g, 2, 9) == oracles.floyd_warshall(g.n, g.edges)[2][9] == 3
    assert max_flow_unit(g, 2, 9) == oracles.min_edge_cut(g.n, g.edges, 2, 9) == 2


def test_max_flow():
    assert max_flow_unit(complete(4), 0, 3) == oracles.min_edge_cut(4, complete(4).edges, 0, 3) == 3
    assert max_flow_unit(path(5), 0, 4) == 1
    assert max_flow_unit(new_graph(4, [(0, 1), (2, 3)]), 0, 3) == 0


@pytest.mark.parametrize("fn", [reachable, shortest_path_len, max_flow_unit])
def test_pair_oracles_reject_bad_pairs(fn):
    with pytest.raises(TaskError):
        fn(path(3), 1, 1)
    with pytest.raises(TaskError):
        fn(path(3), 0, 3)


@given(graphs(max_n=8))
@settings(max_examples=150, deadline=None)
def test_oracles_match_brute_force(g):
    assert count_triangles(g) == oracles.triangles_by_triples(g.n, g.edges)
    fw = oracles.floyd_warshall(g.n, g.edges)
    deg = g.degrees()
    for v in range(g.n):
        assert node_on_cycle(g, v) == oracles.on_cycle_exhaustive(g.n, g.edges, v)
    for s in range(g.n):
        for t in range(g.n):
            if s == t:
                continue
            sp = shortest_path_len(g, s, t)
            assert (sp is NO_PATH) == (fw[s][t] == oracles.INF)
            if sp is not NO_PATH:
                assert sp == fw[s][t]
            assert sp == shortest_path_len(g, t, s)
            assert reachable(g, s, t) == oracles.union_find_connected(g.n, g.edges, s, t)
            flow = max_flow_unit(g, s, t)
            assert flow == oracles.min_edge_cut(g.n, g.edges, s, t)
            assert flow == max_flow_unit(g, t, s)
            assert flow <= min(deg[s], deg[t])


# -- instances ---------------------------------------------------------------

def test_distance_bins():
    assert DISTANCE_BINS == ((10, 15), (16, 25), (26, 40), (41, None))
    assert distance_bin(9) is None
    assert distance_bin(10) == "10-15"
    assert distance_bin(25) == "16-25"
    assert distance_bin(41) == "41+"
    assert distance_bin(None) is None


def test_shortest_path_far_bin_on_path_graph():
    g = path(50)
    insts = make_instances([(g, {"graph_type": "path"})], "shortest_path", 6,
                           Constraints(distance_bins=((41, None),)), seed=3)
    for inst in insts:
        s, t = inst.query.pair
        assert abs(s - t) >= 41
        assert inst.truth == abs(s - t) == inst.meta["distance"]
        assert inst.meta["distance_bin"] == "41+"


def test_bins_fill_round_robin():
    g = path(60)
    insts = make_instances([(g, {})], "max_flow", 8, Constraints(distance_bins=DISTANCE_BINS), seed=1)
    assert [i.meta["distance_bin"] for i in insts] == ["10-15", "16-25", "26-40", "41+"] * 2
    assert all(i.truth == 1 for i in insts)


def test_triangle_instances_have_no_query():
    insts = make_instances([(complete(4), {})], "triangle_count", 2, seed=0)
    assert all(i.query == Query() and i.query.to_json() is None for i in insts)
    assert all(i.truth == 4 for i in insts)


def test_unsatisfiable_diameter():
    g = path(5)
    with pytest.raises(ConstraintError, match="min_diameter=10"):
        make_instances([(g, {})], "shortest_path", 1, Constraints(min_diameter=10), seed=0)


def test_pair_constraints_rejected_for_node_tasks():
    with pytest.raises(TaskError):
        make_instances([(path(5), {})], "cycle_check", 1, Constraints(require_connected_pair=True))


def test_connected_pair_constraint():
    g = new_graph(6, [(0, 1), (1, 2), (3, 4), (4, 5)])
    insts = make_instances([(g, {})], "reachability", 20, Constraints(require_connected_pair=True), seed=2)
    assert all(i.truth is True for i in insts)


def test_make_instances_deterministic():
    gs = [(generate(GraphGenParams("erdos_renyi", 12, p=0.3, seed=s)), {"seed": s}) for s in range(4)]
    a = [i.dumps() for i in make_instances(gs, "max_flow", 10, seed=9)]
    b = [i.dumps() for i in make_instances(gs, "max_flow", 10, seed=9)]
    c = [i.dumps() for i in make_instances(gs, "max_flow", 10, seed=10)]
    assert a == b
    assert a != c


def test_node_classification_withholds_target():
    g = path(4)
    insts = make_instances([(g, {"node_labels": ["A", "B", "A", "C"]})], "node_classification", 5, seed=0)
    for inst in insts:
        v = inst.query.node
        assert inst.truth == ["A", "B", "A", "C"][v]
        assert inst.meta["node_labels"][v] is None
        assert inst.meta["label_set"] == ["A", "B", "C"]
        validate_instance(inst)


def test_instance_json_round_trip():
    g = new_graph(4, [(0, 1), (2, 3)])
    inst = make_instances([(g, {})], "shortest_path", 10, seed=4)
    for i in inst:
        obj = json.loads(i.dumps())
        back = TaskInstance.from_json(obj)
        assert back.dumps() == i.dumps()
    assert any(i.truth is NO_PATH for i in inst)
    assert any(json.loads(i.dumps())["truth"] == "inf" for i in inst)


def test_load_rejects_tampered_truth():
    inst = make_instances([(path(5), {})], "shortest_path", 1, seed=0)[0]
    obj = json.loads(inst.dumps())
    obj["truth"] += 1
    with pytest.raises(TaskError):
        TaskInstance.from_json(obj)
    obj = json.loads(inst.dumps())
    obj["meta"]["distance"] = 99
    with pytest.raises(TaskError):
        TaskInstance.from_json(obj)
