import itertools

import pytest
from hypothesis import given, settings, strategies as st

from regrasp.gp_table import GPTable, TableNode, UnknownNode, edge_kind
from regrasp.task_plans import (Disconnected, MixedPlanLengths, TaskPlan, UnknownEdge, build_guidance_graph,
                                plans_of_length, shortest_plan_length)
from reference import FIG2_NODES, FIG2_PLANS

FIG2 = GPTable(frozenset(FIG2_NODES), 6, 6)


def brute_force_plans(table, k, a, b):
    """Every simple node sequence of k edges from a to b with alternating edge kinds."""
    out = []
    nodes = table.sorted_nodes()
    for mid in itertools.product(nodes, repeat=k - 1):
        seq = (TableNode(*a),) + mid + (TableNode(*b),)
        if len(set(seq)) != len(seq):
            continue
        kinds = [edge_kind(u, v) for u, v in zip(seq, seq[1:])]
        if None in kinds or any(x == y for x, y in zip(kinds, kinds[1:])):
            continue
        out.append(seq)
    return sorted(out)


def test_worked_example():
    assert shortest_plan_length(FIG2, (6, 6), (2, 2)) == 3
    plans = plans_of_length(FIG2, 3, (6, 6), (2, 2))
    assert [p.nodes for p in plans] == sorted(FIG2_PLANS)


@pytest.mark.parametrize("k", [1, 2, 3, 4])
def test_plans_match_brute_force(k):
    for a, b in itertools.permutations(sorted(FIG2_NODES), 2):
        got = [p.nodes for p in plans_of_length(FIG2, k, a, b)]
        assert got == brute_force_plans(FIG2, k, a, b)


def test_shortest_length_is_bfs_distance():
    for a, b in itertools.permutations(sorted(FIG2_NODES), 2):
        k = shortest_plan_length(FIG2, a, b)
        assert plans_of_length(FIG2, k, a, b)
        assert all(not plans_of_length(FIG2, j, a, b) for j in range(k))


def test_same_node_has_length_zero():
    assert shortest_plan_length(FIG2, (1, 1), (1, 1)) == 0
    assert [p.nodes for p in plans_of_length(FIG2, 0, (1, 1), (1, 1))] == [((1, 1),)]


def test_disconnected_and_unknown():
    t = GPTable(frozenset({(1, 1), (2, 2)}), 2, 6)
    with pytest.raises(Disconnected):
        shortest_plan_length(t, (1, 1), (2, 2))
    with pytest.raises(UnknownNode):
        shortest_plan_length(t, (1, 1), (3, 3))
    assert plans_of_length(t, 2, (1, 1), (2, 2)) == []


def test_plan_edges_alternate():
    for p in plans_of_length(FIG2, 5, (6, 6), (2, 2)):
        kinds = p.edge_kinds()
        assert all(x != y for x, y in zip(kinds, kinds[1:]))


def test_guidance_graph_of_worked_example():
    q = build_guidance_graph(plans_of_length(FIG2, 3, (6, 6), (2, 2)))
    assert q.k == 3
    assert q.start == (0, (6, 6)) and q.goal == (3, (2, 2))
    assert len(q.nodes) == 6
    assert len(q.edges) == 6
    assert q.has_path()
    assert [p.nodes for p in q.level_paths()] == sorted(FIG2_PLANS)


def test_removing_edges_prunes_dead_branches():
    q = build_guidance_graph(plans_of_length(FIG2, 3, (6, 6), (2, 2)))
    q.remove_edge(((1, (1, 6)), (2, (1, 2))))
    # the whole (1,6) branch is gone
    assert (1, TableNode(1, 6)) not in q.nodes and (2, TableNode(1, 2)) not in q.nodes
    assert [p.nodes for p in q.level_paths()] == [FIG2_PLANS[1]]
    q.remove_edge(((0, (6, 6)), (1, (4, 6))))
    assert not q.has_path()
    with pytest.raises(UnknownEdge):
        q.remove_edge(((0, (6, 6)), (1, (4, 6))))


def test_failure_threshold():
    q = build_guidance_graph(plans_of_length(FIG2, 3, (6, 6), (2, 2)))
    e = ((2, TableNode(4, 2)), (3, TableNode(2, 2)))
    for _ in range(3):
        q.record_failure(e)
    assert q.remove_infeasible_edges(3) == []
    q.record_failure(e)
    assert q.remove_infeasible_edges(3) == [e]
    assert [p.nodes for p in q.level_paths()] == [FIG2_PLANS[0]]


def test_mixed_lengths_rejected():
    a = TaskPlan(((6, 6), (1, 6), (1, 2), (2, 2)))
    b = TaskPlan(((6, 6), (4, 6), (4, 4), (4, 2), (2, 2)))
    with pytest.raises(MixedPlanLengths):
        build_guidance_graph([a, b])


def test_empty_guidance_graph():
    assert not build_guidance_graph([]).has_path()


@settings(max_examples=60, deadline=None)
@given(st.sets(st.tuples(st.integers(1, 4), st.integers(1, 6)), min_size=2, max_size=14), st.data())
def test_random_tables(nodes, data):
    t = GPTable(frozenset(nodes), 4, 6)
    ns = t.sorted_nodes()
    a, b = data.draw(st.sampled_from(ns)), data.draw(st.sampled_from(ns))
    try:
        k = shortest_plan_length(t, a, b)
    except Disconnected:
        return
    for j in range(k, min(k + 2, 5)):
        plans = plans_of_length(t, j, a, b)
        if j > 0:
            assert [p.nodes for p in plans] == brute_force_plans(t, j, a, b)
        if plans:
            q = build_guidance_graph(plans)
            walks = {p.nodes for p in q.level_paths()}
            # merging plans level by level can add walks, never lose a plan
            assert {p.nodes for p in plans} <= walks
            for w in walks:
                assert len(w) == j + 1 and w[0] == a and w[-1] == b
                assert all(edge_kind(u, v) for u, v in zip(w, w[1:]))
