import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regrasp.gp_table import (GPTable, TableNode, UnclassifiableConfig, UnknownNode, add_query_nodes, build_table,
                              edge_kind, export_table, import_table, match_relabeling)
from regrasp.object_gripper import GraspClass, PlacementParams, Table, approach_axis, object_pose_from_placement
from reference import FIG2_NODES, L_NODES, clear_by_oracle, resampled_clear


@pytest.fixture(scope="module")
def box_table(box, gripper):
    return build_table(box, gripper)


def test_box_table_matches_reference(box_table):
    assert len(box_table) == 14
    assert match_relabeling(box_table.nodes, FIG2_NODES) is not None


def test_l_table_matches_reference(lshape, gripper):
    t = build_table(lshape, gripper)
    assert len(t) == 24
    assert match_relabeling(t.nodes, L_NODES) is not None


def test_every_box_node_passes_oracle_and_no_node_is_missed(box, gripper, box_table):
    table = Table(size=(2.0, 2.0))
    for p in range(1, box_table.num_placement_classes + 1):
        for g in range(1, box_table.num_grasp_classes + 1):
            n = TableNode(p, g)
            assert (n in box_table) == clear_by_oracle(box, gripper, table, n)


def test_nodes_survive_random_resampling(box, lshape, gripper, rng):
    table = Table(size=(2.0, 2.0))
    for obj in (box, lshape):
        for n in build_table(obj, gripper).sorted_nodes():
            assert resampled_clear(obj, gripper, table, n, rng)


def test_no_approach_through_the_supporting_face(box, lshape, gripper):
    table = Table(size=(2.0, 2.0))
    for obj in (box, lshape):
        t = build_table(obj, gripper)
        for pc in obj.placement_classes:
            T = object_pose_from_placement(obj, pc.index, PlacementParams(0.0, 0.0, 0.0), table)
            for n in t.column(pc.index):
                gc = GraspClass.from_index(n.g)
                k, s = approach_axis(gc.i)
                # world direction of the face the gripper comes from
                face = T.R @ obj.box(gc.j).local_pose.R[:, k] * s
                assert face[2] > -1 + 1e-9


def test_edges_follow_shared_index(box_table):
    for a, b, kind in box_table.edges():
        assert kind == ("vertical" if a.p == b.p else "horizontal")
        assert (a.p == b.p) != (a.g == b.g)


def test_edge_kind():
    assert edge_kind(TableNode(1, 2), TableNode(1, 5)) == "vertical"
    assert edge_kind(TableNode(1, 2), TableNode(3, 2)) == "horizontal"
    assert edge_kind(TableNode(1, 2), TableNode(3, 4)) is None
    assert edge_kind(TableNode(1, 2), TableNode(1, 2)) is None
    # zero indices never connect through the zero
    assert edge_kind(TableNode(0, 2), TableNode(0, 3)) is None


def test_neighbors_of_unknown_node(box_table):
    with pytest.raises(UnknownNode):
        box_table.neighbors((9, 9))


def test_zero_zero_node_rejected():
    with pytest.raises(ValueError):
        GPTable(frozenset({(0, 0)}), 1, 6)


def test_query_nodes(box_table):
    t = add_query_nodes(box_table, (1, 0), (0, 3))
    assert (1, 0) in t and (0, 3) in t
    assert TableNode(1, 0) not in t.neighbors((0, 3))
    assert all(n.p == 1 for n in t.neighbors((1, 0)))
    assert all(n.g == 3 for n in t.neighbors((0, 3)))
    with pytest.raises(UnclassifiableConfig):
        add_query_nodes(box_table, (0, 0), (1, 1))


@pytest.mark.parametrize("fmt", ["json", "grid", "svg"])
def test_export_formats(box_table, fmt):
    text = export_table(box_table, fmt)
    assert text
    if fmt == "json":
        assert import_table(text) == box_table
        assert len(json.loads(text)["nodes"]) == 14
    if fmt == "grid":
        assert text.count("o") == 14
    if fmt == "svg":
        assert text.count("<circle") == 14


def test_unknown_export_format(box_table):
    with pytest.raises(ValueError):
        export_table(box_table, "xml")


@settings(max_examples=25, deadline=None)
@given(st.floats(-0.4, 0.4), st.floats(-0.4, 0.4), st.floats(-np.pi, np.pi), st.floats(0.0, 1.0))
def test_table_does_not_depend_on_location(box, gripper, box_table, x, y, theta, h):
    table = Table(center=(0.1, -0.2), size=(1.2, 1.2), height=h)
    nominal = PlacementParams(0.1 + x, -0.2 + y, theta)
    assert build_table(box, gripper, table, nominal).nodes == box_table.nodes


def test_relabeling_rejects_different_tables():
    assert match_relabeling({(1, 1), (1, 2)}, {(1, 1), (2, 2)}) is None
    assert match_relabeling({(1, 1)}, {(1, 1), (2, 2)}) is None
    m = match_relabeling({(1, 1), (2, 2)}, {(2, 1), (1, 2)})
    assert m is not None
