"""Build grasp-placement tables for a box and an L-shaped object and walk the task plans.

Run: python demos/table_tour.py
"""
from regrasp.geometry import Box, Transform
from regrasp.gp_table import TableNode, add_query_nodes, build_table, export_table
from regrasp.object_gripper import GripperModel, ObjectModel, box_object
from regrasp.task_plans import build_guidance_graph, plans_of_length, shortest_plan_length

gripper = GripperModel()

# A plain box: each placement keeps the grasps whose gripper stays clear of the table.
box = box_object([0.06, 0.04, 0.03])
table = build_table(box, gripper)
print(f"box: {len(table.nodes)} nodes")
print(export_table(table, "grid"))

# Query endpoints resting on the table without a grasp enter as (p, 0) nodes.
start, goal = TableNode(1, 0), TableNode(3, 0)
table = add_query_nodes(table, start, goal)
k = shortest_plan_length(table, start, goal)
plans = plans_of_length(table, k, start, goal)
print(f"shortest plans from {tuple(start)} to {tuple(goal)} use {k} edges:")
for plan in plans:
    print("  ", " -> ".join(str(tuple(n)) for n in plan.nodes))

# Odd-length detours do not exist here; the next plans are two edges longer.
for extra in (2, 4):
    longer = plans_of_length(table, k + extra, start, goal)
    g = build_guidance_graph(longer)
    print(f"{len(longer)} plans with {k + extra} edges, guidance graph of {len(g.nodes)} vertices")

# Two boxes glued into an L.
a, b, w = 0.2, 0.08, 0.025
l_obj = ObjectModel((
    Box([a / 2, w / 2, w / 2], Transform.from_translation([a / 2, w / 2, w / 2])),
    Box([w / 2, b / 2, w / 2], Transform.from_translation([a - w / 2, w + b / 2, w / 2])),
), "L")
lt = build_table(l_obj, gripper)
print(f"\nL: {len(l_obj.placement_classes)} stable placements, {len(lt.nodes)} nodes")
print(export_table(lt, "grid"))
