import numpy as np
import pytest

from regrasp.geometry import Transform, obb_overlap
from regrasp.kinematics import (DimensionMismatch, JointLimit, RobotModel, WorldModel, collision_free, collisions,
                                edge_samples, fk, ik, jacobian, joint_frames, load_robot, pose_error)
from regrasp.object_gripper import Table
from regrasp.paths import CompositeConfig
from reference import fk_oracle


@pytest.fixture(scope="module")
def world(robot, gripper, box):
    return WorldModel(robot, gripper, Table(center=(0.3, 0.0), size=(1.2, 1.0)), box)


def test_fk_matches_product_of_exponentials(robot, rng):
    for q in robot.random_q(rng, 100):
        assert np.max(np.abs(fk(robot, q).matrix() - fk_oracle(robot, q))) < 1e-9


def test_jacobian_matches_finite_differences(robot, rng):
    h = 1e-6
    for q in robot.random_q(rng, 20):
        q = np.clip(q, robot.lower + 2 * h, robot.upper - 2 * h)
        J = jacobian(robot, q)
        num = np.zeros_like(J)
        for i in range(robot.n):
            dq = np.zeros(robot.n)
            dq[i] = h
            Tp, Tm = fk(robot, q + dq), fk(robot, q - dq)
            num[:3, i] = (Tp.translation - Tm.translation) / (2 * h)
            dR = (Tp.R - Tm.R) / (2 * h) @ fk(robot, q).R.T
            num[3:, i] = [dR[2, 1], dR[0, 2], dR[1, 0]]
        assert np.linalg.norm(J - num) <= 1e-5 * np.linalg.norm(J)


def test_ik_round_trip(robot, rng):
    # the full 100-target run lives in the acceptance suite
    ok = 0
    for q0 in robot.random_q(rng, 20):
        target = fk(robot, q0)
        sols = ik(robot, target, seeds=16, rng=rng)
        if sols:
            dp, dr = pose_error(robot, sols[0], target)
            assert dp < 1e-4 and dr < 1e-3
            ok += 1
    assert ok >= 19


def test_ik_with_initial_guess_stays_close(robot, rng):
    q0 = robot.random_q(rng)
    sols = ik(robot, fk(robot, q0), seeds=4, rng=rng, q_init=q0 + 0.01)
    assert sols and np.max(np.abs(sols[0] - q0)) < 0.05


def test_unreachable_target_gives_no_solution(robot, rng):
    assert ik(robot, Transform.from_translation([10.0, 0, 0]), seeds=4, rng=rng, max_iter=50) == []


def test_limits_and_dimensions(robot):
    with pytest.raises(DimensionMismatch):
        fk(robot, np.zeros(robot.n + 1))
    with pytest.raises(JointLimit):
        fk(robot, robot.upper + 0.1)


def test_robot_round_trip(robot, rng):
    again = RobotModel.from_dict(robot.to_dict())
    q = robot.random_q(rng)
    assert fk(again, q).isclose(fk(robot, q), 1e-12)


def test_load_robot_from_file(robot, tmp_path):
    import json
    p = tmp_path / "r.json"
    p.write_text(json.dumps(robot.to_dict()))
    assert load_robot(p).n == robot.n


def _body_points(world, q, opening):
    Rs, ps = joint_frames(world.robot, q)
    pts = []
    for i, b in enumerate(world.robot.link_boxes):
        pts.append(b.corners(Transform.from_rt(Rs[0, i], ps[0, i])))
    tool = Transform.from_rt(Rs[0, -1], ps[0, -1])
    pts += [b.corners(tool) for b in world.gripper.boxes(opening)]
    return np.concatenate(pts)


def test_step_bound_is_conservative(world, rng):
    w = world.gripper.max_opening
    for _ in range(50):
        q = world.robot.random_q(rng)
        dq = rng.normal(size=world.robot.n) * 0.05
        qb = np.clip(q + dq, world.robot.lower, world.robot.upper)
        moved = np.linalg.norm(_body_points(world, qb, w) - _body_points(world, q, w), axis=1).max()
        assert moved <= world.step_bound(qb - q, "transit") + 1e-12


def test_edge_samples_respect_resolution(world, rng):
    qa, qb = world.robot.random_q(rng), world.robot.random_q(rng)
    qs = edge_samples(world, qa, qb, "transit", 0.01)
    assert np.allclose(qs[0], qa) and np.allclose(qs[-1], qb)
    for a, b in zip(qs, qs[1:]):
        assert world.step_bound(b - a, "transit") <= 0.01 + 1e-12


def test_home_is_collision_free(world, box_scene):
    assert collision_free(world, box_scene.start, "transit")


def test_static_collisions_are_reported(world, rng):
    """Any link or gripper box that overlaps the table must flag the configuration."""
    far = Transform.from_translation([5.0, 5.0, 0.0])
    robot, g = world.robot, world.gripper
    hits = 0
    for q in robot.random_q(rng, 200):
        Rs, ps = joint_frames(robot, q)
        boxes = [(b, Transform.from_rt(Rs[0, i], ps[0, i])) for i, b in enumerate(robot.link_boxes)]
        tool = Transform.from_rt(Rs[0, -1], ps[0, -1])
        boxes += [(b, tool) for b in g.boxes(g.max_opening)]
        oracle = any(obb_overlap(b, T, world.table.box, world.table.pose) for b, T in boxes)
        got = collisions(world, q, "transit", object_pose=far)[0]
        if oracle:
            hits += 1
            assert got
    assert hits > 0


def test_transfer_needs_grasp(world, robot):
    with pytest.raises(ValueError):
        collisions(world, robot.home, "transfer")
    with pytest.raises(ValueError):
        collisions(world, robot.home, "transit")


def test_out_of_limits_config_is_not_free(world, robot):
    c = CompositeConfig(robot.upper + 0.5, Transform())
    assert not collision_free(world, c, "transit")
