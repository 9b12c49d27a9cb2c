import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helploop.geometry import (
    Box,
    Obstacle,
    Pose6DoF,
    Sphere,
    collision_check,
    interpolate_poses,
    rotation_angle,
    segment_entry,
)
from helploop.motion import (
    Blocked,
    OutOfReach,
    StaleTrajectory,
    Trajectory,
    advance,
    execute_trajectory,
    plan_arm_motion,
    plan_base_path,
)
from conftest import make_object, make_state
from oracles import base_path_dense, first_dense_hit, sphere_hit_dense


def test_pose_normalizes_and_rejects():
    p = Pose6DoF((0, 0, 0), (2.0, 0, 0, 0))
    assert p.rotation == (1.0, 0.0, 0.0, 0.0)
    with pytest.raises(ValueError):
        Pose6DoF((math.nan, 0, 0))
    with pytest.raises(ValueError):
        Pose6DoF((0, 0, 0), (0, 0, 0, 0))


def test_rotation_about_local_z():
    p = Pose6DoF((1, 2, 3)).rotated_about_local_z(90)
    assert p.translation == (1.0, 2.0, 3.0)
    assert rotation_angle(p.rotation, (1, 0, 0, 0)) == pytest.approx(math.pi / 2)
    assert rotation_angle(p.rotated_about_local_z(-90).rotation, (1, 0, 0, 0)) == pytest.approx(0, abs=1e-9)


def test_collision_check_examples():
    ball = [Obstacle("ball", Sphere((0.0, 0.0, 0.0), 0.5))]
    assert collision_check((0, 0, 0), ball) == "ball"
    assert collision_check((10, 10, 0), ball) is None


def test_segment_vs_sphere_matches_dense_oracle():
    obstacle = [Obstacle("s", Sphere((1.0, 0.1, 0.0), 0.3))]
    expected = "s" if sphere_hit_dense((0, 0, 0), (2, 0, 0), (1.0, 0.1, 0.0), 0.3) else None
    assert expected == "s"
    assert collision_check((0, 0, 0), obstacle, (2, 0, 0)) == expected


def test_segment_entry_sphere_and_box_agree_with_sampling():
    rng = random.Random(5)
    for _ in range(200):
        a = np.array([rng.uniform(-2, 2) for _ in range(3)])
        b = np.array([rng.uniform(-2, 2) for _ in range(3)])
        c = np.array([rng.uniform(-1, 1) for _ in range(3)])
        shape = Sphere(tuple(c), rng.uniform(0.1, 0.6)) if rng.random() < 0.5 else Box(tuple(c - 0.3), tuple(c + 0.2))
        t = segment_entry(a, b, shape, 0.05)
        ts = np.linspace(0, 1, 4001)
        inside = [shape.distance(a + s * (b - a)) <= 0.05 for s in ts]
        if t is None:
            assert not any(inside)
        else:
            assert shape.distance(a + t * (b - a)) <= 0.05 + 1e-9
            first = next((s for s, hit in zip(ts, inside) if hit), None)
            if first is not None:
                assert t <= first + 1e-9


def test_base_path_examples():
    s = make_state()
    traj = plan_base_path(s, (0, 0))
    assert isinstance(traj, Trajectory) and len(traj.waypoints) == 1 and traj.total_length == 0
    traj = plan_base_path(s, (2, 0))
    assert traj.total_length == pytest.approx(2.0, abs=1e-9)
    assert traj.waypoints[0] == (0.0, 0.0, 0.0) and traj.waypoints[-1][:2] == (2.0, 0.0)
    steps = [math.dist(p[:2], q[:2]) for p, q in zip(traj.waypoints, traj.waypoints[1:])]
    assert max(steps) <= 0.1 + 1e-12


def test_base_path_blocked_matches_oracle():
    s = make_state(make_object("ball", "ball", (1, 0, 0), {"sphere": 0.3}))
    result = plan_base_path(s, (2, 0))
    oracle = base_path_dense((0, 0), (2, 0), [("ball", {"sphere": 0.3}, (1, 0, 0))], 0.35)
    assert oracle == ["ball"]
    assert isinstance(result, Blocked) and result.obstacle_id == "ball"
    # the disc first touches the ball when its centre is 0.65 m from the ball's centre
    assert result.blocking_point[0] == pytest.approx(1 - 0.65, abs=1e-6)


def _random_scene(rng):
    objects = []
    for i in range(rng.randint(0, 4)):
        center = (rng.uniform(-3, 3), rng.uniform(-3, 3), rng.uniform(-0.5, 1.0))
        if rng.random() < 0.5:
            geometry = {"sphere": round(rng.uniform(0.1, 0.8), 3)}
        else:
            geometry = {"box": [round(rng.uniform(0.05, 0.6), 3) for _ in range(3)]}
        objects.append(make_object(f"o{i}", "thing", center, geometry))
    start = (rng.uniform(-3, 3), rng.uniform(-3, 3))
    target = (rng.uniform(-3, 3), rng.uniform(-3, 3))
    return objects, start, target


def oracle_scene(objects):
    return [(o.id, o.geometry, o.pose.translation) for o in objects]


def test_base_path_random_scenes_agree_with_dense_oracle():
    rng = random.Random(99)
    for _ in range(100):
        objects, start, target = _random_scene(rng)
        s = make_state(*objects, base=start)
        result = plan_base_path(s, target)
        hits = base_path_dense(start, target, oracle_scene(objects), 0.35)
        if isinstance(result, Blocked):
            assert hits, "planner blocked where the oracle found no contact"
            assert result.obstacle_id == first_dense_hit(start, target, oracle_scene(objects), 0.35)
        else:
            assert hits == []
            pts = [w[:2] for w in result.waypoints]
            assert base_path_dense(pts[0], pts[-1], oracle_scene(objects), 0.35) == []


def test_execute_base_trajectory_advances_clock():
    s = make_state()
    traj = plan_base_path(s, (2, 0))
    # independent length: sum of waypoint segment lengths
    summed = sum(math.dist(p[:2], q[:2]) for p, q in zip(traj.waypoints, traj.waypoints[1:]))
    out = execute_trajectory(s, traj)
    assert out.clock - s.clock == pytest.approx(summed / 0.5) == pytest.approx(4.0)
    assert out.agent.base == (2.0, 0.0)
    assert out.event_log[-1].kind == "moved"


def test_execute_single_waypoint_only_logs_event():
    s = make_state(make_object("cup", "cup", (1, 1, 0.8)))
    out = execute_trajectory(s, plan_base_path(s, s.agent.base))
    assert out.clock == s.clock
    assert out.objects == s.objects and out.agent == s.agent
    assert len(out.event_log) == 1 and out.event_log[0].kind == "moved"


def test_stale_trajectory():
    s = make_state()
    traj = plan_base_path(s, (1, 0))
    moved = make_state(base=(0.5, 0))
    with pytest.raises(StaleTrajectory):
        execute_trajectory(moved, traj)
    arm = plan_arm_motion(s, Pose6DoF((0.5, 0.1, 0.5)))
    with pytest.raises(StaleTrajectory):
        advance(make_state(ee=(0.2, 0, 0.6)), arm)


def test_replanning_at_goal_is_idempotent():
    s = make_state()
    out = execute_trajectory(s, plan_base_path(s, (1.3, -0.7)))
    again = plan_base_path(out, (1.3, -0.7))
    assert again.total_length == 0 and len(again.waypoints) == 1


def test_arm_examples():
    s = make_state()
    same = plan_arm_motion(s, s.agent.end_effector)
    assert isinstance(same, Trajectory) and len(same.waypoints) == 1
    far = plan_arm_motion(s, Pose6DoF((5, 0, 0.5)))
    assert isinstance(far, OutOfReach) and far.reach == 0.9
    target = Pose6DoF((0.6, 0.3, 0.4)).rotated_about_local_z(120)
    traj = plan_arm_motion(s, target)
    assert traj.waypoints[0] == s.agent.end_effector
    assert np.allclose(traj.waypoints[-1].rotation, target.rotation, atol=1e-6)
    assert np.allclose(traj.waypoints[0].rotation, s.agent.end_effector.rotation, atol=1e-6)
    gaps = [np.linalg.norm(p.position - q.position) for p, q in zip(traj.waypoints, traj.waypoints[1:])]
    assert max(gaps) <= 0.1 + 1e-12


def test_arm_blocked_and_exclusions():
    wall = make_object("wall", "wall", (0.5, 0, 0.6), {"box": [0.02, 0.5, 0.5]})
    s = make_state(wall)
    target = Pose6DoF((0.8, 0, 0.6))
    assert isinstance(plan_arm_motion(s, target), Blocked)
    assert isinstance(plan_arm_motion(s, target, exclude={"wall"}), Trajectory)


@settings(max_examples=100, deadline=None)
@given(
    st.tuples(*[st.floats(-1, 1) for _ in range(3)]),
    st.floats(-180, 180),
    st.integers(1, 12),
)
def test_interpolation_endpoints_and_unit_norm(xyz, deg, n):
    start = Pose6DoF((0.1, 0.2, 0.3)).rotated_about_local_z(10)
    end = Pose6DoF(xyz).rotated_about_local_z(deg)
    poses = interpolate_poses(start, end, n)
    assert len(poses) == n + 1
    assert poses[0] == start and poses[-1] == end
    for p in poses:
        assert abs(np.linalg.norm(p.rotation) - 1) < 1e-6
