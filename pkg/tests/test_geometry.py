import math
import os
import sys

import numpy as np
import pytest
from scipy.optimize import linprog
from scipy.spatial import ConvexHull

# Add the project root to the path so we can import our modules
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.trailer_planner.errors import ScenarioError
from src.trailer_planner.geometry.collision import (
    Environment,
    FootprintDims,
    footprint_at,
    footprint_corners,
    polygon_is_convex,
    rects_overlap_polygon,
    state_in_collision,
    trajectory_collision_free,
)
from src.trailer_planner.vehicle.model import ReducedState, Trajectory, integrate_interval, lift, se2_transform


def _square(cx, cy, half):
    return np.array([[cx - half, cy - half], [cx + half, cy - half], [cx + half, cy + half], [cx - half, cy + half]])


@pytest.fixture
def fp():
    return FootprintDims()


def test_footprint_straight_rig_extent(params, fp):
    rects = footprint_at(lift(ReducedState(0.0, 0.0, 0.0, 0.0), params), params, fp)
    corners = np.concatenate([r.corners() for r in rects])
    assert corners[:, 0].min() == pytest.approx(-6.6)
    assert corners[:, 0].max() == pytest.approx(2.9)
    assert corners[:, 1].min() == pytest.approx(-1.0)
    assert corners[:, 1].max() == pytest.approx(1.0)


def test_footprint_rotates_with_heading(params, fp):
    rects = footprint_at(lift(ReducedState(0.0, 0.0, math.pi / 2, 0.0), params), params, fp)
    corners = np.concatenate([r.corners() for r in rects])
    assert corners[:, 1].min() == pytest.approx(-6.6)
    assert corners[:, 1].max() == pytest.approx(2.9)
    assert all(r.heading == pytest.approx(math.pi / 2) for r in rects)


def test_convexity_check():
    convex, orientation = polygon_is_convex(_square(0, 0, 1))
    assert convex and orientation > 0
    convex, orientation = polygon_is_convex(_square(0, 0, 1)[::-1])
    assert convex and orientation < 0
    dart = np.array([[0, 0], [2, 1], [0, 2], [1, 1]], dtype=float)
    assert not polygon_is_convex(dart)[0]


def test_environment_rejects_non_convex_and_reorders_clockwise():
    dart = np.array([[0, 0], [2, 1], [0, 2], [1, 1]], dtype=float)
    with pytest.raises(ScenarioError):
        Environment((0, 10, 0, 10), [dart])
    env = Environment((0, 10, 0, 10), [_square(5, 5, 1)[::-1]])
    assert polygon_is_convex(env.obstacles[0])[1] > 0


def test_environment_rejects_degenerate_bounds():
    with pytest.raises(ScenarioError):
        Environment((5, 5, 0, 10))


def test_touching_is_not_overlap():
    rect = _square(0, 0, 1)[None]
    assert not rects_overlap_polygon(rect, _square(2, 0, 1))[0]
    assert rects_overlap_polygon(rect, _square(1.99, 0, 1))[0]
    assert rects_overlap_polygon(rect, _square(2, 0, 1), margin=0.05)[0]


def test_state_collision_with_obstacle_and_bounds(params):
    state = lift(ReducedState(10.0, 10.0, 0.0, 0.0), params)
    assert not state_in_collision(state, Environment((0, 30, 0, 20)), params)
    # Last trailer reaches back to x = 3.4
    assert state_in_collision(state, Environment((5, 30, 0, 20)), params)
    assert state_in_collision(state, Environment((0, 30, 0, 20), [_square(5.0, 10.0, 0.5)]), params)
    assert not state_in_collision(state, Environment((0, 30, 0, 20), [_square(5.0, 14.0, 0.5)]), params)


def test_margin_inflates_obstacles(params):
    state = lift(ReducedState(10.0, 10.0, 0.0, 0.0), params)
    # Obstacle edge 0.05 m from the rig side
    obstacle = _square(8.0, 11.55, 0.5)
    assert not state_in_collision(state, Environment((0, 30, 0, 20), [obstacle], margin=0.0), params)
    assert state_in_collision(state, Environment((0, 30, 0, 20), [obstacle], margin=0.1), params)


def test_densified_check_catches_obstacle_between_samples(params):
    start = np.asarray(lift(ReducedState(10.0, 10.0, 0.0, 0.0), params))
    end = integrate_interval(start, (1.0, 0.0), 20.0, params)
    traj = Trajectory(np.array([start, end]), np.array([[1.0, 0.0]]), np.array([20.0]))
    env = Environment((0, 60, 0, 20), [_square(20.0, 10.0, 0.5)])
    assert not state_in_collision(start, env, params)
    assert not state_in_collision(end, env, params)

    report = trajectory_collision_free(traj, env, params)
    assert not report
    assert report.first_collision_index == 0
    assert report.checked_states >= 200


def test_empty_trajectory_is_free_with_warning(params):
    report = trajectory_collision_free(Trajectory.empty(), Environment((0, 10, 0, 10)), params)
    assert report.free
    assert report.warning == 'empty trajectory'


def test_environment_dict_round_trip():
    env = Environment((0, 40, -5, 20), [_square(10, 10, 2)], margin=0.1)
    again = Environment.from_dict(env.to_dict())
    assert again.bounds == env.bounds
    assert again.margin == env.margin
    assert np.array_equal(again.obstacles[0], env.obstacles[0])
    with pytest.raises(ScenarioError):
        Environment.from_dict({'obstacles_m': []})


# ---- separating-axis oracle and symmetries ----

def _random_rect(rng):
    cx, cy = rng.uniform(-3.0, 3.0, 2)
    length, width = rng.uniform(0.5, 4.0), rng.uniform(0.5, 3.0)
    h = rng.uniform(-math.pi, math.pi)
    local = np.array([[-1, -1], [1, -1], [1, 1], [-1, 1]]) * np.array([length, width]) / 2.0
    rot = np.array([[math.cos(h), -math.sin(h)], [math.sin(h), math.cos(h)]])
    return local @ rot.T + np.array([cx, cy])


def _random_polygon(rng):
    center = rng.uniform(-3.0, 3.0, 2)
    points = center + rng.uniform(-2.0, 2.0, (int(rng.integers(3, 9)), 2))
    hull = ConvexHull(points)
    return points[hull.vertices]


def _deepest_common_depth(a, b):
    """Largest t such that some point lies at least t inside both CCW convex polygons."""
    rows, rhs = [], []
    for poly in (a, b):
        for p, q in zip(poly, np.roll(poly, -1, axis=0)):
            edge = q - p
            inward = np.array([-edge[1], edge[0]]) / np.linalg.norm(edge)
            # inward . x - inward . p >= t
            rows.append([-inward[0], -inward[1], 1.0])
            rhs.append(-float(inward @ p))
    res = linprog([0.0, 0.0, -1.0], A_ub=np.array(rows), b_ub=np.array(rhs), bounds=[(None, None)] * 3,
                  method='highs')
    assert res.status == 0
    return -res.fun


def _inside(points, poly, depth):
    for p, q in zip(poly, np.roll(poly, -1, axis=0)):
        edge = q - p
        inward = np.array([-edge[1], edge[0]]) / np.linalg.norm(edge)
        points = points[(points - p) @ inward > depth]
    return points


def test_separating_axis_agrees_with_sampled_oracle():
    rng = np.random.default_rng(21)
    compared = 0
    for _ in range(1000):
        rect, poly = _random_rect(rng), _random_polygon(rng)
        flag = bool(rects_overlap_polygon(rect[None], poly)[0])
        depth = _deepest_common_depth(rect, poly)
        if abs(depth) > 5e-4:
            compared += 1
            assert flag == (depth > 0.0)
        # Points sampled in the rectangle that sit clearly inside the polygon force an overlap
        weights = rng.dirichlet(np.ones(4), 200)
        samples = _inside(weights @ rect, poly, 1e-3)
        if len(samples):
            assert flag
    assert compared > 950


def test_collision_is_invariant_under_rigid_motion(params):
    rng = np.random.default_rng(5)
    obstacles = [_random_polygon(rng) * 3.0 for _ in range(6)]
    env = Environment((-1e6, 1e6, -1e6, 1e6), obstacles)
    states = np.array([lift(ReducedState(*rng.uniform(-8.0, 8.0, 2), rng.uniform(-math.pi, math.pi),
                                         rng.uniform(-1.0, 1.0)), params) for _ in range(40)])
    fp = FootprintDims()
    for _ in range(10):
        x, y = rng.uniform(-50.0, 50.0, 2)
        theta = rng.uniform(-math.pi, math.pi)
        moved_env = env.transformed(x, y, theta)
        moved = se2_transform(states, x, y, theta)
        rot = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
        expected = footprint_corners(states, params, fp) @ rot.T + np.array([x, y])
        assert np.max(np.abs(footprint_corners(moved, params, fp) - expected)) < 1e-9
        for before, after in zip(states, moved):
            assert state_in_collision(before, env, params) == state_in_collision(after, moved_env, params)


def test_smaller_footprint_never_adds_collisions(params):
    rng = np.random.default_rng(9)
    env = Environment((-12.0, 12.0, -12.0, 12.0), [_random_polygon(rng) * 2.0 for _ in range(5)])
    full = FootprintDims()
    for factor in (0.9, 0.6, 0.3):
        small = full.scaled(factor)
        for _ in range(100):
            state = lift(ReducedState(*rng.uniform(-8.0, 8.0, 2), rng.uniform(-math.pi, math.pi),
                                      rng.uniform(-1.0, 1.0)), params)
            if state_in_collision(state, env, params, small):
                assert state_in_collision(state, env, params, full)
