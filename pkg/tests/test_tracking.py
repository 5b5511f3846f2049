import os
import sys

import numpy as np
import pytest

# Add the project root to the path so we can import our modules
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.trailer_planner.errors import GainSynthesisError
from src.trailer_planner.geometry.collision import Environment, trajectory_collision_free
from src.trailer_planner.planner.distance import Tolerances, goal_distance
from src.trailer_planner.tracking.lqr import (
    LQRConfig,
    in_capture_box,
    lqr_connect,
    lqr_gains,
    reverse_trajectory,
    settle,
    state_difference,
    track,
)
from src.trailer_planner.vehicle.model import ReducedState, Trajectory, lift, simulate_controls, states_valid

STEERING_GRID = [-1.0, -0.5, 0.0, 0.5, 1.0]


@pytest.fixture
def straight_ref(params):
    return simulate_controls(lift(ReducedState(0.0, 0.0, 0.0, 0.0), params), [(1.0, 0.0, 20.0)], params)


@pytest.fixture
def wide_env():
    return Environment((-50.0, 50.0, -50.0, 50.0))


def _offset(state, dx=0.0, dy=0.0, dtheta=0.0):
    x = np.array(state, dtype=float)
    x[0] += dx
    x[1] += dy
    x[2] += dtheta
    return x


def test_reverse_is_an_involution(params):
    traj = simulate_controls(lift(ReducedState(0.0, 0.0, 0.0, 0.3), params), [(1.0, 0.3, 2.0), (-1.0, -0.5, 3.0)],
                             params)
    twice = reverse_trajectory(reverse_trajectory(traj))
    assert np.array_equal(twice.states, traj.states)
    assert np.array_equal(twice.controls, traj.controls)
    assert np.array_equal(twice.durations, traj.durations)


def test_reversed_trajectory_is_consistent_with_dynamics(params):
    traj = simulate_controls(lift(ReducedState(0.0, 0.0, 0.0, 0.3), params), [(1.0, 0.3, 2.0), (1.0, -0.5, 3.0)],
                             params)
    rev = reverse_trajectory(traj)
    assert np.all(rev.controls[:, 0] == -1.0)
    resim = rev.resimulate(params)
    assert np.max(np.abs(state_difference(resim, rev.states))) < 1e-6


def test_reversal_reproduces_random_trajectories(params):
    rng = np.random.default_rng(3)
    for _ in range(100):
        s0 = float(rng.uniform(-1.0, 1.0))
        segments = [(float(rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 1.0)), float(rng.uniform(-1.0, 1.0)),
                     float(rng.uniform(0.5, 2.5))) for _ in range(int(rng.integers(1, 4)))]
        traj = simulate_controls(lift(ReducedState(0.0, 0.0, 0.0, s0), params), segments, params)
        rev = reverse_trajectory(traj)
        assert np.array_equal(rev.start_state, traj.final_state)
        resim = rev.resimulate(params)
        assert np.max(np.abs(state_difference(resim, rev.states))) < 1e-6


def test_zero_weights_give_zero_gains(params, straight_ref):
    config = LQRConfig(q_diag=(0.0,) * 6)
    gains = lqr_gains(straight_ref, params, config)
    assert gains.gains.shape == (len(straight_ref.controls), 2, 6)
    assert np.all(gains.gains == 0.0)


def test_gains_converge_on_long_straight_reference(params):
    ref = simulate_controls(lift(ReducedState(0.0, 0.0, 0.0, 0.0), params), [(1.0, 0.0, 60.0)], params)
    gains = lqr_gains(ref, params).gains
    scale = max(1.0, float(np.abs(gains[0]).max()))
    assert np.max(np.abs(gains[0] - gains[len(gains) // 4])) < 1e-3 * scale


def test_ill_conditioned_riccati_raises(params, straight_ref):
    config = LQRConfig(q_diag=(1e16, 0.0, 0.0, 0.0, 0.0, 0.0), qf_scale=1.0)
    with pytest.raises(GainSynthesisError):
        lqr_gains(straight_ref, params, config)


def test_empty_reference_is_rejected(params):
    with pytest.raises(ValueError):
        lqr_gains(Trajectory.empty(), params)


def test_zero_offset_replays_reference(params, straight_ref):
    result = track(straight_ref, straight_ref.start_state, lqr_gains(straight_ref, params), params)
    assert result.success
    assert result.initial_error == 0.0
    assert np.max(np.abs(result.trajectory.states - straight_ref.states)) < 1e-9


def test_small_offset_contracts(params, straight_ref):
    x0 = _offset(straight_ref.start_state, dx=0.3, dy=0.3, dtheta=0.1)
    result = track(straight_ref, x0, lqr_gains(straight_ref, params), params)
    assert result.success, result.reason
    assert result.final_error <= 0.2 * result.initial_error
    assert result.initial_error == pytest.approx(np.sqrt(0.3 ** 2 + 0.3 ** 2 + 0.1 ** 2))


def test_random_offsets_mostly_contract(params):
    # 20 m at half speed leaves room to catch up on a lagging start
    ref = simulate_controls(lift(ReducedState(0.0, 0.0, 0.0, 0.0), params), [(0.5, 0.0, 40.0)], params)
    gains = lqr_gains(ref, params)
    rng = np.random.default_rng(11)
    contracted = 0
    for _ in range(20):
        dx, dy = rng.uniform(-0.5, 0.5, 2)
        dtheta = rng.uniform(-0.2, 0.2)
        result = track(ref, _offset(ref.start_state, dx, dy, dtheta), gains, params)
        if result.success and result.final_error <= 0.2 * result.initial_error:
            contracted += 1
    assert contracted >= 18


def test_capture_box(params, straight_ref):
    config = LQRConfig()
    assert in_capture_box(_offset(straight_ref.start_state, dy=2.9), straight_ref.start_state, config)
    assert not in_capture_box(_offset(straight_ref.start_state, dtheta=0.7), straight_ref.start_state, config)
    result = track(straight_ref, _offset(straight_ref.start_state, dy=4.0), lqr_gains(straight_ref, params), params)
    assert not result.success
    assert result.reason == 'outside capture box'


def test_large_offset_saturates_controls(params):
    ref = simulate_controls(lift(ReducedState(0.0, 0.0, 0.0, 0.0), params), [(1.0, 0.0, 30.0)], params)
    result = track(ref, _offset(ref.start_state, dy=2.5), lqr_gains(ref, params), params)
    controls = result.trajectory.controls
    assert np.all(np.abs(controls[:, 0]) <= params.v_max)
    assert np.all(np.abs(controls[:, 1]) <= 1.0)
    assert np.abs(controls[:, 1]).max() == pytest.approx(1.0)
    if result.success:
        assert states_valid(result.trajectory.states, params).all()


def test_connection_at_goal_keeps_edge(params, straight_ref, wide_env):
    end = straight_ref.final_state
    goal = ReducedState(float(end[0]), float(end[1]), float(end[2]), 0.0)
    result = lqr_connect(goal, straight_ref, goal, wide_env, Tolerances(), params, STEERING_GRID)
    assert not result.accepted
    assert result.trajectory is straight_ref
    assert result.state == goal


def _slow_edge(params, length=10.0):
    return simulate_controls(lift(ReducedState(0.0, 0.0, 0.0, 0.0), params), [(0.5, 0.0, 2.0 * length)], params)


def test_connection_closes_longitudinal_gap(params, wide_env):
    tau = _slow_edge(params)
    n_c = ReducedState(10.0, 0.0, 0.0, 0.0)
    goal = ReducedState(10.3, 0.0, 0.0, 0.0)
    tolerances = Tolerances()
    result = lqr_connect(goal, tau, n_c, wide_env, tolerances, params, STEERING_GRID, LQRConfig())
    assert result.accepted, result.reason
    assert result.distance < 0.05
    assert result.state.s == 0.0
    assert np.all(result.trajectory.states[:, 3:] == 0.0)
    assert np.allclose(result.trajectory.start_state, tau.start_state)
    assert result.state.x == pytest.approx(10.3, abs=0.05)


def test_connection_closes_lateral_gap(params, wide_env):
    tau = simulate_controls(lift(ReducedState(0.0, 0.0, 0.0, 0.0), params), [(1.0, 0.0, 10.0)], params)
    n_c = ReducedState(10.0, 0.0, 0.0, 0.0)
    goal = ReducedState(10.0, 0.4, 0.0, 0.0)
    tolerances = Tolerances()
    d_before = goal_distance(tau.final_state, lift(goal, params), params, tolerances)
    config = LQRConfig()
    result = lqr_connect(goal, tau, n_c, wide_env, tolerances, params, STEERING_GRID, config)
    if result.accepted:
        assert result.distance <= tolerances.eps4
        assert result.distance < d_before
        assert np.allclose(result.trajectory.start_state, tau.start_state)
        assert result.state.s in STEERING_GRID
        assert states_valid(result.trajectory.states, params).all()
        on_manifold = np.asarray(lift(result.state, params))
        assert np.max(np.abs(state_difference(result.full_state, on_manifold)[3:])) <= config.equilibrium_tol
    else:
        assert result.trajectory is tau
        assert result.state == n_c


@pytest.mark.parametrize("dx, dy, dtheta", [
    (0.1, 0.0, 0.0), (0.2, 0.0, 0.0), (0.4, 0.0, 0.0), (-0.1, 0.0, 0.0), (-0.3, 0.0, 0.0),
    (0.5, 0.0, 0.0), (0.0, 0.3, 0.0), (0.0, -0.2, 0.0), (0.2, 0.2, 0.05), (0.0, 0.0, -0.08),
])
def test_near_goal_connections_contract(params, dx, dy, dtheta):
    tau = _slow_edge(params)
    n_c = ReducedState(10.0, 0.0, 0.0, 0.0)
    goal = ReducedState(10.0 + dx, dy, dtheta, 0.0)
    far_block = np.array([[30.0, 20.0], [35.0, 20.0], [35.0, 25.0], [30.0, 25.0]])
    env = Environment((-50.0, 50.0, -50.0, 50.0), [far_block])
    tolerances = Tolerances()
    d_before = goal_distance(tau.final_state, lift(goal, params), params, tolerances)
    result = lqr_connect(goal, tau, n_c, env, tolerances, params, STEERING_GRID, LQRConfig())
    if dy == 0.0 and dtheta == 0.0:
        # Straight along the edge nothing bends, so the end is exactly on the s = 0 equilibrium
        assert result.accepted, result.reason
    if result.accepted:
        assert result.distance <= tolerances.eps4
        assert result.distance < d_before
        assert trajectory_collision_free(result.trajectory, env, params, resolution=tolerances.verify_resolution)
        assert states_valid(result.trajectory.states, params).all()
    else:
        assert result.trajectory is tau
        assert result.state == n_c


def test_connection_rejected_when_tracked_sweep_collides(params):
    tau = simulate_controls(lift(ReducedState(0.0, 0.0, 0.0, 0.0), params), [(1.0, 0.0, 10.0)], params)
    n_c = ReducedState(10.0, 0.0, 0.0, 0.0)
    goal = ReducedState(10.0, 0.4, 0.0, 0.0)
    # Clear of the edge sweep (|y| <= 1) but inside the sweep that starts at the goal
    obstacle = np.array([[4.0, 1.05], [9.0, 1.05], [9.0, 1.3], [4.0, 1.3]])
    env = Environment((-50.0, 50.0, -50.0, 50.0), [obstacle])
    result = lqr_connect(goal, tau, n_c, env, Tolerances(), params, STEERING_GRID, LQRConfig())
    assert not result.accepted
    assert result.reason == 'stage 1 collision'
    assert result.trajectory is tau
    assert result.state == n_c


def test_connection_rejected_when_longitudinal_sweep_collides(params):
    tau = _slow_edge(params)
    n_c = ReducedState(10.0, 0.0, 0.0, 0.0)
    goal = ReducedState(10.3, 0.0, 0.0, 0.0)
    # Just ahead of the edge's front bumper, reached only by the sweep starting at the goal
    obstacle = np.array([[13.05, -2.0], [14.0, -2.0], [14.0, 2.0], [13.05, 2.0]])
    env = Environment((-50.0, 50.0, -50.0, 50.0), [obstacle])
    result = lqr_connect(goal, tau, n_c, env, Tolerances(), params, STEERING_GRID, LQRConfig())
    assert not result.accepted
    assert result.reason == 'stage 1 collision'
    assert result.trajectory is tau


def _perturbed_run(params, v=1.0, xi6=2e-3):
    start = np.zeros(6)
    start[5] = xi6
    return simulate_controls(start, [(v, 0.0, 1.0)], params)


def test_settle_relaxes_hitch_angles_onto_equilibrium(params, wide_env):
    stage2 = _perturbed_run(params)
    assert abs(stage2.final_state[5]) > 1e-3
    goal_full = np.asarray(lift(ReducedState(float(stage2.final_state[0]) + 0.5, 0.0, 0.0, 0.0), params))
    tolerances = Tolerances()
    settled = settle(stage2, 0.0, goal_full, 1.0, wide_env, tolerances, params, LQRConfig())
    assert settled is not None
    assert np.array_equal(settled.states[:len(stage2)], stage2.states)
    assert np.max(np.abs(settled.final_state[3:])) <= 1e-3
    assert goal_distance(settled.final_state, goal_full, params, tolerances) <= tolerances.eps4
    assert np.all(settled.controls[len(stage2.controls):] == [0.5, 0.0])
    assert np.max(np.abs(state_difference(settled.resimulate(params), settled.states))) < 1e-9


def test_settle_skipped_after_backward_motion(params, wide_env):
    stage2 = _perturbed_run(params, v=-1.0)
    goal_full = np.asarray(lift(ReducedState(float(stage2.final_state[0]), 0.0, 0.0, 0.0), params))
    assert settle(stage2, 0.0, goal_full, 1.0, wide_env, Tolerances(), params) is None


def test_settle_rejects_colliding_run(params):
    stage2 = _perturbed_run(params)
    x_end = float(stage2.final_state[0])
    wall = np.array([[x_end + 3.2, -2.0], [x_end + 4.0, -2.0], [x_end + 4.0, 2.0], [x_end + 3.2, 2.0]])
    env = Environment((-50.0, 50.0, -50.0, 50.0), [wall])
    goal_full = np.asarray(lift(ReducedState(x_end + 0.5, 0.0, 0.0, 0.0), params))
    assert settle(stage2, 0.0, goal_full, 1.0, env, Tolerances(), params) is None


def test_settle_gives_up_when_relaxing_overshoots_goal(params, wide_env):
    stage2 = _perturbed_run(params)
    goal_full = np.asarray(lift(ReducedState(float(stage2.final_state[0]), 0.0, 0.0, 0.0), params))
    assert settle(stage2, 0.0, goal_full, 1.0, wide_env, Tolerances(), params) is None
