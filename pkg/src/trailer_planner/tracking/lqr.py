"""
Time-varying LQR tracking and the two-stage goal connection.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence, Tuple

import numpy as np

from src.trailer_planner.errors import GainSynthesisError, InvalidParamsError
from src.trailer_planner.geometry.collision import Environment, FootprintDims, trajectory_collision_free
from src.trailer_planner.planner.distance import Tolerances, goal_distance
from src.trailer_planner.vehicle.model import (
    CONTROL_DIM,
    STATE_DIM,
    ReducedState,
    Trajectory,
    VehicleParams,
    concatenate,
    equilibrium_angles,
    integrate_interval,
    jacobians,
    lift,
    simulate_controls,
    states_valid,
    to_reduced,
    wrap_angle,
)

logger = logging.getLogger('TrailerPlanner')


@dataclass(frozen=True)
class LQRConfig:
    q_diag: Tuple[float, ...] = (10.0, 10.0, 5.0, 1.0, 1.0, 1.0)
    r_diag: Tuple[float, ...] = (1.0, 1.0)
    qf_scale: float = 10.0
    divergence_factor: float = 5.0
    divergence_floor: float = 0.05
    capture_xy: float = 3.0
    capture_theta: float = 0.6
    min_speed: float = 1e-3
    max_condition: float = 1e12
    equilibrium_tol: float = 1e-3
    settle_time: float = 4.0
    settle_speed: float = 0.5

    def validate(self) -> 'LQRConfig':
        if len(self.q_diag) != STATE_DIM or len(self.r_diag) != CONTROL_DIM:
            raise InvalidParamsError("q_diag needs 6 entries and r_diag 2")
        if min(self.q_diag) < 0 or min(self.r_diag) <= 0:
            raise InvalidParamsError("Q must be positive semi-definite and R positive definite")
        if self.settle_time < 0 or self.settle_speed <= 0:
            raise InvalidParamsError("settle_time must be non-negative and settle_speed positive")
        return self

    @property
    def Q(self) -> np.ndarray:
        return np.diag(self.q_diag)

    @property
    def R(self) -> np.ndarray:
        return np.diag(self.r_diag)

    @property
    def Qf(self) -> np.ndarray:
        return self.qf_scale * self.Q


@dataclass
class LQRGains:
    gains: np.ndarray
    times: np.ndarray
    Q: np.ndarray
    R: np.ndarray
    Qf: np.ndarray


@dataclass
class TrackingResult:
    success: bool
    trajectory: Trajectory
    reason: str = ''
    initial_error: float = 0.0
    final_error: float = 0.0


@dataclass
class ConnectionResult:
    accepted: bool
    state: ReducedState
    trajectory: Trajectory
    full_state: np.ndarray = field(default_factory=lambda: np.zeros(STATE_DIM))
    reason: str = ''
    distance: float = float('inf')


def reverse_trajectory(traj: Trajectory) -> Trajectory:
    """Run a trajectory backwards: samples and intervals reversed, velocities negated."""
    controls = traj.controls[::-1].copy()
    controls[:, 0] = -controls[:, 0]
    return Trajectory(traj.states[::-1].copy(), controls, traj.durations[::-1].copy(), traj.max_step)


def state_difference(a, b) -> np.ndarray:
    """a - b with every angular component wrapped into (-pi, pi]."""
    diff = np.asarray(a, dtype=float) - np.asarray(b, dtype=float)
    diff[..., 2:6] = wrap_angle(diff[..., 2:6])
    return diff


def linearize(ref: Trajectory, params: VehicleParams, min_speed: float = 1e-3) -> Tuple[np.ndarray, np.ndarray]:
    """
    Discrete-time linearization about each reference interval

    Intervals with |v| below `min_speed` borrow the Jacobians of the nearest interval
    that moves.

    Returns:
        Tuple of A (M, 6, 6) and B (M, 6, 2)
    """
    m = len(ref.controls)
    moving = np.flatnonzero(np.abs(ref.controls[:, 0]) >= min_speed)
    eye = np.eye(STATE_DIM)
    A = np.empty((m, STATE_DIM, STATE_DIM))
    B = np.empty((m, STATE_DIM, CONTROL_DIM))
    for k in range(m):
        j = k if len(moving) == 0 or abs(ref.controls[k, 0]) >= min_speed else int(moving[np.argmin(np.abs(moving - k))])
        fx, fu = jacobians(ref.states[j], ref.controls[j], params)
        h = float(ref.durations[k])
        A[k] = eye + h * fx + 0.5 * h * h * fx @ fx
        B[k] = h * fu + 0.5 * h * h * fx @ fu
    return A, B


def lqr_gains(ref: Trajectory, params: VehicleParams, config: Optional[LQRConfig] = None) -> LQRGains:
    """
    Backward Riccati recursion along a reference trajectory

    Args:
        ref: Reference trajectory with positive duration
        params: Vehicle parameters
        config: Weights and numerical limits

    Returns:
        LQRGains with one (2, 6) feedback matrix per reference interval
    """
    config = (config or LQRConfig()).validate()
    if ref.is_empty or ref.duration <= 0:
        raise ValueError("LQR gains need a reference with positive duration")
    A, B = linearize(ref, params, config.min_speed)
    Q, R, P = config.Q, config.R, config.Qf.copy()
    gains = np.empty((len(A), CONTROL_DIM, STATE_DIM))
    for k in range(len(A) - 1, -1, -1):
        a, b = A[k], B[k]
        S = R + b.T @ P @ b
        if np.linalg.cond(S) > config.max_condition:
            logger.debug(f"Riccati recursion ill-conditioned at knot {k}")
            raise GainSynthesisError(f"Riccati matrix condition number above {config.max_condition:.0e} at knot {k}")
        K = -np.linalg.solve(S, b.T @ P @ a)
        P = Q + a.T @ P @ (a + b @ K)
        P = 0.5 * (P + P.T)
        gains[k] = K
    if not np.all(np.isfinite(gains)):
        raise GainSynthesisError("Non-finite LQR gains")
    return LQRGains(gains, ref.times, Q, R, config.Qf)


def in_capture_box(x0, ref_start, config: LQRConfig) -> bool:
    e = state_difference(x0, ref_start)
    return abs(e[0]) <= config.capture_xy and abs(e[1]) <= config.capture_xy and abs(e[2]) <= config.capture_theta


def track(ref: Trajectory, x0, gains: LQRGains, params: VehicleParams,
          config: Optional[LQRConfig] = None) -> TrackingResult:
    """
    Closed-loop rollout of the reference with saturated LQR feedback

    Args:
        ref: Reference trajectory
        x0: Initial full state
        gains: Gains computed for `ref`
        params: Vehicle parameters
        config: Capture box and divergence limits

    Returns:
        TrackingResult holding the realized trajectory or the failure reason
    """
    config = (config or LQRConfig()).validate()
    x = np.asarray(x0, dtype=float).copy()
    x[2] = wrap_angle(x[2])
    e0 = float(np.linalg.norm(state_difference(x, ref.states[0])))
    if not in_capture_box(x, ref.states[0], config):
        return TrackingResult(False, Trajectory.stationary(x), 'outside capture box', e0, e0)

    limit = config.divergence_factor * max(e0, config.divergence_floor)
    states = [x]
    controls = np.empty_like(ref.controls)
    for k, (u_ref, h) in enumerate(zip(ref.controls, ref.durations)):
        e = state_difference(states[-1], ref.states[k])
        if np.linalg.norm(e) > limit:
            partial = Trajectory(np.array(states), controls[:k], ref.durations[:k], ref.max_step)
            return TrackingResult(False, partial, 'diverged', e0, float(np.linalg.norm(e)))
        u = u_ref + gains.gains[k] @ e
        u[0] = np.clip(u[0], -params.v_max, params.v_max)
        u[1] = np.clip(u[1], -1.0, 1.0)
        controls[k] = u
        states.append(integrate_interval(states[-1], u, float(h), params, ref.max_step))

    traj = Trajectory(np.array(states), controls, ref.durations.copy(), ref.max_step)
    ef = float(np.linalg.norm(state_difference(traj.final_state, ref.final_state)))
    if ef > limit:
        return TrackingResult(False, traj, 'diverged', e0, ef)
    if not states_valid(traj.states, params).all():
        return TrackingResult(False, traj, 'jack-knife bound violated', e0, ef)
    return TrackingResult(True, traj, 'tracked', e0, ef)


def lqr_connect(goal: ReducedState, tau: Trajectory, n_c: ReducedState, env: Environment,
                tolerances: Tolerances, params: VehicleParams, steering_grid: Sequence[float],
                config: Optional[LQRConfig] = None, fp: Optional[FootprintDims] = None) -> ConnectionResult:
    """
    Replace a near-goal edge by a tracked trajectory that ends closer to the goal

    Stage one tracks the reversed edge from the goal back towards the edge start;
    stage two tracks the reversal of that result forward from the edge start.

    Args:
        goal: Goal reduced state
        tau: Edge trajectory ending at n_c
        n_c: Reduced state reached by tau
        env: Environment for collision checks
        tolerances: eps3 and eps4 gates plus the metric weights
        params: Vehicle parameters
        steering_grid: Library steering values used to re-enter the reduced space
        config: LQR settings
        fp: Body dimensions

    Returns:
        ConnectionResult; when not accepted it carries the original tau and n_c
    """
    config = (config or LQRConfig()).validate()
    unchanged = ConnectionResult(False, n_c, tau, np.asarray(tau.final_state if not tau.is_empty else lift(n_c, params)))
    if tau.is_empty or tau.duration <= 0:
        unchanged.reason = 'empty edge'
        return unchanged

    goal_full = np.asarray(lift(goal, params))
    d_before = goal_distance(tau.final_state, goal_full, params, tolerances)

    try:
        ref1 = reverse_trajectory(tau)
        stage1 = track(ref1, goal_full, lqr_gains(ref1, params, config), params, config)
        if not stage1.success:
            unchanged.reason = f"stage 1 {stage1.reason}"
            return unchanged
        if not trajectory_collision_free(stage1.trajectory, env, params, fp, tolerances.collision_resolution):
            unchanged.reason = 'stage 1 collision'
            return unchanged
        if goal_distance(stage1.trajectory.final_state, tau.start_state, params, tolerances) > tolerances.eps3:
            unchanged.reason = 'stage 1 misses the edge start'
            return unchanged

        ref2 = reverse_trajectory(stage1.trajectory)
        stage2 = track(ref2, tau.start_state, lqr_gains(ref2, params, config), params, config)
    except GainSynthesisError as e:
        unchanged.reason = f"gain synthesis failed: {e}"
        return unchanged
    if not stage2.success:
        unchanged.reason = f"stage 2 {stage2.reason}"
        return unchanged
    if not trajectory_collision_free(stage2.trajectory, env, params, fp, tolerances.collision_resolution):
        unchanged.reason = 'stage 2 collision'
        return unchanged

    final = stage2.trajectory.final_state
    d_after = goal_distance(final, goal_full, params, tolerances)
    reduced, mismatch = to_reduced(final, steering_grid, params)
    if d_after <= tolerances.eps4 and d_after < d_before and mismatch <= config.equilibrium_tol:
        logger.debug(f"Goal connection accepted: distance {d_before:.3f} -> {d_after:.3f}")
        return ConnectionResult(True, reduced, stage2.trajectory, final.copy(), 'accepted', d_after)

    settled = settle(stage2.trajectory, reduced.s, goal_full, d_before, env, tolerances, params, config, fp)
    if settled is not None:
        end = settled.final_state
        d_settled = goal_distance(end, goal_full, params, tolerances)
        reduced, _ = to_reduced(end, steering_grid, params)
        logger.debug(f"Goal connection accepted after settling: distance {d_before:.3f} -> {d_settled:.3f}")
        return ConnectionResult(True, reduced, settled, end.copy(), 'accepted', d_settled)

    if d_after > tolerances.eps4 or not d_after < d_before:
        unchanged.reason = f"stage 2 distance {d_after:.3f} not accepted (before {d_before:.3f})"
    else:
        unchanged.reason = f"terminal hitch angles {mismatch:.2e} rad off the equilibrium"
    return unchanged


def settle(stage2: Trajectory, steering: float, goal_full: np.ndarray, d_before: float, env: Environment,
           tolerances: Tolerances, params: VehicleParams, config: Optional[LQRConfig] = None,
           fp: Optional[FootprintDims] = None) -> Optional[Trajectory]:
    """
    Extend a stage-2 trajectory with a forward run at constant steering

    Hitch angles relax towards the equilibrium of `steering` only when driving
    forward, so nothing is tried after a backward final control. The run is cut
    at its first sample that meets the equilibrium tolerance and eps4 while still
    improving on `d_before`.

    Returns:
        Stage 2 joined with the settle piece, or None when no sample qualifies
    """
    config = (config or LQRConfig()).validate()
    if config.settle_time <= 0 or len(stage2.controls) == 0 or stage2.controls[-1, 0] < config.min_speed:
        return None
    speed = min(config.settle_speed, params.v_max)
    run = simulate_controls(stage2.final_state, [(speed, steering, config.settle_time)], params,
                            max_step=stage2.max_step)
    eq = np.asarray(equilibrium_angles(steering, params))
    off = np.max(np.abs(wrap_angle(run.states[:, 3:] - eq)), axis=1)
    for i in np.flatnonzero(off <= config.equilibrium_tol):
        if i == 0:
            continue
        d = goal_distance(run.states[i], goal_full, params, tolerances)
        if d > tolerances.eps4 or not d < d_before:
            continue
        piece = Trajectory(run.states[:i + 1], run.controls[:i], run.durations[:i], run.max_step)
        if not states_valid(piece.states, params).all():
            return None
        if not trajectory_collision_free(piece, env, params, fp, tolerances.collision_resolution):
            logger.debug("Settle run collides")
            return None
        return concatenate([stage2, piece])
    return None
