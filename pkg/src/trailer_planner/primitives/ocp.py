"""
Minimum-cost point-to-point trajectory optimization for the trailer rig.

Free-final-time problem transcribed by direct multiple shooting: N segments
of piecewise-constant control, each propagated with a few RK4 substeps.
Continuity defects are enforced through an augmented Lagrangian whose inner
problems are solved with box-bounded L-BFGS-B.
"""

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit

from src.trailer_planner.errors import DegenerateRequestError, InvalidParamsError
from src.trailer_planner.vehicle.model import (
    STATE_DIM,
    Trajectory,
    VehicleParams,
    controls_valid,
    rk4_step,
    simulate_controls,
    states_valid,
    wrap_angle,
)

logger = logging.getLogger('TrailerPlanner')

COST_FUNCTION_ID = 'time+0.5*s^2+0.25*reverse'
STEERING_WEIGHT = 0.5
REVERSE_PENALTY = 0.25


@dataclass(frozen=True)
class OCPConfig:
    n_segments: int = 20
    rk4_substeps: int = 4
    t_min: float = 0.1
    t_max: float = 30.0
    defect_tol: float = 1e-4
    boundary_tol: float = 1e-3
    max_iterations: int = 500
    max_outer: int = 25
    inner_iterations: int = 150
    penalty_init: float = 10.0
    penalty_growth: float = 10.0
    penalty_max: float = 1e8
    reverse_smoothing: float = 0.02
    fd_step: float = 1e-6
    sample_dt: float = 0.05

    def validate(self) -> 'OCPConfig':
        if self.n_segments < 1 or self.rk4_substeps < 1:
            raise InvalidParamsError("n_segments and rk4_substeps must be at least 1")
        if not 0.0 < self.t_min < self.t_max:
            raise InvalidParamsError("Need 0 < t_min < t_max")
        if self.max_iterations < 1:
            raise InvalidParamsError("max_iterations must be positive")
        return self

    def to_dict(self) -> Dict:
        return asdict(self)


def running_cost(controls) -> np.ndarray:
    """
    Cost rate c(X, u) = 1 + 0.5 s^2 + 0.25 [v < 0] per unit time

    Args:
        controls: (..., 2) controls (v, s)

    Returns:
        (...) cost rates
    """
    controls = np.asarray(controls, dtype=float)
    v, s = controls[..., 0], controls[..., 1]
    return 1.0 + STEERING_WEIGHT * s * s + REVERSE_PENALTY * (v < 0.0)


def trajectory_cost(traj: Trajectory) -> float:
    """Objective value of a realized trajectory: sum of cost rate times interval length."""
    if traj.is_empty:
        return 0.0
    return float(np.sum(running_cost(traj.controls) * traj.durations))


@dataclass
class OCPSolution:
    success: bool
    message: str
    duration: float = 0.0
    segments: np.ndarray = field(default_factory=lambda: np.zeros((0, 3)))
    nodes: np.ndarray = field(default_factory=lambda: np.zeros((0, STATE_DIM)))
    trajectory: Optional[Trajectory] = None
    cost: float = math.inf
    defect: float = math.inf
    boundary_residual: float = math.inf
    iterations: int = 0
    outer_iterations: int = 0


class _Transcription:
    """Decision-vector layout z = [T, v_0..v_{N-1}, s_0..s_{N-1}, X_1..X_{N-1}]."""

    def __init__(self, start: np.ndarray, goal: np.ndarray, params: VehicleParams, config: OCPConfig):
        self.start = start
        self.goal = goal
        self.params = params
        self.config = config
        self.N = config.n_segments
        self.n_vars = 1 + 2 * self.N + STATE_DIM * (self.N - 1)

    def unpack(self, z: np.ndarray) -> Tuple[float, np.ndarray, np.ndarray]:
        N = self.N
        T = float(z[0])
        controls = np.stack([z[1:1 + N], z[1 + N:1 + 2 * N]], axis=1)
        nodes = np.empty((N + 1, STATE_DIM))
        nodes[0] = self.start
        nodes[1:N] = z[1 + 2 * N:].reshape(N - 1, STATE_DIM)
        nodes[N] = self.goal
        return T, controls, nodes

    def pack(self, T: float, controls: np.ndarray, nodes: np.ndarray) -> np.ndarray:
        return np.concatenate([[T], controls[:, 0], controls[:, 1], nodes[1:self.N].reshape(-1)])

    def bounds(self) -> List[Tuple[Optional[float], Optional[float]]]:
        p = self.params
        out: List[Tuple[Optional[float], Optional[float]]] = [(self.config.t_min, self.config.t_max)]
        out += [(-p.v_max, p.v_max)] * self.N
        out += [(-1.0, 1.0)] * self.N
        node_bounds = [(None, None)] * 3 + [(-p.xi_max, p.xi_max)] * 3
        out += node_bounds * (self.N - 1)
        return out

    def propagate(self, X: np.ndarray, U: np.ndarray, h: np.ndarray) -> np.ndarray:
        dt = h / self.config.rk4_substeps
        for _ in range(self.config.rk4_substeps):
            X = rk4_step(X, U, dt, self.params)
        return X

    def defects(self, z: np.ndarray) -> np.ndarray:
        T, controls, nodes = self.unpack(z)
        h = np.full(self.N, T / self.N)
        c = self.propagate(nodes[:-1], controls, h) - nodes[1:]
        c[-1, 2] = wrap_angle(c[-1, 2])
        return c

    def defects_and_jacobian(self, z: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
        """
        Defects (N, 6) and their derivative with respect to each segment's local variables

        Local variables per segment are (T, v_k, s_k, X_k); the derivative with
        respect to X_{k+1} is -I and is not returned.
        """
        T, controls, nodes = self.unpack(z)
        N, eps = self.N, self.config.fd_step
        local = np.concatenate([np.full((N, 1), T), controls, nodes[:-1]], axis=1)
        n_local = local.shape[1]
        offsets = np.concatenate([np.zeros((1, n_local)), eps * np.eye(n_local), -eps * np.eye(n_local)])
        batch = local[:, None, :] + offsets[None, :, :]
        flat = batch.reshape(-1, n_local)
        out = self.propagate(flat[:, 3:], flat[:, 1:3], flat[:, 0] / N).reshape(N, 1 + 2 * n_local, STATE_DIM)
        c = out[:, 0, :] - nodes[1:]
        c[-1, 2] = wrap_angle(c[-1, 2])
        jac = (out[:, 1:1 + n_local, :] - out[:, 1 + n_local:, :]) / (2.0 * eps)
        return c, np.transpose(jac, (0, 2, 1))

    def objective(self, z: np.ndarray) -> Tuple[float, np.ndarray]:
        """Smoothed objective (T/N) * sum c(u_k) and its gradient."""
        N, k = self.N, self.config.reverse_smoothing
        T = z[0]
        v, s = z[1:1 + N], z[1 + N:1 + 2 * N]
        sig = expit(-v / k)
        rate = 1.0 + STEERING_WEIGHT * s * s + REVERSE_PENALTY * sig
        grad = np.zeros_like(z)
        grad[0] = np.sum(rate) / N
        grad[1:1 + N] = (T / N) * REVERSE_PENALTY * sig * (1.0 - sig) * (-1.0 / k)
        grad[1 + N:1 + 2 * N] = (T / N) * 2.0 * STEERING_WEIGHT * s
        return float(T / N * np.sum(rate)), grad

    def augmented_lagrangian(self, z: np.ndarray, lam: np.ndarray, mu: float) -> Tuple[float, np.ndarray]:
        N = self.N
        f, grad = self.objective(z)
        c, jac = self.defects_and_jacobian(z)
        y = lam + mu * c
        value = f + float(np.sum(lam * c)) + 0.5 * mu * float(np.sum(c * c))

        contrib = np.einsum('kij,ki->kj', jac, y)
        grad[0] += np.sum(contrib[:, 0])
        grad[1:1 + N] += contrib[:, 1]
        grad[1 + N:1 + 2 * N] += contrib[:, 2]
        node_grad = np.zeros((N + 1, STATE_DIM))
        node_grad[:-1] += contrib[:, 3:]
        node_grad[1:] -= y
        grad[1 + 2 * N:] += node_grad[1:N].reshape(-1)
        return value, grad

    def warm_start(self) -> np.ndarray:
        """Straight/arc interpolation between the boundary states."""
        p, N = self.params, self.N
        delta = self.goal - self.start
        delta[2] = wrap_angle(delta[2])
        heading = math.atan2(delta[1], delta[0]) if np.hypot(delta[0], delta[1]) > 1e-9 else self.start[2]
        forward = math.cos(heading - self.start[2]) >= 0.0
        dist = float(np.hypot(delta[0], delta[1])) + 0.5 * p.R * abs(delta[2])
        speed = 0.8 * p.v_max
        T = float(np.clip(max(dist, 0.5) / speed, self.config.t_min, self.config.t_max))
        v = speed if forward else -speed
        s = float(np.clip(p.R * delta[2] / (v * T), -1.0, 1.0))

        frac = np.linspace(0.0, 1.0, N + 1)[:, None]
        nodes = self.start[None, :] + frac * delta[None, :]
        nodes[:, 3:] = np.clip(nodes[:, 3:], -p.xi_max, p.xi_max)
        controls = np.column_stack([np.full(N, v), np.full(N, s)])
        return self.pack(T, controls, nodes)


def solve_ocp(start, goal, params: VehicleParams, config: Optional[OCPConfig] = None,
              initial_guess: Optional[np.ndarray] = None) -> OCPSolution:
    """
    Solve the obstacle-free minimum-cost problem between two full states

    Args:
        start: Initial full state
        goal: Terminal full state
        params: Vehicle parameters
        config: Solver settings
        initial_guess: Optional decision vector overriding the warm start

    Returns:
        OCPSolution; `success` is False when tolerances were not met within the iteration budget
    """
    config = (config or OCPConfig()).validate()
    start = np.asarray(start, dtype=float).copy()
    goal = np.asarray(goal, dtype=float).copy()
    diff = goal - start
    diff[2] = wrap_angle(diff[2])
    if np.max(np.abs(diff)) < 1e-9:
        raise DegenerateRequestError("Boundary-value request with identical start and goal")

    problem = _Transcription(start, goal, params, config)
    z = problem.warm_start() if initial_guess is None else np.asarray(initial_guess, dtype=float).copy()
    bounds = problem.bounds()
    lam = np.zeros((config.n_segments, STATE_DIM))
    mu = config.penalty_init
    iterations, outer = 0, 0
    prev_violation = math.inf
    violation = math.inf

    while iterations < config.max_iterations and outer < config.max_outer:
        outer += 1
        budget = min(config.inner_iterations, config.max_iterations - iterations)
        res = minimize(problem.augmented_lagrangian, z, args=(lam, mu), jac=True, method='L-BFGS-B',
                       bounds=bounds, options={'maxiter': budget})
        iterations += max(int(res.nit), 1)
        z = res.x
        c = problem.defects(z)
        violation = float(np.max(np.abs(c)))
        logger.debug(f"OCP outer {outer}: defect={violation:.2e}, mu={mu:.1e}, iterations={iterations}")
        if violation <= config.defect_tol:
            break
        lam = lam + mu * c
        if violation > 0.25 * prev_violation:
            mu = min(mu * config.penalty_growth, config.penalty_max)
        prev_violation = violation

    T, controls, nodes = problem.unpack(z)
    h = T / config.n_segments
    segments = np.column_stack([controls, np.full(config.n_segments, h)])
    solution = OCPSolution(False, '', T, segments, nodes, defect=violation,
                           iterations=iterations, outer_iterations=outer)
    if violation > config.defect_tol:
        solution.message = f"defect {violation:.2e} above tolerance after {iterations} iterations"
        return solution

    traj = simulate_controls(start, [tuple(seg) for seg in segments], params, sample_dt=config.sample_dt)
    end_err = traj.final_state - goal
    end_err[2:] = wrap_angle(end_err[2:])
    solution.boundary_residual = float(np.max(np.abs(end_err)))
    solution.trajectory = traj
    solution.cost = float(np.sum(running_cost(traj.controls) * traj.durations))
    if solution.boundary_residual > config.boundary_tol:
        solution.message = f"boundary residual {solution.boundary_residual:.2e} above tolerance"
        return solution
    if not (states_valid(traj.states, params).all() and controls_valid(traj.controls, params).all()):
        solution.message = 'jack-knife or bound constraint violated between nodes'
        return solution
    solution.success = True
    solution.message = 'converged'
    return solution
