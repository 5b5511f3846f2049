"""
Kinematics of a car-like tractor towing three on-axle trailers.

State coordinates are (x, y, theta0, xi4, xi5, xi6): the tractor rear-axle
midpoint, the tractor heading and the three relative hitch angles. Controls are
(v, s): longitudinal velocity and normalized steering. Functions accept plain
arrays with arbitrary leading batch dimensions so search and optimization code
can evaluate many states at once.
"""

import hashlib
import json
import logging
import math
from dataclasses import asdict, dataclass
from typing import Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

from src.trailer_planner.errors import (
    ConstraintViolationError,
    EquilibriumDomainError,
    InvalidParamsError,
)

logger = logging.getLogger('TrailerPlanner')

STATE_DIM = 6
CONTROL_DIM = 2
ANGLE_INDICES = (2, 3, 4, 5)

PLANNING_DT = 0.01
ORACLE_DT = 0.001


@dataclass(frozen=True)
class VehicleParams:
    """Geometry and bounds of the tractor with three trailers (SI units)."""
    L: float = 2.396
    R: float = 5.0
    d1: float = 2.0
    d2: float = 2.0
    d3: float = 2.0
    xi_max: float = 0.6 * (math.pi / 2.0)
    v_max: float = 1.0

    def validate(self) -> 'VehicleParams':
        """Raise InvalidParamsError unless every invariant holds; returns self."""
        if min(self.L, self.R, self.d1, self.d2, self.d3, self.v_max) <= 0:
            raise InvalidParamsError("L, R, d1, d2, d3 and v_max must be positive")
        if not 0.0 < self.xi_max < math.pi / 2.0:
            raise InvalidParamsError(f"xi_max={self.xi_max} must lie in (0, pi/2)")
        # Keeps every equilibrium arcsin argument strictly inside (-1, 1) at |s| = 1
        if self.R ** 2 <= self.d1 ** 2 + self.d2 ** 2 + self.d3 ** 2:
            raise InvalidParamsError(
                f"R={self.R} too small for hitch lengths ({self.d1}, {self.d2}, {self.d3}); "
                "need R^2 > d1^2 + d2^2 + d3^2"
            )
        return self

    @property
    def hitch_lengths(self) -> Tuple[float, float, float]:
        return (self.d1, self.d2, self.d3)

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> 'VehicleParams':
        try:
            return cls(**{k: float(v) for k, v in data.items()}).validate()
        except TypeError as e:
            raise InvalidParamsError(f"Unknown vehicle parameter: {e}") from e

    def params_hash(self) -> str:
        """Stable digest identifying artifacts built with these parameters."""
        payload = json.dumps({k: repr(float(v)) for k, v in sorted(asdict(self).items())}, sort_keys=True)
        return hashlib.sha256(payload.encode('utf-8')).hexdigest()[:16]


class FullState(NamedTuple):
    x: float
    y: float
    theta0: float
    xi4: float
    xi5: float
    xi6: float

    def to_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> 'FullState':
        return cls(*(float(v) for v in arr))

    def headings(self) -> Tuple[float, float, float, float]:
        """Absolute headings theta0..theta3 of tractor and trailers."""
        t1 = self.theta0 + self.xi4
        t2 = t1 + self.xi5
        return (self.theta0, t1, t2, t2 + self.xi6)


class Control(NamedTuple):
    v: float
    s: float


class ReducedState(NamedTuple):
    x: float
    y: float
    theta0: float
    s: float

    def to_array(self) -> np.ndarray:
        return np.array(self, dtype=float)

    @classmethod
    def from_array(cls, arr: Sequence[float]) -> 'ReducedState':
        return cls(*(float(v) for v in arr))

    def normalized(self) -> 'ReducedState':
        return ReducedState(self.x, self.y, wrap_angle(self.theta0), self.s)


def wrap_angle(angle):
    """Map angles into (-pi, pi]; works on scalars and arrays."""
    wrapped = np.mod(np.asarray(angle, dtype=float) + math.pi, 2.0 * math.pi) - math.pi
    wrapped = np.where(wrapped <= -math.pi, wrapped + 2.0 * math.pi, wrapped)
    if np.ndim(wrapped) == 0:
        return float(wrapped)
    return wrapped


def dynamics(state, control, params: VehicleParams) -> np.ndarray:
    """
    Right-hand side of the tractor-trailer kinematics

    Args:
        state: (..., 6) state array
        control: (..., 2) control array (v, s)
        params: Vehicle parameters

    Returns:
        (..., 6) state derivative; angles are not normalized
    """
    state = np.asarray(state, dtype=float)
    control = np.asarray(control, dtype=float)
    theta0 = state[..., 2]
    xi4, xi5, xi6 = state[..., 3], state[..., 4], state[..., 5]
    v, s = control[..., 0], control[..., 1]
    R, d1, d2, d3 = params.R, params.d1, params.d2, params.d3

    sin4, cos4 = np.sin(xi4), np.cos(xi4)
    sin5, cos5 = np.sin(xi5), np.cos(xi5)

    out = np.empty(np.broadcast_shapes(state.shape, control.shape[:-1] + (STATE_DIM,)))
    out[..., 0] = np.cos(theta0) * v
    out[..., 1] = np.sin(theta0) * v
    out[..., 2] = v * s / R
    out[..., 3] = -v * (d1 * s + sin4 * R) / (R * d1)
    out[..., 4] = -v * (d1 * cos4 * sin5 - d2 * sin4) / (d1 * d2)
    out[..., 5] = -v * cos4 * (d2 * cos5 * np.sin(xi6) - d3 * sin5) / (d2 * d3)
    return out


def jacobians(state, control, params: VehicleParams) -> Tuple[np.ndarray, np.ndarray]:
    """
    Analytic Jacobians of the kinematics with respect to state and control

    Args:
        state: length-6 state
        control: length-2 control
        params: Vehicle parameters

    Returns:
        Tuple (A, B) with A = df/dstate (6x6) and B = df/dcontrol (6x2)
    """
    _, _, theta0, xi4, xi5, xi6 = (float(v) for v in state)
    v, s = (float(c) for c in control)
    R, d1, d2, d3 = params.R, params.d1, params.d2, params.d3
    s4, c4 = math.sin(xi4), math.cos(xi4)
    s5, c5 = math.sin(xi5), math.cos(xi5)
    s6, c6 = math.sin(xi6), math.cos(xi6)

    A = np.zeros((STATE_DIM, STATE_DIM))
    A[0, 2] = -math.sin(theta0) * v
    A[1, 2] = math.cos(theta0) * v
    A[3, 3] = -v * c4 / d1
    A[4, 3] = v * (d1 * s4 * s5 + d2 * c4) / (d1 * d2)
    A[4, 4] = -v * c4 * c5 / d2
    A[5, 3] = v * s4 * (d2 * c5 * s6 - d3 * s5) / (d2 * d3)
    A[5, 4] = v * c4 * (d2 * s5 * s6 + d3 * c5) / (d2 * d3)
    A[5, 5] = -v * c4 * c5 * c6 / d3

    B = np.zeros((STATE_DIM, CONTROL_DIM))
    B[0, 0] = math.cos(theta0)
    B[1, 0] = math.sin(theta0)
    B[2, 0] = s / R
    B[3, 0] = -(d1 * s + s4 * R) / (R * d1)
    B[4, 0] = -(d1 * c4 * s5 - d2 * s4) / (d1 * d2)
    B[5, 0] = -c4 * (d2 * c5 * s6 - d3 * s5) / (d2 * d3)
    B[2, 1] = v / R
    B[3, 1] = -v / R
    return A, B


def rk4_step(state, control, dt, params: VehicleParams) -> np.ndarray:
    """One classical RK4 step on raw (unnormalized) arrays; batch-friendly."""
    dt = np.asarray(dt, dtype=float)[..., None] if np.ndim(dt) else float(dt)
    k1 = dynamics(state, control, params)
    k2 = dynamics(state + 0.5 * dt * k1, control, params)
    k3 = dynamics(state + 0.5 * dt * k2, control, params)
    k4 = dynamics(state + dt * k3, control, params)
    return state + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def integrate(state, control, dt: float, params: VehicleParams) -> FullState:
    """
    Advance a state by one RK4 step and re-normalize the heading

    Args:
        state: Current full state
        control: Control held over the step
        dt: Step length in seconds, must be positive
        params: Vehicle parameters

    Returns:
        The next FullState with theta0 in (-pi, pi]
    """
    if dt <= 0:
        raise ValueError(f"dt must be positive, got {dt}")
    nxt = rk4_step(np.asarray(state, dtype=float), np.asarray(control, dtype=float), dt, params)
    nxt[2] = wrap_angle(nxt[2])
    return FullState.from_array(nxt)


def integrate_interval(state, control, duration: float, params: VehicleParams,
                       max_step: float = PLANNING_DT) -> np.ndarray:
    """
    Integrate a constant control over `duration` using equal RK4 substeps

    The heading is left unwrapped inside the interval and normalized once at the end.
    """
    x = np.asarray(state, dtype=float).copy()
    if duration <= 0:
        return x
    n_sub = max(1, int(math.ceil(duration / max_step - 1e-9)))
    h = duration / n_sub
    u = np.asarray(control, dtype=float)
    for _ in range(n_sub):
        x = rk4_step(x, u, h, params)
    x[..., 2] = wrap_angle(x[..., 2])
    return x


def equilibrium_angles(s: float, params: VehicleParams) -> Tuple[float, float, float]:
    """
    Hitch angles of the circular equilibrium for normalized steering s

    Args:
        s: Normalized steering in [-1, 1]
        params: Vehicle parameters

    Returns:
        Tuple (xi4, xi5, xi6) for which all bodies share the tractor yaw rate
    """
    if abs(s) > 1.0:
        raise ValueError(f"Steering {s} outside [-1, 1]")
    R = params.R
    a1 = s * params.d1 / R
    if abs(a1) >= 1.0:
        raise EquilibriumDomainError(f"arcsin argument {a1} for xi4 out of domain")
    c1 = math.sqrt(1.0 - a1 * a1)
    a2 = s * params.d2 / (R * c1)
    if abs(a2) >= 1.0:
        raise EquilibriumDomainError(f"arcsin argument {a2} for xi5 out of domain")
    c2 = math.sqrt(1.0 - a2 * a2)
    a3 = s * params.d3 / (R * c1 * c2)
    if abs(a3) >= 1.0:
        raise EquilibriumDomainError(f"arcsin argument {a3} for xi6 out of domain")
    return (-math.asin(a1), -math.asin(a2), -math.asin(a3))


def lift(xbar, params: VehicleParams) -> FullState:
    """
    Recover the full state of a reduced state on the equilibrium manifold

    Args:
        xbar: Reduced state (x, y, theta0, s)
        params: Vehicle parameters

    Returns:
        FullState with equilibrium hitch angles
    """
    x, y, theta0, s = (float(v) for v in xbar)
    xi4, xi5, xi6 = equilibrium_angles(s, params)
    if max(abs(xi4), abs(xi5), abs(xi6)) > params.xi_max:
        raise ConstraintViolationError(f"Equilibrium for s={s} violates the jack-knife bound")
    return FullState(x, y, wrap_angle(theta0), xi4, xi5, xi6)


def lift_many(xbars: np.ndarray, params: VehicleParams) -> np.ndarray:
    """Vectorized lift of an (N, 4) array of reduced states to (N, 6)."""
    xbars = np.atleast_2d(np.asarray(xbars, dtype=float))
    out = np.empty((xbars.shape[0], STATE_DIM))
    out[:, :3] = xbars[:, :3]
    out[:, 2] = wrap_angle(out[:, 2])
    cache = {}
    for i, s in enumerate(xbars[:, 3]):
        key = float(s)
        if key not in cache:
            cache[key] = equilibrium_angles(key, params)
        out[i, 3:] = cache[key]
    return out


def to_reduced(state, steering_grid: Sequence[float], params: VehicleParams) -> Tuple[ReducedState, float]:
    """
    Project a full state onto the nearest grid equilibrium

    Returns:
        Tuple of (reduced state, max hitch-angle mismatch against that equilibrium)
    """
    st = np.asarray(state, dtype=float)
    best: Optional[Tuple[float, float]] = None
    for s in steering_grid:
        eq = np.array(equilibrium_angles(float(s), params))
        mismatch = float(np.max(np.abs(wrap_angle(st[3:] - eq))))
        if best is None or mismatch < best[1]:
            best = (float(s), mismatch)
    s_best, mismatch = best
    return ReducedState(float(st[0]), float(st[1]), wrap_angle(float(st[2])), s_best), mismatch


def check_constraints(state, control, params: VehicleParams) -> bool:
    """
    Validity of a state/control pair against the jack-knife and bound constraints

    Returns:
        True iff |xi_k| <= xi_max, theta0 in (-pi, pi], |v| <= v_max and |s| <= 1
    """
    st = np.asarray(state, dtype=float)
    v, s = (float(c) for c in control)
    if np.any(np.abs(st[3:6]) > params.xi_max):
        return False
    if not (-math.pi < st[2] <= math.pi):
        return False
    return abs(v) <= params.v_max and abs(s) <= 1.0


def states_valid(states: np.ndarray, params: VehicleParams, margin: float = 0.0) -> np.ndarray:
    """Row-wise jack-knife check for an (N, 6) array."""
    return np.all(np.abs(np.asarray(states)[:, 3:6]) <= params.xi_max - margin, axis=1)


def controls_valid(controls: np.ndarray, params: VehicleParams, tol: float = 1e-12) -> np.ndarray:
    controls = np.asarray(controls)
    return (np.abs(controls[:, 0]) <= params.v_max + tol) & (np.abs(controls[:, 1]) <= 1.0 + tol)


def se2_transform(states: np.ndarray, x: float, y: float, theta: float) -> np.ndarray:
    """Rigidly move (N, >=3) pose rows by rotation theta then translation (x, y)."""
    states = np.array(states, dtype=float, copy=True)
    c, s = math.cos(theta), math.sin(theta)
    px, py = states[..., 0].copy(), states[..., 1].copy()
    states[..., 0] = c * px - s * py + x
    states[..., 1] = s * px + c * py + y
    states[..., 2] = wrap_angle(states[..., 2] + theta)
    return states


@dataclass
class Trajectory:
    """
    Sampled state/control history

    `states` has one more row than `controls`/`durations`; control i is held on the
    interval [t_i, t_i + durations_i). Timestamps are the prefix sums of durations.
    """
    states: np.ndarray
    controls: np.ndarray
    durations: np.ndarray
    max_step: float = PLANNING_DT

    def __post_init__(self):
        self.states = np.atleast_2d(np.asarray(self.states, dtype=float)).reshape(-1, STATE_DIM)
        self.controls = np.asarray(self.controls, dtype=float).reshape(-1, CONTROL_DIM)
        self.durations = np.asarray(self.durations, dtype=float).reshape(-1)
        if len(self.states) and len(self.controls) != len(self.states) - 1:
            raise ValueError("Trajectory needs exactly one control per sample interval")
        if len(self.durations) != len(self.controls):
            raise ValueError("Trajectory needs one duration per control")
        if np.any(self.durations <= 0):
            raise ValueError("Trajectory timestamps must be strictly increasing")

    @classmethod
    def empty(cls) -> 'Trajectory':
        return cls(np.zeros((0, STATE_DIM)), np.zeros((0, CONTROL_DIM)), np.zeros(0))

    @classmethod
    def stationary(cls, state) -> 'Trajectory':
        return cls(np.asarray(state, dtype=float)[None, :], np.zeros((0, CONTROL_DIM)), np.zeros(0))

    def __len__(self) -> int:
        return len(self.states)

    @property
    def is_empty(self) -> bool:
        return len(self.states) == 0

    @property
    def times(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.durations)]) if len(self.states) else np.zeros(0)

    @property
    def duration(self) -> float:
        return float(np.sum(self.durations))

    @property
    def start_state(self) -> np.ndarray:
        return self.states[0]

    @property
    def final_state(self) -> np.ndarray:
        return self.states[-1]

    def path_length(self) -> float:
        """Distance travelled by the tractor reference point, integral of |v| dt."""
        return float(np.sum(np.abs(self.controls[:, 0]) * self.durations))

    def transformed(self, x: float, y: float, theta: float) -> 'Trajectory':
        return Trajectory(se2_transform(self.states, x, y, theta), self.controls.copy(),
                          self.durations.copy(), self.max_step)

    def resimulate(self, params: VehicleParams, start: Optional[np.ndarray] = None) -> np.ndarray:
        """Re-integrate the stored controls from `start` (default: first sample)."""
        if self.is_empty:
            return self.states.copy()
        out = np.empty_like(self.states)
        out[0] = self.states[0] if start is None else start
        for i, (u, h) in enumerate(zip(self.controls, self.durations)):
            out[i + 1] = integrate_interval(out[i], u, h, params, self.max_step)
        return out

    def to_dict(self) -> dict:
        return {
            'states': self.states.tolist(),
            'controls': self.controls.tolist(),
            'durations': self.durations.tolist(),
            'max_step': self.max_step,
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'Trajectory':
        return cls(np.array(data['states'], dtype=float), np.array(data['controls'], dtype=float),
                   np.array(data['durations'], dtype=float), float(data.get('max_step', PLANNING_DT)))


def concatenate(parts: Iterable[Trajectory]) -> Trajectory:
    """Join trajectories end to start, dropping each later part's first sample."""
    states: List[np.ndarray] = []
    controls: List[np.ndarray] = []
    durations: List[np.ndarray] = []
    max_step = PLANNING_DT
    for part in parts:
        if part.is_empty:
            continue
        max_step = part.max_step
        states.append(part.states if not states else part.states[1:])
        controls.append(part.controls)
        durations.append(part.durations)
    if not states:
        return Trajectory.empty()
    return Trajectory(np.vstack(states), np.vstack(controls), np.concatenate(durations), max_step)


def simulate_controls(start, segments: Sequence[Tuple[float, float, float]], params: VehicleParams,
                      sample_dt: float = 0.05, max_step: float = PLANNING_DT) -> Trajectory:
    """
    Roll out piecewise-constant (v, s, duration) segments from `start`

    Each segment is split into equal sample intervals no longer than `sample_dt`;
    every sample interval is integrated with RK4 substeps no longer than `max_step`.
    """
    states = [np.asarray(start, dtype=float)]
    controls: List[Tuple[float, float]] = []
    durations: List[float] = []
    for v, s, dur in segments:
        if dur <= 0:
            continue
        n = max(1, int(math.ceil(dur / sample_dt - 1e-9)))
        h = dur / n
        for _ in range(n):
            states.append(integrate_interval(states[-1], (v, s), h, params, max_step))
            controls.append((v, s))
            durations.append(h)
    return Trajectory(np.array(states), np.array(controls, dtype=float).reshape(-1, 2),
                      np.array(durations), max_step)
