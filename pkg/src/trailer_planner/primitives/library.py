"""
Motion-primitive generation, mode classification, mirroring and persistence.
"""

import logging
import math
import multiprocessing
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, Iterable, List, Optional, Tuple

import numpy as np

from src.trailer_planner.errors import (
    BucketMismatchError,
    DegenerateRequestError,
    LibraryFormatError,
    LibraryIntegrityError,
    ParamsHashMismatchError,
)
from src.trailer_planner.primitives.lattice import Lattice
from src.trailer_planner.primitives.ocp import COST_FUNCTION_ID, OCPConfig, OCPSolution, solve_ocp
from src.trailer_planner.utils.io_utils import check_format_version, load_json_data, save_results
from src.trailer_planner.vehicle.model import (
    ReducedState,
    Trajectory,
    VehicleParams,
    lift,
    simulate_controls,
    wrap_angle,
)

logger = logging.getLogger('TrailerPlanner')

LIBRARY_FORMAT_VERSION = '1.0'
LIBRARY_FORMAT_MAJOR = 1
STEERING_KEY_TOL = 1e-9
INTEGRITY_TOL = 1e-6


class Mode(str, Enum):
    FORWARD_LEFT = 'ForwardLeft'
    FORWARD_RIGHT = 'ForwardRight'
    BACKWARD_LEFT = 'BackwardLeft'
    BACKWARD_RIGHT = 'BackwardRight'

    def mirrored(self) -> 'Mode':
        return _MIRRORED_MODE[self]


_MIRRORED_MODE = {
    Mode.FORWARD_LEFT: Mode.FORWARD_RIGHT,
    Mode.FORWARD_RIGHT: Mode.FORWARD_LEFT,
    Mode.BACKWARD_LEFT: Mode.BACKWARD_RIGHT,
    Mode.BACKWARD_RIGHT: Mode.BACKWARD_LEFT,
}

MODES: Tuple[Mode, ...] = tuple(Mode)


def classify_mode(target) -> Mode:
    """
    Quadrant of the canonical-frame target position

    Points on the x = 0 axis count as backward and points on y = 0 as left.
    """
    x, y = float(target[0]), float(target[1])
    if x > 0:
        return Mode.FORWARD_LEFT if y >= 0 else Mode.FORWARD_RIGHT
    return Mode.BACKWARD_LEFT if y >= 0 else Mode.BACKWARD_RIGHT


@dataclass
class MotionPrimitive:
    """
    Dynamically feasible transition between two circular equilibria

    `segments` rows are (v, s, duration); `traj` is sampled in the canonical frame
    starting at lift((0, 0, 0, s0)).
    """
    s0: float
    target: ReducedState
    segments: np.ndarray
    traj: Trajectory
    cost: float
    mode: Mode
    mirrored: bool = False
    sample_dt: float = 0.05

    @property
    def duration(self) -> float:
        return float(np.sum(self.segments[:, 2]))

    @property
    def path_length(self) -> float:
        return self.traj.path_length()

    def is_self_symmetric(self) -> bool:
        """True when reflecting across the x axis leaves the start and target unchanged."""
        t = self.target
        return self.s0 == 0.0 and t.y == 0.0 and t.s == 0.0 and (t.theta0 == 0.0 or t.theta0 == math.pi)

    def to_dict(self) -> Dict:
        return {
            'cost': self.cost,
            'mirrored': self.mirrored,
            'mode': self.mode.value,
            'sample_dt': self.sample_dt,
            's0': self.s0,
            'segments': self.segments.tolist(),
            'target': list(self.target),
            'traj': self.traj.to_dict(),
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'MotionPrimitive':
        try:
            return cls(float(data['s0']), ReducedState.from_array(data['target']),
                       np.array(data['segments'], dtype=float).reshape(-1, 3),
                       Trajectory.from_dict(data['traj']), float(data['cost']), Mode(data['mode']),
                       bool(data.get('mirrored', False)), float(data.get('sample_dt', 0.05)))
        except (KeyError, ValueError, TypeError) as e:
            raise LibraryFormatError(f"Malformed motion primitive record: {e}") from e


def _primitive_from_solution(s0: float, target: ReducedState, solution: OCPSolution,
                             sample_dt: float) -> MotionPrimitive:
    return MotionPrimitive(s0, target, solution.segments, solution.trajectory, solution.cost,
                           classify_mode(target), sample_dt=sample_dt)


def generate_mp(x0: ReducedState, x1: ReducedState, params: VehicleParams,
                config: Optional[OCPConfig] = None) -> Optional[MotionPrimitive]:
    """
    Solve for a motion primitive from the canonical start x0 = (0, 0, 0, s0) to x1

    Args:
        x0: Canonical start (origin pose, library steering)
        x1: Target reduced state in the canonical frame
        params: Vehicle parameters
        config: Solver settings

    Returns:
        MotionPrimitive, or None when the solver did not meet its tolerances
    """
    if abs(x0[0]) > 0 or abs(x0[1]) > 0 or abs(x0[2]) > 0:
        raise ValueError(f"Motion primitives start at the origin pose, got {tuple(x0)}")
    x0 = ReducedState.from_array(x0)
    x1 = ReducedState.from_array(x1).normalized()
    if (x1.x, x1.y, x1.theta0, x1.s) == (0.0, 0.0, 0.0, x0.s):
        raise DegenerateRequestError("Motion primitive target equals its start")
    solution = solve_ocp(lift(x0, params), lift(x1, params), params, config)
    if not solution.success:
        logger.debug(f"Infeasible primitive s0={x0.s} -> {tuple(x1)}: {solution.message}")
        return None
    return _primitive_from_solution(x0.s, x1, solution, (config or OCPConfig()).sample_dt)


def mirror_mp(mp: MotionPrimitive) -> MotionPrimitive:
    """Reflect a primitive across the x axis: y, theta0, s and the hitch angles change sign."""
    states = mp.traj.states.copy()
    states[:, 1] = -states[:, 1]
    states[:, 2] = wrap_angle(-states[:, 2])
    states[:, 3:] = -states[:, 3:]
    controls = mp.traj.controls.copy()
    controls[:, 1] = -controls[:, 1]
    segments = mp.segments.copy()
    segments[:, 1] = -segments[:, 1]
    t = mp.target
    target = ReducedState(t.x, -t.y, wrap_angle(-t.theta0), -t.s)
    traj = Trajectory(states, controls, mp.traj.durations.copy(), mp.traj.max_step)
    return MotionPrimitive(-mp.s0 + 0.0, target, segments, traj, mp.cost, classify_mode(target), not mp.mirrored,
                           mp.sample_dt)


def successor_state(node, mp: MotionPrimitive) -> ReducedState:
    """Reduced state reached by applying `mp` at `node`, without moving its trajectory."""
    x, y, theta, s = (float(v) for v in node)
    if abs(s - mp.s0) > STEERING_KEY_TOL:
        raise BucketMismatchError(f"Primitive from bucket s={mp.s0} applied at node with s={s}")
    c, sn = math.cos(theta), math.sin(theta)
    t = mp.target
    return ReducedState(x + c * t.x - sn * t.y, y + sn * t.x + c * t.y, wrap_angle(theta + t.theta0), t.s)


def apply_mp(node, mp: MotionPrimitive, params: VehicleParams) -> Tuple[ReducedState, Trajectory]:
    """
    Place a canonical primitive at a search node

    Args:
        node: Reduced state whose steering must match the primitive's bucket
        mp: Motion primitive
        params: Vehicle parameters

    Returns:
        Tuple of (successor reduced state, world-frame trajectory)
    """
    nxt = successor_state(node, mp)
    x, y, theta = (float(v) for v in tuple(node)[:3])
    return nxt, mp.traj.transformed(x, y, theta)


class MPLibrary:
    """Motion primitives bucketed by their initial steering value."""

    def __init__(self, buckets: Dict[float, List[MotionPrimitive]], params_hash: str,
                 metadata: Optional[Dict] = None):
        self._buckets = {float(k): list(v) for k, v in sorted(buckets.items())}
        self.params_hash = params_hash
        self.metadata = metadata or {}
        self._by_mode: Dict[float, Dict[Mode, List[MotionPrimitive]]] = {}

    @property
    def steering_values(self) -> List[float]:
        return list(self._buckets)

    def __len__(self) -> int:
        return sum(len(b) for b in self._buckets.values())

    def __iter__(self) -> Iterable[MotionPrimitive]:
        for bucket in self._buckets.values():
            yield from bucket

    def _key(self, s: float) -> float:
        for key in self._buckets:
            if abs(key - s) <= STEERING_KEY_TOL:
                return key
        raise BucketMismatchError(f"No primitive bucket for steering {s}")

    def bucket(self, s: float) -> List[MotionPrimitive]:
        return self._buckets[self._key(s)]

    def by_mode(self, s: float) -> Dict[Mode, List[MotionPrimitive]]:
        key = self._key(s)
        if key not in self._by_mode:
            grouped: Dict[Mode, List[MotionPrimitive]] = {mode: [] for mode in MODES}
            for mp in self._buckets[key]:
                grouped[mp.mode].append(mp)
            self._by_mode[key] = grouped
        return self._by_mode[key]

    def snap_steering(self, s: float) -> Tuple[float, float]:
        """Nearest library steering and the distance to it."""
        key = min(self._buckets, key=lambda k: abs(k - s))
        return key, abs(key - s)

    def mode_counts(self) -> Dict[float, Dict[str, int]]:
        return {s: {mode.value: len(mps) for mode, mps in self.by_mode(s).items()} for s in self._buckets}

    def to_dict(self) -> Dict:
        return {
            'buckets': [{'s0': s, 'primitives': [mp.to_dict() for mp in mps]} for s, mps in self._buckets.items()],
            'format_version': LIBRARY_FORMAT_VERSION,
            'metadata': self.metadata,
            'params_hash': self.params_hash,
        }


@dataclass
class GenerationReport:
    attempted: int = 0
    feasible: int = 0
    mirrored_added: int = 0
    infeasible_pairs: List[Dict] = field(default_factory=list)
    counts: Dict[float, Dict[str, int]] = field(default_factory=dict)
    elapsed_s: float = 0.0

    @property
    def feasible_fraction(self) -> float:
        return self.feasible / self.attempted if self.attempted else 0.0

    def to_dict(self) -> Dict:
        return {
            'attempted': self.attempted,
            'counts': {str(k): v for k, v in self.counts.items()},
            'elapsed_s': self.elapsed_s,
            'feasible': self.feasible,
            'feasible_fraction': self.feasible_fraction,
            'infeasible_pairs': self.infeasible_pairs,
            'mirrored_added': self.mirrored_added,
        }


def _canonical_half(target: np.ndarray) -> bool:
    """For the s0 = 0 bucket, solve only targets whose reflection is not solved instead."""
    y, theta, s = float(target[1]), float(target[2]), float(target[3])
    key = (y, 0.0 if theta == math.pi else theta, s)
    mirrored = (-y, 0.0 if theta == math.pi else -theta, -s)
    return key >= mirrored


def _solve_pair(job: Tuple[float, Tuple[float, ...], VehicleParams, OCPConfig]):
    s0, target, params, config = job
    x1 = ReducedState(*target)
    try:
        solution = solve_ocp(lift(ReducedState(0.0, 0.0, 0.0, s0), params), lift(x1, params), params, config)
    except Exception as e:
        return s0, x1, None, f"{type(e).__name__}: {e}"
    if not solution.success:
        return s0, x1, None, solution.message
    return s0, x1, _primitive_from_solution(s0, x1, solution, config.sample_dt), 'converged'


def generate_library(lattice: Lattice, params: VehicleParams, config: Optional[OCPConfig] = None,
                     threads: int = 1) -> Tuple[MPLibrary, GenerationReport]:
    """
    Solve every (non-negative start steering, lattice target) pair and add mirrored copies

    Args:
        lattice: Target lattice
        params: Vehicle parameters
        config: Solver settings
        threads: Worker processes; results are merged in job order

    Returns:
        Tuple of (MPLibrary, GenerationReport)
    """
    config = (config or OCPConfig()).validate()
    started = time.perf_counter()
    jobs = []
    for s0 in lattice.nonnegative_steering:
        s0 = float(s0)
        for target in lattice.targets:
            if target[0] == 0.0 and target[1] == 0.0 and target[2] == 0.0 and target[3] == s0:
                continue
            if s0 == 0.0 and not _canonical_half(target):
                continue
            jobs.append((s0, tuple(float(v) for v in target), params, config))
    logger.info(f"Generating motion primitives: {len(jobs)} boundary-value problems on {threads} worker(s)")

    if threads > 1:
        with multiprocessing.Pool(threads) as pool:
            results = list(pool.imap(_solve_pair, jobs, chunksize=4))
    else:
        results = [_solve_pair(job) for job in jobs]

    report = GenerationReport(attempted=len(jobs))
    buckets: Dict[float, List[MotionPrimitive]] = {float(s): [] for s in lattice.s_values}
    for s0, target, mp, message in results:
        if mp is None:
            report.infeasible_pairs.append({'s0': s0, 'target': list(target), 'reason': message})
            continue
        report.feasible += 1
        buckets[s0].append(mp)
        if not mp.is_self_symmetric():
            mirror = mirror_mp(mp)
            buckets[mirror.s0].append(mirror)
            report.mirrored_added += 1

    if report.infeasible_pairs:
        logger.warning(f"{len(report.infeasible_pairs)} of {report.attempted} primitive solves were infeasible")
    for s, mps in buckets.items():
        if not mps:
            logger.warning(f"Primitive bucket s={s} is empty")

    metadata = {
        'cost_function': COST_FUNCTION_ID,
        'lattice': lattice.spec.to_dict(),
        'ocp': config.to_dict(),
        'params': params.to_dict(),
    }
    library = MPLibrary(buckets, params.params_hash(), metadata)
    report.counts = library.mode_counts()
    report.elapsed_s = time.perf_counter() - started
    logger.info(f"Generated {len(library)} primitives ({report.feasible_fraction:.1%} of solves feasible) "
                f"in {report.elapsed_s:.1f}s")
    return library, report


def save_library(library: MPLibrary, file_path: str) -> None:
    """Write a library as sorted-key JSON; a .gz suffix compresses it."""
    save_results(library.to_dict(), file_path)


def verify_primitive(mp: MotionPrimitive, params: VehicleParams, tol: float = INTEGRITY_TOL) -> bool:
    """Re-simulate a primitive's segments and compare against its stored samples."""
    resim = simulate_controls(mp.traj.states[0], [tuple(seg) for seg in mp.segments], params,
                              sample_dt=mp.sample_dt, max_step=mp.traj.max_step)
    if resim.states.shape != mp.traj.states.shape:
        return False
    return bool(np.max(np.abs(resim.states - mp.traj.states)) <= tol
                and np.max(np.abs(resim.controls - mp.traj.controls), initial=0.0) <= tol
                and np.max(np.abs(resim.durations - mp.traj.durations), initial=0.0) <= tol)


def load_library(file_path: str, params: VehicleParams, check_fraction: float = 0.05,
                 seed: int = 0) -> MPLibrary:
    """
    Load a library, checking the parameter hash and re-simulating a random sample of primitives

    Args:
        file_path: Library file
        params: Current vehicle parameters
        check_fraction: Fraction of primitives re-simulated (1.0 checks all)
        seed: Sampling seed

    Returns:
        MPLibrary
    """
    data = load_json_data(file_path)
    check_format_version(data, LIBRARY_FORMAT_MAJOR, 'Motion-primitive library')
    stored_hash = data.get('params_hash')
    if stored_hash != params.params_hash():
        logger.error(f"Library {file_path} was built for parameters {stored_hash}, current {params.params_hash()}")
        raise ParamsHashMismatchError(f"Library params hash {stored_hash} != {params.params_hash()}")
    try:
        buckets = {float(b['s0']): [MotionPrimitive.from_dict(rec) for rec in b['primitives']]
                   for b in data['buckets']}
    except (KeyError, TypeError) as e:
        raise LibraryFormatError(f"Malformed library {file_path}: {e}") from e
    library = MPLibrary(buckets, stored_hash, data.get('metadata', {}))

    all_mps = list(library)
    if all_mps and check_fraction > 0:
        n_check = min(len(all_mps), max(1, int(math.ceil(check_fraction * len(all_mps)))))
        rng = np.random.default_rng(seed)
        for idx in sorted(rng.choice(len(all_mps), size=n_check, replace=False)):
            mp = all_mps[idx]
            if not verify_primitive(mp, params):
                logger.error(f"Primitive {idx} (s0={mp.s0}, target={tuple(mp.target)}) failed re-simulation")
                raise LibraryIntegrityError(f"Primitive {idx} in {file_path} does not match its controls")
    logger.info(f"Loaded library with {len(library)} primitives from {file_path}")
    return library
