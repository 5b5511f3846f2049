"""
Supervised cost-to-go dataset from obstacle-free trajectory optimization.
"""

import logging
import math
import multiprocessing
import time
from dataclasses import asdict, dataclass, field
from typing import Dict, Iterator, List, NamedTuple, Optional, Tuple

import numpy as np
import pandas as pd

from src.trailer_planner.errors import DatasetInfeasibleError, InvalidParamsError, LibraryFormatError
from src.trailer_planner.primitives.ocp import OCPConfig, running_cost, solve_ocp
from src.trailer_planner.utils.io_utils import load_table, save_table
from src.trailer_planner.vehicle.model import ReducedState, VehicleParams, lift, wrap_angle

logger = logging.getLogger('TrailerPlanner')

DATASET_FORMAT_VERSION = '1.0'
DATASET_COLUMNS = ['x', 'y', 'theta0', 's', 'cost_to_go', 'fidelity']
MIN_FEASIBLE_FRACTION = 0.10


@dataclass(frozen=True)
class DatasetSpec:
    """
    Sampling box around the goal (0, 0, 0, 0)

    Starts are drawn uniformly from [-Lx, Lx] x [-Ly, Ly] x (-pi, pi] x [-1, 1].
    `along_samples` extra rows per feasible solve are taken from the interior of
    the optimal trajectory and tagged with fidelity "along".
    """
    n_samples: int = 10000
    Lx: float = 8.0
    Ly: float = 8.0
    along_samples: int = 0

    def validate(self) -> 'DatasetSpec':
        if self.n_samples <= 0:
            raise InvalidParamsError("n_samples must be positive")
        if self.Lx <= 0 or self.Ly <= 0:
            raise InvalidParamsError("Dataset box extents must be positive")
        if self.along_samples < 0:
            raise InvalidParamsError("along_samples must be non-negative")
        return self


class CostSample(NamedTuple):
    state: ReducedState
    cost_to_go: float


@dataclass
class CostDataset:
    frame: pd.DataFrame
    metadata: Dict = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.frame)

    @property
    def feasible_fraction(self) -> float:
        return float(self.metadata.get('feasible_fraction', 1.0))

    def samples(self) -> Iterator[CostSample]:
        for row in self.frame.itertuples(index=False):
            yield CostSample(ReducedState(row.x, row.y, row.theta0, row.s), float(row.cost_to_go))

    def states(self) -> np.ndarray:
        return self.frame[['x', 'y', 'theta0', 's']].to_numpy(dtype=float)

    def costs(self) -> np.ndarray:
        return self.frame['cost_to_go'].to_numpy(dtype=float)


def sample_starts(spec: DatasetSpec, seed: int) -> np.ndarray:
    """(n, 4) uniformly sampled reduced start states."""
    rng = np.random.default_rng(seed)
    n = spec.n_samples
    starts = np.column_stack([
        rng.uniform(-spec.Lx, spec.Lx, n),
        rng.uniform(-spec.Ly, spec.Ly, n),
        wrap_angle(rng.uniform(-math.pi, math.pi, n)),
        rng.uniform(-1.0, 1.0, n),
    ])
    return starts


def _solve_start(job: Tuple[Tuple[float, ...], VehicleParams, OCPConfig, int]):
    start, params, config, along = job
    goal = lift(ReducedState(0.0, 0.0, 0.0, 0.0), params)
    try:
        solution = solve_ocp(lift(ReducedState(*start), params), goal, params, config)
    except Exception as e:
        return start, None, [], f"{type(e).__name__}: {e}"
    if not solution.success:
        return start, None, [], solution.message

    rows: List[Tuple[float, float, float, float, float]] = []
    traj = solution.trajectory
    if along > 0 and len(traj.controls) > 2:
        remaining = np.cumsum((running_cost(traj.controls) * traj.durations)[::-1])[::-1]
        picks = np.linspace(1, len(traj.controls) - 1, along + 2)[1:-1].astype(int)
        for i in np.unique(picks):
            st = traj.states[i]
            rows.append((float(st[0]), float(st[1]), float(wrap_angle(st[2])), float(traj.controls[i, 1]),
                         float(remaining[i])))
    return start, solution.cost, rows, 'converged'


def generate_dataset(spec: DatasetSpec, params: VehicleParams, config: Optional[OCPConfig] = None,
                     seed: int = 0, threads: int = 1) -> CostDataset:
    """
    Solve the obstacle-free problem from sampled starts to the goal (0, 0, 0, 0)

    Args:
        spec: Sampling box and counts
        params: Vehicle parameters
        config: Solver settings
        seed: Sampling seed
        threads: Worker processes; results are merged in sample order

    Returns:
        CostDataset with one row per feasible solve (plus optional along-trajectory rows)
    """
    spec.validate()
    config = (config or OCPConfig()).validate()
    started = time.perf_counter()
    starts = sample_starts(spec, seed)
    jobs = []
    degenerate = 0
    for row in starts:
        if np.all(np.abs(row) < 1e-9):
            degenerate += 1
            continue
        jobs.append((tuple(float(v) for v in row), params, config, spec.along_samples))
    if degenerate:
        logger.warning(f"Dropped {degenerate} sampled start(s) equal to the goal")
    logger.info(f"Generating cost-to-go dataset: {len(jobs)} solves on {threads} worker(s)")

    if threads > 1:
        with multiprocessing.Pool(threads) as pool:
            results = list(pool.imap(_solve_start, jobs, chunksize=8))
    else:
        results = [_solve_start(job) for job in jobs]

    records = []
    feasible = 0
    for start, cost, along_rows, message in results:
        if cost is None:
            logger.debug(f"Dataset solve from {start} infeasible: {message}")
            continue
        feasible += 1
        records.append((*start, cost, 'solve'))
        records.extend((*r, 'along') for r in along_rows)

    fraction = feasible / spec.n_samples
    logger.info(f"Dataset feasible fraction {fraction:.1%} ({feasible}/{spec.n_samples})")
    if fraction < MIN_FEASIBLE_FRACTION:
        logger.error(f"Only {fraction:.1%} of cost-to-go solves were feasible")
        raise DatasetInfeasibleError(f"Feasible fraction {fraction:.3f} below {MIN_FEASIBLE_FRACTION}")

    frame = pd.DataFrame.from_records(records, columns=DATASET_COLUMNS)
    metadata = {
        'box': {'Lx': spec.Lx, 'Ly': spec.Ly},
        'feasible': feasible,
        'feasible_fraction': fraction,
        'format_version': DATASET_FORMAT_VERSION,
        'goal': [0.0, 0.0, 0.0, 0.0],
        'n_requested': spec.n_samples,
        'params_hash': params.params_hash(),
        'seed': seed,
        'spec': asdict(spec),
        'elapsed_s': time.perf_counter() - started,
    }
    return CostDataset(frame, metadata)


def save_dataset(dataset: CostDataset, file_path: str) -> None:
    save_table(dataset.frame[DATASET_COLUMNS], file_path, dataset.metadata)


def load_dataset(file_path: str) -> CostDataset:
    """
    Load a dataset CSV written by save_dataset

    Args:
        file_path: Path to the CSV file

    Returns:
        CostDataset
    """
    frame, metadata = load_table(file_path)
    missing = [c for c in DATASET_COLUMNS if c not in frame.columns]
    if missing:
        raise LibraryFormatError(f"Dataset {file_path} lacks columns {missing}")
    if (frame['cost_to_go'] < 0).any():
        raise LibraryFormatError(f"Dataset {file_path} contains negative costs")
    return CostDataset(frame[DATASET_COLUMNS].copy(), metadata)
