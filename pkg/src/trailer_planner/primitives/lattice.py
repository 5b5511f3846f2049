"""
Target lattice for motion-primitive generation
"""

import logging
import math
from dataclasses import asdict, dataclass
from typing import Dict, List, Optional

import numpy as np

from src.trailer_planner.errors import LatticeSpecError
from src.trailer_planner.vehicle.model import ReducedState, wrap_angle

logger = logging.getLogger('TrailerPlanner')


@dataclass(frozen=True)
class LatticeSpec:
    """
    Bounds and counts of the (x, y, theta0, s) target grid

    x spans [-Lx, Lx] and y spans [-Ly, Ly]; headings are -pi + 2*pi*k/n_theta for
    k = 1..n_theta, optionally restricted to |theta| <= theta_limit.
    """
    Lx: float = 4.0
    Ly: float = 4.0
    n_x: int = 5
    n_y: int = 5
    n_theta: int = 8
    n_s: int = 9
    theta_limit: Optional[float] = math.pi / 2.0

    def validate(self) -> 'LatticeSpec':
        if self.Lx <= 0 or self.Ly <= 0:
            raise LatticeSpecError(f"Lattice extents must be positive, got Lx={self.Lx}, Ly={self.Ly}")
        if min(self.n_x, self.n_y, self.n_theta, self.n_s) < 1:
            raise LatticeSpecError("Lattice counts must be at least 1")
        for name, count in (('n_x', self.n_x), ('n_y', self.n_y), ('n_s', self.n_s)):
            if count % 2 == 0:
                raise LatticeSpecError(f"{name}={count} must be odd so that 0 lies on the grid")
        if self.theta_limit is not None and self.theta_limit < 0:
            raise LatticeSpecError("theta_limit must be non-negative")
        return self

    def to_dict(self) -> Dict:
        return asdict(self)


@dataclass
class Lattice:
    spec: LatticeSpec
    x_values: np.ndarray
    y_values: np.ndarray
    theta_values: np.ndarray
    s_values: np.ndarray
    targets: np.ndarray

    def __len__(self) -> int:
        return len(self.targets)

    @property
    def nonnegative_steering(self) -> np.ndarray:
        return self.s_values[self.s_values >= 0.0]

    def target_states(self) -> List[ReducedState]:
        return [ReducedState.from_array(row) for row in self.targets]


def build_lattice(spec: LatticeSpec) -> Lattice:
    """
    Build the Cartesian target grid

    Args:
        spec: Lattice bounds and counts

    Returns:
        Lattice holding the per-axis values and an (N, 4) target array
    """
    spec.validate()
    xs = np.linspace(-spec.Lx, spec.Lx, spec.n_x)
    ys = np.linspace(-spec.Ly, spec.Ly, spec.n_y)
    thetas = np.array([wrap_angle(-math.pi + 2.0 * math.pi * k / spec.n_theta) for k in range(1, spec.n_theta + 1)])
    if spec.theta_limit is not None:
        thetas = thetas[np.abs(thetas) <= spec.theta_limit + 1e-12]
    steering = np.linspace(-1.0, 1.0, spec.n_s)
    # Exact antisymmetry keeps mirror pairing and degenerate-target detection clean
    xs, ys, steering = ((a - a[::-1]) / 2.0 for a in (xs, ys, steering))
    for axis in (xs, ys, thetas, steering):
        axis[np.abs(axis) < 1e-12] = 0.0

    grid = np.meshgrid(xs, ys, thetas, steering, indexing='ij')
    targets = np.stack([g.reshape(-1) for g in grid], axis=1)
    logger.debug(f"Built lattice with {len(targets)} targets "
                 f"({len(xs)} x {len(ys)} x {len(thetas)} headings x {len(steering)} steering)")
    return Lattice(spec, xs, ys, thetas, steering, targets)
