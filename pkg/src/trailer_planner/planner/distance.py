"""
Goal metric and tolerances shared by the search and the goal connection.
"""

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.trailer_planner.errors import InvalidParamsError
from src.trailer_planner.vehicle.model import VehicleParams, lift, wrap_angle


@dataclass(frozen=True)
class Tolerances:
    """
    eps1 accepts a selected node as the goal, eps2 triggers a goal connection,
    eps3 and eps4 gate its two tracking stages. Weights scale heading and hitch
    errors into meters.
    """
    eps1: float = 0.25
    eps2: float = 3.0
    eps3: float = 1.0
    eps4: float = 0.2
    w_theta: float = 2.0
    w_xi: float = 1.0
    collision_resolution: float = 0.1
    verify_resolution: float = 0.02

    def validate(self) -> 'Tolerances':
        values = (self.eps1, self.eps2, self.eps3, self.eps4, self.w_theta, self.w_xi,
                  self.collision_resolution, self.verify_resolution)
        if min(values) <= 0:
            raise InvalidParamsError("All tolerances and metric weights must be positive")
        return self


def _as_full(state, params: Optional[VehicleParams]) -> np.ndarray:
    arr = np.asarray(state, dtype=float)
    if arr.shape[-1] == 6:
        return arr
    if params is None:
        raise ValueError("Reduced states need vehicle parameters to be lifted")
    return np.asarray(lift(arr, params), dtype=float)


def goal_distance(a, b, params: Optional[VehicleParams] = None, tolerances: Optional[Tolerances] = None) -> float:
    """
    Weighted distance between two states

    Args:
        a: Full (6) or reduced (4) state
        b: Full (6) or reduced (4) state
        params: Needed to lift reduced states
        tolerances: Source of the heading and hitch weights

    Returns:
        Euclidean position error plus weighted wrapped angle errors
    """
    tol = tolerances or Tolerances()
    fa, fb = _as_full(a, params), _as_full(b, params)
    diff = fa - fb
    angles = np.abs(wrap_angle(diff[2:6]))
    return float(math.hypot(diff[0], diff[1]) + tol.w_theta * angles[0] + tol.w_xi * np.sum(angles[1:]))
