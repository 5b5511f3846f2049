"""
Cost-to-go estimators and the inflated heuristic term of the search f-value.
"""

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from src.trailer_planner.errors import InvalidParamsError
from src.trailer_planner.heuristics.cost_net import CostNet
from src.trailer_planner.heuristics.reeds_shepp import rs_length
from src.trailer_planner.vehicle.model import VehicleParams

logger = logging.getLogger('TrailerPlanner')

HEURISTIC_KINDS = ('nn_rs', 'rs')
TIME_COST_RATE = 1.0


@dataclass(frozen=True)
class HeuristicConfig:
    """
    `kind` "nn_rs" clamps the network between the Reeds-Shepp bound and the cap;
    "rs" uses the Reeds-Shepp bound alone. `cap` defaults to the one stored with the net.
    """
    alpha: float = 1.5
    kind: str = 'nn_rs'
    cap: Optional[float] = None

    def validate(self) -> 'HeuristicConfig':
        if not self.alpha > 1.0:
            raise InvalidParamsError(f"Inflation factor alpha must exceed 1, got {self.alpha}")
        if self.kind not in HEURISTIC_KINDS:
            raise InvalidParamsError(f"Unknown heuristic kind {self.kind}")
        if self.cap is not None and self.cap <= 0:
            raise InvalidParamsError("Heuristic cap must be positive")
        return self


class ReedsSheppCostToGo:
    """Tractor-only Reeds-Shepp length converted to cost units."""

    def __init__(self, params: VehicleParams):
        self.radius = params.R
        self.rate = TIME_COST_RATE / params.v_max

    def __call__(self, state, goal) -> float:
        return rs_length(state, goal, self.radius) * self.rate

    def batch(self, states, goal) -> np.ndarray:
        return np.array([self(st, goal) for st in np.atleast_2d(states)])


class NetCostToGo:
    """Learned cost-to-go evaluated in the goal frame."""

    def __init__(self, net: CostNet):
        self.net = net

    def __call__(self, state, goal) -> float:
        return float(self.net.predict(state, goal)[0])

    def batch(self, states, goal) -> np.ndarray:
        return self.net.predict(states, goal)


class Heuristic:
    """
    Clamped cost-to-go estimate used in the f-value

    raw() is min(max(rs, nn), C) (or rs alone); value() multiplies it by alpha.
    """

    def __init__(self, config: HeuristicConfig, params: VehicleParams, net: Optional[CostNet] = None):
        self.config = config.validate()
        self.rs = ReedsSheppCostToGo(params)
        self.nn = NetCostToGo(net) if net is not None else None
        if config.kind == 'nn_rs' and net is None:
            raise InvalidParamsError("The nn_rs heuristic needs a trained network")
        self.cap = config.cap if config.cap is not None else (net.cap if net is not None else np.inf)
        if not self.cap > 0:
            raise InvalidParamsError("Heuristic cap must be positive")

    def raw_batch(self, states, goal) -> np.ndarray:
        states = np.atleast_2d(np.asarray(states, dtype=float))
        rs = self.rs.batch(states, goal)
        if self.config.kind == 'rs':
            return rs
        return np.minimum(np.maximum(rs, self.nn.batch(states, goal)), self.cap)

    def raw(self, state, goal) -> float:
        return float(self.raw_batch(state, goal)[0])

    def value(self, state, goal) -> float:
        return self.config.alpha * self.raw(state, goal)

    def value_batch(self, states, goal) -> np.ndarray:
        return self.config.alpha * self.raw_batch(states, goal)


def heuristic(state, goal, net: CostNet, alpha: float, cap: float, params: VehicleParams) -> float:
    """
    Inflated clamped estimate alpha * min(max(RS, NN), C)

    Args:
        state: Reduced state
        goal: Reduced goal state
        net: Trained cost network
        alpha: Inflation factor, must exceed 1
        cap: Upper clamp C
        params: Vehicle parameters (turning radius and speed bound for the RS term)

    Returns:
        Heuristic value in cost units
    """
    return Heuristic(HeuristicConfig(alpha=alpha, kind='nn_rs', cap=cap), params, net).value(state, goal)
