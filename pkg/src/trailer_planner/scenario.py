"""
Planning scenarios: environment, endpoints, vehicle and per-query settings.

Files use explicit units in field names (`_m`, `_rad`) so the corpus can be
reviewed and edited by hand.
"""

import dataclasses
import glob
import logging
import os
from dataclasses import dataclass, field
from typing import Dict, List, Optional

from src.trailer_planner.config.settings import apply_overrides
from src.trailer_planner.errors import InvalidParamsError, ScenarioError
from src.trailer_planner.geometry.collision import Environment, FootprintDims, state_in_collision
from src.trailer_planner.planner.distance import Tolerances
from src.trailer_planner.planner.search import PlannerConfig
from src.trailer_planner.tracking.lqr import LQRConfig
from src.trailer_planner.utils.io_utils import check_format_version, load_json_data, save_results
from src.trailer_planner.vehicle.model import ReducedState, VehicleParams, lift

logger = logging.getLogger('TrailerPlanner')

SCENARIO_FORMAT_VERSION = '1.0'
SCENARIO_FORMAT_MAJOR = 1


def _state_to_dict(state: ReducedState) -> Dict:
    return {'x_m': state.x, 'y_m': state.y, 'theta0_rad': state.theta0, 's': state.s}


def _state_from_dict(data: Dict) -> ReducedState:
    return ReducedState(float(data['x_m']), float(data['y_m']), float(data['theta0_rad']), float(data.get('s', 0.0)))


def _tolerances_to_dict(tol: Tolerances) -> Dict:
    return {
        'eps1_m': tol.eps1, 'eps2_m': tol.eps2, 'eps3_m': tol.eps3, 'eps4_m': tol.eps4,
        'w_theta_m_per_rad': tol.w_theta, 'w_xi_m_per_rad': tol.w_xi,
        'collision_resolution_m': tol.collision_resolution, 'verify_resolution_m': tol.verify_resolution,
    }


UNIT_SUFFIXES = ('_m_per_rad', '_m_per_s', '_rad', '_m')


def _strip_units(data: Dict) -> Dict:
    out = {}
    for key, value in data.items():
        for suffix in UNIT_SUFFIXES:
            if key.endswith(suffix):
                key = key[:-len(suffix)]
                break
        out[key] = value
    return out


@dataclass
class Scenario:
    name: str
    environment: Environment
    start: ReducedState
    goal: ReducedState
    params: VehicleParams = field(default_factory=VehicleParams)
    footprint: FootprintDims = field(default_factory=FootprintDims)
    tolerances: Tolerances = field(default_factory=Tolerances)
    planner: PlannerConfig = field(default_factory=PlannerConfig)
    lqr: LQRConfig = field(default_factory=LQRConfig)
    library_path: Optional[str] = None
    net_path: Optional[str] = None
    description: str = ''

    def validate(self, check_collisions: bool = True) -> 'Scenario':
        """
        Check tolerances, settings and that both endpoints are collision-free

        Returns:
            self
        """
        self.params.validate()
        try:
            self.tolerances.validate()
            self.planner.validate()
            self.lqr.validate()
        except InvalidParamsError as e:
            raise ScenarioError(f"Scenario {self.name}: {e}") from e
        if check_collisions:
            for label, state in (('start', self.start), ('goal', self.goal)):
                if state_in_collision(lift(state, self.params), self.environment, self.params, self.footprint):
                    raise ScenarioError(f"Scenario {self.name}: {label} configuration is in collision")
        return self

    def to_dict(self) -> Dict:
        return {
            'description': self.description,
            'environment': self.environment.to_dict(),
            'footprint': self.footprint.to_dict(),
            'format_version': SCENARIO_FORMAT_VERSION,
            'goal': _state_to_dict(self.goal),
            'library_path': self.library_path,
            'lqr': {k: list(v) if isinstance(v, tuple) else v for k, v in dataclasses.asdict(self.lqr).items()},
            'name': self.name,
            'net_path': self.net_path,
            'planner': dataclasses.asdict(self.planner),
            'start': _state_to_dict(self.start),
            'tolerances': _tolerances_to_dict(self.tolerances),
            'vehicle': {
                'L_m': self.params.L, 'R_m': self.params.R,
                'd1_m': self.params.d1, 'd2_m': self.params.d2, 'd3_m': self.params.d3,
                'xi_max_rad': self.params.xi_max, 'v_max_m_per_s': self.params.v_max,
            },
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'Scenario':
        check_format_version(data, SCENARIO_FORMAT_MAJOR, 'Scenario')
        try:
            vehicle = _strip_units(data.get('vehicle', {}))
            return cls(
                name=str(data['name']),
                environment=Environment.from_dict(data['environment']),
                start=_state_from_dict(data['start']),
                goal=_state_from_dict(data['goal']),
                params=VehicleParams.from_dict(vehicle) if vehicle else VehicleParams(),
                footprint=FootprintDims.from_dict(data.get('footprint')),
                tolerances=apply_overrides(Tolerances(), _strip_units(data.get('tolerances', {}))),
                planner=apply_overrides(PlannerConfig(), data.get('planner')),
                lqr=apply_overrides(LQRConfig(), data.get('lqr')),
                library_path=data.get('library_path'),
                net_path=data.get('net_path'),
                description=data.get('description', ''),
            )
        except (KeyError, TypeError, ValueError) as e:
            raise ScenarioError(f"Malformed scenario: {e}") from e
        except InvalidParamsError as e:
            raise ScenarioError(f"Invalid scenario settings: {e}") from e


def save_scenario(scenario: Scenario, file_path: str) -> None:
    save_results(scenario.to_dict(), file_path)


def load_scenario(file_path: str, validate: bool = True) -> Scenario:
    """
    Load a scenario file and resolve its artifact paths relative to the file

    Args:
        file_path: Path to the scenario JSON
        validate: Also check tolerances and endpoint collisions

    Returns:
        Scenario
    """
    data = load_json_data(file_path)
    if not isinstance(data, dict):
        raise ScenarioError(f"Scenario file {file_path} must contain a JSON object")
    scenario = Scenario.from_dict(data)
    base = os.path.dirname(os.path.abspath(file_path))
    for attr in ('library_path', 'net_path'):
        value = getattr(scenario, attr)
        if value and not os.path.isabs(value):
            setattr(scenario, attr, os.path.normpath(os.path.join(base, value)))
    return scenario.validate() if validate else scenario


def load_corpus(directory: str, validate: bool = True) -> List[Scenario]:
    """All scenarios in a directory, ordered by file name."""
    paths = sorted(glob.glob(os.path.join(directory, '*.json')))
    if not paths:
        raise ScenarioError(f"No scenario files found in {directory}")
    scenarios = [load_scenario(p, validate) for p in paths]
    logger.info(f"Loaded {len(scenarios)} scenarios from {directory}")
    return scenarios
