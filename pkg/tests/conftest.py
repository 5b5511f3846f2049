import os
import sys

import numpy as np
import pytest

# Add the project root to the path so we can import our modules
sys.path.append(os.path.abspath(os.path.join(os.path.dirname(__file__), '..')))

from src.trailer_planner.geometry.collision import Environment
from src.trailer_planner.planner.search import PlannerConfig
from src.trailer_planner.primitives.library import MotionPrimitive, MPLibrary, classify_mode
from src.trailer_planner.primitives.ocp import trajectory_cost
from src.trailer_planner.scenario import Scenario
from src.trailer_planner.vehicle.model import ReducedState, VehicleParams, lift, simulate_controls, wrap_angle

# (v, s, duration) segments of the straight-line toy primitives
TOY_SEGMENTS = {
    'forward_2m': [(1.0, 0.0, 2.0)],
    'forward_4m': [(1.0, 0.0, 4.0)],
    'backward_2m': [(-1.0, 0.0, 2.0)],
}


def make_primitive(segments, params, s0=0.0):
    """Primitive built by rolling out segments from the canonical start."""
    traj = simulate_controls(lift(ReducedState(0.0, 0.0, 0.0, s0), params), segments, params)
    end = traj.final_state
    target = ReducedState(float(end[0]), float(end[1]), wrap_angle(float(end[2])), float(segments[-1][1]))
    return MotionPrimitive(s0, target, np.array(segments, dtype=float), traj, trajectory_cost(traj),
                           classify_mode(target))


@pytest.fixture
def params():
    return VehicleParams()


@pytest.fixture
def toy_library(params):
    mps = [make_primitive(segs, params) for segs in TOY_SEGMENTS.values()]
    return MPLibrary({0.0: mps}, params.params_hash(), {'toy': True})


@pytest.fixture
def open_env():
    return Environment((0.0, 60.0, 0.0, 40.0), [], 0.0)


@pytest.fixture
def open_scenario(open_env):
    return Scenario(
        name='open_field',
        environment=open_env,
        start=ReducedState(10.0, 20.0, 0.0, 0.0),
        goal=ReducedState(18.0, 20.0, 0.0, 0.0),
        planner=PlannerConfig(heuristic_kind='rs', max_iterations=5000, time_cap_s=60.0),
    )


@pytest.fixture
def primitive_factory(params):
    def factory(segments, s0=0.0):
        return make_primitive(segments, params, s0)
    return factory
