"""
SVG rendering of environments, footprints and planned trajectories.
"""

import logging
from typing import Dict, List, Optional

import matplotlib

matplotlib.use('Agg')

import matplotlib.pyplot as plt  # noqa: E402
from matplotlib.patches import Polygon  # noqa: E402

from src.trailer_planner.geometry.collision import footprint_at  # noqa: E402
from src.trailer_planner.vehicle.model import lift  # noqa: E402

logger = logging.getLogger('TrailerPlanner')

OBSTACLE_COLOR = '#9e9e9e'
START_COLOR = '#008000'
GOAL_COLOR = '#c8102e'
PATH_COLOR = '#1f4fd8'
TREE_COLOR = '#b0b0b0'
# Fixed salt keeps generated element ids identical between runs
SVG_HASH_SALT = 'trailer-planner'


def _draw_footprint(ax, state, scenario, color: str, label: str) -> None:
    for i, rect in enumerate(footprint_at(lift(state, scenario.params), scenario.params, scenario.footprint)):
        ax.add_patch(Polygon(rect.corners(), closed=True, facecolor=color, edgecolor='black', alpha=0.5,
                             linewidth=0.6, label=label if i == 0 else None))


def plot_plan(scenario, result=None, file_path: str = 'plan.svg', tree: Optional[List[Dict]] = None,
              footprint_stride: int = 0) -> str:
    """
    Render a scenario and optionally a plan to SVG

    Args:
        scenario: Scenario providing environment, endpoints and vehicle
        result: PlanResult whose tractor path is drawn in blue (skipped when None or failed)
        file_path: Output path
        tree: Optional tree dump edges (dicts with 'xy_m' polylines)
        footprint_stride: Draw the rig every N trajectory samples along the path (0 disables)

    Returns:
        The written file path
    """
    env = scenario.environment
    fig, ax = plt.subplots(figsize=(8, 8))
    try:
        x_min, x_max, y_min, y_max = env.bounds
        ax.plot([x_min, x_max, x_max, x_min, x_min], [y_min, y_min, y_max, y_max, y_min], color='black', linewidth=1.0)
        for i, poly in enumerate(env.obstacles):
            ax.add_patch(Polygon(poly, closed=True, facecolor=OBSTACLE_COLOR, edgecolor='none',
                                 label='obstacle' if i == 0 else None))

        if tree:
            for edge in tree:
                xy = edge['xy_m']
                ax.plot([p[0] for p in xy], [p[1] for p in xy], color=TREE_COLOR, linewidth=0.4)

        _draw_footprint(ax, scenario.start, scenario, START_COLOR, 'start')
        _draw_footprint(ax, scenario.goal, scenario, GOAL_COLOR, 'goal')

        if result is not None and result.success and len(result.trajectory.states):
            states = result.trajectory.states
            ax.plot(states[:, 0], states[:, 1], color=PATH_COLOR, linewidth=1.5, label='tractor path')
            if footprint_stride > 0:
                for st in states[::footprint_stride]:
                    for rect in footprint_at(st, scenario.params, scenario.footprint):
                        corners = rect.corners()
                        ax.plot(list(corners[:, 0]) + [corners[0, 0]], list(corners[:, 1]) + [corners[0, 1]],
                                color=PATH_COLOR, linewidth=0.4, alpha=0.45)

        ax.set_xlim(x_min, x_max)
        ax.set_ylim(y_min, y_max)
        ax.set_aspect('equal')
        ax.set_title(scenario.name)
        ax.legend(loc='upper right', fontsize=8)

        with plt.rc_context({'svg.hashsalt': SVG_HASH_SALT}):
            fig.savefig(file_path, format='svg', metadata={'Date': None})
    finally:
        plt.close(fig)
    logger.info(f"Plot saved to {file_path}")
    return file_path
