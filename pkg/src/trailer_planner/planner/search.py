"""
Best-first search over the motion-primitive tree.

One search loop serves three planners:
- DE-AGT: delayed expansion, one mode per selection, NN+RS heuristic, LQR goal connection
- i-AGT-RS: all primitives per selection, Reeds-Shepp heuristic, no LQR by default
- i-AGT-NN-full: all primitives per selection with the DE-AGT heuristic
"""

import heapq
import itertools
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from typing import TYPE_CHECKING, Dict, List, Optional, Set, Tuple

import numpy as np

from src.trailer_planner.errors import InvalidParamsError, ScenarioError
from src.trailer_planner.geometry.collision import state_in_collision, trajectory_collision_free
from src.trailer_planner.heuristics.cost_net import CostNet
from src.trailer_planner.heuristics.heuristic import Heuristic, HeuristicConfig
from src.trailer_planner.planner.distance import Tolerances, goal_distance
from src.trailer_planner.primitives.library import MODES, MotionPrimitive, MPLibrary, apply_mp, successor_state
from src.trailer_planner.primitives.ocp import trajectory_cost
from src.trailer_planner.tracking.lqr import LQRConfig, lqr_connect, state_difference
from src.trailer_planner.utils.io_utils import check_format_version
from src.trailer_planner.vehicle.model import ReducedState, Trajectory, concatenate, lift

if TYPE_CHECKING:
    from src.trailer_planner.scenario import Scenario

logger = logging.getLogger('TrailerPlanner')

PLANNER_IDS = ('deagt', 'iagt_rs', 'iagt_nn_full')
RESIMULATION_TOL = 1e-6
RESULT_FORMAT_VERSION = '1.0'
RESULT_FORMAT_MAJOR = 1


@dataclass(frozen=True)
class PlannerConfig:
    alpha: float = 1.5
    cap: Optional[float] = None
    heuristic_kind: str = 'nn_rs'
    delayed_expansion: bool = True
    use_lqr: bool = True
    baseline_lqr: bool = False
    max_iterations: int = 200000
    time_cap_s: float = 500.0
    visited_filter: bool = False
    visited_cell_m: float = 0.25
    visited_cell_deg: float = 10.0
    threads: int = 1
    dump_tree: bool = False

    def validate(self) -> 'PlannerConfig':
        if self.max_iterations <= 0:
            raise InvalidParamsError("max_iterations must be positive")
        if self.time_cap_s <= 0:
            raise InvalidParamsError("time_cap_s must be positive")
        if self.threads < 1:
            raise InvalidParamsError("threads must be at least 1")
        if self.visited_cell_m <= 0 or self.visited_cell_deg <= 0:
            raise InvalidParamsError("Visited filter cells must be positive")
        HeuristicConfig(self.alpha, self.heuristic_kind, self.cap).validate()
        return self


@dataclass
class TreeNode:
    """
    Search tree node

    `mode_costs` stays None until the node is first selected; expanded or empty
    modes hold infinity.
    """
    index: int
    state: ReducedState
    full_state: np.ndarray
    g: float
    f: float
    parent: Optional[int] = None
    edge: Optional[Trajectory] = None
    edge_cost: float = 0.0
    mode_costs: Optional[np.ndarray] = None
    expanded_once: bool = False
    via_lqr: bool = False
    depth: int = 0

    @property
    def exhausted(self) -> bool:
        return self.mode_costs is not None and not np.isfinite(self.mode_costs).any()


class SearchQueue:
    """Min-first priority queue keyed by (f, -g, insertion order) with lazy removal."""

    def __init__(self):
        self._heap: List[Tuple[float, float, int, int]] = []
        self._counter = itertools.count()
        self._members: Set[int] = set()

    def push(self, node: TreeNode) -> None:
        heapq.heappush(self._heap, (node.f, -node.g, next(self._counter), node.index))
        self._members.add(node.index)

    def top(self) -> Optional[int]:
        while self._heap and self._heap[0][3] not in self._members:
            heapq.heappop(self._heap)
        return self._heap[0][3] if self._heap else None

    def remove(self, index: int) -> None:
        self._members.discard(index)

    def __len__(self) -> int:
        return len(self._members)

    def __contains__(self, index: int) -> bool:
        return index in self._members


@dataclass
class PlanResult:
    success: bool
    status: str
    planner: str
    trajectory: Trajectory
    edges: List[Trajectory] = field(default_factory=list)
    path_length: float = 0.0
    cost: float = 0.0
    mps_explored: int = 0
    nodes_expanded: int = 0
    nodes_created: int = 0
    iterations: int = 0
    wall_time_s: float = 0.0
    terminal_error: np.ndarray = field(default_factory=lambda: np.full(6, np.nan))
    lqr_attempts: int = 0
    lqr_accepted: int = 0
    start_snap: float = 0.0
    tree: Optional[List[Dict]] = None

    def to_dict(self, include_timing: bool = True) -> Dict:
        data = {
            'cost': self.cost,
            'format_version': RESULT_FORMAT_VERSION,
            'iterations': self.iterations,
            'lqr_accepted': self.lqr_accepted,
            'lqr_attempts': self.lqr_attempts,
            'mps_explored': self.mps_explored,
            'nodes_created': self.nodes_created,
            'nodes_expanded': self.nodes_expanded,
            'path_length_m': self.path_length,
            'planner': self.planner,
            'start_snap': self.start_snap,
            'status': self.status,
            'success': self.success,
            'terminal_error': [float(v) for v in self.terminal_error],
            'trajectory': self.trajectory.to_dict(),
        }
        if include_timing:
            data['wall_time_s'] = self.wall_time_s
        if self.tree is not None:
            data['tree'] = self.tree
        return data

    @classmethod
    def from_dict(cls, data: Dict) -> 'PlanResult':
        """Rebuild a result written by to_dict; per-edge trajectories are not stored and come back empty."""
        check_format_version(data, RESULT_FORMAT_MAJOR, 'Plan result')
        return cls(
            success=bool(data['success']),
            status=str(data['status']),
            planner=str(data['planner']),
            trajectory=Trajectory.from_dict(data['trajectory']),
            path_length=float(data.get('path_length_m', 0.0)),
            cost=float(data.get('cost', 0.0)),
            mps_explored=int(data.get('mps_explored', 0)),
            nodes_expanded=int(data.get('nodes_expanded', 0)),
            nodes_created=int(data.get('nodes_created', 0)),
            iterations=int(data.get('iterations', 0)),
            wall_time_s=float(data.get('wall_time_s', 0.0)),
            terminal_error=np.array(data.get('terminal_error', [np.nan] * 6), dtype=float),
            lqr_attempts=int(data.get('lqr_attempts', 0)),
            lqr_accepted=int(data.get('lqr_accepted', 0)),
            start_snap=float(data.get('start_snap', 0.0)),
            tree=data.get('tree'),
        )


@dataclass
class VerificationReport:
    ok: bool
    issues: List[str] = field(default_factory=list)


def mode_cost_table(node: TreeNode, library: MPLibrary, goal: ReducedState, heuristic: Heuristic) -> np.ndarray:
    """
    Average H = cost(mp) + cost-to-go(n_next) over the primitives of each mode

    Args:
        node: Node whose steering selects the bucket
        library: Motion primitive library
        goal: Goal reduced state
        heuristic: Un-inflated cost-to-go source

    Returns:
        (4,) mode costs in MODES order; empty modes are infinite
    """
    grouped = library.by_mode(node.state.s)
    members: List[MotionPrimitive] = [mp for mode in MODES for mp in grouped[mode]]
    table = np.full(len(MODES), np.inf)
    if not members:
        return table
    successors = np.array([successor_state(node.state, mp) for mp in members])
    h = np.array([mp.cost for mp in members]) + heuristic.raw_batch(successors, goal)
    start = 0
    for i, mode in enumerate(MODES):
        count = len(grouped[mode])
        if count:
            table[i] = float(np.mean(h[start:start + count]))
        start += count
    return table


class TreeSearch:
    """State of one planning query: tree, queue, counters and the expansion step."""

    def __init__(self, scenario: 'Scenario', library: MPLibrary, heuristic: Heuristic,
                 config: PlannerConfig, use_lqr: bool, planner_id: str,
                 lqr_config: Optional[LQRConfig] = None):
        self.scenario = scenario
        self.library = library
        self.heuristic = heuristic
        self.config = config
        self.use_lqr = use_lqr
        self.planner_id = planner_id
        self.lqr_config = lqr_config or scenario.lqr
        self.params = scenario.params
        self.tolerances: Tolerances = scenario.tolerances
        self.goal = ReducedState(*scenario.goal)
        self.goal_full = np.asarray(lift(self.goal, self.params))
        self.nodes: List[TreeNode] = []
        self.queue = SearchQueue()
        self.visited: Set[Tuple[int, int, int, float]] = set()
        self.mps_explored = 0
        self.nodes_expanded = 0
        self.lqr_attempts = 0
        self.lqr_accepted = 0
        self.executor: Optional[ThreadPoolExecutor] = None

    def _visited_key(self, state: ReducedState) -> Tuple[int, int, int, float]:
        cell = self.config.visited_cell_m
        dtheta = math.radians(self.config.visited_cell_deg)
        return (int(math.floor(state.x / cell)), int(math.floor(state.y / cell)),
                int(math.floor(state.theta0 / dtheta)), round(float(state.s), 9))

    def add_node(self, state: ReducedState, full_state: np.ndarray, g: float, parent: Optional[TreeNode],
                 edge: Optional[Trajectory], edge_cost: float, via_lqr: bool = False) -> TreeNode:
        node = TreeNode(
            index=len(self.nodes),
            state=state,
            full_state=np.asarray(full_state, dtype=float),
            g=g,
            f=g + float(self.heuristic.value(state, self.goal)),
            parent=None if parent is None else parent.index,
            edge=edge,
            edge_cost=edge_cost,
            via_lqr=via_lqr,
            depth=0 if parent is None else parent.depth + 1,
        )
        self.nodes.append(node)
        self.queue.push(node)
        if self.config.visited_filter:
            self.visited.add(self._visited_key(state))
        return node

    def _collision_free(self, trajs: List[Trajectory]) -> List[bool]:
        def check(traj: Trajectory) -> bool:
            return bool(trajectory_collision_free(traj, self.scenario.environment, self.params,
                                                  self.scenario.footprint, self.tolerances.collision_resolution))

        if self.executor is not None:
            return list(self.executor.map(check, trajs))
        return [check(t) for t in trajs]

    def modes_to_expand(self, node: TreeNode) -> List[int]:
        if node.mode_costs is None:
            node.mode_costs = mode_cost_table(node, self.library, self.goal, self.heuristic)
        finite = np.flatnonzero(np.isfinite(node.mode_costs))
        if len(finite) == 0:
            return []
        if self.config.delayed_expansion:
            # np.argmin keeps the first of equal costs, so ties follow MODES order
            return [int(finite[np.argmin(node.mode_costs[finite])])]
        return [int(i) for i in finite]

    def expand(self, node: TreeNode) -> int:
        """
        Expand the cheapest unexpanded mode of `node` (or all modes without delayed expansion)

        Returns:
            Number of children added
        """
        mode_indices = self.modes_to_expand(node)
        grouped = self.library.by_mode(node.state.s)
        mps = [mp for i in mode_indices for mp in grouped[MODES[i]]]
        self.nodes_expanded += 1
        node.expanded_once = True

        placed = [apply_mp(node.state, mp, self.params) for mp in mps]
        self.mps_explored += len(placed)
        free = self._collision_free([traj for _, traj in placed])

        added = 0
        for mp, (nxt, traj), ok in zip(mps, placed, free):
            if not ok:
                continue
            cost = mp.cost
            full = traj.final_state
            via_lqr = False
            if self.use_lqr and goal_distance(full, self.goal_full, self.params, self.tolerances) <= self.tolerances.eps2:
                self.lqr_attempts += 1
                conn = lqr_connect(self.goal, traj, nxt, self.scenario.environment, self.tolerances, self.params,
                                   self.library.steering_values, self.lqr_config, self.scenario.footprint)
                if conn.accepted:
                    self.lqr_accepted += 1
                    nxt, traj, full, via_lqr = conn.state, conn.trajectory, conn.full_state, True
                    cost = trajectory_cost(traj)
                else:
                    logger.debug(f"LQR connection rejected: {conn.reason}")
            if self.config.visited_filter and self._visited_key(nxt) in self.visited:
                continue
            self.add_node(nxt, full, node.g + cost, node, traj, cost, via_lqr)
            added += 1

        for i in mode_indices:
            node.mode_costs[i] = np.inf
        if node.exhausted:
            self.queue.remove(node.index)
        return added

    def path_to(self, node: TreeNode) -> List[TreeNode]:
        chain = [node]
        while chain[-1].parent is not None:
            chain.append(self.nodes[chain[-1].parent])
        return chain[::-1]

    def tree_dump(self, stride: int = 5) -> List[Dict]:
        edges = []
        for node in self.nodes[1:]:
            xy = node.edge.states[::stride, :2]
            if len(node.edge.states) and (len(node.edge.states) - 1) % stride:
                xy = np.vstack([xy, node.edge.states[-1, :2]])
            edges.append({'parent': node.parent, 'child': node.index, 'lqr': node.via_lqr, 'xy_m': xy.tolist()})
        return edges

    def result(self, goal_node: Optional[TreeNode], status: str, iterations: int, started: float) -> PlanResult:
        result = PlanResult(
            success=goal_node is not None,
            status=status,
            planner=self.planner_id,
            trajectory=Trajectory.empty(),
            mps_explored=self.mps_explored,
            nodes_expanded=self.nodes_expanded,
            nodes_created=len(self.nodes),
            iterations=iterations,
            lqr_attempts=self.lqr_attempts,
            lqr_accepted=self.lqr_accepted,
        )
        if goal_node is not None:
            chain = self.path_to(goal_node)
            result.edges = [n.edge for n in chain[1:]]
            root = chain[0]
            result.trajectory = concatenate(result.edges) if result.edges else Trajectory.stationary(root.full_state)
            result.path_length = result.trajectory.path_length()
            result.cost = goal_node.g
            result.terminal_error = np.abs(state_difference(goal_node.full_state, self.goal_full))
        if self.config.dump_tree:
            result.tree = self.tree_dump()
        result.wall_time_s = time.perf_counter() - started
        return result


def _check_endpoints(scenario: 'Scenario', start: ReducedState) -> None:
    for label, state in (('start', start), ('goal', scenario.goal)):
        if state_in_collision(lift(state, scenario.params), scenario.environment, scenario.params, scenario.footprint):
            raise ScenarioError(f"Scenario {scenario.name}: {label} configuration is in collision")


def run_search(scenario: 'Scenario', library: MPLibrary, net: Optional[CostNet], config: PlannerConfig,
               use_lqr: bool, planner_id: str) -> PlanResult:
    """
    Select-and-expand loop shared by all planners

    Args:
        scenario: Start, goal, environment, vehicle and tolerances
        library: Motion primitive library
        net: Cost-to-go network, required by the nn_rs heuristic
        config: Search settings
        use_lqr: Whether near-goal edges attempt a goal connection
        planner_id: Label stored in the result

    Returns:
        PlanResult; failures are reported through `status`, never raised
    """
    config.validate()
    started = time.perf_counter()
    params = scenario.params
    heuristic = Heuristic(HeuristicConfig(config.alpha, config.heuristic_kind, config.cap), params, net)

    snapped, snap = library.snap_steering(scenario.start.s)
    start = ReducedState(scenario.start.x, scenario.start.y, scenario.start.theta0, snapped)
    if snap > 1e-9:
        logger.warning(f"Start steering {scenario.start.s} snapped to library value {snapped} (distance {snap:.3g})")
    _check_endpoints(scenario, start)

    search = TreeSearch(scenario, library, heuristic, config, use_lqr, planner_id)
    search.add_node(start, lift(start, params), 0.0, None, None, 0.0)
    logger.info(f"[{planner_id}] planning {scenario.name}: start {tuple(round(v, 3) for v in start)} "
                f"goal {tuple(round(v, 3) for v in scenario.goal)}")

    status = 'iteration_limit'
    goal_node = None
    iterations = 0
    executor = ThreadPoolExecutor(max_workers=config.threads) if config.threads > 1 else None
    search.executor = executor
    try:
        while iterations < config.max_iterations:
            if time.perf_counter() - started > config.time_cap_s:
                status = 'timeout'
                break
            top = search.queue.top()
            if top is None:
                status = 'exhausted'
                break
            iterations += 1
            node = search.nodes[top]
            if goal_distance(node.full_state, search.goal_full, params, search.tolerances) <= search.tolerances.eps1:
                goal_node = node
                status = 'success'
                break
            search.expand(node)
    finally:
        if executor is not None:
            executor.shutdown(wait=True)

    result = search.result(goal_node, status, iterations, started)
    result.start_snap = snap
    if result.success:
        logger.info(f"[{planner_id}] {scenario.name} solved in {result.wall_time_s:.2f}s: "
                    f"{result.mps_explored} MPs explored, path {result.path_length:.2f} m")
    else:
        logger.warning(f"[{planner_id}] {scenario.name} failed ({status}) after {iterations} iterations "
                       f"and {result.mps_explored} MPs")
    return result


def plan_deagt(scenario: 'Scenario', library: MPLibrary, net: Optional[CostNet],
               config: Optional[PlannerConfig] = None) -> PlanResult:
    """
    Delayed-expansion search: one primitive mode per selection

    Args:
        scenario: Planning query
        library: Motion primitive library
        net: Cost-to-go network (may be None with heuristic_kind "rs")
        config: Search settings; defaults come from the scenario

    Returns:
        PlanResult
    """
    config = replace(config or scenario.planner, delayed_expansion=True)
    return run_search(scenario, library, net, config, config.use_lqr, 'deagt')


def plan_iagt_rs(scenario: 'Scenario', library: MPLibrary, config: Optional[PlannerConfig] = None) -> PlanResult:
    """Baseline: every primitive expanded per selection, Reeds-Shepp cost-to-go."""
    config = replace(config or scenario.planner, delayed_expansion=False, heuristic_kind='rs')
    return run_search(scenario, library, None, config, config.baseline_lqr, 'iagt_rs')


def plan_full(scenario: 'Scenario', library: MPLibrary, net: Optional[CostNet],
              config: Optional[PlannerConfig] = None) -> PlanResult:
    """DE-AGT heuristic and goal connection with all modes expanded per selection."""
    config = replace(config or scenario.planner, delayed_expansion=False)
    return run_search(scenario, library, net, config, config.use_lqr, 'iagt_nn_full')


def plan(planner_id: str, scenario: 'Scenario', library: MPLibrary, net: Optional[CostNet],
         config: Optional[PlannerConfig] = None) -> PlanResult:
    if planner_id == 'deagt':
        return plan_deagt(scenario, library, net, config)
    if planner_id == 'iagt_rs':
        return plan_iagt_rs(scenario, library, config)
    if planner_id == 'iagt_nn_full':
        return plan_full(scenario, library, net, config)
    raise InvalidParamsError(f"Unknown planner {planner_id}; expected one of {PLANNER_IDS}")


def verify_plan(result: PlanResult, scenario: 'Scenario') -> VerificationReport:
    """
    Independent check of a successful plan

    Re-runs the collision check at the fine verification resolution, re-simulates every
    edge from its stored controls, and re-measures the terminal distance.

    Args:
        result: Plan to verify
        scenario: Scenario it was planned for

    Returns:
        VerificationReport listing every failed check
    """
    issues: List[str] = []
    if not result.success:
        return VerificationReport(False, [f"plan status is {result.status}"])
    params, tol = scenario.params, scenario.tolerances
    traj = result.trajectory

    pose_error = np.abs(state_difference(traj.start_state, lift(scenario.start, params))[:3])
    if np.max(pose_error) > RESIMULATION_TOL:
        issues.append(f"trajectory starts {np.max(pose_error):.2e} away from the start pose")

    report = trajectory_collision_free(traj, scenario.environment, params, scenario.footprint, tol.verify_resolution)
    if not report:
        issues.append(f"collision at sample {report.first_collision_index}")

    for i, edge in enumerate(result.edges):
        replay = edge.resimulate(params)
        err = float(np.max(np.abs(state_difference(replay, edge.states)))) if len(edge.states) else 0.0
        if err > RESIMULATION_TOL:
            issues.append(f"edge {i} re-simulates with error {err:.2e}")

    d_goal = goal_distance(traj.final_state, lift(scenario.goal, params), params, tol)
    if d_goal > tol.eps1:
        issues.append(f"terminal distance {d_goal:.3f} exceeds {tol.eps1}")

    for issue in issues:
        logger.warning(f"Plan verification: {issue}")
    return VerificationReport(not issues, issues)
