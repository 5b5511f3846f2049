"""
Environment, vehicle footprint and collision checking.

Bodies are oriented rectangles and obstacles are convex polygons; intersection
is decided with a batched separating-axis test. Touching shapes do not collide,
any positive overlap does.
"""

import logging
import math
from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from src.trailer_planner.errors import ScenarioError
from src.trailer_planner.vehicle.model import (
    Trajectory,
    VehicleParams,
    integrate_interval,
)

logger = logging.getLogger('TrailerPlanner')

DEFAULT_RESOLUTION = 0.1


@dataclass(frozen=True)
class FootprintDims:
    """
    Body rectangles of the rig

    Offsets place each rectangle center ahead of the body's axle point along its heading.
    """
    tractor_length: float = 3.4
    tractor_width: float = 2.0
    tractor_offset: float = 1.2
    trailer_length: float = 2.6
    trailer_width: float = 2.0
    trailer_offset: float = 0.7

    def body_dims(self) -> np.ndarray:
        """(4, 3) rows of (length, width, offset) for tractor and trailers."""
        trailer = (self.trailer_length, self.trailer_width, self.trailer_offset)
        return np.array([(self.tractor_length, self.tractor_width, self.tractor_offset)] + [trailer] * 3)

    def scaled(self, factor: float) -> 'FootprintDims':
        return FootprintDims(self.tractor_length * factor, self.tractor_width * factor, self.tractor_offset,
                             self.trailer_length * factor, self.trailer_width * factor, self.trailer_offset)

    def to_dict(self) -> dict:
        return {
            'tractor_length_m': self.tractor_length,
            'tractor_width_m': self.tractor_width,
            'tractor_offset_m': self.tractor_offset,
            'trailer_length_m': self.trailer_length,
            'trailer_width_m': self.trailer_width,
            'trailer_offset_m': self.trailer_offset,
        }

    @classmethod
    def from_dict(cls, data: Optional[dict]) -> 'FootprintDims':
        if not data:
            return cls()
        return cls(**{key[:-2] if key.endswith('_m') else key: float(val) for key, val in data.items()})


class OrientedRect(NamedTuple):
    cx: float
    cy: float
    heading: float
    length: float
    width: float

    def corners(self) -> np.ndarray:
        """Counter-clockwise (4, 2) corner array."""
        return _rect_corners(np.array([[self.cx, self.cy]]), np.array([self.heading]),
                             np.array([self.length]), np.array([self.width]))[0]


def _rect_corners(centers: np.ndarray, headings: np.ndarray, lengths: np.ndarray, widths: np.ndarray) -> np.ndarray:
    # Local CCW corners (-l/2,-w/2), (l/2,-w/2), (l/2,w/2), (-l/2,w/2)
    signs = np.array([[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]])
    local = signs[None, :, :] * np.stack([lengths, widths], axis=-1)[..., None, :] / 2.0
    c, s = np.cos(headings)[..., None], np.sin(headings)[..., None]
    wx = c * local[..., 0] - s * local[..., 1]
    wy = s * local[..., 0] + c * local[..., 1]
    return np.stack([wx, wy], axis=-1) + centers[..., None, :]


def body_poses(states, params: VehicleParams) -> Tuple[np.ndarray, np.ndarray]:
    """
    Axle points and absolute headings of the four bodies

    Args:
        states: (..., 6) states
        params: Vehicle parameters

    Returns:
        Tuple of axle points (..., 4, 2) and headings (..., 4)
    """
    states = np.asarray(states, dtype=float)
    headings = np.cumsum(states[..., 2:6], axis=-1)
    points = np.empty(states.shape[:-1] + (4, 2))
    points[..., 0, :] = states[..., 0:2]
    for i, d in enumerate(params.hitch_lengths, start=1):
        points[..., i, 0] = points[..., i - 1, 0] - d * np.cos(headings[..., i])
        points[..., i, 1] = points[..., i - 1, 1] - d * np.sin(headings[..., i])
    return points, headings


def footprint_corners(states, params: VehicleParams, fp: FootprintDims) -> np.ndarray:
    """(..., 4, 4, 2) world-frame corners of tractor and trailer rectangles."""
    points, headings = body_poses(states, params)
    dims = fp.body_dims()
    centers = points + dims[:, 2, None] * np.stack([np.cos(headings), np.sin(headings)], axis=-1)
    lengths = np.broadcast_to(dims[:, 0], headings.shape)
    widths = np.broadcast_to(dims[:, 1], headings.shape)
    return _rect_corners(centers, headings, lengths, widths)


def footprint_at(state, params: VehicleParams, fp: FootprintDims) -> List[OrientedRect]:
    """
    World-frame rectangles of the tractor and its three trailers

    Args:
        state: Full state
        params: Vehicle parameters
        fp: Body dimensions

    Returns:
        Four OrientedRect instances, tractor first
    """
    points, headings = body_poses(np.asarray(state, dtype=float), params)
    rects = []
    for i, (length, width, offset) in enumerate(fp.body_dims()):
        h = float(headings[i])
        rects.append(OrientedRect(float(points[i, 0] + offset * math.cos(h)),
                                  float(points[i, 1] + offset * math.sin(h)), h, float(length), float(width)))
    return rects


def _edge_normals(polygon: np.ndarray) -> np.ndarray:
    edges = np.roll(polygon, -1, axis=0) - polygon
    normals = np.stack([edges[:, 1], -edges[:, 0]], axis=-1)
    return normals / np.linalg.norm(normals, axis=-1, keepdims=True)


def polygon_is_convex(polygon: np.ndarray) -> Tuple[bool, float]:
    """Convexity test returning (convex, orientation sign); orientation > 0 means CCW."""
    edges = np.roll(polygon, -1, axis=0) - polygon
    nxt = np.roll(edges, -1, axis=0)
    cross = edges[:, 0] * nxt[:, 1] - edges[:, 1] * nxt[:, 0]
    area2 = float(np.sum(polygon[:, 0] * np.roll(polygon[:, 1], -1) - np.roll(polygon[:, 0], -1) * polygon[:, 1]))
    if abs(area2) < 1e-12:
        return False, 0.0
    sign = math.copysign(1.0, area2)
    return bool(np.all(cross * sign >= -1e-12)), sign


def rects_overlap_polygon(corners: np.ndarray, polygon: np.ndarray, margin: float = 0.0) -> np.ndarray:
    """
    Separating-axis test of many rectangles against one convex polygon

    Args:
        corners: (N, 4, 2) rectangle corners
        polygon: (K, 2) convex polygon vertices
        margin: Uniform inflation added to the polygon extent on every axis

    Returns:
        (N,) boolean array, True where the interiors overlap
    """
    corners = np.asarray(corners, dtype=float).reshape(-1, 4, 2)
    poly_axes = _edge_normals(polygon)
    rect_proj = corners @ poly_axes.T
    poly_proj = polygon @ poly_axes.T
    separated = ((rect_proj.max(axis=1) + margin <= poly_proj.min(axis=0)) |
                 (poly_proj.max(axis=0) + margin <= rect_proj.min(axis=1))).any(axis=1)

    e1 = corners[:, 1] - corners[:, 0]
    e2 = corners[:, 2] - corners[:, 1]
    rect_axes = np.stack([e1, e2], axis=1)
    rect_axes = rect_axes / np.linalg.norm(rect_axes, axis=-1, keepdims=True)
    own = np.einsum('nvd,nad->nva', corners, rect_axes)
    other = np.einsum('kd,nad->nka', polygon, rect_axes)
    separated |= ((own.max(axis=1) + margin <= other.min(axis=1)) |
                  (other.max(axis=1) + margin <= own.min(axis=1))).any(axis=1)
    return ~separated


@dataclass
class Environment:
    """
    Rectangular workspace with convex polygonal obstacles

    `bounds` is (x_min, x_max, y_min, y_max); obstacles are stored counter-clockwise.
    """
    bounds: Tuple[float, float, float, float]
    obstacles: List[np.ndarray] = field(default_factory=list)
    margin: float = 0.0

    def __post_init__(self):
        x_min, x_max, y_min, y_max = (float(b) for b in self.bounds)
        if x_min >= x_max or y_min >= y_max:
            raise ScenarioError(f"Degenerate environment bounds {self.bounds}")
        self.bounds = (x_min, x_max, y_min, y_max)
        if self.margin < 0:
            raise ScenarioError("Obstacle margin must be non-negative")
        checked = []
        for idx, obstacle in enumerate(self.obstacles):
            poly = np.asarray(obstacle, dtype=float).reshape(-1, 2)
            if len(poly) < 3:
                raise ScenarioError(f"Obstacle {idx} has fewer than 3 vertices")
            convex, orientation = polygon_is_convex(poly)
            if not convex:
                raise ScenarioError(f"Obstacle {idx} is not convex; split it into convex pieces")
            if orientation < 0:
                logger.debug(f"Obstacle {idx} given clockwise, reordering")
                poly = poly[::-1].copy()
            checked.append(poly)
        self.obstacles = checked

    def to_dict(self) -> dict:
        return {
            'bounds_m': list(self.bounds),
            'obstacles_m': [poly.reshape(-1).tolist() for poly in self.obstacles],
            'margin_m': self.margin,
        }

    @classmethod
    def from_dict(cls, data: Dict) -> 'Environment':
        try:
            return cls(tuple(data['bounds_m']), [np.asarray(o, dtype=float) for o in data.get('obstacles_m', [])],
                       float(data.get('margin_m', 0.0)))
        except (KeyError, TypeError, ValueError) as e:
            raise ScenarioError(f"Malformed environment: {e}") from e

    def transformed(self, x: float, y: float, theta: float, extent: float = 1e6) -> 'Environment':
        """Rigidly move the obstacles; the result is bounded by a square of half-width `extent`."""
        c, s = math.cos(theta), math.sin(theta)
        rot = np.array([[c, -s], [s, c]])
        moved = [poly @ rot.T + np.array([x, y]) for poly in self.obstacles]
        return Environment((-extent, extent, -extent, extent), moved, self.margin)


def corners_in_collision(corners: np.ndarray, env: Environment) -> np.ndarray:
    """(N,) collision flags for (N, B, 4, 2) body corners."""
    corners = np.asarray(corners, dtype=float)
    n, bodies = corners.shape[0], corners.shape[1]
    x_min, x_max, y_min, y_max = env.bounds
    m = env.margin
    xs, ys = corners[..., 0], corners[..., 1]
    hit = ((xs < x_min + m) | (xs > x_max - m) | (ys < y_min + m) | (ys > y_max - m)).reshape(n, -1).any(axis=1)
    flat = corners.reshape(n * bodies, 4, 2)
    for poly in env.obstacles:
        todo = ~hit
        if not todo.any():
            break
        idx = np.repeat(todo, bodies)
        overlap = np.zeros(n * bodies, dtype=bool)
        overlap[idx] = rects_overlap_polygon(flat[idx], poly, m)
        hit |= overlap.reshape(n, bodies).any(axis=1)
    return hit


def states_in_collision(states, env: Environment, params: VehicleParams, fp: FootprintDims) -> np.ndarray:
    """Vectorized state_in_collision over an (N, 6) array."""
    states = np.atleast_2d(np.asarray(states, dtype=float))
    if len(states) == 0:
        return np.zeros(0, dtype=bool)
    return corners_in_collision(footprint_corners(states, params, fp), env)


def state_in_collision(state, env: Environment, params: VehicleParams,
                       fp: Optional[FootprintDims] = None) -> bool:
    """
    Whether any body of the rig overlaps an obstacle or leaves the bounds

    Args:
        state: Full state
        env: Environment
        params: Vehicle parameters
        fp: Body dimensions, defaults when omitted

    Returns:
        True on collision
    """
    return bool(states_in_collision(state, env, params, fp or FootprintDims())[0])


@dataclass
class CollisionReport:
    free: bool
    checked_states: int
    warning: Optional[str] = None
    first_collision_index: Optional[int] = None

    def __bool__(self) -> bool:
        return self.free


def densify(traj: Trajectory, params: VehicleParams, resolution: float) -> Tuple[np.ndarray, np.ndarray]:
    """
    Stored samples plus sub-integrated states so checked tractor positions are at most `resolution` apart

    Returns:
        Tuple of (states, index of the stored interval each state belongs to)
    """
    rows: List[np.ndarray] = [traj.states[0]]
    owner: List[int] = [0]
    for i, (u, h) in enumerate(zip(traj.controls, traj.durations)):
        travel = abs(float(u[0])) * float(h)
        n = int(math.ceil(travel / resolution - 1e-9)) if travel > resolution else 1
        if n > 1:
            x = traj.states[i]
            for _ in range(n - 1):
                x = integrate_interval(x, u, h / n, params, traj.max_step)
                rows.append(x)
                owner.append(i)
        rows.append(traj.states[i + 1])
        owner.append(i)
    return np.array(rows), np.array(owner)


def trajectory_collision_free(traj: Trajectory, env: Environment, params: VehicleParams,
                              fp: Optional[FootprintDims] = None,
                              resolution: float = DEFAULT_RESOLUTION) -> CollisionReport:
    """
    Check every stored sample and enough intermediate states along a trajectory

    Args:
        traj: Trajectory to check
        env: Environment
        params: Vehicle parameters
        fp: Body dimensions, defaults when omitted
        resolution: Maximum tractor travel between checked states, meters

    Returns:
        CollisionReport whose truthiness is the collision-free verdict
    """
    if resolution <= 0:
        raise ValueError(f"Collision resolution must be positive, got {resolution}")
    if traj.is_empty:
        logger.warning("Collision check requested for an empty trajectory")
        return CollisionReport(True, 0, warning='empty trajectory')
    states, owner = densify(traj, params, resolution)
    hits = states_in_collision(states, env, params, fp or FootprintDims())
    if hits.any():
        first = int(np.argmax(hits))
        return CollisionReport(False, len(states), first_collision_index=int(owner[first]))
    return CollisionReport(True, len(states))
