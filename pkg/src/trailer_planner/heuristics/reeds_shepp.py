"""
Shortest Reeds-Shepp paths for a bidirectional car of minimum turning radius R.

Closed-form word families CSC, CCC, CCCC, CCSC and CCSCC, each tried under the
time-flip, reflection and backwards symmetries. Segment lengths are signed
(negative means reverse) and expressed for a unit turning radius.
"""

import math
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np

_ZERO = 10.0 * np.finfo(float).eps
_HALF_PI = 0.5 * math.pi

# Segment words indexed by family id
_WORDS = (
    'LRL', 'RLR', 'LRLR', 'RLRL', 'LRSL', 'RLSR', 'LSRL', 'RSLR', 'LRSR', 'RLSL',
    'RSRL', 'LSLR', 'LSR', 'RSL', 'LSL', 'RSR', 'LRSLR', 'RLSRL',
)


@dataclass(frozen=True)
class ReedsSheppPath:
    word: str
    lengths: Tuple[float, ...]
    radius: float

    @property
    def length(self) -> float:
        """Path length in meters."""
        return self.radius * float(sum(abs(l) for l in self.lengths))

    def segments(self) -> List[Tuple[str, float]]:
        """(letter, signed length in meters) pairs, zero-length segments dropped."""
        return [(c, self.radius * l) for c, l in zip(self.word, self.lengths) if abs(l) > 1e-12]


def _mod2pi(x: float) -> float:
    v = math.fmod(x, 2.0 * math.pi)
    if v < -math.pi:
        v += 2.0 * math.pi
    elif v > math.pi:
        v -= 2.0 * math.pi
    return v


def _polar(x: float, y: float) -> Tuple[float, float]:
    return math.hypot(x, y), math.atan2(y, x)


def _tau_omega(u: float, v: float, xi: float, eta: float, phi: float) -> Tuple[float, float]:
    delta = _mod2pi(u - v)
    a = math.sin(u) - math.sin(delta)
    b = math.cos(u) - math.cos(delta) - 1.0
    t1 = math.atan2(eta * a - xi * b, xi * a + eta * b)
    t2 = 2.0 * (math.cos(delta) - math.cos(v) - math.cos(u)) + 3.0
    tau = _mod2pi(t1 + math.pi) if t2 < 0 else _mod2pi(t1)
    omega = _mod2pi(tau - u + v - phi)
    return tau, omega


def _lp_sp_lp(x, y, phi):
    u, t = _polar(x - math.sin(phi), y - 1.0 + math.cos(phi))
    if t >= -_ZERO:
        v = _mod2pi(phi - t)
        if v >= -_ZERO:
            return t, u, v
    return None


def _lp_sp_rp(x, y, phi):
    u1, t1 = _polar(x + math.sin(phi), y - 1.0 - math.cos(phi))
    u1 = u1 * u1
    if u1 >= 4.0:
        u = math.sqrt(u1 - 4.0)
        theta = math.atan2(2.0, u)
        t = _mod2pi(t1 + theta)
        v = _mod2pi(t - phi)
        if t >= -_ZERO and v >= -_ZERO:
            return t, u, v
    return None


def _lp_rm_l(x, y, phi):
    xi = x - math.sin(phi)
    eta = y - 1.0 + math.cos(phi)
    u1, theta = _polar(xi, eta)
    if u1 <= 4.0:
        u = -2.0 * math.asin(0.25 * u1)
        t = _mod2pi(theta + 0.5 * u + math.pi)
        v = _mod2pi(phi - t + u)
        if t >= -_ZERO and u <= _ZERO:
            return t, u, v
    return None


def _lp_rup_lum_rm(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho = 0.25 * (2.0 + math.sqrt(xi * xi + eta * eta))
    if rho <= 1.0:
        u = math.acos(rho)
        t, v = _tau_omega(u, -u, xi, eta, phi)
        if t >= -_ZERO and v <= _ZERO:
            return t, u, v
    return None


def _lp_rum_lum_rp(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho = (20.0 - xi * xi - eta * eta) / 16.0
    if 0.0 <= rho <= 1.0:
        u = -math.acos(rho)
        if u >= -_HALF_PI:
            t, v = _tau_omega(u, u, xi, eta, phi)
            if t >= -_ZERO and v >= -_ZERO:
                return t, u, v
    return None


def _lp_rm_sm_lm(x, y, phi):
    xi = x - math.sin(phi)
    eta = y - 1.0 + math.cos(phi)
    rho, theta = _polar(xi, eta)
    if rho >= 2.0:
        r = math.sqrt(rho * rho - 4.0)
        u = 2.0 - r
        t = _mod2pi(theta + math.atan2(r, -2.0))
        v = _mod2pi(phi - _HALF_PI - t)
        if t >= -_ZERO and u <= _ZERO and v <= _ZERO:
            return t, u, v
    return None


def _lp_rm_sm_rm(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho, theta = _polar(-eta, xi)
    if rho >= 2.0:
        t = theta
        u = 2.0 - rho
        v = _mod2pi(t + _HALF_PI - phi)
        if t >= -_ZERO and u <= _ZERO and v <= _ZERO:
            return t, u, v
    return None


def _lp_rm_s_lm_rp(x, y, phi):
    xi = x + math.sin(phi)
    eta = y - 1.0 - math.cos(phi)
    rho, _ = _polar(xi, eta)
    if rho >= 2.0:
        u = 4.0 - math.sqrt(rho * rho - 4.0)
        if u <= _ZERO:
            t = _mod2pi(math.atan2((4.0 - u) * xi - 2.0 * eta, -2.0 * xi + (u - 4.0) * eta))
            v = _mod2pi(t - phi)
            if t >= -_ZERO and v >= -_ZERO:
                return t, u, v
    return None


def _symmetric_candidates(fn, x, y, phi, word_id: int, reflected_id: int, build):
    """Apply fn under the identity, time-flip, reflection and combined symmetries."""
    out = []
    for sx, sy, sphi, flip, wid in ((1, 1, 1, False, word_id), (-1, 1, -1, True, word_id),
                                    (1, -1, -1, False, reflected_id), (-1, -1, 1, True, reflected_id)):
        sol = fn(sx * x, sy * y, sphi * phi)
        if sol is not None:
            lengths = build(*sol)
            if flip:
                lengths = tuple(-l for l in lengths)
            out.append((wid, lengths))
    return out


def _all_words(x: float, y: float, phi: float) -> List[Tuple[int, Tuple[float, ...]]]:
    cands: List[Tuple[int, Tuple[float, ...]]] = []
    xb = x * math.cos(phi) + y * math.sin(phi)
    yb = x * math.sin(phi) - y * math.cos(phi)

    # CSC
    cands += _symmetric_candidates(_lp_sp_lp, x, y, phi, 14, 15, lambda t, u, v: (t, u, v))
    cands += _symmetric_candidates(_lp_sp_rp, x, y, phi, 12, 13, lambda t, u, v: (t, u, v))
    # CCC, forwards and backwards
    cands += _symmetric_candidates(_lp_rm_l, x, y, phi, 0, 1, lambda t, u, v: (t, u, v))
    cands += _symmetric_candidates(_lp_rm_l, xb, yb, phi, 0, 1, lambda t, u, v: (v, u, t))
    # CCCC
    cands += _symmetric_candidates(_lp_rup_lum_rm, x, y, phi, 2, 3, lambda t, u, v: (t, u, -u, v))
    cands += _symmetric_candidates(_lp_rum_lum_rp, x, y, phi, 2, 3, lambda t, u, v: (t, u, u, v))
    # CCSC and CSCC
    cands += _symmetric_candidates(_lp_rm_sm_lm, x, y, phi, 4, 5, lambda t, u, v: (t, -_HALF_PI, u, v))
    cands += _symmetric_candidates(_lp_rm_sm_rm, x, y, phi, 8, 9, lambda t, u, v: (t, -_HALF_PI, u, v))
    cands += _symmetric_candidates(_lp_rm_sm_lm, xb, yb, phi, 6, 7, lambda t, u, v: (v, u, -_HALF_PI, t))
    cands += _symmetric_candidates(_lp_rm_sm_rm, xb, yb, phi, 10, 11, lambda t, u, v: (v, u, -_HALF_PI, t))
    # CCSCC
    cands += _symmetric_candidates(_lp_rm_s_lm_rp, x, y, phi, 16, 17,
                                   lambda t, u, v: (t, -_HALF_PI, u, -_HALF_PI, v))
    return cands


def _normalized_goal(start, goal, radius: float) -> Tuple[float, float, float]:
    x0, y0, th0 = (float(v) for v in start[:3])
    x1, y1, th1 = (float(v) for v in goal[:3])
    dx, dy = x1 - x0, y1 - y0
    c, s = math.cos(th0), math.sin(th0)
    return (c * dx + s * dy) / radius, (-s * dx + c * dy) / radius, th1 - th0


def reeds_shepp_path(start, goal, radius: float) -> ReedsSheppPath:
    """
    Shortest Reeds-Shepp path between two poses

    Args:
        start: (x, y, theta) start pose
        goal: (x, y, theta) goal pose
        radius: Minimum turning radius, meters

    Returns:
        ReedsSheppPath with the optimal word and signed unit-radius segment lengths
    """
    if radius <= 0:
        raise ValueError(f"Turning radius must be positive, got {radius}")
    x, y, phi = _normalized_goal(start, goal, radius)
    best: Optional[Tuple[float, int, Tuple[float, ...]]] = None
    for wid, lengths in _all_words(x, y, phi):
        total = sum(abs(l) for l in lengths)
        if best is None or total < best[0]:
            best = (total, wid, lengths)
    if best is None:
        # Every pose pair is reachable by some CSC or CCC word; reaching here means NaN input
        raise ValueError(f"No Reeds-Shepp word connects {tuple(start)} to {tuple(goal)}")
    return ReedsSheppPath(_WORDS[best[1]], tuple(float(l) for l in best[2]), float(radius))


def rs_length(start, goal, radius: float) -> float:
    """Length in meters of the shortest Reeds-Shepp path between two (x, y, theta) poses."""
    return reeds_shepp_path(start, goal, radius).length


def _advance(x: float, y: float, phi: float, letter: str, l: float) -> Tuple[float, float, float]:
    """Move along one unit-radius segment of signed length l."""
    if letter == 'S':
        return x + l * math.cos(phi), y + l * math.sin(phi), phi
    if letter == 'L':
        return x + math.sin(phi + l) - math.sin(phi), y - math.cos(phi + l) + math.cos(phi), phi + l
    return x - math.sin(phi - l) + math.sin(phi), y + math.cos(phi - l) - math.cos(phi), phi - l


def sample_rs_path(start, path: ReedsSheppPath, step: float = 0.1) -> np.ndarray:
    """
    World-frame poses along a Reeds-Shepp path

    Args:
        start: (x, y, theta) start pose
        path: Path from reeds_shepp_path
        step: Maximum spacing between samples, meters

    Returns:
        (K, 3) array of poses including both endpoints
    """
    x0, y0, th0 = (float(v) for v in start[:3])
    c, s, r = math.cos(th0), math.sin(th0), path.radius
    unit_step = step / r
    poses = [(0.0, 0.0, 0.0)]
    x, y, phi = 0.0, 0.0, 0.0
    for letter, l in zip(path.word, path.lengths):
        if abs(l) <= 1e-12:
            continue
        n = max(1, int(math.ceil(abs(l) / unit_step)))
        for k in range(1, n + 1):
            poses.append(_advance(x, y, phi, letter, l * k / n))
        x, y, phi = poses[-1]
    local = np.array(poses)
    out = np.empty_like(local)
    out[:, 0] = x0 + r * (c * local[:, 0] - s * local[:, 1])
    out[:, 1] = y0 + r * (s * local[:, 0] + c * local[:, 1])
    out[:, 2] = np.mod(th0 + local[:, 2] + math.pi, 2.0 * math.pi) - math.pi
    return out
