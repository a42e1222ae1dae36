"""Constant-curvature body geometry, marker layout and the wall contact model.

Every function accepts curvature arrays with arbitrary leading axes (time, batch);
the last axis holds the 5 chamber curvatures in 1/mm. Positions are in mm.

Node layout: four legs of 25 nodes (indices 0-99, chamber order) followed by the
23 body nodes (100-122). Markers: 3 per leg at a quarter, half and three quarters
of the leg length, then one at the body centre.
"""

from __future__ import annotations

import numpy as np

from .physics import KAPPA_MAX

BODY_LENGTH = 80.0
BODY_WIDTH = 30.0
LEG_LENGTH = 60.0
REST_HEIGHT = 10.0
LEG_NODES = 25
BODY_NODES = 23
N_NODES = 4 * LEG_NODES + BODY_NODES
N_MARKERS = 13
LEG_ANGLE = np.deg2rad(60.0)  # rest direction measured from the body axis

# stance translation gains (mm per unit normalized curvature)
STANCE_X = 3.0
STANCE_Y = 3.0
STANCE_Z = 4.0

LEG_MARKER_NODES = (6, 12, 18)
BODY_MARKER_NODE = 11
# (marker index, node index) for the mid-chamber markers used in height error
MID_CHAMBER_MARKERS = tuple(
    (3 * leg + 1, leg * LEG_NODES + LEG_MARKER_NODES[1]) for leg in range(4)
) + ((12, 4 * LEG_NODES + BODY_MARKER_NODE),)


def _leg_frames():
    """Rest direction ``d`` and bending direction ``b`` for each leg."""
    frames = []
    for fx, fy in [(1, 1), (1, -1), (-1, 1), (-1, -1)]:
        d = np.array([fx * np.cos(LEG_ANGLE), fy * np.sin(LEG_ANGLE), 0.0])
        a = np.array([fx * 1.0, 0.0, -1.0])
        b = a - (a @ d) * d
        frames.append((d, b / np.linalg.norm(b)))
    return frames


LEG_FRAMES = _leg_frames()
_LEG_S = np.linspace(0.0, LEG_LENGTH, LEG_NODES)
_BODY_S = np.linspace(-BODY_LENGTH / 2, BODY_LENGTH / 2, BODY_NODES)


def _arc(kappa, s):
    """Planar constant-curvature arc: (along-tangent, along-bend) offsets at arclength s.

    ``kappa`` has shape (...,), ``s`` shape (n,); result shapes (..., n).
    """
    k = np.asarray(kappa, dtype=np.float64)[..., None]
    ks = k * s
    small = np.abs(k) < 1e-9
    ksafe = np.where(small, 1.0, k)
    along = np.where(small, s - k * k * s**3 / 6.0, np.sin(ks) / ksafe)
    bend = np.where(small, k * s * s / 2.0, (1.0 - np.cos(ks)) / ksafe)
    return along, bend


def body_frame_nodes(kappa: np.ndarray) -> np.ndarray:
    """Node positions before the stance translation, shape (..., 123, 3)."""
    kappa = np.asarray(kappa, dtype=np.float64)
    lead = kappa.shape[:-1]
    nodes = np.empty(lead + (N_NODES, 3))
    # body arches about its centre, ends dropping as curvature grows
    along, bend = _arc(kappa[..., 4], _BODY_S)
    body = nodes[..., 4 * LEG_NODES :, :]
    body[..., 0] = along
    body[..., 1] = 0.0
    body[..., 2] = REST_HEIGHT - bend
    front_end = body[..., -1, :]
    rear_end = body[..., 0, :]
    for leg, (d, b) in enumerate(LEG_FRAMES):
        end = front_end if leg < 2 else rear_end
        root = end + np.array([0.0, (BODY_WIDTH / 2) * (1 if leg % 2 == 0 else -1), 0.0])
        along, bend = _arc(kappa[..., leg], _LEG_S)
        pts = root[..., None, :] + along[..., None] * d + bend[..., None] * b
        nodes[..., leg * LEG_NODES : (leg + 1) * LEG_NODES, :] = pts
    return nodes


def stance_shift(kappa: np.ndarray) -> np.ndarray:
    """Whole-body translation induced by the legs, shape (..., 3).

    The x shift depends on the rear legs only, so clamping a front leg against the
    wall never moves the other front leg.
    """
    n = np.asarray(kappa, dtype=np.float64) / KAPPA_MAX
    sx = STANCE_X * 0.5 * (n[..., 2] + n[..., 3])
    sy = STANCE_Y * 0.5 * ((n[..., 0] + n[..., 2]) - (n[..., 1] + n[..., 3]))
    sz = STANCE_Z * 0.25 * n[..., :4].sum(axis=-1) - 2.0 * n[..., 4]
    return np.stack([sx, sy, sz], axis=-1)


def kinematics(kappa: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(nodes (..., 123, 3), markers (..., 13, 3))``. Zero curvature is the flat rest pose."""
    kappa = np.asarray(kappa, dtype=np.float64)
    nodes = body_frame_nodes(kappa) + stance_shift(kappa)[..., None, :]
    idx = [leg * LEG_NODES + j for leg in range(4) for j in LEG_MARKER_NODES]
    idx.append(4 * LEG_NODES + BODY_MARKER_NODE)
    return nodes, nodes[..., idx, :]


def leg_tip_offset(kappa_leg: float) -> tuple[float, float]:
    """Closed-form circular-arc tip offset of a leg: (along rest direction, along bend)."""
    if kappa_leg == 0:
        return LEG_LENGTH, 0.0
    theta = kappa_leg * LEG_LENGTH
    return np.sin(theta) / kappa_leg, (1.0 - np.cos(theta)) / kappa_leg


def _front_leg_max_x(kappa, leg):
    nodes = body_frame_nodes(kappa)[..., leg * LEG_NODES : (leg + 1) * LEG_NODES, 0]
    return nodes.max(axis=-1) + stance_shift(kappa)[..., 0]


def rest_front_x() -> float:
    return float(_front_leg_max_x(np.zeros(5), 0))


def max_front_reach() -> float:
    k = np.zeros(5)
    k[[0, 1, 2, 3]] = KAPPA_MAX[:4]
    return float(_front_leg_max_x(k, 0))


def apply_wall(kappa: np.ndarray, wall_x: float | None, k_wall: float = 0.5,
               f_strong: float | None = None, iters: int = 48):
    """Clamp front-leg curvature at a vertical wall ``x = wall_x``.

    Returns ``(clamped_kappa, contact_force, collided)``. Force is ``k_wall`` times
    the deepest penetration before clamping. A clamped leg is bent only as far as
    puts its deepest node on the plane (found by bisection; reach grows
    monotonically with leg curvature over the actuated range). ``collided`` is
    ``force > f_strong`` (all False when ``f_strong`` is None).
    """
    kappa = np.array(kappa, dtype=np.float64)
    force = np.zeros(kappa.shape[:-1])
    if wall_x is None:
        return kappa, force, np.zeros(force.shape, dtype=bool)
    for leg in (0, 1):
        reach = _front_leg_max_x(kappa, leg)
        pen = np.maximum(reach - wall_x, 0.0)
        force = np.maximum(force, k_wall * pen)
        hit = pen > 0
        if not np.any(hit):
            continue
        sub = kappa[hit]
        lo = np.zeros(sub.shape[0])
        hi = sub[:, leg].copy()
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            trial = sub.copy()
            trial[:, leg] = mid
            over = _front_leg_max_x(trial, leg) > wall_x
            hi = np.where(over, mid, hi)
            lo = np.where(over, lo, mid)
        sub[:, leg] = lo
        kappa[hit] = sub
    collided = force > f_strong if f_strong is not None else np.zeros(force.shape, dtype=bool)
    return kappa, force, collided
