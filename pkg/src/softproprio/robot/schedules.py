"""Pressure command schedules: random actions and the seven-step crawling gait."""

from __future__ import annotations

import numpy as np

from ..nn.spec import seed_rng

# chamber order used throughout: front-left, front-right, rear-left, rear-right, body
CHAMBERS = ("front_left", "front_right", "rear_left", "rear_right", "body")
N_CHAMBERS = 5
P_MAX = np.array([30.0, 30.0, 30.0, 30.0, 35.0])  # kPa
WINDOW_S = 0.5

FRONT = (0, 1)
REAR = (2, 3)
BODY = 4


def schedule_random(seed: int, duration_s: float, window_s: float = WINDOW_S) -> np.ndarray:
    """One uniform draw per chamber in ``[0, p_max]`` for every command window.

    Returns an ``(n_windows, 5)`` array of targets in kPa.
    """
    if duration_s <= 0:
        raise ValueError("duration_s must be positive")
    n = int(round(duration_s / window_s))
    rng = seed_rng(seed)
    return rng.uniform(0.0, 1.0, size=(n, N_CHAMBERS)) * P_MAX


def crawl_cycle() -> np.ndarray:
    """The 7 command windows of one gait cycle.

    (i) rest, (ii) rear legs, (iii) body, (iv) front legs pressurized in turn, then
    (v)-(vii) released in the same order.
    """
    steps = np.zeros((7, N_CHAMBERS))
    on = np.zeros(N_CHAMBERS, dtype=bool)
    for k, group in enumerate([REAR, (BODY,), FRONT], start=1):
        on[list(group)] = True
        steps[k] = np.where(on, P_MAX, 0.0)
    for k, group in enumerate([REAR, (BODY,), FRONT], start=4):
        on[list(group)] = False
        steps[k] = np.where(on, P_MAX, 0.0)
    return steps


def schedule_crawl(cycles: int) -> np.ndarray:
    if cycles < 1:
        raise ValueError("cycles must be >= 1")
    return np.tile(crawl_cycle(), (cycles, 1))
