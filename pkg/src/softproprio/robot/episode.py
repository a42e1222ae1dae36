"""Episode generation: schedule -> 50 Hz simulation -> low-pass filter -> 10 Hz frames."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np
from scipy import signal

from ..nn.spec import seed_rng
from .kinematics import apply_wall, kinematics
from .physics import DT_INTERNAL, ChamberState, DomainConfig, ramp_pressure, sensor_model, step_dynamics
from .schedules import WINDOW_S, schedule_crawl, schedule_random

RANDOM_ACTION = "random_action"
CRAWL_UNOBSTRUCTED = "crawl_unobstructed"
CRAWL_OBSTRUCTED = "crawl_obstructed"
SCHEDULE_KINDS = (RANDOM_ACTION, CRAWL_UNOBSTRUCTED, CRAWL_OBSTRUCTED)

FRAME_DT = 0.1
SUBSTEPS = int(round(FRAME_DT / DT_INTERNAL))
FILTER_ORDER = 2
FILTER_CUTOFF_HZ = 2.0
K_WALL = 0.5  # force units per mm of penetration


class Frame(NamedTuple):
    t: float
    sensor: np.ndarray
    pressure: np.ndarray
    nodes: np.ndarray
    markers: np.ndarray
    contact_force: float
    collided: bool


@dataclass
class Episode:
    """One recorded run sampled at 10 Hz.

    Frame ``k`` is stamped at the end of its sampling interval, ``t = 0.1 (k + 1)``,
    so frames ``5w .. 5w+4`` belong to command window ``w``.
    """

    t: np.ndarray
    sensor: np.ndarray
    pressure: np.ndarray
    nodes: np.ndarray
    markers: np.ndarray
    contact_force: np.ndarray
    collided: np.ndarray
    schedule_kind: str
    domain: DomainConfig
    seed: int
    wall_x: float | None = None

    def __len__(self) -> int:
        return len(self.t)

    def frame(self, k: int) -> Frame:
        return Frame(float(self.t[k]), self.sensor[k], self.pressure[k], self.nodes[k],
                     self.markers[k], float(self.contact_force[k]), bool(self.collided[k]))

    def header(self) -> dict:
        return {
            "schedule_kind": self.schedule_kind,
            "domain": self.domain.to_dict(),
            "seed": int(self.seed),
            "wall_x": self.wall_x,
            "n_frames": len(self),
        }


def lowpass(x: np.ndarray, fs: float = 1.0 / DT_INTERNAL) -> np.ndarray:
    """Zero-phase 2nd-order Butterworth along axis 0 (offline smoothing, no lag)."""
    b, a = signal.butter(FILTER_ORDER, FILTER_CUTOFF_HZ, fs=fs)
    return signal.filtfilt(b, a, x, axis=0)


def simulate(commands: np.ndarray, cfg: DomainConfig, seed: int,
             wall_x: float | None = None) -> dict[str, np.ndarray]:
    """Run the 50 Hz simulation for per-window commands; unfiltered internal-rate channels."""
    per_window = int(round(WINDOW_S / DT_INTERNAL))
    targets = np.repeat(commands, per_window, axis=0)
    pressure = ramp_pressure(targets)
    n = pressure.shape[0]
    kappa_eff = np.empty_like(pressure)
    state = ChamberState()
    for k in range(n):
        state = step_dynamics(state, pressure[k], cfg)
        kappa_eff[k] = state.effective_kappa(cfg)
    kappa_eff, force, _ = apply_wall(kappa_eff, wall_x, k_wall=K_WALL)
    noise_rng = seed_rng(seed * 2 + 1) if cfg.noise_sigma > 0 else None
    sensor = sensor_model(kappa_eff, cfg, noise_rng)
    nodes, markers = kinematics(kappa_eff)
    return {"pressure": pressure, "kappa": kappa_eff, "sensor": sensor, "nodes": nodes,
            "markers": markers, "force": force}


def calibrate_strong_force(wall_x: float, cycles: int = 3, fraction: float = 0.2) -> float:
    """Strong-impact force level: ``fraction`` of the peak contact force of a sim crawl."""
    raw = simulate(schedule_crawl(cycles), DomainConfig.sim(), 0, wall_x)
    peak = float(raw["force"].max())
    if peak <= 0:
        raise ValueError(f"wall at x={wall_x} mm is never reached during crawling")
    return fraction * peak


def generate_episode(schedule_kind: str, cfg: DomainConfig, seed: int, *,
                     duration_s: float = 300.0, cycles: int = 20, wall_x: float | None = None,
                     f_strong: float | None = None) -> Episode:
    """Generate one episode.

    ``RANDOM_ACTION`` uses ``duration_s``; the crawling kinds use ``cycles``. An
    obstructed crawl needs ``wall_x`` and ``f_strong``.
    """
    if schedule_kind == RANDOM_ACTION:
        commands = schedule_random(seed, duration_s)
        wall_x = None
    elif schedule_kind in (CRAWL_UNOBSTRUCTED, CRAWL_OBSTRUCTED):
        commands = schedule_crawl(cycles)
        if schedule_kind == CRAWL_UNOBSTRUCTED:
            wall_x = None
        elif wall_x is None or f_strong is None:
            raise ValueError("obstructed crawling needs wall_x and f_strong")
    else:
        raise ValueError(f"unknown schedule kind {schedule_kind!r}")

    raw = simulate(commands, cfg, seed, wall_x)
    n_frames = raw["pressure"].shape[0] // SUBSTEPS
    pick = np.arange(n_frames) * SUBSTEPS + SUBSTEPS - 1
    flat = np.concatenate(
        [raw["sensor"], raw["pressure"], raw["nodes"].reshape(len(pick) * SUBSTEPS, -1),
         raw["markers"].reshape(len(pick) * SUBSTEPS, -1), raw["force"][:, None]],
        axis=1,
    )
    f = lowpass(flat)[pick]
    sensor, pressure = f[:, :5], f[:, 5:10]
    nodes = f[:, 10:379].reshape(n_frames, -1, 3)
    markers = f[:, 379:418].reshape(n_frames, -1, 3)
    force = np.maximum(f[:, 418], 0.0)
    # labels come from the instantaneous force; smoothing a step would leak it across frames
    if f_strong is None:
        collided = np.zeros(n_frames, dtype=bool)
    else:
        collided = (raw["force"][pick] > f_strong) & (force > 0)
    t = FRAME_DT * (np.arange(n_frames) + 1)
    return Episode(t, sensor, pressure, nodes, markers, force, collided,
                   schedule_kind, cfg, seed, wall_x)
