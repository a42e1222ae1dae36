"""Surrogate twin-domain soft robot: schedules, chamber dynamics, sensors, geometry, episodes."""

from .episode import (
    CRAWL_OBSTRUCTED,
    CRAWL_UNOBSTRUCTED,
    RANDOM_ACTION,
    SCHEDULE_KINDS,
    Episode,
    Frame,
    calibrate_strong_force,
    generate_episode,
)
from .io import read_csv, read_episode, read_npz, write_csv, write_npz
from .kinematics import apply_wall, kinematics
from .physics import REAL, SIM, ChamberState, DomainConfig, sensor_model, step_dynamics
from .schedules import P_MAX, schedule_crawl, schedule_random
