"""Chamber curvature dynamics and the strain-sensor model for both domains."""

from __future__ import annotations

from dataclasses import asdict, dataclass, field, replace

import numpy as np

from ..nn.spec import seed_rng
from .schedules import N_CHAMBERS, P_MAX

DT_INTERNAL = 0.02  # s, simulation step
KAPPA_MAX = np.array([0.02, 0.02, 0.02, 0.02, 0.015])  # 1/mm
# strain per unit curvature (mm): sensor path offset from the neutral layer
STRAIN_PER_KAPPA = np.array([15.0, 15.0, 15.0, 15.0, 20.0])
PRESSURE_RATE = 600.0  # kPa/s ramp bound on the regulators
HYST_RATE = 5.0  # saturation rate of the hysteresis state per unit normalized curvature

SIM = "sim"
REAL = "real"


class NonFiniteStateError(FloatingPointError):
    pass


@dataclass(frozen=True)
class DomainConfig:
    domain: str = SIM
    gain: tuple = (1.0,) * N_CHAMBERS
    noise_sigma: float = 0.0
    tau_up: float = 0.0
    tau_down: float = 0.0
    hyst_beta: float = 0.0
    sensor_offset: tuple = (0.0,) * N_CHAMBERS

    def __post_init__(self):
        if self.domain not in (SIM, REAL):
            raise ValueError(f"unknown domain {self.domain!r}")
        object.__setattr__(self, "gain", tuple(float(g) for g in self.gain))
        object.__setattr__(self, "sensor_offset", tuple(float(o) for o in self.sensor_offset))
        if len(self.gain) != N_CHAMBERS or len(self.sensor_offset) != N_CHAMBERS:
            raise ValueError("gain and sensor_offset need one entry per chamber")
        if min(self.tau_up, self.tau_down, self.noise_sigma, self.hyst_beta) < 0:
            raise ValueError("time constants, noise and hysteresis must be non-negative")
        if self.domain == SIM and (
            any(g != 1.0 for g in self.gain)
            or any(o != 0.0 for o in self.sensor_offset)
            or self.noise_sigma != 0.0
            or self.tau_up != self.tau_down
            or self.hyst_beta != 0.0
        ):
            raise ValueError("the sim domain is ideal: unit gain, no offset/noise/hysteresis, symmetric tau")

    @classmethod
    def sim(cls) -> "DomainConfig":
        return cls()

    @classmethod
    def synthetic_real(cls, dataset_seed: int = 0, **overrides) -> "DomainConfig":
        """Default perturbed domain; gains and offsets are drawn from ``dataset_seed``."""
        rng = seed_rng(dataset_seed + 7919)
        cfg = cls(
            domain=REAL,
            gain=tuple(rng.uniform(0.8, 1.2, N_CHAMBERS)),
            noise_sigma=0.01,
            tau_up=0.12,
            tau_down=0.25,
            hyst_beta=0.15,
            sensor_offset=tuple(rng.uniform(0.05, 0.15, N_CHAMBERS)),
        )
        return replace(cfg, **overrides) if overrides else cfg

    def to_dict(self) -> dict:
        d = asdict(self)
        d["gain"] = list(self.gain)
        d["sensor_offset"] = list(self.sensor_offset)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "DomainConfig":
        return cls(**d)


@dataclass
class ChamberState:
    kappa: np.ndarray = field(default_factory=lambda: np.zeros(N_CHAMBERS))
    z_hyst: np.ndarray = field(default_factory=lambda: np.zeros(N_CHAMBERS))

    def effective_kappa(self, cfg: DomainConfig) -> np.ndarray:
        """Curvature seen by the body: the lagged state bent by the hysteresis state."""
        if cfg.hyst_beta == 0.0:
            return self.kappa.copy()
        return np.clip(self.kappa * (1.0 - cfg.hyst_beta * self.z_hyst), 0.0, KAPPA_MAX)


def ramp_pressure(targets: np.ndarray, dt: float = DT_INTERNAL, rate: float = PRESSURE_RATE,
                  p0: np.ndarray | None = None) -> np.ndarray:
    """Rate-limited regulator output for per-step targets ``(n, 5)``."""
    out = np.empty_like(targets, dtype=np.float64)
    p = np.zeros(targets.shape[1]) if p0 is None else np.array(p0, dtype=np.float64)
    lim = rate * dt
    for k in range(targets.shape[0]):
        p = p + np.clip(targets[k] - p, -lim, lim)
        out[k] = p
    return out


def step_dynamics(state: ChamberState, p: np.ndarray, cfg: DomainConfig,
                  dt: float = DT_INTERNAL) -> ChamberState:
    """Advance the chamber state one step under applied pressure ``p`` (kPa).

    First-order lag toward ``kappa_max * p / p_max`` with separate rise and fall
    time constants (zero means the state follows instantly), discretized exactly
    over ``dt``. The hysteresis state follows the normalized curvature rate and
    saturates at +/-1.
    """
    target = KAPPA_MAX * np.asarray(p, dtype=np.float64) / P_MAX
    kappa = state.kappa
    tau = np.where(target > kappa, cfg.tau_up, cfg.tau_down)
    alpha = np.where(tau > 0, -np.expm1(-dt / np.where(tau > 0, tau, 1.0)), 1.0)
    dk = (target - kappa) * alpha
    new_kappa = np.clip(kappa + dk, -KAPPA_MAX, KAPPA_MAX)
    z = state.z_hyst
    if cfg.hyst_beta > 0:
        rate = dk / KAPPA_MAX
        z = np.clip(z + HYST_RATE * (rate - np.abs(rate) * z), -1.0, 1.0)
    if not (np.all(np.isfinite(new_kappa)) and np.all(np.isfinite(z))):
        raise NonFiniteStateError(f"non-finite chamber state: kappa={new_kappa}, z={z}")
    return ChamberState(new_kappa, z)


def sensor_model(kappa: np.ndarray, cfg: DomainConfig,
                 rng: np.random.Generator | None = None) -> np.ndarray:
    """Relative resistance change ``(1 + strain)^2 - 1`` per chamber, then domain effects.

    ``kappa`` may carry leading axes; the last axis is the chamber axis.
    """
    strain = STRAIN_PER_KAPPA * np.asarray(kappa, dtype=np.float64)
    if np.any(strain <= -1.0):
        raise ValueError("strain <= -1 is not physical")
    reading = (1.0 + strain) ** 2 - 1.0
    if cfg.domain == SIM:
        return reading
    out = np.asarray(cfg.gain) * reading + np.asarray(cfg.sensor_offset)
    if cfg.noise_sigma > 0:
        if rng is None:
            raise ValueError("a noisy domain needs an rng")
        out = out + rng.normal(0.0, cfg.noise_sigma, size=out.shape)
    return out


def strain_to_reading(strain):
    """Direct evaluation of the normalized resistance law, no domain effects."""
    return (1.0 + np.asarray(strain, dtype=np.float64)) ** 2 - 1.0
