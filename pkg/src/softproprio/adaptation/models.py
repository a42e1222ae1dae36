"""Network layouts and the per-variant model containers."""

from __future__ import annotations

from dataclasses import asdict, dataclass

from ..nn import FC, LSTM, NetSpec, Network, ReLU, Tanh, init_params, seed_rng
from ..robot.kinematics import N_NODES
from ..robot.physics import REAL, SIM

N_SENSORS = 5
N_PRESSURE = 5
N_OUT = 3 * N_NODES

DUAL_AE = "dual-ae"
DUAL_AE_NO_P = "dual-ae-no-p"
SINGLE_AE = "single-ae"
SIM_ONLY = "sim-only-lstm"
REAL2SIM = "real2sim-lstm"
VARIANTS = (DUAL_AE, DUAL_AE_NO_P, SINGLE_AE, SIM_ONLY, REAL2SIM)
AE_VARIANTS = (DUAL_AE, DUAL_AE_NO_P, SINGLE_AE)


@dataclass(frozen=True)
class ModelConfig:
    """Widths of the recurrent and fully connected layers (defaults are the full-size model)."""

    hidden: int = 256
    fc_width: int = 256
    latent_dim: int = 5

    def to_dict(self) -> dict:
        return asdict(self)


def encoder_spec(cfg: ModelConfig) -> NetSpec:
    h = cfg.hidden
    return NetSpec((LSTM(N_SENSORS, h), LSTM(h, h), FC(h, cfg.latent_dim)))


def decoder_spec(cfg: ModelConfig, with_pressure: bool = True) -> NetSpec:
    h = cfg.hidden
    d_in = cfg.latent_dim + (N_PRESSURE if with_pressure else 0)
    # ReLU sits before the output layer so z-scored (signed) targets stay reachable
    return NetSpec((LSTM(d_in, h), LSTM(h, h), ReLU(), FC(h, N_SENSORS)))


def kinematic_spec(cfg: ModelConfig, in_dim: int | None = None) -> NetSpec:
    h, f = cfg.hidden, cfg.fc_width
    d_in = cfg.latent_dim + N_PRESSURE if in_dim is None else in_dim
    return NetSpec((LSTM(d_in, h), FC(h, f), ReLU(), FC(f, f), Tanh(), FC(f, N_OUT)))


def sim_only_spec(cfg: ModelConfig) -> NetSpec:
    """Vanilla LSTM from (sensor, pressure) straight to node coordinates."""
    h, f = cfg.hidden, cfg.fc_width
    return NetSpec((LSTM(N_SENSORS + N_PRESSURE, h), LSTM(h, h), FC(h, f), ReLU(),
                    FC(f, f), Tanh(), FC(f, N_OUT)))


def real2sim_spec(cfg: ModelConfig) -> NetSpec:
    h = cfg.hidden
    return NetSpec((LSTM(N_SENSORS, h), LSTM(h, h), FC(h, N_SENSORS)))


def build_nets(variant: str, cfg: ModelConfig, seed: int) -> dict[str, Network]:
    """Freshly initialized networks for ``variant``, drawn in a fixed order from ``seed``."""
    rng = seed_rng(seed)

    def make(spec):
        return Network(spec, init_params(spec, rng))

    if variant in (DUAL_AE, DUAL_AE_NO_P):
        with_p = variant == DUAL_AE
        return {
            "E_sim": make(encoder_spec(cfg)),
            "E_real": make(encoder_spec(cfg)),
            "D_sim": make(decoder_spec(cfg, with_p)),
            "D_real": make(decoder_spec(cfg, with_p)),
            "K": make(kinematic_spec(cfg)),
        }
    if variant == SINGLE_AE:
        return {"E": make(encoder_spec(cfg)), "D": make(decoder_spec(cfg)), "K": make(kinematic_spec(cfg))}
    if variant == SIM_ONLY:
        return {"S": make(sim_only_spec(cfg))}
    if variant == REAL2SIM:
        return {"R": make(real2sim_spec(cfg)), "S": make(sim_only_spec(cfg))}
    raise ValueError(f"unknown variant {variant!r}; valid: {', '.join(VARIANTS)}")


class AutoEncoderModel:
    """Encoder/decoder lookup by domain over a dict of networks.

    A dual model keeps one encoder/decoder pair per domain; a single AE resolves
    both domains to the same pair.
    """

    def __init__(self, nets: dict[str, Network], condition_on_pressure: bool = True):
        self.nets = nets
        self.shared = "E" in nets
        self.condition_on_pressure = condition_on_pressure

    @classmethod
    def for_variant(cls, variant: str, nets: dict[str, Network]) -> "AutoEncoderModel":
        if variant not in AE_VARIANTS:
            raise ValueError(f"{variant!r} is not an autoencoder variant")
        return cls(nets, condition_on_pressure=variant != DUAL_AE_NO_P)

    def _check(self, domain):
        if domain not in (SIM, REAL):
            raise ValueError(f"unknown domain tag {domain!r}")

    def encoder(self, domain: str) -> Network:
        self._check(domain)
        return self.nets["E"] if self.shared else self.nets[f"E_{domain}"]

    def decoder(self, domain: str) -> Network:
        self._check(domain)
        return self.nets["D"] if self.shared else self.nets[f"D_{domain}"]

    @property
    def kinematic(self) -> Network:
        return self.nets["K"]

    def da_keys(self) -> tuple[str, ...]:
        return ("E", "D") if self.shared else ("E_sim", "D_sim", "E_real", "D_real")

    def task_keys(self) -> tuple[str, ...]:
        return ("E", "K") if self.shared else ("E_sim", "K")
