"""Trained-model bundle (nets + statistics + schedule in one file) and inference."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import NamedTuple

import numpy as np

from ..dataset import NormStats
from ..nn import Network, load_networks, save_networks
from ..robot.physics import REAL, SIM
from .losses import decoder_input
from .models import AE_VARIANTS, REAL2SIM, SIM_ONLY, VARIANTS, AutoEncoderModel, ModelConfig, build_nets
from .trainer import TrainSchedule

BUNDLE_FORMAT = "softproprio-bundle/1"
_CURRENT = "current:"


class LatentSeq(NamedTuple):
    z: np.ndarray
    source_domain: str


class UntrainedBundleError(ValueError):
    pass


@dataclass
class TrainedBundle:
    variant: str
    seed: int
    nets: dict[str, Network]
    stats: NormStats
    schedule: TrainSchedule
    model_cfg: ModelConfig
    info: dict = field(default_factory=dict)
    trained: bool = True

    @classmethod
    def initialized(cls, variant: str, seed: int, stats: NormStats, schedule: TrainSchedule,
                    model_cfg: ModelConfig) -> "TrainedBundle":
        """Freshly initialized (untrained) networks, e.g. as a before-training reference."""
        return cls(variant, seed, build_nets(variant, model_cfg, seed), stats, schedule, model_cfg,
                   {}, trained=False)

    def model(self) -> AutoEncoderModel:
        return AutoEncoderModel.for_variant(self.variant, self.nets)

    def save(self, path: str | Path, resume: dict | None = None) -> None:
        """Write one self-contained ``.npz``; ``resume`` adds optimizer and loop state."""
        meta = {
            "format": BUNDLE_FORMAT,
            "variant": self.variant,
            "seed": self.seed,
            "stats": self.stats.to_dict(),
            "schedule": self.schedule.to_dict(),
            "model": self.model_cfg.to_dict(),
            "info": self.info,
            "trained": self.trained,
        }
        nets = dict(self.nets)
        extra = {}
        if resume:
            nets.update({_CURRENT + k: v for k, v in resume["current_nets"].items()})
            extra = dict(resume["arrays"])
            meta["resume"] = {k: resume[k] for k in
                              ("epoch", "counters", "curve", "best_val", "best_epoch", "bad",
                               "rng", "da_stream", "task_stream", "stopped")}
        save_networks(path, nets, meta, extra)

    @classmethod
    def load(cls, path: str | Path) -> tuple["TrainedBundle", dict | None]:
        """Returns the bundle and, when present, the resume state."""
        nets, meta, extra = load_networks(path)
        if meta.get("format") != BUNDLE_FORMAT:
            raise ValueError(f"{path}: not a trained bundle")
        best = {k: v for k, v in nets.items() if not k.startswith(_CURRENT)}
        bundle = cls(meta["variant"], int(meta["seed"]), best, NormStats.from_dict(meta["stats"]),
                     TrainSchedule(**meta["schedule"]), ModelConfig(**meta["model"]),
                     meta.get("info", {}), bool(meta.get("trained", True)))
        resume = None
        if "resume" in meta:
            resume = dict(meta["resume"])
            resume["arrays"] = extra
            resume["current_nets"] = {k[len(_CURRENT):]: v for k, v in nets.items() if k.startswith(_CURRENT)}
            resume["best_nets"] = {k: v.copy() for k, v in best.items()}
        return bundle, resume


def _check_domain(domain):
    if domain not in (SIM, REAL):
        raise ValueError(f"unknown domain tag {domain!r}")


def _require_trained(bundle: TrainedBundle):
    if not bundle.trained:
        raise UntrainedBundleError(f"bundle {bundle.variant}/seed {bundle.seed} holds untrained networks")


def encode(bundle: TrainedBundle, x: np.ndarray, domain: str) -> LatentSeq:
    """Latent sequence of raw sensor readings ``x`` (T, 5) through the ``domain`` encoder."""
    _check_domain(domain)
    if bundle.variant not in AE_VARIANTS:
        raise ValueError(f"{bundle.variant} has no encoder")
    z = bundle.model().encoder(domain).forward(bundle.stats.sensor(x, domain), cache=False)
    return LatentSeq(z, domain)


def reconstruct_normalized(bundle: TrainedBundle, x: np.ndarray, p: np.ndarray, domain: str):
    """``(x_norm, x_hat_norm)`` in the input domain's normalized units.

    Autoencoder variants use the same-domain decoder; the real-to-sim baseline's
    mapping output serves as its prediction of the input.
    """
    _check_domain(domain)
    x = np.asarray(x, dtype=np.float64)
    if x.shape[:-1] != np.shape(p)[:-1]:
        raise ValueError(f"sensor and pressure lengths differ: {x.shape} vs {np.shape(p)}")
    xn = bundle.stats.sensor(x, domain)
    if bundle.variant in AE_VARIANTS:
        model = bundle.model()
        z = model.encoder(domain).forward(xn, cache=False)
        pn = bundle.stats.pressure(np.asarray(p, dtype=np.float64))
        xhat = model.decoder(domain).forward(decoder_input(model, z, pn), cache=False)
    elif bundle.variant == REAL2SIM:
        xhat = bundle.nets["R"].forward(xn, cache=False)
    else:
        raise ValueError(f"{bundle.variant} does not reconstruct its input")
    return xn, xhat


def reconstruct(bundle: TrainedBundle, x: np.ndarray, p: np.ndarray, domain: str) -> np.ndarray:
    """Reconstruction of raw sensor readings, returned in raw units."""
    _, xhat = reconstruct_normalized(bundle, x, p, domain)
    return bundle.stats.sensor_inv(xhat, domain)


def estimate_nodes_normalized(bundle: TrainedBundle, x: np.ndarray, p: np.ndarray, domain: str) -> np.ndarray:
    """Normalized node coordinates ``(T, 369)`` from raw sensors and pressure."""
    _check_domain(domain)
    _require_trained(bundle)
    x = np.asarray(x, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    if x.shape[:-1] != p.shape[:-1]:
        raise ValueError(f"sensor and pressure lengths differ: {x.shape} vs {p.shape}")
    st = bundle.stats
    pn = st.pressure(p)
    if bundle.variant in AE_VARIANTS:
        model = bundle.model()
        z = model.encoder(domain).forward(st.sensor(x, domain), cache=False)
        out = model.kinematic.forward(np.concatenate([z, pn], -1), cache=False)
    elif bundle.variant == SIM_ONLY:
        # trained on simulation only: every input is read as if it were a sim sensor
        out = bundle.nets["S"].forward(np.concatenate([st.sensor(x, SIM), pn], -1), cache=False)
    elif bundle.variant == REAL2SIM:
        xs = st.sensor(x, SIM) if domain == SIM else bundle.nets["R"].forward(st.sensor(x, REAL), cache=False)
        out = bundle.nets["S"].forward(np.concatenate([xs, pn], -1), cache=False)
    else:  # pragma: no cover - guarded by VARIANTS
        raise ValueError(f"unknown variant {bundle.variant!r}; valid: {VARIANTS}")
    return out


def bundle_summary(bundle: TrainedBundle) -> str:
    return json.dumps({"variant": bundle.variant, "seed": bundle.seed, **bundle.info}, sort_keys=True)
