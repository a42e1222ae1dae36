from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from .network import Network


class NonFiniteGradientError(FloatingPointError):
    pass


@dataclass(frozen=True)
class OptimConfig:
    learning_rate: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-6

    def __post_init__(self):
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if not 0 <= self.weight_decay < 1:
            raise ValueError("weight_decay must lie in [0, 1)")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ValueError("beta1 and beta2 must lie in (0, 1)")

    def to_dict(self) -> dict:
        return asdict(self)


class Adam:
    """Adam with bias correction and decoupled weight decay over a group of networks.

    The decay term ``lr * weight_decay * theta`` is applied outside the moment
    estimates. ``step()`` clears the gradients it consumed.
    """

    def __init__(self, nets: dict[str, Network], cfg: OptimConfig):
        self.nets = nets
        self.cfg = cfg
        self.t = 0
        self.m = {k: [{n: np.zeros_like(w) for n, w in lw.items()} for lw in net.params.weights]
                  for k, net in nets.items()}
        self.v = {k: [{n: np.zeros_like(w) for n, w in lw.items()} for lw in net.params.weights]
                  for k, net in nets.items()}

    def check_finite(self) -> None:
        bad = []
        for key, net in self.nets.items():
            for i, name, _, g in net.params.items():
                if not np.all(np.isfinite(g)):
                    bad.append(f"{key}.layer{i}({type(net.spec.layers[i]).__name__}).{name}")
        if bad:
            raise NonFiniteGradientError("non-finite gradient in " + ", ".join(bad))

    def step(self) -> None:
        self.check_finite()
        c = self.cfg
        self.t += 1
        bc1 = 1.0 - c.beta1**self.t
        bc2 = 1.0 - c.beta2**self.t
        for key, net in self.nets.items():
            for i, name, w, g in net.params.items():
                m = self.m[key][i][name]
                v = self.v[key][i][name]
                m *= c.beta1
                m += (1.0 - c.beta1) * g
                v *= c.beta2
                v += (1.0 - c.beta2) * g * g
                w -= c.learning_rate * (m / bc1) / (np.sqrt(v / bc2) + c.eps)
                if c.weight_decay:
                    w -= c.learning_rate * c.weight_decay * w
                g.fill(0.0)

    def state_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        out = {f"{prefix}/t": np.array(self.t)}
        for key, net in self.nets.items():
            for i, name, _, _ in net.params.items():
                out[f"{prefix}/{key}/{i}/{name}/m"] = self.m[key][i][name]
                out[f"{prefix}/{key}/{i}/{name}/v"] = self.v[key][i][name]
        return out

    def load_state_arrays(self, prefix: str, arrays) -> None:
        self.t = int(arrays[f"{prefix}/t"])
        for key, net in self.nets.items():
            for i, name, _, _ in net.params.items():
                self.m[key][i][name][...] = arrays[f"{prefix}/{key}/{i}/{name}/m"]
                self.v[key][i][name][...] = arrays[f"{prefix}/{key}/{i}/{name}/v"]


def adam_step(opt: Adam) -> None:
    opt.step()
