"""Layer descriptors and parameter storage for the small LSTM/FC networks."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Union

import numpy as np


class ShapeMismatchError(ValueError):
    """Raised when array dimensions do not chain the way a layer expects."""


@dataclass(frozen=True)
class LSTM:
    input_dim: int
    hidden_dim: int

    @property
    def in_dim(self) -> int:
        return self.input_dim

    @property
    def out_dim(self) -> int:
        return self.hidden_dim


@dataclass(frozen=True)
class FC:
    in_dim: int
    out_dim: int


@dataclass(frozen=True)
class ReLU:
    pass


@dataclass(frozen=True)
class Tanh:
    pass


LayerSpec = Union[LSTM, FC, ReLU, Tanh]
_KINDS = {"lstm": LSTM, "fc": FC, "relu": ReLU, "tanh": Tanh}


@dataclass(frozen=True)
class NetSpec:
    """Ordered layer list. Activations inherit the width of the layer before them."""

    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        if not self.layers:
            raise ValueError("a network needs at least one layer")
        width = None
        for k, layer in enumerate(self.layers):
            if isinstance(layer, (LSTM, FC)):
                if min(layer.in_dim, layer.out_dim) < 1:
                    raise ValueError(f"layer {k}: dimensions must be positive")
                if width is not None and layer.in_dim != width:
                    raise ShapeMismatchError(
                        f"layer {k} ({type(layer).__name__}) expects {layer.in_dim} inputs, "
                        f"previous layer produces {width}"
                    )
                width = layer.out_dim
        if width is None:
            raise ValueError("a network needs at least one LSTM or FC layer")

    @property
    def in_dim(self) -> int:
        return next(l.in_dim for l in self.layers if isinstance(l, (LSTM, FC)))

    @property
    def out_dim(self) -> int:
        return next(l.out_dim for l in reversed(self.layers) if isinstance(l, (LSTM, FC)))

    def to_list(self) -> list[dict]:
        out = []
        for layer in self.layers:
            kind = next(k for k, cls in _KINDS.items() if isinstance(layer, cls))
            d = {"kind": kind}
            if isinstance(layer, LSTM):
                d.update(input_dim=layer.input_dim, hidden_dim=layer.hidden_dim)
            elif isinstance(layer, FC):
                d.update(in_dim=layer.in_dim, out_dim=layer.out_dim)
            out.append(d)
        return out

    @classmethod
    def from_list(cls, items: list[dict]) -> "NetSpec":
        layers = []
        for d in items:
            d = dict(d)
            layers.append(_KINDS[d.pop("kind")](**d))
        return cls(tuple(layers))


def param_shapes(layer: LayerSpec) -> dict[str, tuple[int, ...]]:
    if isinstance(layer, LSTM):
        d, h = layer.input_dim, layer.hidden_dim
        return {"W_x": (d, 4 * h), "W_h": (h, 4 * h), "b": (4 * h,)}
    if isinstance(layer, FC):
        return {"W": (layer.in_dim, layer.out_dim), "b": (layer.out_dim,)}
    return {}


def fan_in(layer: LayerSpec) -> int:
    if isinstance(layer, LSTM):
        return layer.input_dim + layer.hidden_dim
    return layer.in_dim


@dataclass
class NetParams:
    """Per-layer weight arrays with a shape-congruent gradient buffer."""

    weights: list[dict[str, np.ndarray]]
    grads: list[dict[str, np.ndarray]] = field(default=None)

    def __post_init__(self):
        if self.grads is None:
            self.grads = [{k: np.zeros_like(v) for k, v in w.items()} for w in self.weights]

    def items(self):
        """Yield ``(layer_index, name, weight, grad)`` for every parameter array."""
        for i, (w, g) in enumerate(zip(self.weights, self.grads)):
            for name in w:
                yield i, name, w[name], g[name]

    def zero_grad(self) -> None:
        for g in self.grads:
            for arr in g.values():
                arr.fill(0.0)

    def flat(self) -> np.ndarray:
        parts = [w.ravel() for _, _, w, _ in self.items()]
        return np.concatenate(parts) if parts else np.zeros(0)

    def load_flat(self, flat: np.ndarray) -> None:
        pos = 0
        for _, _, w, _ in self.items():
            w[...] = flat[pos : pos + w.size].reshape(w.shape)
            pos += w.size
        if pos != flat.size:
            raise ShapeMismatchError(f"flat vector has {flat.size} values, parameters need {pos}")

    @property
    def size(self) -> int:
        return sum(w.size for _, _, w, _ in self.items())

    def copy(self) -> "NetParams":
        return NetParams([{k: v.copy() for k, v in w.items()} for w in self.weights])


def seed_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def init_params(spec: NetSpec, rng: np.random.Generator) -> NetParams:
    """Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) for every weight and bias of a layer."""
    weights = []
    for layer in spec.layers:
        shapes = param_shapes(layer)
        if shapes:
            bound = 1.0 / np.sqrt(fan_in(layer))
            weights.append({k: rng.uniform(-bound, bound, size=s) for k, s in shapes.items()})
        else:
            weights.append({})
    return NetParams(weights)


def zero_params(spec: NetSpec) -> NetParams:
    return NetParams([{k: np.zeros(s) for k, s in param_shapes(l).items()} for l in spec.layers])
