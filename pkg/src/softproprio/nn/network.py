"""Forward evaluation and backpropagation through time for :class:`NetSpec` networks.

Inputs are ``(B, T, D)`` arrays (a bare ``(T, D)`` sequence is promoted to a batch
of one). LSTM state starts at zero for every sequence in the batch.
"""

from __future__ import annotations

import numpy as np

from .spec import FC, LSTM, NetParams, NetSpec, ReLU, ShapeMismatchError, Tanh, init_params, seed_rng


def sigmoid(x: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * x))


def _lstm_forward(p, x):
    W_x, W_h, b = p["W_x"], p["W_h"], p["b"]
    B, T, _ = x.shape
    H = W_h.shape[0]
    xp = x @ W_x + b
    hs = np.zeros((B, T + 1, H))
    cs = np.zeros((B, T + 1, H))
    gates = np.empty((B, T, 4 * H))
    tcs = np.empty((B, T, H))
    h = hs[:, 0]
    c = cs[:, 0]
    for t in range(T):
        a = xp[:, t] + h @ W_h
        ifo = sigmoid(a[:, : 3 * H])
        g = np.tanh(a[:, 3 * H :])
        c = ifo[:, H : 2 * H] * c + ifo[:, :H] * g
        tc = np.tanh(c)
        h = ifo[:, 2 * H :] * tc
        gates[:, t, : 3 * H] = ifo
        gates[:, t, 3 * H :] = g
        cs[:, t + 1] = c
        hs[:, t + 1] = h
        tcs[:, t] = tc
    return hs[:, 1:].copy(), (x, hs, cs, gates, tcs)


def _lstm_backward(p, grads, cache, dy):
    x, hs, cs, gates, tcs = cache
    W_x, W_h = p["W_x"], p["W_h"]
    B, T, D = x.shape
    H = W_h.shape[0]
    da = np.empty((B, T, 4 * H))
    dh_next = np.zeros((B, H))
    dc_next = np.zeros((B, H))
    W_hT = W_h.T
    for t in range(T - 1, -1, -1):
        dh = dy[:, t] + dh_next
        gt = gates[:, t]
        i, f, o, g = gt[:, :H], gt[:, H : 2 * H], gt[:, 2 * H : 3 * H], gt[:, 3 * H :]
        tc = tcs[:, t]
        dc = dc_next + dh * o * (1.0 - tc * tc)
        dat = da[:, t]
        dat[:, :H] = dc * g * i * (1.0 - i)
        dat[:, H : 2 * H] = dc * cs[:, t] * f * (1.0 - f)
        dat[:, 2 * H : 3 * H] = dh * tc * o * (1.0 - o)
        dat[:, 3 * H :] = dc * i * (1.0 - g * g)
        dc_next = dc * f
        dh_next = dat @ W_hT
    da2 = da.reshape(B * T, 4 * H)
    grads["W_x"] += x.reshape(B * T, D).T @ da2
    grads["W_h"] += hs[:, :-1].reshape(B * T, H).T @ da2
    grads["b"] += da2.sum(axis=0)
    return da @ W_x.T


class Network:
    """A :class:`NetSpec` bound to parameters, caching activations between passes."""

    def __init__(self, spec: NetSpec, params: NetParams | None = None, seed: int | None = None):
        self.spec = spec
        if params is None:
            params = init_params(spec, seed_rng(0 if seed is None else seed))
        if len(params.weights) != len(spec.layers):
            raise ShapeMismatchError("parameter list does not match the layer list")
        self.params = params
        self._caches = None

    @property
    def in_dim(self) -> int:
        return self.spec.in_dim

    @property
    def out_dim(self) -> int:
        return self.spec.out_dim

    def forward(self, x: np.ndarray, cache: bool = True) -> np.ndarray:
        x = np.asarray(x, dtype=np.float64)
        squeeze = x.ndim == 2
        if squeeze:
            x = x[None]
        if x.ndim != 3 or x.shape[-1] != self.in_dim:
            raise ShapeMismatchError(
                f"expected input (B, T, {self.in_dim}) or (T, {self.in_dim}), got {x.shape}"
            )
        if x.shape[1] < 1:
            raise ShapeMismatchError("sequence length must be at least 1")
        caches = []
        for layer, p in zip(self.spec.layers, self.params.weights):
            if isinstance(layer, LSTM):
                x, c = _lstm_forward(p, x)
            elif isinstance(layer, FC):
                c = x
                x = x @ p["W"] + p["b"]
            elif isinstance(layer, ReLU):
                c = x > 0
                x = np.where(c, x, 0.0)
            elif isinstance(layer, Tanh):
                x = np.tanh(x)
                c = x
            caches.append(c)
        self._caches = (caches, squeeze) if cache else None
        return x[0] if squeeze else x

    def backward(self, dy: np.ndarray) -> np.ndarray:
        """Accumulate parameter gradients for ``dy = dLoss/dOutput``; returns dLoss/dInput."""
        if self._caches is None:
            raise RuntimeError("backward() called without a preceding forward() pass")
        caches, squeeze = self._caches
        self._caches = None
        dy = np.asarray(dy, dtype=np.float64)
        if squeeze:
            dy = dy[None]
        for layer, p, g, c in zip(
            reversed(self.spec.layers),
            reversed(self.params.weights),
            reversed(self.params.grads),
            reversed(caches),
        ):
            if isinstance(layer, LSTM):
                dy = _lstm_backward(p, g, c, dy)
            elif isinstance(layer, FC):
                n = c.shape[0] * c.shape[1]
                g["W"] += c.reshape(n, -1).T @ dy.reshape(n, -1)
                g["b"] += dy.reshape(n, -1).sum(axis=0)
                dy = dy @ p["W"].T
            elif isinstance(layer, ReLU):
                dy = dy * c
            elif isinstance(layer, Tanh):
                dy = dy * (1.0 - c * c)
        return dy[0] if squeeze else dy

    def zero_grad(self) -> None:
        self.params.zero_grad()

    def copy(self) -> "Network":
        return Network(self.spec, self.params.copy())


def forward_sequence(net: Network, x: np.ndarray) -> np.ndarray:
    return net.forward(x)


def backward(net: Network, loss_grad: np.ndarray) -> np.ndarray:
    return net.backward(loss_grad)
