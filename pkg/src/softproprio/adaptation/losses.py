"""Domain-adaptation and kinematic losses with their backward passes."""

from __future__ import annotations

from typing import NamedTuple

import numpy as np

from ..nn import ShapeMismatchError, l2_loss
from ..robot.physics import REAL, SIM
from .models import AutoEncoderModel


class DALoss(NamedTuple):
    total: float
    recon_s: float
    recon_r: float
    diff: float


def _batch(x):
    x = np.asarray(x, dtype=np.float64)
    return x[None] if x.ndim == 2 else x


def decoder_input(model: AutoEncoderModel, z: np.ndarray, p: np.ndarray) -> np.ndarray:
    return np.concatenate([z, p], axis=-1) if model.condition_on_pressure else z


def loss_da(model: AutoEncoderModel, x_sim, x_real, p, backward: bool = False) -> DALoss:
    """Sum of both reconstruction losses and the latent difference loss.

    Each reconstruction is ``l2(X, D(E(X) (+) P))`` in its own domain; the
    difference loss is ``l2(E_sim(X_sim), E_real(X_real))``. With ``backward=True``
    gradients are accumulated into every encoder/decoder.
    """
    xs, xr, p = _batch(x_sim), _batch(x_real), _batch(p)
    if not (xs.shape[:2] == xr.shape[:2] == p.shape[:2]):
        raise ShapeMismatchError(
            f"sim, real and pressure sequences must be time-aligned: {xs.shape}, {xr.shape}, {p.shape}"
        )
    cache = backward
    if model.shared:
        E, D = model.encoder(SIM), model.decoder(SIM)
        z = E.forward(np.concatenate([xs, xr]), cache=cache)
        zs, zr = np.split(z, 2)
        xhat = D.forward(decoder_input(model, z, np.concatenate([p, p])), cache=cache)
        xs_hat, xr_hat = np.split(xhat, 2)
    else:
        zs = model.encoder(SIM).forward(xs, cache=cache)
        zr = model.encoder(REAL).forward(xr, cache=cache)
        xs_hat = model.decoder(SIM).forward(decoder_input(model, zs, p), cache=cache)
        xr_hat = model.decoder(REAL).forward(decoder_input(model, zr, p), cache=cache)

    recon_s, g_s = l2_loss(xs_hat, xs)
    recon_r, g_r = l2_loss(xr_hat, xr)
    diff, g_z = l2_loss(zs, zr)
    if backward:
        lat = zs.shape[-1]
        if model.shared:
            d_in = model.decoder(SIM).backward(np.concatenate([g_s, g_r]))[..., :lat]
            model.encoder(SIM).backward(d_in + np.concatenate([g_z, -g_z]))
        else:
            ds = model.decoder(SIM).backward(g_s)[..., :lat]
            dr = model.decoder(REAL).backward(g_r)[..., :lat]
            model.encoder(SIM).backward(ds + g_z)
            model.encoder(REAL).backward(dr - g_z)
    return DALoss(recon_s + recon_r + diff, recon_s, recon_r, diff)


def loss_kine(model: AutoEncoderModel, x_sim, p, k, backward: bool = False) -> float:
    """``l2(k, K(E_sim(X_sim) (+) P))``; backward reaches only the sim encoder and K."""
    xs, p, k = _batch(x_sim), _batch(p), _batch(k)
    if not xs.shape[:2] == p.shape[:2] == k.shape[:2]:
        raise ShapeMismatchError("sensor, pressure and kinematics must be time-aligned")
    E, K = model.encoder(SIM), model.kinematic
    z = E.forward(xs, cache=backward)
    k_hat = K.forward(np.concatenate([z, p], axis=-1), cache=backward)
    loss, g = l2_loss(k_hat, k)
    if backward:
        E.backward(K.backward(g)[..., : z.shape[-1]])
    return loss
