"""Fold trained batch-norm parameters into per-channel sign thresholds.

sign(gamma' * (z - mu) + beta) with gamma' = gamma / sqrt(var + eps) equals
[z >= tau] for tau = mu - beta / gamma' when gamma' > 0.  Negative gamma'
reverses the comparison, so those output channels get their incoming weight
columns sign-flipped (and tau negated), keeping the simulator's fixed >= rule
valid; the channel's binary output is unchanged either way.  gamma' == 0
cannot be folded and aborts the export.
"""
from __future__ import annotations

import numpy as np

from .presets import fan_in


class ExportError(Exception):
    pass


def binarize_latent(weight: np.ndarray) -> np.ndarray:
    """Latent float weights to {-1,+1} with ties to +1."""
    return np.where(weight >= 0, 1, -1).astype(np.int8)


def weight_matrix(entry, latent: np.ndarray) -> np.ndarray:
    """Torch layout to the wire layout: rows ordered (kh, kw, c_in)."""
    if entry["kind"] == "conv":
        mat = np.transpose(latent, (2, 3, 1, 0)).reshape(fan_in(entry),
                                                         entry["out_channels"])
    else:
        mat = latent.T
    return binarize_latent(mat)


def fold_layer(entry, index: int, latent: np.ndarray, bn: dict | None):
    """Returns (folded weight matrix, thresholds or None)."""
    wmat = weight_matrix(entry, latent)
    if entry["activation"] != "sign":
        return wmat, None
    if bn is None:
        raise ExportError(f"layer {index}: sign layer without batch-norm stats")
    gamma = bn["weight"].astype(np.float64)
    beta = bn["bias"].astype(np.float64)
    mu = bn["running_mean"].astype(np.float64)
    var = bn["running_var"].astype(np.float64)
    gamma_eff = gamma / np.sqrt(var + bn["eps"])
    if np.any(gamma_eff == 0):
        bad = np.flatnonzero(gamma_eff == 0).tolist()
        raise ExportError(f"layer {index}: unfoldable batch-norm scale "
                          f"(gamma == 0) on channels {bad}")
    tau = mu - beta / gamma_eff
    flip = gamma_eff < 0
    wmat = wmat.copy()
    wmat[:, flip] *= -1
    tau = np.where(flip, -tau, tau)
    return wmat, tau


def fold_checkpoint(ckpt):
    """Fold every layer of a trained checkpoint.

    Returns (weights, thresholds): lists aligned with the layer table.
    """
    weights, thresholds = [], []
    for i, entry in enumerate(ckpt.layer_table):
        latent = ckpt.state[f"layers.{i}.weight"].numpy()
        bn = None
        if f"layers.{i}.bn.weight" in ckpt.state:
            bn = {
                "weight": ckpt.state[f"layers.{i}.bn.weight"].numpy(),
                "bias": ckpt.state[f"layers.{i}.bn.bias"].numpy(),
                "running_mean": ckpt.state[f"layers.{i}.bn.running_mean"].numpy(),
                "running_var": ckpt.state[f"layers.{i}.bn.running_var"].numpy(),
                "eps": 1e-5,
            }
        wmat, tau = fold_layer(entry, i, latent, bn)
        weights.append(wmat)
        thresholds.append(tau)
    return weights, thresholds
