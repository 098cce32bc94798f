"""Plain integer reference forward pass over folded layers.

This is the oracle the simulator's exact mode must reproduce bit for bit:
per-sample dynamic input quantization, integer convolutions, pooling on
integer pre-activations, and float64 threshold comparisons in the canonical
order (value * scale, then pool-area division, then final_scale).
"""
from __future__ import annotations

import numpy as np


def quantize_sample(x: np.ndarray, bits: int):
    x = np.asarray(x, dtype=np.float64)
    maxabs = float(np.max(np.abs(x)))
    if bits == 1:
        lo, hi = -1, 0
        scale = maxabs if maxabs > 0 else 1.0
    else:
        lo, hi = -(1 << (bits - 1)), (1 << (bits - 1)) - 1
        scale = maxabs / hi if maxabs > 0 else 1.0
    scaled = x / scale
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return np.clip(rounded, lo, hi).astype(np.int64), scale


def _conv(x, wmat, entry):
    kh, kw = entry["kernel"]
    stride, pad = entry["stride"], entry["padding"]
    h, w, _ = x.shape
    if pad:
        x = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((oh, ow, wmat.shape[1]), dtype=np.int64)
    for i in range(oh):
        for j in range(ow):
            patch = x[i * stride:i * stride + kh, j * stride:j * stride + kw, :]
            out[i, j, :] = patch.reshape(-1) @ wmat
    return out


def _pool(x, pool):
    win, stride = pool["window"], pool["stride"]
    h, w, c = x.shape
    ph = (h - win) // stride + 1
    pw = (w - win) // stride + 1
    out = np.zeros((ph, pw, c), dtype=x.dtype)
    for i in range(ph):
        for j in range(pw):
            block = x[i * stride:i * stride + win, j * stride:j * stride + win, :]
            out[i, j] = block.max(axis=(0, 1)) if pool["mode"] == "max" \
                else block.sum(axis=(0, 1))
    return out


def forward_sample(layers, weights, thresholds, final_scale, x, input_bits,
                   collect=None):
    """One sample through the folded network; returns the logits vector.

    input_bits=None feeds the raw real input to the first layer (used for
    the folding-exactness check, where quantization is out of scope).
    """
    outputs = []
    result = None
    for i, entry in enumerate(layers):
        srcs = [x if s == -1 else outputs[s] for s in entry["sources"]]
        if len(srcs) == 1:
            act = srcs[0]
        elif entry["combine"] == "concat":
            act = np.concatenate(srcs, axis=-1)
        else:
            total = sum(s.astype(np.int64) for s in srcs)
            act = np.where(total >= 0, 1, -1).astype(np.int8)
        scale = 1.0
        if i == 0:
            if input_bits is None:
                act = np.asarray(act, dtype=np.float64)
            else:
                act, scale = quantize_sample(act, input_bits)
        wmat = weights[i].astype(act.dtype if act.dtype == np.float64 else np.int64)
        if entry["kind"] == "conv":
            if act.dtype == np.float64:
                vals = _conv_float(act, wmat, entry)
            else:
                vals = _conv(act, wmat, entry)
        else:
            vals = act.reshape(-1) @ wmat
        area = 1
        if entry["pool"] is not None:
            vals = _pool(vals, entry["pool"])
            if entry["pool"]["mode"] == "avg":
                area = entry["pool"]["window"] ** 2
        real = vals.astype(np.float64) if i > 0 else vals.astype(np.float64) * scale
        if collect is not None:
            collect.setdefault(i, []).append(vals)
        if entry["activation"] == "sign":
            tau = thresholds[i]
            rhs = tau * area if area != 1 else tau
            result = np.where(real >= rhs, 1, -1).astype(np.int8)
        else:
            if area != 1:
                real = real / area
            result = real * final_scale if i == len(layers) - 1 else real
        outputs.append(result)
    return result.reshape(-1)


def _conv_float(x, wmat, entry):
    kh, kw = entry["kernel"]
    stride, pad = entry["stride"], entry["padding"]
    h, w, _ = x.shape
    if pad:
        x = np.pad(x, ((pad, pad), (pad, pad), (0, 0)))
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (w + 2 * pad - kw) // stride + 1
    out = np.zeros((oh, ow, wmat.shape[1]), dtype=np.float64)
    for i in range(oh):
        for j in range(ow):
            patch = x[i * stride:i * stride + kh, j * stride:j * stride + kw, :]
            out[i, j, :] = patch.reshape(-1) @ wmat.astype(np.float64)
    return out


def forward_batch(layers, weights, thresholds, final_scale, batch,
                  input_bits=8, collect=None):
    return np.stack([
        forward_sample(layers, weights, thresholds, final_scale, x,
                       input_bits, collect)
        for x in np.asarray(batch)])


def accuracy(layers, weights, thresholds, final_scale, data, labels,
             input_bits=8) -> float:
    logits = forward_batch(layers, weights, thresholds, final_scale, data,
                           input_bits)
    return float(np.mean(np.argmax(logits, axis=1) == labels))
