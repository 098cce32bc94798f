"""Dynamic quantization of the first-layer input, two's-complement bit
planes for bit-serial drive, and sign binarization of activations."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def round_half_away(x):
    """Round to nearest integer with ties away from zero (deterministic)."""
    x = np.asarray(x, dtype=np.float64)
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class QuantizedTensor:
    """Signed integers plus a positive scale; values * scale approximates
    the source tensor within scale/2 per element."""

    values: np.ndarray        # int32, within the two's-complement range of B bits
    scale: float
    precision_bits: int

    def __post_init__(self):
        b = self.precision_bits
        lo, hi = _value_range(b)
        v = self.values
        if v.size and (v.min() < lo or v.max() > hi):
            raise ValueError(f"values outside {b}-bit two's-complement range")
        if not self.scale > 0:
            raise ValueError("scale must be positive")

    def dequantize(self) -> np.ndarray:
        return self.values.astype(np.float64) * self.scale


@dataclass(frozen=True)
class BitPlaneSet:
    """LSB-first binary planes of a quantized tensor.

    Plane b carries weight 2**b except the final (sign) plane, which carries
    -2**(B-1); the weighted sum reconstructs the values exactly.
    """

    planes: np.ndarray        # uint8, shape (B, *value_dims), entries 0/1
    precision_bits: int

    @property
    def plane_weights(self) -> np.ndarray:
        b = self.precision_bits
        w = np.array([1 << i for i in range(b)], dtype=np.int64)
        w[-1] = -(1 << (b - 1))
        return w


def _value_range(bits: int) -> tuple[int, int]:
    if bits == 1:
        return -1, 0
    return -(1 << (bits - 1)), (1 << (bits - 1)) - 1


def quantize_dynamic(x, precision_bits: int) -> QuantizedTensor:
    """Quantize a real tensor to B-bit signed integers with a per-tensor scale.

    scale = max|x| / (2**(B-1) - 1) when max|x| > 0, else 1.  For B = 1 the
    divisor degenerates to zero, so the scale falls back to max|x| and values
    live in {-1, 0}.  Rounding is half-away-from-zero.
    """
    if not 1 <= precision_bits <= 32:
        raise ValueError("precision_bits must be in 1..32")
    x = np.asarray(x, dtype=np.float64)
    if x.size == 0:
        raise ValueError("cannot quantize an empty tensor")
    lo, hi = _value_range(precision_bits)
    maxabs = float(np.max(np.abs(x)))
    if precision_bits == 1:
        scale = maxabs if maxabs > 0 else 1.0
    else:
        scale = maxabs / hi if maxabs > 0 else 1.0
    values = np.clip(round_half_away(x / scale), lo, hi).astype(np.int32)
    return QuantizedTensor(values=values, scale=scale, precision_bits=precision_bits)


def quantize_dynamic_batch(x, precision_bits: int, scope: str = "sample"):
    """Quantize a batch (first axis = samples).

    scope="sample" quantizes every sample with its own dynamic range and
    returns (values, scales[N]); scope="tensor" uses one range for the whole
    batch.  Sample scope makes results independent of batch composition.
    """
    x = np.asarray(x, dtype=np.float64)
    if scope == "tensor":
        q = quantize_dynamic(x, precision_bits)
        return q.values, np.full(x.shape[0], q.scale)
    if scope != "sample":
        raise ValueError(f"unknown quantization scope {scope!r}")
    if not 1 <= precision_bits <= 32:
        raise ValueError("precision_bits must be in 1..32")
    lo, hi = _value_range(precision_bits)
    flat = x.reshape(x.shape[0], -1)
    maxabs = np.max(np.abs(flat), axis=1)
    if precision_bits == 1:
        scales = np.where(maxabs > 0, maxabs, 1.0)
    else:
        scales = np.where(maxabs > 0, maxabs / hi, 1.0)
    values = np.clip(
        round_half_away(x / scales.reshape((-1,) + (1,) * (x.ndim - 1))), lo, hi
    ).astype(np.int32)
    return values, scales


def bit_serialize(q: QuantizedTensor) -> BitPlaneSet:
    """Two's-complement decomposition into LSB-first binary planes."""
    b = q.precision_bits
    u = q.values.astype(np.int64) & ((1 << b) - 1)
    planes = np.stack([((u >> i) & 1).astype(np.uint8) for i in range(b)])
    return BitPlaneSet(planes=planes, precision_bits=b)


def reconstruct_planes(bp: BitPlaneSet) -> np.ndarray:
    """Inverse of bit_serialize: weighted plane sum, exact by construction."""
    w = bp.plane_weights
    return np.tensordot(w, bp.planes.astype(np.int64), axes=(0, 0))


def binarize(x, thresholds) -> np.ndarray:
    """Per-output-channel sign: +1 where x >= threshold, else -1.

    The last axis of x indexes channels and must match the threshold length.
    """
    x = np.asarray(x)
    tau = np.asarray(thresholds, dtype=np.float64)
    if tau.ndim != 1 or x.shape[-1] != tau.shape[0]:
        raise ValueError(
            f"channel count {x.shape[-1] if x.ndim else 0} != threshold length {tau.shape}")
    return np.where(x >= tau, 1, -1).astype(np.int8)
