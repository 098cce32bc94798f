"""Analog subarray abstraction: two-cell weight mapping onto fixed-size
tiles, ideal column sums for a driven input pattern, and the integer ADC
transfer function that is the model's only source of analog fidelity loss."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

DRIVE_XNOR = "xnor"          # inputs in {-1, +1}; 0 marks an undriven (masked) row
DRIVE_BITPLANE = "bitplane"  # inputs in {0, 1}


@dataclass(frozen=True)
class SubarrayTile:
    """One R x C physical subarray holding a slice of the weight matrix.

    Each mapped weight occupies a complementary cell pair: exactly one of
    (cells_pos, cells_neg) is 1, so g+ - g- recovers the signed weight.
    """

    cells_pos: np.ndarray      # uint8 (rows_used, cols_used)
    cells_neg: np.ndarray
    row_offset: int
    col_offset: int

    @property
    def rows_used(self) -> int:
        return self.cells_pos.shape[0]

    @property
    def cols_used(self) -> int:
        return self.cells_pos.shape[1]

    def weights(self) -> np.ndarray:
        return self.cells_pos.astype(np.int8) - self.cells_neg.astype(np.int8)


def map_weights(weight_matrix, rows: int, cols: int) -> list[SubarrayTile]:
    """Partition a K x N {-1,+1} matrix onto ceil(K/rows) * ceil(N/cols) tiles."""
    w = np.asarray(weight_matrix, dtype=np.int8)
    if w.ndim != 2 or w.size == 0:
        raise ValueError("weight matrix must be 2-D and non-empty")
    if rows < 1 or cols < 1:
        raise ValueError("subarray dims must be positive")
    if not np.all(np.isin(w, (-1, 1))):
        raise ValueError("weights must be exactly -1 or +1")
    k, n = w.shape
    tiles = []
    for r0 in range(0, k, rows):
        for c0 in range(0, n, cols):
            block = w[r0:r0 + rows, c0:c0 + cols]
            tiles.append(SubarrayTile(
                cells_pos=(block > 0).astype(np.uint8),
                cells_neg=(block < 0).astype(np.uint8),
                row_offset=r0,
                col_offset=c0,
            ))
    return tiles


def reassemble(tiles: list[SubarrayTile], k: int, n: int) -> np.ndarray:
    """Stitch g+ - g- back into the full K x N matrix (test oracle helper)."""
    out = np.zeros((k, n), dtype=np.int8)
    for t in tiles:
        out[t.row_offset:t.row_offset + t.rows_used,
            t.col_offset:t.col_offset + t.cols_used] = t.weights()
    return out


def column_sums(tile: SubarrayTile, drive, mode: str = DRIVE_XNOR) -> np.ndarray:
    """Ideal integer column sums for one drive vector.

    xnor mode drives complementary wordline pairs, so a column reads
    sum_i a_i * w_ij with a_i in {-1,+1} (0 = masked row, contributes 0).
    bitplane mode drives single lines with v_i in {0,1}.
    """
    d = np.asarray(drive, dtype=np.int64)
    if d.shape != (tile.rows_used,):
        raise ValueError(
            f"drive length {d.shape} != rows_used ({tile.rows_used},)")
    if mode == DRIVE_XNOR:
        if not np.all(np.isin(d, (-1, 0, 1))):
            raise ValueError("xnor drive values must be -1, 0 (masked) or +1")
    elif mode == DRIVE_BITPLANE:
        if not np.all(np.isin(d, (0, 1))):
            raise ValueError("bitplane drive values must be 0 or 1")
    else:
        raise ValueError(f"unknown drive mode {mode!r}")
    return d @ tile.weights().astype(np.int64)


def column_sums_batch(tile: SubarrayTile, drives) -> np.ndarray:
    """Column sums for a (n_drives, rows_used) matrix of drive vectors."""
    d = np.asarray(drives, dtype=np.int64)
    return d @ tile.weights().astype(np.int64)


@dataclass(frozen=True)
class AdcSpec:
    """Uniform integer quantizer over a calibrated clip range.

    Reconstruction levels are clip_lo + code * step with 2**resolution_bits
    codes.  step is the smallest integer for which the levels span the clip
    range, which yields exact pass-through whenever 2**A covers the range.
    """

    resolution_bits: int
    clip_lo: int
    clip_hi: int
    step: int

    def __post_init__(self):
        if self.clip_lo > self.clip_hi:
            raise ValueError("clip_lo must not exceed clip_hi")
        if self.step < 1:
            raise ValueError("step must be at least 1")

    @classmethod
    def from_clip(cls, clip_lo: int, clip_hi: int, resolution_bits: int) -> "AdcSpec":
        if resolution_bits < 1:
            raise ValueError("ADC resolution must be at least 1 bit")
        span = int(clip_hi) - int(clip_lo)
        levels = (1 << resolution_bits) - 1
        step = max(1, math.ceil(span / levels)) if span > 0 else 1
        return cls(resolution_bits=resolution_bits, clip_lo=int(clip_lo),
                   clip_hi=int(clip_hi), step=step)

    @property
    def is_lossless(self) -> bool:
        return self.step == 1


@dataclass(frozen=True)
class FullRange:
    """Parameter-free calibration: clip at +-active rows."""
    rows_active: int


@dataclass(frozen=True)
class Percentile:
    """Statistics-aware calibration: clip at the symmetrized central p mass."""
    p: float = 99.9


def calibrate_adc(partial_sum_samples, resolution_bits: int, policy) -> AdcSpec:
    """Build an AdcSpec from a calibration policy.

    FullRange ignores the samples and clips at [-rows_active, rows_active].
    Percentile takes the central p% of the sample distribution and
    symmetrizes it around zero.
    """
    if isinstance(policy, FullRange):
        r = int(policy.rows_active)
        if r < 1:
            raise ValueError("rows_active must be positive")
        return AdcSpec.from_clip(-r, r, resolution_bits)
    if isinstance(policy, Percentile):
        s = np.asarray(partial_sum_samples)
        if s.size == 0:
            raise ValueError("percentile calibration needs non-empty samples")
        tail = (100.0 - policy.p) / 2.0
        lo = np.percentile(s, tail)
        hi = np.percentile(s, 100.0 - tail)
        m = int(max(math.ceil(abs(lo)), math.ceil(abs(hi)), 0))
        return AdcSpec.from_clip(-m, m, resolution_bits)
    raise ValueError(f"unknown calibration policy {policy!r}")


def adc_quantize(s, spec: AdcSpec):
    """Quantize integer partial sums through the ADC and reconstruct.

    Out-of-clip inputs clamp to the range first.  The code is the nearest
    level index (ties round up), all in exact integer arithmetic, so the
    result is deterministic and monotone in s.
    """
    arr = np.asarray(s)
    scalar = arr.ndim == 0
    v = np.clip(arr.astype(np.int64), spec.clip_lo, spec.clip_hi)
    num = v - spec.clip_lo
    code = (2 * num + spec.step) // (2 * spec.step)
    code = np.clip(code, 0, (1 << spec.resolution_bits) - 1)
    out = spec.clip_lo + code * spec.step
    return int(out) if scalar else out
