"""End-to-end execution of a network on the subarray model: im2col conv
lowering, bit-serial first layer, per-tile ADC quantization, integer pooling,
sign thresholds, and top-1 accuracy scoring.

All arithmetic after input quantization is integer; the only real-valued
steps are the per-sample input scale and the threshold comparisons, which use
a fixed float64 operation order so independent implementations can match the
logits bit for bit (see docs/SCHEMA.md).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .model_ir import (
    ACT_SIGN,
    COMBINE_CONCAT,
    KIND_CONV,
    POOL_AVG,
    POOL_MAX,
    LayerDescriptor,
    NetworkDescriptor,
)
from .quantizer import quantize_dynamic_batch
from .xbar import AdcSpec, FullRange, Percentile, adc_quantize, calibrate_adc


@dataclass(frozen=True)
class ExecutionConfig:
    input_precision_bits: int = 8      # B, first-layer dynamic quantization
    adc_resolution_bits: int = 8       # A
    subarray_rows: int = 128           # R
    subarray_cols: int = 128           # C
    calibration: str = "full_range"    # "full_range" or "percentile"
    percentile_p: float = 99.9
    exact_mode: bool = False           # lossless ADC everywhere
    quantization_scope: str = "sample"  # "sample" or "tensor" (whole batch)

    def __post_init__(self):
        if not 1 <= self.input_precision_bits <= 8:
            raise ValueError("input_precision_bits must be in 1..8")
        if not 1 <= self.adc_resolution_bits <= 16:
            raise ValueError("adc_resolution_bits must be in 1..16")
        if self.subarray_rows < 1 or self.subarray_cols < 1:
            raise ValueError("subarray dims must be positive")
        if self.calibration not in ("full_range", "percentile"):
            raise ValueError(f"unknown calibration policy {self.calibration!r}")


@dataclass(frozen=True)
class LayerTrace:
    layer: int
    tiles: int
    bitplanes: int
    adc_conversions: int
    macs: int
    checksum: int


@dataclass(frozen=True)
class Dataset:
    data: np.ndarray     # float32, (N, H, W, C) or (N, F)
    labels: np.ndarray   # int32, (N,)
    class_count: int

    def __len__(self):
        return self.data.shape[0]


def load_dataset(path) -> Dataset:
    """Read the dataset directory format: data.bin + labels.bin + shape.json."""
    path = Path(path)
    meta = json.loads((path / "shape.json").read_text())
    shape = [int(meta["num_samples"])] + [int(d) for d in meta["sample_shape"]]
    data = np.frombuffer((path / "data.bin").read_bytes(), dtype="<f4")
    data = data.reshape(shape).astype(np.float32)
    labels = np.frombuffer((path / "labels.bin").read_bytes(), dtype="<i4")
    labels = labels.astype(np.int32)
    if labels.shape[0] != shape[0]:
        raise ValueError("labels.bin length does not match num_samples")
    return Dataset(data=data, labels=labels, class_count=int(meta["class_count"]))


def save_dataset(ds: Dataset, path) -> None:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    (path / "data.bin").write_bytes(ds.data.astype("<f4").tobytes())
    (path / "labels.bin").write_bytes(ds.labels.astype("<i4").tobytes())
    meta = {
        "num_samples": int(ds.data.shape[0]),
        "sample_shape": [int(d) for d in ds.data.shape[1:]],
        "class_count": int(ds.class_count),
    }
    (path / "shape.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


# ---------------------------------------------------------------------------
# Convolution lowering
# ---------------------------------------------------------------------------

def _im2col(x: np.ndarray, layer: LayerDescriptor) -> np.ndarray:
    """Gather conv patches: (N, H, W, C) -> (N, OH*OW, kh*kw*C).

    Padding elements enter patches as zeros, which drive no current in either
    crossbar mode.  Patch element order is (kh, kw, c) row-major, matching
    the weight-matrix row order.
    """
    n, h, w, c = x.shape
    kh, kw = layer.kernel
    s = layer.stride
    p = layer.padding
    oh, ow = layer.conv_out_hw()
    if p:
        x = np.pad(x, ((0, 0), (p, p), (p, p), (0, 0)))
    cols = np.empty((n, oh, ow, kh, kw, c), dtype=x.dtype)
    for dh in range(kh):
        for dw in range(kw):
            cols[:, :, :, dh, dw, :] = x[:, dh:dh + s * (oh - 1) + 1:s,
                                         dw:dw + s * (ow - 1) + 1:s, :]
    return cols.reshape(n, oh * ow, kh * kw * c)


def lower_conv(layer: LayerDescriptor, act, weight_matrix):
    """Lower a convolution to matrix form.

    Returns (patch_matrix, weight_matrix) with patch rows indexed by output
    position and columns by (kh, kw, c); their product equals the direct
    convolution.
    """
    act = np.asarray(act)
    single = act.ndim == 3
    if single:
        act = act[None]
    if act.shape[1:] != tuple(layer.in_shape):
        raise ValueError(f"activation shape {act.shape[1:]} != {layer.in_shape}")
    w = np.asarray(weight_matrix)
    if w.shape != (layer.fan_in, layer.out_channels):
        raise ValueError(f"weight matrix shape {w.shape} != "
                         f"({layer.fan_in}, {layer.out_channels})")
    patches = _im2col(act, layer)
    if single:
        patches = patches[0]
    return patches, w


def _pool_reduce(x: np.ndarray, window: int, stride: int, op: str) -> np.ndarray:
    """Reduce (N, H, W, C) over pooling windows with max or sum."""
    n, h, w, c = x.shape
    ph = (h - window) // stride + 1
    pw = (w - window) // stride + 1
    out = None
    for dh in range(window):
        for dw in range(window):
            sl = x[:, dh:dh + stride * (ph - 1) + 1:stride,
                   dw:dw + stride * (pw - 1) + 1:stride, :]
            if out is None:
                out = sl.copy()
            elif op == "max":
                np.maximum(out, sl, out=out)
            else:
                out += sl
    return out


# ---------------------------------------------------------------------------
# Execution plan
# ---------------------------------------------------------------------------

@dataclass
class _RowBand:
    row_lo: int
    row_hi: int
    weights: np.ndarray          # int64 (rows, out_channels)
    spec: AdcSpec | None = None  # None in exact mode


class ExecutionPlan:
    """Per-network pre-computation: unpacked weights, row-band tiling, and
    ADC specs.  Immutable once calibrated; safe for concurrent forward calls."""

    def __init__(self, net: NetworkDescriptor, cfg: ExecutionConfig):
        if net.shape_only:
            raise ValueError("cannot execute a shape-only descriptor")
        self.net = net
        self.cfg = cfg
        self.bands: list[list[_RowBand]] = []
        self.tile_counts: list[int] = []
        r, c = cfg.subarray_rows, cfg.subarray_cols
        for i, layer in enumerate(net.layers):
            w = net.weight_matrix(i).astype(np.int64)
            k, n = w.shape
            bands = []
            for r0 in range(0, k, r):
                band = _RowBand(row_lo=r0, row_hi=min(r0 + r, k),
                                weights=w[r0:min(r0 + r, k)])
                bands.append(band)
            self.bands.append(bands)
            self.tile_counts.append(len(bands) * -(-n // c))
        self._calibrated = cfg.exact_mode or cfg.calibration == "full_range"
        if cfg.calibration == "full_range" and not cfg.exact_mode:
            for bands in self.bands:
                for b in bands:
                    rows = b.row_hi - b.row_lo
                    b.spec = calibrate_adc(None, cfg.adc_resolution_bits,
                                           FullRange(rows_active=rows))

    # -- calibration --------------------------------------------------------

    def calibrate(self, x) -> None:
        """Collect pre-ADC column sums on a calibration batch and fit the
        percentile clip per row band.  No-op for full_range/exact."""
        if self._calibrated:
            return
        collector: dict[tuple[int, int], list] = {}
        self._run(np.asarray(x), collect=collector)
        for (i, bi), chunks in collector.items():
            samples = np.concatenate([ch.reshape(-1) for ch in chunks])
            self.bands[i][bi].spec = calibrate_adc(
                samples, self.cfg.adc_resolution_bits,
                Percentile(p=self.cfg.percentile_p))
        self._calibrated = True

    # -- forward ------------------------------------------------------------

    def forward(self, x):
        """Run the whole network; returns (logits, traces)."""
        x = np.asarray(x)
        if x.shape[1:] != tuple(self.net.input_shape):
            raise ValueError(
                f"batch shape {x.shape[1:]} != input shape {self.net.input_shape}")
        if not self._calibrated:
            self.calibrate(x)
        return self._run(x)

    def _run(self, x, collect=None):
        net = self.net
        outputs: list[np.ndarray] = []
        traces: list[LayerTrace] = []
        logits = None
        for i, layer in enumerate(net.layers):
            act = self._materialize_input(i, x, outputs)
            out, trace = self._layer(i, act, collect)
            outputs.append(out)
            traces.append(trace)
            if i == len(net.layers) - 1:
                logits = out
        return logits, traces

    def _materialize_input(self, i, x, outputs):
        """Combine source activations into the layer's input tensor."""
        layer = self.net.layers[i]
        srcs = []
        for s in layer.sources:
            srcs.append(x if s == -1 else outputs[s])
        if len(srcs) == 1:
            return srcs[0]
        if layer.combine == COMBINE_CONCAT:
            return np.concatenate(srcs, axis=-1)
        # add: re-binarize the elementwise sum, ties resolve to +1
        total = np.zeros(srcs[0].shape, dtype=np.int16)
        for s in srcs:
            total += s
        return np.where(total >= 0, 1, -1).astype(np.int8)

    def _layer(self, i, act, collect=None):
        layer = self.net.layers[i]
        cfg = self.cfg
        first = i == 0
        n = act.shape[0]
        scales = None

        if first:
            values, scales = quantize_dynamic_batch(
                act, cfg.input_precision_bits, scope=cfg.quantization_scope)
            planes = cfg.input_precision_bits
            feed = values
        else:
            planes = 1
            feed = act

        if layer.kind == KIND_CONV:
            patches = _im2col(feed, layer)
        else:
            patches = feed.reshape(n, 1, layer.in_shape[0])
        npos = patches.shape[1]
        fan = patches.shape[2]
        pat2 = patches.reshape(n * npos, fan).astype(np.int64)

        preact, conversions = self._matvec(i, pat2, planes, collect)
        out_ch = layer.out_channels
        trace = LayerTrace(
            layer=i,
            tiles=self.tile_counts[i],
            bitplanes=planes,
            adc_conversions=conversions,
            macs=n * npos * fan * out_ch,
            checksum=int(preact.sum()),
        )

        if layer.kind == KIND_CONV:
            oh, ow = layer.conv_out_hw()
            vals = preact.reshape(n, oh, ow, out_ch)
        else:
            vals = preact.reshape(n, out_ch)

        out = self._finish(i, vals, scales)
        return out, trace

    def _matvec(self, i, pat2, planes, collect=None):
        """Tile the drive matrix over row bands; ADC per (band, plane)."""
        cfg = self.cfg
        layer = self.net.layers[i]
        total = np.zeros((pat2.shape[0], layer.out_channels), dtype=np.int64)
        conversions = 0
        if planes > 1:
            u = pat2 & ((1 << planes) - 1)
            weights = [1 << b for b in range(planes)]
            weights[-1] = -(1 << (planes - 1))
        for band_idx, band in enumerate(self.bands[i]):
            cols = slice(band.row_lo, band.row_hi)
            if planes > 1:
                for b in range(planes):
                    drive = (u[:, cols] >> b) & 1
                    s = drive @ band.weights
                    if collect is not None:
                        collect.setdefault((i, band_idx), []).append(s)
                    elif not cfg.exact_mode:
                        s = adc_quantize(s, band.spec)
                        conversions += s.size
                    total += weights[b] * s
            else:
                s = pat2[:, cols] @ band.weights
                if collect is not None:
                    collect.setdefault((i, band_idx), []).append(s)
                elif not cfg.exact_mode:
                    s = adc_quantize(s, band.spec)
                    conversions += s.size
                total += s
        return total, conversions

    def _finish(self, i, vals, scales):
        """Pooling on integer pre-activations, then threshold or raw logits.

        Float operation order is canonical: value * scale first, then the
        pool-area division, then final_scale (docs/SCHEMA.md).
        """
        net = self.net
        layer = net.layers[i]
        last = i == len(net.layers) - 1
        area = 1
        if layer.pool is not None:
            op = "max" if layer.pool.mode == POOL_MAX else "sum"
            vals = _pool_reduce(vals, layer.pool.window, layer.pool.stride, op)
            if layer.pool.mode == POOL_AVG:
                area = layer.pool.window * layer.pool.window

        if scales is None:
            real = vals.astype(np.float64)
        else:
            sc = scales.reshape((-1,) + (1,) * (vals.ndim - 1))
            real = vals.astype(np.float64) * sc

        if layer.activation == ACT_SIGN:
            tau = net.thresholds[i]
            # avg pool compares the window sum against tau * area; exact in
            # integers up to the shared scale factor.
            rhs = tau * area if area != 1 else tau
            return np.where(real >= rhs, 1, -1).astype(np.int8)
        if area != 1:
            real = real / area
        return real * net.final_scale if last else real


def forward_network(net: NetworkDescriptor, batch, cfg: ExecutionConfig):
    """Deterministic forward pass; returns (logits, per-layer traces)."""
    return ExecutionPlan(net, cfg).forward(batch)


def forward_layer(net: NetworkDescriptor, index: int, act, cfg: ExecutionConfig):
    """Run a single layer on an explicit input activation."""
    plan = ExecutionPlan(net, cfg)
    if not plan._calibrated:
        raise ValueError("percentile calibration requires forward_network")
    return plan._layer(index, np.asarray(act))


def evaluate_accuracy(net: NetworkDescriptor, dataset: Dataset,
                      cfg: ExecutionConfig, batch_size: int = 512) -> float:
    """Top-1 accuracy; argmax ties break to the lowest class index."""
    n = len(dataset)
    if n == 0:
        raise ValueError("empty dataset")
    if dataset.labels.min() < 0 or dataset.labels.max() >= net.class_count:
        raise ValueError("labels outside [0, class_count)")
    plan = ExecutionPlan(net, cfg)
    if cfg.calibration == "percentile" and not cfg.exact_mode:
        plan.calibrate(dataset.data[:min(n, 256)])
    correct = 0
    for lo in range(0, n, batch_size):
        batch = dataset.data[lo:lo + batch_size]
        logits, _ = plan.forward(batch)
        pred = np.argmax(logits, axis=1)
        correct += int(np.sum(pred == dataset.labels[lo:lo + batch_size]))
    return correct / n
