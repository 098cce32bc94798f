"""In-memory representation of a binarized network and its on-disk bundle format.

A model bundle is a directory with a ``manifest.json`` plus one raw blob per
weight tensor (bit-packed, row-major, LSB-first within each little-endian
byte) and one per threshold vector (little-endian float64).  The exact field
names are documented in ``docs/SCHEMA.md``.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

KIND_CONV = "conv"
KIND_FC = "fc"
ACT_SIGN = "sign"
ACT_NONE = "none"
POOL_MAX = "max"
POOL_AVG = "avg"
COMBINE_ADD = "add"
COMBINE_CONCAT = "concat"

MANIFEST_NAME = "manifest.json"
FORMAT_VERSION = 1


class ModelFormatError(Exception):
    """Raised when a bundle on disk is malformed or violates an invariant."""


@dataclass(frozen=True)
class PackedBinaryTensor:
    """Bit-packed {-1,+1} tensor; bit 1 encodes +1, bit 0 encodes -1.

    Packing is row-major over ``dims`` (element (i, j) of a matrix maps to
    bit index ``i * cols + j``), LSB-first within each byte.  Padding bits in
    the final byte are zero.
    """

    dims: tuple[int, ...]
    bits: bytes

    def __post_init__(self):
        n = self.size
        expected = (n + 7) // 8
        if len(self.bits) != expected:
            raise ModelFormatError(
                f"blob length mismatch: {len(self.bits)} bytes for {n} elements "
                f"(expected {expected})"
            )
        # Padding bits must be zero so byte equality is well defined.
        if n % 8 and self.bits:
            tail = self.bits[-1]
            if tail >> (n % 8):
                raise ModelFormatError("nonzero padding bits in packed tensor")

    @property
    def size(self) -> int:
        return int(np.prod(self.dims)) if self.dims else 0

    @classmethod
    def from_values(cls, values, dims=None) -> "PackedBinaryTensor":
        arr = np.asarray(values)
        if dims is None:
            dims = tuple(int(d) for d in arr.shape)
        flat = arr.reshape(-1)
        if not np.all(np.isin(flat, (-1, 1))):
            raise ValueError("binary tensor values must be exactly -1 or +1")
        packed = np.packbits((flat > 0).astype(np.uint8), bitorder="little")
        return cls(dims=tuple(dims), bits=packed.tobytes())

    def to_values(self) -> np.ndarray:
        """Decode to an int8 array of {-1,+1} shaped ``dims``."""
        raw = np.frombuffer(self.bits, dtype=np.uint8)
        bits = np.unpackbits(raw, count=self.size, bitorder="little")
        return (bits.astype(np.int8) * 2 - 1).reshape(self.dims)


@dataclass(frozen=True)
class PoolSpec:
    mode: str  # "max" or "avg"
    window: int
    stride: int


@dataclass(frozen=True)
class LayerDescriptor:
    kind: str                      # "conv" or "fc"
    in_shape: tuple[int, ...]      # (H, W, C) for conv, (F,) for fc
    out_channels: int
    kernel: tuple[int, int] | None = None
    stride: int = 1
    padding: int = 0
    pool: PoolSpec | None = None
    activation: str = ACT_SIGN
    input_precision_bits: int = 1
    sources: tuple[int, ...] = (-1,)   # indices of earlier layers, -1 = network input
    combine: str | None = None         # "add" / "concat" when len(sources) > 1

    @property
    def fan_in(self) -> int:
        if self.kind == KIND_CONV:
            kh, kw = self.kernel
            return kh * kw * self.in_shape[2]
        return self.in_shape[0]

    def conv_out_hw(self) -> tuple[int, int]:
        """Spatial output dims before pooling.  Raises on non-integral sizes."""
        h, w, _ = self.in_shape
        kh, kw = self.kernel
        num_h = h + 2 * self.padding - kh
        num_w = w + 2 * self.padding - kw
        if num_h < 0 or num_w < 0 or num_h % self.stride or num_w % self.stride:
            raise ValueError("non-integral output shape")
        return num_h // self.stride + 1, num_w // self.stride + 1

    def out_shape(self) -> tuple[int, ...]:
        """Output shape after the optional pooling stage."""
        if self.kind == KIND_FC:
            return (self.out_channels,)
        oh, ow = self.conv_out_hw()
        if self.pool is not None:
            p = self.pool
            if (oh - p.window) < 0 or (oh - p.window) % p.stride or \
               (ow - p.window) < 0 or (ow - p.window) % p.stride:
                raise ValueError("non-integral output shape")
            oh = (oh - p.window) // p.stride + 1
            ow = (ow - p.window) // p.stride + 1
        return (oh, ow, self.out_channels)

    @property
    def out_positions(self) -> int:
        """Number of matrix-vector positions evaluated (pre-pool)."""
        if self.kind == KIND_FC:
            return 1
        oh, ow = self.conv_out_hw()
        return oh * ow


@dataclass(frozen=True)
class Diagnostic:
    layer: int
    rule: str
    message: str

    def __str__(self):
        return f"layer {self.layer}: [{self.rule}] {self.message}"


class NetworkDescriptor:
    """Immutable, validated network: layers plus optional weights/thresholds.

    Weights may be omitted ("shape-only" descriptors) for hardware cost
    estimation, where only the layer geometry matters.
    """

    def __init__(self, layers, weights=None, thresholds=None,
                 final_scale=1.0, name="net", class_count=0):
        self.layers = tuple(layers)
        n = len(self.layers)
        self.weights = tuple(weights) if weights is not None else (None,) * n
        self.thresholds = tuple(
            None if t is None else np.asarray(t, dtype=np.float64)
            for t in (thresholds if thresholds is not None else (None,) * n)
        )
        self.final_scale = float(final_scale)
        self.name = str(name)
        self.class_count = int(class_count)
        if len(self.weights) != n or len(self.thresholds) != n:
            raise ValueError("weights/thresholds must have one entry per layer")

    @property
    def shape_only(self) -> bool:
        return all(w is None for w in self.weights)

    @property
    def input_shape(self) -> tuple[int, ...]:
        return self.layers[0].in_shape

    def weight_matrix(self, i: int) -> np.ndarray:
        """Layer weights as an int8 (fan_in, out_channels) matrix of {-1,+1}."""
        w = self.weights[i]
        if w is None:
            raise ValueError(f"layer {i} has no weights (shape-only descriptor)")
        return w.to_values()

    def __eq__(self, other):
        if not isinstance(other, NetworkDescriptor):
            return NotImplemented
        if (self.layers != other.layers or self.final_scale != other.final_scale
                or self.name != other.name or self.class_count != other.class_count):
            return False
        if len(self.weights) != len(other.weights):
            return False
        for a, b in zip(self.weights, other.weights):
            if (a is None) != (b is None) or (a is not None and a != b):
                return False
        for a, b in zip(self.thresholds, other.thresholds):
            if (a is None) != (b is None):
                return False
            if a is not None and not np.array_equal(a, b):
                return False
        return True


def _combined_input_shape(net: NetworkDescriptor, i: int):
    """Shape of layer i's input after materializing its source combination."""
    layer = net.layers[i]
    shapes = []
    for s in layer.sources:
        if s == -1:
            shapes.append(net.input_shape)
        else:
            shapes.append(net.layers[s].out_shape())
    if len(shapes) == 1:
        return shapes[0]
    if layer.combine == COMBINE_ADD:
        if any(sh != shapes[0] for sh in shapes):
            raise ValueError("add-combined sources must share one shape")
        return shapes[0]
    if layer.combine == COMBINE_CONCAT:
        hw = shapes[0][:2]
        if any(len(sh) != 3 or sh[:2] != hw for sh in shapes):
            raise ValueError("concat-combined sources must share spatial dims")
        return (hw[0], hw[1], sum(sh[2] for sh in shapes))
    raise ValueError("multiple sources require combine mode 'add' or 'concat'")


def _flat_size(shape) -> int:
    return int(np.prod(shape))


def validate_chain(net: NetworkDescriptor) -> list[Diagnostic]:
    """Check every structural invariant; returns diagnostics, never raises."""
    diags: list[Diagnostic] = []
    for i, layer in enumerate(net.layers):
        if layer.kind not in (KIND_CONV, KIND_FC):
            diags.append(Diagnostic(i, "layer-kind", f"unsupported layer kind {layer.kind!r}"))
            continue
        if layer.activation not in (ACT_SIGN, ACT_NONE):
            diags.append(Diagnostic(i, "activation", f"unknown activation {layer.activation!r}"))
        if not (1 <= layer.input_precision_bits <= 32):
            diags.append(Diagnostic(i, "input-precision", "input_precision_bits outside 1..32"))
        if i > 0 and layer.input_precision_bits != 1:
            diags.append(Diagnostic(i, "input-precision",
                                    "only the first layer may take multi-bit input"))
        if layer.kind == KIND_FC and layer.pool is not None:
            diags.append(Diagnostic(i, "pool", "fc layers cannot pool"))
        if layer.kind == KIND_CONV and (layer.kernel is None or len(layer.in_shape) != 3):
            diags.append(Diagnostic(i, "shape", "conv layer needs kernel and (H, W, C) input"))
            continue
        if layer.kind == KIND_FC and len(layer.in_shape) != 1:
            diags.append(Diagnostic(i, "shape", "fc layer needs a flat (F,) input shape"))
            continue

        # Source references and combine rules.
        if not layer.sources:
            diags.append(Diagnostic(i, "sources", "layer has no input source"))
            continue
        bad_src = False
        for s in layer.sources:
            if s >= i or s < -1 or (s == -1 and i > 0):
                diags.append(Diagnostic(i, "sources", f"invalid source reference {s}"))
                bad_src = True
        if len(layer.sources) > 1 and layer.combine not in (COMBINE_ADD, COMBINE_CONCAT):
            diags.append(Diagnostic(i, "combine", "multi-source layer needs combine mode"))
            bad_src = True
        if bad_src:
            continue

        # Shape chain compatibility.
        try:
            in_shape = _combined_input_shape(net, i)
        except ValueError as e:
            diags.append(Diagnostic(i, "chain", str(e)))
            continue
        if layer.kind == KIND_CONV:
            if in_shape != layer.in_shape:
                diags.append(Diagnostic(
                    i, "chain",
                    f"declared input {layer.in_shape} != chained input {in_shape}"))
        else:
            if _flat_size(in_shape) != layer.in_shape[0]:
                diags.append(Diagnostic(
                    i, "chain",
                    f"fc input {layer.in_shape[0]} != flattened source size {_flat_size(in_shape)}"))
        try:
            layer.out_shape()
        except ValueError as e:
            diags.append(Diagnostic(i, "shape", str(e)))
            continue

        # Weight and threshold payloads.
        w = net.weights[i]
        if w is not None:
            if w.dims != (layer.fan_in, layer.out_channels):
                diags.append(Diagnostic(
                    i, "weights",
                    f"weight dims {w.dims} != (fan_in, out_channels) "
                    f"({layer.fan_in}, {layer.out_channels})"))
        elif not net.shape_only:
            diags.append(Diagnostic(i, "weights", "missing weight tensor"))
        t = net.thresholds[i]
        if layer.activation == ACT_SIGN:
            if t is None:
                if not net.shape_only:
                    diags.append(Diagnostic(i, "thresholds",
                                            "sign layer is missing its threshold vector"))
            elif t.shape != (layer.out_channels,):
                diags.append(Diagnostic(i, "thresholds",
                                        f"threshold length {t.shape} != out_channels"))
        elif t is not None:
            diags.append(Diagnostic(i, "thresholds", "threshold vector on a non-sign layer"))
    return diags


# ---------------------------------------------------------------------------
# Bundle serialization
# ---------------------------------------------------------------------------

def _layer_to_json(layer: LayerDescriptor, wfile, tfile):
    d = {
        "kind": layer.kind,
        "in_shape": list(layer.in_shape),
        "out_channels": layer.out_channels,
        "stride": layer.stride,
        "padding": layer.padding,
        "activation": layer.activation,
        "input_precision_bits": layer.input_precision_bits,
        "sources": list(layer.sources),
        "combine": layer.combine,
        "kernel": list(layer.kernel) if layer.kernel else None,
        "pool": None if layer.pool is None else {
            "mode": layer.pool.mode,
            "window": layer.pool.window,
            "stride": layer.pool.stride,
        },
        "weights_file": wfile,
        "thresholds_file": tfile,
    }
    return d


def _layer_from_json(i: int, d: dict) -> LayerDescriptor:
    try:
        pool = d.get("pool")
        return LayerDescriptor(
            kind=d["kind"],
            in_shape=tuple(int(x) for x in d["in_shape"]),
            out_channels=int(d["out_channels"]),
            kernel=tuple(int(x) for x in d["kernel"]) if d.get("kernel") else None,
            stride=int(d.get("stride", 1)),
            padding=int(d.get("padding", 0)),
            pool=None if pool is None else PoolSpec(
                mode=pool["mode"], window=int(pool["window"]), stride=int(pool["stride"])),
            activation=d.get("activation", ACT_SIGN),
            input_precision_bits=int(d.get("input_precision_bits", 1)),
            sources=tuple(int(s) for s in d.get("sources", [i - 1 if i else -1])),
            combine=d.get("combine"),
        )
    except (KeyError, TypeError, ValueError) as e:
        raise ModelFormatError(f"layer {i}: malformed manifest entry ({e})") from e


def save_model(net: NetworkDescriptor, path) -> None:
    """Write a model bundle directory; weights/thresholds become raw blobs."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    layers_json = []
    for i, layer in enumerate(net.layers):
        wfile = tfile = None
        if net.weights[i] is not None:
            wfile = f"w{i}.bin"
            (path / wfile).write_bytes(net.weights[i].bits)
        if net.thresholds[i] is not None:
            tfile = f"t{i}.bin"
            (path / tfile).write_bytes(
                net.thresholds[i].astype("<f8").tobytes())
        layers_json.append(_layer_to_json(layer, wfile, tfile))
    manifest = {
        "format_version": FORMAT_VERSION,
        "name": net.name,
        "class_count": net.class_count,
        "final_scale": net.final_scale,
        "layers": layers_json,
    }
    (path / MANIFEST_NAME).write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _load_manifest(path: Path) -> dict:
    mf = path / MANIFEST_NAME
    if not mf.is_file():
        raise ModelFormatError(f"missing {MANIFEST_NAME} in {path}")
    try:
        manifest = json.loads(mf.read_text())
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"malformed manifest: {e}") from e
    if not isinstance(manifest.get("layers"), list) or not manifest["layers"]:
        raise ModelFormatError("malformed manifest: missing non-empty 'layers' list")
    return manifest


def load_model(path) -> NetworkDescriptor:
    """Load and validate a bundle; raises ModelFormatError with layer indices."""
    path = Path(path)
    manifest = _load_manifest(path)
    layers, weights, thresholds = [], [], []
    for i, entry in enumerate(manifest["layers"]):
        layer = _layer_from_json(i, entry)
        layers.append(layer)
        wfile = entry.get("weights_file")
        if wfile is None:
            weights.append(None)
        else:
            blob = (path / wfile).read_bytes()
            try:
                weights.append(PackedBinaryTensor(
                    dims=(layer.fan_in, layer.out_channels), bits=blob))
            except ModelFormatError as e:
                raise ModelFormatError(f"layer {i}: {e}") from e
        tfile = entry.get("thresholds_file")
        if tfile is None:
            thresholds.append(None)
        else:
            raw = np.frombuffer((path / tfile).read_bytes(), dtype="<f8")
            thresholds.append(raw.astype(np.float64))
    net = NetworkDescriptor(
        layers, weights, thresholds,
        final_scale=manifest.get("final_scale", 1.0),
        name=manifest.get("name", path.name),
        class_count=manifest.get("class_count", 0),
    )
    diags = validate_chain(net)
    if diags:
        raise ModelFormatError(
            "invalid model bundle:\n" + "\n".join(str(d) for d in diags))
    return net


def load_descriptor(path) -> NetworkDescriptor:
    """Load a shape-only architecture descriptor (manifest JSON, no blobs)."""
    path = Path(path)
    if path.is_dir():
        return load_model(path)
    try:
        manifest = json.loads(path.read_text())
    except json.JSONDecodeError as e:
        raise ModelFormatError(f"malformed descriptor: {e}") from e
    layers = [_layer_from_json(i, d) for i, d in enumerate(manifest["layers"])]
    net = NetworkDescriptor(
        layers,
        final_scale=manifest.get("final_scale", 1.0),
        name=manifest.get("name", path.stem),
        class_count=manifest.get("class_count", 0),
    )
    diags = validate_chain(net)
    if diags:
        raise ModelFormatError(
            "invalid descriptor:\n" + "\n".join(str(d) for d in diags))
    return net


def save_descriptor(net: NetworkDescriptor, path) -> None:
    """Write a shape-only descriptor as a single JSON file."""
    manifest = {
        "format_version": FORMAT_VERSION,
        "name": net.name,
        "class_count": net.class_count,
        "final_scale": net.final_scale,
        "layers": [_layer_to_json(l, None, None) for l in net.layers],
    }
    Path(path).write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
