"""Architecture presets for the desk dataset (8x8 grayscale, 10 classes).

Each preset is a layer table in the bundle-manifest vocabulary; the torch
model, the folding pass, and the manifest writer all walk the same table.
Shapes are (H, W, C); fc inputs flatten row-major over (H, W, C).
"""
from __future__ import annotations

import math

INPUT_SHAPE = (8, 8, 1)
CLASS_COUNT = 10
FIRST_LAYER_BITS = 8


def _conv(out_ch, sources, pool=None, combine=None, activation="sign"):
    return {
        "kind": "conv", "out_channels": out_ch, "kernel": [3, 3],
        "stride": 1, "padding": 1, "pool": pool, "activation": activation,
        "sources": sources, "combine": combine,
    }


def _fc(out_ch, sources, activation):
    return {
        "kind": "fc", "out_channels": out_ch, "kernel": None, "stride": 1,
        "padding": 0, "pool": None, "activation": activation,
        "sources": sources, "combine": None,
    }


_MAX2 = {"mode": "max", "window": 2, "stride": 2}
_AVG2 = {"mode": "avg", "window": 2, "stride": 2}

PRESETS = {
    # shallow, with a deliberately oversized dense head
    "tiny-alexnet": [
        _conv(16, [-1], pool=_MAX2),
        _conv(32, [0], pool=_MAX2),
        _fc(256, [1], "sign"),
        _fc(10, [2], "none"),
    ],
    # two stages of add-combined residual blocks, small head
    "tiny-resnet": [
        _conv(16, [-1]),
        _conv(16, [0]),
        _conv(16, [1, 0], combine="add", pool=_MAX2),
        _conv(32, [2]),
        _conv(32, [3]),
        _conv(32, [4, 3], combine="add", pool=_MAX2),
        _fc(10, [5], "none"),
    ],
    # concat-combined dense blocks, one average-pooled transition
    "tiny-densenet": [
        _conv(16, [-1]),
        _conv(16, [0]),
        _conv(16, [0, 1], combine="concat"),
        _conv(16, [0, 1, 2], combine="concat", pool=_MAX2),
        _conv(16, [3]),
        _conv(16, [3, 4], combine="concat"),
        _conv(16, [3, 4, 5], combine="concat", pool=_AVG2),
        _fc(10, [6], "none"),
    ],
}


def _combined_shape(shapes, combine):
    if len(shapes) == 1:
        return shapes[0]
    if combine == "add":
        assert all(s == shapes[0] for s in shapes)
        return shapes[0]
    assert combine == "concat"
    h, w = shapes[0][:2]
    return (h, w, sum(s[2] for s in shapes))


def preset_layers(name: str):
    """Layer table with in_shape fields filled by shape propagation."""
    try:
        table = [dict(entry) for entry in PRESETS[name]]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}")
    out_shapes = []
    for i, entry in enumerate(table):
        srcs = [INPUT_SHAPE if s == -1 else out_shapes[s] for s in entry["sources"]]
        in_shape = _combined_shape(srcs, entry["combine"])
        if entry["kind"] == "conv":
            entry["in_shape"] = list(in_shape)
            h, w, _ = in_shape
            kh, kw = entry["kernel"]
            oh = (h + 2 * entry["padding"] - kh) // entry["stride"] + 1
            ow = (w + 2 * entry["padding"] - kw) // entry["stride"] + 1
            if entry["pool"]:
                p = entry["pool"]
                oh = (oh - p["window"]) // p["stride"] + 1
                ow = (ow - p["window"]) // p["stride"] + 1
            out_shapes.append((oh, ow, entry["out_channels"]))
        else:
            entry["in_shape"] = [int(math.prod(in_shape))]
            out_shapes.append((entry["out_channels"],))
        entry["input_precision_bits"] = FIRST_LAYER_BITS if i == 0 else 1
    return table


def fan_in(entry) -> int:
    if entry["kind"] == "conv":
        kh, kw = entry["kernel"]
        return kh * kw * entry["in_shape"][2]
    return entry["in_shape"][0]
