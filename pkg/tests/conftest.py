import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from xbarsim.model_ir import (
    ACT_NONE,
    ACT_SIGN,
    LayerDescriptor,
    NetworkDescriptor,
    PackedBinaryTensor,
)

REPO_ROOT = Path(__file__).resolve().parents[1]
FIXTURES = REPO_ROOT / "fixtures"


def make_fc_net(dims, seed=0, thresholds_scale=0.0, final_scale=1.0,
                first_bits=8, name="fcnet"):
    """Random fully-connected chain; the last layer emits raw logits."""
    rng = np.random.default_rng(seed)
    layers, weights, thresholds = [], [], []
    for i, (fin, fout) in enumerate(zip(dims[:-1], dims[1:])):
        last = i == len(dims) - 2
        layers.append(LayerDescriptor(
            kind="fc", in_shape=(fin,), out_channels=fout,
            activation=ACT_NONE if last else ACT_SIGN,
            input_precision_bits=first_bits if i == 0 else 1,
            sources=(-1,) if i == 0 else (i - 1,),
        ))
        w = rng.choice((-1, 1), size=(fin, fout)).astype(np.int8)
        weights.append(PackedBinaryTensor.from_values(w))
        if last:
            thresholds.append(None)
        else:
            thresholds.append(rng.normal(0.0, thresholds_scale, size=fout))
    return NetworkDescriptor(layers, weights, thresholds,
                             final_scale=final_scale, name=name,
                             class_count=dims[-1])


def make_conv_net(seed=0, in_hw=6, in_ch=1, mid_ch=4, classes=3,
                  pool=None, first_bits=8):
    """Small conv + fc network with random binary weights and thresholds."""
    rng = np.random.default_rng(seed)
    conv = LayerDescriptor(
        kind="conv", in_shape=(in_hw, in_hw, in_ch), out_channels=mid_ch,
        kernel=(3, 3), stride=1, padding=1, pool=pool,
        activation=ACT_SIGN, input_precision_bits=first_bits, sources=(-1,))
    out_shape = conv.out_shape()
    flat = int(np.prod(out_shape))
    fc = LayerDescriptor(
        kind="fc", in_shape=(flat,), out_channels=classes,
        activation=ACT_NONE, sources=(0,))
    weights = [
        PackedBinaryTensor.from_values(
            rng.choice((-1, 1), size=(conv.fan_in, mid_ch)).astype(np.int8)),
        PackedBinaryTensor.from_values(
            rng.choice((-1, 1), size=(flat, classes)).astype(np.int8)),
    ]
    thresholds = [rng.normal(0.0, 1.0, size=mid_ch), None]
    return NetworkDescriptor([conv, fc], weights, thresholds,
                             final_scale=0.5, name="convnet", class_count=classes)


@pytest.fixture
def fc_net():
    return make_fc_net((6, 5, 3), seed=1, thresholds_scale=1.0)


@pytest.fixture
def conv_net():
    return make_conv_net(seed=2)
