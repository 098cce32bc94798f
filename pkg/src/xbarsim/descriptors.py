"""Shape-only ImageNet-scale descriptors for the three benchmark model
families.  Only layer geometry matters here (no weights): the cost model
consumes these to reproduce the published chip-level tables.

The AlexNet-like descriptor keeps the classic five conv layers plus the
three oversized dense heads (9216x4096, 4096x4096, 4096x1000); the
ResNet-18-like descriptor keeps eighteen 3x3 conv layers with add-combined
shortcuts and a single small 512x1000 head; the DenseNet-28-like descriptor
keeps concat-combined dense blocks with growth 64 and 1x1 transitions.
Downsampling uses pooling stages so every spatial reduction divides exactly.
"""
from __future__ import annotations

from .model_ir import (
    ACT_NONE,
    ACT_SIGN,
    COMBINE_ADD,
    COMBINE_CONCAT,
    KIND_CONV,
    KIND_FC,
    POOL_AVG,
    POOL_MAX,
    LayerDescriptor,
    NetworkDescriptor,
    PoolSpec,
)

FIRST_LAYER_PRECISION = 8


def _conv(in_shape, out_ch, kernel, stride=1, padding=0, pool=None,
          activation=ACT_SIGN, sources=None, combine=None, precision=1):
    return LayerDescriptor(
        kind=KIND_CONV,
        in_shape=tuple(in_shape),
        out_channels=out_ch,
        kernel=(kernel, kernel),
        stride=stride,
        padding=padding,
        pool=pool,
        activation=activation,
        input_precision_bits=precision,
        sources=tuple(sources) if sources is not None else (-1,),
        combine=combine,
    )


def _fc(in_features, out_ch, activation, sources):
    return LayerDescriptor(
        kind=KIND_FC,
        in_shape=(in_features,),
        out_channels=out_ch,
        activation=activation,
        sources=tuple(sources),
    )


def build_balexnet() -> NetworkDescriptor:
    pool32 = PoolSpec(POOL_MAX, 3, 2)
    layers = [
        _conv((227, 227, 3), 64, 11, stride=4, pool=pool32,
              precision=FIRST_LAYER_PRECISION),                       # -> 27x27x64
        _conv((27, 27, 64), 192, 5, padding=2, pool=pool32, sources=[0]),   # -> 13
        _conv((13, 13, 192), 384, 3, padding=1, sources=[1]),
        _conv((13, 13, 384), 384, 3, padding=1, sources=[2]),
        _conv((13, 13, 384), 256, 3, padding=1, pool=pool32, sources=[3]),  # -> 6
        _fc(9216, 4096, ACT_SIGN, sources=[4]),
        _fc(4096, 4096, ACT_SIGN, sources=[5]),
        _fc(4096, 1000, ACT_NONE, sources=[6]),
    ]
    return NetworkDescriptor(layers, name="balexnet", class_count=1000)


def build_bresnet18() -> NetworkDescriptor:
    pool22 = PoolSpec(POOL_MAX, 2, 2)
    layers = [
        _conv((224, 224, 3), 64, 8, stride=2, padding=3, pool=pool22,
              precision=FIRST_LAYER_PRECISION),                         # -> 56x56x64
        _conv((56, 56, 64), 64, 3, padding=1, sources=[0]),
        _conv((56, 56, 64), 64, 3, padding=1, sources=[1]),
        _conv((56, 56, 64), 64, 3, padding=1, sources=[2, 0], combine=COMBINE_ADD),
        _conv((56, 56, 64), 64, 3, padding=1, pool=pool22, sources=[3]),  # -> 28
        _conv((28, 28, 64), 128, 3, padding=1, sources=[4]),
        _conv((28, 28, 128), 128, 3, padding=1, sources=[5]),
        _conv((28, 28, 64), 128, 1, sources=[4]),                        # shortcut
        _conv((28, 28, 128), 128, 3, padding=1, sources=[6, 7], combine=COMBINE_ADD),
        _conv((28, 28, 128), 128, 3, padding=1, pool=pool22, sources=[8]),  # -> 14
        _conv((14, 14, 128), 256, 3, padding=1, sources=[9]),
        _conv((14, 14, 256), 256, 3, padding=1, sources=[10]),
        _conv((14, 14, 128), 256, 1, sources=[9]),                       # shortcut
        _conv((14, 14, 256), 256, 3, padding=1, sources=[11, 12], combine=COMBINE_ADD),
        _conv((14, 14, 256), 256, 3, padding=1, pool=pool22, sources=[13]),  # -> 7
        _conv((7, 7, 256), 512, 3, padding=1, sources=[14]),
        _conv((7, 7, 512), 512, 3, padding=1, sources=[15]),
        _conv((7, 7, 256), 512, 1, sources=[14]),                        # shortcut
        _conv((7, 7, 512), 512, 3, padding=1, sources=[16, 17], combine=COMBINE_ADD),
        _conv((7, 7, 512), 512, 3, padding=1,
              pool=PoolSpec(POOL_AVG, 7, 7), sources=[18]),              # -> 1x1x512
        _fc(512, 1000, ACT_NONE, sources=[19]),
    ]
    return NetworkDescriptor(layers, name="bresnet18", class_count=1000)


def build_bdensenet28() -> NetworkDescriptor:
    growth = 64
    pool22 = PoolSpec(POOL_MAX, 2, 2)
    layers = [
        _conv((224, 224, 3), growth, 8, stride=2, padding=3, pool=pool22,
              precision=FIRST_LAYER_PRECISION),                          # -> 56x56x64
    ]

    def dense_block(start_idx, n_layers, hw, base_ch):
        out = []
        for i in range(n_layers):
            srcs = list(range(start_idx - 1, start_idx + i))
            ch = base_ch + growth * i
            out.append(_conv((hw, hw, ch), growth, 3, padding=1, sources=srcs,
                             combine=COMBINE_CONCAT if len(srcs) > 1 else None))
        return out

    # block 1 at 56x56, input 64 channels
    layers += dense_block(1, 6, 56, growth)
    layers.append(_conv((56, 56, 448), 160, 1, pool=pool22,
                        sources=list(range(0, 7)), combine=COMBINE_CONCAT))  # trans1
    # block 2 at 28x28, input 160 channels
    layers += dense_block(8, 6, 28, 160)
    layers.append(_conv((28, 28, 544), 192, 1, pool=pool22,
                        sources=list(range(7, 14)), combine=COMBINE_CONCAT))  # trans2
    # block 3 at 14x14, input 192 channels
    layers += dense_block(15, 6, 14, 192)
    layers.append(_conv((14, 14, 576), 256, 1, pool=pool22,
                        sources=list(range(14, 21)), combine=COMBINE_CONCAT))  # trans3
    # block 4 at 7x7, input 256 channels
    layers += dense_block(22, 5, 7, 256)
    layers.append(_conv((7, 7, 576), 128, 1, pool=PoolSpec(POOL_AVG, 7, 7),
                        sources=list(range(21, 27)), combine=COMBINE_CONCAT))  # trans4
    layers.append(_fc(128, 1000, ACT_NONE, sources=[27]))
    return NetworkDescriptor(layers, name="bdensenet28", class_count=1000)


BUILDERS = {
    "balexnet": build_balexnet,
    "bresnet18": build_bresnet18,
    "bdensenet28": build_bdensenet28,
}


def build(name: str) -> NetworkDescriptor:
    try:
        return BUILDERS[name]()
    except KeyError:
        raise ValueError(f"unknown descriptor {name!r}; choose from {sorted(BUILDERS)}")
