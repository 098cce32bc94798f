"""Torch modules for straight-through-estimator training of binarized nets.

Layer order is conv/fc -> batch-norm -> pool -> sign, so the batch-norm
folds into a per-channel sign threshold that commutes with the pooling
stage (monotone for max, linear for avg) even when the scale is negative.
"""
from __future__ import annotations

import torch
import torch.nn as nn
import torch.nn.functional as F


class SignSTE(torch.autograd.Function):
    """sign with ties to +1; straight-through gradient clipped at |x| <= 1."""

    @staticmethod
    def forward(ctx, x):
        ctx.save_for_backward(x)
        return torch.where(x >= 0, torch.ones_like(x), -torch.ones_like(x))

    @staticmethod
    def backward(ctx, grad):
        (x,) = ctx.saved_tensors
        return grad * (x.abs() <= 1).to(grad.dtype)


def binact(x):
    return SignSTE.apply(x)


def _flatten_hwc(x):
    # torch tensors are NCHW; the wire format flattens row-major over (H,W,C)
    return x.permute(0, 2, 3, 1).reshape(x.shape[0], -1)


class _Layer(nn.Module):
    def __init__(self, entry, binary: bool):
        super().__init__()
        self.entry = entry
        self.binary = binary
        out_ch = entry["out_channels"]
        if entry["kind"] == "conv":
            cin = entry["in_shape"][2]
            kh, kw = entry["kernel"]
            self.weight = nn.Parameter(torch.empty(out_ch, cin, kh, kw))
            nn.init.kaiming_normal_(self.weight)
            self.bn = nn.BatchNorm2d(out_ch) if entry["activation"] == "sign" else None
        else:
            fin = entry["in_shape"][0]
            self.weight = nn.Parameter(torch.empty(out_ch, fin))
            nn.init.kaiming_normal_(self.weight)
            self.bn = nn.BatchNorm1d(out_ch) if entry["activation"] == "sign" else None

    def effective_weight(self):
        return binact(self.weight) if self.binary else self.weight

    def forward(self, x):
        entry = self.entry
        w = self.effective_weight()
        if entry["kind"] == "conv":
            z = F.conv2d(x, w, stride=entry["stride"], padding=entry["padding"])
        else:
            z = F.linear(_flatten_hwc(x) if x.dim() == 4 else x, w)
        if self.bn is not None:
            z = self.bn(z)
        pool = entry["pool"]
        if pool is not None:
            op = F.max_pool2d if pool["mode"] == "max" else F.avg_pool2d
            z = op(z, kernel_size=pool["window"], stride=pool["stride"])
        if entry["activation"] == "sign":
            z = binact(z) if self.binary else F.relu(z)
        return z


class PresetNet(nn.Module):
    """Network over a preset layer table; binary=False gives the float twin
    (real weights, relu) trained by the same loop as an accuracy baseline."""

    def __init__(self, layer_table, binary: bool = True, logit_scale: float | None = None):
        super().__init__()
        self.table = layer_table
        self.binary = binary
        self.layers = nn.ModuleList(_Layer(e, binary) for e in layer_table)
        if logit_scale is None:
            from .presets import fan_in
            logit_scale = 1.0 / fan_in(layer_table[-1]) ** 0.5
        self.logit_scale = logit_scale

    def forward(self, x, return_all: bool = False):
        outputs = []
        for i, (entry, layer) in enumerate(zip(self.table, self.layers)):
            srcs = [x if s == -1 else outputs[s] for s in entry["sources"]]
            if len(srcs) == 1:
                inp = srcs[0]
            elif entry["combine"] == "concat":
                inp = torch.cat(srcs, dim=1)
            else:  # add-combined binary sources re-binarize, ties to +1
                inp = torch.stack(srcs).sum(dim=0)
                if self.binary:
                    inp = binact(inp)
            out = layer(inp)
            if i == len(self.table) - 1:
                out = out * self.logit_scale
            outputs.append(out)
        return outputs if return_all else outputs[-1]
