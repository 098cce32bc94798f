"""Deterministic training of the binarized presets (and their float twins)."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import torch
import torch.nn.functional as F

from .data import desk_dataset
from .modules import PresetNet
from .presets import preset_layers


@dataclass
class TrainSpec:
    arch: str
    epochs: int = 40
    seed: int = 0
    batch_size: int = 64
    lr: float = 0.01
    binary: bool = True


@dataclass
class Checkpoint:
    spec: TrainSpec
    layer_table: list
    state: dict
    logit_scale: float
    train_accuracy: float
    test_accuracy: float


def _to_nchw(x: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(x).permute(0, 3, 1, 2).contiguous()


def _accuracy(model, x, y, batch=512) -> float:
    model.eval()
    correct = 0
    with torch.no_grad():
        for lo in range(0, len(x), batch):
            logits = model(x[lo:lo + batch])
            correct += int((logits.argmax(dim=1) == y[lo:lo + batch]).sum())
    return correct / len(x)


def train(spec: TrainSpec) -> Checkpoint:
    """Train one preset; divergence (non-finite loss) raises RuntimeError."""
    torch.manual_seed(spec.seed)
    torch.use_deterministic_algorithms(True)
    (xtr, ytr), (xte, yte) = desk_dataset()
    xtr_t, ytr_t = _to_nchw(xtr), torch.from_numpy(ytr.astype(np.int64))
    xte_t, yte_t = _to_nchw(xte), torch.from_numpy(yte.astype(np.int64))

    table = preset_layers(spec.arch)
    model = PresetNet(table, binary=spec.binary)
    opt = torch.optim.Adam(model.parameters(), lr=spec.lr)
    sched = torch.optim.lr_scheduler.CosineAnnealingLR(opt, T_max=spec.epochs)
    order_rng = np.random.default_rng(spec.seed)

    n = len(xtr_t)
    for _ in range(spec.epochs):
        model.train()
        perm = torch.from_numpy(order_rng.permutation(n))
        for lo in range(0, n, spec.batch_size):
            idx = perm[lo:lo + spec.batch_size]
            opt.zero_grad()
            loss = F.cross_entropy(model(xtr_t[idx]), ytr_t[idx])
            if not torch.isfinite(loss):
                raise RuntimeError(f"training diverged on {spec.arch}")
            loss.backward()
            opt.step()
        sched.step()

    return Checkpoint(
        spec=spec,
        layer_table=table,
        state={k: v.detach().clone() for k, v in model.state_dict().items()},
        logit_scale=model.logit_scale,
        train_accuracy=_accuracy(model, xtr_t, ytr_t),
        test_accuracy=_accuracy(model, xte_t, yte_t),
    )


def rebuild(ckpt: Checkpoint) -> PresetNet:
    model = PresetNet(ckpt.layer_table, binary=ckpt.spec.binary,
                      logit_scale=ckpt.logit_scale)
    model.load_state_dict(ckpt.state)
    model.eval()
    return model
