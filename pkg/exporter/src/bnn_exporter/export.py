"""Bundle writer: folded model, dataset files, calibration batch, and the
reference outputs the simulator's acceptance checks consume.

The on-disk layout follows the simulator's documented schema (manifest.json
plus bit-packed weight blobs and float64 threshold blobs); this module
implements the format independently rather than importing the simulator.
"""
from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import torch

from .data import CLASS_COUNT, desk_dataset
from .fold import ExportError, fold_checkpoint
from .reference import accuracy, forward_batch
from .train import Checkpoint, rebuild

CALIB_SAMPLES = 256
REFERENCE_SAMPLES = 32
REFERENCE_BITS = 8


def _pack_bits(wmat: np.ndarray) -> bytes:
    # row-major over (fan_in, out_channels), LSB-first within each byte
    flat = (wmat.reshape(-1) > 0).astype(np.uint8)
    return np.packbits(flat, bitorder="little").tobytes()


def _write_manifest(path: Path, name, layers, weights, thresholds, final_scale):
    entries = []
    for i, entry in enumerate(layers):
        wfile = f"w{i}.bin"
        (path / wfile).write_bytes(_pack_bits(weights[i]))
        tfile = None
        if thresholds[i] is not None:
            tfile = f"t{i}.bin"
            (path / tfile).write_bytes(thresholds[i].astype("<f8").tobytes())
        entries.append({
            "kind": entry["kind"],
            "in_shape": list(entry["in_shape"]),
            "out_channels": entry["out_channels"],
            "kernel": entry["kernel"],
            "stride": entry["stride"],
            "padding": entry["padding"],
            "pool": entry["pool"],
            "activation": entry["activation"],
            "input_precision_bits": entry["input_precision_bits"],
            "sources": list(entry["sources"]),
            "combine": entry["combine"],
            "weights_file": wfile,
            "thresholds_file": tfile,
        })
    manifest = {
        "format_version": 1,
        "name": name,
        "class_count": CLASS_COUNT,
        "final_scale": final_scale,
        "layers": entries,
    }
    (path / "manifest.json").write_text(
        json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _write_dataset(path: Path, data: np.ndarray, labels: np.ndarray):
    path.mkdir(parents=True, exist_ok=True)
    (path / "data.bin").write_bytes(data.astype("<f4").tobytes())
    (path / "labels.bin").write_bytes(labels.astype("<i4").tobytes())
    (path / "shape.json").write_text(json.dumps({
        "num_samples": int(data.shape[0]),
        "sample_shape": [int(d) for d in data.shape[1:]],
        "class_count": CLASS_COUNT,
    }, indent=2, sort_keys=True) + "\n")


def _folded_outputs(layers, weights, thresholds, x):
    """Per-layer folded outputs for one raw (unquantized) sample."""
    from .reference import _conv, _conv_float, _pool

    outs = []
    for i, entry in enumerate(layers):
        srcs = [x if s == -1 else outs[s] for s in entry["sources"]]
        if len(srcs) == 1:
            act = srcs[0]
        elif entry["combine"] == "concat":
            act = np.concatenate(srcs, axis=-1)
        else:
            total = sum(s.astype(np.int64) for s in srcs)
            act = np.where(total >= 0, 1, -1).astype(np.int8)
        if i == 0:
            act = np.asarray(act, dtype=np.float64)
        if entry["kind"] == "conv":
            vals = (_conv_float(act, weights[i], entry) if act.dtype == np.float64
                    else _conv(act, weights[i].astype(np.int64), entry))
        else:
            flat = act.reshape(-1)
            w = weights[i].astype(flat.dtype if flat.dtype == np.float64 else np.int64)
            vals = flat @ w
        area = 1
        if entry["pool"] is not None:
            vals = _pool(vals, entry["pool"])
            if entry["pool"]["mode"] == "avg":
                area = entry["pool"]["window"] ** 2
        real = vals.astype(np.float64)
        if entry["activation"] == "sign":
            tau = thresholds[i]
            rhs = tau * area if area != 1 else tau
            outs.append(np.where(real >= rhs, 1, -1).astype(np.int8))
        else:
            if area != 1:
                real = real / area
            outs.append(real)
    return outs


def check_folding(ckpt: Checkpoint, weights, thresholds,
                  calib: np.ndarray) -> None:
    """The folded network must reproduce the batch-norm network's binary
    activations on the whole calibration batch, bit for bit (float64 on
    both sides; the desk data is dyadic so the conv sums are exact)."""
    model = rebuild(ckpt).double()
    with torch.no_grad():
        torch_outs = model(torch.from_numpy(calib).double().permute(0, 3, 1, 2),
                           return_all=True)
    folded_by_layer = [[] for _ in ckpt.layer_table]
    for x in calib:
        for i, out in enumerate(_folded_outputs(ckpt.layer_table, weights,
                                                thresholds, x)):
            folded_by_layer[i].append(out)
    for i, entry in enumerate(ckpt.layer_table):
        if entry["activation"] != "sign":
            continue
        folded = np.stack(folded_by_layer[i])
        torch_side = torch_outs[i].numpy()
        if entry["kind"] == "conv":
            torch_side = np.transpose(torch_side, (0, 2, 3, 1))
        if not np.array_equal(folded, torch_side.astype(np.int8)):
            raise ExportError(f"layer {i}: folded activations diverge from "
                              f"the batch-norm network")


def export(ckpt: Checkpoint, out_dir) -> dict:
    """Write model bundle, dataset, calibration data, and reference outputs.

    Returns a summary dict (also written as train_log.json).
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    weights, thresholds = fold_checkpoint(ckpt)
    (xtr, ytr), (xte, yte) = desk_dataset()
    calib = xtr[:CALIB_SAMPLES]

    check_folding(ckpt, weights, thresholds, calib)

    model_dir = out / "model"
    model_dir.mkdir(exist_ok=True)
    _write_manifest(model_dir, ckpt.spec.arch, ckpt.layer_table, weights,
                    thresholds, ckpt.logit_scale)
    _write_dataset(out / "dataset", xte, yte)
    _write_dataset(out / "calibration", calib, ytr[:CALIB_SAMPLES])

    # Per-layer pre-activation statistics on the calibration batch at the
    # reference precision (consumers may derive clip ranges from these).
    collect: dict = {}
    forward_batch(ckpt.layer_table, weights, thresholds, ckpt.logit_scale,
                  calib[:64], input_bits=REFERENCE_BITS, collect=collect)
    stats = {}
    for i, chunks in sorted(collect.items()):
        flat = np.concatenate([np.asarray(c, dtype=np.float64).reshape(-1)
                               for c in chunks])
        stats[str(i)] = {
            "min": float(flat.min()),
            "max": float(flat.max()),
            "p_low": float(np.percentile(flat, 0.05)),
            "p_high": float(np.percentile(flat, 99.95)),
        }
    (out / "calibration" / "stats.json").write_text(
        json.dumps(stats, indent=2, sort_keys=True) + "\n")

    ref_logits = forward_batch(ckpt.layer_table, weights, thresholds,
                               ckpt.logit_scale, xte[:REFERENCE_SAMPLES],
                               input_bits=REFERENCE_BITS)
    (out / "reference_logits.bin").write_bytes(
        ref_logits.astype("<f8").tobytes())
    folded_acc = accuracy(ckpt.layer_table, weights, thresholds,
                          ckpt.logit_scale, xte, yte, input_bits=REFERENCE_BITS)
    reference = {
        "input_precision_bits": REFERENCE_BITS,
        "sample_count": REFERENCE_SAMPLES,
        "sample_source": "first test-split samples, dataset order",
        "logits_file": "reference_logits.bin",
        "logits_dtype": "<f8",
        "integer_path_test_accuracy": folded_acc,
    }
    (out / "reference.json").write_text(
        json.dumps(reference, indent=2, sort_keys=True) + "\n")

    summary = {
        "arch": ckpt.spec.arch,
        "seed": ckpt.spec.seed,
        "epochs": ckpt.spec.epochs,
        "train_accuracy": ckpt.train_accuracy,
        "test_accuracy": ckpt.test_accuracy,
        "integer_path_test_accuracy": folded_acc,
    }
    (out / "train_log.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary
