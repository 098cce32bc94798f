"""Sweep harness: accuracy grids over (input precision, ADC resolution),
hardware reports over ADC resolution, delimited outputs, and post-write
invariant re-checks.

Sweep cells are independent, so parallelism runs across cells with results
merged in (B, A) order; outputs are byte-stable for a fixed seed and input
set regardless of worker count.
"""
from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .costmodel import (
    HardwareConfig,
    chip_report,
    load_default_hardware_config,
)
from .engine import Dataset, ExecutionConfig, evaluate_accuracy, load_dataset
from .model_ir import NetworkDescriptor, load_descriptor, load_model


class InvariantViolation(Exception):
    """A post-write re-check of an emitted file failed."""


@dataclass(frozen=True)
class SweepSpec:
    model: Path
    out_dir: Path
    dataset: Path | None = None
    hw_config: Path | None = None
    b_range: tuple[int, ...] = tuple(range(1, 9))
    a_range: tuple[int, ...] = tuple(range(3, 9))
    seed: int = 0
    workers: int = 1
    subsample: int | None = None
    calibration: str = "full_range"
    subarray_rows: int = 128
    subarray_cols: int = 128

    def __post_init__(self):
        if not self.b_range or not self.a_range:
            raise ValueError("sweep ranges must be non-empty")
        if any(not 1 <= b <= 8 for b in self.b_range):
            raise ValueError("input precision range must lie in 1..8")
        if any(not 1 <= a <= 16 for a in self.a_range):
            raise ValueError("ADC resolution range must lie in 1..16")


def _fmt(v: float) -> str:
    # repr round-trips exactly, keeping re-parsed invariant checks tight
    return repr(float(v))


def _select_samples(ds: Dataset, spec: SweepSpec) -> Dataset:
    n = len(ds)
    if spec.subsample is None or spec.subsample >= n:
        return ds
    rng = np.random.default_rng(spec.seed)
    idx = np.sort(rng.choice(n, size=spec.subsample, replace=False))
    return Dataset(data=ds.data[idx], labels=ds.labels[idx],
                   class_count=ds.class_count)


# Worker globals, initialized once per process.
_WORKER: dict = {}


def _init_worker(model_path, dataset, rows, cols, calibration):
    _WORKER["net"] = load_model(model_path)
    _WORKER["dataset"] = dataset
    _WORKER["rows"] = rows
    _WORKER["cols"] = cols
    _WORKER["calibration"] = calibration


def _eval_cell(cell):
    b, a = cell
    cfg = ExecutionConfig(
        input_precision_bits=b,
        adc_resolution_bits=a,
        subarray_rows=_WORKER["rows"],
        subarray_cols=_WORKER["cols"],
        calibration=_WORKER["calibration"],
    )
    return cell, evaluate_accuracy(_WORKER["net"], _WORKER["dataset"], cfg)


def run_accuracy_sweep(spec: SweepSpec):
    """Evaluate every (B, A) cell; writes accuracy.csv plus a meta JSON.

    Returns the grid as {(b, a): accuracy}.
    """
    ds = _select_samples(load_dataset(spec.dataset), spec)
    cells = [(b, a) for b in spec.b_range for a in spec.a_range]
    grid: dict[tuple[int, int], float] = {}
    if spec.workers > 1:
        with ProcessPoolExecutor(
                max_workers=spec.workers, initializer=_init_worker,
                initargs=(spec.model, ds, spec.subarray_rows,
                          spec.subarray_cols, spec.calibration)) as pool:
            for cell, acc in pool.map(_eval_cell, cells):
                grid[cell] = acc
    else:
        _init_worker(spec.model, ds, spec.subarray_rows, spec.subarray_cols,
                     spec.calibration)
        for cell in cells:
            _, acc = _eval_cell(cell)
            grid[cell] = acc
        _WORKER.clear()

    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    header = "input_precision," + ",".join(f"adc_{a}" for a in spec.a_range)
    lines = [header]
    for b in spec.b_range:
        lines.append(",".join([str(b)] + [_fmt(grid[(b, a)]) for a in spec.a_range]))
    (out / "accuracy.csv").write_text("\n".join(lines) + "\n")
    meta = {
        "seed": spec.seed,
        "subsample": spec.subsample,
        "sample_count": len(ds),
        "cells": {f"b{b}_a{a}": len(ds) for b, a in cells},
    }
    (out / "accuracy_meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return grid


def _load_net_for_hardware(path) -> NetworkDescriptor:
    path = Path(path)
    if path.is_dir():
        return load_model(path)
    return load_descriptor(path)


def run_hardware_sweep(spec: SweepSpec):
    """One ChipReport per ADC resolution; writes one CSV per table family."""
    net = _load_net_for_hardware(spec.model)
    hw = (HardwareConfig.load(spec.hw_config) if spec.hw_config
          else load_default_hardware_config())
    reports = {a: chip_report(net, hw, a) for a in spec.a_range}

    out = Path(spec.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    area_lines = ["adc_resolution,chip_mm2,cim_mm2,ic_mm2,adc_mm2,accum_mm2,other_mm2"]
    lat_lines = ["adc_resolution,clock_ns,total_ms,buffer_ms,ic_ms,adc_us,accum_us,other_ms"]
    en_lines = ["adc_resolution,dynamic_uJ,leakage_uJ,buffer_uJ,ic_uJ,adc_uJ,accum_uJ,other_uJ"]
    met_lines = ["adc_resolution,tops_per_w,tops,fps,tops_per_cm2"]
    for a in spec.a_range:
        r = reports[a]
        ar, lt, en, mt = r.area, r.latency, r.energy, r.metrics
        area_lines.append(",".join([str(a)] + [_fmt(v) for v in (
            ar.chip, ar.cim, ar.ic, ar.adc, ar.accum, ar.other)]))
        lat_lines.append(",".join([str(a)] + [_fmt(v) for v in (
            lt.clock_ns, lt.total * 1e-6, lt.buffer * 1e-6, lt.ic * 1e-6,
            lt.adc * 1e-3, lt.accum * 1e-3, lt.other * 1e-6)]))
        en_lines.append(",".join([str(a)] + [_fmt(v * 1e-6) for v in (
            en.dynamic, en.leakage, en.buffer, en.ic, en.adc, en.accum, en.other)]))
        met_lines.append(",".join([str(a)] + [_fmt(v) for v in (
            mt.tops_per_w, mt.tops, mt.fps, mt.tops_per_cm2)]))
    (out / "area.csv").write_text("\n".join(area_lines) + "\n")
    (out / "latency.csv").write_text("\n".join(lat_lines) + "\n")
    (out / "energy.csv").write_text("\n".join(en_lines) + "\n")
    (out / "metrics.csv").write_text("\n".join(met_lines) + "\n")
    return reports


# ---------------------------------------------------------------------------
# Post-write invariant re-checks (re-parse the emitted files)
# ---------------------------------------------------------------------------

def _read_csv(path: Path):
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
    return header, rows


def _close(a, b, rel=1e-6):
    return abs(a - b) <= rel * max(1.0, abs(a), abs(b))


def validate_outputs(out_dir) -> None:
    """Re-parse whatever sweep files exist and re-check their invariants."""
    out = Path(out_dir)
    acc = out / "accuracy.csv"
    if acc.exists():
        _, rows = _read_csv(acc)
        for row in rows:
            if any(not 0.0 <= v <= 1.0 for v in row[1:]):
                raise InvariantViolation("accuracy cell outside [0, 1]")
    area = out / "area.csv"
    if area.exists():
        _, rows = _read_csv(area)
        for row in rows:
            if not _close(row[1], sum(row[2:])):
                raise InvariantViolation(
                    f"area partition violated at A={int(row[0])}")
    lat = out / "latency.csv"
    if lat.exists():
        _, rows = _read_csv(lat)
        for row in rows:
            total_ms = row[2]
            parts_ms = row[3] + row[4] + row[5] * 1e-3 + row[6] * 1e-3 + row[7]
            if not _close(total_ms, parts_ms):
                raise InvariantViolation(
                    f"latency partition violated at A={int(row[0])}")
    en = out / "energy.csv"
    if en.exists():
        _, rows = _read_csv(en)
        for row in rows:
            if not _close(row[1], sum(row[3:])):
                raise InvariantViolation(
                    f"dynamic energy partition violated at A={int(row[0])}")
    met = out / "metrics.csv"
    if met.exists() and lat.exists():
        _, mrows = _read_csv(met)
        _, lrows = _read_csv(lat)
        for mrow, lrow in zip(mrows, lrows):
            if not _close(mrow[3], 1e3 / lrow[2], rel=1e-6):
                raise InvariantViolation(
                    f"fps != 1/latency at A={int(mrow[0])}")
