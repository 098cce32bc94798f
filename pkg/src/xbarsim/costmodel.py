"""Table-driven chip cost model: maps a network descriptor plus a hardware
config to area, per-image latency, per-image energy, and throughput metrics
with per-component breakdowns.

Unit costs live in a JSON config (tables keyed by ADC resolution); the repo
ships one config fitted to published NeuroSim XnorParallel benchmarks for
binarized AlexNet / ResNet-18 / DenseNet-28 class models (see fit.py).
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from .model_ir import (
    COMBINE_ADD,
    COMBINE_CONCAT,
    NetworkDescriptor,
    load_descriptor,
)


class ConfigError(Exception):
    """Raised for malformed hardware configs or missing table entries."""


def _ceil_div(a: int, b: int) -> int:
    return -(-a // b)


class _Table:
    """Per-ADC-resolution unit-cost table."""

    def __init__(self, values: dict):
        self.values = {int(k): float(v) for k, v in values.items()}
        if any(v < 0 for v in self.values.values()):
            raise ConfigError("unit costs must be non-negative")

    def __getitem__(self, a: int) -> float:
        try:
            return self.values[int(a)]
        except KeyError:
            raise ConfigError(f"config table missing an entry for ADC resolution {a}")

    def __contains__(self, a: int) -> bool:
        return int(a) in self.values

    def to_json(self):
        return {str(k): self.values[k] for k in sorted(self.values)}


@dataclass
class AdcUnit:
    area_um2: _Table
    latency_ns: _Table
    energy_pJ: _Table


@dataclass
class BufferUnit:
    cycles_per_weight_bit: float     # per-image stage traffic for stored weights
    cycles_per_act_bit: float        # per-image stage traffic for activations
    energy_pJ_per_bit: _Table
    area_um2_per_act_bit: _Table     # buffer sizing, reported under "other"


@dataclass
class IcUnit:
    area_base_mm2: _Table            # chip-level interconnect backbone
    area_per_subarray_mm2: _Table
    cycles_per_subarray: _Table      # H-tree gather cost at the bottleneck stage
    energy_per_subarray_pJ: _Table
    energy_per_act_bit_pJ: _Table
    energy_per_skip_bit_pJ: _Table


@dataclass
class AccumUnit:
    area_um2_per_subarray: _Table
    cycles_per_op: _Table
    energy_pJ: _Table


@dataclass
class PeripheryUnit:
    area_per_chip_mm2: _Table
    area_per_subarray_um2: _Table
    energy_per_subarray_pJ: _Table


@dataclass
class HardwareConfig:
    subarray_rows: int               # R
    subarray_cols: int               # C
    mux_ratio: int                   # M, columns per ADC
    pipeline: bool
    dup_threshold: int               # output positions per weight replica
    dup_cap: int                     # max replicas per layer
    clock_ns: _Table                 # chip clock period, depends only on A
    cim_cell_area_um2: float
    adc: AdcUnit
    buffer: BufferUnit
    ic: IcUnit
    accum: AccumUnit
    periphery: PeripheryUnit
    leakage_w_per_mm2: float

    def __post_init__(self):
        if self.subarray_cols % self.mux_ratio:
            raise ConfigError("mux ratio must divide the subarray column count")
        if self.dup_threshold < 1 or self.dup_cap < 1:
            raise ConfigError("duplication parameters must be positive")

    @property
    def adcs_per_subarray(self) -> int:
        return self.subarray_cols // self.mux_ratio

    # -- serialization ------------------------------------------------------

    @classmethod
    def from_dict(cls, d: dict) -> "HardwareConfig":
        try:
            return cls(
                subarray_rows=int(d["subarray_rows"]),
                subarray_cols=int(d["subarray_cols"]),
                mux_ratio=int(d["mux_ratio"]),
                pipeline=bool(d["pipeline"]),
                dup_threshold=int(d["dup_threshold"]),
                dup_cap=int(d["dup_cap"]),
                clock_ns=_Table(d["clock_ns"]),
                cim_cell_area_um2=float(d["cim_cell_area_um2"]),
                adc=AdcUnit(
                    area_um2=_Table(d["adc"]["area_um2"]),
                    latency_ns=_Table(d["adc"]["latency_ns"]),
                    energy_pJ=_Table(d["adc"]["energy_pJ"]),
                ),
                buffer=BufferUnit(
                    cycles_per_weight_bit=float(d["buffer"]["cycles_per_weight_bit"]),
                    cycles_per_act_bit=float(d["buffer"]["cycles_per_act_bit"]),
                    energy_pJ_per_bit=_Table(d["buffer"]["energy_pJ_per_bit"]),
                    area_um2_per_act_bit=_Table(d["buffer"]["area_um2_per_act_bit"]),
                ),
                ic=IcUnit(
                    area_base_mm2=_Table(d["ic"]["area_base_mm2"]),
                    area_per_subarray_mm2=_Table(d["ic"]["area_per_subarray_mm2"]),
                    cycles_per_subarray=_Table(d["ic"]["cycles_per_subarray"]),
                    energy_per_subarray_pJ=_Table(d["ic"]["energy_per_subarray_pJ"]),
                    energy_per_act_bit_pJ=_Table(d["ic"]["energy_per_act_bit_pJ"]),
                    energy_per_skip_bit_pJ=_Table(d["ic"]["energy_per_skip_bit_pJ"]),
                ),
                accum=AccumUnit(
                    area_um2_per_subarray=_Table(d["accum"]["area_um2_per_subarray"]),
                    cycles_per_op=_Table(d["accum"]["cycles_per_op"]),
                    energy_pJ=_Table(d["accum"]["energy_pJ"]),
                ),
                periphery=PeripheryUnit(
                    area_per_chip_mm2=_Table(d["periphery"]["area_per_chip_mm2"]),
                    area_per_subarray_um2=_Table(d["periphery"]["area_per_subarray_um2"]),
                    energy_per_subarray_pJ=_Table(d["periphery"]["energy_per_subarray_pJ"]),
                ),
                leakage_w_per_mm2=float(d["leakage_w_per_mm2"]),
            )
        except KeyError as e:
            raise ConfigError(f"hardware config missing field {e}") from e

    def to_dict(self) -> dict:
        return {
            "subarray_rows": self.subarray_rows,
            "subarray_cols": self.subarray_cols,
            "mux_ratio": self.mux_ratio,
            "pipeline": self.pipeline,
            "dup_threshold": self.dup_threshold,
            "dup_cap": self.dup_cap,
            "clock_ns": self.clock_ns.to_json(),
            "cim_cell_area_um2": self.cim_cell_area_um2,
            "adc": {
                "area_um2": self.adc.area_um2.to_json(),
                "latency_ns": self.adc.latency_ns.to_json(),
                "energy_pJ": self.adc.energy_pJ.to_json(),
            },
            "buffer": {
                "cycles_per_weight_bit": self.buffer.cycles_per_weight_bit,
                "cycles_per_act_bit": self.buffer.cycles_per_act_bit,
                "energy_pJ_per_bit": self.buffer.energy_pJ_per_bit.to_json(),
                "area_um2_per_act_bit": self.buffer.area_um2_per_act_bit.to_json(),
            },
            "ic": {
                "area_base_mm2": self.ic.area_base_mm2.to_json(),
                "area_per_subarray_mm2": self.ic.area_per_subarray_mm2.to_json(),
                "cycles_per_subarray": self.ic.cycles_per_subarray.to_json(),
                "energy_per_subarray_pJ": self.ic.energy_per_subarray_pJ.to_json(),
                "energy_per_act_bit_pJ": self.ic.energy_per_act_bit_pJ.to_json(),
                "energy_per_skip_bit_pJ": self.ic.energy_per_skip_bit_pJ.to_json(),
            },
            "accum": {
                "area_um2_per_subarray": self.accum.area_um2_per_subarray.to_json(),
                "cycles_per_op": self.accum.cycles_per_op.to_json(),
                "energy_pJ": self.accum.energy_pJ.to_json(),
            },
            "periphery": {
                "area_per_chip_mm2": self.periphery.area_per_chip_mm2.to_json(),
                "area_per_subarray_um2": self.periphery.area_per_subarray_um2.to_json(),
                "energy_per_subarray_pJ": self.periphery.energy_per_subarray_pJ.to_json(),
            },
            "leakage_w_per_mm2": self.leakage_w_per_mm2,
        }

    @classmethod
    def load(cls, path) -> "HardwareConfig":
        try:
            return cls.from_dict(json.loads(Path(path).read_text()))
        except json.JSONDecodeError as e:
            raise ConfigError(f"malformed hardware config: {e}") from e

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n")


def load_default_hardware_config() -> HardwareConfig:
    """The shipped config fitted against the published benchmark tables."""
    data = resources.files("xbarsim").joinpath("data/neurosim_fit.json")
    return HardwareConfig.from_dict(json.loads(data.read_text()))


def load_paper_descriptor(name: str) -> NetworkDescriptor:
    """Shipped shape-only descriptors: balexnet, bresnet18, bdensenet28."""
    data = resources.files("xbarsim").joinpath(f"data/descriptors/{name}.json")
    with resources.as_file(data) as p:
        return load_descriptor(p)


# ---------------------------------------------------------------------------
# Mapping summary
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LayerCounts:
    index: int
    kind: str
    positions: int          # matrix-vector evaluations per image (pre-pool)
    fan_in: int
    out_channels: int
    planes: int             # input bit planes (first layer: B, else 1)
    row_tiles: int
    col_tiles: int
    tiles: int              # ceil(fan/R) * ceil(out/C)
    dup: int                # pipeline weight-replication factor (capped)
    alloc_subarrays: int    # tiles * dup, drives area and instance counts
    macs: int
    act_bits: int           # input activation traffic, positions * fan * planes
    out_bits: int           # output activation volume
    weight_bits: int
    psum_bits: int          # partial-sum gather traffic across row tiles
    skip_bits: int          # extra traffic for add/concat source re-reads
    skip_adds: int          # elementwise adds for add-combined sources
    adc_convs: int          # per-image ADC activations (full column banks)
    adc_serial: int         # sequential conversions per replica (latency path)
    accum_ops: int
    accum_serial: int

    @property
    def n_buffer_accesses(self) -> int:
        return self.act_bits + self.out_bits + self.weight_bits

    @property
    def n_ic_transfers(self) -> int:
        return self.act_bits + self.psum_bits + self.skip_bits


@dataclass(frozen=True)
class MappingSummary:
    layers: tuple[LayerCounts, ...]

    def total(self, attr: str) -> int:
        return sum(getattr(l, attr) for l in self.layers)

    @property
    def total_macs(self) -> int:
        return self.total("macs")

    @property
    def total_tiles(self) -> int:
        return self.total("tiles")

    @property
    def total_alloc(self) -> int:
        return self.total("alloc_subarrays")


def _source_volumes(net: NetworkDescriptor, i: int) -> list[int]:
    vols = []
    for s in net.layers[i].sources:
        shape = net.input_shape if s == -1 else net.layers[s].out_shape()
        vols.append(int(np.prod(shape)))
    return vols


def compute_mapping(net: NetworkDescriptor, hw: HardwareConfig) -> MappingSummary:
    """Apply the counting rules layer by layer.

    tiles = ceil(fan_in/R) * ceil(out_channels/C); ADC activations per image
    are positions * tiles * (C/M) * planes.  Layers additionally replicate
    their weights min(cap, ceil(positions/threshold)) times so position-heavy
    stages sustain the pipeline beat; replication multiplies allocated
    subarrays (area, leakage, instance counts) but not algorithmic work.
    """
    r, c = hw.subarray_rows, hw.subarray_cols
    entries = []
    for i, layer in enumerate(net.layers):
        fan = layer.fan_in
        out = layer.out_channels
        pos = layer.out_positions
        planes = layer.input_precision_bits if i == 0 else 1
        row_tiles = _ceil_div(fan, r)
        col_tiles = _ceil_div(out, c)
        tiles = row_tiles * col_tiles
        dup_full = _ceil_div(pos, hw.dup_threshold)
        dup = min(hw.dup_cap, dup_full)
        in_vols = _source_volumes(net, i)
        skip_bits = 0
        skip_adds = 0
        if layer.combine == COMBINE_ADD:
            skip_bits = sum(in_vols[1:])
            skip_adds = sum(in_vols[1:])
        elif layer.combine == COMBINE_CONCAT:
            skip_bits = sum(in_vols[1:])
        entries.append(LayerCounts(
            index=i,
            kind=layer.kind,
            positions=pos,
            fan_in=fan,
            out_channels=out,
            planes=planes,
            row_tiles=row_tiles,
            col_tiles=col_tiles,
            tiles=tiles,
            dup=dup,
            alloc_subarrays=tiles * dup,
            macs=pos * fan * out,
            act_bits=pos * fan * planes,
            out_bits=pos * out,
            weight_bits=fan * out,
            psum_bits=pos * out * row_tiles * planes,
            skip_bits=skip_bits,
            skip_adds=skip_adds,
            adc_convs=pos * tiles * hw.adcs_per_subarray * planes,
            adc_serial=_ceil_div(pos, dup_full) * hw.mux_ratio * planes,
            accum_ops=pos * out * (row_tiles * planes - 1) + skip_adds,
            accum_serial=_ceil_div(pos, dup) * out * (row_tiles * planes - 1),
        ))
    return MappingSummary(layers=tuple(entries))


# ---------------------------------------------------------------------------
# Reports
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class AreaReport:
    # unit: mm^2
    chip: float
    cim: float
    ic: float
    adc: float
    accum: float
    other: float


@dataclass(frozen=True)
class LatencyReport:
    # unit: ns per image
    total: float
    buffer: float
    ic: float
    adc: float
    accum: float
    other: float
    clock_ns: float
    bottleneck_layer: int | None   # None when unpipelined


@dataclass(frozen=True)
class EnergyReport:
    # unit: pJ per image
    dynamic: float
    leakage: float
    buffer: float
    ic: float
    adc: float
    accum: float
    other: float


@dataclass(frozen=True)
class Metrics:
    fps: float
    tops: float
    tops_per_w: float
    tops_per_cm2: float


@dataclass(frozen=True)
class ChipReport:
    adc_resolution_bits: int
    area: AreaReport
    latency: LatencyReport
    energy: EnergyReport
    metrics: Metrics


def area_report(mapping: MappingSummary, hw: HardwareConfig, a: int) -> AreaReport:
    """Chip area partition; CIM counts two cells per mapped weight and is
    independent of the ADC resolution."""
    r, c = hw.subarray_rows, hw.subarray_cols
    alloc = mapping.total_alloc
    cim = alloc * r * c * 2 * hw.cim_cell_area_um2 * 1e-6
    adc = alloc * hw.adcs_per_subarray * hw.adc.area_um2[a] * 1e-6
    accum = alloc * hw.accum.area_um2_per_subarray[a] * 1e-6
    ic = hw.ic.area_base_mm2[a] + alloc * hw.ic.area_per_subarray_mm2[a]
    act_bits = mapping.total("act_bits")
    other = (hw.periphery.area_per_chip_mm2[a]
             + alloc * hw.periphery.area_per_subarray_um2[a] * 1e-6
             + act_bits * hw.buffer.area_um2_per_act_bit[a] * 1e-6)
    chip = cim + adc + accum + ic + other
    return AreaReport(chip=chip, cim=cim, ic=ic, adc=adc, accum=accum, other=other)


def _stage_latency_ns(lc: LayerCounts, hw: HardwareConfig, a: int):
    """Per-layer stage latency components (ns).

    Buffer and interconnect traffic contend at the stage's shared port, so
    they do not divide by the replication factor; per-replica conversion and
    accumulation streams do.
    """
    clk = hw.clock_ns[a]
    buf = (lc.weight_bits * hw.buffer.cycles_per_weight_bit
           + lc.act_bits * hw.buffer.cycles_per_act_bit) * clk
    ic = lc.alloc_subarrays * hw.ic.cycles_per_subarray[a] * clk
    adc = lc.adc_serial * hw.adc.latency_ns[a]
    accum = lc.accum_serial * hw.accum.cycles_per_op[a] * clk
    return buf, ic, adc, accum


def latency_report(mapping: MappingSummary, hw: HardwareConfig, a: int) -> LatencyReport:
    """Pipelined chips run at the slowest stage; otherwise stages add up."""
    clk = hw.clock_ns[a]
    stages = [_stage_latency_ns(lc, hw, a) for lc in mapping.layers]
    if not stages:
        return LatencyReport(0.0, 0.0, 0.0, 0.0, 0.0, 0.0, clk, None)
    if hw.pipeline:
        totals = [sum(s) for s in stages]
        k = int(np.argmax(totals))
        buf, ic, adc, accum = stages[k]
        return LatencyReport(total=buf + ic + adc + accum, buffer=buf, ic=ic,
                             adc=adc, accum=accum, other=0.0, clock_ns=clk,
                             bottleneck_layer=k)
    buf = sum(s[0] for s in stages)
    ic = sum(s[1] for s in stages)
    adc = sum(s[2] for s in stages)
    accum = sum(s[3] for s in stages)
    return LatencyReport(total=buf + ic + adc + accum, buffer=buf, ic=ic,
                         adc=adc, accum=accum, other=0.0, clock_ns=clk,
                         bottleneck_layer=None)


def energy_report(mapping: MappingSummary, hw: HardwareConfig, a: int,
                  latency: LatencyReport, area: AreaReport | None = None) -> EnergyReport:
    """Dynamic component energies are count * unit; leakage is power density
    times chip area times the per-image latency."""
    if area is None:
        area = area_report(mapping, hw, a)
    buf = mapping.total("n_buffer_accesses") * hw.buffer.energy_pJ_per_bit[a]
    ic = (mapping.total_alloc * hw.ic.energy_per_subarray_pJ[a]
          + mapping.total("act_bits") * hw.ic.energy_per_act_bit_pJ[a]
          + mapping.total("skip_bits") * hw.ic.energy_per_skip_bit_pJ[a])
    adc = mapping.total("adc_convs") * hw.adc.energy_pJ[a]
    accum = mapping.total("accum_ops") * hw.accum.energy_pJ[a]
    other = mapping.total_alloc * hw.periphery.energy_per_subarray_pJ[a]
    dynamic = buf + ic + adc + accum + other
    # W * mm^2/mm^2 * ns -> pJ via 1e3
    leakage = hw.leakage_w_per_mm2 * area.chip * latency.total * 1e3
    return EnergyReport(dynamic=dynamic, leakage=leakage, buffer=buf, ic=ic,
                        adc=adc, accum=accum, other=other)


def metrics(area: AreaReport, latency: LatencyReport, energy: EnergyReport,
            mapping: MappingSummary) -> Metrics:
    """Definitional throughput/efficiency metrics (2 ops per MAC)."""
    fps = 1e9 / latency.total
    tops = 2.0 * mapping.total_macs * fps * 1e-12
    energy_j = (energy.dynamic + energy.leakage) * 1e-12
    tops_per_w = tops / (energy_j * fps)
    tops_per_cm2 = tops / (area.chip * 0.01)
    return Metrics(fps=fps, tops=tops, tops_per_w=tops_per_w,
                   tops_per_cm2=tops_per_cm2)


def chip_report(net: NetworkDescriptor, hw: HardwareConfig, a: int) -> ChipReport:
    """Full report for one (network, config, ADC resolution) point."""
    mapping = compute_mapping(net, hw)
    area = area_report(mapping, hw, a)
    latency = latency_report(mapping, hw, a)
    energy = energy_report(mapping, hw, a, latency, area)
    return ChipReport(
        adc_resolution_bits=a,
        area=area,
        latency=latency,
        energy=energy,
        metrics=metrics(area, latency, energy, mapping),
    )
