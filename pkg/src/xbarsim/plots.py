"""Plot-data series extracted from sweep outputs, plus rendered figures.

Each figure family gets one tidy series CSV (series,x,y) with a sidecar
meta JSON recording the axes and whether the published figures use a log
scale, so any plotting tool can reproduce them; PNG renders are written
alongside for convenience.
"""
from __future__ import annotations

import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt


def _read_csv(path: Path):
    lines = path.read_text().strip().splitlines()
    header = lines[0].split(",")
    rows = [ln.split(",") for ln in lines[1:]]
    return header, rows


def _write_series(out_dir: Path, name: str, series: dict, meta: dict):
    lines = ["series,x,y"]
    for label, points in series.items():
        for x, y in points:
            lines.append(f"{label},{x},{y}")
    (out_dir / f"{name}_series.csv").write_text("\n".join(lines) + "\n")
    (out_dir / f"{name}_meta.json").write_text(
        json.dumps(meta, indent=2, sort_keys=True) + "\n")


def _render(out_dir: Path, name: str, series: dict, meta: dict):
    fig, ax = plt.subplots(figsize=(6, 4))
    for label, points in series.items():
        xs = [float(x) for x, _ in points]
        ys = [float(y) for _, y in points]
        ax.plot(xs, ys, marker="o", label=label)
    if meta.get("log_scale"):
        ax.set_yscale("log")
    ax.set_xlabel(meta.get("x_axis", "x"))
    ax.set_ylabel(meta.get("y_axis", "y"))
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(out_dir / f"{name}.png", dpi=120, metadata={"Software": None})
    plt.close(fig)


def emit_plots(results_dir, out_dir=None) -> list[Path]:
    """Reshape sweep CSVs into per-figure series files and render PNGs.

    Returns the list of written files; raises FileNotFoundError when the
    results directory holds no sweep outputs at all.
    """
    results = Path(results_dir)
    out = Path(out_dir) if out_dir else results / "plots"
    written: list[Path] = []

    def emit(name, series, meta):
        out.mkdir(parents=True, exist_ok=True)
        _write_series(out, name, series, meta)
        _render(out, name, series, meta)
        written.extend([out / f"{name}_series.csv", out / f"{name}_meta.json",
                        out / f"{name}.png"])

    acc = results / "accuracy.csv"
    if acc.exists():
        header, rows = _read_csv(acc)
        a_values = [int(h.split("_")[1]) for h in header[1:]]
        per_b = {f"B={int(float(r[0]))}": list(zip(a_values, r[1:])) for r in rows}
        emit("accuracy_vs_adc", per_b, {
            "x_axis": "adc_resolution_bits", "y_axis": "top1_accuracy",
            "log_scale": False})
        per_a = {}
        for j, a in enumerate(a_values):
            per_a[f"A={a}"] = [(int(float(r[0])), r[1 + j]) for r in rows]
        emit("accuracy_vs_input_precision", per_a, {
            "x_axis": "input_precision_bits", "y_axis": "top1_accuracy",
            "log_scale": False})

    area = results / "area.csv"
    if area.exists():
        header, rows = _read_csv(area)
        series = {h.replace("_mm2", ""): [(r[0], r[1 + j]) for r in rows]
                  for j, h in enumerate(header[1:])}
        emit("area_breakdown", series, {
            "x_axis": "adc_resolution_bits", "y_axis": "area_mm2",
            "log_scale": True})

    lat = results / "latency.csv"
    if lat.exists():
        header, rows = _read_csv(lat)
        # Express every component in ms for one comparable family.
        series = {}
        for j, h in enumerate(header[1:], start=1):
            if h == "clock_ns":
                continue
            pts = []
            for r in rows:
                v = float(r[j])
                pts.append((r[0], repr(v * 1e-3) if h.endswith("_us") else r[j]))
            series[h.replace("_ms", "").replace("_us", "")] = pts
        emit("latency_breakdown", series, {
            "x_axis": "adc_resolution_bits", "y_axis": "latency_ms",
            "log_scale": True})

    en = results / "energy.csv"
    if en.exists():
        header, rows = _read_csv(en)
        series = {h.replace("_uJ", ""): [(r[0], r[1 + j]) for r in rows]
                  for j, h in enumerate(header[1:])}
        emit("energy_breakdown", series, {
            "x_axis": "adc_resolution_bits", "y_axis": "energy_uJ_per_image",
            "log_scale": True})

    met = results / "metrics.csv"
    if met.exists():
        header, rows = _read_csv(met)
        series = {h: [(r[0], r[1 + j]) for r in rows]
                  for j, h in enumerate(header[1:])}
        emit("throughput_efficiency", series, {
            "x_axis": "adc_resolution_bits", "y_axis": "metric_value",
            "log_scale": False})

    if not written:
        raise FileNotFoundError(f"no sweep outputs found under {results}")
    return written
