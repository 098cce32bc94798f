import json
import subprocess
import sys

import numpy as np
import pytest

from conftest import make_conv_net
from xbarsim.cli import main as cli_main
from xbarsim.costmodel import chip_report, load_paper_descriptor
from xbarsim.engine import Dataset, ExecutionConfig, evaluate_accuracy, save_dataset
from xbarsim.model_ir import save_model, save_descriptor
from xbarsim.plots import emit_plots
from xbarsim.sweep import SweepSpec, run_accuracy_sweep, run_hardware_sweep, \
    validate_outputs


@pytest.fixture(scope="module")
def bundle(tmp_path_factory):
    root = tmp_path_factory.mktemp("bundle")
    net = make_conv_net(seed=40, in_hw=6, mid_ch=4, classes=4)
    save_model(net, root / "model")
    rng = np.random.default_rng(41)
    ds = Dataset(data=rng.normal(size=(24, 6, 6, 1)).astype(np.float32),
                 labels=rng.integers(0, 4, size=24).astype(np.int32),
                 class_count=4)
    save_dataset(ds, root / "dataset")
    return root, net, ds


def test_single_cell_equals_direct_call(bundle, tmp_path):
    root, net, ds = bundle
    spec = SweepSpec(model=root / "model", dataset=root / "dataset",
                     out_dir=tmp_path, b_range=(4,), a_range=(6,))
    grid = run_accuracy_sweep(spec)
    direct = evaluate_accuracy(net, ds, ExecutionConfig(
        input_precision_bits=4, adc_resolution_bits=6))
    assert grid[(4, 6)] == direct
    rows = (tmp_path / "accuracy.csv").read_text().strip().splitlines()
    assert rows[0] == "input_precision,adc_6"
    assert float(rows[1].split(",")[1]) == direct


def test_rerun_is_byte_identical(bundle, tmp_path):
    root, _, _ = bundle
    outs = []
    for sub in ("a", "b"):
        spec = SweepSpec(model=root / "model", dataset=root / "dataset",
                         out_dir=tmp_path / sub, b_range=(1, 4),
                         a_range=(3, 8), seed=7, subsample=10)
        run_accuracy_sweep(spec)
        outs.append((tmp_path / sub / "accuracy.csv").read_bytes())
    assert outs[0] == outs[1]


def test_worker_count_does_not_change_results(bundle, tmp_path):
    root, _, _ = bundle
    grids = []
    for workers, sub in ((1, "w1"), (2, "w2")):
        spec = SweepSpec(model=root / "model", dataset=root / "dataset",
                         out_dir=tmp_path / sub, b_range=(2, 5),
                         a_range=(4, 7), workers=workers)
        grids.append(run_accuracy_sweep(spec))
    assert grids[0] == grids[1]
    assert (tmp_path / "w1" / "accuracy.csv").read_bytes() == \
        (tmp_path / "w2" / "accuracy.csv").read_bytes()


def test_hardware_single_point_equals_direct(tmp_path):
    desc = tmp_path / "desc.json"
    save_descriptor(load_paper_descriptor("balexnet"), desc)
    spec = SweepSpec(model=desc, out_dir=tmp_path / "hw", a_range=(3,))
    reports = run_hardware_sweep(spec)
    direct = chip_report(load_paper_descriptor("balexnet"),
                         __import__("xbarsim.costmodel", fromlist=["x"])
                         .load_default_hardware_config(), 3)
    assert reports[3].area.chip == direct.area.chip
    assert reports[3].metrics.fps == direct.metrics.fps
    validate_outputs(tmp_path / "hw")


def test_outputs_survive_reparse_validation(bundle, tmp_path):
    root, _, _ = bundle
    spec = SweepSpec(model=root / "model", dataset=root / "dataset",
                     out_dir=tmp_path, b_range=(1, 2), a_range=(3, 4))
    run_accuracy_sweep(spec)
    run_hardware_sweep(SweepSpec(model=root / "model", out_dir=tmp_path,
                                 a_range=(3, 4, 5)))
    validate_outputs(tmp_path)


def test_plots_emitted_with_log_scale_metadata(bundle, tmp_path):
    root, _, _ = bundle
    run_accuracy_sweep(SweepSpec(model=root / "model", dataset=root / "dataset",
                                 out_dir=tmp_path, b_range=(1, 3), a_range=(3, 5)))
    run_hardware_sweep(SweepSpec(model=root / "model", out_dir=tmp_path,
                                 a_range=(3, 4, 5)))
    written = emit_plots(tmp_path)
    names = {p.name for p in written}
    assert "accuracy_vs_adc_series.csv" in names
    assert "area_breakdown.png" in names
    area_meta = json.loads((tmp_path / "plots" / "area_breakdown_meta.json").read_text())
    energy_meta = json.loads((tmp_path / "plots" / "energy_breakdown_meta.json").read_text())
    acc_meta = json.loads((tmp_path / "plots" / "accuracy_vs_adc_meta.json").read_text())
    assert area_meta["log_scale"] and energy_meta["log_scale"]
    assert not acc_meta["log_scale"]
    # series values mirror the grid cells exactly
    series = (tmp_path / "plots" / "accuracy_vs_adc_series.csv").read_text().splitlines()
    grid = (tmp_path / "accuracy.csv").read_text().strip().splitlines()
    cell_b1_a3 = grid[1].split(",")[1]
    assert f"B=1,3,{cell_b1_a3}" in series
    # five component series plus the total in the area family
    area_series = (tmp_path / "plots" / "area_breakdown_series.csv").read_text()
    for comp in ("chip", "cim", "ic", "adc", "accum", "other"):
        assert f"\n{comp}," in area_series


def test_cli_accuracy_and_hardware(bundle, tmp_path):
    root, _, _ = bundle
    rc = cli_main(["all", "--model", str(root / "model"),
                   "--dataset", str(root / "dataset"),
                   "--input-precision", "1..2", "--adc", "3..4",
                   "--out", str(tmp_path / "out"), "--seed", "1"])
    assert rc == 0
    for name in ("accuracy.csv", "area.csv", "latency.csv", "energy.csv",
                 "metrics.csv", "accuracy_meta.json"):
        assert (tmp_path / "out" / name).exists()
    assert (tmp_path / "out" / "plots" / "area_breakdown.png").exists()


def test_cli_exit_codes(bundle, tmp_path):
    root, _, _ = bundle
    # missing model directory -> I/O error
    rc = cli_main(["accuracy", "--model", str(tmp_path / "nope"),
                   "--dataset", str(root / "dataset"),
                   "--out", str(tmp_path / "x")])
    assert rc == 3
    # malformed range -> argparse exits with code 2
    with pytest.raises(SystemExit) as exc:
        cli_main(["accuracy", "--model", str(root / "model"),
                  "--dataset", str(root / "dataset"),
                  "--input-precision", "abc", "--out", str(tmp_path / "y")])
    assert exc.value.code == 2
    # accuracy mode without a dataset -> argparse error
    with pytest.raises(SystemExit) as exc:
        cli_main(["accuracy", "--model", str(root / "model"),
                  "--out", str(tmp_path / "z")])
    assert exc.value.code == 2
    # out-of-contract sweep range -> bad arguments
    rc = cli_main(["accuracy", "--model", str(root / "model"),
                   "--dataset", str(root / "dataset"),
                   "--input-precision", "1..9",
                   "--out", str(tmp_path / "w")])
    assert rc == 2


def test_cli_entry_point_runs(bundle, tmp_path):
    root, _, _ = bundle
    proc = subprocess.run(
        [sys.executable, "-m", "xbarsim.cli", "hardware",
         "--model", str(root / "model"), "--adc", "3..4",
         "--out", str(tmp_path / "out")],
        capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
