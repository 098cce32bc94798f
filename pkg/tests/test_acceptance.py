"""Acceptance criteria, one test per criterion, each printing a PASS/FAIL
line.  Runs against the checked-in pre-exported bundles under fixtures/
(regenerable with the exporter package) and the shipped fitted hardware
config; no exporter code is imported here.
"""
import json
import math

import numpy as np
import pytest

from conftest import FIXTURES, make_conv_net
from oracles import reference_forward
from xbarsim import (
    AdcSpec,
    ExecutionConfig,
    adc_quantize,
    evaluate_accuracy,
    forward_network,
    load_dataset,
    load_model,
)
from xbarsim.costmodel import (
    chip_report,
    compute_mapping,
    latency_report,
    load_default_hardware_config,
    load_paper_descriptor,
)
from xbarsim.fit import ADC_RANGE, MODELS, verify
from xbarsim.quantizer import QuantizedTensor, bit_serialize, reconstruct_planes

PRESETS = ("tiny-alexnet", "tiny-resnet", "tiny-densenet")


def _report(name: str, ok: bool, detail: str = ""):
    print(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def dataset():
    return load_dataset(FIXTURES / "dataset")


def _load_reference(preset):
    root = FIXTURES / preset
    net = load_model(root / "model")
    meta = json.loads((root / "reference.json").read_text())
    logits = np.frombuffer((root / meta["logits_file"]).read_bytes(),
                           dtype=meta["logits_dtype"])
    return net, meta, logits.reshape(meta["sample_count"], net.class_count)


def test_criterion_oracle_equivalence(dataset):
    """Exact-mode logits equal direct integer inference and the exported
    reference logits bit for bit, 32 samples x 3 presets."""
    ok, details = True, []
    for preset in PRESETS:
        net, meta, ref_logits = _load_reference(preset)
        bits = meta["input_precision_bits"]
        batch = dataset.data[:meta["sample_count"]].astype(np.float64)
        got, _ = forward_network(net, batch, ExecutionConfig(
            exact_mode=True, input_precision_bits=bits))
        oracle = reference_forward(net, batch, bits)
        same_oracle = np.array_equal(got, oracle)
        same_ref = np.array_equal(got, ref_logits)
        ok &= same_oracle and same_ref
        details.append(f"{preset}: oracle={same_oracle} reference={same_ref}")
    _report("oracle-equivalence (3 presets, 32 samples, bit-exact)", ok,
            "; ".join(details))


def test_criterion_adc_quantizer_exhaustive():
    """|reconstruction - clamp(s)| <= ceil(step/2) for every integer s in
    clip ranges up to [-256, 256] and A in 1..9; pass-through when 2**A
    covers the range."""
    worst = 0.0
    for r in range(1, 257):
        s = np.arange(-r - 8, r + 9)
        clamped = np.clip(s, -r, r)
        for a in range(1, 10):
            spec = AdcSpec.from_clip(-r, r, a)
            out = adc_quantize(s, spec)
            bound = math.ceil(spec.step / 2)
            err = int(np.max(np.abs(out - clamped)))
            assert err <= bound, (r, a, err, bound)
            worst = max(worst, err / bound if bound else 0)
            if (1 << a) >= 2 * r + 1:
                assert spec.step == 1
                assert np.array_equal(out, clamped), (r, a)
            else:
                assert spec.step > 1
    _report("adc-quantizer (exhaustive r<=256, A in 1..9)", True,
            f"worst error/bound ratio {worst:.2f}")


def test_criterion_bit_serial_and_tiling():
    """Two's-complement reconstruction identity for B in 1..8 over the full
    range, and exact-mode tiling invariance across subarray shapes."""
    for bits in range(1, 9):
        lo = -1 if bits == 1 else -(1 << (bits - 1))
        hi = 0 if bits == 1 else (1 << (bits - 1)) - 1
        values = np.arange(lo, hi + 1, dtype=np.int32)
        bp = bit_serialize(QuantizedTensor(values=values, scale=1.0,
                                           precision_bits=bits))
        assert np.array_equal(reconstruct_planes(bp), values), bits

    net = make_conv_net(seed=77, in_hw=8, mid_ch=6, classes=5)
    rng = np.random.default_rng(78)
    x = rng.normal(size=(4,) + tuple(net.input_shape))
    ref = None
    combos = 0
    for r in (32, 64, 128, 256):
        for c in (32, 64, 128, 256):
            got, _ = forward_network(net, x, ExecutionConfig(
                exact_mode=True, subarray_rows=r, subarray_cols=c,
                input_precision_bits=6))
            if ref is None:
                ref = got
            assert np.array_equal(got, ref), (r, c)
            combos += 1
    _report("bit-serial identity (B 1..8) + tiling invariance", True,
            f"{combos} subarray shapes identical")


def test_criterion_accuracy_trend(dataset):
    """Desk-scale substitution for the published accuracy grid shape:
    (a) B=1 collapses at least 10 points below B=4 at A=8,
    (b) B=4/A=8 sits within 2 points of the exact-mode accuracy,
    (c) the B-averaged accuracy is non-decreasing from A=4 to A=8 within
        a 1-point noise allowance."""
    net = load_model(FIXTURES / "tiny-alexnet" / "model")

    def acc(bits, a=None, exact=False):
        cfg = ExecutionConfig(input_precision_bits=bits,
                              adc_resolution_bits=a or 8, exact_mode=exact)
        return evaluate_accuracy(net, dataset, cfg)

    acc_b1 = acc(1, 8)
    acc_b4 = acc(4, 8)
    acc_exact = acc(4, exact=True)
    gap_ok = acc_b4 - acc_b1 >= 0.10
    near_exact_ok = abs(acc_b4 - acc_exact) <= 0.02

    means = []
    for a in range(4, 9):
        means.append(np.mean([acc(b, a) for b in range(1, 9)]))
    mono_ok = all(y >= x - 0.01 for x, y in zip(means, means[1:]))

    _report("accuracy-trend (desk-scale grid shape)",
            gap_ok and near_exact_ok and mono_ok,
            f"B1@A8={acc_b1:.3f} B4@A8={acc_b4:.3f} exact={acc_exact:.3f} "
            f"row-avg A4..8=[{', '.join(f'{m:.3f}' for m in means)}]")


def test_criterion_cost_model_calibration():
    """Shipped fitted config + the three descriptor families reproduce the
    published chip tables: per-row chip area within 5 percent (55.97 and
    573.53 mm^2 anchors included), ADC share rising ~13 -> ~89 percent,
    clock periods exact, FPS = 1/latency, leakage ratio in [8, 14] percent."""
    hw = load_default_hardware_config()
    checks = verify(hw)
    failures = {k: d for k, (ok, d) in checks.items() if not ok}

    # anchor rows called out explicitly
    alex = load_paper_descriptor("balexnet")
    r3 = chip_report(alex, hw, 3)
    r8 = chip_report(alex, hw, 8)
    anchors_ok = (abs(r3.area.chip - 55.97) / 55.97 <= 0.05
                  and abs(r8.area.chip - 573.53) / 573.53 <= 0.05
                  and hw.clock_ns[3] == 1.96 and hw.clock_ns[8] == 3.05)
    pair_ok = abs(1e9 / 9.11e6 - 109.71) / 109.71 <= 0.005

    _report("cost-model calibration regression",
            not failures and anchors_ok and pair_ok,
            f"chip A=3 {r3.area.chip:.2f} (55.97), A=8 {r8.area.chip:.2f} "
            f"(573.53); failures={failures or 'none'}")


def test_criterion_structural_invariants():
    """Partition exactness, CIM independence of A, clock network
    independence, monotonicity in A, and the metric definitions."""
    hw = load_default_hardware_config()
    ok, notes = True, []
    for m in MODELS:
        net = load_paper_descriptor(m)
        mapping = compute_mapping(net, hw)
        cims = set()
        prev = None
        for a in ADC_RANGE:
            rep = chip_report(net, hw, a)
            ar, lt, en, mt = rep.area, rep.latency, rep.energy, rep.metrics
            ok &= math.isclose(ar.chip, ar.cim + ar.ic + ar.adc + ar.accum + ar.other,
                               rel_tol=1e-12)
            ok &= math.isclose(lt.total, lt.buffer + lt.ic + lt.adc + lt.accum + lt.other,
                               rel_tol=1e-12)
            ok &= math.isclose(en.dynamic, en.buffer + en.ic + en.adc + en.accum + en.other,
                               rel_tol=1e-12)
            ok &= math.isclose(en.leakage, hw.leakage_w_per_mm2 * ar.chip * lt.total * 1e3,
                               rel_tol=1e-12)
            ok &= math.isclose(mt.fps, 1e9 / lt.total, rel_tol=1e-12)
            ok &= math.isclose(mt.tops, 2 * mapping.total_macs * mt.fps * 1e-12,
                               rel_tol=1e-12)
            ok &= math.isclose(mt.tops_per_cm2, mt.tops / (ar.chip * 0.01),
                               rel_tol=1e-12)
            cims.add(ar.cim)
            if prev is not None:
                ok &= ar.adc >= prev.area.adc
                ok &= lt.total >= prev.latency.total
                ok &= (en.dynamic + en.leakage
                       >= prev.energy.dynamic + prev.energy.leakage)
                ok &= lt.clock_ns >= prev.latency.clock_ns
            prev = rep
        ok &= len(cims) == 1
        notes.append(f"{m}: cim={cims.pop():.3f}mm2")
    for a in ADC_RANGE:
        clocks = {latency_report(compute_mapping(load_paper_descriptor(m), hw),
                                 hw, a).clock_ns for m in MODELS}
        ok &= len(clocks) == 1
    _report("structural invariants (partition/independence/monotonicity)", ok,
            "; ".join(notes))
