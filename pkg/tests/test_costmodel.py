import pytest

from xbarsim.costmodel import (
    HardwareConfig,
    area_report,
    chip_report,
    compute_mapping,
    energy_report,
    latency_report,
    load_default_hardware_config,
    load_paper_descriptor,
    metrics,
)
from xbarsim.model_ir import (
    ACT_NONE,
    ACT_SIGN,
    LayerDescriptor,
    NetworkDescriptor,
)

A_RANGE = range(3, 9)


def shipped():
    return load_default_hardware_config()


def fc_net(fan, out, bits=1):
    layer = LayerDescriptor(kind="fc", in_shape=(fan,), out_channels=out,
                            activation=ACT_NONE, sources=(-1,),
                            input_precision_bits=bits)
    return NetworkDescriptor([layer], class_count=out)


def two_fc_net(dims):
    layers = []
    for i, (fin, fout) in enumerate(zip(dims[:-1], dims[1:])):
        last = i == len(dims) - 2
        layers.append(LayerDescriptor(
            kind="fc", in_shape=(fin,), out_channels=fout,
            activation=ACT_NONE if last else ACT_SIGN,
            sources=(-1,) if i == 0 else (i - 1,)))
    return NetworkDescriptor(layers, class_count=dims[-1])


def test_mapping_fc_example():
    hw = shipped()
    mapping = compute_mapping(fc_net(512, 1000), hw)
    lc = mapping.layers[0]
    assert lc.tiles == 4 * 8 == 32
    assert lc.adc_convs == 1 * 32 * (128 // 8) * 1 == 512


def test_mapping_conv_example():
    hw = shipped()
    conv = LayerDescriptor(kind="conv", in_shape=(18, 18, 64), out_channels=64,
                           kernel=(3, 3), stride=1, padding=0,
                           activation=ACT_NONE, sources=(-1,),
                           input_precision_bits=1)
    mapping = compute_mapping(NetworkDescriptor([conv], class_count=64), hw)
    lc = mapping.layers[0]
    assert lc.positions == 16 * 16
    assert lc.fan_in == 576
    assert lc.tiles == 5 * 1


def test_mapping_empty_network():
    mapping = compute_mapping(NetworkDescriptor([], class_count=0), shipped())
    assert mapping.total_macs == 0
    assert mapping.total_tiles == 0
    assert mapping.total("n_buffer_accesses") == 0


def test_area_partition_and_linearity():
    hw = shipped()
    net = load_paper_descriptor("balexnet")
    mapping = compute_mapping(net, hw)
    for a in A_RANGE:
        ar = area_report(mapping, hw, a)
        assert ar.chip == pytest.approx(
            ar.cim + ar.ic + ar.adc + ar.accum + ar.other, rel=1e-12)

    doubled = hw.to_dict()
    for k in doubled["adc"]["area_um2"]:
        doubled["adc"]["area_um2"][k] *= 2.0
    hw2 = HardwareConfig.from_dict(doubled)
    a1 = area_report(mapping, hw, 5)
    a2 = area_report(compute_mapping(net, hw2), hw2, 5)
    assert a2.adc == pytest.approx(2 * a1.adc, rel=1e-12)
    assert a2.cim == pytest.approx(a1.cim, rel=1e-12)


def test_cim_area_independent_of_adc_resolution():
    hw = shipped()
    mapping = compute_mapping(load_paper_descriptor("bresnet18"), hw)
    cims = {area_report(mapping, hw, a).cim for a in A_RANGE}
    assert len(cims) == 1


def test_clock_independent_of_network():
    hw = shipped()
    for a in A_RANGE:
        clocks = {
            latency_report(compute_mapping(load_paper_descriptor(m), hw), hw, a).clock_ns
            for m in ("balexnet", "bresnet18", "bdensenet28")}
        assert len(clocks) == 1


def test_pipeline_single_layer_equivalence():
    hw = shipped()
    net = fc_net(512, 1000)
    mapping = compute_mapping(net, hw)
    on = latency_report(mapping, hw, 4)
    off_cfg = hw.to_dict()
    off_cfg["pipeline"] = False
    off = latency_report(compute_mapping(net, HardwareConfig.from_dict(off_cfg)),
                         HardwareConfig.from_dict(off_cfg), 4)
    assert on.total == pytest.approx(off.total, rel=1e-12)


def test_pipeline_bottleneck_vs_sum():
    # two stages with known latency weights: pipelined takes the max
    cfg = shipped().to_dict()
    cfg["buffer"]["cycles_per_weight_bit"] = 1.0
    cfg["buffer"]["cycles_per_act_bit"] = 0.0
    for section, keys in (("ic", ["cycles_per_subarray"]),
                          ("accum", ["cycles_per_op"]),
                          ("adc", ["latency_ns"])):
        for key in keys:
            cfg[section][key] = {k: 0.0 for k in cfg[section][key]}
    cfg["clock_ns"] = {k: 1.0 for k in cfg["clock_ns"]}
    net = two_fc_net((3, 1, 5))   # weight bits 3 and 5
    hw_on = HardwareConfig.from_dict(cfg)
    lat_on = latency_report(compute_mapping(net, hw_on), hw_on, 4)
    assert lat_on.total == pytest.approx(5.0)
    assert lat_on.bottleneck_layer == 1
    cfg["pipeline"] = False
    hw_off = HardwareConfig.from_dict(cfg)
    lat_off = latency_report(compute_mapping(net, hw_off), hw_off, 4)
    assert lat_off.total == pytest.approx(8.0)


def test_latency_partition():
    hw = shipped()
    for m in ("balexnet", "bdensenet28"):
        mapping = compute_mapping(load_paper_descriptor(m), hw)
        for a in A_RANGE:
            lt = latency_report(mapping, hw, a)
            assert lt.total == pytest.approx(
                lt.buffer + lt.ic + lt.adc + lt.accum + lt.other, rel=1e-12)


def test_energy_partition_and_zero_units():
    hw = shipped()
    net = load_paper_descriptor("bresnet18")
    mapping = compute_mapping(net, hw)
    lt = latency_report(mapping, hw, 5)
    en = energy_report(mapping, hw, 5, lt)
    assert en.dynamic == pytest.approx(
        en.buffer + en.ic + en.adc + en.accum + en.other, rel=1e-12)

    zeroed = hw.to_dict()
    for sec, key in (("buffer", "energy_pJ_per_bit"), ("adc", "energy_pJ"),
                     ("accum", "energy_pJ"),
                     ("ic", "energy_per_subarray_pJ"),
                     ("ic", "energy_per_act_bit_pJ"),
                     ("ic", "energy_per_skip_bit_pJ"),
                     ("periphery", "energy_per_subarray_pJ")):
        zeroed[sec][key] = {k: 0.0 for k in zeroed[sec][key]}
    hw0 = HardwareConfig.from_dict(zeroed)
    en0 = energy_report(compute_mapping(net, hw0), hw0, 5,
                        latency_report(compute_mapping(net, hw0), hw0, 5))
    assert en0.dynamic == 0.0
    assert en0.leakage == pytest.approx(en.leakage, rel=1e-12)


def test_energy_homogeneity():
    hw = shipped()
    net = load_paper_descriptor("balexnet")
    mapping = compute_mapping(net, hw)
    lt = latency_report(mapping, hw, 6)
    base = energy_report(mapping, hw, 6, lt)
    scaled_cfg = hw.to_dict()
    scaled_cfg["adc"]["energy_pJ"] = {
        k: 2 * v for k, v in scaled_cfg["adc"]["energy_pJ"].items()}
    hw2 = HardwareConfig.from_dict(scaled_cfg)
    en2 = energy_report(mapping, hw2, 6, lt)
    assert en2.adc == pytest.approx(2 * base.adc, rel=1e-12)
    assert en2.ic == pytest.approx(base.ic, rel=1e-12)
    assert en2.buffer == pytest.approx(base.buffer, rel=1e-12)


def test_leakage_is_power_density_times_area_times_latency():
    hw = shipped()
    mapping = compute_mapping(load_paper_descriptor("balexnet"), hw)
    ar = area_report(mapping, hw, 4)
    lt = latency_report(mapping, hw, 4)
    en = energy_report(mapping, hw, 4, lt, ar)
    assert en.leakage == pytest.approx(
        hw.leakage_w_per_mm2 * ar.chip * lt.total * 1e3, rel=1e-12)


def test_metrics_published_fps_pair():
    # formula check against the published 9.11 ms <-> 109.71 FPS pair
    fps = 1e9 / 9.11e6
    assert abs(fps - 109.71) / 109.71 <= 0.005


def test_metrics_scaling_laws():
    hw = shipped()
    net = load_paper_descriptor("bdensenet28")
    mapping = compute_mapping(net, hw)
    ar = area_report(mapping, hw, 5)
    lt = latency_report(mapping, hw, 5)
    en = energy_report(mapping, hw, 5, lt, ar)
    m1 = metrics(ar, lt, en, mapping)
    from xbarsim.costmodel import EnergyReport
    en2 = EnergyReport(dynamic=2 * en.dynamic, leakage=2 * en.leakage,
                       buffer=2 * en.buffer, ic=2 * en.ic, adc=2 * en.adc,
                       accum=2 * en.accum, other=2 * en.other)
    m2 = metrics(ar, lt, en2, mapping)
    assert m2.tops == pytest.approx(m1.tops, rel=1e-12)
    assert m2.tops_per_w == pytest.approx(m1.tops_per_w / 2, rel=1e-12)
    assert m1.fps == pytest.approx(1e9 / lt.total, rel=1e-12)
    assert m1.tops_per_cm2 == pytest.approx(m1.tops / (ar.chip * 0.01), rel=1e-12)


def test_fps_and_tops_monotone_decreasing_in_a():
    hw = shipped()
    for m in ("balexnet", "bresnet18", "bdensenet28"):
        net = load_paper_descriptor(m)
        reports = [chip_report(net, hw, a) for a in A_RANGE]
        fps = [r.metrics.fps for r in reports]
        tops = [r.metrics.tops for r in reports]
        assert all(x >= y for x, y in zip(fps, fps[1:]))
        assert all(x >= y for x, y in zip(tops, tops[1:]))


def test_missing_table_entry_raises():
    from xbarsim.costmodel import ConfigError
    hw = shipped()
    mapping = compute_mapping(fc_net(64, 10), hw)
    with pytest.raises(ConfigError, match="missing an entry"):
        area_report(mapping, hw, 12)


def test_mux_must_divide_columns():
    from xbarsim.costmodel import ConfigError
    cfg = shipped().to_dict()
    cfg["mux_ratio"] = 7
    with pytest.raises(ConfigError):
        HardwareConfig.from_dict(cfg)
