"""Functional and performance simulator for binarized neural networks on
NVM-crossbar processing-in-memory accelerators."""

from .model_ir import (
    Diagnostic,
    LayerDescriptor,
    ModelFormatError,
    NetworkDescriptor,
    PackedBinaryTensor,
    PoolSpec,
    load_descriptor,
    load_model,
    save_descriptor,
    save_model,
    validate_chain,
)
from .quantizer import (
    BitPlaneSet,
    QuantizedTensor,
    binarize,
    bit_serialize,
    quantize_dynamic,
    reconstruct_planes,
)
from .xbar import (
    AdcSpec,
    FullRange,
    Percentile,
    SubarrayTile,
    adc_quantize,
    calibrate_adc,
    column_sums,
    map_weights,
)
from .engine import (
    Dataset,
    ExecutionConfig,
    ExecutionPlan,
    LayerTrace,
    evaluate_accuracy,
    forward_layer,
    forward_network,
    load_dataset,
    lower_conv,
    save_dataset,
)
from .costmodel import (
    AreaReport,
    ChipReport,
    ConfigError,
    EnergyReport,
    HardwareConfig,
    LatencyReport,
    MappingSummary,
    Metrics,
    area_report,
    chip_report,
    compute_mapping,
    energy_report,
    latency_report,
    load_default_hardware_config,
    load_paper_descriptor,
    metrics,
)

__version__ = "0.1.0"
