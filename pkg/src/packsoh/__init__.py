"""Charging-based state-of-health measurement and differential-voltage
diagnostics for EV battery packs, with a synthetic pack simulator as the
built-in ground truth."""

from .dva import (
    DegradationReport,
    DVCurve,
    FeatureSet,
    degradation_modes,
    detect_features,
    dv_curve,
)
from .metrics import MeasurementResult, Reference, approx_energy, integrate_capacity, integrate_energy, soh
from .pack import (
    CellModel,
    DegradationState,
    PackModel,
    PackSpec,
    SensorSpec,
    apply_degradation,
    build_pack,
    pack_ocv,
)
from .processing import crop_to_soc_window, crop_to_window, smooth, synchronize
from .protocol import ProtocolSpec, ValidationReport, check_rest_settled, max_charge_power, validate_session
from .simulate import simulate_charge, simulate_raw_traces
from .traces import ChargingSession, RawTraces, export_csv, export_jsonl, parse_trace

__version__ = "0.1.0"
