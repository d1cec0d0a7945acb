"""End-to-end flows tying simulator, ingestion, protocol, metrics, and
diagnostics together. The service endpoints and the command-line client are
thin wrappers around these functions; everything here returns plain
JSON-ready dictionaries."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .configs import VehicleConfig
from .dva import degradation_modes, detect_features, dv_curve, export_dv_curve
from .errors import DomainError, MeasurementRefusedError, WindowNotCoveredError
from .metrics import Reference, measure
from .pack import IDEAL_SENSOR, DegradationState, build_pack
from .processing import crop_to_soc_window, crop_to_window, smooth, synchronize
from .protocol import ProtocolSpec, validate_session
from .simulate import simulate_raw_traces
from .traces import ChargingSession, RawTraces, export_csv, export_jsonl, parse_trace

# A session whose upper span exceeds the configured window by more than this
# per series cell indicates the pack operates on different limits than the
# config assumes (e.g. a software update changed the usable window).
WINDOW_DRIFT_TOLERANCE_V_PER_CELL = 0.075


@dataclass(frozen=True)
class Scenario:
    """Degradation and fault state injected into a simulated pack."""

    lam_ne: float = 0.0
    lam_pe: float = 0.0
    lli: float = 0.0
    defective_cells: tuple[tuple[int, float], ...] = ()
    unbalanced: bool = False
    cell_variation: float | None = None   # None: keep the config value

    def degradation(self) -> DegradationState:
        return DegradationState(lam_ne=self.lam_ne, lam_pe=self.lam_pe, lli=self.lli)


def _json_safe(value):
    if isinstance(value, float) and not math.isfinite(value):
        return None
    if isinstance(value, dict):
        return {k: _json_safe(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_json_safe(v) for v in value]
    return value


def simulate_trace(cfg: VehicleConfig, seed: int = 0, scenario: Scenario | None = None,
                   sensor_seed: int | None = None, power_w: float | None = None,
                   ambient_temp_c: float | None = None, ideal_sensors: bool = False,
                   include_cell_voltages: bool = False, fmt: str = "csv",
                   label: str | None = None) -> tuple[str, dict]:
    """Simulate one charge; returns (trace text, ground-truth sidecar dict)."""
    scenario = scenario or Scenario()
    spec = replace(
        cfg.pack,
        defective_cells=tuple(scenario.defective_cells),
        unbalanced=scenario.unbalanced,
        cell_variation=(cfg.pack.cell_variation if scenario.cell_variation is None
                        else scenario.cell_variation),
    )
    model = build_pack(spec, scenario.degradation(), seed)
    raw = simulate_raw_traces(
        model,
        power_w if power_w is not None else cfg.power_w,
        sensor=IDEAL_SENSOR if ideal_sensors else cfg.sensors,
        ambient_temp_c=cfg.ambient_temp_c if ambient_temp_c is None else ambient_temp_c,
        seed=seed if sensor_seed is None else sensor_seed,
        rest_s=cfg.rest_s,
        include_cell_voltages=include_cell_voltages,
    )
    if label is not None:
        raw.metadata["label"] = label
    text = export_csv(raw) if fmt == "csv" else export_jsonl(raw)
    ground_truth = _json_safe({
        **model.ground_truth(),
        "scenario": {
            "lam_ne": scenario.lam_ne, "lam_pe": scenario.lam_pe, "lli": scenario.lli,
            "defective_cells": [list(d) for d in scenario.defective_cells],
            "unbalanced": scenario.unbalanced,
        },
        "sensor_seed": seed if sensor_seed is None else sensor_seed,
        "power_w": power_w if power_w is not None else cfg.power_w,
        "config_hash": cfg.config_hash,
    })
    return text, ground_truth


def load_session(trace, cfg: VehicleConfig, fmt: str = "csv",
                 grid_step_s: float = 1.0) -> ChargingSession:
    """Parse (if needed) and synchronize a trace onto the uniform grid."""
    raw = trace if isinstance(trace, RawTraces) else parse_trace(trace, format=fmt)
    session = synchronize(raw, grid_step=grid_step_s)
    session.metadata.setdefault("vehicle_id", cfg.name)
    return session


def _smoothed_voltage(session: ChargingSession) -> ChargingSession:
    sm = smooth(session.voltage)
    out = replace(session, voltage=sm, power=sm * session.current)
    out.metadata["voltage_smoothing_fraction"] = 0.01
    return out


def measure_session(session: ChargingSession, cfg: VehicleConfig, protocol: ProtocolSpec,
                    window: tuple[float, float] | None = None,
                    soc_window: tuple[float, float | None] | None = None,
                    initial_reference: tuple[float, float] | None = None,
                    disabled_checks: frozenset[str] = frozenset()) -> dict:
    """Validate and measure one synchronized session.

    The protocol verdict is embedded in the result; a non-compliant session
    is still measured. Only a session that cannot cover the cut-off window
    refuses measurement, raising MeasurementRefusedError with the diagnostic.
    """
    protocol_used = protocol if window is None else replace(protocol, window=tuple(window))
    validation = validate_session(session, protocol_used, cfg.pack,
                                  disabled_checks=disabled_checks)
    window_used = tuple(window or protocol.window or cfg.pack.window)

    try:
        if soc_window is not None:
            lo, hi = soc_window
            cropped = crop_to_soc_window(session, lo, hi)
            window_label = (f"SOC {lo}-{'termination' if hi is None else hi} %")
        else:
            cropped = crop_to_window(session, *window_used)
            window_label = f"{window_used[0]}-{window_used[1]} V"
    except WindowNotCoveredError as exc:
        raise MeasurementRefusedError(
            f"measurement refused for {cfg.name!r}: {exc}"
        ) from exc

    nominal = Reference("nominal", cfg.pack.nominal_capacity_ah, cfg.pack.nominal_energy_kwh)
    extras = {}
    if initial_reference is not None:
        extras["initial"] = Reference("initial", *initial_reference)
    result = measure(cropped, nominal, cfg.pack.nominal_voltage_v, window_used,
                     extra_references=extras)

    smoothed = smooth(session.voltage)
    return _json_safe({
        "vehicle": cfg.name,
        "config_hash": cfg.config_hash,
        "window_label": window_label,
        "measurement": result.to_dict(),
        "validation": validation.to_dict(),
        "session": {
            "samples": len(session),
            "duration_h": session.duration_s / 3600.0,
            "voltage_span_v": [float(smoothed.min()), float(smoothed.max())],
            "mean_power_w": float(np.trapezoid(session.power, session.time)
                                  / max(session.duration_s, 1e-9)),
        },
    })


def measurement_text(report: dict) -> str:
    """Fixed-format human-readable summary of a measurement report."""
    m = report["measurement"]
    lines = [
        f"{'vehicle':<22}{report['vehicle']}",
        f"{'config hash':<22}{report['config_hash']}",
        f"{'window':<22}{report['window_label']}",
        f"{'verdict':<22}{report['validation']['verdict']}",
        f"{'Q_calc':<22}{m['q_calc_ah']:10.2f} Ah",
        f"{'E_calc':<22}{m['e_calc_kwh']:10.2f} kWh",
        f"{'E_approx (U_n*Q)':<22}{m['e_approx_kwh']:10.2f} kWh (approximation)",
        f"{'SOH_Q (nominal)':<22}{m['soh_q']:10.4f}",
        f"{'SOH_E (nominal)':<22}{m['soh_e']:10.4f}",
    ]
    for name, extra in m.get("extra_references", {}).items():
        lines.append(f"{'SOH_Q (' + name + ')':<22}{extra['soh_q']:10.4f}")
        lines.append(f"{'SOH_E (' + name + ')':<22}{extra['soh_e']:10.4f}")
    lines.append(f"{'checks':<22}" + ", ".join(
        f"{f['check_id']}={'pass' if f['passed'] else 'FAIL'}"
        for f in report["validation"]["findings"]))
    return "\n".join(lines) + "\n"


def diagnose_sessions(aged: ChargingSession, reference: ChargingSession,
                      cfg: VehicleConfig, protocol: ProtocolSpec,
                      window: tuple[float, float] | None = None) -> dict:
    """Differential-voltage diagnosis of an aged session against a reference.

    Both sessions are measured first (they must cover the window); the
    result carries the degradation modes, both feature sets, and plot-ready
    curve exports. Feature absence yields absent modes, not an error.
    """
    window_used = tuple(window or protocol.window or cfg.pack.window)
    reports = {}
    curves = {}
    features = {}
    for tag, session in (("aged", aged), ("reference", reference)):
        reports[tag] = measure_session(session, cfg, protocol, window=window_used)
        cropped = _smoothed_voltage(crop_to_window(session, *window_used))
        curves[tag] = dv_curve(cropped, cfg.pack.nominal_capacity_ah)
        features[tag] = detect_features(curves[tag], cfg.template)
    modes = degradation_modes(features["aged"], features["reference"])
    return _json_safe({
        "vehicle": cfg.name,
        "config_hash": cfg.config_hash,
        "window_v": list(window_used),
        "degradation_modes": modes.to_dict(),
        "features": {tag: fs.to_dict() for tag, fs in features.items()},
        "measurements": {tag: reports[tag]["measurement"] for tag in reports},
        "verdicts": {tag: reports[tag]["validation"]["verdict"] for tag in reports},
        "dv_exports": {tag: export_dv_curve(curves[tag]) for tag in curves},
    })


def _spread(values: list[float]) -> dict:
    arr = np.asarray(values, dtype=float)
    return {
        "min": float(arr.min()), "max": float(arr.max()),
        "mean": float(arr.mean()),
        "cv": float(arr.std() / arr.mean()) if arr.mean() else float("nan"),
    }


def fleet_report(sessions: list[tuple[str, ChargingSession]], cfg: VehicleConfig,
                 protocol: ProtocolSpec,
                 window: tuple[float, float] | None = None,
                 soc_window: tuple[float, float | None] = (0.0, None)) -> dict:
    """Compare several sessions of one vehicle model.

    Every session is measured under both windowing schemes (fixed voltage
    window and BMS-SOC window); the report carries per-entry results, spread
    statistics, the terminal-voltage spread, and window-consistency
    warnings. Mixing vehicle models is an error.
    """
    if len(sessions) < 2:
        raise DomainError("fleet comparison needs at least two traces")
    vehicles = {s.metadata.get("vehicle_id", cfg.name) for _, s in sessions}
    if len(vehicles) > 1:
        raise DomainError(f"fleet traces mix vehicle models: {sorted(vehicles)}")

    window_used = tuple(window or protocol.window or cfg.pack.window)
    entries = []
    warnings = []
    for label, session in sorted(sessions, key=lambda pair: pair[0]):
        entry = {"label": label}
        smoothed = smooth(session.voltage)
        span = (float(smoothed.min()), float(smoothed.max()))
        entry["voltage_span_v"] = list(span)
        entry["terminal_voltage_v"] = span[1]
        try:
            by_voltage = measure_session(session, cfg, protocol, window=window_used)
            entry["voltage_window"] = by_voltage["measurement"]
            entry["verdict"] = by_voltage["validation"]["verdict"]
        except MeasurementRefusedError as exc:
            entry["voltage_window"] = None
            entry["verdict"] = "refused"
            warnings.append(f"{label}: {exc}")
        if session.soc is not None:
            by_soc = measure_session(session, cfg, protocol, soc_window=soc_window)
            entry["soc_window"] = by_soc["measurement"]
        else:
            entry["soc_window"] = None
        drift_tol = WINDOW_DRIFT_TOLERANCE_V_PER_CELL * cfg.pack.n_series
        if span[1] > window_used[1] + drift_tol:
            warnings.append(
                f"{label}: session reaches {span[1]:.1f} V, more than "
                f"{drift_tol:.1f} V above the configured window "
                f"({window_used[1]:.1f} V); pack limits may have changed "
                "(software update?)")
        if span[0] > window_used[0]:
            warnings.append(
                f"{label}: relaxed voltage ({span[0]:.1f} V) never settles below "
                f"the lower cut-off {window_used[0]:.1f} V")
        entries.append(entry)

    report: dict = {
        "vehicle": cfg.name,
        "config_hash": cfg.config_hash,
        "window_v": list(window_used),
        "entries": entries,
        "warnings": warnings,
    }
    volt_e = [e["voltage_window"]["e_calc_kwh"] for e in entries if e["voltage_window"]]
    soc_e = [e["soc_window"]["e_calc_kwh"] for e in entries if e["soc_window"]]
    spreads = {}
    if len(volt_e) >= 2:
        spreads["voltage_window_energy_kwh"] = _spread(volt_e)
    if len(soc_e) >= 2:
        spreads["soc_window_energy_kwh"] = _spread(soc_e)
    terminal = [e["terminal_voltage_v"] for e in entries]
    spreads["terminal_voltage_v"] = {**_spread(terminal),
                                     "spread": float(max(terminal) - min(terminal))}
    report["spreads"] = spreads
    return _json_safe(report)
