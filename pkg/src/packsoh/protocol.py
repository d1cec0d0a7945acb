"""Measurement protocol: preconditions and compliance checks for a session.

The protocol bounds the charging power through the pack's net energy and a
minimum duration, requires room-temperature conditions before the charge,
a settled rest voltage, full coverage of the cut-off window, and a
constant-power charge character. A session that fails a check is still
measurable; the verdict travels with the result.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DomainError, InsufficientDataError, InvalidSpecError, WindowNotCoveredError
from .pack import PackSpec
from .processing import charge_start_index, crop_to_window, smooth
from .traces import ChargingSession

CHECK_MAX_POWER = "max_power"
CHECK_PRE_CHARGE_TEMPERATURE = "pre_charge_temperature"
CHECK_WINDOW_COVERAGE = "window_coverage"
CHECK_REST_SETTLED = "rest_settled"
CHECK_CONSTANT_POWER = "constant_power"
ALL_CHECKS = (CHECK_MAX_POWER, CHECK_PRE_CHARGE_TEMPERATURE, CHECK_WINDOW_COVERAGE,
              CHECK_REST_SETTLED, CHECK_CONSTANT_POWER)


@dataclass(frozen=True)
class ProtocolSpec:
    """Tunable limits of the standardized charging measurement."""

    min_duration_h: float = 15.0
    temp_center_c: float = 20.0
    temp_tolerance_c: float = 5.0
    settle_rate_v_per_s_per_cell: float = 0.001
    rest_min_minutes: float = 30.0
    settle_confirm_span_s: float = 60.0
    cp_relative_band: float = 0.05
    window: tuple[float, float] | None = None   # None: use the pack's window

    def __post_init__(self):
        if self.min_duration_h <= 0:
            raise InvalidSpecError("min_duration_h must be positive")
        if self.temp_tolerance_c <= 0:
            raise InvalidSpecError("temp_tolerance_c must be positive")
        if self.window is not None and not self.window[0] < self.window[1]:
            raise InvalidSpecError("protocol window must satisfy U_low < U_high")


@dataclass(frozen=True)
class Finding:
    """Outcome of one compliance check."""

    check_id: str
    passed: bool
    measured: float | None
    limit: float | None
    detail: str = ""

    def to_dict(self) -> dict:
        return {"check_id": self.check_id, "passed": self.passed,
                "measured": self.measured, "limit": self.limit, "detail": self.detail}


@dataclass(frozen=True)
class ValidationReport:
    findings: tuple[Finding, ...]

    @property
    def verdict(self) -> str:
        return "compliant" if all(f.passed for f in self.findings) else "non_compliant"

    def finding(self, check_id: str) -> Finding:
        for f in self.findings:
            if f.check_id == check_id:
                return f
        raise KeyError(check_id)

    def to_dict(self) -> dict:
        return {"verdict": self.verdict,
                "findings": [f.to_dict() for f in self.findings]}


def max_charge_power(net_energy_kwh: float, duration_h: float) -> float:
    """Upper charging-power bound in watts for a given measurement duration.

    The bound is the pack's net energy divided by the minimum duration; any
    higher power would finish the full charge faster than the measurement
    requires and drive up overpotentials.
    """
    if net_energy_kwh <= 0 or duration_h <= 0:
        raise DomainError(
            f"net energy and duration must be positive, got {net_energy_kwh} kWh, {duration_h} h"
        )
    return net_energy_kwh * 1000.0 / duration_h


def estimate_resolution(values: np.ndarray) -> float:
    """Quantization step estimated from the sampled data itself."""
    unique = np.unique(np.asarray(values, dtype=float))
    if unique.size < 2:
        return 0.0
    steps = np.diff(unique)
    steps = steps[steps > 1e-12]
    return float(steps.min()) if steps.size else 0.0


def check_rest_settled(times, voltages, n_series: int, voltage_resolution: float,
                       settle_rate_v_per_s_per_cell: float = 0.001,
                       confirm_span_s: float = 60.0) -> tuple[bool, float]:
    """Locate the instant a rest voltage counts as settled.

    Settled means the rate of change stays below the per-cell settle rate
    times the series count, or the sample-to-sample variation stays below
    the voltage sensor's resolution, sustained over `confirm_span_s`.
    Returns ``(settled, settle_time)`` with the time relative to the trace
    start; ``(False, nan)`` when the criterion is never sustained.
    """
    t = np.asarray(times, dtype=float)
    v = np.asarray(voltages, dtype=float)
    if t.size != v.size or t.size < 2:
        raise InsufficientDataError("rest trace needs at least two samples")
    if t[-1] - t[0] < confirm_span_s:
        raise InsufficientDataError(
            f"rest trace spans {t[-1] - t[0]:.1f} s, shorter than the "
            f"{confirm_span_s:.0f} s confirmation span"
        )
    dt = np.diff(t)
    if np.any(dt <= 0):
        raise DomainError("rest trace timestamps must increase strictly")
    dv = np.diff(v)
    threshold = settle_rate_v_per_s_per_cell * n_series
    ok = (np.abs(dv / dt) < threshold) | (np.abs(dv) < voltage_resolution)

    # ok[k] covers the interval [t[k], t[k+1]); find the first k from which
    # the criterion holds through a full confirmation span.
    n_int = ok.size
    run_end = np.empty(n_int, dtype=int)
    nxt = n_int
    for k in range(n_int - 1, -1, -1):
        if not ok[k]:
            nxt = k
        run_end[k] = nxt
    for k in range(n_int):
        if not ok[k]:
            continue
        covered_until = t[run_end[k]]
        if covered_until - t[k] >= confirm_span_s:
            return True, float(t[k] - t[0])
    return False, float("nan")


def _finding_unverifiable(check_id: str, reason: str) -> Finding:
    return Finding(check_id, False, None, None, f"unverifiable: {reason}")


def validate_session(session: ChargingSession, protocol: ProtocolSpec, spec: PackSpec,
                     disabled_checks: frozenset[str] | set[str] = frozenset(),
                     ) -> ValidationReport:
    """Run every protocol check against a synchronized session.

    Missing channels make the affected check unverifiable (and the verdict
    non-compliant) unless the check is in `disabled_checks`. Checks operate
    on relative time, so the verdict is invariant under time shifts.
    """
    window = protocol.window or spec.window
    u_low, u_high = window
    findings: list[Finding] = []
    start = charge_start_index(session)
    smoothed_v = smooth(session.voltage)

    def add(f: Finding):
        if f.check_id not in disabled_checks:
            findings.append(f)

    # Mean charging power over the cut-off window against the duration bound.
    p_max = max_charge_power(spec.nominal_energy_kwh, protocol.min_duration_h)
    try:
        cropped = crop_to_window(session, u_low, u_high)
        span = cropped.duration_s
        mean_power = float(np.trapezoid(cropped.power, cropped.time)) / span if span > 0 else 0.0
        add(Finding(CHECK_MAX_POWER, mean_power <= p_max, mean_power, p_max,
                    "mean power over the cut-off window"))
        window_covered = True
        window_detail = "session covers the cut-off window"
    except WindowNotCoveredError as exc:
        if start < len(session):
            seg = session.sliced(start, len(session))
            span = seg.duration_s
            mean_power = float(np.trapezoid(seg.power, seg.time)) / span if span > 0 else 0.0
            add(Finding(CHECK_MAX_POWER, mean_power <= p_max, mean_power, p_max,
                        "mean power over the charge segment (window not covered)"))
        else:
            add(_finding_unverifiable(CHECK_MAX_POWER, "no charge segment found"))
        window_covered = False
        window_detail = str(exc)

    # Window coverage: settled below the lower cut-off, charged beyond the upper.
    settles_below = bool(smoothed_v.min() <= u_low)
    add(Finding(
        CHECK_WINDOW_COVERAGE, window_covered and settles_below,
        float(smoothed_v.max()), u_high,
        window_detail if not window_covered else (
            "session covers the cut-off window" if settles_below
            else f"relaxed voltage never settles below the lower cut-off {u_low} V"),
    ))

    # All pre-charge temperatures at room temperature.
    if session.temperatures is None:
        add(_finding_unverifiable(CHECK_PRE_CHARGE_TEMPERATURE, "no temperature channel"))
    elif start == 0:
        add(_finding_unverifiable(CHECK_PRE_CHARGE_TEMPERATURE, "no pre-charge segment"))
    else:
        pre = session.temperatures[:, :start]
        worst = float(pre.flat[np.abs(pre - protocol.temp_center_c).argmax()])
        ok = bool(np.all(np.abs(pre - protocol.temp_center_c) <= protocol.temp_tolerance_c))
        add(Finding(CHECK_PRE_CHARGE_TEMPERATURE, ok, worst, protocol.temp_tolerance_c,
                    f"pre-charge temperatures against {protocol.temp_center_c} "
                    f"+/- {protocol.temp_tolerance_c} C"))

    # Rest voltage settled before the charge begins.
    if start == 0:
        add(_finding_unverifiable(CHECK_REST_SETTLED, "no pre-charge rest segment"))
    else:
        resolution = estimate_resolution(session.voltage)
        try:
            settled, settle_time = check_rest_settled(
                session.time[:start], session.voltage[:start], spec.n_series,
                resolution,
                settle_rate_v_per_s_per_cell=protocol.settle_rate_v_per_s_per_cell,
                confirm_span_s=protocol.settle_confirm_span_s)
            add(Finding(CHECK_REST_SETTLED, settled, settle_time,
                        float(session.time[start - 1] - session.time[0]),
                        "first settled instant within the rest segment"))
        except InsufficientDataError as exc:
            add(_finding_unverifiable(CHECK_REST_SETTLED, str(exc)))

    # Constant-power character over the covered window.
    if start >= len(session) - 1:
        add(_finding_unverifiable(CHECK_CONSTANT_POWER, "no charge segment found"))
    else:
        if window_covered:
            seg = crop_to_window(session, u_low, u_high)
        else:
            seg = session.sliced(start, len(session))
        p_smooth = smooth(seg.power)
        p_ref = float(np.median(p_smooth))
        deviation = float(np.max(np.abs(p_smooth - p_ref)) / p_ref) if p_ref > 0 else np.inf
        add(Finding(CHECK_CONSTANT_POWER, deviation <= protocol.cp_relative_band,
                    deviation, protocol.cp_relative_band,
                    "max relative deviation of smoothed power from its median"))

    return ValidationReport(findings=tuple(findings))
