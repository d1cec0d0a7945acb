"""Capacity, energy, and state-of-health metrics over a cropped session.

Charge is the time integral of current between the cut-off voltage
crossings; energy is the time integral of instantaneous power between the
same limits. Both use the trapezoidal rule on the synchronized grid, the
natural companion of linear-interpolation resampling. SI units internally,
ampere-hours and kilowatt-hours only at the boundary.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, SignConventionError
from .traces import ChargingSession

S_PER_H = 3600.0
WS_PER_KWH = 3.6e6


@dataclass(frozen=True)
class Reference:
    """Capacity/energy reference a state of health is expressed against.

    `kind` records the provenance: 'nominal' for registration-document
    ratings, 'initial' for a begin-of-life measurement of the same vehicle.
    """

    kind: str
    capacity_ah: float
    energy_kwh: float

    def __post_init__(self):
        if self.kind not in ("nominal", "initial"):
            raise DomainError(f"reference kind must be 'nominal' or 'initial', got {self.kind!r}")
        if self.capacity_ah <= 0 or self.energy_kwh <= 0:
            raise DomainError(
                "reference capacity and energy must be positive; supply the "
                "registration-document ratings or an initial measurement"
            )


@dataclass(frozen=True)
class MeasurementResult:
    """Headline quantities of one standardized charging measurement."""

    q_calc_ah: float
    e_calc_kwh: float
    e_approx_kwh: float          # U_n * Q_calc, flagged approximation
    soh_q: float
    soh_e: float
    window_used: tuple[float, float]
    reference: Reference
    extra_references: dict = field(default_factory=dict)
    metadata: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "q_calc_ah": self.q_calc_ah,
            "e_calc_kwh": self.e_calc_kwh,
            "e_approx_kwh": self.e_approx_kwh,
            "e_approx_is_approximation": True,
            "soh_q": self.soh_q,
            "soh_e": self.soh_e,
            "window_used_v": list(self.window_used),
            "reference": {
                "kind": self.reference.kind,
                "capacity_ah": self.reference.capacity_ah,
                "energy_kwh": self.reference.energy_kwh,
            },
            "extra_references": self.extra_references,
            "metadata": self.metadata,
        }


def _check_sign(session: ChargingSession, tolerance_a: float):
    worst = float(session.current.min())
    if worst < -tolerance_a:
        raise SignConventionError(
            f"charge-segment current reaches {worst:.3f} A; charging must be "
            f"positive (tolerance {tolerance_a} A). Check the trace's sign convention."
        )


def integrate_capacity(session: ChargingSession, sign_tolerance_a: float = 0.5) -> float:
    """Charge in ampere-hours transferred over the (already cropped) session."""
    if len(session) < 2:
        raise DomainError("session too short to integrate")
    _check_sign(session, sign_tolerance_a)
    return float(np.trapezoid(session.current, session.time) / S_PER_H)


def integrate_energy(session: ChargingSession, sign_tolerance_a: float = 0.5) -> float:
    """Energy in kilowatt-hours transferred over the (already cropped) session."""
    if len(session) < 2:
        raise DomainError("session too short to integrate")
    _check_sign(session, sign_tolerance_a)
    return float(np.trapezoid(session.power, session.time) / WS_PER_KWH)


def approx_energy(q_calc_ah: float, nominal_voltage_v: float) -> float:
    """Nominal-voltage energy approximation U_n * Q_calc in kilowatt-hours.

    Only an approximation: exact when the voltage is flat over the window,
    increasingly wrong the steeper the charge curve.
    """
    if nominal_voltage_v <= 0:
        raise DomainError(f"nominal voltage must be positive, got {nominal_voltage_v}")
    return q_calc_ah * nominal_voltage_v / 1000.0


def soh(q_calc_ah: float, e_calc_kwh: float, reference: Reference) -> tuple[float, float]:
    """Capacity- and energy-based state of health against `reference`."""
    return q_calc_ah / reference.capacity_ah, e_calc_kwh / reference.energy_kwh


def measure(session: ChargingSession, reference: Reference, nominal_voltage_v: float,
            window_used: tuple[float, float],
            extra_references: dict[str, Reference] | None = None) -> MeasurementResult:
    """Bundle the integration results and SOH ratios for one cropped session."""
    q_calc = integrate_capacity(session)
    e_calc = integrate_energy(session)
    soh_q, soh_e = soh(q_calc, e_calc, reference)
    extras = {}
    for name, ref in (extra_references or {}).items():
        sq, se = soh(q_calc, e_calc, ref)
        extras[name] = {"kind": ref.kind, "soh_q": sq, "soh_e": se,
                        "capacity_ah": ref.capacity_ah, "energy_kwh": ref.energy_kwh}
    return MeasurementResult(
        q_calc_ah=q_calc,
        e_calc_kwh=e_calc,
        e_approx_kwh=approx_energy(q_calc, nominal_voltage_v),
        soh_q=soh_q,
        soh_e=soh_e,
        window_used=tuple(window_used),
        reference=reference,
        extra_references=extras,
    )
