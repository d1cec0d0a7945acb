"""Pydantic request and response models of the diagnostics service."""

from __future__ import annotations

from pydantic import BaseModel, Field


class VehicleInfo(BaseModel):
    name: str
    chemistry: str
    n_series: int
    n_parallel: int
    nominal_capacity_ah: float
    nominal_energy_kwh: float
    nominal_voltage_v: float
    window_v: tuple[float, float]


class SimulateRequest(BaseModel):
    vehicle: str | None = None
    config_yaml: str | None = None        # inline config instead of a name
    seed: int = 0
    sensor_seed: int | None = None
    power_w: float | None = None
    ambient_temp_c: float | None = None
    lam_ne: float = 0.0
    lam_pe: float = 0.0
    lli: float = 0.0
    defective_cells: list[tuple[int, float]] = Field(default_factory=list)
    unbalanced: bool = False
    cell_variation: float | None = None
    ideal_sensors: bool = False
    include_cell_voltages: bool = False
    format: str = "csv"
    label: str | None = None


class SimulateResponse(BaseModel):
    vehicle: str
    format: str
    trace: str
    ground_truth: dict


class AnalysisOptions(BaseModel):
    """Shared options of the validate/measure/diagnose/fleet endpoints."""

    vehicle: str | None = None
    config_yaml: str | None = None
    protocol_yaml: str | None = None
    format: str = "csv"
    grid_step_s: float = 1.0
    window_v: tuple[float, float] | None = None
    soc_window: tuple[float, float | None] | None = None
    initial_reference: tuple[float, float] | None = None   # (Q_0 Ah, E_0 kWh)
    disabled_checks: list[str] = Field(default_factory=list)


class ValidationResponse(BaseModel):
    vehicle: str
    verdict: str
    findings: list[dict]


class MeasureResponse(BaseModel):
    refused: bool = False
    refusal_reason: str | None = None
    report: dict | None = None
    report_text: str | None = None


class DiagnoseResponse(BaseModel):
    report: dict


class FleetResponse(BaseModel):
    report: dict
