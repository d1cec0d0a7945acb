"""HTTP surface of the pack diagnostics service.

Traces are uploaded as files; analysis options travel as a JSON-encoded
form field next to them. Refused measurements are regular responses (the
refusal is a result), while unusable inputs map to 4xx errors.
"""

from __future__ import annotations

import json
from dataclasses import replace

from fastapi import FastAPI, File, Form, HTTPException, UploadFile
from pydantic import ValidationError

from .. import __version__
from ..configs import VehicleConfig, list_vehicles, load_protocol, load_protocol_text, load_vehicle, load_vehicle_text
from ..errors import DomainError, MeasurementRefusedError, PackSohError
from ..pipeline import (
    Scenario,
    diagnose_sessions,
    fleet_report,
    load_session,
    measure_session,
    measurement_text,
    simulate_trace,
)
from ..protocol import validate_session
from .schemas import (
    AnalysisOptions,
    DiagnoseResponse,
    FleetResponse,
    MeasureResponse,
    SimulateRequest,
    SimulateResponse,
    ValidationResponse,
    VehicleInfo,
)


def _bad_request(message: str) -> HTTPException:
    return HTTPException(status_code=422, detail=message)


def _resolve_vehicle(vehicle: str | None, config_yaml: str | None) -> VehicleConfig:
    try:
        if config_yaml:
            return load_vehicle_text(config_yaml)
        if vehicle:
            return load_vehicle(vehicle)
    except PackSohError as exc:
        raise _bad_request(str(exc)) from exc
    raise _bad_request("provide either 'vehicle' (config name) or 'config_yaml'")


def _parse_options(options: str) -> AnalysisOptions:
    try:
        return AnalysisOptions.model_validate(json.loads(options or "{}"))
    except (json.JSONDecodeError, ValidationError) as exc:
        raise _bad_request(f"invalid options: {exc}") from exc


def _protocol(opts: AnalysisOptions):
    if opts.protocol_yaml:
        return load_protocol_text(opts.protocol_yaml)
    return load_protocol()


async def _read_session(upload: UploadFile, cfg: VehicleConfig, opts: AnalysisOptions):
    payload = await upload.read()
    try:
        return load_session(payload, cfg, fmt=opts.format, grid_step_s=opts.grid_step_s)
    except PackSohError as exc:
        raise _bad_request(f"{upload.filename}: {exc}") from exc


def create_app() -> FastAPI:
    app = FastAPI(title="packsoh diagnostics service", version=__version__)

    @app.get("/health")
    def health() -> dict:
        return {"status": "ok", "version": __version__}

    @app.get("/vehicles", response_model=list[VehicleInfo])
    def vehicles() -> list[VehicleInfo]:
        out = []
        for name in list_vehicles():
            cfg = load_vehicle(name)
            out.append(VehicleInfo(
                name=cfg.name, chemistry=cfg.pack.chemistry,
                n_series=cfg.pack.n_series, n_parallel=cfg.pack.n_parallel,
                nominal_capacity_ah=cfg.pack.nominal_capacity_ah,
                nominal_energy_kwh=cfg.pack.nominal_energy_kwh,
                nominal_voltage_v=cfg.pack.nominal_voltage_v,
                window_v=cfg.pack.window,
            ))
        return out

    @app.post("/simulate", response_model=SimulateResponse)
    def simulate(request: SimulateRequest) -> SimulateResponse:
        cfg = _resolve_vehicle(request.vehicle, request.config_yaml)
        scenario = Scenario(
            lam_ne=request.lam_ne, lam_pe=request.lam_pe, lli=request.lli,
            defective_cells=tuple(tuple(d) for d in request.defective_cells),
            unbalanced=request.unbalanced, cell_variation=request.cell_variation,
        )
        try:
            trace, ground_truth = simulate_trace(
                cfg, seed=request.seed, scenario=scenario,
                sensor_seed=request.sensor_seed, power_w=request.power_w,
                ambient_temp_c=request.ambient_temp_c,
                ideal_sensors=request.ideal_sensors,
                include_cell_voltages=request.include_cell_voltages,
                fmt=request.format, label=request.label,
            )
        except PackSohError as exc:
            raise _bad_request(str(exc)) from exc
        return SimulateResponse(vehicle=cfg.name, format=request.format,
                                trace=trace, ground_truth=ground_truth)

    @app.post("/validate", response_model=ValidationResponse)
    async def validate(trace: UploadFile = File(...), options: str = Form("{}")):
        opts = _parse_options(options)
        cfg = _resolve_vehicle(opts.vehicle, opts.config_yaml)
        session = await _read_session(trace, cfg, opts)
        protocol = _protocol(opts)
        if opts.window_v is not None:
            protocol = replace(protocol, window=tuple(opts.window_v))
        report = validate_session(session, protocol, cfg.pack,
                                  disabled_checks=frozenset(opts.disabled_checks))
        return ValidationResponse(vehicle=cfg.name, verdict=report.verdict,
                                  findings=[f.to_dict() for f in report.findings])

    @app.post("/measure", response_model=MeasureResponse)
    async def measure(trace: UploadFile = File(...), options: str = Form("{}")):
        opts = _parse_options(options)
        cfg = _resolve_vehicle(opts.vehicle, opts.config_yaml)
        session = await _read_session(trace, cfg, opts)
        try:
            report = measure_session(
                session, cfg, _protocol(opts), window=opts.window_v,
                soc_window=opts.soc_window, initial_reference=opts.initial_reference,
                disabled_checks=frozenset(opts.disabled_checks))
        except MeasurementRefusedError as exc:
            return MeasureResponse(refused=True, refusal_reason=str(exc))
        return MeasureResponse(report=report, report_text=measurement_text(report))

    @app.post("/diagnose", response_model=DiagnoseResponse)
    async def diagnose(aged: UploadFile = File(...), reference: UploadFile = File(...),
                       options: str = Form("{}")):
        opts = _parse_options(options)
        cfg = _resolve_vehicle(opts.vehicle, opts.config_yaml)
        aged_session = await _read_session(aged, cfg, opts)
        ref_session = await _read_session(reference, cfg, opts)
        try:
            report = diagnose_sessions(aged_session, ref_session, cfg,
                                       _protocol(opts), window=opts.window_v)
        except (MeasurementRefusedError, PackSohError) as exc:
            raise _bad_request(str(exc)) from exc
        return DiagnoseResponse(report=report)

    @app.post("/fleet", response_model=FleetResponse)
    async def fleet(traces: list[UploadFile] = File(...), options: str = Form("{}")):
        opts = _parse_options(options)
        cfg = _resolve_vehicle(opts.vehicle, opts.config_yaml)
        sessions = []
        for upload in traces:
            session = await _read_session(upload, cfg, opts)
            label = session.metadata.get("label") or upload.filename or f"trace{len(sessions)}"
            sessions.append((str(label), session))
        try:
            report = fleet_report(sessions, cfg, _protocol(opts),
                                  window=opts.window_v,
                                  soc_window=opts.soc_window or (0.0, None))
        except DomainError as exc:
            raise _bad_request(str(exc)) from exc
        return FleetResponse(report=report)

    return app
