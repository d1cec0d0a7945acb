"""Vehicle and protocol configuration files.

One YAML file per vehicle model carries the pack ratings, topology, voltage
window, synthetic cell parameters, and sensor characteristics. Bundled
configs ship with the package; the ``PACKSOH_CONFIG_DIR`` environment
variable points name lookups at a directory of custom files first.
"""

from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import yaml

from .dva import ChemistryTemplate, get_template, template_from_mapping
from .errors import InvalidSpecError
from .halfcell import electrode_curve
from .pack import CellModel, PackSpec, SensorSpec
from .protocol import ProtocolSpec

CONFIG_DIR_ENV = "PACKSOH_CONFIG_DIR"


@dataclass(frozen=True)
class VehicleConfig:
    """A vehicle's pack spec plus the simulation and sensor defaults."""

    name: str
    pack: PackSpec
    sensors: SensorSpec
    template: ChemistryTemplate
    power_w: float
    rest_s: float
    ambient_temp_c: float
    source: dict

    @property
    def config_hash(self) -> str:
        canonical = json.dumps(self.source, sort_keys=True, default=str)
        return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def _data_root():
    return resources.files("packsoh.data")


def list_vehicles() -> list[str]:
    """Names resolvable by ``load_vehicle``: custom-dir configs plus bundled."""
    names = set()
    custom = os.environ.get(CONFIG_DIR_ENV)
    if custom:
        names.update(p.stem for p in Path(custom).glob("*.yaml"))
    names.update(p.name[:-5] for p in _data_root().iterdir()
                 if p.name.endswith(".yaml") and p.name != "protocol.yaml")
    return sorted(names)


def _resolve(name_or_path: str) -> str:
    path = Path(name_or_path)
    if path.suffix in (".yaml", ".yml") or path.exists():
        return path.read_text()
    custom = os.environ.get(CONFIG_DIR_ENV)
    if custom:
        candidate = Path(custom) / f"{name_or_path}.yaml"
        if candidate.exists():
            return candidate.read_text()
    bundled = _data_root() / f"{name_or_path}.yaml"
    if bundled.is_file():
        return bundled.read_text()
    raise InvalidSpecError(
        f"unknown vehicle config {name_or_path!r}; available: {list_vehicles()} "
        f"(set {CONFIG_DIR_ENV} to add custom configs)"
    )


def _require(mapping: dict, key: str, context: str):
    if key not in mapping:
        raise InvalidSpecError(f"config {context!r} lacks required key {key!r}")
    return mapping[key]


def load_vehicle_text(text: str) -> VehicleConfig:
    """Parse a vehicle config from YAML text."""
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise InvalidSpecError("vehicle config must be a mapping")
    name = _require(data, "vehicle", "vehicle")
    pack_d = _require(data, "pack", name)
    cell_d = _require(data, "cell", name)
    sensors_d = data.get("sensors", {})
    sim_d = data.get("simulation", {})

    cell = CellModel(
        pe_curve=electrode_curve(_require(cell_d, "positive_electrode", name)),
        ne_curve=electrode_curve(_require(cell_d, "negative_electrode", name)),
        q_pe=float(_require(cell_d, "q_pe_ah", name)),
        q_ne=float(_require(cell_d, "q_ne_ah", name)),
        q_b=float(_require(cell_d, "q_b_ah", name)),
        r_internal=float(cell_d.get("r_internal_ohm", 0.001)),
    )
    limits = pack_d.get("cell_voltage_limits_v")
    pack = PackSpec(
        n_series=int(_require(pack_d, "n_series", name)),
        n_parallel=int(_require(pack_d, "n_parallel", name)),
        cell=cell,
        cell_variation=float(pack_d.get("cell_variation", 0.0)),
        nominal_capacity_ah=float(_require(pack_d, "nominal_capacity_ah", name)),
        nominal_energy_kwh=float(_require(pack_d, "nominal_energy_kwh", name)),
        nominal_voltage_v=float(_require(pack_d, "nominal_voltage_v", name)),
        window=tuple(float(v) for v in _require(pack_d, "window_v", name)),
        cell_voltage_limits=None if limits is None else tuple(float(v) for v in limits),
        vehicle_id=str(name),
        chemistry=str(data.get("chemistry", "nmc_graphite")),
    )
    sensors = SensorSpec(
        voltage_resolution=float(sensors_d.get("voltage_resolution_v", 0.25)),
        current_resolution=float(sensors_d.get("current_resolution_a", 0.1)),
        soc_resolution=float(sensors_d.get("soc_resolution_pct", 0.4)),
        sample_rate=tuple(float(v) for v in sensors_d.get("sample_rate_hz", (1.0, 1.0))),
    )
    if "dva_template" in data:
        template = template_from_mapping(data["dva_template"])
    else:
        template = get_template(pack.chemistry)
    return VehicleConfig(
        name=str(name),
        pack=pack,
        sensors=sensors,
        template=template,
        power_w=float(sim_d.get("power_w", pack.nominal_energy_kwh * 1000.0 / 30.0)),
        rest_s=float(sim_d.get("rest_s", 1800.0)),
        ambient_temp_c=float(sim_d.get("ambient_temp_c", 20.0)),
        source=data,
    )


def load_vehicle(name_or_path: str) -> VehicleConfig:
    """Load a vehicle config by bundled name, custom-dir name, or file path."""
    return load_vehicle_text(_resolve(name_or_path))


def load_protocol(path: str | None = None) -> ProtocolSpec:
    """Load a protocol spec; the bundled default when no path is given."""
    if path is None:
        text = (_data_root() / "protocol.yaml").read_text()
    else:
        text = Path(path).read_text()
    return load_protocol_text(text)


def load_protocol_text(text: str) -> ProtocolSpec:
    data = yaml.safe_load(text)
    if not isinstance(data, dict) or "protocol" not in data:
        raise InvalidSpecError("protocol config must contain a 'protocol' mapping")
    p = data["protocol"]
    window = p.get("window_v")
    return ProtocolSpec(
        min_duration_h=float(p.get("min_duration_h", 15.0)),
        temp_center_c=float(p.get("temp_center_c", 20.0)),
        temp_tolerance_c=float(p.get("temp_tolerance_c", 5.0)),
        settle_rate_v_per_s_per_cell=float(p.get("settle_rate_v_per_s_per_cell", 0.001)),
        rest_min_minutes=float(p.get("rest_min_minutes", 30.0)),
        settle_confirm_span_s=float(p.get("settle_confirm_span_s", 60.0)),
        cp_relative_band=float(p.get("cp_relative_band", 0.05)),
        window=None if window is None else tuple(float(v) for v in window),
    )
