import pytest

from packsoh.configs import load_vehicle
from packsoh.halfcell import electrode_curve
from packsoh.pack import CellModel, PackSpec, SensorSpec, build_pack
from packsoh.processing import smooth
from packsoh.simulate import simulate_charge


def make_mini_spec(**overrides) -> PackSpec:
    """Small 8s1p pack mirroring the ID.3 cell ratios; fast to simulate."""
    cell = overrides.pop("cell", None) or CellModel(
        pe_curve=electrode_curve("layered_oxide"),
        ne_curve=electrode_curve("graphite"),
        q_pe=2.75, q_ne=2.95, q_b=2.575, r_internal=0.002,
    )
    base = dict(
        n_series=8, n_parallel=1, cell=cell, cell_variation=0.0,
        nominal_capacity_ah=1.969, nominal_energy_kwh=0.06, nominal_voltage_v=30.0,
        window=(26.67, 33.33), cell_voltage_limits=(3.2433, 4.2117),
        vehicle_id="mini",
    )
    base.update(overrides)
    return PackSpec(**base)


MINI_POWER_W = 40.0


def simulate_mini(spec=None, seed=0, power_w=MINI_POWER_W, **kwargs):
    model = build_pack(spec or make_mini_spec(), None, seed)
    kwargs.setdefault("rest_s", 300.0)
    kwargs.setdefault("grid_points", 8000)
    return simulate_charge(model, power_w, seed=seed, **kwargs)


def with_smoothed_voltage(session):
    from dataclasses import replace
    sm = smooth(session.voltage)
    return replace(session, voltage=sm, power=sm * session.current)


@pytest.fixture(scope="session")
def mini_spec():
    return make_mini_spec()


@pytest.fixture(scope="session")
def mini_model(mini_spec):
    return build_pack(mini_spec, None, 0)


@pytest.fixture(scope="session")
def mini_session(mini_model):
    return simulate_charge(mini_model, MINI_POWER_W, seed=1, rest_s=300.0, grid_points=8000)


MINI_CONFIG_YAML = """\
vehicle: mini
chemistry: nmc_graphite
pack:
  n_series: 8
  n_parallel: 1
  nominal_capacity_ah: 1.969
  nominal_energy_kwh: 0.06
  nominal_voltage_v: 30.0
  window_v: [26.67, 33.33]
  cell_voltage_limits_v: [3.2433, 4.2117]
  cell_variation: 0.004
cell:
  positive_electrode: layered_oxide
  negative_electrode: graphite
  q_pe_ah: 2.75
  q_ne_ah: 2.95
  q_b_ah: 2.575
  r_internal_ohm: 0.002
sensors:
  voltage_resolution_v: 0.02
  current_resolution_a: 0.01
  soc_resolution_pct: 0.4
  sample_rate_hz: [1.0, 1.0]
simulation:
  power_w: 40.0
  rest_s: 300.0
  ambient_temp_c: 20.0
"""


@pytest.fixture(scope="session")
def mini_cfg():
    from packsoh.configs import load_vehicle_text
    return load_vehicle_text(MINI_CONFIG_YAML)


@pytest.fixture(scope="session")
def id3_cfg():
    return load_vehicle("id3")


@pytest.fixture(scope="session")
def lfp_cfg():
    return load_vehicle("model3_lfp")


@pytest.fixture(scope="session")
def vw_sensor():
    return SensorSpec(voltage_resolution=0.25, current_resolution=0.1,
                      soc_resolution=0.4, sample_rate=(0.1, 1.0))
