import json

import pytest

from packsoh.configs import load_protocol
from packsoh.errors import DomainError, MeasurementRefusedError
from packsoh.pipeline import (
    Scenario,
    diagnose_sessions,
    fleet_report,
    load_session,
    measure_session,
    measurement_text,
    simulate_trace,
)


@pytest.fixture(scope="session")
def protocol():
    return load_protocol()


def make_session(mini_cfg, seed=0, scenario=None, **kwargs):
    text, _ = simulate_trace(mini_cfg, seed=seed, scenario=scenario, **kwargs)
    return load_session(text, mini_cfg)


class TestSimulateTrace:
    def test_deterministic(self, mini_cfg):
        a, gt_a = simulate_trace(mini_cfg, seed=3)
        b, gt_b = simulate_trace(mini_cfg, seed=3)
        assert a == b
        assert gt_a == gt_b

    def test_sidecar_records_injected_state(self, mini_cfg):
        scenario = Scenario(lam_ne=0.03, lli=0.05, defective_cells=((2, 0.9),))
        _, gt = simulate_trace(mini_cfg, seed=1, scenario=scenario)
        assert gt["degradation"] == {"lam_ne": 0.03, "lam_pe": 0.0, "lli": 0.05}
        assert gt["defective_cells"] == [[2, 0.9]]
        assert gt["config_hash"] == mini_cfg.config_hash
        json.dumps(gt)  # sidecar must be strictly JSON-serializable

    def test_jsonl_format(self, mini_cfg):
        text, _ = simulate_trace(mini_cfg, seed=1, fmt="jsonl")
        session = load_session(text, mini_cfg, fmt="jsonl")
        assert len(session) > 100

    def test_label_embedded(self, mini_cfg):
        text, _ = simulate_trace(mini_cfg, seed=1, label="40000km")
        session = load_session(text, mini_cfg)
        assert session.metadata["label"] == "40000km"


class TestMeasureSession:
    def test_report_shape(self, mini_cfg, protocol):
        report = measure_session(make_session(mini_cfg), mini_cfg, protocol)
        m = report["measurement"]
        assert m["q_calc_ah"] == pytest.approx(
            mini_cfg.pack.nominal_capacity_ah, rel=0.02)
        assert m["soh_q"] == pytest.approx(1.0, abs=0.02)
        assert report["validation"]["verdict"] in ("compliant", "non_compliant")
        assert report["config_hash"] == mini_cfg.config_hash
        text = measurement_text(report)
        assert "SOH_Q" in text and "verdict" in text

    def test_initial_reference_included(self, mini_cfg, protocol):
        report = measure_session(make_session(mini_cfg), mini_cfg, protocol,
                                 initial_reference=(1.9, 0.058))
        assert "initial" in report["measurement"]["extra_references"]

    def test_soc_window_measurement(self, mini_cfg, protocol):
        by_soc = measure_session(make_session(mini_cfg), mini_cfg, protocol,
                                 soc_window=(0.0, None))
        by_volt = measure_session(make_session(mini_cfg), mini_cfg, protocol)
        assert by_soc["measurement"]["q_calc_ah"] >= by_volt["measurement"]["q_calc_ah"]

    def test_defective_pack_refused_with_diagnostic(self, mini_cfg, protocol):
        scenario = Scenario(defective_cells=((3, 0.8),))
        session = make_session(mini_cfg, seed=2, scenario=scenario)
        with pytest.raises(MeasurementRefusedError) as err:
            measure_session(session, mini_cfg, protocol)
        message = str(err.value)
        assert "refused" in message
        assert "upper cut-off" in message
        assert "defective" in message

    def test_missing_temperature_still_measured(self, mini_cfg, protocol):
        text, _ = simulate_trace(mini_cfg, seed=1)
        # drop the temperature column to mimic a vehicle without that channel
        raw_lines = []
        for line in text.splitlines():
            if not line or line.startswith("#"):
                raw_lines.append(line)
            else:
                raw_lines.append(",".join(line.split(",")[:-1]))
        session = load_session("\n".join(raw_lines) + "\n", mini_cfg)
        report = measure_session(session, mini_cfg, protocol)
        assert report["validation"]["verdict"] == "non_compliant"
        assert report["measurement"]["q_calc_ah"] > 0


class TestFullScaleVehicle:
    def test_id3_default_session_is_compliant(self, id3_cfg, protocol):
        # the shipped config simulates at ~1.9 kW from a 20 C rest, which
        # must satisfy every protocol check over the 360-450 V window
        report = measure_session(make_session(id3_cfg), id3_cfg, protocol)
        assert report["validation"]["verdict"] == "compliant", report["validation"]
        assert report["measurement"]["soh_q"] == pytest.approx(1.0, abs=0.02)
        assert report["session"]["duration_h"] > 15.0


class TestDiagnoseSessions:
    def test_round_trip(self, mini_cfg, protocol):
        ref = make_session(mini_cfg, seed=4)
        aged = make_session(mini_cfg, seed=4,
                            scenario=Scenario(lam_ne=0.03, lam_pe=0.02, lli=0.05))
        report = diagnose_sessions(aged, ref, mini_cfg, protocol)
        modes = report["degradation_modes"]
        assert modes["lli"] == pytest.approx(0.05, abs=0.012)
        assert modes["lam_ne"] == pytest.approx(0.03, abs=0.012)
        assert report["dv_exports"]["aged"].startswith("#")
        json.dumps(report)

    def test_identical_traces_zero_modes(self, mini_cfg, protocol):
        ref = make_session(mini_cfg, seed=5)
        report = diagnose_sessions(ref, ref, mini_cfg, protocol)
        modes = report["degradation_modes"]
        assert modes["lam_ne"] == pytest.approx(0.0, abs=1e-6)
        assert modes["lli"] == pytest.approx(0.0, abs=1e-6)


class TestFleetReport:
    def _sessions(self, mini_cfg, n=3, **kwargs):
        out = []
        for seed in range(n):
            text, _ = simulate_trace(mini_cfg, seed=seed, label=f"car{seed}", **kwargs)
            out.append((f"car{seed}", load_session(text, mini_cfg)))
        return out

    def test_spreads_and_ordering(self, mini_cfg, protocol):
        report = fleet_report(self._sessions(mini_cfg), mini_cfg, protocol)
        assert [e["label"] for e in report["entries"]] == ["car0", "car1", "car2"]
        assert "voltage_window_energy_kwh" in report["spreads"]
        assert "soc_window_energy_kwh" in report["spreads"]
        assert report["spreads"]["terminal_voltage_v"]["spread"] >= 0.0
        json.dumps(report)

    def test_single_trace_rejected(self, mini_cfg, protocol):
        with pytest.raises(DomainError, match="at least two"):
            fleet_report(self._sessions(mini_cfg, n=1), mini_cfg, protocol)

    def test_mixed_vehicles_rejected(self, mini_cfg, protocol):
        sessions = self._sessions(mini_cfg, n=2)
        sessions[1][1].metadata["vehicle_id"] = "other_model"
        with pytest.raises(DomainError, match="mix"):
            fleet_report(sessions, mini_cfg, protocol)

    def test_window_drift_warning(self, mini_cfg, protocol):
        # a software update widened the pack's usable window: sessions reach
        # far above the configured upper cut-off
        from dataclasses import replace
        from packsoh.configs import VehicleConfig
        widened_pack = replace(mini_cfg.pack,
                               cell_voltage_limits=(3.2433, 4.2117 + 1.3 / 8))
        widened = VehicleConfig(name=mini_cfg.name, pack=widened_pack,
                                sensors=mini_cfg.sensors, template=mini_cfg.template,
                                power_w=mini_cfg.power_w, rest_s=mini_cfg.rest_s,
                                ambient_temp_c=mini_cfg.ambient_temp_c,
                                source=mini_cfg.source)
        sessions = self._sessions(widened, n=2)
        report = fleet_report(sessions, mini_cfg, protocol)
        assert any("software update" in w for w in report["warnings"])

    def test_defective_member_reported_not_fatal(self, mini_cfg, protocol):
        sessions = self._sessions(mini_cfg, n=2)
        text, _ = simulate_trace(mini_cfg, seed=9, label="car9",
                                 scenario=Scenario(defective_cells=((3, 0.8),)))
        sessions.append(("car9", load_session(text, mini_cfg)))
        report = fleet_report(sessions, mini_cfg, protocol)
        entry = [e for e in report["entries"] if e["label"] == "car9"][0]
        assert entry["verdict"] == "refused"
        assert any("car9" in w for w in report["warnings"])
