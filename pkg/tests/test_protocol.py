import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from packsoh.errors import DomainError, InsufficientDataError
from packsoh.pack import build_pack
from packsoh.protocol import (
    CHECK_CONSTANT_POWER,
    CHECK_MAX_POWER,
    CHECK_PRE_CHARGE_TEMPERATURE,
    CHECK_WINDOW_COVERAGE,
    ProtocolSpec,
    check_rest_settled,
    estimate_resolution,
    max_charge_power,
    validate_session,
)
from packsoh.simulate import simulate_charge


MINI_PROTOCOL = ProtocolSpec(settle_confirm_span_s=60.0)


class TestMaxChargePower:
    def test_reference_bound(self):
        assert max_charge_power(120.0, 15.0) == 8000.0

    def test_unit_identity(self):
        assert max_charge_power(7.0, 7.0) == 1000.0

    def test_thirty_hour_regime(self):
        assert max_charge_power(58.0, 29.0) == pytest.approx(2000.0)

    @settings(max_examples=50, deadline=None)
    @given(st.floats(min_value=1e-3, max_value=1e3),
           st.floats(min_value=1e-2, max_value=1e2),
           st.floats(min_value=1e-2, max_value=1e2))
    def test_homogeneous_in_energy(self, k, e_n, t):
        assert max_charge_power(k * e_n, t) == pytest.approx(
            k * max_charge_power(e_n, t), rel=1e-9)

    @pytest.mark.parametrize("e,t", [(0.0, 15.0), (-1.0, 15.0), (58.0, 0.0)])
    def test_domain(self, e, t):
        with pytest.raises(DomainError):
            max_charge_power(e, t)


class TestRestSettled:
    def test_constant_trace_settles_immediately(self):
        t = np.arange(0.0, 120.0)
        settled, at = check_rest_settled(t, np.full(t.size, 355.0), 108, 0.25)
        assert settled and at == 0.0

    def test_exponential_decay_large_series_count(self):
        t = np.arange(0.0, 1200.0)
        v = 400.0 - 2.0 * np.exp(-t / 600.0)
        settled, at = check_rest_settled(t, v, 108, 1e-9)
        assert settled and at == 0.0

    def test_exponential_decay_single_cell(self):
        # closed form: |dV/dt| = (A/tau) exp(-t/tau) falls below the settle
        # rate at tau * ln(A / (tau * rate))
        tau, amplitude = 600.0, 2.0
        expected = tau * math.log(amplitude / (tau * 0.001))
        t = np.arange(0.0, 1200.0)
        v = 4.0 - amplitude * np.exp(-t / tau)
        settled, at = check_rest_settled(t, v, 1, 1e-9)
        assert settled
        assert abs(at - expected) <= 1.0

    def test_small_variation_beats_resolution(self):
        # monotone trace whose total change is below the sensor resolution
        t = np.arange(0.0, 100.0)
        v = 355.0 + 0.001 * t / t[-1]
        settled, at = check_rest_settled(t, v, 1, voltage_resolution=0.25,
                                         settle_rate_v_per_s_per_cell=1e-12)
        assert settled and at == 0.0

    def test_never_settles(self):
        t = np.arange(0.0, 100.0)
        settled, at = check_rest_settled(t, 0.5 * t, 1, 1e-9)
        assert not settled and math.isnan(at)

    def test_insufficient_data(self):
        with pytest.raises(InsufficientDataError, match="shorter"):
            check_rest_settled(np.arange(0.0, 30.0), np.zeros(30), 1, 0.1)


class TestEstimateResolution:
    def test_quantized_steps(self):
        v = np.round(np.linspace(300, 301, 50) / 0.25) * 0.25
        assert estimate_resolution(v) == pytest.approx(0.25)

    def test_constant(self):
        assert estimate_resolution(np.full(5, 1.0)) == 0.0


class TestValidateSession:
    def test_compliant_simulated_session(self, mini_spec):
        # compliant power for the mini pack: below E_N/15h
        model = build_pack(mini_spec, None, 0)
        session = simulate_charge(model, 3.9, seed=0, rest_s=1800.0,
                                  grid_points=8000)
        report = validate_session(session, MINI_PROTOCOL, mini_spec)
        assert report.verdict == "compliant", report.to_dict()

    def test_power_cap_violation(self, mini_spec, mini_session):
        # the fast unit-test power (40 W) far exceeds E_N/15h = 4 W
        report = validate_session(mini_session, MINI_PROTOCOL, mini_spec)
        finding = report.finding(CHECK_MAX_POWER)
        assert not finding.passed
        assert finding.measured > finding.limit
        assert report.verdict == "non_compliant"

    def test_eleven_kw_fails_on_full_pack(self, id3_cfg):
        # arithmetic of the bound: 11 kW against 58 kWh / 15 h = 3.87 kW
        limit = max_charge_power(id3_cfg.pack.nominal_energy_kwh, 15.0)
        assert limit == pytest.approx(3866.6667, rel=1e-6)
        assert 11000.0 > limit

    def test_ambient_out_of_band(self, mini_spec):
        model = build_pack(mini_spec, None, 0)
        session = simulate_charge(model, 3.9, seed=0, rest_s=1800.0,
                                  grid_points=8000, ambient_temp_c=26.0)
        report = validate_session(session, MINI_PROTOCOL, mini_spec)
        finding = report.finding(CHECK_PRE_CHARGE_TEMPERATURE)
        assert not finding.passed
        assert finding.measured == pytest.approx(26.0, abs=0.5)

    def test_missing_temperature_unverifiable(self, mini_spec):
        model = build_pack(mini_spec, None, 0)
        session = simulate_charge(model, 3.9, seed=0, rest_s=1800.0,
                                  grid_points=8000, n_temperature_channels=0)
        report = validate_session(session, MINI_PROTOCOL, mini_spec)
        finding = report.finding(CHECK_PRE_CHARGE_TEMPERATURE)
        assert not finding.passed and "unverifiable" in finding.detail
        assert report.verdict == "non_compliant"

    def test_disabled_check_skipped(self, mini_spec):
        model = build_pack(mini_spec, None, 0)
        session = simulate_charge(model, 3.9, seed=0, rest_s=1800.0,
                                  grid_points=8000, n_temperature_channels=0)
        report = validate_session(session, MINI_PROTOCOL, mini_spec,
                                  disabled_checks={CHECK_PRE_CHARGE_TEMPERATURE})
        assert report.verdict == "compliant"
        with pytest.raises(KeyError):
            report.finding(CHECK_PRE_CHARGE_TEMPERATURE)

    def test_time_shift_invariance(self, mini_spec):
        from dataclasses import replace
        model = build_pack(mini_spec, None, 0)
        session = simulate_charge(model, 3.9, seed=0, rest_s=1800.0, grid_points=8000)
        shifted = replace(session, time=session.time + 86400.0)
        a = validate_session(session, MINI_PROTOCOL, mini_spec)
        b = validate_session(shifted, MINI_PROTOCOL, mini_spec)
        assert a.to_dict() == b.to_dict()

    def test_window_not_covered_finding(self, mini_session, mini_spec):
        protocol = ProtocolSpec(window=(26.7, 60.0))
        report = validate_session(mini_session, protocol, mini_spec)
        assert not report.finding(CHECK_WINDOW_COVERAGE).passed

    def test_staircase_power_fails_cp_check(self, mini_spec, mini_session):
        from dataclasses import replace
        current = mini_session.current * np.where(
            np.arange(len(mini_session)) % 600 < 300, 1.0, 0.8)
        doctored = replace(mini_session, current=current,
                           power=mini_session.voltage * current)
        report = validate_session(doctored, MINI_PROTOCOL, mini_spec)
        assert not report.finding(CHECK_CONSTANT_POWER).passed
