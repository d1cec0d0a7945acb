import numpy as np
import pytest

from packsoh.dva import (
    ChemistryTemplate,
    DVCurve,
    FeatureSet,
    degradation_modes,
    detect_features,
    dv_curve,
    export_dv_curve,
    get_template,
    template_from_mapping,
)
from packsoh.errors import ChemistryMismatchError, DomainError, InvalidSpecError
from packsoh.pack import DegradationState, apply_degradation, build_pack
from packsoh.processing import crop_to_window
from packsoh.simulate import simulate_charge
from packsoh.traces import ChargingSession

from conftest import MINI_POWER_W, make_mini_spec, with_smoothed_voltage


def linear_ramp_session(n=2000, a=360.0, b=0.6, current=5.0):
    t = np.arange(float(n))
    q = current * t / 3600.0
    u = a + b * q
    i = np.full(n, current)
    return ChargingSession(time=t, voltage=u, current=i, power=u * i)


def mini_features(model, seed=1, chemistry="nmc_graphite", q_n=1.969):
    session = simulate_charge(model, MINI_POWER_W, seed=seed, rest_s=300.0,
                              grid_points=8000)
    cropped = with_smoothed_voltage(crop_to_window(session, *model.spec.window))
    return detect_features(dv_curve(cropped, q_n), chemistry)


class TestDvCurve:
    def test_linear_ramp_gives_constant(self):
        session = linear_ramp_session(b=0.6)
        curve = dv_curve(session, q_n=145.0)
        assert np.allclose(curve.values, 0.6 * 145.0, rtol=1e-6)

    def test_strictly_positive_for_increasing_voltage(self):
        curve = dv_curve(linear_ramp_session(), 145.0)
        assert np.all(curve.values > 0)

    def test_normalization_is_q_n_scaling(self):
        session = linear_ramp_session()
        a = dv_curve(session, 100.0)
        b = dv_curve(session, 200.0)
        assert np.allclose(2.0 * a.values, b.values)

    def test_rejects_negative_current(self):
        session = linear_ramp_session()
        bad = ChargingSession(time=session.time, voltage=session.voltage,
                              current=session.current - 10.0, power=session.power)
        with pytest.raises(DomainError, match="charging"):
            dv_curve(bad, 145.0)

    def test_merges_quantization_plateaus(self):
        t = np.arange(0.0, 400.0)
        i = np.where(t % 2 == 0, 10.0, 0.0)   # alternating zero-charge steps
        u = 360.0 + 0.01 * np.cumsum(i) / 3600.0 * 3600.0
        session = ChargingSession(time=t, voltage=u, current=i, power=u * i)
        curve = dv_curve(session, 145.0, min_dq_ah=10.0 / 3600.0)
        assert np.all(np.isfinite(curve.values))
        assert np.all(np.diff(curve.capacity_ah) >= 10.0 / 3600.0 - 1e-12)

    def test_q_n_domain(self):
        with pytest.raises(DomainError):
            dv_curve(linear_ramp_session(), 0.0)

    def test_export_two_columns(self):
        text = export_dv_curve(dv_curve(linear_ramp_session(n=50), 145.0))
        lines = text.strip().splitlines()
        assert lines[0].startswith("#")
        assert all(len(line.split()) == 2 for line in lines[1:])


class TestDetectFeatures:
    def test_recovers_ne_capacity_within_two_percent(self, mini_model):
        features = mini_features(mini_model)
        truth = mini_model.ground_truth()["q_ne_pack_ah"]
        assert features.q_ne == pytest.approx(truth, rel=0.02)

    def test_recovers_pe_capacity_roughly(self, mini_model):
        features = mini_features(mini_model)
        truth = mini_model.ground_truth()["q_pe_pack_ah"]
        assert features.q_pe == pytest.approx(truth, rel=0.10)

    def test_balancing_feature_inside_span(self, mini_model):
        features = mini_features(mini_model)
        assert 0 < features.q_b < features.capacity_span_ah

    def test_lfp_has_no_pe_feature(self):
        from packsoh.halfcell import electrode_curve
        from packsoh.pack import CellModel
        cell = CellModel(pe_curve=electrode_curve("olivine"),
                         ne_curve=electrode_curve("graphite"),
                         q_pe=2.62, q_ne=3.02, q_b=2.52, r_internal=0.002)
        spec = make_mini_spec(cell=cell, window=(25.1, 27.4),
                              cell_voltage_limits=(3.0953, 3.4984),
                              chemistry="lfp_graphite")
        model = build_pack(spec, None, 0)
        features = mini_features(model, chemistry="lfp_graphite")
        assert features.q_pe is None
        assert features.q_ne is not None
        assert any("positive-electrode" in c for c in features.caveats)

    def test_flat_curve_yields_empty_featureset(self):
        curve = DVCurve(capacity_ah=np.linspace(0, 100, 500),
                        values=np.full(500, 40.0), q_n_used=145.0,
                        capacity_span_ah=100.0)
        features = detect_features(curve, "nmc_graphite")
        assert features.q_ne is None and features.q_pe is None and features.q_b is None
        assert features.peaks == ()

    def test_voltage_offset_invariance(self, mini_model):
        session = simulate_charge(mini_model, MINI_POWER_W, seed=1, rest_s=300.0,
                                  grid_points=8000)
        cropped = with_smoothed_voltage(crop_to_window(session, *mini_model.spec.window))
        from dataclasses import replace
        shifted = replace(cropped, voltage=cropped.voltage + 3.0)
        a = detect_features(dv_curve(cropped, 1.969), "nmc_graphite")
        b = detect_features(dv_curve(shifted, 1.969), "nmc_graphite")
        assert a.q_ne == pytest.approx(b.q_ne, rel=1e-9)
        assert a.q_b == pytest.approx(b.q_b, rel=1e-9)

    def test_prominence_fades_with_cell_variation(self):
        proms = []
        for sigma in (0.0, 0.015, 0.03):
            model = build_pack(make_mini_spec(cell_variation=sigma, n_parallel=2,
                                              nominal_capacity_ah=3.94), None, 9)
            features = mini_features(model, q_n=3.94)
            stage2 = [p for p in features.peaks if p.label == "ne_stage2"]
            assert stage2, f"stage-2 peak lost at sigma={sigma}"
            proms.append(stage2[0].prominence)
        assert proms[0] > proms[1] > proms[2]


class TestDegradationModes:
    def test_identity_is_zero(self, mini_model):
        f = mini_features(mini_model)
        report = degradation_modes(f, f)
        assert report.lam_ne == 0.0 and report.lam_pe == 0.0 and report.lli == 0.0

    def test_round_trip_recovery(self, mini_model):
        aged_model = apply_degradation(
            mini_model, DegradationState(lam_ne=0.03, lam_pe=0.02, lli=0.05))
        report = degradation_modes(mini_features(aged_model, seed=2),
                                   mini_features(mini_model, seed=1))
        assert report.lam_ne == pytest.approx(0.03, abs=0.01)
        assert report.lam_pe == pytest.approx(0.02, abs=0.01)
        assert report.lli == pytest.approx(0.05, abs=0.01)

    def test_absent_pe_propagates(self):
        ref = FeatureSet(chemistry="nmc_graphite", q_ne=200.0, q_pe=None, q_b=50.0,
                         peaks=(), capacity_span_ah=145.0)
        aged = FeatureSet(chemistry="nmc_graphite", q_ne=195.0, q_pe=180.0, q_b=48.0,
                          peaks=(), capacity_span_ah=142.0)
        report = degradation_modes(aged, ref)
        assert report.lam_pe is None
        assert report.lam_ne is not None
        assert any("positive-electrode" in c for c in report.caveats)

    def test_chemistry_mismatch(self):
        a = FeatureSet(chemistry="nmc_graphite", q_ne=1.0, q_pe=1.0, q_b=1.0,
                       peaks=(), capacity_span_ah=1.0)
        b = FeatureSet(chemistry="lfp_graphite", q_ne=1.0, q_pe=None, q_b=1.0,
                       peaks=(), capacity_span_ah=1.0)
        with pytest.raises(ChemistryMismatchError):
            degradation_modes(a, b)

    def test_modes_reported_in_unit_interval(self):
        ref = FeatureSet(chemistry="nmc_graphite", q_ne=200.0, q_pe=190.0, q_b=50.0,
                         peaks=(), capacity_span_ah=145.0)
        better = FeatureSet(chemistry="nmc_graphite", q_ne=202.0, q_pe=195.0, q_b=51.0,
                            peaks=(), capacity_span_ah=146.0)
        report = degradation_modes(better, ref)
        assert report.lam_ne == 0.0 and report.lam_pe == 0.0 and report.lli == 0.0


class TestTemplates:
    def test_builtins(self):
        assert get_template("nmc_graphite").pe_search_band is not None
        assert get_template("lfp_graphite").pe_search_band is None

    def test_unknown(self):
        with pytest.raises(InvalidSpecError, match="unknown chemistry"):
            get_template("sodium_sulfur")

    def test_from_mapping(self):
        template = template_from_mapping({
            "name": "custom", "ne_stoichiometries": [0.2, 0.55],
            "ne_search_bands": [[0.05, 0.3], [0.4, 0.7]],
            "pe_stoichiometry": None, "pe_search_band": None,
            "pe_eoc_stoichiometry": None,
        })
        assert isinstance(template, ChemistryTemplate)
        assert template.ne_stoichiometries == (0.2, 0.55)

    def test_from_mapping_rejects_unknown_fields(self):
        with pytest.raises(InvalidSpecError, match="unknown chemistry template fields"):
            template_from_mapping({"name": "x", "frobnicate": 1})

    def test_pe_band_consistency(self):
        with pytest.raises(InvalidSpecError):
            ChemistryTemplate(name="bad", pe_stoichiometry=0.3, pe_search_band=None)
