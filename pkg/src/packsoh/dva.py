"""Differential voltage analysis: curves, features, and degradation modes.

The differential voltage curve is the forward-difference derivative of the
(smoothed) pack voltage with respect to cumulative charge, normalized by
the nominal capacity so packs of different size plot on one scale. Local
maxima mark electrode lithiation stage transitions; a chemistry template
says which stoichiometry each usable peak corresponds to and where to look
for it. From the peak geometry three characteristic capacities follow:

* q_ne: negative electrode capacity, from the spacing of the two graphite
  stage peaks (their stoichiometry distance is a template constant),
* q_pe: positive electrode capacity, from the distance between the
  positive-electrode inflection and the upper cut-off,
* q_b: electrode balancing, the distance from the upper graphite stage
  peak to the upper cut-off.

Comparing the capacities of an aged session against a reference session of
the same pack yields loss of active material per electrode directly; loss
of lithium inventory follows from the balancing shift after removing the
part of it that electrode shrinkage alone explains.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import cumulative_trapezoid
from scipy.signal import find_peaks

from .errors import ChemistryMismatchError, DomainError, InvalidSpecError
from .halfcell import (
    GRAPHITE_FEATURE_STOICHS,
    LAYERED_OXIDE_EOC_STOICH,
    LAYERED_OXIDE_FEATURE_STOICH,
)
from .processing import smooth
from .protocol import estimate_resolution
from .traces import ChargingSession

LABEL_NE_LOW = "ne_stage_low"
LABEL_NE_STAGE2 = "ne_stage2"
LABEL_PE = "pe_inflection"


@dataclass(frozen=True)
class ChemistryTemplate:
    """Relative-position rules tying detected peaks to electrode stoichiometry.

    Search bands are fractions of the session capacity span. A band of None
    means the chemistry offers no such feature (flat positive electrodes).
    """

    name: str
    ne_stoichiometries: tuple[float, float] = GRAPHITE_FEATURE_STOICHS
    # The lower band starts above the smoothing run-in of the curve, where the
    # causal mean filter leaves a spurious bump.
    ne_search_bands: tuple[tuple[float, float], tuple[float, float]] = ((0.06, 0.38), (0.40, 0.75))
    pe_stoichiometry: float | None = LAYERED_OXIDE_FEATURE_STOICH
    pe_search_band: tuple[float, float] | None = (0.75, 0.97)
    pe_eoc_stoichiometry: float | None = LAYERED_OXIDE_EOC_STOICH
    min_prominence_fraction: float = 0.15
    min_separation_fraction: float = 0.05

    def __post_init__(self):
        x1, x2 = self.ne_stoichiometries
        if not 0.0 < x1 < x2 < 1.0:
            raise InvalidSpecError("ne_stoichiometries must be increasing within (0, 1)")
        if (self.pe_search_band is None) != (self.pe_stoichiometry is None):
            raise InvalidSpecError("pe_search_band and pe_stoichiometry must both be set or both None")
        if self.pe_stoichiometry is not None and self.pe_eoc_stoichiometry is None:
            raise InvalidSpecError("a positive-electrode feature needs pe_eoc_stoichiometry")


def template_from_mapping(data: dict) -> ChemistryTemplate:
    """Build a template from a plain mapping (the config-file form)."""
    known = {f for f in ChemistryTemplate.__dataclass_fields__}
    unknown = set(data) - known
    if unknown:
        raise InvalidSpecError(f"unknown chemistry template fields: {sorted(unknown)}")
    data = dict(data)
    for key in ("ne_stoichiometries", "pe_search_band"):
        if key in data and data[key] is not None:
            data[key] = tuple(data[key])
    if "ne_search_bands" in data:
        data["ne_search_bands"] = tuple(tuple(b) for b in data["ne_search_bands"])
    return ChemistryTemplate(**data)


TEMPLATES: dict[str, ChemistryTemplate] = {
    "nmc_graphite": ChemistryTemplate(name="nmc_graphite"),
    "lfp_graphite": ChemistryTemplate(
        name="lfp_graphite",
        pe_stoichiometry=None, pe_search_band=None, pe_eoc_stoichiometry=None,
    ),
}


def get_template(chemistry) -> ChemistryTemplate:
    if isinstance(chemistry, ChemistryTemplate):
        return chemistry
    try:
        return TEMPLATES[chemistry]
    except KeyError:
        raise InvalidSpecError(
            f"unknown chemistry template {chemistry!r}; available: {sorted(TEMPLATES)}"
        ) from None


@dataclass(frozen=True)
class DVCurve:
    """Normalized differential voltage over cumulative charged capacity."""

    capacity_ah: np.ndarray
    values: np.ndarray           # dU/dQ * Q_N, volts
    q_n_used: float
    capacity_span_ah: float
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.capacity_ah.shape != self.values.shape:
            raise DomainError("curve axis and values must have equal length")


@dataclass(frozen=True)
class Peak:
    label: str
    position_ah: float
    value: float
    prominence: float

    def to_dict(self) -> dict:
        return {"label": self.label, "position_ah": self.position_ah,
                "value": self.value, "prominence": self.prominence}


@dataclass(frozen=True)
class FeatureSet:
    """Characteristic capacities located on one differential voltage curve."""

    chemistry: str
    q_ne: float | None
    q_pe: float | None
    q_b: float | None
    peaks: tuple[Peak, ...]
    capacity_span_ah: float
    caveats: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"chemistry": self.chemistry, "q_ne_ah": self.q_ne, "q_pe_ah": self.q_pe,
                "q_b_ah": self.q_b, "capacity_span_ah": self.capacity_span_ah,
                "peaks": [p.to_dict() for p in self.peaks], "caveats": list(self.caveats)}


@dataclass(frozen=True)
class DegradationReport:
    """Degradation modes between a reference and an aged session."""

    lam_ne: float | None
    lam_pe: float | None
    lli: float | None
    provenance: dict = field(default_factory=dict)
    caveats: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {"lam_ne": self.lam_ne, "lam_pe": self.lam_pe, "lli": self.lli,
                "provenance": self.provenance, "caveats": list(self.caveats)}


def dv_curve(session: ChargingSession, q_n: float,
             min_dq_ah: float | None = None) -> DVCurve:
    """Forward-difference differential voltage of a cropped, smoothed session.

    Samples are merged until each step carries at least `min_dq_ah` of
    charge (default: one current-resolution step over one grid step), so
    quantization plateaus can never produce a division by a vanishing
    charge increment.
    """
    if q_n <= 0:
        raise DomainError(f"nominal capacity must be positive, got {q_n}")
    if len(session) < 3:
        raise DomainError("session too short for a differential voltage curve")
    if np.any(session.current < 0):
        raise DomainError("differential voltage needs strictly charging current")
    capacity = cumulative_trapezoid(session.current, session.time, initial=0.0) / 3600.0
    if np.any(np.diff(capacity) < 0):
        raise DomainError("cumulative capacity is non-monotone")

    if min_dq_ah is None:
        step_a = estimate_resolution(session.current)
        dt = float(np.median(np.diff(session.time)))
        min_dq_ah = max(step_a * dt / 3600.0, 1e-9)

    diffs = np.diff(capacity)
    if diffs.size and diffs.min() >= min_dq_ah:
        keep = np.arange(capacity.size)
    else:
        keep_list = [0]
        last = capacity[0]
        for k in range(1, capacity.size):
            if capacity[k] - last >= min_dq_ah:
                keep_list.append(k)
                last = capacity[k]
        if len(keep_list) < 3:
            raise DomainError("too little charge throughput for a differential voltage curve")
        keep = np.asarray(keep_list)

    q_merged = capacity[keep]
    u_merged = session.voltage[keep]
    dv = np.diff(u_merged) / np.diff(q_merged) * q_n
    return DVCurve(
        capacity_ah=q_merged[:-1],
        values=dv,
        q_n_used=q_n,
        capacity_span_ah=float(capacity[-1]),
        metadata={"min_dq_ah": min_dq_ah,
                  "smoothing": session.metadata.get("voltage_smoothing_fraction"),
                  "window_v": session.metadata.get("window_v")},
    )


def _pick_in_band(peaks_idx, prominences, axis, span, band):
    lo, hi = band[0] * span, band[1] * span
    best = None
    for j, idx in enumerate(peaks_idx):
        if lo <= axis[idx] <= hi:
            if best is None or prominences[j] > prominences[best]:
                best = j
    return best


def detect_features(curve: DVCurve, chemistry) -> FeatureSet:
    """Locate the chemistry's characteristic capacities on a curve.

    Runs prominence-thresholded peak detection on the standard-smoothed
    curve and assigns peaks to electrodes by the template's relative
    position rules. Missing features yield an absent entry plus a caveat,
    never an exception.
    """
    template = get_template(chemistry)
    caveats: list[str] = []
    span = curve.capacity_span_ah
    dv_smooth = smooth(curve.values) if curve.values.size else curve.values

    scale = float(np.median(np.abs(dv_smooth))) if dv_smooth.size else 0.0
    threshold = template.min_prominence_fraction * scale
    distance = max(1, int(template.min_separation_fraction * dv_smooth.size))
    if dv_smooth.size >= 3 and threshold > 0:
        idx, props = find_peaks(dv_smooth, prominence=threshold, distance=distance)
        prominences = props["prominences"]
    else:
        idx, prominences = np.array([], dtype=int), np.array([])

    axis = curve.capacity_ah
    peaks: list[Peak] = []

    picked_ne = []
    for band, label in zip(template.ne_search_bands, (LABEL_NE_LOW, LABEL_NE_STAGE2)):
        j = _pick_in_band(idx, prominences, axis, span, band)
        if j is not None:
            peaks.append(Peak(label, float(axis[idx[j]]), float(dv_smooth[idx[j]]),
                              float(prominences[j])))
            picked_ne.append(peaks[-1])
        else:
            picked_ne.append(None)

    pe_peak = None
    if template.pe_search_band is not None:
        j = _pick_in_band(idx, prominences, axis, span, template.pe_search_band)
        if j is not None:
            pe_peak = Peak(LABEL_PE, float(axis[idx[j]]), float(dv_smooth[idx[j]]),
                           float(prominences[j]))
            peaks.append(pe_peak)

    q_ne = q_pe = q_b = None
    if picked_ne[0] is not None and picked_ne[1] is not None:
        x1, x2 = template.ne_stoichiometries
        q_ne = (picked_ne[1].position_ah - picked_ne[0].position_ah) / (x2 - x1)
        q_b = span - picked_ne[1].position_ah
    else:
        caveats.append("negative-electrode stage peaks not found; q_ne and q_b absent")
    if template.pe_search_band is None:
        caveats.append("chemistry has no usable positive-electrode feature; q_pe absent")
    elif pe_peak is None:
        caveats.append("positive-electrode feature not detected; q_pe absent")
    else:
        q_pe = (span - pe_peak.position_ah) / (
            template.pe_stoichiometry - template.pe_eoc_stoichiometry)

    if peaks and threshold > 0 and min(p.prominence for p in peaks) < 1.5 * threshold:
        caveats.append("low peak prominence; features may be blurred by cell-to-cell spread")

    return FeatureSet(
        chemistry=template.name, q_ne=q_ne, q_pe=q_pe, q_b=q_b,
        peaks=tuple(peaks), capacity_span_ah=span, caveats=tuple(caveats),
    )


def degradation_modes(aged: FeatureSet, reference: FeatureSet) -> DegradationReport:
    """Convert feature shifts between two sessions into degradation modes.

    Loss of active material is one minus the electrode capacity ratio. The
    lithium inventory loss starts from the balancing shift and removes the
    contribution that electrode shrinkage alone would cause at the template
    stoichiometries; it is normalized by the reference session capacity.
    Absent inputs propagate to absent outputs.
    """
    if aged.chemistry != reference.chemistry:
        raise ChemistryMismatchError(
            f"cannot compare features from {aged.chemistry!r} against {reference.chemistry!r}"
        )
    template = get_template(aged.chemistry)
    caveats = list(dict.fromkeys(reference.caveats + aged.caveats))
    provenance: dict = {}

    lam_ne = lam_pe = lli = None
    if aged.q_ne is not None and reference.q_ne is not None:
        lam_ne = max(0.0, 1.0 - aged.q_ne / reference.q_ne)
        provenance["lam_ne"] = "ratio of stage-peak spacing capacities"
    if aged.q_pe is not None and reference.q_pe is not None:
        lam_pe = max(0.0, 1.0 - aged.q_pe / reference.q_pe)
        provenance["lam_pe"] = "ratio of upper-feature distance capacities"

    if aged.q_b is not None and reference.q_b is not None:
        shift_ah = reference.q_b - aged.q_b
        x2 = template.ne_stoichiometries[1]
        if lam_ne is not None:
            shift_ah += x2 * (reference.q_ne - aged.q_ne)
        else:
            caveats.append("inventory loss uncorrected for negative-electrode loss")
        if template.pe_eoc_stoichiometry is not None:
            if lam_pe is not None:
                shift_ah += template.pe_eoc_stoichiometry * (reference.q_pe - aged.q_pe)
            else:
                caveats.append("inventory loss uncorrected for positive-electrode loss")
        lli = max(0.0, shift_ah / reference.capacity_span_ah)
        provenance["lli"] = ("balancing shift minus electrode-loss contributions, "
                             "normalized by the reference session capacity")

    fading = _feature_fading(aged, reference)
    if fading:
        caveats.append(fading)
    return DegradationReport(lam_ne=lam_ne, lam_pe=lam_pe, lli=lli,
                             provenance=provenance, caveats=tuple(caveats))


def _feature_fading(aged: FeatureSet, reference: FeatureSet) -> str | None:
    ref_prom = {p.label: p.prominence for p in reference.peaks}
    for p in aged.peaks:
        if p.label in ref_prom and ref_prom[p.label] > 0 and p.prominence < 0.5 * ref_prom[p.label]:
            return "feature prominence halved against reference (imbalance or spread suspected)"
    return None


def export_dv_curve(curve: DVCurve) -> str:
    """Two-column plot-ready text: capacity in Ah, normalized dV/dQ in volts."""
    lines = ["# capacity_ah dv_normalized_v"]
    for q, v in zip(curve.capacity_ah, curve.values):
        lines.append(f"{q:.6f} {v:.6f}")
    return "\n".join(lines) + "\n"
