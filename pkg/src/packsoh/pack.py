"""Synthetic battery pack model: cells, degradation, and open-circuit voltage.

A pack is n_series groups of n_parallel cells. Parallel cells share voltage
and self-balance, so each series group is lumped into one unit whose
electrode capacities are the sum over its parallel cells. All groups carry
the same charge throughput; their individual lithiation state is tracked in
ampere-hours of lithium held by the negative electrode.

Degradation is injected, not evolved: loss of active material shrinks the
affected electrode capacity in its delithiated state (no inventory change),
and loss of lithium inventory removes cyclable charge. This makes the model
an exact oracle for the diagnostic pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, InvalidSpecError
from .halfcell import HalfCellCurve


@dataclass(frozen=True)
class CellModel:
    """Electro-structural description of a single cell.

    q_pe / q_ne are the electrode capacities in Ah; q_b is the cyclable
    lithium inventory in Ah, which fixes the relative alignment (balancing)
    of the two electrode curves on the charge axis.
    """

    pe_curve: HalfCellCurve
    ne_curve: HalfCellCurve
    q_pe: float
    q_ne: float
    q_b: float
    r_internal: float = 0.001

    def __post_init__(self):
        if self.pe_curve.electrode_role != "positive":
            raise InvalidSpecError("pe_curve must have electrode_role 'positive'")
        if self.ne_curve.electrode_role != "negative":
            raise InvalidSpecError("ne_curve must have electrode_role 'negative'")
        if not self.q_pe > 0 or not self.q_ne > 0:
            raise InvalidSpecError("electrode capacities q_pe and q_ne must be positive")
        if not 0 < self.q_b:
            raise InvalidSpecError("lithium inventory q_b must be positive")
        # Anode oversizing: the NE must be able to host more lithium than the
        # inventory can supply, otherwise lithium plating would be implied.
        if self.q_ne <= self.q_b:
            raise InvalidSpecError("q_ne must exceed the inventory q_b (anode oversizing)")
        if self.r_internal < 0:
            raise InvalidSpecError("r_internal must be non-negative")


@dataclass(frozen=True)
class DegradationState:
    """Injected degradation: LAM fractions per electrode and LLI fraction."""

    lam_ne: float = 0.0
    lam_pe: float = 0.0
    lli: float = 0.0

    def __post_init__(self):
        for name in ("lam_ne", "lam_pe", "lli"):
            v = getattr(self, name)
            if not 0.0 <= v < 1.0:
                raise InvalidSpecError(f"{name} must lie in [0, 1), got {v}")

    @property
    def is_pristine(self) -> bool:
        return self.lam_ne == 0.0 and self.lam_pe == 0.0 and self.lli == 0.0


@dataclass(frozen=True)
class SensorSpec:
    """Resolution and sampling behaviour of the onboard telemetry."""

    voltage_resolution: float = 0.25    # V, pack level
    current_resolution: float = 0.1     # A
    soc_resolution: float = 0.4         # percentage points
    sample_rate: tuple[float, float] = (0.1, 1.0)  # Hz, (min, max); equal -> uniform

    def __post_init__(self):
        if min(self.voltage_resolution, self.current_resolution, self.soc_resolution) <= 0:
            raise InvalidSpecError("sensor resolutions must be positive")
        lo, hi = self.sample_rate
        if not 0 < lo <= hi:
            raise InvalidSpecError("sample_rate must satisfy 0 < min <= max")


IDEAL_SENSOR = SensorSpec(
    voltage_resolution=1e-9, current_resolution=1e-9, soc_resolution=1e-9,
    sample_rate=(1.0, 1.0),
)

# Balancing keeps the groups of a healthy pack aligned at top of charge to
# within a small residual, expressed as a fraction of the group inventory.
BALANCING_DEADBAND_FRACTION = 0.003
# The effective per-cell termination threshold varies slightly between packs
# (BMS software state); drawn uniformly below the design limit.
TERMINATION_JITTER_V = 0.015
# Proxy positive-electrode lithiation of the top of charge, used to compare
# group top positions when computing balancing compensation.
_BALANCE_ANCHOR_Y = 0.2


@dataclass(frozen=True)
class PackSpec:
    """Pack topology, nominal ratings, and scenario knobs.

    `window` is the pack-level measurement window in volts. The cells'
    design voltage limits sit slightly outside it, so a healthy pack rests
    below the lower cut-off and terminates charging above the upper one.
    """

    n_series: int
    n_parallel: int
    cell: CellModel
    cell_variation: float = 0.0
    defective_cells: tuple[tuple[int, float], ...] = ()
    nominal_capacity_ah: float = 0.0
    nominal_energy_kwh: float = 0.0
    nominal_voltage_v: float = 0.0
    window: tuple[float, float] = (0.0, 0.0)
    cell_voltage_limits: tuple[float, float] | None = None
    unbalanced: bool = False
    vehicle_id: str = "pack"
    chemistry: str = "nmc_graphite"

    def __post_init__(self):
        if self.n_series < 1 or self.n_parallel < 1:
            raise InvalidSpecError("n_series and n_parallel must be at least 1")
        if not 0.0 <= self.cell_variation < 0.2:
            raise InvalidSpecError("cell_variation must lie in [0, 0.2)")
        u_lo, u_hi = self.window
        if not u_lo < u_hi:
            raise InvalidSpecError(f"window must satisfy U_low < U_high, got {self.window}")
        lo, hi = self.cell_limits
        if not lo < hi:
            raise InvalidSpecError("cell voltage limits must satisfy lower < upper")
        if u_lo < lo * self.n_series - 1e-9 or u_hi > hi * self.n_series + 1e-9:
            raise InvalidSpecError(
                "window must lie within n_series x cell voltage limits "
                f"([{lo * self.n_series:.1f}, {hi * self.n_series:.1f}] V)"
            )
        n_cells = self.n_series * self.n_parallel
        for idx, frac in self.defective_cells:
            if not 0 <= idx < n_cells:
                raise InvalidSpecError(f"defective cell index {idx} outside 0..{n_cells - 1}")
            if not 0.0 < frac <= 1.0:
                raise InvalidSpecError(f"defective capacity_fraction must lie in (0, 1], got {frac}")

    @property
    def cell_limits(self) -> tuple[float, float]:
        """Design voltage limits per cell; defaults put margins around `window`."""
        if self.cell_voltage_limits is not None:
            return self.cell_voltage_limits
        u_lo, u_hi = self.window
        return (u_lo - 5.0) / self.n_series, (u_hi + 3.0) / self.n_series


def _truncated_normal(rng: np.random.Generator, size: int, bound: float = 3.0) -> np.ndarray:
    """Standard normal draws rejected outside +/- bound sigma."""
    draws = rng.normal(0.0, 1.0, size)
    bad = np.abs(draws) > bound
    while bad.any():
        draws[bad] = rng.normal(0.0, 1.0, int(bad.sum()))
        bad = np.abs(draws) > bound
    return draws


@dataclass(frozen=True)
class PackModel:
    """Realized pack: one lumped unit per series group, common throughput axis.

    `l0_g` is each group's lithium content (Ah, negative electrode) at the
    discharged reference: the point where the lowest group voltage equals the
    lower cell design limit. Charge throughput q in pack ampere-hours then
    moves every group to ``l0_g + q``.
    """

    spec: PackSpec
    degradation: DegradationState
    seed: int
    q_pe_g: np.ndarray
    q_ne_g: np.ndarray
    q_li_g: np.ndarray
    q_use0_g: np.ndarray          # pristine usable Ah per group, fixed at build
    r_g: np.ndarray               # ohms per group
    l0_g: np.ndarray
    termination_cell_voltage: float
    usable_capacity_ah: float
    window_capacity_ah: float

    # -- low-level composition ------------------------------------------------

    def group_voltages(self, charged):
        """Open-circuit voltage of every series group at throughput `charged` Ah.

        `charged` may be scalar or 1-d; the result has shape (n_series,) or
        (n_series, len(charged)).
        """
        q = np.asarray(charged, dtype=float)
        scalar = q.ndim == 0
        q = np.atleast_1d(q)
        l = self.l0_g[:, None] + q[None, :]
        x = l / self.q_ne_g[:, None]
        y = (self.q_li_g[:, None] - l) / self.q_pe_g[:, None]
        u = self.spec.cell.pe_curve.potential_at(y) - self.spec.cell.ne_curve.potential_at(x)
        return u[:, 0] if scalar else u

    def ocv(self, charged):
        """Pack open-circuit voltage without the domain guard of `pack_ocv`."""
        return self.group_voltages(charged).sum(axis=0)

    @property
    def pack_resistance(self) -> float:
        return float(self.r_g.sum())

    def ground_truth(self) -> dict:
        """Exact injected state, for oracle tests and simulation sidecars."""
        return {
            "vehicle_id": self.spec.vehicle_id,
            "seed": self.seed,
            "degradation": {
                "lam_ne": self.degradation.lam_ne,
                "lam_pe": self.degradation.lam_pe,
                "lli": self.degradation.lli,
            },
            "usable_capacity_ah": self.usable_capacity_ah,
            "window_capacity_ah": self.window_capacity_ah,
            "q_ne_pack_ah": float(self.q_ne_g.mean()),
            "q_pe_pack_ah": float(self.q_pe_g.mean()),
            "q_li_pack_ah": float(self.q_li_g.mean()),
            "defective_cells": [list(d) for d in self.spec.defective_cells],
            "unbalanced": self.spec.unbalanced,
        }


def _solve_reference(spec: PackSpec, q_pe_g, q_ne_g, q_li_g, offsets) -> np.ndarray:
    """Place every group at the discharged reference (lowest group at u_min)."""
    pe, ne = spec.cell.pe_curve, spec.cell.ne_curve
    u_min, _ = spec.cell_limits

    feas_lo = np.maximum(0.0, q_li_g - q_pe_g)
    feas_hi = np.minimum(q_ne_g, q_li_g)
    base = feas_lo + offsets

    def min_voltage(shift):
        l = np.clip(base + shift, feas_lo, feas_hi)
        x = l / q_ne_g
        y = (q_li_g - l) / q_pe_g
        return (pe.potential_at(y) - ne.potential_at(x)).min()

    span = float((feas_hi - base).min())
    lo, hi = 1e-9 * span, span
    if min_voltage(lo) > u_min:
        raise InvalidSpecError(
            "pack cannot be discharged to its lower cell voltage limit; "
            "check cell_voltage_limits against the electrode curves"
        )
    if min_voltage(hi) < u_min:
        raise InvalidSpecError(
            "pack cannot reach its lower cell voltage limit anywhere in the "
            "feasible lithiation range"
        )
    shift = brentq(lambda s: min_voltage(s) - u_min, lo, hi, xtol=1e-12)
    return np.clip(base + shift, feas_lo, feas_hi)


def _solve_crossing(fn, lo: float, hi: float, target: float, what: str) -> float:
    """Root of monotone `fn(q) - target` on [lo, hi]."""
    if fn(lo) > target:
        raise InvalidSpecError(f"{what}: already above target at start of range")
    if fn(hi) < target:
        raise InvalidSpecError(f"{what}: target never reached in feasible range")
    return float(brentq(lambda q: fn(q) - target, lo, hi, xtol=1e-10))


def build_pack(spec: PackSpec, degradation: DegradationState | None = None,
               seed: int = 0) -> PackModel:
    """Realize a PackSpec into a deterministic PackModel.

    The seed fixes the cell-to-cell variation draw: per-cell capacity scale
    and inventory offset are truncated Gaussians (clipped at 3 sigma) with
    relative standard deviation `spec.cell_variation`. Defects multiply the
    affected cell's capacities. Degradation is applied after the draw, so
    ``build_pack(spec, d, s)`` equals ``apply_degradation(build_pack(spec,
    None, s), d)``.

    Group alignment follows the balancing state: a balanced pack has its
    healthy groups aligned at top of charge to within the balancing
    deadband, a defective group keeps the alignment its pre-defect capacity
    would have had (balancing cannot absorb a capacity deficit), and an
    unbalanced pack carries additional charge offsets drawn from the
    variation parameter. Rebuilding with ``unbalanced=False`` is what
    "balancing resets the offsets" means here.
    """
    degradation = degradation or DegradationState()
    cell = spec.cell
    n_s, n_p = spec.n_series, spec.n_parallel
    rng = np.random.default_rng(seed)

    sigma = spec.cell_variation
    scale = 1.0 + sigma * _truncated_normal(rng, n_s * n_p)
    inventory_offset = sigma * cell.q_b * _truncated_normal(rng, n_s * n_p)
    # Perfectly identical cells leave the balancer nothing to do, so the
    # deadband residual only exists alongside cell-to-cell variation.
    balance_gap = BALANCING_DEADBAND_FRACTION * cell.q_b * n_p * rng.uniform(0.0, 1.0, n_s)
    if sigma == 0.0:
        balance_gap[:] = 0.0
    termination_jitter = float(rng.uniform(0.0, TERMINATION_JITTER_V))
    if spec.unbalanced:
        soc_offsets = sigma * cell.q_b * n_p * _truncated_normal(rng, n_s)
    else:
        rng.standard_normal(n_s)  # keep the stream layout stable across scenarios
        soc_offsets = np.zeros(n_s)

    scale = scale.reshape(n_s, n_p)
    inventory_offset = inventory_offset.reshape(n_s, n_p)

    # Pre-defect group capacities determine the balancing compensation: the
    # pack was historically balanced, i.e. its groups reach top of charge
    # together. A group's charge distance to its top is (top position -
    # start), so aligned arrivals mean starting each group higher by its own
    # top position. A defective cell's deficit appeared after that history
    # and is not absorbed, so its group races ahead during the charge.
    group_scale = scale.sum(axis=1)
    q_pe0_g = cell.q_pe * group_scale
    q_li0_g = cell.q_b * group_scale + inventory_offset.sum(axis=1)
    top_position = q_li0_g - _BALANCE_ANCHOR_Y * q_pe0_g
    balance_offsets = (top_position - top_position.mean()) + balance_gap + soc_offsets
    balance_offsets -= balance_offsets.min()  # keep every group inside feasibility

    defect_factor = np.ones((n_s, n_p))
    for idx, frac in spec.defective_cells:
        defect_factor[idx // n_p, idx % n_p] = frac
    group_factor = (scale * defect_factor).sum(axis=1) / group_scale

    q_pe_g = cell.q_pe * group_scale * group_factor
    q_ne_g = cell.q_ne * group_scale * group_factor
    q_li_g = (cell.q_b * group_scale + inventory_offset.sum(axis=1)) * group_factor
    r_g = np.full(n_s, cell.r_internal / n_p)

    # Pristine usable span per group (before degradation), used as the charge
    # equivalent when lithium inventory loss is injected.
    pe, ne = cell.pe_curve, cell.ne_curve
    u_min, u_max = spec.cell_limits

    def group_usable(qp, qn, ql) -> float:
        f_lo, f_hi = max(0.0, ql - qp), min(qn, ql)
        grid = np.linspace(f_lo, f_hi, 2001)
        u = pe.potential_at((ql - grid) / qp) - ne.potential_at(grid / qn)
        if u[0] > u_min or u[-1] < u_max:
            raise InvalidSpecError(
                "cell voltage limits are not reachable by the electrode "
                "composition; adjust q_pe/q_ne/q_b or the limits"
            )
        return float(np.interp(u_max, u, grid) - np.interp(u_min, u, grid))

    q_use0_g = np.array([group_usable(qp, qn, ql)
                         for qp, qn, ql in zip(q_pe_g, q_ne_g, q_li_g)])

    # Inject degradation.
    q_ne_g = q_ne_g * (1.0 - degradation.lam_ne)
    q_pe_g = q_pe_g * (1.0 - degradation.lam_pe)
    q_li_g = q_li_g - degradation.lli * q_use0_g
    if np.any(q_li_g <= 0):
        raise InvalidSpecError("lithium inventory loss exceeds the available inventory")

    l0_g = _solve_reference(spec, q_pe_g, q_ne_g, q_li_g, balance_offsets)

    # Usable capacity: throughput until the first group reaches the pack's
    # effective termination threshold.
    u_term = u_max - termination_jitter
    feas_hi = np.minimum(q_ne_g, q_li_g)

    def max_group_v(q):
        l = l0_g + q
        x = l / q_ne_g
        y = (q_li_g - l) / q_pe_g
        return (pe.potential_at(y) - ne.potential_at(x)).max()

    q_hi = float((feas_hi - l0_g).min())
    usable = _solve_crossing(max_group_v, 0.0, q_hi, u_term, "usable capacity")

    model = PackModel(
        spec=spec, degradation=degradation, seed=seed,
        q_pe_g=q_pe_g, q_ne_g=q_ne_g, q_li_g=q_li_g, q_use0_g=q_use0_g,
        r_g=r_g, l0_g=l0_g, termination_cell_voltage=u_term,
        usable_capacity_ah=usable, window_capacity_ah=0.0,
    )

    # Open-circuit capacity between the measurement window bounds; NaN when
    # the window is not covered (defective packs).
    u_lo, u_hi = spec.window
    try:
        q_at_lo = _solve_crossing(model.ocv, 0.0, usable, u_lo, "window low")
        q_at_hi = _solve_crossing(model.ocv, 0.0, usable, u_hi, "window high")
        window_cap = q_at_hi - q_at_lo
    except InvalidSpecError:
        window_cap = float("nan")
    return replace(model, window_capacity_ah=window_cap)


def pack_ocv(model: PackModel, charged: float) -> float:
    """Open-circuit pack voltage at `charged` Ah past the discharged reference."""
    if not -1e-9 <= charged <= model.usable_capacity_ah + 1e-9:
        raise DomainError(
            f"charged={charged} Ah outside [0, {model.usable_capacity_ah:.3f}] Ah"
        )
    return float(model.ocv(float(np.clip(charged, 0.0, model.usable_capacity_ah))))


def apply_degradation(model: PackModel, state: DegradationState) -> PackModel:
    """Return a new pack with `state` injected on top of the pristine draw.

    The variation draw of `model` is preserved exactly (same seed, same
    spec); only the electrode capacities and inventory change, which makes
    pristine/aged pairs directly comparable in diagnostic tests.
    """
    combined = DegradationState(
        lam_ne=1.0 - (1.0 - model.degradation.lam_ne) * (1.0 - state.lam_ne),
        lam_pe=1.0 - (1.0 - model.degradation.lam_pe) * (1.0 - state.lam_pe),
        lli=model.degradation.lli + state.lli,
    )
    return build_pack(model.spec, combined, model.seed)
