"""Analytic electrode potential curves for the synthetic pack simulator.

The negative electrode is graphite-like: a staircase of smooth plateau
transitions whose inflection points produce the characteristic peaks of a
differential-voltage curve. Two positive-electrode shapes are provided: a
layered-oxide-like monotone curve with a single mid-range inflection, and a
near-flat olivine-like plateau that contributes no usable mid-range feature.

All curves are strictly monotone in lithiation, so the composed full-cell
voltage is strictly increasing in charged capacity. Every downstream
quantity (open-circuit voltage, usable capacity, feature positions) is
therefore computable to arbitrary precision from these closed forms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidSpecError

# Stoichiometry positions of the graphite plateau transitions. The mid
# transition (second entry) is the prominent stage-2 peak; the pair spacing
# is what feature detection uses to recover the electrode capacity.
GRAPHITE_FEATURE_STOICHS = (0.17, 0.50)

# Lithiation at which the layered-oxide inflection sits, and the lithiation
# the positive electrode typically reaches at the upper cut-off. Both are
# template anchors for converting peak positions into electrode capacities.
LAYERED_OXIDE_FEATURE_STOICH = 0.30
LAYERED_OXIDE_EOC_STOICH = 0.16


def _step_down(z, center, width, height):
    """Smooth step of `height` volts: high below `center`, low above it."""
    return 0.5 * height * (1.0 + np.tanh((center - z) / width))


def _step_up(z, center, width, height):
    """Smooth step of `height` volts: low below `center`, high above it."""
    return 0.5 * height * (1.0 + np.tanh((z - center) / width))


def graphite_potential(x):
    """Graphite-like negative electrode potential in V vs Li/Li+.

    `x` is the lithiation fraction in [0, 1]. The curve decreases strictly:
    a steep rise toward delithiation (x -> 0), two plateau transitions at
    ``GRAPHITE_FEATURE_STOICHS``, and a gentle tilt that keeps the slope
    nonzero on the plateaus.
    """
    x = np.asarray(x, dtype=float)
    u = 0.082 - 0.032 * x
    u = u + _step_down(x, 0.035, 0.030, 0.58)
    u = u + _step_down(x, GRAPHITE_FEATURE_STOICHS[0], 0.040, 0.110)
    u = u + _step_down(x, GRAPHITE_FEATURE_STOICHS[1], 0.024, 0.042)
    return u


def layered_oxide_potential(y):
    """Layered-oxide-like positive electrode potential in V vs Li/Li+.

    `y` is the lithiation fraction. Monotone decreasing in `y`, with a steep
    wall toward delithiation (y -> 0.15, terminating charge), one mid-range
    inflection at ``LAYERED_OXIDE_FEATURE_STOICH``, and a droop toward full
    lithiation.
    """
    y = np.asarray(y, dtype=float)
    u = 3.90 - 0.50 * (y - 0.5)
    u = u + _step_down(y, 0.155, 0.030, 0.30)
    u = u + _step_down(y, LAYERED_OXIDE_FEATURE_STOICH, 0.045, 0.055)
    u = u - _step_up(y, 0.945, 0.025, 0.17)
    return u


def olivine_potential(y):
    """Olivine-like positive electrode potential in V vs Li/Li+.

    Near-flat two-phase plateau with steep walls at both lithiation ends;
    no interior inflection, hence no positive-electrode feature in a
    differential-voltage curve.
    """
    y = np.asarray(y, dtype=float)
    u = 3.435 - 0.015 * y
    u = u + _step_down(y, 0.045, 0.018, 0.22)
    u = u - _step_up(y, 0.965, 0.015, 0.24)
    return u


_POTENTIALS = {
    "graphite": (graphite_potential, "negative"),
    "layered_oxide": (layered_oxide_potential, "positive"),
    "olivine": (olivine_potential, "positive"),
}


@dataclass(frozen=True)
class HalfCellCurve:
    """Sampled electrode potential over the full stoichiometry range.

    The grid must be strictly increasing and cover [0, 1]; the potential
    must be strictly decreasing with lithiation so that the composed
    full-cell voltage is strictly increasing in charged capacity.
    """

    stoichiometry_grid: np.ndarray
    potential: np.ndarray
    electrode_role: str
    name: str = "custom"

    def __post_init__(self):
        grid = np.asarray(self.stoichiometry_grid, dtype=float)
        pot = np.asarray(self.potential, dtype=float)
        object.__setattr__(self, "stoichiometry_grid", grid)
        object.__setattr__(self, "potential", pot)
        if self.electrode_role not in ("positive", "negative"):
            raise InvalidSpecError(
                f"electrode_role must be 'positive' or 'negative', got {self.electrode_role!r}"
            )
        if grid.ndim != 1 or grid.size < 2 or pot.shape != grid.shape:
            raise InvalidSpecError("curve grid and potential must be 1-d arrays of equal length")
        if not np.all(np.diff(grid) > 0):
            raise InvalidSpecError("stoichiometry grid must be strictly increasing")
        if grid[0] > 1e-9 or grid[-1] < 1.0 - 1e-9:
            raise InvalidSpecError("stoichiometry grid must cover [0, 1]")
        if not np.all(np.isfinite(pot)):
            raise InvalidSpecError("curve potential contains non-finite values")
        if not np.all(np.diff(pot) < 0):
            raise InvalidSpecError(
                f"{self.electrode_role} electrode potential must decrease strictly with lithiation"
            )

    def potential_at(self, x):
        """Linear interpolation of the potential; saturates outside [0, 1]."""
        return np.interp(x, self.stoichiometry_grid, self.potential)


def electrode_curve(name: str, n_points: int = 4001) -> HalfCellCurve:
    """Sample a named analytic electrode preset onto a uniform grid."""
    try:
        fn, role = _POTENTIALS[name]
    except KeyError:
        raise InvalidSpecError(
            f"unknown electrode preset {name!r}; available: {sorted(_POTENTIALS)}"
        ) from None
    grid = np.linspace(0.0, 1.0, n_points)
    return HalfCellCurve(grid, fn(grid), role, name=name)
