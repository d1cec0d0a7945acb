"""Postprocessing of raw traces: synchronization, smoothing, and cropping.

The chain mirrors how on-vehicle dumps are prepared for analysis: all
signals are linearly interpolated onto one uniform time vector, a forward
mean filter with a window of 1 % of the sample count smooths quantization
staircases, and the session is cropped to the voltage (or SOC) window the
measurement is defined on. Window crossings are detected on the smoothed
voltage so that one quantization step cannot produce a false crossing.
"""

from __future__ import annotations

import numpy as np

from .errors import (
    DomainError,
    SynchronizationError,
    WindowNotCoveredError,
)
from .traces import ChargingSession, RawTraces

DEFAULT_GRID_STEP_S = 1.0
DEFAULT_SMOOTHING_FRACTION = 0.01


def smooth(values, fraction: float = DEFAULT_SMOOTHING_FRACTION) -> np.ndarray:
    """Forward (causal) mean filter with a window of `fraction` of the length.

    The window is ``ceil(fraction * len(values))`` samples, looking backward;
    the first window-1 outputs average over the available prefix so the
    series length is preserved.
    """
    v = np.asarray(values, dtype=float)
    if v.size == 0:
        raise DomainError("cannot smooth an empty series")
    if not 0.0 < fraction <= 0.5:
        raise DomainError(f"smoothing fraction must lie in (0, 0.5], got {fraction}")
    window = int(np.ceil(fraction * v.size))
    if window <= 1:
        return v.copy()
    csum = np.concatenate(([0.0], np.cumsum(v)))
    out = np.empty_like(v)
    out[window - 1:] = (csum[window:] - csum[:-window]) / window
    prefix = np.arange(1, window)
    out[:window - 1] = csum[1:window] / prefix
    return out


def synchronize(raw: RawTraces, grid_step: float = DEFAULT_GRID_STEP_S) -> ChargingSession:
    """Resample every channel onto one uniform grid by linear interpolation.

    The grid is trimmed to the intersection of all present signals' spans,
    so no channel is ever extrapolated. Raises SynchronizationError when the
    spans do not overlap or a mandatory signal cannot support interpolation.
    """
    if grid_step <= 0:
        raise DomainError(f"grid_step must be positive, got {grid_step}")
    signals = raw.signals()
    for name in ("u", "i"):
        if len(signals[name]) < 2:
            raise SynchronizationError(f"signal {name!r} needs at least 2 samples")

    t_start = max(float(s.times[0]) for s in signals.values())
    t_end = min(float(s.times[-1]) for s in signals.values())
    if t_end <= t_start:
        raise SynchronizationError(
            f"signal spans do not overlap (intersection [{t_start}, {t_end}])"
        )
    n = int(np.floor((t_end - t_start) / grid_step)) + 1
    grid = t_start + grid_step * np.arange(n)

    def onto_grid(sig):
        return np.interp(grid, sig.times, sig.values)

    voltage = onto_grid(raw.voltage)
    current = onto_grid(raw.current)
    soc = onto_grid(raw.soc) if raw.soc is not None else None
    temps = (np.vstack([onto_grid(s) for s in raw.temperatures])
             if raw.temperatures else None)
    cells = (np.vstack([onto_grid(s) for s in raw.cell_voltages])
             if raw.cell_voltages else None)

    stats = {name: {"samples": len(sig),
                    "native_span_s": [float(sig.times[0]), float(sig.times[-1])]}
             for name, sig in signals.items()}
    metadata = {**raw.metadata,
                "grid_step_s": grid_step,
                "sample_stats": stats,
                "malformed_rows": len(raw.malformed_rows)}
    return ChargingSession(
        time=grid, voltage=voltage, current=current, power=voltage * current,
        soc=soc, temperatures=temps, cell_voltages=cells, metadata=metadata,
    )


def charge_start_index(session: ChargingSession, current_threshold: float | None = None,
                       sustained_samples: int = 5) -> int:
    """First sample where current stays above the threshold.

    Used to separate the pre-charge rest segment from the charge segment.
    The default threshold adapts to the session's current scale so small
    packs at low power and large packs resolve the same way. Returns 0 when
    the session contains no rest prefix.
    """
    if current_threshold is None:
        scale = float(np.percentile(np.abs(session.current), 90))
        current_threshold = max(0.02, 0.2 * scale)
    above = session.current > current_threshold
    if not above.any():
        return len(session)
    run = 0
    for k, flag in enumerate(above):
        run = run + 1 if flag else 0
        if run >= min(sustained_samples, len(session)):
            return k - run + 1
    return int(np.argmax(above))


def crop_to_window(session: ChargingSession, u_low: float, u_high: float,
                   smoothing_fraction: float = DEFAULT_SMOOTHING_FRACTION,
                   ) -> ChargingSession:
    """Crop to the sub-session between the cut-off voltage crossings.

    The crop runs from the first smoothed sample at or above `u_low` to the
    first at or above `u_high` (inclusive). Raises WindowNotCoveredError when
    the upper cut-off is never reached, which is the symptom of a weak or
    defective cell group terminating the charge prematurely. Cropping a
    session to the window it is already cropped to is the identity.
    """
    if not u_low < u_high:
        raise DomainError(f"window must satisfy U_low < U_high, got [{u_low}, {u_high}]")
    if session.metadata.get("window_v") == [u_low, u_high]:
        return session
    smoothed = smooth(session.voltage, smoothing_fraction)
    crossings_low = np.nonzero(smoothed >= u_low)[0]
    if crossings_low.size == 0:
        raise WindowNotCoveredError(
            f"voltage never reaches the lower cut-off {u_low} V "
            f"(smoothed maximum {smoothed.max():.2f} V)"
        )
    i0 = int(crossings_low[0])
    crossings_high = np.nonzero(smoothed >= u_high)[0]
    if crossings_high.size == 0:
        raise WindowNotCoveredError(
            f"voltage never reaches the upper cut-off {u_high} V "
            f"(smoothed maximum {smoothed.max():.2f} V); charge terminated "
            "before the window was covered, so no measurement is possible "
            "over this window (weak or defective cell group, or a window "
            "that no longer matches the pack's operating limits)"
        )
    i1 = int(crossings_high[0])
    return session.sliced(
        i0, i1 + 1,
        window_v=[u_low, u_high],
        crop_indices=[i0, i1],
        crop_smoothing_fraction=smoothing_fraction,
        crop_order="smoothed-before-crop",
    )


def crop_to_soc_window(session: ChargingSession, soc_low: float = 0.0,
                       soc_high: float | None = None) -> ChargingSession:
    """Crop between BMS state-of-charge bounds instead of voltage bounds.

    The lower bound is searched from the charge start onward (the rest
    segment also reports the starting SOC). ``soc_high=None`` keeps the
    session through charge termination.
    """
    if session.soc is None:
        raise DomainError("session has no SOC channel; cannot crop by SOC window")
    start = charge_start_index(session)
    if start >= len(session):
        raise DomainError("session contains no charge segment")
    idx_low = np.nonzero(session.soc[start:] >= soc_low)[0]
    if idx_low.size == 0:
        raise WindowNotCoveredError(f"SOC never reaches {soc_low} %")
    i0 = start + int(idx_low[0])
    if soc_high is None:
        i1 = len(session) - 1
    else:
        idx_high = np.nonzero(session.soc[i0:] >= soc_high)[0]
        if idx_high.size == 0:
            raise WindowNotCoveredError(f"SOC never reaches {soc_high} %")
        i1 = i0 + int(idx_high[0])
    return session.sliced(i0, i1 + 1, soc_window=[soc_low, soc_high])
