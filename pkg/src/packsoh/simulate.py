"""Constant-power charging simulation with sensor effects.

The charge balance is integrated exactly on a dense throughput grid: at
throughput q the terminal voltage solves U^2 - U_ocv(q) U - P R = 0, the
current is P / U, and the elapsed time is the cumulative trapezoid of
3600 / I over q. Signals are then sampled at (possibly irregular) sensor
timestamps and quantized to the sensor resolutions, which makes every
simulated trace bit-reproducible for a given seed.

A pre-charge rest segment with exponentially decaying overpotential is
prepended; the charge terminates when the highest series-group terminal
voltage reaches the upper cell design limit, exactly like a BMS protecting
its weakest group. A session therefore covers the measurement window only
if every group can carry it, which is what window-coverage diagnostics key
on.
"""

from __future__ import annotations

import numpy as np
from scipy.integrate import cumulative_trapezoid

from .errors import DomainError, WindowUnreachableError
from .pack import IDEAL_SENSOR, PackModel, SensorSpec
from .processing import synchronize
from .traces import ChargingSession, RawTraces, TimedSignal

TEMPERATURE_RESOLUTION_C = 0.5
CELL_VOLTAGE_RESOLUTION_V = 0.001
TEMPERATURE_CAP_C = 30.0
DEFAULT_TEMP_RISE_C_PER_H = 0.5
DEFAULT_REST_S = 1800.0
DEFAULT_REST_TAU_S = 300.0
DEFAULT_PRIOR_CURRENT_A = 30.0


def _quantize(values: np.ndarray, resolution: float) -> np.ndarray:
    if resolution < 1e-8:
        return values
    return np.round(values / resolution) * resolution


def _sample_times(rng: np.random.Generator, t_end: float,
                  rate: tuple[float, float]) -> np.ndarray:
    """Timestamps from 0 to t_end at a rate jittered within [min, max] Hz."""
    rate_lo, rate_hi = rate
    if rate_lo == rate_hi:
        times = np.arange(0.0, t_end, 1.0 / rate_lo)
    else:
        dt_lo, dt_hi = 1.0 / rate_hi, 1.0 / rate_lo
        chunks = []
        t = 0.0
        while t < t_end:
            draws = rng.uniform(dt_lo, dt_hi, size=4096)
            cum = t + np.cumsum(draws)
            chunks.append(cum)
            t = float(cum[-1])
        times = np.concatenate([[0.0]] + chunks)
        times = times[times < t_end]
    if t_end - times[-1] > 1e-9:
        times = np.append(times, t_end)
    return times


class SimulatedCharge:
    """Dense solution of one constant-power charge on the throughput grid."""

    def __init__(self, model: PackModel, power_w: float,
                 window: tuple[float, float] | None, grid_points: int):
        if power_w <= 0:
            raise DomainError(f"charging power must be positive, got {power_w}")
        self.model = model
        self.power_w = power_w
        self.window = tuple(window) if window is not None else tuple(model.spec.window)
        r_pack = model.pack_resistance
        u_term_cell = model.termination_cell_voltage

        def terminal(u_ocv):
            return 0.5 * (u_ocv + np.sqrt(u_ocv * u_ocv + 4.0 * power_w * r_pack))

        start_terminal = float(terminal(model.ocv(0.0)))
        if start_terminal >= self.window[1]:
            raise WindowUnreachableError(
                f"overpotential at {power_w:.0f} W puts the starting terminal voltage "
                f"({start_terminal:.1f} V) above the upper cut-off {self.window[1]:.1f} V"
            )

        # Locate charge termination: the first throughput where the highest
        # group terminal voltage reaches the pack's termination threshold.
        coarse = np.linspace(0.0, model.usable_capacity_ah, grid_points)
        group_u = model.group_voltages(coarse)
        pack_u = group_u.sum(axis=0)
        term_u = terminal(pack_u)
        current = power_w / term_u
        hottest = group_u.max(axis=0) + current * model.r_g.max()
        over = np.nonzero(hottest >= u_term_cell)[0]
        if over.size == 0:
            q_term = model.usable_capacity_ah
        else:
            k = int(over[0])
            if k == 0:
                q_term = 0.0
            else:
                f = (u_term_cell - hottest[k - 1]) / (hottest[k] - hottest[k - 1])
                q_term = float(coarse[k - 1] + f * (coarse[k] - coarse[k - 1]))
        if q_term <= 0:
            raise WindowUnreachableError("pack terminates charging immediately")

        self.q = np.linspace(0.0, q_term, grid_points)
        group_u = model.group_voltages(self.q)
        self.pack_ocv = group_u.sum(axis=0)
        self.terminal_v = terminal(self.pack_ocv)
        self.current_a = power_w / self.terminal_v
        self.group_terminal_v = group_u + self.current_a[None, :] * model.r_g[:, None]
        # dt/dq = 3600 / I  [s per Ah]
        self.time_s = cumulative_trapezoid(3600.0 / self.current_a, self.q, initial=0.0)
        self.charge_duration_s = float(self.time_s[-1])
        self.charged_ah = float(q_term)
        self.soc_pct = 100.0 * self.q / q_term


def simulate_raw_traces(model: PackModel, power_w: float,
                        window: tuple[float, float] | None = None,
                        sensor: SensorSpec | None = None,
                        ambient_temp_c: float = 20.0,
                        seed: int = 0,
                        rest_s: float = DEFAULT_REST_S,
                        rest_tau_s: float = DEFAULT_REST_TAU_S,
                        prior_current_a: float = DEFAULT_PRIOR_CURRENT_A,
                        temp_rise_c_per_h: float = DEFAULT_TEMP_RISE_C_PER_H,
                        n_temperature_channels: int = 1,
                        include_cell_voltages: bool = False,
                        grid_points: int = 24000) -> RawTraces:
    """Simulate one charge and emit it as a long-format telemetry trace.

    Each signal gets its own (seeded) sample timestamps within the sensor's
    rate band, mimicking a gateway that serves requests at varying pace. The
    trace starts with `rest_s` seconds of zero-current rest during which the
    discharge overpotential decays with time constant `rest_tau_s` from an
    initial magnitude of `prior_current_a` times the pack resistance.
    """
    sensor = sensor or IDEAL_SENSOR
    sol = SimulatedCharge(model, power_w, window, grid_points)
    rng = np.random.default_rng(seed)

    t_total = rest_s + sol.charge_duration_s
    rest_eta_v = prior_current_a * model.pack_resistance
    ocv_start = float(sol.pack_ocv[0])

    def channel(times, grid_values, rest_value_fn):
        values = np.empty_like(times)
        in_rest = times < rest_s
        values[in_rest] = rest_value_fn(times[in_rest])
        t_charge = times[~in_rest] - rest_s
        values[~in_rest] = np.interp(t_charge, sol.time_s, grid_values)
        return values

    def temperature_profile(times):
        temps = np.full_like(times, float(ambient_temp_c))
        charging = times >= rest_s
        rise = temp_rise_c_per_h * (times[charging] - rest_s) / 3600.0
        cap = max(TEMPERATURE_CAP_C, ambient_temp_c)
        temps[charging] = np.minimum(ambient_temp_c + rise, cap)
        return temps

    t_u = _sample_times(rng, t_total, sensor.sample_rate)
    voltage = channel(
        t_u, sol.terminal_v,
        lambda t: ocv_start - rest_eta_v * np.exp(-t / rest_tau_s),
    )
    t_i = _sample_times(rng, t_total, sensor.sample_rate)
    current = channel(t_i, sol.current_a, lambda t: np.zeros_like(t))
    t_soc = _sample_times(rng, t_total, sensor.sample_rate)
    soc = channel(t_soc, sol.soc_pct, lambda t: np.zeros_like(t))

    temperatures = []
    for _ in range(n_temperature_channels):
        t_temp = _sample_times(rng, t_total, sensor.sample_rate)
        temperatures.append(TimedSignal(
            t_temp, _quantize(temperature_profile(t_temp), TEMPERATURE_RESOLUTION_C)))

    cell_voltages = []
    if include_cell_voltages:
        for g in range(model.spec.n_series):
            t_cell = _sample_times(rng, t_total, sensor.sample_rate)
            v_cell = channel(
                t_cell, sol.group_terminal_v[g],
                lambda t, g=g: np.full_like(t, float(model.group_voltages(0.0)[g]))
                - (rest_eta_v / model.spec.n_series) * np.exp(-t / rest_tau_s),
            )
            cell_voltages.append(TimedSignal(
                t_cell, _quantize(v_cell, CELL_VOLTAGE_RESOLUTION_V)))

    metadata = {
        "vehicle_id": model.spec.vehicle_id,
        "window_v": f"{sol.window[0]}:{sol.window[1]}",
        "seed": seed,
        "power_w": power_w,
        "rest_s": rest_s,
        "ambient_temp_c": ambient_temp_c,
    }
    return RawTraces(
        voltage=TimedSignal(t_u, _quantize(voltage, sensor.voltage_resolution)),
        current=TimedSignal(t_i, _quantize(current, sensor.current_resolution)),
        soc=TimedSignal(t_soc, _quantize(soc, sensor.soc_resolution)),
        temperatures=tuple(temperatures),
        cell_voltages=tuple(cell_voltages),
        metadata=metadata,
        total_rows=0,
    )


def simulate_charge(model: PackModel, power_w: float,
                    window: tuple[float, float] | None = None,
                    sensor: SensorSpec | None = None,
                    ambient_temp_c: float = 20.0,
                    seed: int = 0,
                    grid_step_s: float = 1.0,
                    **kwargs) -> ChargingSession:
    """Simulate one charge and return it synchronized onto a uniform grid.

    Convenience composition of ``simulate_raw_traces`` and ``synchronize``;
    accepts the same keyword arguments as the former.
    """
    raw = simulate_raw_traces(
        model, power_w, window=window, sensor=sensor,
        ambient_temp_c=ambient_temp_c, seed=seed, **kwargs)
    return synchronize(raw, grid_step=grid_step_s)
