"""Long-format telemetry traces and the synchronized charging session.

Trace files mirror decoded vehicle-bus dumps: every signal keeps its own
timestamps, rates may differ per signal, and rows where a signal was not
sampled leave that cell empty.

CSV layout (documented bit-exactly; the JSONL form mirrors it):

    # key: value              optional metadata comment lines
    t,u,i,soc,temp0,cell0     header; `t`, `u`, `i` are mandatory columns
    0.0,355.25,0.0,,20.0,3.29 one row per timestamp; empty cell = not sampled

Column names: ``t`` seconds, ``u`` pack volts, ``i`` pack amperes (charging
positive), ``soc`` percent, ``temp0..tempK`` celsius, ``cell0..cellN`` volts
per series group. Values are written with shortest round-trip precision, so
an export/parse cycle is lossless.
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import TraceFormatError, TraceOrderingError

MANDATORY_COLUMNS = ("t", "u", "i")


@dataclass(frozen=True)
class TimedSignal:
    """One telemetry channel: paired timestamp/value arrays."""

    times: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.times, dtype=float)
        v = np.asarray(self.values, dtype=float)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "values", v)
        if t.shape != v.shape or t.ndim != 1:
            raise TraceFormatError("signal times and values must be 1-d arrays of equal length")

    def __len__(self):
        return self.times.size


@dataclass(frozen=True)
class RawTraces:
    """Per-signal sample lists as parsed from a trace file."""

    voltage: TimedSignal
    current: TimedSignal
    soc: TimedSignal | None = None
    temperatures: tuple[TimedSignal, ...] = ()
    cell_voltages: tuple[TimedSignal, ...] = ()
    metadata: dict = field(default_factory=dict)
    malformed_rows: tuple[int, ...] = ()
    total_rows: int = 0

    def signals(self) -> dict[str, TimedSignal]:
        """All present channels keyed by their column name."""
        out = {"u": self.voltage, "i": self.current}
        if self.soc is not None:
            out["soc"] = self.soc
        out.update({f"temp{k}": s for k, s in enumerate(self.temperatures)})
        out.update({f"cell{k}": s for k, s in enumerate(self.cell_voltages)})
        return out


@dataclass(frozen=True)
class ChargingSession:
    """Synchronized session: one uniform time vector, all channels aligned.

    Current uses the charging-positive sign convention. `power` is the
    instantaneous product U*I in watts.
    """

    time: np.ndarray
    voltage: np.ndarray
    current: np.ndarray
    power: np.ndarray
    soc: np.ndarray | None = None
    temperatures: np.ndarray | None = None    # (n_channels, n_samples)
    cell_voltages: np.ndarray | None = None   # (n_groups, n_samples)
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        n = self.time.size
        for name in ("voltage", "current", "power"):
            if getattr(self, name).shape != (n,):
                raise TraceFormatError(f"channel {name} length differs from time vector")
        if self.soc is not None and self.soc.shape != (n,):
            raise TraceFormatError("channel soc length differs from time vector")
        for name in ("temperatures", "cell_voltages"):
            arr = getattr(self, name)
            if arr is not None and (arr.ndim != 2 or arr.shape[1] != n):
                raise TraceFormatError(f"channel {name} must have shape (k, n_samples)")

    def __len__(self):
        return self.time.size

    @property
    def duration_s(self) -> float:
        return float(self.time[-1] - self.time[0]) if len(self) else 0.0

    def sliced(self, start: int, stop: int, **meta) -> "ChargingSession":
        """Sub-session over sample indices [start, stop); metadata is extended."""
        sl = slice(start, stop)
        return ChargingSession(
            time=self.time[sl],
            voltage=self.voltage[sl],
            current=self.current[sl],
            power=self.power[sl],
            soc=None if self.soc is None else self.soc[sl],
            temperatures=None if self.temperatures is None else self.temperatures[:, sl],
            cell_voltages=None if self.cell_voltages is None else self.cell_voltages[:, sl],
            metadata={**self.metadata, **meta},
        )


# -- parsing -------------------------------------------------------------------


def _column_kind(name: str) -> str | None:
    if name in ("t", "u", "i", "soc"):
        return name
    if name.startswith("temp") and name[4:].isdigit():
        return "temp"
    if name.startswith("cell") and name[4:].isdigit():
        return "cell"
    return None


def _as_text(data) -> str:
    if isinstance(data, bytes):
        return data.decode("utf-8")
    if isinstance(data, str):
        return data
    if hasattr(data, "read"):
        raw = data.read()
        return raw.decode("utf-8") if isinstance(raw, bytes) else raw
    raise TraceFormatError(f"unsupported trace input type: {type(data).__name__}")


def _check_order(name: str, times: list[float], rows: list[int]):
    t = np.asarray(times)
    bad = np.nonzero(np.diff(t) < 0)[0]
    if bad.size:
        row = rows[int(bad[0]) + 1]
        raise TraceOrderingError(
            f"signal {name!r}: timestamp decreases at data row {row}", row_index=row
        )


def _assemble(columns: dict[str, tuple[list, list, list]], metadata: dict,
              malformed: list[int], total: int) -> RawTraces:
    for name in ("u", "i"):
        if name not in columns or not columns[name][0]:
            raise TraceFormatError(f"mandatory signal column {name!r} missing or empty")

    signals = {}
    for name, (times, values, rows) in columns.items():
        if not times:
            continue
        _check_order(name, times, rows)
        signals[name] = TimedSignal(np.asarray(times), np.asarray(values))

    temps = tuple(signals[k] for k in sorted(
        (k for k in signals if k.startswith("temp")), key=lambda k: int(k[4:])))
    cells = tuple(signals[k] for k in sorted(
        (k for k in signals if k.startswith("cell")), key=lambda k: int(k[4:])))
    return RawTraces(
        voltage=signals["u"], current=signals["i"], soc=signals.get("soc"),
        temperatures=temps, cell_voltages=cells, metadata=metadata,
        malformed_rows=tuple(malformed), total_rows=total,
    )


def _parse_csv(text: str) -> RawTraces:
    metadata: dict = {}
    lines = text.splitlines()
    pos = 0
    for line in lines:
        stripped = line.strip()
        if stripped.startswith("#"):
            body = stripped[1:].strip()
            if ":" in body:
                key, _, value = body.partition(":")
                metadata[key.strip()] = value.strip()
            pos += 1
        elif not stripped:
            pos += 1
        else:
            break
    if pos >= len(lines):
        raise TraceFormatError("trace contains no header line")

    header = [h.strip() for h in lines[pos].split(",")]
    for name in MANDATORY_COLUMNS:
        if name not in header:
            raise TraceFormatError(f"header lacks mandatory column {name!r}: {header}")
    for name in header:
        if _column_kind(name) is None:
            raise TraceFormatError(f"unknown column {name!r} in header")
    t_idx = header.index("t")

    columns: dict[str, tuple[list, list, list]] = {name: ([], [], []) for name in header
                                                   if name != "t"}
    malformed: list[int] = []
    total = 0
    for line in lines[pos + 1:]:
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        row_no = total
        total += 1
        cells = line.split(",")
        if len(cells) != len(header):
            malformed.append(row_no)
            continue
        try:
            t = float(cells[t_idx])
        except ValueError:
            malformed.append(row_no)
            continue
        parsed = []
        ok = True
        for name, cell in zip(header, cells):
            if name == "t":
                continue
            cell = cell.strip()
            if cell == "":
                continue
            try:
                parsed.append((name, float(cell)))
            except ValueError:
                ok = False
                break
        if not ok:
            malformed.append(row_no)
            continue
        for name, value in parsed:
            times, values, rows = columns[name]
            times.append(t)
            values.append(value)
            rows.append(row_no)
    return _assemble(columns, metadata, malformed, total)


def _parse_jsonl(text: str) -> RawTraces:
    metadata: dict = {}
    columns: dict[str, tuple[list, list, list]] = {}
    malformed: list[int] = []
    total = 0
    first_record = True
    for line in (s for s in text.splitlines() if s.strip()):
        try:
            obj = json.loads(line)
        except json.JSONDecodeError:
            malformed.append(total)
            total += 1
            continue
        if first_record and isinstance(obj, dict) and set(obj) == {"meta"}:
            metadata = dict(obj["meta"])
            first_record = False
            continue
        first_record = False
        row_no = total
        total += 1
        if not isinstance(obj, dict) or "t" not in obj:
            malformed.append(row_no)
            continue
        try:
            t = float(obj["t"])
            entries = []
            for name, value in obj.items():
                if name == "t":
                    continue
                if _column_kind(name) is None:
                    raise ValueError(name)
                entries.append((name, float(value)))
        except (TypeError, ValueError):
            malformed.append(row_no)
            continue
        for name, value in entries:
            times, values, rows = columns.setdefault(name, ([], [], []))
            times.append(t)
            values.append(value)
            rows.append(row_no)
    return _assemble(columns, metadata, malformed, total)


def parse_trace(data, format: str = "csv") -> RawTraces:
    """Parse a trace from bytes, text, or a file-like object.

    Malformed rows are counted and recorded on the result, never silently
    dropped. Missing mandatory columns raise TraceFormatError; a decreasing
    timestamp raises TraceOrderingError with the offending row index.
    """
    text = _as_text(data)
    if format == "csv":
        return _parse_csv(text)
    if format == "jsonl":
        return _parse_jsonl(text)
    raise TraceFormatError(f"unknown trace format {format!r} (expected 'csv' or 'jsonl')")


# -- export --------------------------------------------------------------------


def _fmt(v: float) -> str:
    return repr(float(v))


def _merged_rows(raw: RawTraces):
    signals = raw.signals()
    names = list(signals)
    all_times = np.unique(np.concatenate([signals[n].times for n in names]))
    lookup = []
    for n in names:
        sig = signals[n]
        positions = np.searchsorted(all_times, sig.times)
        lookup.append({int(p): float(v) for p, v in zip(positions, sig.values)})
    return names, all_times, lookup


def export_csv(raw: RawTraces) -> str:
    """Serialize traces to the CSV layout; inverse of ``parse_trace``."""
    names, all_times, lookup = _merged_rows(raw)
    out = io.StringIO()
    for key, value in raw.metadata.items():
        out.write(f"# {key}: {value}\n")
    out.write("t," + ",".join(names) + "\n")
    for i, t in enumerate(all_times):
        row = [_fmt(t)]
        for col in lookup:
            row.append(_fmt(col[i]) if i in col else "")
        out.write(",".join(row) + "\n")
    return out.getvalue()


def export_jsonl(raw: RawTraces) -> str:
    """Serialize traces to the JSONL layout; inverse of ``parse_trace``."""
    names, all_times, lookup = _merged_rows(raw)
    out = io.StringIO()
    if raw.metadata:
        out.write(json.dumps({"meta": raw.metadata}) + "\n")
    for i, t in enumerate(all_times):
        record: dict = {"t": float(t)}
        for name, col in zip(names, lookup):
            if i in col:
                record[name] = float(col[i])
        out.write(json.dumps(record) + "\n")
    return out.getvalue()
