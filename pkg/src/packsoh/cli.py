"""Command-line client of the pack diagnostics service.

Subcommands mirror the measurement workflow: simulate traces, validate a
session against the protocol, measure capacity/energy state of health,
diagnose degradation modes against a reference session, and compare a
fleet. The CLI talks to the service API; by default the service runs
in-process, with ``--server`` it addresses a remote deployment.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .client import ServiceClient, ServiceError
from .errors import PackSohError


def _parse_range(text: str | None, what: str) -> tuple[float, float] | None:
    if text is None:
        return None
    try:
        lo, _, hi = text.partition(":")
        return float(lo), float(hi)
    except ValueError:
        raise click.BadParameter(f"{what} must look like LO:HI, got {text!r}")


def _parse_defects(entries: tuple[str, ...]) -> list[list[float]]:
    out = []
    for entry in entries:
        try:
            idx, _, frac = entry.partition(":")
            out.append([int(idx), float(frac)])
        except ValueError:
            raise click.BadParameter(f"--defect must look like INDEX:FRACTION, got {entry!r}")
    return out


def _config_arg(config: str) -> dict:
    """Pass bundled names through; read explicit files and send their text."""
    path = Path(config)
    if path.suffix in (".yaml", ".yml") or path.exists():
        return {"config_yaml": path.read_text()}
    return {"vehicle": config}


def _base_options(ctx, fmt=None, window=None, soc_window=None) -> dict:
    options = dict(_config_arg(ctx.obj["config"]))
    if ctx.obj["protocol"]:
        options["protocol_yaml"] = Path(ctx.obj["protocol"]).read_text()
    if fmt:
        options["format"] = fmt
    if window:
        options["window_v"] = list(window)
    if soc_window:
        options["soc_window"] = list(soc_window)
    return options


def _out_dir(out: str) -> Path:
    path = Path(out)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _write(path: Path, content: str):
    path.write_text(content)
    click.echo(f"wrote {path}")


@click.group()
@click.option("--config", "-c", default="id3", show_default=True,
              help="Vehicle config: bundled name, name in $PACKSOH_CONFIG_DIR, or file path.")
@click.option("--protocol", "-p", type=click.Path(exists=True), default=None,
              help="Protocol config file (bundled default when omitted).")
@click.option("--server", default=None, metavar="URL",
              help="Remote service URL; default runs the service in-process.")
@click.option("--out", "-o", default=".", show_default=True,
              help="Output directory for report and trace files.")
@click.pass_context
def main(ctx, config, protocol, server, out):
    """Charging-based state-of-health measurement and pack diagnostics."""
    ctx.ensure_object(dict)
    ctx.obj.update(config=config, protocol=protocol, server=server, out=out)


def _client(ctx) -> ServiceClient:
    return ServiceClient(server_url=ctx.obj["server"])


@main.command()
@click.pass_context
def vehicles(ctx):
    """List the vehicle configs the service knows."""
    with _client(ctx) as client:
        for info in client.vehicles():
            click.echo(f"{info['name']:<14} {info['chemistry']:<14} "
                       f"{info['n_series']}s{info['n_parallel']}p  "
                       f"{info['nominal_capacity_ah']:7.1f} Ah "
                       f"{info['nominal_energy_kwh']:6.1f} kWh  "
                       f"window {info['window_v'][0]:.0f}-{info['window_v'][1]:.0f} V")


@main.command()
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--fleet", "fleet_n", type=int, default=1, show_default=True,
              help="Number of traces to simulate (distinct build seeds).")
@click.option("--power", type=float, default=None, help="Charging power in W.")
@click.option("--ambient", type=float, default=None, help="Ambient temperature in C.")
@click.option("--lam-ne", type=float, default=0.0, show_default=True)
@click.option("--lam-pe", type=float, default=0.0, show_default=True)
@click.option("--lli", type=float, default=0.0, show_default=True)
@click.option("--defect", multiple=True, metavar="INDEX:FRACTION",
              help="Defective cell, e.g. 5:0.8 (repeatable).")
@click.option("--unbalanced", is_flag=True, help="Inject cell-imbalance offsets.")
@click.option("--variation", type=float, default=None,
              help="Override the config's cell-to-cell variation.")
@click.option("--ideal-sensors", is_flag=True, help="Disable quantization and rate jitter.")
@click.option("--cell-voltages", is_flag=True, help="Include per-group cell voltage channels.")
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv",
              show_default=True)
@click.pass_context
def simulate(ctx, seed, fleet_n, power, ambient, lam_ne, lam_pe, lli, defect,
             unbalanced, variation, ideal_sensors, cell_voltages, fmt):
    """Simulate charging traces with known ground truth."""
    out = _out_dir(ctx.obj["out"])
    request_base = {
        **_config_arg(ctx.obj["config"]),
        "power_w": power, "ambient_temp_c": ambient,
        "lam_ne": lam_ne, "lam_pe": lam_pe, "lli": lli,
        "defective_cells": _parse_defects(defect),
        "unbalanced": unbalanced, "cell_variation": variation,
        "ideal_sensors": ideal_sensors, "include_cell_voltages": cell_voltages,
        "format": fmt,
    }
    with _client(ctx) as client:
        for k in range(fleet_n):
            request = {**request_base, "seed": seed + k,
                       "label": f"seed{seed + k}"}
            result = client.simulate(**request)
            stem = f"{result['vehicle']}_seed{seed + k}"
            _write(out / f"{stem}.{fmt}", result["trace"])
            _write(out / f"{stem}.ground_truth.json",
                   json.dumps(result["ground_truth"], indent=2) + "\n")


@main.command()
@click.argument("trace", type=click.Path(exists=True))
@click.option("--window", default=None, metavar="LO:HI", help="Override the voltage window.")
@click.option("--skip-check", multiple=True, help="Disable a protocol check by id (repeatable).")
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv",
              show_default=True)
@click.pass_context
def validate(ctx, trace, window, skip_check, fmt):
    """Check a session trace against the measurement protocol."""
    out = _out_dir(ctx.obj["out"])
    options = _base_options(ctx, fmt=fmt, window=_parse_range(window, "--window"))
    options["disabled_checks"] = list(skip_check)
    payload = Path(trace).read_bytes()
    with _client(ctx) as client:
        result = client.validate(payload, Path(trace).name, options)
    _write(out / f"{Path(trace).stem}_validation.json", json.dumps(result, indent=2) + "\n")
    click.echo(f"verdict: {result['verdict']}")
    for finding in result["findings"]:
        status = "pass" if finding["passed"] else "FAIL"
        click.echo(f"  [{status}] {finding['check_id']}: {finding['detail']}")


@main.command()
@click.argument("trace", type=click.Path(exists=True))
@click.option("--window", default=None, metavar="LO:HI", help="Voltage window override.")
@click.option("--soc-window", default=None, metavar="A:B", help="Measure over a BMS-SOC window.")
@click.option("--initial-q", type=float, default=None, help="Initial-reference capacity Q_0 in Ah.")
@click.option("--initial-e", type=float, default=None, help="Initial-reference energy E_0 in kWh.")
@click.option("--skip-check", multiple=True)
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv",
              show_default=True)
@click.pass_context
def measure(ctx, trace, window, soc_window, initial_q, initial_e, skip_check, fmt):
    """Measure capacity/energy and state of health from one trace."""
    out = _out_dir(ctx.obj["out"])
    options = _base_options(ctx, fmt=fmt, window=_parse_range(window, "--window"),
                            soc_window=_parse_range(soc_window, "--soc-window"))
    options["disabled_checks"] = list(skip_check)
    if (initial_q is None) != (initial_e is None):
        raise click.BadParameter("--initial-q and --initial-e must be given together")
    if initial_q is not None:
        options["initial_reference"] = [initial_q, initial_e]
    payload = Path(trace).read_bytes()
    with _client(ctx) as client:
        result = client.measure(payload, Path(trace).name, options)
    if result["refused"]:
        raise click.ClickException(result["refusal_reason"])
    stem = Path(trace).stem
    _write(out / f"{stem}_measurement.json", json.dumps(result["report"], indent=2) + "\n")
    _write(out / f"{stem}_measurement.txt", result["report_text"])
    click.echo(result["report_text"], nl=False)


@main.command()
@click.argument("trace", type=click.Path(exists=True))
@click.option("--reference", "-r", type=click.Path(exists=True), required=True,
              help="Reference (earlier) session trace of the same pack.")
@click.option("--window", default=None, metavar="LO:HI")
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv",
              show_default=True)
@click.pass_context
def diagnose(ctx, trace, reference, window, fmt):
    """Derive degradation modes from differential voltage against a reference."""
    out = _out_dir(ctx.obj["out"])
    options = _base_options(ctx, fmt=fmt, window=_parse_range(window, "--window"))
    with _client(ctx) as client:
        result = client.diagnose(Path(trace).read_bytes(), Path(trace).name,
                                 Path(reference).read_bytes(), Path(reference).name,
                                 options)
    report = result["report"]
    stem = Path(trace).stem
    exports = report.pop("dv_exports")
    _write(out / f"{stem}_diagnosis.json", json.dumps(report, indent=2) + "\n")
    _write(out / f"{stem}_dv_aged.dat", exports["aged"])
    _write(out / f"{stem}_dv_reference.dat", exports["reference"])
    modes = report["degradation_modes"]
    for mode in ("lam_ne", "lam_pe", "lli"):
        value = modes[mode]
        click.echo(f"{mode:<8} " + ("absent" if value is None else f"{value * 100:6.2f} %"))
    for caveat in modes["caveats"]:
        click.echo(f"caveat: {caveat}")


@main.command()
@click.argument("traces", nargs=-1, required=True, type=click.Path(exists=True))
@click.option("--window", default=None, metavar="LO:HI")
@click.option("--soc-window", default=None, metavar="A:B")
@click.option("--format", "fmt", type=click.Choice(["csv", "jsonl"]), default="csv",
              show_default=True)
@click.pass_context
def fleet(ctx, traces, window, soc_window, fmt):
    """Compare several sessions of one vehicle model."""
    out = _out_dir(ctx.obj["out"])
    options = _base_options(ctx, fmt=fmt, window=_parse_range(window, "--window"),
                            soc_window=_parse_range(soc_window, "--soc-window"))
    uploads = [(Path(t).name, Path(t).read_bytes()) for t in traces]
    with _client(ctx) as client:
        result = client.fleet(uploads, options)
    report = result["report"]
    _write(out / "fleet_report.json", json.dumps(report, indent=2) + "\n")
    click.echo(f"vehicle: {report['vehicle']}  window: "
               f"{report['window_v'][0]:.0f}-{report['window_v'][1]:.0f} V")
    for entry in report["entries"]:
        volt = entry["voltage_window"]
        soc = entry["soc_window"]
        click.echo(
            f"  {entry['label']:<24} "
            + (f"E(window)={volt['e_calc_kwh']:.2f} kWh " if volt else "E(window)=refused ")
            + (f"E(soc)={soc['e_calc_kwh']:.2f} kWh " if soc else "")
            + f"terminal={entry['terminal_voltage_v']:.1f} V")
    for scheme, stats in report["spreads"].items():
        if "cv" in stats and stats.get("cv") is not None:
            click.echo(f"  {scheme}: min={stats['min']:.2f} max={stats['max']:.2f} "
                       f"cv={stats['cv'] * 100:.2f} %")
    for warning in report["warnings"]:
        click.echo(f"  warning: {warning}")


def entrypoint():  # pragma: no cover
    try:
        main()
    except (ServiceError, PackSohError) as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)


if __name__ == "__main__":
    entrypoint()
