"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error. Diagnostics go to
stderr; data goes to files (written atomically) or stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from dataclasses import replace
from datetime import timedelta
from pathlib import Path

from . import analysis, changepoint, optimizer, simulator
from .physics import PlantConfig
from .report import emit_report
from .telemetry import TelemetryError, format_timestamp, load_rooms, parse_telemetry_csv

logger = logging.getLogger("dctemp")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
DEFAULT_WINDOWS = "24,48,168,336,720"


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _hours_list(text: str) -> list[timedelta]:
    try:
        hours = [float(h) for h in text.split(",") if h.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"not a comma-separated list of hours: {text!r}")
    if not hours or any(h <= 0 for h in hours):
        raise argparse.ArgumentTypeError("window lengths must be positive hours")
    return [timedelta(hours=h) for h in hours]


def _positive(text: str) -> float:
    v = float(text)
    if v <= 0:
        raise argparse.ArgumentTypeError(f"must be positive: {text}")
    return v


def _day_pair(text: str) -> tuple[int, int]:
    try:
        before, after = (int(x) for x in text.split(":"))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected DAYS_BEFORE:DAYS_AFTER, got {text!r}")
    if before < 0 or after < 0 or (before + after) % 7:
        raise argparse.ArgumentTypeError("day offsets must be non-negative and sum to a multiple of 7")
    return before, after


def write_atomically(files: dict[Path, str]) -> None:
    """Write every file via temp file + rename; nothing is left behind on failure."""
    staged: list[tuple[str, Path]] = []
    try:
        for path, text in files.items():
            path.parent.mkdir(parents=True, exist_ok=True)
            fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
            staged.append((tmp, path))
            with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        for tmp, path in staged:
            os.replace(tmp, path)
    finally:
        for tmp, _ in staged:
            if os.path.exists(tmp):
                os.unlink(tmp)



def _detector(args) -> changepoint.DetectorConfig:
    refractory = None if args.refractory_hours is None else timedelta(hours=args.refractory_hours)
    return changepoint.DetectorConfig(timedelta(hours=args.window_hours), args.threshold, refractory)


def _add_detector_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--window-hours", type=_positive, default=12.0, help="rolling window length in hours (default: 12)")
    p.add_argument("--threshold", type=_positive, default=0.8, help="mean-difference threshold in degC (default: 0.8)")
    p.add_argument("--refractory-hours", type=_positive, default=None,
                   help="minimum spacing between reported events (default: the window length)")


def cmd_detect(args) -> int:
    rooms = load_rooms(args.rooms)
    events = changepoint.detect_all(rooms, _detector(args))
    logger.info("detected %d change(s) in %d room(s)", len(events), len(rooms))
    files = {}
    if args.summary:
        files[Path(args.summary)] = json.dumps(changepoint.summarize_changes(events).to_dict(), indent=2) + "\n"
    text = changepoint.events_to_csv(events)
    if args.out and args.out != "-":
        files[Path(args.out)] = text
    else:
        sys.stdout.write(text)
    write_atomically(files)
    return EXIT_OK


def cmd_analyze(args) -> int:
    rooms = load_rooms(args.rooms)
    guard = None if args.guard_minutes is None else timedelta(minutes=args.guard_minutes)
    events = changepoint.read_events_csv(args.events) if args.events else changepoint.detect_all(rooms, _detector(args))
    results = analysis.batch_analysis(rooms, _detector(args), args.windows, guard, events=events)
    summary = analysis.summarize_batch(results, alpha=args.alpha)
    out = Path(args.out)
    files = {
        out / "results.csv": analysis.results_to_csv(results),
        out / "summary.json": json.dumps(summary.to_dict(), indent=2, sort_keys=True) + "\n",
    }
    if not args.no_plots:
        by_room = {r.room_id: r for r in rooms}
        for res in results:
            if not res.ok:
                continue
            room = by_room[res.room_id]
            event = next(e for e in events if e.room_id == res.room_id and e.event_time == res.event_time)
            g = analysis.default_guard(room.grid_interval) if guard is None else guard
            stamp = format_timestamp(res.event_time).replace(":", "").replace("-", "")
            name = f"{res.room_id}_{stamp}_{res.window_hours:g}h.csv"
            files[out / "plots" / name] = analysis.plot_data(room, event, res.window_length, g)
    if args.building:
        files[out / "matched.csv"] = _matched_csv(args, events)
    write_atomically(files)
    logger.info("%d analyses (%d skipped) written to %s", len(results), summary.n_skipped, out)
    return EXIT_OK


def _matched_csv(args, events) -> str:
    building = parse_telemetry_csv(args.building, "power", "building")
    days_before, days_after = args.matched_days
    window = timedelta(hours=args.matched_window_hours)
    lines = ["room_id,event_time,days_before,days_after,window_hours,mean_before,mean_after,"
             "relative_change,p_value,significant,direction,skipped_reason"]
    for e in sorted(events, key=lambda e: (e.room_id, e.event_time)):
        head = f"{e.room_id},{format_timestamp(e.event_time)},{days_before},{days_after},{args.matched_window_hours:g}"
        try:
            m = analysis.matched_window_analysis(building, e, days_before, days_after, window, args.alpha)
        except analysis.AnalysisError as exc:
            lines.append(f"{head},,,,,,,{exc}")
            continue
        lines.append(f"{head},{m.mean_before!r},{m.mean_after!r},{m.relative_change!r},{m.p_value!r},"
                     f"{'true' if m.significant else 'false'},{m.direction},")
    return "\n".join(lines) + "\n"


def cmd_simulate(args) -> int:
    scenario = simulator.Scenario.from_json(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    sim = simulator.simulate(scenario)
    out = Path(args.out)
    files = {out / name: text for name, text in sim.render(scenario.grid_interval).items()}
    files[out / "scenario.resolved.json"] = scenario.to_json() + "\n"
    write_atomically(files)
    logger.info("simulated %d room(s), %d steps, into %s", len(sim.rooms), len(sim.times), out)
    return EXIT_OK


def _plant(args) -> PlantConfig:
    plant = PlantConfig.from_json(args.plant) if args.plant else PlantConfig()
    if args.fan_fraction is not None:
        plant = replace(plant, fan=replace(plant.fan, reference_fan_fraction=args.fan_fraction))
    if args.cop is not None:
        plant = replace(plant, chiller=replace(plant.chiller, reference_cop=args.cop))
    if args.cop_gain is not None:
        plant = replace(plant, chiller=replace(plant.chiller, cop_gain_per_degC=args.cop_gain))
    if args.no_economizer:
        plant = replace(plant, economizer=replace(plant.economizer, enabled=False))
    return plant


def cmd_optimize(args) -> int:
    plant = _plant(args)
    outdoor = simulator.OutdoorModel(args.outdoor_mean, args.outdoor_seasonal, args.outdoor_diurnal)
    load_shape = simulator.LoadShape(daily_amplitude_pct=args.daily_amplitude, weekend_ratio=args.weekend_ratio)
    load, temps = optimizer.representative_year(args.base_kw, load_shape, outdoor)
    if not args.t_min < args.t_max:
        raise UsageError("--t-min must be below --t-max")
    result = optimizer.find_sweet_spot(plant, load, temps, args.t_min, args.t_max, args.tol, args.step)
    out = Path(args.out)
    write_atomically({out / "curve.csv": result.curve.to_csv(), out / "result.json": result.to_json()})
    logger.info("sweet spot %.2f degC (%.3f kW mean)", result.optimal_t, result.optimal_power)
    return EXIT_OK


def cmd_report(args) -> int:
    results = analysis.read_results_csv(args.results)
    sys.stdout.write(emit_report(results, alpha=args.alpha))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="dctemp", description="Inlet-temperature change analysis for data-centre telemetry.")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = sub.add_parser("detect", help="detect setpoint changes; writes the events CSV")
    d.add_argument("--rooms", required=True, help="directory of room manifests (*.json)")
    _add_detector_args(d)
    d.add_argument("--out", help="events CSV path (default: stdout)")
    d.add_argument("--summary", help="optional change-summary JSON path")
    d.set_defaults(func=cmd_detect)

    a = sub.add_parser("analyze", help="per-event window analysis; writes results.csv, summary.json, plots/")
    a.add_argument("--rooms", required=True, help="directory of room manifests (*.json)")
    a.add_argument("--windows", type=_hours_list, default=_hours_list(DEFAULT_WINDOWS),
                   help=f"comma-separated window lengths in hours (default: {DEFAULT_WINDOWS})")
    a.add_argument("--guard-minutes", type=float, default=None,
                   help="gap excluded on both sides of each event (default: 15 on grids of 15 min or finer, else 0)")
    a.add_argument("--events", help="use this events CSV instead of running detection")
    _add_detector_args(a)
    a.add_argument("--alpha", type=_positive, default=0.05, help="significance level (default: 0.05)")
    a.add_argument("--building", help="building power CSV for matched weekday comparisons")
    a.add_argument("--matched-days", type=_day_pair, default=(7, 7),
                   help="DAYS_BEFORE:DAYS_AFTER for matched windows (default: 7:7)")
    a.add_argument("--matched-window-hours", type=_positive, default=1.0, help="matched window length (default: 1)")
    a.add_argument("--no-plots", action="store_true", help="skip per-analysis plot-data CSVs")
    a.add_argument("--out", required=True, help="output directory")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("simulate", help="generate telemetry CSVs from a scenario JSON")
    s.add_argument("--scenario", required=True)
    s.add_argument("--seed", type=int, default=None, help="override the scenario seed")
    s.add_argument("--out", required=True, help="output directory")
    s.set_defaults(func=cmd_simulate)

    o = sub.add_parser("optimize", help="find the setpoint minimising mean building power")
    o.add_argument("--plant", help="PlantConfig JSON (default: built-in defaults)")
    o.add_argument("--fan-fraction", type=float, default=None, help="override fan power share at 24 degC (default: 0.043)")
    o.add_argument("--cop", type=_positive, default=None, help="override reference chiller COP (default: 4.0)")
    o.add_argument("--cop-gain", type=float, default=None, help="override COP gain per degC (default: 0.0315)")
    o.add_argument("--no-economizer", action="store_true", help="disable free cooling")
    o.add_argument("--t-min", type=float, default=18.0, help="lowest setpoint in degC (default: 18)")
    o.add_argument("--t-max", type=float, default=32.0, help="highest setpoint in degC (default: 32)")
    o.add_argument("--step", type=_positive, default=0.1, help="coarse sweep step in degC (default: 0.1)")
    o.add_argument("--tol", type=_positive, default=0.01, help="refinement tolerance in degC (default: 0.01)")
    o.add_argument("--base-kw", type=_positive, default=1000.0, help="mean compute load in kW (default: 1000)")
    o.add_argument("--daily-amplitude", type=float, default=10.0, help="daily load swing in %% (default: 10)")
    o.add_argument("--weekend-ratio", type=float, default=0.8, help="weekend/weekday load ratio (default: 0.8)")
    o.add_argument("--outdoor-mean", type=float, default=10.0, help="annual mean outdoor temperature (default: 10)")
    o.add_argument("--outdoor-seasonal", type=float, default=8.0, help="seasonal amplitude in degC (default: 8)")
    o.add_argument("--outdoor-diurnal", type=float, default=5.0, help="diurnal amplitude in degC (default: 5)")
    o.add_argument("--seed", type=int, default=None, help="accepted for symmetry; the optimisation is deterministic")
    o.add_argument("--out", required=True, help="output directory")
    o.set_defaults(func=cmd_optimize)

    r = sub.add_parser("report", help="print a text summary of a results CSV")
    r.add_argument("--results", required=True)
    r.add_argument("--alpha", type=_positive, default=0.05)
    r.set_defaults(func=cmd_report)
    return p


def run(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"dctemp: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (TelemetryError, ValueError, KeyError, OSError, json.JSONDecodeError) as exc:
        print(f"dctemp: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
