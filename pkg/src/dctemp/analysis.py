"""Before/after analysis of power around detected setpoint changes."""

from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import asdict, dataclass, field, fields
from datetime import timedelta
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import stats
from .changepoint import ChangeDetectionError, ChangeEvent, DetectorConfig, detect_changes
from .telemetry import RoomTelemetry, TelemetrySeries, format_timestamp, parse_timestamp

logger = logging.getLogger(__name__)

ALPHA = 0.05
CI_Z = 1.96
TRANSITION_GUARD = timedelta(minutes=15)


class AnalysisError(ValueError):
    pass


def default_guard(grid_interval: timedelta) -> timedelta:
    """No guard on grids coarser than the ~15 min setpoint transition, 15 min otherwise."""
    return timedelta(0) if grid_interval > TRANSITION_GUARD else TRANSITION_GUARD


def _td64(d: timedelta) -> np.timedelta64:
    return np.timedelta64(int(round(d.total_seconds())), "s")


def _hours(d: timedelta) -> float:
    return d.total_seconds() / 3600.0


@dataclass(frozen=True)
class AnalysisResult:
    room_id: str
    event_time: np.datetime64
    window_length: timedelta
    n_before: int = 0
    n_after: int = 0
    temp_before: float = math.nan
    temp_after: float = math.nan
    mean_power_before: float = math.nan
    mean_power_after: float = math.nan
    pearson_r: float = math.nan
    pearson_p: float = math.nan
    spearman_rho: float = math.nan
    spearman_p: float = math.nan
    sensitivity_abs: float = math.nan  # kW per degC
    sensitivity_rel: float = math.nan  # % of before-window mean power per degC
    confounded: bool = False
    skipped_reason: str | None = None

    @property
    def ok(self) -> bool:
        return self.skipped_reason is None

    @property
    def window_hours(self) -> float:
        return _hours(self.window_length)


def _window_bounds(event_time, window_length: timedelta, guard: timedelta):
    e = np.datetime64(event_time, "s")
    L, g = _td64(window_length), _td64(guard)
    return e - g - L, e - g, e + g, e + g + L


def window_analysis(
    room: RoomTelemetry,
    event: ChangeEvent,
    window_length: timedelta,
    guard: timedelta = timedelta(0),
    neighbours: Iterable[ChangeEvent] = (),
) -> AnalysisResult:
    """Correlate temperature and power over the windows around ``event``.

    Before window is ``[t - guard - L, t - guard)``, after window is
    ``(t + guard, t + guard + L]``. Both windows are pooled; the absolute
    sensitivity is the OLS slope of power on temperature and the relative
    one divides it by the before-window mean power.
    """
    if window_length <= timedelta(0):
        raise ValueError("window_length must be positive")
    b0, b1, a0, a1 = _window_bounds(event.event_time, window_length, guard)
    if len(room) == 0 or room.times[0] > b0 or room.times[-1] < a1:
        raise AnalysisError("insufficient coverage")
    t = room.times
    before = (t >= b0) & (t < b1)
    after = (t > a0) & (t <= a1)
    n_b, n_a = int(before.sum()), int(after.sum())
    if n_b < 3 or n_a < 3:
        raise AnalysisError(f"too few samples ({n_b} before, {n_a} after)")

    pooled = before | after
    temp = room.temperature[pooled]
    power = room.power[pooled]
    try:
        corr = stats.correlate(temp, power)
        fit = stats.ols(temp, power)
    except stats.UndefinedCorrelationError as exc:
        raise AnalysisError(f"degenerate event: {exc}") from exc
    p_before = float(room.power[before].mean())

    confounded = any(
        n.room_id == event.room_id
        and n.event_time != event.event_time
        and b0 <= n.event_time <= a1
        for n in neighbours
    )
    return AnalysisResult(
        room_id=room.room_id,
        event_time=np.datetime64(event.event_time, "s"),
        window_length=window_length,
        n_before=n_b,
        n_after=n_a,
        temp_before=float(room.temperature[before].mean()),
        temp_after=float(room.temperature[after].mean()),
        mean_power_before=p_before,
        mean_power_after=float(room.power[after].mean()),
        pearson_r=corr.pearson_r,
        pearson_p=corr.pearson_p,
        spearman_rho=corr.spearman_rho,
        spearman_p=corr.spearman_p,
        sensitivity_abs=fit.slope,
        sensitivity_rel=100.0 * fit.slope / p_before if p_before != 0 else math.nan,
        confounded=confounded,
    )


def plot_data(room: RoomTelemetry, event: ChangeEvent, window_length: timedelta, guard: timedelta = timedelta(0)) -> str:
    """``timestamp,temperature,power,window_tag`` rows spanning both windows."""
    b0, b1, a0, a1 = _window_bounds(event.event_time, window_length, guard)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["timestamp", "temperature", "power", "window_tag"])
    for t, temp, p in zip(room.times, room.temperature, room.power):
        if t < b0 or t > a1:
            continue
        tag = "before" if t < b1 else ("after" if t > a0 else "guard")
        w.writerow([format_timestamp(t), repr(float(temp)), repr(float(p)), tag])
    return buf.getvalue()


@dataclass(frozen=True)
class MatchedComparison:
    event_time: np.datetime64
    before_start: np.datetime64
    after_start: np.datetime64
    window_length: timedelta
    before_power: np.ndarray
    after_power: np.ndarray
    mean_before: float
    mean_after: float
    relative_change: float  # percent
    p_value: float
    significant: bool
    temp_change: float = math.nan

    @property
    def direction(self) -> str:
        """Sign of the temperature/power association implied by the comparison."""
        s = np.sign(self.relative_change) * (np.sign(self.temp_change) if not math.isnan(self.temp_change) else 1.0)
        return "positive" if s > 0 else ("negative" if s < 0 else "none")


def _power_series(series: RoomTelemetry | TelemetrySeries) -> tuple[np.ndarray, np.ndarray]:
    if isinstance(series, RoomTelemetry):
        return series.times, series.power
    return series.times, series.values


def matched_window_analysis(
    series: RoomTelemetry | TelemetrySeries,
    event: ChangeEvent,
    days_before: int,
    days_after: int,
    window_length: timedelta = timedelta(hours=1),
    alpha: float = ALPHA,
) -> MatchedComparison:
    """Compare power in two windows at the same weekday and time of day.

    Windows start ``days_before`` days before and ``days_after`` days after
    the event and last ``window_length``; the test is a two-sided Welch t-test.
    """
    if days_before < 0 or days_after < 0:
        raise ValueError("day offsets must be non-negative")
    if (days_before + days_after) % 7 != 0:
        raise ValueError("days_before + days_after must be a multiple of 7 to match weekdays")
    times, power = _power_series(series)
    e = np.datetime64(event.event_time, "s")
    L = _td64(window_length)
    b0 = e - np.timedelta64(days_before * 86400, "s")
    a0 = e + np.timedelta64(days_after * 86400, "s")
    if len(times) < 2:
        raise AnalysisError("insufficient coverage")
    spacing = np.median(np.diff(times))
    if times[0] > b0 or times[-1] + spacing < a0 + L:
        raise AnalysisError("insufficient coverage")
    before = power[(times >= b0) & (times < b0 + L)]
    after = power[(times >= a0) & (times < a0 + L)]
    if len(before) < 3 or len(after) < 3:
        raise AnalysisError(f"too few samples ({len(before)} before, {len(after)} after)")
    mb, ma = float(before.mean()), float(after.mean())
    test = stats.welch_ttest(before, after)
    return MatchedComparison(
        event_time=e,
        before_start=b0,
        after_start=a0,
        window_length=window_length,
        before_power=before,
        after_power=after,
        mean_before=mb,
        mean_after=ma,
        relative_change=100.0 * (ma - mb) / mb,
        p_value=test.p_value,
        significant=test.p_value < alpha,
        temp_change=event.magnitude,
    )


def batch_analysis(
    rooms: Sequence[RoomTelemetry],
    cfg: DetectorConfig = DetectorConfig(),
    window_lengths: Sequence[timedelta] = (timedelta(days=1),),
    guard: timedelta | None = None,
    events: Sequence[ChangeEvent] | None = None,
) -> list[AnalysisResult]:
    """Detect changes in every room and analyse each (event, window) pair.

    Pass ``events`` to skip detection. Pairs that cannot be analysed are
    kept as rows with ``skipped_reason`` set, so the row count is always
    events x windows.
    """
    if not window_lengths:
        raise ValueError("at least one window length is required")
    windows = sorted(window_lengths)
    results: list[AnalysisResult] = []
    for room in sorted(rooms, key=lambda r: r.room_id):
        if events is None:
            try:
                room_events = detect_changes(room, cfg)
            except ChangeDetectionError as exc:
                logger.warning("room %s: %s", room.room_id, exc)
                room_events = []
        else:
            room_events = sorted((e for e in events if e.room_id == room.room_id), key=lambda e: e.event_time)
        g = default_guard(room.grid_interval) if guard is None else guard
        for event in room_events:
            for L in windows:
                try:
                    results.append(window_analysis(room, event, L, g, neighbours=room_events))
                except AnalysisError as exc:
                    results.append(
                        AnalysisResult(room.room_id, np.datetime64(event.event_time, "s"), L, skipped_reason=str(exc))
                    )
    return results


@dataclass
class WindowStats:
    n: int
    mean: float
    q1: float
    median: float
    q3: float
    min: float
    max: float


@dataclass
class Tally:
    positive_significant: int = 0
    positive_not_significant: int = 0
    negative_significant: int = 0
    negative_not_significant: int = 0

    @property
    def positive(self) -> int:
        return self.positive_significant + self.positive_not_significant

    @property
    def negative(self) -> int:
        return self.negative_significant + self.negative_not_significant


@dataclass
class BatchSummary:
    n_results: int
    n_skipped: int
    mean_sensitivity: float
    ci_half_width: float
    per_window: dict[float, WindowStats] = field(default_factory=dict)
    anova_f: float | None = None
    anova_p: float | None = None
    regression_slope: float | None = None
    regression_intercept: float | None = None
    regression_r2: float | None = None
    tally: dict[float, Tally] = field(default_factory=dict)
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["per_window"] = {f"{k:g}": asdict(v) for k, v in self.per_window.items()}
        d["tally"] = {f"{k:g}": asdict(v) for k, v in self.tally.items()}
        return _json_safe(d)


def _json_safe(obj):
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, list):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def summarize_batch(results: Sequence[AnalysisResult], alpha: float = ALPHA) -> BatchSummary:
    ok = [r for r in results if r.ok and math.isfinite(r.sensitivity_rel)]
    summary = BatchSummary(
        n_results=len(ok),
        n_skipped=len(results) - len(ok),
        mean_sensitivity=math.nan,
        ci_half_width=math.nan,
    )
    if not ok:
        summary.notes.append("no analysable results")
        return summary

    sens = np.array([r.sensitivity_rel for r in ok])
    summary.mean_sensitivity = float(sens.mean())
    summary.ci_half_width = float(CI_Z * sens.std(ddof=1) / math.sqrt(len(sens))) if len(sens) > 1 else 0.0

    groups: dict[float, list[AnalysisResult]] = {}
    for r in ok:
        groups.setdefault(r.window_hours, []).append(r)
    for w in sorted(groups):
        vals = np.array([r.sensitivity_rel for r in groups[w]])
        q1, med, q3 = np.percentile(vals, [25, 50, 75])
        summary.per_window[w] = WindowStats(len(vals), float(vals.mean()), float(q1), float(med), float(q3), float(vals.min()), float(vals.max()))
        tally = Tally()
        for r in groups[w]:
            sig = r.pearson_p < alpha
            if r.pearson_r > 0:
                if sig:
                    tally.positive_significant += 1
                else:
                    tally.positive_not_significant += 1
            elif r.pearson_r < 0:
                if sig:
                    tally.negative_significant += 1
                else:
                    tally.negative_not_significant += 1
        summary.tally[w] = tally

    if len(groups) >= 2:
        try:
            a = stats.one_way_anova([[r.sensitivity_rel for r in groups[w]] for w in sorted(groups)])
            summary.anova_f, summary.anova_p = a.f, a.p_value
        except ValueError as exc:
            summary.notes.append(f"ANOVA skipped: {exc}")
    else:
        summary.notes.append("ANOVA skipped: fewer than two window lengths")

    if len(ok) >= 3:
        try:
            fit = stats.ols([r.temp_before for r in ok], sens)
            summary.regression_slope, summary.regression_intercept, summary.regression_r2 = fit
        except stats.UndefinedCorrelationError as exc:
            summary.notes.append(f"regression skipped: {exc}")
    else:
        summary.notes.append("regression skipped: fewer than three results")
    return summary


RESULT_COLUMNS = [
    "room_id", "event_time", "window_hours", "n_before", "n_after",
    "temp_before", "temp_after", "mean_power_before", "mean_power_after",
    "pearson_r", "pearson_p", "spearman_rho", "spearman_p",
    "sensitivity_abs", "sensitivity_rel", "confounded", "skipped_reason",
]


def results_to_csv(results: Sequence[AnalysisResult]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RESULT_COLUMNS)
    for r in results:
        row = []
        for col in RESULT_COLUMNS:
            if col == "event_time":
                row.append(format_timestamp(r.event_time))
            elif col == "window_hours":
                row.append(f"{r.window_hours:g}")
            elif col == "confounded":
                row.append("true" if r.confounded else "false")
            elif col == "skipped_reason":
                row.append(r.skipped_reason or "")
            else:
                v = getattr(r, col)
                row.append(repr(float(v)) if isinstance(v, float) else str(v))
        w.writerow(row)
    return buf.getvalue()


def read_results_csv(path: str | Path) -> list[AnalysisResult]:
    """Parse a results CSV written by :func:`results_to_csv`."""
    types = {f.name: f.type for f in fields(AnalysisResult)}
    out = []
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(RESULT_COLUMNS) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        for lineno, row in enumerate(reader, start=2):
            try:
                kw = {
                    "room_id": row["room_id"],
                    "event_time": parse_timestamp(row["event_time"]),
                    "window_length": timedelta(hours=float(row["window_hours"])),
                    "confounded": row["confounded"].strip().lower() == "true",
                    "skipped_reason": row["skipped_reason"] or None,
                }
                for name in RESULT_COLUMNS[3:15]:
                    kw[name] = int(row[name]) if types[name] == "int" else float(row[name])
            except (ValueError, KeyError) as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from exc
            out.append(AnalysisResult(**kw))
    return out
