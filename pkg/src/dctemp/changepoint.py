"""Setpoint change detection with two adjacent rolling windows.

A boundary slides across the room's temperature grid; at each position the
mean of the window just before it is compared with the mean of the window
just after it. Runs of boundaries where the absolute difference exceeds the
threshold are reduced to the single boundary with the largest difference.
"""

from __future__ import annotations

import csv
import io
import math
from collections import Counter
from dataclasses import dataclass, field
from datetime import timedelta
from pathlib import Path

import numpy as np

from .telemetry import RoomTelemetry, format_timestamp, parse_timestamp

EVENT_COLUMNS = ["room_id", "event_time", "temp_before", "temp_after", "magnitude"]


class ChangeDetectionError(ValueError):
    pass


@dataclass(frozen=True)
class ChangeEvent:
    room_id: str
    event_time: np.datetime64  # first grid point of the new regime
    temp_before: float
    temp_after: float

    @property
    def magnitude(self) -> float:
        return self.temp_after - self.temp_before


@dataclass(frozen=True)
class DetectorConfig:
    window: timedelta = timedelta(hours=12)
    threshold: float = 0.8
    refractory: timedelta | None = None  # defaults to ``window``

    def __post_init__(self):
        if self.window <= timedelta(0):
            raise ValueError("window must be positive")
        if not self.threshold > 0:
            raise ValueError("threshold must be positive")
        if self.refractory is not None and self.refractory < timedelta(0):
            raise ValueError("refractory must be non-negative")

    @property
    def refractory_span(self) -> timedelta:
        return self.window if self.refractory is None else self.refractory


def window_mean_difference(values: np.ndarray, w: int) -> np.ndarray:
    """``after - before`` mean for every boundary index ``i`` in ``[w, n - w]``."""
    c = np.concatenate([[0.0], np.cumsum(values, dtype=float)])
    i = np.arange(w, len(values) - w + 1)
    before = (c[i] - c[i - w]) / w
    after = (c[i + w] - c[i]) / w
    return after - before


def detect_changes(room: RoomTelemetry, cfg: DetectorConfig = DetectorConfig()) -> list[ChangeEvent]:
    step = room.interval_seconds
    w = int(round(cfg.window.total_seconds() / step))
    if w < 1:
        raise ChangeDetectionError("detector window is shorter than the grid interval")
    n = len(room)
    if n < 2 * w:
        raise ChangeDetectionError(
            f"room {room.room_id!r}: {n} grid points cannot hold two {cfg.window} windows"
        )

    diff = window_mean_difference(room.temperature, w)
    over = np.abs(diff) > cfg.threshold
    candidates: list[int] = []
    k = 0
    while k < len(diff):
        if not over[k]:
            k += 1
            continue
        sign = np.sign(diff[k])
        j = k
        while j < len(diff) and over[j] and np.sign(diff[j]) == sign:
            j += 1
        candidates.append(k + int(np.argmax(np.abs(diff[k:j]))))
        k = j

    refractory = np.timedelta64(int(cfg.refractory_span.total_seconds()), "s")
    kept: list[int] = []
    for c in candidates:
        if kept and room.times[c + w] - room.times[kept[-1] + w] < refractory:
            if abs(diff[c]) > abs(diff[kept[-1]]):
                kept[-1] = c
            continue
        kept.append(c)

    events = []
    for c in kept:
        i = c + w
        events.append(
            ChangeEvent(
                room_id=room.room_id,
                event_time=room.times[i],
                temp_before=float(room.temperature[i - w : i].mean()),
                temp_after=float(room.temperature[i : i + w].mean()),
            )
        )
    return events


def detect_all(rooms: list[RoomTelemetry], cfg: DetectorConfig = DetectorConfig()) -> list[ChangeEvent]:
    events = [e for room in rooms for e in detect_changes(room, cfg)]
    return sorted(events, key=lambda e: (e.room_id, e.event_time))


@dataclass
class ChangeSummary:
    total: int = 0
    per_room: dict[str, int] = field(default_factory=dict)
    per_month: dict[str, int] = field(default_factory=dict)
    magnitude_histogram: dict[float, int] = field(default_factory=dict)
    bin_width: float = 0.5

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "per_room": self.per_room,
            "per_month": self.per_month,
            "magnitude_histogram": {f"{k:g}": v for k, v in self.magnitude_histogram.items()},
            "bin_width": self.bin_width,
        }


def summarize_changes(events: list[ChangeEvent], bin_width: float = 0.5) -> ChangeSummary:
    """Counts per room, per calendar month and per signed-magnitude bin.

    Months and bins without events are left out.
    """
    rooms = Counter(e.room_id for e in events)
    months = Counter(str(np.datetime64(e.event_time, "M")) for e in events)
    bins = Counter(math.floor(e.magnitude / bin_width) * bin_width for e in events)
    return ChangeSummary(
        total=len(events),
        per_room=dict(sorted(rooms.items())),
        per_month=dict(sorted(months.items())),
        magnitude_histogram=dict(sorted(bins.items())),
        bin_width=bin_width,
    )


def events_to_csv(events: list[ChangeEvent]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(EVENT_COLUMNS)
    for e in sorted(events, key=lambda e: (e.room_id, e.event_time)):
        writer.writerow([e.room_id, format_timestamp(e.event_time), repr(e.temp_before), repr(e.temp_after), repr(e.magnitude)])
    return buf.getvalue()


def read_events_csv(path: str | Path) -> list[ChangeEvent]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        missing = set(EVENT_COLUMNS[:4]) - set(reader.fieldnames or [])
        if missing:
            raise ValueError(f"{path}: missing columns {sorted(missing)}")
        return [
            ChangeEvent(
                room_id=row["room_id"],
                event_time=parse_timestamp(row["event_time"]),
                temp_before=float(row["temp_before"]),
                temp_after=float(row["temp_after"]),
            )
            for row in reader
        ]
