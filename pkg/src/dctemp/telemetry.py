"""Telemetry ingestion: CSV parsing, outlier cleaning, forward-fill resampling
and aggregation of physical sensors into per-room virtual sensors.

Timestamps are held as ``numpy.datetime64[s]`` arrays in UTC.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

TEMPERATURE_BOUNDS = (0.0, 60.0)
POWER_MEDIAN_FACTOR = 10.0


class SensorKind(str, Enum):
    TEMPERATURE = "temperature"
    POWER = "power"


class TelemetryError(ValueError):
    """Raised for unreadable or unusable telemetry input."""


def _seconds(d: timedelta | float | int) -> int:
    if isinstance(d, timedelta):
        return int(round(d.total_seconds()))
    return int(round(d))


@dataclass(frozen=True)
class TelemetrySeries:
    sensor_id: str
    kind: SensorKind
    times: np.ndarray  # datetime64[s], strictly increasing
    values: np.ndarray
    skipped_rows: int = 0

    def __post_init__(self):
        times = np.asarray(self.times, dtype="datetime64[s]")
        values = np.asarray(self.values, dtype=float)
        if times.shape != values.shape or times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if len(times) > 1 and not np.all(np.diff(times) > np.timedelta64(0, "s")):
            raise ValueError(f"{self.sensor_id}: timestamps must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "kind", SensorKind(self.kind))

    def __len__(self) -> int:
        return len(self.times)


@dataclass(frozen=True)
class RoomTelemetry:
    """Room-mean inlet temperature and room-total power on a uniform grid."""

    room_id: str
    grid_interval: timedelta
    times: np.ndarray
    temperature: np.ndarray
    power: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype="datetime64[s]")
        temperature = np.asarray(self.temperature, dtype=float)
        power = np.asarray(self.power, dtype=float)
        if not (times.shape == temperature.shape == power.shape):
            raise ValueError("times, temperature and power must have equal length")
        step = np.timedelta64(_seconds(self.grid_interval), "s")
        if step <= np.timedelta64(0, "s"):
            raise ValueError("grid_interval must be positive")
        if len(times) > 1 and not np.all(np.diff(times) == step):
            raise ValueError(f"{self.room_id}: timestamps are not on a uniform grid")
        if np.isnan(temperature).any() or np.isnan(power).any():
            raise ValueError(f"{self.room_id}: missing values on the grid")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "temperature", temperature)
        object.__setattr__(self, "power", power)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def interval_seconds(self) -> int:
        return _seconds(self.grid_interval)

    def span(self) -> timedelta:
        if len(self.times) == 0:
            return timedelta(0)
        return timedelta(seconds=int((self.times[-1] - self.times[0]) / np.timedelta64(1, "s")))


@dataclass
class RoomManifest:
    room_id: str
    temperature_files: list[Path]
    power_files: list[Path]
    grid_interval: timedelta = timedelta(hours=1)
    temperature_bounds: tuple[float, float] = TEMPERATURE_BOUNDS
    # None means [0, 10 x median of the sensor]
    power_bounds: tuple[float, float] | None = None
    base_dir: Path = field(default_factory=Path)

    def __post_init__(self):
        if not self.temperature_files or not self.power_files:
            raise TelemetryError(
                f"room {self.room_id!r}: manifest needs at least one temperature and one power file"
            )

    @classmethod
    def from_json(cls, path: str | Path) -> "RoomManifest":
        path = Path(path)
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise TelemetryError(f"cannot read manifest {path}: {exc}") from exc
        return cls.from_dict(doc, base_dir=path.parent)

    @classmethod
    def from_dict(cls, doc: dict, base_dir: str | Path = ".") -> "RoomManifest":
        base_dir = Path(base_dir)
        if not isinstance(doc, dict):
            raise TelemetryError("manifest must be a JSON object")
        bounds = doc.get("clean_bounds") or {}
        temp_bounds = tuple(bounds.get("temperature", TEMPERATURE_BOUNDS))
        power_bounds = bounds.get("power")
        try:
            return cls(
                room_id=str(doc["room_id"]),
                temperature_files=[base_dir / p for p in doc["temperature_files"]],
                power_files=[base_dir / p for p in doc["power_files"]],
                grid_interval=timedelta(seconds=float(doc.get("grid_interval_seconds", 3600))),
                temperature_bounds=(float(temp_bounds[0]), float(temp_bounds[1])),
                power_bounds=None if power_bounds is None else (float(power_bounds[0]), float(power_bounds[1])),
                base_dir=base_dir,
            )
        except KeyError as exc:
            raise TelemetryError(f"manifest missing field {exc}") from exc

    def to_dict(self) -> dict:
        def rel(p: Path) -> str:
            try:
                return str(Path(p).relative_to(self.base_dir))
            except ValueError:
                return str(p)

        bounds: dict = {"temperature": list(self.temperature_bounds)}
        if self.power_bounds is not None:
            bounds["power"] = list(self.power_bounds)
        return {
            "room_id": self.room_id,
            "temperature_files": [rel(p) for p in self.temperature_files],
            "power_files": [rel(p) for p in self.power_files],
            "grid_interval_seconds": _seconds(self.grid_interval),
            "clean_bounds": bounds,
        }


def parse_timestamp(text: str) -> np.datetime64:
    """Parse an ISO 8601 timestamp; naive values are taken as UTC."""
    text = text.strip()
    if text.endswith(("Z", "z")):
        text = text[:-1] + "+00:00"
    dt = datetime.fromisoformat(text)
    if dt.tzinfo is not None:
        dt = dt.astimezone(timezone.utc).replace(tzinfo=None)
    return np.datetime64(dt.replace(microsecond=0), "s")


def format_timestamp(t: np.datetime64) -> str:
    return str(np.datetime64(t, "s")) + "Z"


def parse_telemetry_csv(path: str | Path, kind: SensorKind | str, sensor_id: str | None = None) -> TelemetrySeries:
    """Read a ``timestamp,value`` CSV file.

    Rows that fail to parse are skipped and counted in ``skipped_rows``; a
    leading header row is not counted. Duplicate timestamps keep the last
    value seen in file order.
    """
    path = Path(path)
    kind = SensorKind(kind)
    try:
        with path.open(newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
    except (OSError, UnicodeDecodeError) as exc:
        raise TelemetryError(f"cannot read {path}: {exc}") from exc

    if rows and rows[0] and rows[0][0].strip().lower() == "timestamp":
        rows = rows[1:]

    latest: dict[np.datetime64, float] = {}
    skipped = 0
    for row in rows:
        if not row or all(not c.strip() for c in row):
            continue
        try:
            if len(row) != 2:
                raise ValueError("expected two columns")
            t = parse_timestamp(row[0])
            v = float(row[1])
            if not np.isfinite(v):
                raise ValueError("non-finite value")
        except ValueError:
            skipped += 1
            continue
        latest[t] = v
    if not latest:
        raise TelemetryError(f"{path}: no parseable rows")
    if skipped:
        logger.warning("%s: skipped %d malformed row(s)", path, skipped)

    times = np.array(sorted(latest), dtype="datetime64[s]")
    values = np.array([latest[t] for t in times], dtype=float)
    return TelemetrySeries(sensor_id or path.stem, kind, times, values, skipped_rows=skipped)


def write_telemetry_csv(path: str | Path | None, times: np.ndarray, values: np.ndarray) -> str:
    """Render a series in the ``timestamp,value`` format; returns the text and writes it if path given."""
    lines = ["timestamp,value"]
    lines.extend(f"{format_timestamp(t)},{float(v)!r}" for t, v in zip(times, values))
    text = "\n".join(lines) + "\n"
    if path is not None:
        Path(path).write_text(text, encoding="utf-8")
    return text


def default_bounds(s: TelemetrySeries) -> tuple[float, float]:
    if s.kind is SensorKind.TEMPERATURE:
        return TEMPERATURE_BOUNDS
    median = float(np.median(s.values[s.values >= 0])) if np.any(s.values >= 0) else 0.0
    return (0.0, POWER_MEDIAN_FACTOR * median if median > 0 else np.inf)


def clean_outliers(s: TelemetrySeries, lo: float, hi: float) -> tuple[TelemetrySeries, int]:
    """Replace values outside ``[lo, hi]`` by time-linear interpolation.

    Leading and trailing outliers take the nearest in-range value.
    Returns the cleaned series and the number of replaced samples.
    """
    if not lo < hi:
        raise ValueError("lo must be smaller than hi")
    ok = (s.values >= lo) & (s.values <= hi)
    n_bad = int(np.count_nonzero(~ok))
    if n_bad == 0:
        return s, 0
    if not ok.any():
        raise TelemetryError(f"{s.sensor_id}: all values outside [{lo}, {hi}]")
    t = s.times.astype(np.int64).astype(float)
    values = s.values.copy()
    # np.interp clamps to the end values outside the good range
    values[~ok] = np.interp(t[~ok], t[ok], s.values[ok])
    return TelemetrySeries(s.sensor_id, s.kind, s.times, values, s.skipped_rows), n_bad


def grid_origin(t: np.datetime64, interval: timedelta) -> np.datetime64:
    """Truncate ``t`` down to a multiple of ``interval`` since the epoch."""
    step = _seconds(interval)
    secs = int(np.datetime64(t, "s").astype(np.int64))
    return np.datetime64(secs - secs % step, "s")


def resample(s: TelemetrySeries, interval: timedelta, origin: np.datetime64 | None = None) -> TelemetrySeries:
    """Forward-fill ``s`` onto the grid ``origin + k * interval``.

    The grid runs from the first grid time at or after the first sample to
    the first grid time at or after the last sample; each grid value is the
    last raw value at or before that time.
    """
    step = _seconds(interval)
    if step <= 0:
        raise ValueError("interval must be positive")
    if len(s) == 0:
        raise ValueError("cannot resample an empty series")
    if origin is None:
        origin = grid_origin(s.times[0], interval)
    origin_s = int(np.datetime64(origin, "s").astype(np.int64))
    first = int(s.times[0].astype(np.int64))
    last = int(s.times[-1].astype(np.int64))
    k_first = -((origin_s - first) // step)  # ceil((first - origin) / step)
    k_last = -((origin_s - last) // step)
    grid = origin_s + step * np.arange(k_first, k_last + 1, dtype=np.int64)
    idx = np.searchsorted(s.times.astype(np.int64), grid, side="right") - 1
    return TelemetrySeries(s.sensor_id, s.kind, grid.astype("datetime64[s]"), s.values[idx], s.skipped_rows)


def load_sensor(path: Path, kind: SensorKind, bounds: tuple[float, float] | None) -> TelemetrySeries:
    s = parse_telemetry_csv(path, kind)
    lo, hi = bounds if bounds is not None else default_bounds(s)
    s, n = clean_outliers(s, lo, hi)
    if n:
        logger.info("%s: replaced %d outlier(s) outside [%g, %g]", path, n, lo, hi)
    return s


def aggregate_room(manifest: RoomManifest) -> RoomTelemetry:
    """Build the room's virtual sensors: mean temperature and summed power.

    Only the span in which every sensor has a forward-filled value is kept.
    """
    temps = [load_sensor(p, SensorKind.TEMPERATURE, manifest.temperature_bounds) for p in manifest.temperature_files]
    powers = [load_sensor(p, SensorKind.POWER, manifest.power_bounds) for p in manifest.power_files]
    return aggregate_series(manifest.room_id, temps, powers, manifest.grid_interval)


def aggregate_series(
    room_id: str,
    temperatures: list[TelemetrySeries],
    powers: list[TelemetrySeries],
    interval: timedelta,
) -> RoomTelemetry:
    if not temperatures or not powers:
        raise TelemetryError(f"room {room_id!r}: need at least one sensor of each kind")
    everything = temperatures + powers
    origin = grid_origin(min(s.times[0] for s in everything), interval)
    gridded = [resample(s, interval, origin) for s in everything]
    start = max(g.times[0] for g in gridded)
    end = min(g.times[-1] for g in gridded)
    if start > end:
        raise TelemetryError(f"room {room_id!r}: sensors do not overlap in time")

    def window(g: TelemetrySeries) -> np.ndarray:
        i0 = int(np.searchsorted(g.times, start))
        i1 = int(np.searchsorted(g.times, end, side="right"))
        return g.values[i0:i1]

    n_temp = len(temperatures)
    temp_stack = np.vstack([window(g) for g in gridded[:n_temp]])
    power_stack = np.vstack([window(g) for g in gridded[n_temp:]])
    step = np.timedelta64(_seconds(interval), "s")
    times = np.arange(start, end + step, step)
    return RoomTelemetry(
        room_id=room_id,
        grid_interval=interval,
        times=times,
        temperature=temp_stack.mean(axis=0),
        power=power_stack.sum(axis=0),
    )


def load_rooms(directory: str | Path) -> list[RoomTelemetry]:
    """Aggregate every ``*.json`` room manifest in a directory, sorted by room id."""
    directory = Path(directory)
    manifests = sorted(directory.glob("*.json"))
    if not manifests:
        raise TelemetryError(f"no room manifests (*.json) found in {directory}")
    rooms = []
    for path in manifests:
        try:
            manifest = RoomManifest.from_json(path)
        except TelemetryError:
            # other JSON documents (scenario, summaries) may share the directory
            logger.debug("skipping non-manifest %s", path)
            continue
        rooms.append(aggregate_room(manifest))
    if not rooms:
        raise TelemetryError(f"no valid room manifests in {directory}")
    return sorted(rooms, key=lambda r: r.room_id)
