"""Synthetic server-room telemetry driven by the physics model.

Rooms follow a setpoint schedule through a first-order lag; compute load
carries daily and weekly cycles, slow capacity drift and noise. Every
timestep is pushed through :func:`dctemp.physics.building_power_arrays`, so
the analytic sensitivity of the plant is a known ground truth for the
analysis pipeline.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import timedelta
from enum import Enum
from pathlib import Path

import numpy as np
from scipy.signal import lfilter

from . import physics
from .physics import PlantConfig
from .telemetry import (
    RoomManifest,
    RoomTelemetry,
    SensorKind,
    TelemetrySeries,
    format_timestamp,
    parse_timestamp,
    write_telemetry_csv,
)

SECONDS_PER_MONTH = 30.4375 * 86400
_CYCLING_STREAM = 1_000_003


class Level(str, Enum):
    ROOM = "room"
    BUILDING = "building"


class ModeBoundaryError(ValueError):
    """Finite difference straddles the economizer/chiller switch."""


@dataclass(frozen=True)
class RoomSpec:
    room_id: str
    base_compute_kw: float
    schedule: tuple[tuple[np.datetime64, float], ...]

    def __post_init__(self):
        if self.base_compute_kw < 0:
            raise ValueError("base_compute_kw must be non-negative")
        if not self.schedule:
            raise ValueError(f"room {self.room_id!r}: schedule needs at least one setpoint")
        sched = tuple(sorted(((np.datetime64(t, "s"), float(v)) for t, v in self.schedule), key=lambda p: p[0]))
        object.__setattr__(self, "schedule", sched)


@dataclass(frozen=True)
class LoadShape:
    daily_amplitude_pct: float = 0.0
    weekend_ratio: float = 1.0
    noise_pct: float = 0.0
    drift_pct_per_month: float = 0.0

    def __post_init__(self):
        if self.daily_amplitude_pct < 0 or self.noise_pct < 0 or self.weekend_ratio < 0:
            raise ValueError("load amplitudes must be non-negative")


@dataclass(frozen=True)
class OutdoorModel:
    """Sinusoidal year: coldest mid-January, warmest at 15:00 each day."""

    mean: float = 10.0
    seasonal_amplitude: float = 8.0
    diurnal_amplitude: float = 5.0

    def __post_init__(self):
        if self.seasonal_amplitude < 0 or self.diurnal_amplitude < 0:
            raise ValueError("amplitudes must be non-negative")

    def temperature(self, times: np.ndarray) -> np.ndarray:
        times = np.asarray(times).astype("datetime64[s]")
        secs = times.astype(np.int64).astype(float)
        year_start = times.astype("datetime64[Y]").astype("datetime64[s]").astype(np.int64)
        doy = (secs - year_start) / 86400.0
        hour = (secs % 86400) / 3600.0
        seasonal = -np.cos(2 * np.pi * (doy - 15.0) / 365.25)
        diurnal = -np.cos(2 * np.pi * (hour - 3.0) / 24.0)
        return self.mean + self.seasonal_amplitude * seasonal + self.diurnal_amplitude * diurnal


@dataclass(frozen=True)
class Scenario:
    rooms: tuple[RoomSpec, ...]
    start: np.datetime64
    span: timedelta
    grid_interval: timedelta = timedelta(hours=1)
    load: LoadShape = field(default_factory=LoadShape)
    outdoor: OutdoorModel = field(default_factory=OutdoorModel)
    plant: PlantConfig = field(default_factory=PlantConfig)
    seed: int = 0
    sensor_noise: float = 0.05  # degC
    transition_time: timedelta = timedelta(minutes=15)
    # optional random on/off chiller staging, as a fraction of mean building power
    chiller_cycling_fraction: float = 0.0
    chiller_cycling_block: timedelta = timedelta(hours=1)

    def __post_init__(self):
        object.__setattr__(self, "rooms", tuple(self.rooms))
        object.__setattr__(self, "start", np.datetime64(self.start, "s"))
        if not self.rooms:
            raise ValueError("scenario needs at least one room")
        ids = [r.room_id for r in self.rooms]
        if len(set(ids)) != len(ids):
            raise ValueError("room ids must be unique")
        if self.grid_interval <= timedelta(0) or self.span < self.grid_interval:
            raise ValueError("span must cover at least one grid interval")
        if self.sensor_noise < 0 or self.chiller_cycling_fraction < 0:
            raise ValueError("noise terms must be non-negative")
        if self.chiller_cycling_block <= timedelta(0):
            raise ValueError("chiller_cycling_block must be positive")
        end = self.start + np.timedelta64(int(self.span.total_seconds()), "s")
        for room in self.rooms:
            for t, _ in room.schedule:
                if not self.start <= t <= end:
                    raise ValueError(f"room {room.room_id!r}: schedule time {t} outside the scenario span")

    def times(self) -> np.ndarray:
        step = int(self.grid_interval.total_seconds())
        n = int(self.span.total_seconds()) // step
        return self.start + np.arange(n, dtype=np.int64) * np.timedelta64(step, "s")

    def room(self, room_id: str) -> RoomSpec:
        for r in self.rooms:
            if r.room_id == room_id:
                return r
        raise KeyError(room_id)

    def room_index(self, room_id: str) -> int:
        return [r.room_id for r in self.rooms].index(room_id)

    def to_dict(self) -> dict:
        return {
            "rooms": [
                {
                    "room_id": r.room_id,
                    "base_compute_kw": r.base_compute_kw,
                    "schedule": [[format_timestamp(t), v] for t, v in r.schedule],
                }
                for r in self.rooms
            ],
            "start": format_timestamp(self.start),
            "span_hours": self.span.total_seconds() / 3600.0,
            "grid_interval_seconds": int(self.grid_interval.total_seconds()),
            "load": vars(self.load).copy(),
            "outdoor": vars(self.outdoor).copy(),
            "plant": self.plant.to_dict(),
            "seed": self.seed,
            "sensor_noise": self.sensor_noise,
            "transition_minutes": self.transition_time.total_seconds() / 60.0,
            "chiller_cycling_fraction": self.chiller_cycling_fraction,
            "chiller_cycling_block_minutes": self.chiller_cycling_block.total_seconds() / 60.0,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Scenario":
        try:
            rooms = tuple(
                RoomSpec(
                    room_id=str(r["room_id"]),
                    base_compute_kw=float(r["base_compute_kw"]),
                    schedule=tuple((parse_timestamp(t), float(v)) for t, v in r["schedule"]),
                )
                for r in d["rooms"]
            )
            return cls(
                rooms=rooms,
                start=parse_timestamp(d["start"]),
                span=timedelta(hours=float(d["span_hours"])),
                grid_interval=timedelta(seconds=float(d.get("grid_interval_seconds", 3600))),
                load=LoadShape(**d.get("load", {})),
                outdoor=OutdoorModel(**d.get("outdoor", {})),
                plant=PlantConfig.from_dict(d.get("plant")),
                seed=int(d.get("seed", 0)),
                sensor_noise=float(d.get("sensor_noise", 0.05)),
                transition_time=timedelta(minutes=float(d.get("transition_minutes", 15))),
                chiller_cycling_fraction=float(d.get("chiller_cycling_fraction", 0.0)),
                chiller_cycling_block=timedelta(minutes=float(d.get("chiller_cycling_block_minutes", 60))),
            )
        except KeyError as exc:
            raise ValueError(f"scenario missing field {exc}") from exc
        except TypeError as exc:
            raise ValueError(f"malformed scenario: {exc}") from exc

    @classmethod
    def from_json(cls, path: str | Path) -> "Scenario":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


@dataclass(frozen=True)
class SimOutput:
    times: np.ndarray
    rooms: dict[str, RoomTelemetry]
    building: TelemetrySeries
    setpoints: dict[str, np.ndarray]
    compute: dict[str, np.ndarray]
    fans: dict[str, np.ndarray]
    cooling: dict[str, np.ndarray]
    overhead: dict[str, np.ndarray]
    economizer: dict[str, np.ndarray]  # per-room boolean mode trace
    outdoor: np.ndarray
    cycling: np.ndarray

    def write(self, directory: str | Path, grid_interval: timedelta) -> list[Path]:
        """Write telemetry CSVs, room manifests and the mode trace; returns the paths."""
        files = self.render(grid_interval)
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for name, text in files.items():
            p = directory / name
            p.write_text(text, encoding="utf-8")
            paths.append(p)
        return paths

    def render(self, grid_interval: timedelta) -> dict[str, str]:
        """File name to content for every output file, in a stable order."""
        files: dict[str, str] = {}
        for room_id, room in self.rooms.items():
            temp_name, power_name = f"{room_id}_temperature.csv", f"{room_id}_power.csv"
            files[temp_name] = write_telemetry_csv(None, room.times, room.temperature)
            files[power_name] = write_telemetry_csv(None, room.times, room.power)
            manifest = RoomManifest(room_id, [Path(temp_name)], [Path(power_name)], grid_interval)
            files[f"{room_id}.json"] = json.dumps(manifest.to_dict(), indent=2) + "\n"
        files["building_power.csv"] = write_telemetry_csv(None, self.building.times, self.building.values)
        header = ["timestamp", "outdoor_temp"] + [f"{r}_mode" for r in self.rooms]
        lines = [",".join(header)]
        for k, t in enumerate(self.times):
            modes = ["economizer" if self.economizer[r][k] else "chiller" for r in self.rooms]
            lines.append(",".join([format_timestamp(t), repr(float(self.outdoor[k]))] + modes))
        files["mode_trace.csv"] = "\n".join(lines) + "\n"
        return files


def _rng(seed: int, *stream: int) -> np.random.Generator:
    return np.random.default_rng([seed, *stream])


def setpoint_series(room: RoomSpec, times: np.ndarray) -> np.ndarray:
    """Step function of the schedule; the first setpoint also applies before its time."""
    sched_t = np.array([t for t, _ in room.schedule], dtype="datetime64[s]")
    sched_v = np.array([v for _, v in room.schedule], dtype=float)
    idx = np.searchsorted(sched_t, times, side="right") - 1
    return sched_v[np.clip(idx, 0, None)]


def first_order_lag(setpoint: np.ndarray, dt: timedelta, tau: timedelta) -> np.ndarray:
    if tau <= timedelta(0):
        return setpoint.astype(float).copy()
    a = 1.0 - np.exp(-dt.total_seconds() / tau.total_seconds())
    y, _ = lfilter([a], [1.0, a - 1.0], setpoint, zi=[(1.0 - a) * setpoint[0]])
    return y


def load_shape_factor(times: np.ndarray, load: LoadShape, start: np.datetime64) -> np.ndarray:
    """Deterministic part of the compute load relative to the base load."""
    secs = np.asarray(times, dtype="datetime64[s]").astype(np.int64)
    hour = (secs % 86400) / 3600.0
    daily = 1.0 + load.daily_amplitude_pct / 100.0 * -np.cos(2 * np.pi * hour / 24.0)
    weekday = (secs // 86400 + 3) % 7  # 1970-01-01 was a Thursday; Monday = 0
    weekly = np.where(weekday >= 5, load.weekend_ratio, 1.0)
    months = (secs - np.int64(np.datetime64(start, "s").astype(np.int64))) / SECONDS_PER_MONTH
    drift = 1.0 + load.drift_pct_per_month / 100.0 * months
    return daily * weekly * drift


def generate_load_profile(scenario: Scenario, room_id: str) -> TelemetrySeries:
    """Compute (IT without fans) power for one room, in kW."""
    room = scenario.room(room_id)
    times = scenario.times()
    shape = load_shape_factor(times, scenario.load, scenario.start)
    noise = _rng(scenario.seed, scenario.room_index(room_id), 0).standard_normal(len(times))
    values = room.base_compute_kw * shape * (1.0 + scenario.load.noise_pct / 100.0 * noise)
    return TelemetrySeries(f"{room_id}:compute", SensorKind.POWER, times, np.maximum(values, 0.0))


def simulate(scenario: Scenario) -> SimOutput:
    plant = scenario.plant
    times = scenario.times()
    outdoor = scenario.outdoor.temperature(times)
    out = {k: {} for k in ("rooms", "setpoints", "compute", "fans", "cooling", "overhead", "economizer")}
    totals = np.zeros(len(times))
    for index, spec in enumerate(scenario.rooms):
        sp = setpoint_series(spec, times)
        if np.any(sp >= plant.fan.hot_surface_temp):
            raise physics.InfeasibleCoolingError(f"room {spec.room_id!r}: setpoint at or above the hot-surface temperature")
        actual = first_order_lag(sp, scenario.grid_interval, scenario.transition_time)
        compute = generate_load_profile(scenario, spec.room_id).values
        b = physics.building_power_arrays(actual, compute, outdoor, plant)
        measured = actual + scenario.sensor_noise * _rng(scenario.seed, index, 1).standard_normal(len(times))
        out["rooms"][spec.room_id] = RoomTelemetry(
            spec.room_id, scenario.grid_interval, times, measured, b["compute"] + b["fans"]
        )
        out["setpoints"][spec.room_id] = sp
        for key in ("compute", "fans", "cooling", "overhead", "economizer"):
            out[key][spec.room_id] = b[key]
        totals = totals + b["total"]

    cycling = np.zeros(len(times))
    if scenario.chiller_cycling_fraction > 0:
        block = int(scenario.chiller_cycling_block.total_seconds())
        rng = _rng(scenario.seed, _CYCLING_STREAM)
        offset = int(rng.integers(block))
        elapsed = (times - scenario.start).astype(np.int64) + offset
        block_idx = elapsed // block
        states = rng.integers(0, 2, size=int(block_idx[-1]) + 1)
        cycling = scenario.chiller_cycling_fraction * float(totals.mean()) * states[block_idx]

    building = TelemetrySeries("building", SensorKind.POWER, times, totals + cycling)
    return SimOutput(times=times, building=building, outdoor=outdoor, cycling=cycling, **out)


def analytic_sensitivity(
    plant: PlantConfig,
    t_inlet: float,
    level: Level | str = Level.ROOM,
    outdoor_temp: float | None = None,
    step: float = 0.01,
) -> float:
    """Relative power sensitivity in %/degC by central finite difference.

    ``room`` covers compute plus fans (what a room meter sees); ``building``
    adds cooling and overhead at the given outdoor temperature.
    """
    level = Level(level)
    if level is Level.ROOM:
        def f(t):
            c, fans = physics.server_room_power(t, 1.0, plant.fan)
            return c + fans
    else:
        if outdoor_temp is None:
            raise ValueError("building level needs an outdoor temperature")
        lo = physics.building_power(t_inlet - step, 1.0, outdoor_temp, plant)
        hi = physics.building_power(t_inlet + step, 1.0, outdoor_temp, plant)
        if lo.mode is not hi.mode:
            raise ModeBoundaryError(f"economizer switch between {t_inlet - step} and {t_inlet + step} degC")

        def f(t):
            return physics.building_power(t, 1.0, outdoor_temp, plant).total
    return 100.0 * (f(t_inlet + step) - f(t_inlet - step)) / (2 * step) / f(t_inlet)
