"""Synthetic fixtures shared by the test modules."""

from __future__ import annotations

from datetime import timedelta

import numpy as np

from dctemp import physics, simulator
from dctemp.changepoint import ChangeEvent
from dctemp.telemetry import RoomTelemetry

HOUR = np.timedelta64(3600, "s")
MINUTE = np.timedelta64(60, "s")
DC1_START = np.datetime64("2021-07-01T00:00:00", "s")
DC1_SPAN = timedelta(days=730)
DC1_EVENTS_PER_ROOM = [9, 8, 7, 6, 6, 6, 5, 5, 5, 4, 4]  # 65 in total


def hourly_room(temperature, power, room_id="R1", start=DC1_START) -> RoomTelemetry:
    n = len(temperature)
    times = start + np.arange(n) * HOUR
    return RoomTelemetry(room_id, timedelta(hours=1), times, temperature, power)


def step_room(before=24.0, after=27.0, hours_each=48, noise=0.0, seed=0, room_id="R1", power=None):
    """Hourly room with a single setpoint step; returns the room and the step time."""
    rng = np.random.default_rng(seed)
    temp = np.r_[np.full(hours_each, before), np.full(hours_each, after)]
    temp = temp + noise * rng.standard_normal(len(temp))
    p = np.full(len(temp), 100.0) if power is None else power(temp)
    room = hourly_room(temp, p, room_id)
    return room, room.times[hours_each]


def _schedule_times(rng, count, n_hours, min_gap_h, margin_h):
    while True:
        hours = np.sort(rng.choice(np.arange(margin_h, n_hours - margin_h), size=count, replace=False))
        if count < 2 or np.diff(hours).min() >= min_gap_h:
            return hours


def dc1_campaign(seed=0, small_changes=True, noise=0.1):
    """11 rooms over two years, hourly, 65 injected changes of 1-3 degC.

    Room R01 additionally carries two 0.5 degC changes when ``small_changes``.
    Returns the scenario, the injected large changes and the small ones as
    ``(room_id, time, magnitude)`` tuples.
    """
    rng = np.random.default_rng(seed)
    n_hours = int(DC1_SPAN.total_seconds() // 3600)
    rooms, injected, small = [], [], []
    for k, count in enumerate(DC1_EVENTS_PER_ROOM):
        room_id = f"R{k + 1:02d}"
        extra = 2 if (small_changes and k == 0) else 0
        hours = _schedule_times(rng, count + extra, n_hours, min_gap_h=96, margin_h=48)
        small_idx = set(rng.choice(count + extra, size=extra, replace=False).tolist()) if extra else set()
        level = 24.0
        schedule = [(DC1_START, level)]
        for i, h in enumerate(hours):
            t = DC1_START + int(h) * HOUR
            if i in small_idx:
                mag = 0.5 if level < 26 else -0.5
                small.append((room_id, t, mag))
            else:
                mag = float(rng.uniform(1.0, 3.0))
                if level + mag > 30 or (level - mag >= 21 and rng.random() < 0.5):
                    mag = -mag
                injected.append((room_id, t, mag))
            level += mag
            schedule.append((t, level))
        rooms.append(simulator.RoomSpec(room_id, float(rng.uniform(80, 400)), tuple(schedule)))
    scenario = simulator.Scenario(
        rooms=tuple(rooms),
        start=DC1_START,
        span=DC1_SPAN,
        grid_interval=timedelta(hours=1),
        load=simulator.LoadShape(daily_amplitude_pct=8.0, weekend_ratio=0.85, noise_pct=1.0, drift_pct_per_month=0.2),
        seed=seed,
        sensor_noise=noise,
    )
    return scenario, injected, small


def match_events(detected, injected, tolerance=2 * HOUR):
    """Return (matched injected count, unmatched detections)."""
    used = set()
    hits = 0
    for room_id, t, _ in injected:
        for j, e in enumerate(detected):
            if j not in used and e.room_id == room_id and abs(e.event_time - t) <= tolerance:
                used.add(j)
                hits += 1
                break
    return hits, [e for j, e in enumerate(detected) if j not in used]


DC2_START = np.datetime64("2022-11-21T00:00:00", "s")
# (day offset, time of day, new setpoint); mirrors the simultaneous changes of the second site
DC2_SCHEDULE = [
    (10, "12:00", 26.0),
    (24, "15:30", 30.0),
    (24, "20:30", 27.0),
    (25, "08:30", 30.0),
    (25, "15:30", 27.0),
    (38, "12:00", 28.0),
    (40, "12:00", 29.0),
]


def dc2_scenario(seed=0, noise_pct=0.2, fan_fraction=0.043, span_days=48, daily_pct=2.0):
    schedule = [(DC2_START, 25.0)]
    for day, hhmm, sp in DC2_SCHEDULE:
        hh, mm = (int(x) for x in hhmm.split(":"))
        schedule.append((DC2_START + np.timedelta64(day * 86400 + hh * 3600 + mm * 60, "s"), sp))
    plant = physics.PlantConfig(fan=physics.FanModel(reference_fan_fraction=fan_fraction))
    return simulator.Scenario(
        rooms=(simulator.RoomSpec("D1", 600.0, tuple(schedule)),),
        start=DC2_START,
        span=timedelta(days=span_days),
        grid_interval=timedelta(minutes=1),
        load=simulator.LoadShape(daily_amplitude_pct=daily_pct, weekend_ratio=0.8, noise_pct=noise_pct),
        plant=plant,
        seed=seed,
        sensor_noise=0.05,
    )


def dc2_events(scenario) -> list[ChangeEvent]:
    sched = scenario.rooms[0].schedule
    return [ChangeEvent("D1", t, prev, cur) for (_, prev), (t, cur) in zip(sched[:-1], sched[1:])]
