"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run ``pytest tests/test_acceptance.py -v`` (the lines are repeated in the
terminal summary) or ``python -m tests.test_acceptance``.
"""

import time
from dataclasses import replace
from datetime import timedelta

import numpy as np
import pytest
from scipy.optimize import brentq

from dctemp import analysis, changepoint, optimizer, physics, simulator
from dctemp.changepoint import ChangeEvent
from dctemp.cli import run
from dctemp.physics import ChillerModel, EconomizerModel, FanModel, PlantConfig
from dctemp.simulator import LoadShape, OutdoorModel, RoomSpec, Scenario
from dctemp.telemetry import RoomTelemetry

from .helpers import dc1_campaign, dc2_events, dc2_scenario, match_events

CRITERIA_LINES: list[str] = []


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'} - {detail}"
    CRITERIA_LINES.append(line)
    print(line)
    return ok


@pytest.fixture(scope="module")
def campaign():
    scenario, injected, small = dc1_campaign(seed=0)
    t0 = time.perf_counter()
    sim = simulator.simulate(scenario)
    rooms = list(sim.rooms.values())
    events = changepoint.detect_all(rooms)
    elapsed = time.perf_counter() - t0
    return rooms, injected, small, events, elapsed


def test_criterion_1_fan_affinity():
    r11 = physics.fan_power(1.1, 1.0)
    r2 = physics.fan_power(2.0, 1.0)
    ok = abs(r11 - 1.331) <= 1e-12 and abs(r2 - 8.0) <= 1e-12
    assert record(1, ok, f"speed 1.1 -> {r11:.15f}, speed 2 -> {r2:.15f} (tol 1e-12)")


def test_criterion_2_pue_direction():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    n = 1000
    it1 = rng.uniform(50, 5000, n)
    non1 = it1 * rng.uniform(0.05, 1.0, n)
    it2 = it1 * (1 + rng.uniform(1e-4, 0.2, n))
    non2 = non1 * (1 - rng.uniform(1e-4, 0.3, n))
    down = sum(physics.pue(b, d) < physics.pue(a, c) for a, b, c, d in zip(it1, it2, non1, non2))
    misleading = int(np.sum(it2 + non2 > it1 + non1))
    elapsed = time.perf_counter() - t0
    ok = down == n and misleading >= 100 and elapsed < 1
    assert record(2, ok, f"PUE decreased in {down}/{n}; total power rose in {misleading} pairs; {elapsed:.2f} s")


def test_criterion_3_change_detection(campaign):
    rooms, injected, small, events, elapsed = campaign
    hits, unmatched = match_events(events, injected)
    small_hits, _ = match_events(unmatched, small)
    false_pos = len(unmatched) - small_hits
    total = changepoint.summarize_changes(events).total
    ok = len(rooms) == 11 and hits == 65 == len(injected) and false_pos == 0 and small_hits == 0 and elapsed < 10
    assert record(
        3, ok,
        f"recall {hits}/{len(injected)}, false positives {false_pos}, 0.5 degC detected {small_hits}/{len(small)}, "
        f"{total} events summarised, {elapsed:.1f} s",
    )


def _fan_fraction_for(target):
    def f(frac):
        return simulator.analytic_sensitivity(PlantConfig(fan=FanModel(reference_fan_fraction=frac)), 24.0) - target
    return brentq(f, 1e-4, 0.5, xtol=1e-12)


def _recover(plant, seed):
    start = np.datetime64("2023-03-06T00:00:00", "s")
    step_t = start + np.timedelta64(36, "h")
    sc = Scenario(
        rooms=(RoomSpec("R1", 500.0, ((start, 23.0), (step_t, 25.0))),),
        start=start,
        span=timedelta(hours=72),
        grid_interval=timedelta(minutes=1),
        load=LoadShape(noise_pct=0.2),
        plant=plant,
        seed=seed,
        sensor_noise=0.05,
    )
    room = simulator.simulate(sc).rooms["R1"]
    events = changepoint.detect_changes(room)
    if len(events) != 1:
        return np.nan
    guard = analysis.default_guard(room.grid_interval)
    est = [analysis.window_analysis(room, events[0], timedelta(hours=h), guard).sensitivity_rel for h in (1, 2)]
    return float(np.mean(est))


def test_criterion_4_sensitivity_recovery():
    t0 = time.perf_counter()
    plants = {"defaults": PlantConfig()}
    for target in (0.2, 0.5, 0.8):
        plants[f"S*={target}"] = PlantConfig(fan=FanModel(reference_fan_fraction=_fan_fraction_for(target)))
    parts, ok = [], True
    for name, plant in plants.items():
        s_star = simulator.analytic_sensitivity(plant, 24.0)  # midpoint of the 23 -> 25 step
        est = np.array([_recover(plant, seed) for seed in range(100)])
        frac = np.mean(np.abs(est - s_star) <= 0.05)
        ok &= frac >= 0.9
        parts.append(f"{name} (S* {s_star:.3f}): {frac:.0%}")
    elapsed = time.perf_counter() - t0
    ok &= elapsed < 60
    assert record(4, ok, f"seeds within 0.05 %/degC: {'; '.join(parts)}; {elapsed:.1f} s")


WINDOWS_DC1 = [timedelta(hours=h) for h in (24, 48, 168, 336, 720)]


def _constant_s_batch(seed, s_true=0.45):
    rng = np.random.default_rng([5, seed])
    results = []
    base = np.datetime64("2022-01-01T00:00:00", "s")
    for k in range(325):
        L = WINDOWS_DC1[k % 5]
        lh = int(L.total_seconds() // 3600)
        tb = rng.uniform(23, 29)
        mag = rng.uniform(1, 3) * rng.choice([-1, 1])
        true_t = np.r_[np.full(lh, tb), np.full(lh + 1, tb + mag)]
        p0 = rng.uniform(50, 500)
        power = p0 * (1 + s_true / 100 * (true_t - tb)) * (1 + 0.002 * rng.standard_normal(len(true_t)))
        temp = true_t + 0.1 * rng.standard_normal(len(true_t))
        times = base + np.arange(len(true_t)) * np.timedelta64(3600, "s")
        room = RoomTelemetry(f"R{k}", timedelta(hours=1), times, temp, power)
        results.append(analysis.window_analysis(room, ChangeEvent(room.room_id, times[lh], tb, tb + mag), L))
    return analysis.summarize_batch(results)


def test_criterion_5_regression_r2():
    t0 = time.perf_counter()
    r2 = np.array([_constant_s_batch(seed).regression_r2 for seed in range(100)])
    below = int(np.sum(r2 < 0.05))
    elapsed = time.perf_counter() - t0
    ok = below >= 95 and elapsed < 30
    assert record(5, ok, f"R^2 < 0.05 in {below}/100 seeds (median {np.median(r2):.4f}); {elapsed:.1f} s")


def test_criterion_6_counting(campaign):
    rooms, _, _, _, _ = campaign
    t0 = time.perf_counter()
    dc1 = analysis.batch_analysis(rooms, window_lengths=WINDOWS_DC1)
    scenario = dc2_scenario(seed=0)
    room = simulator.simulate(scenario).rooms["D1"]
    dc2 = analysis.batch_analysis([room], window_lengths=[timedelta(hours=h) for h in (1, 2, 24, 168)], events=dc2_events(scenario))
    elapsed = time.perf_counter() - t0
    ok = len(dc1) == 325 and len(dc2) == 28
    assert record(6, ok, f"65 events x 5 windows -> {len(dc1)} rows; 7 events x 4 windows -> {len(dc2)} rows; {elapsed:.1f} s")


def _random_plant(rng):
    return PlantConfig(
        fan=FanModel(
            hot_surface_temp=float(rng.uniform(45, 70)),
            h_velocity_exponent=float(rng.uniform(0.6, 1.0)),
            reference_fan_fraction=float(rng.uniform(0.01, 0.12)),
        ),
        chiller=ChillerModel(
            reference_cop=float(rng.uniform(2.5, 6.0)),
            cop_gain_per_degC=float(rng.uniform(0.0, 0.05)),
            chw_approach=float(rng.uniform(5, 10)),
        ),
        economizer=EconomizerModel(
            approach=float(rng.uniform(2, 8)),
            overhead_fraction=float(rng.uniform(0, 0.06)),
            enabled=bool(rng.random() < 0.7),
        ),
        fixed_overhead_fraction=float(rng.uniform(0, 0.1)),
    )


def test_criterion_7_optimizer():
    t0 = time.perf_counter()
    rng = np.random.default_rng(77)
    year = optimizer.representative_year()
    worst, misses, not_worse = 0.0, 0, 0
    for _ in range(50):
        plant = _random_plant(rng)
        res = optimizer.find_sweet_spot(plant, *year, 18, 32)
        grid = optimizer.sweep_temperature(plant, *year, 18, 32, 0.01)
        gap = abs(res.optimal_t - grid.t_inlet[np.argmin(grid.mean_total_kw)])
        worst = max(worst, gap)
        misses += gap > 0.1
        not_worse += res.optimal_power <= grid.mean_total_kw.min() * (1 + 1e-9)
    fan_only = PlantConfig(chiller=ChillerModel(cop_gain_per_degC=0.0), economizer=EconomizerModel(enabled=False))
    cooling_only = PlantConfig(fan=FanModel(reference_fan_fraction=0.0))
    t_fan = optimizer.find_sweet_spot(fan_only, *year).optimal_t
    t_cool = optimizer.find_sweet_spot(cooling_only, *year).optimal_t
    t_default = optimizer.find_sweet_spot(PlantConfig(), *year).optimal_t
    elapsed = time.perf_counter() - t0
    ok = misses == 0 and t_fan == 18.0 and abs(t_cool - 32.0) < 1e-9 and 25 <= t_default <= 28 and elapsed < 30
    assert record(
        7, ok,
        f"{50 - misses}/50 configs within 0.1 degC of the 0.01 degC grid argmin (max gap {worst:.3f}; "
        f"optimizer power <= grid minimum in {not_worse}/50); fan-only {t_fan:g}; cooling-only {t_cool:g}; "
        f"defaults on temperate year {t_default:.2f} degC (band 25-28); {elapsed:.1f} s",
    )


MATCHED_START = np.datetime64("2023-03-06T00:00:00", "s")  # Monday
MATCHED_EVENT = MATCHED_START + np.timedelta64(7 * 86400 + 12 * 3600, "s")
COLD = OutdoorModel(-10.0, 0.0, 0.0)  # free cooling all the time


def _building_plant(target=0.5):
    def f(frac):
        plant = PlantConfig(fan=FanModel(reference_fan_fraction=frac))
        return simulator.analytic_sensitivity(plant, 26.0, "building", outdoor_temp=COLD.mean) - target
    return PlantConfig(fan=FanModel(reference_fan_fraction=brentq(f, 1e-4, 0.5, xtol=1e-12)))


def _matched(seed, plant, cycling=0.0):
    sc = Scenario(
        rooms=(RoomSpec("A", 1000.0, ((MATCHED_START, 24.0), (MATCHED_EVENT, 28.0))),),
        start=MATCHED_START,
        span=timedelta(days=15),
        grid_interval=timedelta(minutes=1),
        load=LoadShape(daily_amplitude_pct=10.0, weekend_ratio=0.8, noise_pct=0.3),
        outdoor=COLD,
        plant=plant,
        seed=seed,
        chiller_cycling_fraction=cycling,
    )
    sim = simulator.simulate(sc)
    return analysis.matched_window_analysis(sim.building, ChangeEvent("A", MATCHED_EVENT, 24.0, 28.0), 7, 7, timedelta(hours=1))


def test_criterion_8_matched_windows():
    t0 = time.perf_counter()
    plant = _building_plant()
    s_b = simulator.analytic_sensitivity(plant, 26.0, "building", outdoor_temp=COLD.mean)
    clean = [_matched(seed, plant) for seed in range(100)]
    sig_pos = sum(m.significant and m.direction == "positive" for m in clean)
    noisy = [_matched(seed, plant, cycling=0.05) for seed in range(100)]
    n_pos = sum(m.significant and m.direction == "positive" for m in noisy)
    n_neg = sum(m.significant and m.direction == "negative" for m in noisy)
    elapsed = time.perf_counter() - t0
    ok = sig_pos >= 80 and n_pos > 0 and n_neg > 0 and elapsed < 60
    assert record(
        8, ok,
        f"building S {s_b:.3f} %/degC: significant positive {sig_pos}/100; with 5% chiller cycling "
        f"{n_pos} significant positive, {n_neg} significant negative; {elapsed:.1f} s",
    )


def _tree(path):
    return {p.relative_to(path).as_posix(): p.read_bytes() for p in sorted(path.rglob("*")) if p.is_file()}


def test_criterion_9_determinism(tmp_path, capsys):
    t0 = time.perf_counter()
    full = dc2_scenario(seed=11)
    scenario = replace(full, rooms=(replace(full.rooms[0], schedule=full.rooms[0].schedule[:2]),), span=timedelta(days=12))
    spec = tmp_path / "scenario.json"
    spec.write_text(scenario.to_json())
    outputs = {}
    for run_id in ("a", "b"):
        d = tmp_path / run_id
        codes = [
            run(["simulate", "--scenario", str(spec), "--seed", "7", "--out", str(d / "sim")]),
            run(["detect", "--rooms", str(d / "sim"), "--out", str(d / "events.csv")]),
            run(["analyze", "--rooms", str(d / "sim"), "--windows", "1,2,24", "--building", str(d / "sim" / "building_power.csv"),
                 "--matched-days", "3:4", "--out", str(d / "an")]),
            run(["optimize", "--seed", "7", "--out", str(d / "opt")]),
        ]
        capsys.readouterr()
        codes.append(run(["report", "--results", str(d / "an" / "results.csv")]))
        (d / "report.txt").write_text(capsys.readouterr().out)
        assert codes == [0] * 5
        outputs[run_id] = _tree(d)
    elapsed = time.perf_counter() - t0
    same = outputs["a"] == outputs["b"]
    ok = same and len(outputs["a"]) > 5 and elapsed < 60
    assert record(9, ok, f"{len(outputs['a'])} files across 5 subcommands byte-identical: {same}; {elapsed:.1f} s")


if __name__ == "__main__":
    raise SystemExit(pytest.main([__file__, "-q"]))
