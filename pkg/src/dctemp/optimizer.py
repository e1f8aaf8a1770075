"""Search for the inlet setpoint that minimises mean building power."""

from __future__ import annotations

import io
import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import physics
from .physics import PlantConfig
from .simulator import LoadShape, OutdoorModel, load_shape_factor

logger = logging.getLogger(__name__)

INV_PHI = (math.sqrt(5) - 1) / 2
PLATEAU_RTOL = 1e-9
_CHUNK = 64


@dataclass
class Curve:
    t_inlet: np.ndarray
    mean_total_kw: np.ndarray
    mean_pue: np.ndarray
    economizer_share: np.ndarray

    def to_csv(self) -> str:
        buf = io.StringIO()
        buf.write("t_inlet,mean_total_kw,mean_pue,economizer_share\n")
        for row in zip(self.t_inlet, self.mean_total_kw, self.mean_pue, self.economizer_share):
            buf.write(",".join(repr(round(float(v), 12)) for v in row) + "\n")
        return buf.getvalue()


@dataclass
class SweetSpotResult:
    optimal_t: float
    optimal_power: float
    t_min: float
    t_max: float
    tol: float
    curve: Curve
    plateau: bool = False
    notes: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "optimal_t": self.optimal_t,
            "optimal_power_kw": self.optimal_power,
            "t_min": self.t_min,
            "t_max": self.t_max,
            "tol": self.tol,
            "plateau": self.plateau,
            "notes": self.notes,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"


def representative_year(
    base_compute_kw: float = 1000.0,
    load: LoadShape = LoadShape(daily_amplitude_pct=10.0, weekend_ratio=0.8),
    outdoor: OutdoorModel = OutdoorModel(),
    year: int = 2023,
) -> tuple[np.ndarray, np.ndarray]:
    """Hourly compute load (kW) and outdoor temperature (degC) for one year, noise-free."""
    start = np.datetime64(f"{year}-01-01T00:00:00", "s")
    times = start + np.arange(8760, dtype=np.int64) * np.timedelta64(3600, "s")
    return base_compute_kw * load_shape_factor(times, load, start), outdoor.temperature(times)


def _feasible_upper(plant: PlantConfig, t_max: float, step: float) -> float:
    limit = plant.fan.hot_surface_temp
    if t_max < limit:
        return t_max
    truncated = limit - step
    logger.warning("upper bound %.3f degC is infeasible; truncated to %.3f degC", t_max, truncated)
    return truncated


def _profile_means(plant: PlantConfig, temps: np.ndarray, load: np.ndarray, outdoor: np.ndarray):
    totals, pues, shares = [], [], []
    for i in range(0, len(temps), _CHUNK):
        t = temps[i : i + _CHUNK, None]
        b = physics.building_power_arrays(t, load[None, :], outdoor[None, :], plant)
        it = b["compute"] + b["fans"]
        with np.errstate(invalid="ignore", divide="ignore"):
            pue = np.where(it > 0, b["total"] / it, 1.0)
        totals.append(b["total"].mean(axis=1))
        pues.append(pue.mean(axis=1))
        shares.append(b["economizer"].mean(axis=1))
    return np.concatenate(totals), np.concatenate(pues), np.concatenate(shares)


def sweep_temperature(
    plant: PlantConfig,
    load: np.ndarray,
    outdoor: np.ndarray,
    t_min: float,
    t_max: float,
    step: float,
) -> Curve:
    """Profile-averaged total power, PUE and free-cooling share on a setpoint grid."""
    load = np.asarray(load, dtype=float)
    outdoor = np.asarray(outdoor, dtype=float)
    if load.shape != outdoor.shape or load.ndim != 1 or len(load) == 0:
        raise ValueError("load and outdoor profiles must be equal-length 1-d arrays")
    if step <= 0:
        raise ValueError("step must be positive")
    t_max = _feasible_upper(plant, t_max, step)
    if not t_min < t_max:
        raise ValueError("t_min must be below t_max")
    n = int(math.floor((t_max - t_min) / step + 1e-9))
    temps = t_min + step * np.arange(n + 1)
    total, pue, share = _profile_means(plant, temps, load, outdoor)
    return Curve(temps, total, pue, share)


def golden_section(f: Callable[[float], float], a: float, b: float, tol: float) -> float:
    """Minimiser of a unimodal ``f`` on ``[a, b]`` to within ``tol``."""
    lo, hi = golden_section_vec(lambda t: np.asarray(f(float(t[0])))[None], np.array([a]), np.array([b]), tol)
    return float((lo[0] + hi[0]) / 2)


def golden_section_vec(f, a: np.ndarray, b: np.ndarray, tol: float) -> tuple[np.ndarray, np.ndarray]:
    """Golden-section search on many brackets at once; returns the final brackets."""
    a, b = np.minimum(a, b).astype(float), np.maximum(a, b).astype(float)
    c = b - INV_PHI * (b - a)
    d = a + INV_PHI * (b - a)
    fc, fd = f(c), f(d)
    while np.any(b - a > tol):
        left = fc <= fd
        a, b = np.where(left, a, c), np.where(left, d, b)
        c_new = np.where(left, b - INV_PHI * (b - a), d)
        d_new = np.where(left, c, a + INV_PHI * (b - a))
        f_probe = f(np.where(left, c_new, d_new))
        fc, fd = np.where(left, f_probe, fd), np.where(left, fc, f_probe)
        c, d = c_new, d_new
    return a, b


class _Objective:
    """Profile-mean building power, factored for fast evaluation.

    Every hour's total is ``compute * g(t) * (1 + fixed + econ_overhead)``
    plus ``compute * g(t) / COP(t)`` while the hour is still chiller-cooled,
    where ``g = 1 + fan_fraction * speed_ratio**3``. An hour switches to free
    cooling once ``t`` reaches its switch temperature, so the chiller share
    is a step function of ``t`` built from sorted switch temperatures.
    """

    def __init__(self, plant: PlantConfig, load: np.ndarray, outdoor: np.ndarray):
        self.plant = plant
        self.n = len(load)
        self.base = (1.0 + plant.fixed_overhead_fraction + plant.economizer.overhead_fraction) * load.sum()
        if plant.economizer.enabled:
            switch = outdoor + plant.chiller.chw_approach + plant.economizer.approach
            order = np.argsort(switch, kind="stable")
            self.switch = switch[order]
            self.tail = load.sum() - np.concatenate([[0.0], np.cumsum(load[order])])
        else:
            self.switch = np.empty(0)
            self.tail = np.array([load.sum()])

    def chiller_load(self, t):
        return self.tail[np.searchsorted(self.switch, t, side="right")]

    def smooth(self, t, chiller_load):
        ratio = physics.fan_speed_ratio_for_setpoint(t, self.plant.fan)
        g = 1.0 + self.plant.fan.reference_fan_fraction * ratio**3
        return g * (self.base + chiller_load / physics.chiller_cop_at(t, self.plant.chiller)) / self.n

    def __call__(self, t):
        t = np.asarray(t, dtype=float)
        return self.smooth(t, self.chiller_load(t))


def find_sweet_spot(
    plant: PlantConfig,
    load: np.ndarray,
    outdoor: np.ndarray,
    t_min: float = 18.0,
    t_max: float = 32.0,
    tol: float = 0.01,
    coarse_step: float = 0.1,
) -> SweetSpotResult:
    """Setpoint in ``[t_min, t_max]`` with the lowest profile-mean building power.

    The economizer switch makes the curve a sawtooth: power drops wherever
    one more hour of the profile becomes free-cooled and is smooth in
    between. Each smooth piece is searched separately (its left edge plus a
    golden-section search inside), so narrow teeth are never skipped. When
    other setpoints reach the same power (a plateau), the lowest such
    temperature is returned and flagged. ``coarse_step`` only sets the
    resolution of the reported curve.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    load = np.asarray(load, dtype=float)
    outdoor = np.asarray(outdoor, dtype=float)
    curve = sweep_temperature(plant, load, outdoor, t_min, t_max, min(coarse_step, (t_max - t_min) / 2))
    t_max = float(curve.t_inlet[-1]) if t_max >= plant.fan.hot_surface_temp else t_max

    obj = _Objective(plant, load, outdoor)
    # nudge past each switch so rounding in the full model agrees on the mode
    nudged = obj.switch + 1e-9 * np.maximum(1.0, np.abs(obj.switch))
    inner = nudged[(nudged > t_min) & (nudged < t_max)]
    edges = np.unique(np.concatenate([[t_min], inner, [t_max]]))
    left, right = edges[:-1], edges[1:]
    chiller = obj.chiller_load(left)
    lo, hi = golden_section_vec(lambda t: obj.smooth(t, chiller), left, right, tol)
    inside = np.clip((lo + hi) / 2, left, right)
    candidates = np.concatenate([edges, inside])
    values = obj(candidates)
    order = np.lexsort((candidates, values))
    best_t, best_value = float(candidates[order[0]]), float(values[order[0]])

    def full(t: float) -> float:
        return float(physics.building_power_arrays(t, load, outdoor, plant)["total"].mean())

    result = SweetSpotResult(best_t, full(best_t), t_min, t_max, tol, curve)
    tied = candidates[values <= best_value * (1 + PLATEAU_RTOL)]
    far = tied[np.abs(tied - best_t) > tol]
    if far.size:
        result.plateau = True
        result.notes.append(f"{far.size} other setpoint(s) within {PLATEAU_RTOL:g} of the minimum")
        if far.min() < best_t:
            result.optimal_t = float(far.min())
            result.optimal_power = full(result.optimal_t)
    return result
