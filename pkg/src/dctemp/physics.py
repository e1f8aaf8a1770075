"""Server-room and building power as a function of inlet temperature.

Fans keep the chip heat rate constant: with ``h ~ v**alpha`` the speed
multiple needed at inlet ``T`` is ``((T_hot - T_ref) / (T_hot - T))**(1/alpha)``
and fan power follows the cube of speed. Cooling runs either on the chiller,
whose COP rises linearly with chilled-water temperature, or on free cooling
when the outdoor air is cold enough.

Functions accept scalars or numpy arrays unless noted.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from enum import Enum
from pathlib import Path

import numpy as np

COP_FLOOR = 0.1

# Reported or recommended inlet setpoints, degC
SETPOINT_PRESETS = {
    "ashrae_lower": 18.0,
    "ashrae_upper": 27.0,
    "colocation_typical": 24.0,
    "google": 26.6,
    "microsoft": 27.0,
    "meta": 29.4,
}


class InfeasibleCoolingError(ValueError):
    """Inlet air at or above the hot-surface temperature cannot remove heat."""


class Mode(str, Enum):
    CHILLER = "chiller"
    ECONOMIZER = "economizer"


@dataclass(frozen=True)
class FanModel:
    reference_inlet: float = 24.0
    hot_surface_temp: float = 60.0
    h_velocity_exponent: float = 0.8
    reference_fan_fraction: float = 0.043  # fan power / IT compute power at reference_inlet
    airflow_per_kw: float = 4.75  # m3/min per kW at reference_inlet

    def __post_init__(self):
        if not 0 < self.h_velocity_exponent <= 1:
            raise ValueError("h_velocity_exponent must lie in (0, 1]")
        if not 0 <= self.reference_fan_fraction < 1:
            raise ValueError("reference_fan_fraction must lie in [0, 1)")
        if not self.hot_surface_temp > self.reference_inlet:
            raise ValueError("hot_surface_temp must exceed reference_inlet")
        if self.airflow_per_kw <= 0:
            raise ValueError("airflow_per_kw must be positive")


@dataclass(frozen=True)
class ChillerModel:
    reference_cop: float = 4.0
    reference_chw_temp: float = 16.0
    cop_gain_per_degC: float = 0.0315
    chw_approach: float = 8.0  # inlet minus chilled-water supply

    def __post_init__(self):
        if self.reference_cop <= 0:
            raise ValueError("reference_cop must be positive")
        if self.cop_gain_per_degC < 0:
            raise ValueError("cop_gain_per_degC must be non-negative")


@dataclass(frozen=True)
class EconomizerModel:
    approach: float = 5.0  # outdoor must be this far below chilled-water temp
    overhead_fraction: float = 0.03  # pumps/fans per unit of heat moved
    enabled: bool = True

    def __post_init__(self):
        if self.overhead_fraction < 0:
            raise ValueError("overhead_fraction must be non-negative")


@dataclass(frozen=True)
class PlantConfig:
    fan: FanModel = field(default_factory=FanModel)
    chiller: ChillerModel = field(default_factory=ChillerModel)
    economizer: EconomizerModel = field(default_factory=EconomizerModel)
    fixed_overhead_fraction: float = 0.05  # UPS, distribution losses, lighting

    def __post_init__(self):
        if self.fixed_overhead_fraction < 0:
            raise ValueError("fixed_overhead_fraction must be non-negative")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, d: dict | None) -> "PlantConfig":
        d = dict(d or {})
        unknown = set(d) - {"fan", "chiller", "economizer", "fixed_overhead_fraction"}
        if unknown:
            raise ValueError(f"unknown plant fields: {sorted(unknown)}")
        return cls(
            fan=FanModel(**d.get("fan", {})),
            chiller=ChillerModel(**d.get("chiller", {})),
            economizer=EconomizerModel(**d.get("economizer", {})),
            fixed_overhead_fraction=float(d.get("fixed_overhead_fraction", 0.05)),
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, path: str | Path) -> "PlantConfig":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


@dataclass(frozen=True)
class PowerBreakdown:
    compute: float
    fans: float
    cooling: float
    overhead: float
    total: float
    pue: float
    mode: Mode


def cop_from_energy(q: float, w: float) -> float:
    """Coefficient of performance ``|Q| / W``."""
    if w <= 0:
        raise ValueError("work input must be positive")
    return abs(q) / w


def convective_heat_rate(h, area, t_hot, t_cold):
    """Newton's law of cooling, ``h * A * (T_hot - T_cold)`` in W."""
    if np.any(np.asarray(area) <= 0):
        raise ValueError("area must be positive")
    return h * area * (np.asarray(t_hot) - np.asarray(t_cold))


def fan_speed_ratio_for_setpoint(t_inlet, fan: FanModel = FanModel()):
    """Fan speed multiple that restores the reference heat rate at ``t_inlet``."""
    t = np.asarray(t_inlet, dtype=float)
    if np.any(t >= fan.hot_surface_temp):
        raise InfeasibleCoolingError(
            f"inlet temperature must stay below the hot-surface temperature {fan.hot_surface_temp} degC"
        )
    ratio = ((fan.hot_surface_temp - fan.reference_inlet) / (fan.hot_surface_temp - t)) ** (1.0 / fan.h_velocity_exponent)
    return float(ratio) if ratio.ndim == 0 else ratio


def fan_power(speed_ratio, reference_fan_power):
    """Fan affinity law: power scales with the cube of speed."""
    s = np.asarray(speed_ratio, dtype=float)
    if np.any(s < 0):
        raise ValueError("speed_ratio must be non-negative")
    p = reference_fan_power * s**3
    return float(p) if np.ndim(p) == 0 else p


def required_airflow(t_inlet, it_power_kw, fan: FanModel = FanModel()):
    """Server airflow in m3/min; airflow is linear in fan speed."""
    return fan.airflow_per_kw * np.asarray(it_power_kw) * fan_speed_ratio_for_setpoint(t_inlet, fan)


def server_room_power(t_inlet, it_compute_power, fan: FanModel = FanModel()):
    """Return ``(compute, fans)`` in kW for the room at ``t_inlet``."""
    if np.any(np.asarray(it_compute_power) < 0):
        raise ValueError("it_compute_power must be non-negative")
    ratio = fan_speed_ratio_for_setpoint(t_inlet, fan)
    fans = fan_power(ratio, np.asarray(it_compute_power, dtype=float) * fan.reference_fan_fraction)
    if np.ndim(fans) == 0:
        fans = float(fans)
    return it_compute_power, fans


def chilled_water_temp(t_inlet, chiller: ChillerModel = ChillerModel()):
    return np.asarray(t_inlet, dtype=float) - chiller.chw_approach


def chiller_cop_at(t_inlet, chiller: ChillerModel = ChillerModel()):
    t_chw = chilled_water_temp(t_inlet, chiller)
    cop = chiller.reference_cop * (1.0 + chiller.cop_gain_per_degC * (t_chw - chiller.reference_chw_temp))
    cop = np.maximum(cop, COP_FLOOR)
    return float(cop) if cop.ndim == 0 else cop


def economizer_active(t_inlet, outdoor_temp, plant: PlantConfig):
    if not plant.economizer.enabled:
        return np.zeros(np.broadcast(np.asarray(t_inlet), np.asarray(outdoor_temp)).shape, dtype=bool)
    threshold = chilled_water_temp(t_inlet, plant.chiller) - plant.economizer.approach
    return np.asarray(outdoor_temp) <= threshold


def cooling_power_arrays(heat_load, t_inlet, outdoor_temp, plant: PlantConfig):
    """Vectorised cooling power; returns ``(power, economizer_mask)``."""
    heat = np.asarray(heat_load, dtype=float)
    free = economizer_active(t_inlet, outdoor_temp, plant)
    pumps = plant.economizer.overhead_fraction * heat
    power = np.where(free, pumps, heat / chiller_cop_at(t_inlet, plant.chiller) + pumps)
    return power, free


def cooling_power(heat_load: float, t_inlet: float, outdoor_temp: float, plant: PlantConfig = PlantConfig()) -> tuple[float, Mode]:
    if heat_load < 0:
        raise ValueError("heat_load must be non-negative")
    power, free = cooling_power_arrays(heat_load, t_inlet, outdoor_temp, plant)
    return float(power), Mode.ECONOMIZER if bool(free) else Mode.CHILLER


def building_power_arrays(t_inlet, it_compute_power, outdoor_temp, plant: PlantConfig) -> dict[str, np.ndarray]:
    """Vectorised building power with broadcasting over all three inputs."""
    compute, fans = server_room_power(t_inlet, it_compute_power, plant.fan)
    compute = np.asarray(compute, dtype=float)
    fans = np.asarray(fans, dtype=float)
    it = compute + fans
    cooling, free = cooling_power_arrays(it, t_inlet, outdoor_temp, plant)
    overhead = plant.fixed_overhead_fraction * it
    total = compute + fans + cooling + overhead
    return {"compute": compute, "fans": fans, "cooling": cooling, "overhead": overhead, "total": total, "economizer": free}


def building_power(t_inlet: float, it_compute_power: float, outdoor_temp: float, plant: PlantConfig = PlantConfig()) -> PowerBreakdown:
    compute, fans = server_room_power(t_inlet, it_compute_power, plant.fan)
    it = compute + fans
    cooling, mode = cooling_power(it, t_inlet, outdoor_temp, plant)
    overhead = plant.fixed_overhead_fraction * it
    total = compute + fans + cooling + overhead
    return PowerBreakdown(
        compute=float(compute),
        fans=float(fans),
        cooling=cooling,
        overhead=overhead,
        total=total,
        pue=total / it if it > 0 else 1.0,
        mode=mode,
    )


def pue(p_it: float, p_non_it: float) -> float:
    """Power usage effectiveness ``1 + P_non_IT / P_IT``."""
    if p_it <= 0:
        raise ValueError("IT power must be positive")
    if p_non_it < 0:
        raise ValueError("non-IT power must be non-negative")
    return 1.0 + p_non_it / p_it
