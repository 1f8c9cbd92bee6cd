"""Configuration model and JSON loading.

A single JSON file with sections {lanes, agents, planner, weights, rss,
benchmark} configures every tunable in the system.  All defaults ship in
code; a config file only needs to state overrides.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .errors import ConfigError


@dataclass(frozen=True)
class IdmParams:
    """Car-following parameter set (desired speed, headway, spacing, limits)."""

    desired_speed: float = 10.0      # m/s
    time_headway: float = 1.2       # s
    min_spacing: float = 2.0        # m
    max_accel: float = 2.0          # m/s^2
    comfort_decel: float = 2.5      # m/s^2, positive
    exponent: float = 4.0

    def validate(self) -> None:
        if min(self.desired_speed, self.time_headway, self.min_spacing,
               self.max_accel, self.comfort_decel, self.exponent) <= 0:
            raise ConfigError(f"IDM parameters must be positive: {self}")


@dataclass(frozen=True)
class RssParams:
    """Safe-distance model parameters (longitudinal and lateral)."""

    response_time: float = 0.5      # s
    max_accel: float = 2.0          # m/s^2, accel during response time
    min_brake: float = 4.0          # m/s^2
    max_brake: float = 8.0          # m/s^2
    lat_fluct_accel: float = 0.2    # m/s^2, lateral accel during response
    lat_min_brake: float = 0.8      # m/s^2
    lat_margin: float = 0.1         # m, fluctuation margin mu

    def validate(self) -> None:
        if not (0.0 < self.min_brake <= self.max_brake):
            raise ConfigError("require 0 < min_brake <= max_brake")
        if self.response_time <= 0:
            raise ConfigError("response_time must be positive")


@dataclass(frozen=True)
class PurePursuitParams:
    lookahead_gain: float = 0.6     # s of travel
    lookahead_min: float = 3.0      # m
    lookahead_max: float = 15.0     # m
    steer_max: float = 0.65         # rad


@dataclass(frozen=True)
class GapControlParams:
    """Gains and margins of the merge-gap tracking controller."""

    gain_v: float = 1.0             # 1/s
    gain_s: float = 0.5             # 1/s
    min_spacing: float = 2.0        # m, bumper margin inside the gap
    safe_headway: float = 1.0      # s
    lateral_clearance: float = 0.5  # m, preferred clearance to obstacles

    def validate(self) -> None:
        if self.gain_v <= 0 or self.gain_s <= 0:
            raise ConfigError("gap controller gains must be positive")
        if self.safe_headway <= 0 or self.lateral_clearance < 0:
            raise ConfigError("invalid gap controller margins")


@dataclass(frozen=True)
class CostWeights:
    """Weights of the efficiency / safety / navigation policy cost."""

    efficiency: float = 1.0
    safety: float = 1.0
    navigation: float = 1.0
    speed_pref: float = 0.5         # per |v_ego - v_pref|
    overshoot: float = 1.0          # per max(v_ego - v_lead, 0)
    lead_pref: float = 0.6          # per |v_lead - v_pref|
    collision: float = 1000.0
    rss_base: float = 0.1
    rss_exp: float = 0.5
    user_command: float = 10.0
    consistency: float = 2.0
    discount: float = 0.7

    def validate(self) -> None:
        for f in fields(self):
            if getattr(self, f.name) < 0:
                raise ConfigError(f"cost weight {f.name} must be >= 0")
        if not (0.0 <= self.discount <= 1.0):
            raise ConfigError("discount must lie in [0, 1]")


#: Longitudinal style presets for the ego policies.  Desired speed is the
#: session speed preference scaled per style.
EGO_STYLE_PRESETS: dict[str, dict[str, float]] = {
    "aggressive": {"speed_scale": 1.15, "time_headway": 0.8, "min_spacing": 1.5,
                   "max_accel": 2.5, "comfort_decel": 3.0},
    "moderate": {"speed_scale": 1.0, "time_headway": 1.2, "min_spacing": 2.0,
                 "max_accel": 2.0, "comfort_decel": 2.5},
    "conservative": {"speed_scale": 0.85, "time_headway": 1.8, "min_spacing": 2.5,
                     "max_accel": 1.5, "comfort_decel": 2.0},
}

#: Traffic aggressiveness levels: desired time headway and the lateral
#: cooperative range within which background agents yield to a cut-in.
TRAFFIC_AGGRESSIVENESS: dict[int, dict[str, float]] = {
    1: {"time_headway": 2.0, "cooperative_range": 2.55},
    2: {"time_headway": 1.5, "cooperative_range": 2.00},
    3: {"time_headway": 1.0, "cooperative_range": 1.75},
}


@dataclass(frozen=True)
class PlannerParams:
    """Behavior-layer knobs: tree shape, rollout resolution, CFB limits."""

    tree_height: int = 5
    action_duration: float = 1.0    # s
    sim_dt: float = 0.2             # s
    preferred_speed: float = 12.0   # m/s, overridable per session
    scenario_cap: int = 32
    cfb_check_period: float = 0.4   # s between swept-box conflict checks
    cfb_margin: float = 0.5         # m inflation for conflict checks
    completion_frac: float = 0.25   # |d| < frac * lane width ends a change
    # Assumed leader-switch range of everyone else.  Covers the marking-
    # hugging announcement position so simulated traffic starts yielding
    # to a nosing-in vehicle; optimism against uncooperative traffic is
    # handled by the safety mechanism, not the model.
    lateral_consider_range: float = 2.7
    accel_hard_max: float = 6.0     # m/s^2 control clamp (both signs)
    speed_max: float = 30.0         # m/s
    gate_safety_cost_limit: float = 8.0  # trace safety cost tolerated by the gate
    intent_weight_offset: float = 4.0
    intent_weight_heading: float = 2.0
    intent_weight_rate: float = 1.5

    def validate(self) -> None:
        if self.tree_height < 1:
            raise ConfigError("tree_height must be >= 1")
        if self.sim_dt <= 0 or self.action_duration <= 0:
            raise ConfigError("time steps must be positive")
        steps = self.action_duration / self.sim_dt
        if abs(steps - round(steps)) > 1e-9:
            raise ConfigError("action_duration must be a multiple of sim_dt")


@dataclass(frozen=True)
class TrajectoryParams:
    """Motion-layer knobs: corridor inflation and QP weights/limits."""

    inflate_step: float = 0.2       # m per axis per round
    max_s_half: float = 15.0        # m
    max_d_half_frac: float = 1.75   # times lane half width
    agent_margin: float = 0.3       # m inflation of other agents' boxes
    w_smooth_s: float = 1.0
    w_smooth_d: float = 1.0
    w_fit_s: float = 0.5
    w_fit_d: float = 2.0
    v_max_s: float = 30.0
    v_min_s: float = -0.5
    v_max_d: float = 3.0
    a_max_s: float = 6.0
    a_max_d: float = 4.0


@dataclass(frozen=True)
class BenchmarkParams:
    """Forced-merge scenario layout and run controls."""

    lane_count: int = 2
    lane_width: float = 3.0         # m, narrow city lanes
    lane_length: float = 500.0      # m
    ego_lane: int = 1               # right lane, blocked ahead
    target_lane: int = 0
    ego_start_s: float = 60.0
    ego_start_speed: float = 10.0
    obstacle_s: float = 210.0       # broken-down car position in ego lane
    preparation_distance: float = 150.0
    agent_count: int = 6
    agent_spacing: float = 20.0     # m center to center
    agent_spacing_jitter: float = 2.0
    agent_speed: float = 10.0
    agent_desired_speed: float = 12.0
    ai_min_spacing: float = 2.0
    ai_max_accel: float = 2.0
    ai_comfort_decel: float = 2.5
    first_agent_s: float = 20.0     # column start, lane frame
    aggressiveness: int = 1
    variant: str = "interactive"    # interactive | no_safety | decoupled
    cycles: int = 300
    world_dt: float = 0.05          # s, 20 Hz
    seed: int = 0

    def validate(self) -> None:
        if self.variant not in ("interactive", "no_safety", "decoupled"):
            raise ConfigError(f"unknown planner variant {self.variant!r}")
        if self.aggressiveness not in TRAFFIC_AGGRESSIVENESS:
            raise ConfigError(f"aggressiveness must be in {sorted(TRAFFIC_AGGRESSIVENESS)}")
        if self.cycles <= 0:
            raise ConfigError("cycles must be positive")


@dataclass(frozen=True)
class VehicleParams:
    length: float = 4.6
    width: float = 1.9
    wheelbase: float = 2.85


@dataclass(frozen=True)
class Config:
    planner: PlannerParams = field(default_factory=PlannerParams)
    weights: CostWeights = field(default_factory=CostWeights)
    rss: RssParams = field(default_factory=RssParams)
    pure_pursuit: PurePursuitParams = field(default_factory=PurePursuitParams)
    gap_control: GapControlParams = field(default_factory=GapControlParams)
    trajectory: TrajectoryParams = field(default_factory=TrajectoryParams)
    benchmark: BenchmarkParams = field(default_factory=BenchmarkParams)
    vehicle: VehicleParams = field(default_factory=VehicleParams)

    def validate(self) -> "Config":
        self.planner.validate()
        self.weights.validate()
        self.rss.validate()
        self.gap_control.validate()
        self.benchmark.validate()
        return self

    def ego_style_idm(self, style: str) -> IdmParams:
        preset = EGO_STYLE_PRESETS[style]
        return IdmParams(
            desired_speed=self.planner.preferred_speed * preset["speed_scale"],
            time_headway=preset["time_headway"],
            min_spacing=preset["min_spacing"],
            max_accel=preset["max_accel"],
            comfort_decel=preset["comfort_decel"],
        )

    def traffic_idm(self, aggressiveness: int) -> IdmParams:
        level = TRAFFIC_AGGRESSIVENESS[aggressiveness]
        b = self.benchmark
        return IdmParams(
            desired_speed=b.agent_desired_speed,
            time_headway=level["time_headway"],
            min_spacing=b.ai_min_spacing,
            max_accel=b.ai_max_accel,
            comfort_decel=b.ai_comfort_decel,
        )


_SECTIONS = {
    "planner": PlannerParams,
    "weights": CostWeights,
    "rss": RssParams,
    "pure_pursuit": PurePursuitParams,
    "gap_control": GapControlParams,
    "trajectory": TrajectoryParams,
    "benchmark": BenchmarkParams,
    "vehicle": VehicleParams,
}


def default_config() -> Config:
    return Config().validate()


def config_from_dict(data: dict[str, Any]) -> Config:
    """Build a Config from a nested dict of section overrides."""
    kwargs = {}
    for section, cls in _SECTIONS.items():
        overrides = data.get(section, {})
        if not isinstance(overrides, dict):
            raise ConfigError(f"section {section!r} must be an object")
        known = {f.name for f in fields(cls)}
        unknown = set(overrides) - known
        if unknown:
            raise ConfigError(f"unknown keys in section {section!r}: {sorted(unknown)}")
        kwargs[section] = cls(**overrides)
    extra = set(data) - set(_SECTIONS) - {"lanes", "agents"}
    if extra:
        raise ConfigError(f"unknown config sections: {sorted(extra)}")
    return Config(**kwargs).validate()


def load_config(path: str | Path) -> Config:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    return config_from_dict(data)


def with_overrides(cfg: Config, **sections: Any) -> Config:
    """Return a copy of `cfg` with per-section field overrides applied."""
    updates = {}
    for name, over in sections.items():
        if name not in _SECTIONS:
            raise ConfigError(f"unknown section {name!r}")
        updates[name] = replace(getattr(cfg, name), **over)
    return replace(cfg, **updates).validate()
