"""Flat key=value configuration covering every tunable constant.

Format: one ``key = value`` per line, ``#`` starts a comment, keys are
namespaced (sim.*, ca.*, dwa.*, reward.*, td3.*, train.*, eval.*).
Unknown keys are rejected up front; the effective (post-default) config is
echoed into every run directory so results are reproducible.
"""

from __future__ import annotations

import math
from dataclasses import fields

from .envgen import CaConfig
from .metaenv import NavConfig, RewardConfig
from .planner import ParamBounds, PlannerParams
from .td3 import Td3Config
from .trainer import TrainConfig
from .world import RobotSpec


class ConfigError(ValueError):
    pass


def _ints(text: str) -> tuple:
    return tuple(int(x) for x in str(text).split(",") if x.strip())


# key -> (default, parser)
DEFAULTS = {
    # world / physics
    "sim.resolution": (0.05, float),
    "sim.physics_rate": (20.0, float),
    "sim.decision_period": (2.0, float),
    "sim.footprint_radius": (0.3, float),
    "sim.max_linear_speed": (2.0, float),
    "sim.max_angular_speed": (3.14, float),
    "sim.max_linear_accel": (2.0, float),
    "sim.max_angular_accel": (3.2, float),
    # environment generation
    "ca.fill_probability": (0.35, float),
    "ca.smoothing_iterations": (4, int),
    "ca.birth_threshold": (5, int),
    "ca.survive_threshold": (3, int),
    "ca.world_size": (10.0, float),
    "ca.cell_size": (0.25, float),
    # planner parameter bounds (the action box)
    "dwa.max_vel_x_lo": (0.2, float),
    "dwa.max_vel_x_hi": (2.0, float),
    "dwa.max_vel_theta_lo": (0.314, float),
    "dwa.max_vel_theta_hi": (3.14, float),
    "dwa.vx_samples_lo": (4, int),
    "dwa.vx_samples_hi": (12, int),
    "dwa.vtheta_samples_lo": (8, int),
    "dwa.vtheta_samples_hi": (40, int),
    "dwa.occdist_scale_lo": (0.1, float),
    "dwa.occdist_scale_hi": (1.0, float),
    "dwa.pdist_scale_lo": (0.1, float),
    "dwa.pdist_scale_hi": (1.5, float),
    "dwa.gdist_scale_lo": (0.1, float),
    "dwa.gdist_scale_hi": (1.5, float),
    "dwa.inflation_radius_lo": (0.1, float),
    "dwa.inflation_radius_hi": (0.6, float),
    # planner loop geometry
    "dwa.planner_rate": (5.0, float),
    "dwa.rollout_horizon": (1.0, float),
    "dwa.lookahead": (1.0, float),
    "dwa.goal_lookahead": (2.0, float),
    "dwa.costmap_side": (4.0, float),
    # reward / episode rules
    "reward.c_f": (1.0, float),
    "reward.c_p": (1.0, float),
    "reward.c_c": (0.05, float),
    "reward.gamma": (0.99, float),
    "reward.use_y_axis_progress": (True, bool),
    "reward.timeout_steps": (50, int),
    "reward.goal_tolerance": (0.3, float),
    "reward.terminal_on_collision": (False, bool),
    "reward.min_scan_over_period": (False, bool),
    # TD3
    "td3.gamma": (0.99, float),
    "td3.actor_lr": (3e-4, float),
    "td3.critic_lr": (3e-4, float),
    "td3.batch_size": (256, int),
    "td3.policy_delay": (2, int),
    "td3.tau": (0.005, float),
    "td3.target_noise_sigma": (0.2, float),
    "td3.target_noise_clip": (0.5, float),
    "td3.smoothing_enabled": (True, bool),
    "td3.warmup_steps": (2000, int),
    "td3.buffer_capacity": (500_000, int),
    "td3.hidden_sizes": ((512, 512, 512), _ints),
    "td3.actor_final_scale": (0.01, float),
    "td3.expl_sigma_start": (0.5, float),
    "td3.expl_sigma_decay_per_step": (1.25e-7, float),
    "td3.expl_sigma_floor": (0.02, float),
    # training orchestration
    "train.total_env_steps": (10_000, int),
    "train.workers": (4, int),
    "train.mode": ("async", str),
    "train.master_seed": (0, int),
    "train.sync_interval": (100, int),
    "train.update_ratio": (1.0, float),
    "train.metrics_window": (100, int),
    "train.checkpoint_at_step": (0, int),
    "train.stop_at_checkpoint": (False, bool),
    "train.disk_snapshot_interval": (0, int),
    # evaluation
    "eval.trials": (20, int),
    "eval.alpha": (0.05, float),
    "eval.jitter": (0.05, float),
}


def _parse_value(key: str, raw: str):
    default, parser = DEFAULTS[key]
    raw = raw.strip()
    if parser is bool:
        low = raw.lower()
        if low in ("true", "1", "yes", "on"):
            return True
        if low in ("false", "0", "no", "off"):
            return False
        raise ConfigError(f"{key}: expected a boolean, got {raw!r}")
    if parser is int:
        try:
            v = int(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected an integer, got {raw!r}") from exc
        return v
    if parser is float:
        try:
            v = float(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected a number, got {raw!r}") from exc
        if not math.isfinite(v):
            raise ConfigError(f"{key}: must be finite")
        return v
    if parser is _ints:
        try:
            return _ints(raw)
        except ValueError as exc:
            raise ConfigError(f"{key}: expected comma-separated integers") from exc
    return raw


class Config:
    """Validated effective configuration (defaults + overrides)."""

    def __init__(self, overrides: dict | None = None):
        self.values = {k: v for k, (v, _) in DEFAULTS.items()}
        for key, raw in (overrides or {}).items():
            if key not in DEFAULTS:
                raise ConfigError(f"unknown config key: {key!r}")
            self.values[key] = (raw if not isinstance(raw, str)
                                else _parse_value(key, raw))

    def __getitem__(self, key: str):
        return self.values[key]

    def set(self, key: str, value) -> None:
        if key not in DEFAULTS:
            raise ConfigError(f"unknown config key: {key!r}")
        self.values[key] = value

    # -- text round trip -----------------------------------------------------

    @classmethod
    def parse(cls, text: str) -> "Config":
        overrides = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"line {lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in DEFAULTS:
                raise ConfigError(f"line {lineno}: unknown config key {key!r}")
            overrides[key] = _parse_value(key, raw)
        return cls(overrides)

    @classmethod
    def load(cls, path: str) -> "Config":
        with open(path) as f:
            return cls.parse(f.read())

    def to_text(self) -> str:
        lines = []
        for key in sorted(self.values):
            v = self.values[key]
            if isinstance(v, bool):
                s = "true" if v else "false"
            elif isinstance(v, tuple):
                s = ",".join(str(x) for x in v)
            elif isinstance(v, float):
                s = repr(v)
            else:
                s = str(v)
            lines.append(f"{key} = {s}")
        return "\n".join(lines) + "\n"

    def echo(self, path: str) -> None:
        with open(path, "w") as f:
            f.write(self.to_text())

    # -- typed views -----------------------------------------------------------

    def robot_spec(self) -> RobotSpec:
        return RobotSpec(
            footprint_radius=self["sim.footprint_radius"],
            max_linear_speed=self["sim.max_linear_speed"],
            max_angular_speed=self["sim.max_angular_speed"],
            max_linear_accel=self["sim.max_linear_accel"],
            max_angular_accel=self["sim.max_angular_accel"])

    def ca_config(self) -> CaConfig:
        return CaConfig(
            fill_probability=self["ca.fill_probability"],
            smoothing_iterations=self["ca.smoothing_iterations"],
            birth_threshold=self["ca.birth_threshold"],
            survive_threshold=self["ca.survive_threshold"],
            world_size=self["ca.world_size"],
            cell_size=self["ca.cell_size"],
            resolution=self["sim.resolution"])

    def bounds(self) -> ParamBounds:
        def pair(name):
            return (self[f"dwa.{name}_lo"], self[f"dwa.{name}_hi"])

        return ParamBounds(
            max_vel_x=pair("max_vel_x"),
            max_vel_theta=pair("max_vel_theta"),
            vx_samples=pair("vx_samples"),
            vtheta_samples=pair("vtheta_samples"),
            occdist_scale=pair("occdist_scale"),
            pdist_scale=pair("pdist_scale"),
            gdist_scale=pair("gdist_scale"),
            inflation_radius=pair("inflation_radius"))

    def nav_config(self) -> NavConfig:
        return NavConfig(
            decision_period=self["sim.decision_period"],
            planner_rate=self["dwa.planner_rate"],
            physics_rate=self["sim.physics_rate"],
            rollout_horizon=self["dwa.rollout_horizon"],
            lookahead=self["dwa.lookahead"],
            goal_lookahead=self["dwa.goal_lookahead"],
            costmap_side=self["dwa.costmap_side"])

    def reward_config(self) -> RewardConfig:
        return RewardConfig(
            c_f=self["reward.c_f"], c_p=self["reward.c_p"],
            c_c=self["reward.c_c"], gamma=self["reward.gamma"],
            use_y_axis_progress=self["reward.use_y_axis_progress"],
            timeout_steps=self["reward.timeout_steps"],
            goal_tolerance=self["reward.goal_tolerance"],
            terminal_on_collision=self["reward.terminal_on_collision"],
            min_scan_over_period=self["reward.min_scan_over_period"])

    def td3_config(self) -> Td3Config:
        return Td3Config(
            gamma=self["td3.gamma"], actor_lr=self["td3.actor_lr"],
            critic_lr=self["td3.critic_lr"], batch_size=self["td3.batch_size"],
            policy_delay=self["td3.policy_delay"], tau=self["td3.tau"],
            target_noise_sigma=self["td3.target_noise_sigma"],
            target_noise_clip=self["td3.target_noise_clip"],
            smoothing_enabled=self["td3.smoothing_enabled"],
            warmup_steps=self["td3.warmup_steps"],
            buffer_capacity=self["td3.buffer_capacity"],
            hidden_sizes=tuple(self["td3.hidden_sizes"]),
            actor_final_scale=self["td3.actor_final_scale"],
            expl_sigma_start=self["td3.expl_sigma_start"],
            expl_sigma_decay_per_step=self["td3.expl_sigma_decay_per_step"],
            expl_sigma_floor=self["td3.expl_sigma_floor"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(
            total_env_steps=self["train.total_env_steps"],
            workers=self["train.workers"],
            mode=self["train.mode"],
            master_seed=self["train.master_seed"],
            sync_interval=self["train.sync_interval"],
            update_ratio=self["train.update_ratio"],
            metrics_window=self["train.metrics_window"],
            checkpoint_at_step=self["train.checkpoint_at_step"],
            stop_at_checkpoint=self["train.stop_at_checkpoint"],
            disk_snapshot_interval=self["train.disk_snapshot_interval"])


def parse_params_file(path: str) -> PlannerParams:
    """Planner parameters from a flat key=value file (8 known names)."""
    names = {f.name for f in fields(PlannerParams)}
    kw = {}
    with open(path) as f:
        for lineno, line in enumerate(f, 1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{lineno}: expected 'key = value'")
            key, raw = (part.strip() for part in stripped.split("=", 1))
            if key not in names:
                raise ConfigError(f"{path}:{lineno}: unknown parameter {key!r}")
            if key in ("vx_samples", "vtheta_samples"):
                kw[key] = int(raw)
            else:
                kw[key] = float(raw)
    return PlannerParams(**kw)
