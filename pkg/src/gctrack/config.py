"""Run configuration: one INI file drives every experiment.

Grammar: INI sections of `key = value` pairs (configparser syntax).  Every
key has a typed default below; unknown sections or keys are rejected by
name so a typo cannot silently fall back to a default.  Command-line
flags override file values.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass

from .env import EpisodeConfig
from .evaluate import EvalProtocol
from .geometry import CameraIntrinsics
from .reward import RewardConfig
from .training import CurriculumConfig, PpoConfig


class ConfigError(Exception):
    """Malformed configuration; the message names the offending key."""


# section -> key -> (parser, default)
_SCHEMA = {
    "camera": {
        "width": (float, 84.0),
        "height": (float, 84.0),
        "fov": (float, 1.0),
    },
    "reward": {
        "alpha": (float, 4.0),
        "lambda_clip": (float, 0.7),
    },
    "env": {
        "max_steps": (int, 1500),
        "lost_threshold": (int, 100),
        "dt": (float, 0.04),
        "drone_speed": (float, 40.0),
        "drone_yaw_rate": (float, 2.0),
        "target_max_speed": (float, 20.0),
        "phase": (int, 2),
        "obs_mode": (str, "features"),
    },
    "ppo": {
        "gamma": (float, 0.9),
        "gae_lambda": (float, 0.95),
        "entropy_beta": (float, 0.01),
        "clip_eps": (float, 0.2),
        "rollout_steps": (int, 256),
        "minibatch": (int, 256),
        "epochs": (int, 4),
        "learning_rate": (float, 3e-4),
        "workers": (int, 8),
        "critic_coef": (float, 0.5),
    },
    "curriculum": {
        "eta": (float, 0.6),
        "window": (int, 5000),
        "total_steps": (int, 150_000),
    },
    "eval": {
        "episodes_per_angle": (int, 10),
        "e_ml": (int, 1500),
    },
    "verify": {
        "poses": (int, 10_000),
        "tolerance": (float, 1e-9),
        "counterexample_poses": (int, 100),
        "samples_per_pose": (int, 10_000),
    },
    "contours": {
        "pitch": (float, math.pi / 2.0),
        "altitude": (float, 10.0),
        "yaw": (float, 0.0),
        "resolution": (int, 201),
    },
    "run": {
        "seed": (int, 0),
        "out": (str, "out"),
    },
}


@dataclass
class RunConfig:
    values: dict

    def __getitem__(self, section: str) -> dict:
        return self.values[section]

    @property
    def camera(self) -> CameraIntrinsics:
        c = self.values["camera"]
        return CameraIntrinsics(c["width"], c["height"], c["fov"])

    @property
    def reward(self) -> RewardConfig:
        r = self.values["reward"]
        return RewardConfig(r["alpha"], r["lambda_clip"])

    @property
    def episode(self) -> EpisodeConfig:
        e = self.values["env"]
        return EpisodeConfig(
            e["max_steps"],
            e["lost_threshold"],
            e["dt"],
            e["drone_speed"],
            e["drone_yaw_rate"],
            e["target_max_speed"],
            e["phase"],
        )

    @property
    def obs_mode(self) -> str:
        return self.values["env"]["obs_mode"]

    @property
    def ppo(self) -> PpoConfig:
        p = self.values["ppo"]
        return PpoConfig(
            p["gamma"],
            p["gae_lambda"],
            p["entropy_beta"],
            p["clip_eps"],
            p["rollout_steps"],
            p["minibatch"],
            p["epochs"],
            p["learning_rate"],
            p["workers"],
            p["critic_coef"],
        )

    @property
    def curriculum(self) -> CurriculumConfig:
        c = self.values["curriculum"]
        return CurriculumConfig(c["eta"], c["window"], c["total_steps"])

    @property
    def protocol(self) -> EvalProtocol:
        e = self.values["eval"]
        return EvalProtocol(episodes_per_angle=e["episodes_per_angle"], e_ml=e["e_ml"])

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    @property
    def out(self) -> str:
        return self.values["run"]["out"]

    def validate(self) -> None:
        """Re-run every component invariant; raises ConfigError on failure."""
        try:
            self.camera, self.reward, self.episode, self.ppo, self.protocol
            self.curriculum.validate(self.reward.alpha)
            if self.obs_mode not in ("features", "grid"):
                raise ValueError(f"env.obs_mode must be features or grid, got {self.obs_mode!r}")
            if self.values["contours"]["resolution"] < 2:
                raise ValueError("contours.resolution must be at least 2")
            for key in ("poses", "counterexample_poses", "samples_per_pose"):
                if self.values["verify"][key] < 0:
                    raise ValueError(f"verify.{key} must be nonnegative")
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc


def default_config() -> RunConfig:
    return RunConfig({s: {k: d for k, (_, d) in keys.items()} for s, keys in _SCHEMA.items()})


def load_config(path=None, overrides: dict | None = None) -> RunConfig:
    """Parse an INI config file, apply flag overrides, validate everything.

    `overrides` maps "section.key" to already-typed values.
    """
    cfg = default_config()
    if path is not None:
        parser = configparser.ConfigParser()
        try:
            with open(path) as fh:
                parser.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config file: {exc}") from exc
        except configparser.Error as exc:
            raise ConfigError(f"config syntax error: {exc}") from exc
        for section in parser.sections():
            if section not in _SCHEMA:
                raise ConfigError(f"unknown config section [{section}]")
            for key, raw in parser.items(section):
                if key not in _SCHEMA[section]:
                    raise ConfigError(f"unknown config key {section}.{key}")
                parse = _SCHEMA[section][key][0]
                try:
                    cfg.values[section][key] = parse(raw)
                except ValueError as exc:
                    raise ConfigError(f"bad value for {section}.{key}: {raw!r}") from exc
    for dotted, value in (overrides or {}).items():
        section, key = dotted.split(".", 1)
        if section not in _SCHEMA or key not in _SCHEMA[section]:
            raise ConfigError(f"unknown override {dotted}")
        cfg.values[section][key] = value
    cfg.validate()
    return cfg
