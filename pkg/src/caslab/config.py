"""Run configuration handling.

A run config is one JSON document with an explicit schema version.  Loading
deep-merges the user document over the defaults (normalization), so every
run can write back its full effective config for reproducibility audits.
"""

from __future__ import annotations

import copy
import json
from pathlib import Path
from typing import Optional

import numpy as np

from .core import Advisory
from .dynamics import IntruderModel, PilotModel
from .optimizer import DEFAULT_H_CUTS, DEFAULT_RATE_CUTS, Grid, RewardParams
from .runtime import OnlineContext
from .tcas import TcasConfig

CONFIG_SCHEMA_VERSION = 1

DEFAULT_CONFIG = {
    "schema_version": CONFIG_SCHEMA_VERSION,
    "paths": {
        "model_file": None,
        "proposal_file": None,
        "table_file": None,
        "structure_file": None,
        "initial_samples_csv": None,
        "transition_samples_csv": None,
    },
    "grid": {
        "h_cuts": [float(v) for v in DEFAULT_H_CUTS],
        "hdot_cuts": [float(v) for v in DEFAULT_RATE_CUTS],
        "tau_max": 40,
    },
    "rewards": {
        "collision_cost": -1.0,
        "alert_cost": -0.01,
        "strengthen_cost": -0.005,
        "reversal_cost": -0.02,
        "nmac_vertical": 100.0,
    },
    "pilot": {
        "response_probability": 1.0 / 6.0,
        "acceleration": 8.05,
        "deterministic_delay": 5.0,
    },
    "intruder": {"sigma_accel": 8.0},
    "tcas": {
        "ta_tau": 40.0,
        "ra_tau": 25.0,
        "miss_distance_threshold": 7291.338,
        "alim": 400.0,
    },
    "online": {
        "inhibit_altitude": 1000.0,
        "cost_magnitude": -1.0e6,
        "belief_sigma_h": 25.0,
        "belief_sigma_rate": 2.0,
        "belief_particles": 20,
    },
    "encounter": {
        "mode": "correlated",
        "duration": 50.0,
        "dt": 1.0,
        "use_default_model": True,
    },
    "slice": {"hdot0": 0.0, "hdot1": 0.0, "a_prev": "COC"},
    "sample": {"count": 10},
    "simulate": {"index": 0},
    "evaluation": {
        "n": 1000,
        "seed": None,
        "equipage": ["table", "none"],
        "compare_unequipped": True,
        "per_encounter_csv": False,
        "pilot_response_probability": None,
    },
}


class ConfigError(ValueError):
    pass


def _deep_merge(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise ConfigError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _deep_merge(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def load_config(path: Optional[str] = None) -> dict:
    """Parse and normalize a config file (or return pure defaults)."""
    if path is None:
        return copy.deepcopy(DEFAULT_CONFIG)
    with open(path) as f:
        user = json.load(f)
    version = user.get("schema_version")
    if version != CONFIG_SCHEMA_VERSION:
        raise ConfigError(f"unsupported config schema version: {version!r}")
    return _deep_merge(DEFAULT_CONFIG, user)


def dump_config(cfg: dict) -> str:
    return json.dumps(cfg, indent=2, sort_keys=True) + "\n"


def write_effective_config(cfg: dict, out_dir) -> Path:
    path = Path(out_dir) / "effective_config.json"
    path.write_text(dump_config(cfg))
    return path


def grid_from_config(cfg: dict) -> Grid:
    g = cfg["grid"]
    return Grid(
        h_cuts=np.asarray(g["h_cuts"], dtype=float),
        hdot0_cuts=np.asarray(g["hdot_cuts"], dtype=float),
        hdot1_cuts=np.asarray(g["hdot_cuts"], dtype=float),
        tau_max=int(g["tau_max"]),
    )


def rewards_from_config(cfg: dict) -> RewardParams:
    return RewardParams(**cfg["rewards"])


def pilot_from_config(cfg: dict) -> PilotModel:
    return PilotModel(**cfg["pilot"])


def intruder_from_config(cfg: dict) -> IntruderModel:
    return IntruderModel(**cfg["intruder"])


def tcas_from_config(cfg: dict, pilot: PilotModel) -> TcasConfig:
    return TcasConfig(pilot=pilot, **cfg["tcas"])


def context_from_config(cfg: dict) -> OnlineContext:
    o = cfg["online"]
    return OnlineContext(
        inhibit_altitude=float(o["inhibit_altitude"]),
        cost_magnitude=float(o["cost_magnitude"]),
    )


def slice_fixed_from_config(cfg: dict) -> dict:
    s = cfg["slice"]
    return {
        "hdot0": float(s["hdot0"]),
        "hdot1": float(s["hdot1"]),
        "a_prev": Advisory(s["a_prev"]),
    }
