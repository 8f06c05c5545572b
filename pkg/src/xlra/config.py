"""Run configuration: one JSON document with dotted-path overrides."""
from __future__ import annotations

import copy
import json
from pathlib import Path

import numpy as np

from . import elasticity as el
from .core import TrainConfig


class ConfigError(ValueError):
    pass


DEFAULTS = {
    "seed": 0,
    "grid": {"dims": [31, 31]},
    "generator": {"kind": "two_phase", "params": {"hard_vf": 0.2, "sigma": 2.0}},
    "material": {"preset": "two_phase", "ec": 10.0, "metal": "Ni", "nu": el.DEFAULT_NU},
    "load": {"e11": 1e-4, "mean_strain": None},
    "solver": {"tol": 1e-8, "max_iter": 10_000, "scheme": "auto", "reference": "auto"},
    "basis": {"kind": None, "n_harmonics": 1, "gsh_count": 10},
    "train": {"target": "e11", **TrainConfig().to_dict()},
    "dataset": {"n": 200, "train_fraction": 0.05},
    "eval": {"n_bins": 128, "tail_fraction": 0.05},
    "sweep": {
        "train_size": [0.01, 0.02, 0.05, 0.1],
        "delta_T": [2.0, 1.0, 0.5, "inf"],
        "ec": [10.0, 100.0, 1000.0],
        "zener": ["Al", "Cu", "Ni", "Pb"],
        "basis_count": [0, 1, 2],
    },
    "workers": 1,
}

PROFILES = {
    "desk2d": {},
    "smoke3d": {"grid": {"dims": [15, 15, 15]}, "dataset": {"n": 20, "train_fraction": 0.15},
                "generator": {"kind": "polycrystal", "params": {"n_grains": 10}},
                "material": {"preset": "polycrystal"}},
}

GENERATOR_DEFAULTS = {
    "two_phase": {"hard_vf": 0.2, "sigma": 2.0},
    "porous": {"porosity": 0.15, "sigma": 2.0},
    "polycrystal": {"n_grains": 10},
    "dual_phase": {"n_grains": 50, "hard_vf": 0.2},
}


def merge(base, over):
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_value(text):
    """JSON literal if it parses, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_path(cfg, dotted, value):
    keys = dotted.split(".")
    node = cfg
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            if k in node and node[k] is not None:
                raise ConfigError(f"cannot descend into non-object at {k!r} of {dotted!r}")
            node[k] = {}
        node = node[k]
    node[keys[-1]] = value


def load_config(path=None, overrides=(), profile=None):
    """Defaults, then profile, then a JSON file, then ``key.path=value`` overrides."""
    cfg = copy.deepcopy(DEFAULTS)
    if profile:
        if profile not in PROFILES:
            raise ConfigError(f"unknown profile {profile!r}; choose from {sorted(PROFILES)}")
        cfg = merge(cfg, PROFILES[profile])
    if path:
        try:
            user = json.loads(Path(path).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        cfg = merge(cfg, user)
        gen = user.get("generator", {})
        if "kind" in gen:
            # a new generator starts from its own defaults
            cfg["generator"]["params"] = merge(GENERATOR_DEFAULTS.get(gen["kind"], {}),
                                               gen.get("params", {}))
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not key.path=value")
        k, v = item.split("=", 1)
        set_path(cfg, k.strip(), parse_value(v.strip()))
        if k.strip() == "generator.kind":
            # a new generator starts from its own defaults
            cfg["generator"]["params"] = copy.deepcopy(
                GENERATOR_DEFAULTS.get(cfg["generator"]["kind"], {}))
    validate(cfg)
    return cfg


def validate(cfg):
    dims = cfg["grid"]["dims"]
    if not isinstance(dims, list) or len(dims) not in (2, 3) or min(dims) < 2:
        raise ConfigError(f"grid.dims must list 2 or 3 sizes >= 2, got {dims}")
    if cfg["generator"]["kind"] not in GENERATOR_DEFAULTS:
        raise ConfigError(f"unknown generator {cfg['generator']['kind']!r}")
    if cfg["material"]["preset"] not in ("two_phase", "porous", "polycrystal", "dual_phase"):
        raise ConfigError(f"unknown material preset {cfg['material']['preset']!r}")
    if int(cfg["dataset"]["n"]) < 1:
        raise ConfigError("dataset.n must be >= 1")
    if not 0.0 < float(cfg["dataset"]["train_fraction"]) < 1.0:
        raise ConfigError("dataset.train_fraction must lie in (0, 1)")
    if not np.any(mean_strain(cfg)):
        raise ConfigError("applied mean strain must be nonzero")
    if cfg.get("seed") is None:
        raise ConfigError("seed is required")
    train_config(cfg)


def train_config(cfg):
    t = {k: v for k, v in cfg["train"].items() if k != "target"}
    try:
        return TrainConfig.from_dict(t)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid train config: {exc}") from exc


def mean_strain(cfg):
    """Applied Voigt mean strain; defaults to uniaxial e11."""
    nd = len(cfg["grid"]["dims"])
    nv = 3 if nd == 2 else 6
    explicit = cfg["load"].get("mean_strain")
    if explicit is not None:
        E = np.asarray(explicit, dtype=float)
        if E.shape != (nv,):
            raise ConfigError(f"load.mean_strain needs {nv} components")
        return E
    E = np.zeros(nv)
    E[0] = float(cfg["load"]["e11"])
    return E


def material_spec(cfg):
    m = cfg["material"]
    preset = m["preset"]
    if preset == "two_phase":
        return el.two_phase_material(float(m["ec"]), nu=float(m.get("nu", el.DEFAULT_NU)))
    if preset == "porous":
        return el.porous_material(float(m.get("porous_ec", 1e4)), nu=float(m.get("nu", el.DEFAULT_NU)))
    if preset == "polycrystal":
        if m["metal"] not in el.FCC_CONSTANTS:
            raise ConfigError(f"unknown metal {m['metal']!r}")
        return el.polycrystal_material(m["metal"])
    return el.dual_phase_material()
