"""Run configuration: a versioned JSON schema validated before any sampling.

An invalid configuration raises ConfigError and produces no output files.
Laws are given inline (dimension, epsilon, weighted probability vectors) or
by built-in name.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

from . import laws as laws_mod
from .env_model import SiteLaw, make_law
from .errors import ConfigError

SCHEMA_VERSION = 1

_BUILTIN_LAWS = {
    "d1_symmetric": laws_mod.d1_symmetric,
    "d1_drift": laws_mod.d1_drift,
    "d2_random": laws_mod.d2_random,
    "d3_random": laws_mod.d3_random,
    "d5_homogeneous": laws_mod.d5_homogeneous,
    "d5_random": laws_mod.d5_random,
    "d5_fast": laws_mod.d5_fast,
    "deterministic_right": laws_mod.deterministic_right,
}


@dataclass
class RunConfig:
    """Validated experiment configuration."""

    law: SiteLaw
    master_seed: int
    horizon: int = 10_000
    margin: int = 1_000
    reps: int = 1_000
    n_grid: tuple[int, ...] = ()
    n_slabs: int = 1_000
    z0: tuple[int, ...] = ()
    radius: float = 0.0
    out_dir: str | None = None
    options: dict[str, Any] = field(default_factory=dict)
    raw: dict[str, Any] = field(default_factory=dict, repr=False)

    def resolved(self) -> dict[str, Any]:
        """Full configuration as embedded in every report."""
        return {
            "schema_version": SCHEMA_VERSION,
            "law": {
                "dimension": self.law.d,
                "epsilon": self.law.epsilon,
                "atoms": [
                    {"weight": w, "probs": list(k.probs)} for w, k in self.law.atoms
                ],
            },
            "master_seed": self.master_seed,
            "horizon": self.horizon,
            "margin": self.margin,
            "reps": self.reps,
            "n_grid": list(self.n_grid),
            "n_slabs": self.n_slabs,
            "z0": list(self.z0),
            "radius": self.radius,
            "out_dir": self.out_dir,
            "options": self.options,
        }


def _require(cond: bool, msg: str) -> None:
    if not cond:
        raise ConfigError(msg)


def _parse_law(spec: Any) -> SiteLaw:
    _require(isinstance(spec, dict), "law must be an object")
    if "builtin" in spec:
        name = spec["builtin"]
        _require(name in _BUILTIN_LAWS, f"unknown builtin law {name!r}")
        return _BUILTIN_LAWS[name]()
    for key in ("dimension", "epsilon", "atoms"):
        _require(key in spec, f"law missing field {key!r}")
    d = spec["dimension"]
    _require(isinstance(d, int) and d >= 1, "dimension must be an integer >= 1")
    eps = spec["epsilon"]
    _require(isinstance(eps, (int, float)) and 0.0 <= eps < 1.0,
             "epsilon must lie in [0, 1)")
    atoms = spec["atoms"]
    _require(isinstance(atoms, list) and atoms, "atoms must be a non-empty list")
    pairs = []
    for i, atom in enumerate(atoms):
        _require(isinstance(atom, dict) and "weight" in atom and "probs" in atom,
                 f"atom {i} must have weight and probs")
        probs = atom["probs"]
        _require(isinstance(probs, list) and len(probs) == 2 * d,
                 f"atom {i} needs {2 * d} probabilities")
        pairs.append((atom["weight"], probs))
    try:
        return make_law(d, float(eps), pairs)
    except Exception as exc:
        raise ConfigError(f"invalid law: {exc}") from exc


def parse_config(data: dict[str, Any]) -> RunConfig:
    _require(isinstance(data, dict), "config must be a JSON object")
    _require(data.get("schema_version") == SCHEMA_VERSION,
             f"schema_version must be {SCHEMA_VERSION}")
    _require("law" in data, "config missing 'law'")
    _require("master_seed" in data, "config missing 'master_seed'")
    seed = data["master_seed"]
    _require(isinstance(seed, int) and seed >= 0, "master_seed must be a nonnegative integer")
    law = _parse_law(data["law"])

    def _int_field(name: str, default: int, minimum: int) -> int:
        v = data.get(name, default)
        _require(isinstance(v, int) and v >= minimum,
                 f"{name} must be an integer >= {minimum}")
        return v

    horizon = _int_field("horizon", 10_000, 2)
    margin = _int_field("margin", 1_000, 0)
    _require(margin < horizon, "margin must be < horizon")
    reps = _int_field("reps", 1_000, 1)
    n_slabs = _int_field("n_slabs", 1_000, 1)
    n_grid = data.get("n_grid", [])
    _require(isinstance(n_grid, list) and all(isinstance(v, int) and v >= 1 for v in n_grid),
             "n_grid must be a list of integers >= 1")
    z0 = data.get("z0", [])
    _require(isinstance(z0, list) and all(isinstance(v, int) for v in z0),
             "z0 must be a list of integers")
    if z0:
        _require(len(z0) == law.d, "z0 dimension must match the law")
    radius = data.get("radius", 0.0)
    _require(isinstance(radius, (int, float)) and radius >= 0.0,
             "radius must be a nonnegative number")
    out_dir = data.get("out_dir")
    _require(out_dir is None or isinstance(out_dir, str),
             "out_dir must be a string path")
    options = data.get("options", {})
    _require(isinstance(options, dict), "options must be an object")
    return RunConfig(
        law=law,
        master_seed=seed,
        horizon=horizon,
        margin=margin,
        reps=reps,
        n_grid=tuple(n_grid),
        n_slabs=n_slabs,
        z0=tuple(z0),
        radius=float(radius),
        out_dir=out_dir,
        options=dict(options),
        raw=dict(data),
    )


def load_config(path) -> RunConfig:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = json.load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config is not valid JSON: {exc}") from exc
    return parse_config(data)
