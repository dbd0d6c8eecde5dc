"""Experiment configuration: JSON schema, defaults and typed accessors."""
from __future__ import annotations

import copy
import json
import math
import os
from pathlib import Path

import jsonschema

from .errors import ConfigInvalid, TomographyError
from .measurement import ShotConfig
from .optics import BeamSplitterParams, OpticsConfig
from .representations import AnglePair
from .state import DensityMatrix, load_density, random_density

_NUM = {"type": "number"}

SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["mode"],
    "properties": {
        "mode": {"enum": ["minimal", "operator_basis", "optics"]},
        "dim": {"type": "integer", "minimum": 2},
        "cutoff": {"type": "integer", "minimum": 1},
        "angles": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"alpha": _NUM, "beta": _NUM, "gamma": {"type": ["number", "null"]},
                           "mag_a": {"type": "number", "exclusiveMinimum": 0},
                           "mag_b": {"type": "number", "exclusiveMinimum": 0}},
        },
        "three_state": {"type": "boolean"},
        "weighted": {"type": "boolean"},
        "shots": {"type": ["integer", "null"], "minimum": 1},
        "efficiency": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
        "seed": {"type": ["integer", "null"]},
        "state": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "file": {"type": "string"},
                "ginibre": {
                    "type": "object",
                    "additionalProperties": False,
                    "properties": {"rank": {"type": ["integer", "null"], "minimum": 1},
                                   "seed": {"type": "integer"}},
                },
            },
        },
        "beam_splitter": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"tau": _NUM, "refl": _NUM, "phi_tau": _NUM, "phi_rho": _NUM},
        },
        "p_policy": {"enum": ["average", "single"]},
        "p_single": {"type": ["integer", "null"], "minimum": 0},
        "probe_shift": {
            "type": "object",
            "additionalProperties": False,
            "properties": {"band": {"type": "integer", "minimum": 1},
                           "offsets": {"type": "array", "items": {"type": "integer", "minimum": 0}}},
        },
        "sweep": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "shot_levels": {"type": "array", "items": {"type": "integer", "minimum": 1}},
                "trials": {"type": "integer", "minimum": 1},
                "compare_three_state": {"type": "boolean"},
                "workers": {"type": "integer", "minimum": 1},
            },
        },
        "out": {"type": "string"},
    },
}

DEFAULTS = {
    "angles": {"alpha": 0.0, "beta": math.pi / 2, "gamma": None, "mag_a": 1.0, "mag_b": 1.0},
    "three_state": False,
    "weighted": False,
    "shots": None,
    "efficiency": 1.0,
    "seed": None,
    "state": {"ginibre": {"rank": None, "seed": 0}},
    "beam_splitter": {"tau": 0.5, "refl": 0.5, "phi_tau": 0.0, "phi_rho": 0.0},
    "p_policy": "average",
    "p_single": None,
    "probe_shift": {"band": 1, "offsets": [0, 1, 2]},
    "sweep": {"shot_levels": [10000, 1000000], "trials": 20, "compare_three_state": False,
              "workers": 1},
    "out": "out",
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = v
    return out


class ExperimentConfig:
    """Validated configuration with defaults filled in.

    ``raw`` is the merged dictionary that gets echoed into run reports.
    """

    def __init__(self, obj: dict, seed_override: int | None = None, base_dir: Path | None = None):
        try:
            jsonschema.validate(obj, SCHEMA)
        except jsonschema.ValidationError as exc:
            path = "/".join(str(p) for p in exc.absolute_path) or "<root>"
            raise ConfigInvalid(f"{path}: {exc.message}") from None
        raw = _merge(DEFAULTS, obj)
        if seed_override is not None:
            raw["seed"] = seed_override
        elif raw["seed"] is None:
            env = os.environ.get("TOMO_SEED")
            try:
                raw["seed"] = int(env) if env else 0
            except ValueError:
                raise ConfigInvalid(f"TOMO_SEED={env!r} is not an integer") from None
        self.raw = raw
        self.base_dir = base_dir or Path(".")
        mode = raw["mode"]
        if mode == "optics":
            if "cutoff" not in raw:
                raise ConfigInvalid("optics mode requires 'cutoff'")
        elif "dim" not in raw:
            raise ConfigInvalid(f"{mode} mode requires 'dim'")
        if mode == "operator_basis" and raw["three_state"]:
            raise ConfigInvalid("three_state applies to the minimal scheme only")
        try:
            self.angles
            self.optics
        except TomographyError as exc:
            raise ConfigInvalid(str(exc)) from None

    @classmethod
    def load(cls, path, seed_override: int | None = None) -> "ExperimentConfig":
        path = Path(path)
        try:
            obj = json.loads(path.read_text())
        except json.JSONDecodeError as exc:
            raise ConfigInvalid(f"{path}: line {exc.lineno}: {exc.msg}") from None
        return cls(obj, seed_override, path.parent)

    def __getitem__(self, key):
        return self.raw[key]

    @property
    def mode(self) -> str:
        return self.raw["mode"]

    @property
    def seed(self) -> int:
        return int(self.raw["seed"])

    @property
    def angles(self) -> AnglePair:
        a = self.raw["angles"]
        return AnglePair(a["alpha"], a["beta"], a["mag_a"], a["mag_b"])

    @property
    def gamma(self) -> float:
        g = self.raw["angles"]["gamma"]
        return math.pi / 4 if g is None else g

    @property
    def optics(self) -> OpticsConfig | None:
        if self.mode != "optics":
            return None
        return OpticsConfig(self.raw["cutoff"], BeamSplitterParams(**self.raw["beam_splitter"]),
                            self.raw["p_policy"], self.raw["p_single"])

    def shot_config(self, shots: int | None = None, seed: int | None = None) -> ShotConfig | None:
        shots = self.raw["shots"] if shots is None else shots
        if shots is None:
            return None
        return ShotConfig(shots, self.seed if seed is None else seed, self.raw["efficiency"])

    def state(self) -> DensityMatrix:
        spec = self.raw["state"]
        if "file" in spec:
            path = Path(spec["file"])
            if not path.is_absolute():
                path = self.base_dir / path
            rho, _ = load_density(path)
            return rho
        g = spec.get("ginibre", {})
        dim = self.raw.get("dim")
        if dim is None:
            raise ConfigInvalid("a Ginibre state needs 'dim'")
        return random_density(dim, g.get("rank"), g.get("seed", 0))

    @property
    def out(self) -> Path:
        return Path(self.raw["out"])
