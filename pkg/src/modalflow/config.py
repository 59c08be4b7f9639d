"""Experiment configuration: one JSON document, validated against a schema.

Presets ship as JSON files in ``modalflow/presets``. Each holds the paper-scale
configuration verbatim under ``config`` and per-scale dotted-path overrides
under ``scales``; ``desk`` is the default scale.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import jsonschema

from . import initial_conditions
from .basis import Basis, PhysicalDomain, make_basis
from .dataset import ModalBox
from .solvers import PdeSpec, SolverConfig
from .training import TrainConfig

SCALES = ("paper", "desk")


class ConfigError(ValueError):
    pass


_number = {"oneOf": [{"type": "number"}, {"type": "string", "pattern": r"^-?(\d*\.?\d*)?pi$"}]}
_vector = {"type": "array", "items": {"type": "number"}, "minItems": 1}

SCHEMA = {
    "type": "object",
    "required": ["basis", "pde", "box", "delta", "samples", "network", "training", "prediction"],
    "additionalProperties": False,
    "properties": {
        "name": {"type": "string"},
        "description": {"type": "string"},
        "scale": {"enum": list(SCALES)},
        "seed": {"type": "integer", "minimum": 0},
        "basis": {
            "type": "object",
            "required": ["kind", "domain"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["real-trig", "sine", "tensor-trig-2d"]},
                "domain": {
                    "type": "object",
                    "required": ["bounds", "boundary"],
                    "additionalProperties": False,
                    "properties": {
                        "bounds": {"type": "array", "minItems": 1, "maxItems": 2,
                                   "items": {"type": "array", "items": _number,
                                             "minItems": 2, "maxItems": 2}},
                        "boundary": {"type": "array", "minItems": 1, "maxItems": 2,
                                     "items": {"enum": ["periodic", "homogeneous-dirichlet"]}},
                    },
                },
                "size": {"type": "integer", "minimum": 0},
                "nodes": {"oneOf": [{"type": "integer", "minimum": 1}, {"type": "null"},
                                    {"type": "array", "items": {"type": "integer", "minimum": 1}}]},
                "quadrature": {"enum": ["uniform", "gauss", None]},
            },
        },
        "pde": {
            "type": "object",
            "required": ["kind"],
            "additionalProperties": False,
            "properties": {
                "kind": {"enum": ["advection1d", "diffusion1d", "burgers1d", "advdiff2d"]},
                "alpha": {"oneOf": [{"type": "number"}, _vector]},
                "sigma": {"oneOf": [{"type": "number", "minimum": 0}, _vector]},
            },
        },
        "solver": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "grid": {"type": "integer", "minimum": 8},
                "dt": {"type": ["number", "null"], "exclusiveMinimum": 0},
                "cfl": {"type": "number", "exclusiveMinimum": 0, "maximum": 0.5},
                "dealias": {"enum": ["2/3", "none"]},
                "limiter": {"enum": ["minmod", "none"]},
            },
        },
        "box": {
            "type": "object",
            "required": ["lo", "hi"],
            "additionalProperties": False,
            "properties": {
                "units": {"enum": ["raw", "orthonormal"]},
                "lo": _vector,
                "hi": _vector,
            },
        },
        "delta": {"type": "number", "exclusiveMinimum": 0},
        "samples": {"type": "integer", "minimum": 1},
        "noise": {"type": "number", "minimum": 0},
        "network": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "blocks": {"type": "integer", "minimum": 1},
                "depth": {"type": "integer", "minimum": 1},
                "width": {"type": "integer", "minimum": 1},
                "activation": {"enum": ["tanh", "relu"]},
                "seed": {"type": "integer", "minimum": 0},
                "init_scale": {"type": "number", "exclusiveMinimum": 0},
            },
        },
        "training": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "epochs": {"type": "integer", "minimum": 1},
                "batch_size": {"type": "integer", "minimum": 1},
                "learning_rate": {"type": "number", "exclusiveMinimum": 0},
                "optimizer": {"enum": ["adam", "sgd"]},
                "shuffle_seed": {"type": "integer", "minimum": 0},
                "validation_fraction": {"type": "number", "minimum": 0, "maximum": 0.5},
                "checkpoint_every": {"type": "integer", "minimum": 0},
            },
        },
        "prediction": {
            "type": "object",
            "required": ["initial_condition", "horizon"],
            "additionalProperties": False,
            "properties": {
                "initial_condition": {"oneOf": [{"type": "string"}, _vector]},
                "horizon": {"type": "number", "minimum": 0},
                "references": {"type": "array",
                               "items": {"enum": ["optimal-projection", "galerkin", "exact-modal"]}},
                "field_times": {"type": "array", "items": {"type": "number", "minimum": 0}},
            },
        },
        "analysis": {
            "type": "object",
            "additionalProperties": False,
            "properties": {
                "probe_points": {"type": "integer", "minimum": 1},
                "bound_steps": {"type": "integer", "minimum": 0},
            },
        },
    },
}

DEFAULTS = {
    "seed": 0,
    "noise": 0.0,
    "solver": {},
    "network": {"blocks": 1, "depth": 3, "width": 30, "activation": "tanh", "seed": 0,
                "init_scale": 1.0},
    "training": {"epochs": 100, "batch_size": 10, "learning_rate": 1e-3, "optimizer": "adam",
                 "shuffle_seed": 0, "validation_fraction": 0.0, "checkpoint_every": 0},
    "analysis": {"probe_points": 10000, "bound_steps": 30},
}


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def parse_number(x) -> float:
    """Numbers or strings such as "pi", "-pi", "2pi", "0.5pi"."""
    if isinstance(x, (int, float)):
        return float(x)
    s = x.strip()
    sign = -1.0 if s.startswith("-") else 1.0
    s = s.lstrip("-")
    if not s.endswith("pi"):
        raise ConfigError(f"cannot read {x!r} as a number")
    head = s[:-2]
    return sign * (float(head) if head else 1.0) * math.pi


def parse_value(text: str):
    """Value part of --set KEY=VALUE: JSON if it parses, else the raw string."""
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def set_path(doc: dict, dotted: str, value) -> None:
    keys = dotted.split(".")
    node = doc
    for k in keys[:-1]:
        if not isinstance(node.get(k, {}), dict):
            raise ConfigError(f"--set {dotted}: {k!r} is not an object")
        node = node.setdefault(k, {})
    node[keys[-1]] = value


def apply_overrides(doc: dict, overrides) -> dict:
    """Apply "a.b.c=value" strings or a {dotted: value} mapping."""
    doc = copy.deepcopy(doc)
    items = overrides.items() if isinstance(overrides, dict) else overrides
    for item in items:
        if isinstance(item, str):
            if "=" not in item:
                raise ConfigError(f"override {item!r} is not of the form KEY=VALUE")
            key, text = item.split("=", 1)
            set_path(doc, key.strip(), parse_value(text))
        else:
            set_path(doc, item[0], item[1])
    return doc


def load_json(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from exc
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from exc


def preset_names() -> list[str]:
    return sorted(p.name[:-5] for p in resources.files("modalflow.presets").iterdir()
                  if p.name.endswith(".json"))


def load_preset(name: str, scale: str = "desk") -> dict:
    if scale not in SCALES:
        raise ConfigError(f"unknown scale {scale!r}; expected one of {SCALES}")
    if name not in preset_names():
        raise ConfigError(f"unknown preset {name!r}; available: {', '.join(preset_names())}")
    doc = json.loads(resources.files("modalflow.presets").joinpath(f"{name}.json").read_text())
    cfg = apply_overrides(doc["config"], doc.get("scales", {}).get(scale, {}))
    cfg["name"] = name
    cfg["scale"] = scale
    return cfg


def validate(doc: dict, source: str = "config") -> dict:
    """Schema check plus cross-field checks; returns the document with defaults filled."""
    errors = sorted(jsonschema.Draft202012Validator(SCHEMA).iter_errors(doc),
                    key=lambda e: list(e.absolute_path))
    if errors:
        lines = [f"{source}: {'.'.join(str(p) for p in e.absolute_path) or '<root>'}: {e.message}"
                 for e in errors]
        raise ConfigError("\n".join(lines))
    doc = _merge(DEFAULTS, doc)
    exp = ExperimentConfig(doc)
    try:
        basis = exp.basis()
        exp.pde()
        exp.solver()
        exp.train_config()
    except (ValueError, KeyError) as exc:
        raise ConfigError(f"{source}: {exc}") from exc
    for key in ("lo", "hi"):
        if len(doc["box"][key]) != basis.n:
            raise ConfigError(f"{source}: box.{key} has {len(doc['box'][key])} entries "
                              f"but the basis has n = {basis.n}")
    ic = doc["prediction"]["initial_condition"]
    if isinstance(ic, str) and ic not in initial_conditions.REGISTRY:
        raise ConfigError(f"{source}: prediction.initial_condition: unknown id {ic!r}; "
                          f"known: {sorted(initial_conditions.REGISTRY)}")
    if isinstance(ic, list) and len(ic) != basis.n:
        raise ConfigError(f"{source}: prediction.initial_condition has {len(ic)} coefficients, "
                          f"basis has n = {basis.n}")
    if exp.pde().boundary not in basis.domain.boundary:
        raise ConfigError(f"{source}: pde {exp.pde().kind} needs a {exp.pde().boundary} domain")
    return doc


@dataclass
class ExperimentConfig:
    doc: dict

    def basis(self) -> Basis:
        b = self.doc["basis"]
        bounds = [tuple(parse_number(x) for x in pair) for pair in b["domain"]["bounds"]]
        domain = PhysicalDomain(tuple(bounds), tuple(b["domain"]["boundary"]))
        nodes = b.get("nodes")
        if self.doc["pde"]["kind"] == "burgers1d" and nodes is None:
            nodes = self.solver().grid
        return make_basis(domain, b["kind"], b.get("size", 3), nodes=nodes,
                          quadrature=b.get("quadrature"))

    def pde(self) -> PdeSpec:
        return PdeSpec.from_dict(self.doc["pde"])

    def solver(self) -> SolverConfig:
        return SolverConfig.from_dict(self.doc.get("solver", {}))

    def box(self, basis: Basis | None = None) -> ModalBox:
        box = self.doc["box"]
        if box.get("units", "raw") == "raw":
            return ModalBox.from_raw_amplitudes(basis or self.basis(), box["lo"], box["hi"])
        return ModalBox(box["lo"], box["hi"])

    def train_config(self) -> TrainConfig:
        return TrainConfig(**self.doc["training"])

    @property
    def delta(self) -> float:
        return float(self.doc["delta"])

    @property
    def steps(self) -> int:
        return int(round(self.doc["prediction"]["horizon"] / self.delta))

    def initial_condition(self, basis: Basis | None = None):
        ic = self.doc["prediction"]["initial_condition"]
        if isinstance(ic, str):
            return initial_conditions.get(ic)
        return initial_conditions.from_coefficients(basis or self.basis(), ic)

    def references(self) -> list[str]:
        refs = self.doc["prediction"].get("references")
        if refs is None:
            refs = ["optimal-projection"] + (["galerkin"] if self.doc["pde"]["kind"] == "burgers1d" else [])
        return refs


def resolve(config_path=None, preset: str | None = None, scale: str = "desk",
            seed: int | None = None, overrides=()) -> ExperimentConfig:
    """Build the effective configuration from a file or preset plus CLI overrides."""
    if (config_path is None) == (preset is None):
        raise ConfigError("give exactly one of --config or --preset")
    if preset is not None:
        doc, source = load_preset(preset, scale), f"preset {preset}"
    else:
        doc, source = load_json(config_path), str(config_path)
    if seed is not None:
        doc["seed"] = seed
        doc.setdefault("network", {})["seed"] = seed
        doc.setdefault("training", {})["shuffle_seed"] = seed
    doc = apply_overrides(doc, overrides)
    return ExperimentConfig(validate(doc, source))
