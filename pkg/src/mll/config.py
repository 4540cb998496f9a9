"""JSON experiment configuration: schema and validation."""
from __future__ import annotations

import copy
import json
from pathlib import Path

import jsonschema

from .errors import ConfigInvalid

__all__ = ["KINDS", "schema", "kind_schema", "validate", "load_config"]

KINDS = ("sample", "bias_scan", "local_error", "contraction", "deviation", "growth", "constants", "msc",
         "gbm_check", "duality", "suite")

_num = {"type": "number"}
_pos = {"type": "number", "exclusiveMinimum": 0}
_count = {"type": "integer", "minimum": 1}
_vec = {"type": "array", "items": _num, "minItems": 1}
_pos_list = {"type": "array", "items": _pos, "minItems": 1}


def _obj(props, required=()):
    return {"type": "object", "properties": props, "required": list(required), "additionalProperties": False}


MAP = {"oneOf": [
    _obj({"kind": {"const": "quadratic"}, "dim": _count}, ["kind", "dim"]),
    _obj({"kind": {"const": "orthant_log_barrier"}, "dim": _count}, ["kind", "dim"]),
    _obj({"kind": {"const": "gbm1d"}, "alpha": _pos}, ["kind", "alpha"]),
    _obj({"kind": {"const": "polytope_log_barrier"},
          "A": {"type": "array", "items": _vec, "minItems": 1}, "b": _vec}, ["kind", "A", "b"]),
]}

POTENTIAL = {"oneOf": [
    _obj({"kind": {"const": "relative_affine"}, "lambda": _pos, "b": {"oneOf": [_num, _vec]}}, ["kind", "lambda"]),
    _obj({"kind": {"const": "quadratic_gaussian"}, "c": _pos}, ["kind", "c"]),
]}

LAW = {"oneOf": [
    _num,
    _vec,
    _obj({"kind": {"const": "point"}, "y0": {"oneOf": [_num, _vec]}}, ["kind", "y0"]),
    _obj({"kind": {"const": "gaussian"}, "mean": {"oneOf": [_num, _vec]}, "std": _pos}, ["kind", "mean", "std"]),
]}

RANGE = {"type": "array", "items": _num, "minItems": 2, "maxItems": 2}

COMMON = {
    "experiment": {"enum": list(KINDS)},
    "seed": {"type": "integer", "minimum": 0},
    "name": {"type": "string"},
    "description": {"type": "string"},
    "out": {"type": "string"},
    "threads": _count,
}

_KIND_PROPS = {
    "sample": ({"map": MAP, "potential": POTENTIAL, "h": _pos, "k": {"type": "integer", "minimum": 0},
                "chains": _count, "init": LAW, "policy": {"enum": ["fail", "reject_resample", "clamp_epsilon"]},
                "n_boot": {"type": "integer", "minimum": 0},
                "expect": _obj({"max_w2": _pos})},
               ["map", "potential", "h", "k", "chains"]),
    "bias_scan": ({"map": MAP, "potential": POTENTIAL, "h_grid": _pos_list,
                   "k_per_h": {"type": "array", "items": _count}, "chains": _count, "init": LAW,
                   "n_snapshots": _count, "n_boot": {"type": "integer", "minimum": 0},
                   "expect": _obj({"slope_range": RANGE, "ula_oracle_rel_tol": _pos})},
                  ["map", "potential", "h_grid", "chains"]),
    "local_error": ({"map": MAP, "potential": POTENTIAL, "h_grid": _pos_list, "replicas": _count, "init": LAW,
                     "fine_steps": _count, "control_variate": {"type": "boolean"},
                     "measure": {"type": "array", "items": {"enum": ["weak", "strong"]}, "minItems": 1},
                     "expect": _obj({"weak_slope_min": _num, "strong_slope_range": RANGE,
                                     "envelopes": {"type": "boolean"}})},
                    ["map", "potential", "h_grid", "replicas", "init"]),
    "contraction": ({"map": MAP, "potential": POTENTIAL, "y0": LAW, "y0p": LAW, "h": _pos, "k": _count,
                     "pairs": _count,
                     "expect": _obj({"rate": _num, "rel_tol": _pos, "contracting": {"type": "boolean"}})},
                    ["map", "potential", "y0", "y0p", "h", "k", "pairs"]),
    "deviation": ({"map": MAP, "potential": POTENTIAL, "init": LAW, "init_p": LAW, "t_grid": _pos_list,
                   "pairs": _count, "fine_steps": _count},
                  ["map", "potential", "init", "init_p", "t_grid", "pairs", "fine_steps"]),
    "growth": ({"map": MAP, "potential": POTENTIAL, "init": LAW, "t_grid": _pos_list, "replicas": _count,
                "fine_steps": _count},
               ["map", "potential", "init", "t_grid", "replicas", "fine_steps"]),
    "constants": ({"map": MAP, "potential": POTENTIAL, "E_y0_sq": {"type": "number", "minimum": 0},
                   "E_target_sq": {"type": "number", "minimum": 0}, "eps": _pos_list, "w0": _pos,
                   "not_contractive_alphas": {"type": "array", "items": {"type": "number", "minimum": 0}},
                   "expect": _obj({"mixing_ratio_range": RANGE})},
                  ["map", "potential", "E_y0_sq"]),
    "msc": ({"epsilon_grid": _pos_list, "A": {"type": "array", "items": _vec, "minItems": 1}, "b": _vec,
             "probe_pairs": _count, "box": _pos,
             "expect": _obj({"witness_rel_tol": _pos, "bound_ratio_range": RANGE})},
            []),
    "gbm_check": ({"alpha": _pos, "t": _pos, "y0": _pos, "replicas": _count,
                   "contraction": _obj({"alphas": _pos_list, "h": _pos, "k": _count, "pairs": _count,
                                        "y0": _pos, "y0p": _pos}, ["alphas", "h", "k", "pairs"])},
                  ["alpha", "t", "replicas"]),
    "duality": ({"maps": {"type": "array", "items": MAP, "minItems": 1}, "points": _count, "h": _pos,
                 "lambda": _pos},
                ["maps", "points"]),
    "suite": ({"experiments": {"type": "array", "minItems": 1, "items": {"type": "object"}}},
              ["experiments"]),
}


def kind_schema(kind: str, nested: bool = False) -> dict:
    props, required = _KIND_PROPS[kind]
    out = _obj({**COMMON, **props}, (["experiment"] if nested else ["experiment", "seed"]) + list(required))
    out["properties"]["experiment"] = {"const": kind}
    return out


def schema() -> dict:
    """The published schema: one alternative per experiment kind."""
    return {
        "$schema": "https://json-schema.org/draft/2020-12/schema",
        "title": "mll experiment configuration",
        "oneOf": [kind_schema(k) for k in KINDS],
    }


def validate(cfg, nested: bool = False) -> dict:
    """Validate ``cfg``; raises :class:`ConfigInvalid` with the first problem found."""
    if not isinstance(cfg, dict):
        raise ConfigInvalid("configuration must be a JSON object")
    kind = cfg.get("experiment")
    if kind not in KINDS:
        raise ConfigInvalid(f"'experiment' must be one of {', '.join(KINDS)}")
    try:
        jsonschema.validate(cfg, kind_schema(kind, nested))
    except jsonschema.ValidationError as exc:
        where = "/".join(str(p) for p in exc.absolute_path) or "<root>"
        raise ConfigInvalid(f"{where}: {exc.message}") from None
    if kind == "suite":
        for i, sub in enumerate(cfg["experiments"]):
            if isinstance(sub, dict) and sub.get("experiment") == "suite":
                raise ConfigInvalid(f"experiments/{i}: suites cannot nest")
            try:
                validate(sub, nested=True)
            except ConfigInvalid as exc:
                raise ConfigInvalid(f"experiments/{i}/{exc}") from None
    if kind == "bias_scan" and "k_per_h" in cfg and len(cfg["k_per_h"]) != len(cfg["h_grid"]):
        raise ConfigInvalid("k_per_h must match h_grid in length")
    if kind == "msc" and "epsilon_grid" not in cfg and "A" not in cfg:
        raise ConfigInvalid("msc needs 'epsilon_grid' or 'A' and 'b'")
    if kind == "msc" and ("A" in cfg) != ("b" in cfg):
        raise ConfigInvalid("msc needs both 'A' and 'b'")
    return copy.deepcopy(cfg)


def load_config(path) -> dict:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise ConfigInvalid(f"cannot read {path}: {exc}") from None
    try:
        cfg = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigInvalid(f"{path}: invalid JSON: {exc}") from None
    return validate(cfg)
