"""Experiment configuration: YAML files validated against a JSON Schema.

Every section is optional in the file; missing keys take the defaults below.
The *resolved* configuration (defaults filled, overrides applied) is what the
CLI runs and what it writes next to its outputs, so any output can be
regenerated from that sidecar alone.
"""

from __future__ import annotations

import copy
import json
import re
from pathlib import Path
from typing import Any, Iterable

import jsonschema
import yaml

from .errors import ConfigError

SCHEMA_VERSION = 1


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e-3`` (no dot) as a float."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(
        r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
        |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
        |\.[0-9_]+(?:[eE][-+][0-9]+)?
        |[-+]?\.(?:inf|Inf|INF)
        |\.(?:nan|NaN|NAN))$""",
        re.X,
    ),
    list("-+0123456789."),
)


def _load_yaml(text: str):
    return yaml.load(text, Loader=_Loader)


_num = {"type": ["number", "string"]}  # decimal strings are read as exact rationals
_knots = {
    "oneOf": [
        _num,
        {"type": "array", "minItems": 2, "items": {"type": "array", "minItems": 2, "maxItems": 2, "items": _num}},
    ]
}


def _obj(props: dict, required: Iterable[str] = ()) -> dict:
    return {"type": "object", "additionalProperties": False, "properties": props, "required": list(required)}


_law = _obj(
    {
        "kind": {"enum": ["point", "uniform", "gaussian", "wave", "wave_mixture"]},
        "at": {"type": "number"},
        "low": {"type": "number"},
        "high": {"type": "number"},
        "mean": {"type": "number"},
        "variance": {"type": "number", "exclusiveMinimum": 0},
        "shifts": {"type": "array", "minItems": 1, "items": {"type": "number"}},
    },
    ["kind"],
)

SCHEMA = _obj(
    {
        "schema_version": {"const": SCHEMA_VERSION},
        "command": {"enum": ["simulate", "stability", "pde", "wave", "capital"]},
        "seed": {"type": "integer", "minimum": 0, "maximum": 2**64 - 1},
        "profile": _obj(
            {
                "kind": {"enum": ["atlas", "discrete", "meanfield", "linear", "smoothed_atlas"]},
                "n": {"type": "integer", "minimum": 1},
                "gamma": _num,
                "width": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
                "kappa": _num,
                "drifts": {"type": "array", "minItems": 1, "items": _num},
                "diffusions": {"type": "array", "minItems": 1, "items": _num},
                "drift": _knots,
                "sigma2": _knots,
            },
            ["kind"],
        ),
        "simulation": _obj(
            {
                "n": {"type": ["integer", "null"], "minimum": 1},
                "dt": {"type": "number", "exclusiveMinimum": 0},
                "t_end": {"type": "number", "exclusiveMinimum": 0},
                "burn_in": {"type": "number", "minimum": 0, "maximum": 1},
                "record_every": {"type": "number", "exclusiveMinimum": 0},
                "snapshot": {"enum": ["sorted", "quantiles"]},
                "initial": _law,
            }
        ),
        "grid": _obj(
            {
                "x_min": {"type": "number"},
                "x_max": {"type": "number"},
                "nx": {"type": "integer", "minimum": 2},
                "t_end": {"type": "number", "minimum": 0},
                "record_every": {"type": "number", "exclusiveMinimum": 0},
                "theta": {"oneOf": [{"const": "auto"}, {"type": "number", "minimum": 0, "maximum": 1}]},
                "initial": _law,
            }
        ),
        "wave": _obj(
            {
                "target_mean": {"type": "number"},
                "table_x_min": {"type": "number"},
                "table_x_max": {"type": "number"},
                "table_points": {"type": "integer", "minimum": 2},
                "horizon": {"type": "number", "minimum": 0},
                "record_every": {"type": "number", "exclusiveMinimum": 0},
                "perturbation_shifts": {"type": "array", "minItems": 1, "items": {"type": "number"}},
            }
        ),
        "capital": _obj(
            {
                "v_points": {"type": "integer", "minimum": 1},
                "top_fraction": {"type": "number", "exclusiveMinimum": 0, "exclusiveMaximum": 1},
                "simulate": {"type": "boolean"},
            }
        ),
    },
    ["schema_version", "profile"],
)

DEFAULTS: dict = {
    "seed": 0,
    "simulation": {
        "n": None,
        "dt": 1e-3,
        "t_end": 10.0,
        "burn_in": 0.2,
        "record_every": 0.1,
        "snapshot": "sorted",
        "initial": {"kind": "point", "at": 0.0},
    },
    "grid": {
        "x_min": -15.0,
        "x_max": 35.0,
        "nx": 2000,
        "t_end": 1.0,
        "record_every": 0.5,
        "theta": "auto",
        "initial": {"kind": "gaussian", "mean": 0.0, "variance": 1.0},
    },
    "wave": {
        "target_mean": 0.0,
        "table_x_min": -10.0,
        "table_x_max": 10.0,
        "table_points": 201,
        "horizon": 20.0,
        "record_every": 1.0,
        "perturbation_shifts": [-1.0, 1.0],
    },
    "capital": {"v_points": 99, "top_fraction": 0.1, "simulate": False},
}


def _merge(base: dict, over: dict) -> dict:
    out = copy.deepcopy(base)
    for k, v in over.items():
        if isinstance(v, dict) and isinstance(out.get(k), dict) and k not in ("initial", "profile"):
            out[k] = _merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def _path(parts) -> str:
    return ".".join(str(p) for p in parts)


def validate(cfg: dict) -> None:
    """Raise :class:`ConfigError` naming the offending key path."""
    validator = jsonschema.Draft202012Validator(SCHEMA)
    errors = sorted(validator.iter_errors(cfg), key=lambda e: (len(e.absolute_path), list(map(str, e.absolute_path))))
    if not errors:
        return
    err = errors[0]
    path = list(err.absolute_path)
    if err.validator == "additionalProperties":
        extra = sorted(set(err.instance) - set(err.schema.get("properties", {})))
        raise ConfigError("unknown key", _path(path + extra[:1]))
    if err.validator == "required":
        missing = [k for k in err.validator_value if k not in err.instance]
        raise ConfigError("required key is missing", _path(path + missing[:1]))
    raise ConfigError(err.message, _path(path) or "<root>")


def _parse_scalar(text: str) -> Any:
    try:
        return _load_yaml(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse value {text!r}: {exc}") from None


def apply_overrides(cfg: dict, overrides: Iterable[str]) -> dict:
    """Apply ``key.sub=value`` assignments; values are parsed as YAML scalars."""
    out = copy.deepcopy(cfg)
    for item in overrides:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ConfigError(f"override must look like key=value, got {item!r}")
        parts = key.split(".")
        node = out
        for depth, p in enumerate(parts[:-1]):
            nxt = node.get(p)
            if nxt is None:
                nxt = node[p] = {}
            if not isinstance(nxt, dict):
                raise ConfigError("cannot descend into a non-mapping value", _path(parts[: depth + 1]))
            node = nxt
        node[parts[-1]] = _parse_scalar(raw)
    return out


def resolve(raw: dict, overrides: Iterable[str] = (), seed=None) -> dict:
    """Defaults, then file contents, then overrides and seed; validated."""
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a mapping", "<root>")
    cfg = apply_overrides(raw, overrides)
    if seed is not None:
        cfg["seed"] = seed
    validate(cfg)
    cfg = _merge(DEFAULTS, cfg)
    validate(cfg)
    return cfg


def load(path, overrides: Iterable[str] = (), seed=None) -> dict:
    path = Path(path)
    try:
        raw = _load_yaml(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read configuration: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"invalid YAML: {exc}") from None
    return resolve(raw if raw is not None else {}, overrides, seed)


def dump(cfg: dict) -> str:
    return yaml.safe_dump(cfg, sort_keys=True, default_flow_style=None, width=100)


def parse(text: str) -> dict:
    return resolve(_load_yaml(text) or {})


def schema_json() -> str:
    return json.dumps(SCHEMA, indent=2, sort_keys=True) + "\n"


if __name__ == "__main__":
    print(schema_json(), end="")
