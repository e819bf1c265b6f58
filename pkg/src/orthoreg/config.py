"""Run configuration: TOML files with a fixed schema, overridable from the command line."""

from __future__ import annotations

import copy
import os
import sys

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .errors import ConfigurationError

FLOAT, INT, STR, BOOL = "float", "int", "str", "bool"
FLOATS, INTS, STRS = "float list", "int list", "str list"

TOP_LEVEL = {"seed": INT, "out": STR}

SECTIONS = {
    "profile": {"N": INT, "ell": INT, "p": FLOAT, "q": FLOAT, "max_iter": INT},
    "scan": {"N": INT, "ell": INT, "p_min": FLOAT, "p_max": FLOAT, "q_min": FLOAT,
             "q_max": FLOAT, "steps": INT, "csv": STR},
    "besov": {"grid": STR, "axis": INT, "p": FLOAT, "order": INT},
    "mesh": {"lower": FLOATS, "upper": FLOATS, "nodes": INTS},
    "integrand": {"p": FLOATS, "delta": FLOATS},
    "schedule": {"eps": FLOAT, "eps_list": FLOATS},
    "problem": {"source": STR, "source_file": STR, "boundary": STR, "tol": FLOAT, "max_iter": INT},
    "output": {"solution": STR, "csv": STR},
    "probe": {"solutions": STRS, "levels": INTS, "margin": FLOAT},
    "inequalities": {"samples": INT},
}

DEFAULTS = {
    "seed": 0,
    "profile": {"max_iter": 10_000},
    "scan": {"p_min": 2.0, "p_max": 10.0, "q_min": 2.0, "q_max": 10.0, "steps": 17},
    "besov": {"axis": 0, "p": 2.0, "order": 1},
    "mesh": {"lower": [-1.0, -1.0], "upper": [1.0, 1.0]},
    "schedule": {"eps": 0.0},
    "problem": {"source": "zero", "boundary": "zero", "tol": 1e-8, "max_iter": 200_000},
    "probe": {"margin": 0.25},
    "inequalities": {"samples": 100_000},
}


def _check(kind: str, value, where: str):
    def fail():
        raise ConfigurationError(f"{where} must be a {kind}, got {value!r}")

    scalar = {
        INT: lambda v: isinstance(v, int) and not isinstance(v, bool),
        FLOAT: lambda v: isinstance(v, (int, float)) and not isinstance(v, bool),
        STR: lambda v: isinstance(v, str),
        BOOL: lambda v: isinstance(v, bool),
    }
    if kind in scalar:
        if not scalar[kind](value):
            fail()
        return float(value) if kind == FLOAT else value
    inner = {FLOATS: FLOAT, INTS: INT, STRS: STR}[kind]
    if not isinstance(value, (list, tuple)):
        fail()
    return [_check(inner, v, f"{where}[{i}]") for i, v in enumerate(value)]


def validate(raw: dict) -> dict:
    """Reject unknown keys and wrong types; returns a normalized deep copy."""
    out = {}
    for key, value in raw.items():
        if key in TOP_LEVEL:
            out[key] = _check(TOP_LEVEL[key], value, key)
        elif key in SECTIONS:
            if not isinstance(value, dict):
                raise ConfigurationError(f"[{key}] must be a table")
            schema = SECTIONS[key]
            section = {}
            for k, v in value.items():
                if k not in schema:
                    raise ConfigurationError(f"unknown key {k!r} in [{key}]; allowed: {sorted(schema)}")
                section[k] = _check(schema[k], v, f"{key}.{k}")
            out[key] = section
        else:
            raise ConfigurationError(
                f"unknown config key {key!r}; allowed: {sorted(TOP_LEVEL) + sorted(SECTIONS)}")
    return out


def merged(base: dict, overrides: dict) -> dict:
    out = copy.deepcopy(base)
    for key, value in overrides.items():
        if isinstance(value, dict):
            out.setdefault(key, {}).update(value)
        else:
            out[key] = value
    return out


def load_config(path=None, overrides: dict | None = None) -> dict:
    """Defaults, then the TOML file, then flag overrides; each layer validated."""
    data = {}
    if path is not None:
        try:
            with open(os.fspath(path), "rb") as fh:
                data = tomllib.load(fh)
        except OSError as exc:
            raise ConfigurationError(f"cannot read config {path}: {exc}") from exc
        except tomllib.TOMLDecodeError as exc:
            raise ConfigurationError(f"malformed config {path}: {exc}") from exc
    config = merged(DEFAULTS, validate(data))
    return merged(config, validate(overrides or {}))


def require(config: dict, section: str, *keys):
    values = []
    for key in keys:
        value = config.get(section, {}).get(key)
        if value is None:
            raise ConfigurationError(f"missing [{section}] {key}")
        values.append(value)
    return values if len(values) > 1 else values[0]
