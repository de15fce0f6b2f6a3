"""Scenario configuration: loading, defaults and validation.

A config is a TOML file (JSON is accepted as a fallback) such as::

    mode = "fixed-power"
    seed = 7

    [scenario]
    powers = [1.0, 1.0]
    noise = 1.0

    [fading]
    type = "uniform"
    low = 0.5
    high = 1.5

    [utility]
    type = "log"
    weights = [1.0, 1.0]
    shift = 0.01

Every missing optional entry is filled from :data:`DEFAULTS`.
"""

from __future__ import annotations

import copy
import hashlib
import json
import sys
from pathlib import Path

import numpy as np

from . import fading as fading_mod
from . import utility as utility_mod
from .allocation import PowerBudget
from .capacity import MAX_USERS, Scenario
from .optimize import RULES

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

MODES = ("fixed-power", "power-control")

DEFAULTS = {
    "mode": "fixed-power",
    "seed": 0,
    "scenario": {"noise": 1.0},
    "solver": {
        "gap_tol": 1e-6,
        "max_iter": 100_000,
        "rule": "limited-max",
        "multiplier_rtol": 1e-7,
    },
    "samples": {"n": 100_000, "states": []},
    "boundary": {},
    "bounds": {
        "epsilon": [round(0.05 * k, 2) for k in range(1, 21)],
        "scales": [1.0, 0.25, 0.0625],
    },
    "output": {"dir": "out"},
}

SECTIONS = {
    "scenario": {"num_users", "powers", "average_power", "noise"},
    "fading": None,
    "utility": None,
    "solver": set(DEFAULTS["solver"]),
    "samples": {"n", "states"},
    "boundary": {"mu"},
    "bounds": {"epsilon", "scales"},
    "output": {"dir"},
}


class ConfigError(ValueError):
    """Invalid config; ``field`` names the offending entry."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


def parse(text: str, name: str = "<config>") -> dict:
    """Parse TOML, falling back to JSON when the text looks like a JSON object."""
    if text.lstrip().startswith("{"):
        try:
            return json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(name, f"invalid JSON at line {exc.lineno}, column {exc.colno}: {exc.msg}")
    try:
        return tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(name, f"invalid TOML: {exc}")


def load(path) -> dict:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read config ({exc.strerror})")
    return resolve(parse(text, str(path)))


def _merge(base: dict, extra: dict) -> dict:
    out = copy.deepcopy(base)
    for key, val in extra.items():
        if isinstance(val, dict) and isinstance(out.get(key), dict):
            out[key] = _merge(out[key], val)
        else:
            out[key] = copy.deepcopy(val)
    return out


def _vector(value, field: str, m: int, positive: bool = True) -> list:
    if isinstance(value, (int, float)) and not isinstance(value, bool):
        value = [value] * m
    try:
        arr = np.asarray(value, dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(field, "must be a number or a list of numbers")
    if arr.shape != (m,):
        raise ConfigError(field, f"expected {m} entries, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)) or np.any(arr <= 0 if positive else arr < 0):
        raise ConfigError(field, "entries must be finite and " + ("positive" if positive else "nonnegative"))
    return arr.tolist()


def _number(cfg: dict, section: str, key: str, kind=float, low=None, strict: bool = False):
    field = f"{section}.{key}"
    val = cfg[section][key]
    if isinstance(val, bool) or not isinstance(val, (int, float)) or (kind is int and not isinstance(val, int)):
        raise ConfigError(field, f"must be {'an integer' if kind is int else 'a number'}")
    if low is not None and (val <= low if strict else val < low):
        raise ConfigError(field, f"must be {'>' if strict else '>='} {low}")
    return kind(val)


def resolve(raw: dict) -> dict:
    """Validate ``raw`` and return the complete config with defaults filled in."""
    if not isinstance(raw, dict):
        raise ConfigError("<config>", "top level must be a table")
    for key, val in raw.items():
        if key in ("mode", "seed"):
            continue
        if key not in SECTIONS:
            raise ConfigError(key, "unknown entry")
        if not isinstance(val, dict):
            raise ConfigError(key, "must be a table")
        allowed = SECTIONS[key]
        if allowed is not None:
            for sub in val:
                if sub not in allowed:
                    raise ConfigError(f"{key}.{sub}", "unknown entry")
    for key in ("fading", "utility"):
        if key not in raw:
            raise ConfigError(key, "missing section")
    cfg = _merge(DEFAULTS, raw)

    if cfg["mode"] not in MODES:
        raise ConfigError("mode", f"must be one of {', '.join(MODES)}")
    seed = cfg["seed"]
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ConfigError("seed", "must be an integer in [0, 2**64)")

    sc = cfg["scenario"]
    key = "powers" if cfg["mode"] == "fixed-power" else "average_power"
    if key not in sc:
        raise ConfigError(f"scenario.{key}", f"required in {cfg['mode']} mode")
    m = sc.get("num_users")
    if m is None:
        m = len(sc[key]) if isinstance(sc[key], list) else None
    if isinstance(m, bool) or not isinstance(m, int) or not 1 <= m <= MAX_USERS:
        raise ConfigError("scenario.num_users", f"must be an integer in [1, {MAX_USERS}]")
    sc["num_users"] = m
    for k in ("powers", "average_power"):
        if k in sc:
            sc[k] = _vector(sc[k], f"scenario.{k}", m)
    sc["noise"] = _number(cfg, "scenario", "noise", low=0, strict=True)

    if not isinstance(cfg["utility"].get("type"), str):
        raise ConfigError("utility.type", "missing or not a string")
    if "weights" in cfg["utility"]:
        cfg["utility"]["weights"] = _vector(cfg["utility"]["weights"], "utility.weights", m)
    for section in ("fading", "utility"):
        try:
            model = build_fading(cfg) if section == "fading" else build_utility(cfg)
        except KeyError as exc:
            raise ConfigError(exc.args[0], "missing or invalid")
        except (TypeError, ValueError) as exc:
            raise ConfigError(section, str(exc))
        if section == "fading" and cfg["mode"] == "power-control":
            if not (model.is_independent and model.is_continuous):
                raise ConfigError("fading", "power-control mode needs independent continuous fading")

    _number(cfg, "solver", "gap_tol", low=0, strict=True)
    _number(cfg, "solver", "max_iter", kind=int, low=1)
    _number(cfg, "solver", "multiplier_rtol", low=0, strict=True)
    if cfg["solver"]["rule"] not in RULES:
        raise ConfigError("solver.rule", f"must be one of {', '.join(RULES)}")

    _number(cfg, "samples", "n", kind=int, low=100)
    states = cfg["samples"]["states"]
    if not isinstance(states, list):
        raise ConfigError("samples.states", "must be a list of gain vectors")
    cfg["samples"]["states"] = [_vector(h, f"samples.states[{k}]", m, positive=False)
                                for k, h in enumerate(states)]

    mus = cfg["boundary"].get("mu", [[1.0] * m])
    if not isinstance(mus, list) or not mus:
        raise ConfigError("boundary.mu", "must be a nonempty list of weight vectors")
    if not isinstance(mus[0], list):
        mus = [mus]
    cfg["boundary"]["mu"] = [_vector(mu, f"boundary.mu[{k}]", m) for k, mu in enumerate(mus)]

    for k in ("epsilon", "scales"):
        vals = cfg["bounds"][k]
        if not isinstance(vals, list) or not vals:
            raise ConfigError(f"bounds.{k}", "must be a nonempty list")
        arr = _vector(vals, f"bounds.{k}", len(vals))
        if k == "epsilon" and max(arr) > 1:
            raise ConfigError("bounds.epsilon", "entries must lie in (0, 1]")
        cfg["bounds"][k] = sorted(arr) if k == "epsilon" else arr

    if not isinstance(cfg["output"]["dir"], str):
        raise ConfigError("output.dir", "must be a string")
    return cfg


def build_scenario(cfg: dict) -> Scenario:
    sc = cfg["scenario"]
    powers = sc.get("powers") or sc.get("average_power")
    return Scenario(np.asarray(powers, dtype=float), sc["noise"])


def build_budget(cfg: dict) -> PowerBudget:
    return PowerBudget(np.asarray(cfg["scenario"]["average_power"], dtype=float))


def build_fading(cfg: dict) -> fading_mod.FadingModel:
    return fading_mod.from_config(cfg["fading"], cfg["scenario"]["num_users"])


def build_utility(cfg: dict) -> utility_mod.Utility:
    return utility_mod.from_config(cfg["utility"], cfg["scenario"]["num_users"])


def config_hash(cfg: dict) -> str:
    """SHA-256 of the canonical JSON form; independent of key order.

    The output directory is left out: it does not affect any result.
    """
    body = {k: v for k, v in cfg.items() if k != "output"}
    text = json.dumps(body, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(text.encode()).hexdigest()
