"""Scenario configuration: INI-style ``key = value`` files with section headers.

Every key has a type and a default, except the few marked required for a
scenario kind.  Unknown sections or keys are rejected with their dotted path
(``section.key``) before anything runs.
"""

from __future__ import annotations

import configparser
import math
import os
from dataclasses import dataclass, field

from .errors import ConfigError

SCENARIOS = ("schrodinger", "trajectories", "ensemble", "ck-oracle", "kostin", "deterministic-limit")
REQUIRED = object()


def _floats(text: str) -> tuple:
    return tuple(float(x) for x in text.replace(",", " ").split())


def _bool(text: str) -> bool:
    low = text.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _auto_float(text: str):
    return None if text.strip().lower() == "auto" else float(text)


def _choice(*options):
    def parse(text):
        text = text.strip()
        if text not in options:
            raise ValueError(f"expected one of {', '.join(options)}, got {text!r}")
        return text
    return parse


# section -> key -> (parser, default)
SCHEMA = {
    "run": {
        "scenario": (_choice(*SCENARIOS), None),
        "dt": (float, REQUIRED),
        "n_steps": (int, REQUIRED),
        "snapshot_every": (int, 1),
    },
    "grid": {
        "q_min": (float, -12.0),
        "q_max": (float, 12.0),
        "n_points": (int, 1024),
    },
    "constants": {
        "hbar": (float, 1.0),
        "mass": (float, 1.0),
    },
    "potential": {
        "kind": (_choice("free", "harmonic"), "harmonic"),
        "omega": (float, 1.0),
    },
    "initial": {
        "kind": (_choice("coherent", "gaussian"), "coherent"),
        "q0": (float, 0.0),
        "p0": (float, 0.0),
        "center": (float, 0.0),
        "width": (float, 1.0),
        "momentum": (float, 0.0),
    },
    "noise": {
        "k_theta": (float, 1.0),
        "d_pp": (float, 0.0),
        "seed": (int, 0),
    },
    "ensemble": {
        "size": (int, 2000),
        "bandwidth": (_auto_float, None),
        "quantum_force": (_bool, True),
    },
    "ck": {
        "p_points": (int, 256),
        "p_range": (_auto_float, None),
    },
    "kostin": {
        "beta": (float, 0.0),
        "forcing": (_choice("zero", "sinusoidal", "seeded_kicks"), "zero"),
        "amplitude": (float, 0.0),
        "frequency": (float, 1.0),
        "phase": (float, 0.0),
        "kick_variance": (float, 0.0),
        "kick_interval": (float, 1.0),
    },
    "limit": {
        "case": (_choice("free", "harmonic"), "harmonic"),
        "thetas": (_floats, (0.04, 0.02, 0.01, 0.005, 0.0025, 0.0)),
    },
}

# run.dt and run.n_steps are not needed when the limit check picks its own steps
NOT_REQUIRED = {"deterministic-limit": {"run.dt", "run.n_steps"}}


@dataclass
class ScenarioConfig:
    scenario: str
    values: dict = field(default_factory=dict)
    explicit: set = field(default_factory=set)

    def __getitem__(self, path: str):
        section, key = path.split(".", 1)
        return self.values[section][key]

    def section(self, name: str) -> dict:
        return dict(self.values[name])

    def echo(self) -> dict:
        """Plain nested dict for the manifest."""
        return {"scenario": self.scenario,
                **{s: {k: (list(v) if isinstance(v, tuple) else v) for k, v in kv.items()}
                   for s, kv in self.values.items()}}


def _parse_value(path: str, parser, text: str):
    try:
        value = parser(text)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None
    for v in (value if isinstance(value, tuple) else (value,)):
        if isinstance(v, float) and not math.isfinite(v):
            raise ConfigError(f"{path}: value must be finite, got {text!r}")
    return value


def parse_overrides(items) -> dict:
    """``["section.key=value", ...]`` to ``{"section.key": "value"}``."""
    out = {}
    for item in items or ():
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        path, text = item.split("=", 1)
        out[path.strip()] = text.strip()
    return out


def load_config(path: str | None, scenario: str | None = None, overrides=None,
                env: dict | None = None) -> ScenarioConfig:
    """Read, override, validate.

    ``overrides`` maps dotted paths to strings (``--set``).  ``QHA_SEED`` in
    ``env`` (default ``os.environ``) replaces ``noise.seed``.
    """
    env = os.environ if env is None else env
    raw: dict[str, dict[str, str]] = {}
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
        cp.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        raw = {s: dict(cp.items(s)) for s in cp.sections()}
    for dotted, text in (overrides or {}).items():
        if "." not in dotted:
            raise ConfigError(f"{dotted}: override keys need the form section.key")
        section, key = dotted.split(".", 1)
        raw.setdefault(section, {})[key] = text
    if env.get("QHA_SEED") not in (None, ""):
        raw.setdefault("noise", {})["seed"] = env["QHA_SEED"]

    for section, items in raw.items():
        if section not in SCHEMA:
            raise ConfigError(f"{section}: unknown section")
        for key in items:
            if key not in SCHEMA[section]:
                raise ConfigError(f"{section}.{key}: unknown key")

    file_scenario = raw.get("run", {}).get("scenario")
    if scenario is None:
        scenario = file_scenario
    if scenario not in SCENARIOS:
        raise ConfigError(f"run.scenario: expected one of {', '.join(SCENARIOS)}, got {scenario!r}")
    if file_scenario is not None and file_scenario.strip() != scenario:
        raise ConfigError(f"run.scenario: config says {file_scenario.strip()!r} but {scenario!r} was requested")

    values, explicit = {}, set()
    skip = NOT_REQUIRED.get(scenario, set())
    for section, keys in SCHEMA.items():
        values[section] = {}
        for key, (parser, default) in keys.items():
            dotted = f"{section}.{key}"
            if key in raw.get(section, {}):
                values[section][key] = _parse_value(dotted, parser, raw[section][key])
                explicit.add(dotted)
            elif default is REQUIRED:
                if dotted in skip:
                    values[section][key] = None
                else:
                    raise ConfigError(f"{dotted}: required key missing")
            else:
                values[section][key] = default
    values["run"]["scenario"] = scenario
    cfg = ScenarioConfig(scenario, values, explicit)
    _check_ranges(cfg)
    return cfg


def _check_ranges(cfg: ScenarioConfig) -> None:
    def need(path, ok, what):
        if not ok:
            raise ConfigError(f"{path}: {what}, got {cfg[path]!r}")

    if cfg["run.dt"] is not None:
        need("run.dt", cfg["run.dt"] > 0, "must be positive")
    if cfg["run.n_steps"] is not None:
        need("run.n_steps", cfg["run.n_steps"] >= 1, "must be at least 1")
    need("run.snapshot_every", cfg["run.snapshot_every"] >= 1, "must be at least 1")
    need("grid.n_points", cfg["grid.n_points"] >= 16, "must be at least 16")
    need("grid.q_max", cfg["grid.q_max"] > cfg["grid.q_min"], "must exceed grid.q_min")
    need("constants.hbar", cfg["constants.hbar"] > 0, "must be positive")
    need("constants.mass", cfg["constants.mass"] > 0, "must be positive")
    need("potential.omega", cfg["potential.omega"] > 0, "must be positive")
    need("initial.width", cfg["initial.width"] > 0, "must be positive")
    need("noise.k_theta", cfg["noise.k_theta"] >= 0, "must be nonnegative")
    need("noise.d_pp", cfg["noise.d_pp"] >= 0, "must be nonnegative")
    need("ensemble.size", cfg["ensemble.size"] >= 1, "must be at least 1")
    bw = cfg["ensemble.bandwidth"]
    need("ensemble.bandwidth", bw is None or bw > 0, "must be positive or auto")
    need("ck.p_points", cfg["ck.p_points"] >= 16, "must be at least 16")
    pr = cfg["ck.p_range"]
    need("ck.p_range", pr is None or pr > 0, "must be positive or auto")
    need("kostin.beta", cfg["kostin.beta"] >= 0, "must be nonnegative")
    need("kostin.kick_interval", cfg["kostin.kick_interval"] > 0, "must be positive")
    need("kostin.kick_variance", cfg["kostin.kick_variance"] >= 0, "must be nonnegative")
    harmonic = cfg["potential.kind"] == "harmonic"
    if cfg["initial.kind"] == "coherent" and not harmonic and cfg.scenario != "deterministic-limit":
        raise ConfigError("initial.kind: a coherent state needs potential.kind = harmonic")
    if cfg.scenario == "kostin" and not harmonic:
        raise ConfigError("potential.kind: kostin needs a harmonic potential")
    if cfg.scenario == "deterministic-limit":
        need("noise.d_pp", cfg["noise.d_pp"] > 0, "must be positive for deterministic-limit")
    th = cfg["limit.thetas"]
    need("limit.thetas", len(th) >= 2 and all(b < a for a, b in zip(th, th[1:])) and th[-1] >= 0,
         "must be strictly decreasing and nonnegative")
