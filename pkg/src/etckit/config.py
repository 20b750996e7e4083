"""Run configuration: a flat INI file with one section per concern, plus
repeatable key=value overrides from the command line. Unknown keys are
rejected with the nearest known key suggested."""

from __future__ import annotations

import configparser
import difflib
import io
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError

# section -> key -> (type tag, description)
SCHEMA: dict[str, dict[str, str]] = {
    "run": {
        "seed": "int",
    },
    "plant": {
        "a": "matrix",
        "b": "matrix",
        "k": "matrix",
        "q": "matrix",
        "theta": "float",
    },
    "trigger": {
        "policy": "str",  # derivative | barrier | function | dynamic
        "sigma": "float",
        "c_beta": "float",
        "r": "positive_float",
        "theta": "positive_float",
        "c_iota": "positive_float",
        "eta0": "float",
    },
    "sim": {
        "x0": "vector",
        "horizon": "positive_float",
        "step_h": "positive_float",
        "event_tol": "positive_float",
        "sample_stride": "int",
        "max_events": "int",
    },
    "miet": {
        "n_grid": "int",
    },
    "benchmark": {
        "n_vehicles": "int",
        "k_p": "float",
        "k_d": "float",
        "t_v": "positive_float",
        "t_d": "positive_float",
        "r": "positive_float",
        "c_beta": "float",
        "sigma_factor": "float",
        "rho_a": "positive_float",
        "rho_z": "positive_float",
        "horizon": "positive_float",
        "n_trials": "int",
        "ic_scale": "positive_float",
        "theta": "positive_float",
        "c_iota_strong": "positive_float",
        "c_iota_weak": "positive_float",
        "eta0_scale": "float",
        "step_h": "positive_float",
        "event_tol": "positive_float",
        "record_stride": "int",
        "traj_trials": "int",
    },
    "consensus": {
        "edges_file": "str",
        "rho": "positive_float",
        "amps": "vector",
        "rate": "positive_float",
        "horizon": "positive_float",
        "step_h": "positive_float",
        "init": "str",  # local | average
        "c_w_dot": "float",
    },
}

POLICIES = ("derivative", "barrier", "function", "dynamic")


def _parse_value(section: str, key: str, raw: str):
    kind = SCHEMA[section][key]
    try:
        if kind == "int":
            return int(raw)
        if kind == "float":
            return float(raw)
        if kind == "positive_float":
            val = float(raw)
            if val <= 0:
                raise ConfigError(
                    f"[{section}] {key} must be positive, got {raw!r}"
                )
            return val
        if kind == "vector":
            return np.array([float(v) for v in raw.replace(",", " ").split()])
        if kind == "matrix":
            rows = [r for r in raw.split(";") if r.strip()]
            return np.array([[float(v) for v in r.split()] for r in rows])
        if kind == "str":
            return raw.strip()
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(
            f"[{section}] {key} expects {kind}, got {raw!r} ({exc})"
        ) from None
    raise ConfigError(f"unknown schema kind {kind} for [{section}] {key}")


def _suggest(section: str, key: str) -> str:
    known = [f"{s}.{k}" for s, keys in SCHEMA.items() for k in keys]
    close = difflib.get_close_matches(f"{section}.{key}", known, n=1)
    hint = f"; did you mean {close[0]!r}?" if close else ""
    return f"unknown key [{section}] {key}{hint}"


@dataclass
class RunConfig:
    """Validated flat configuration: values[section][key]."""

    values: dict[str, dict[str, object]] = field(default_factory=dict)
    source_text: str = ""

    def get(self, section: str, key: str, default=None):
        return self.values.get(section, {}).get(key, default)

    def require(self, section: str, key: str):
        val = self.get(section, key)
        if val is None:
            raise ConfigError(f"missing required key [{section}] {key}")
        return val

    def section(self, name: str) -> dict:
        return dict(self.values.get(name, {}))

    def effective_ini(self) -> str:
        cp = configparser.ConfigParser()
        for sec in sorted(self.values):
            cp[sec] = {}
            for key in sorted(self.values[sec]):
                val = self.values[sec][key]
                if isinstance(val, np.ndarray):
                    if val.ndim == 2:
                        text = " ; ".join(
                            " ".join(format(x, ".17g") for x in row) for row in val
                        )
                    else:
                        text = " ".join(format(x, ".17g") for x in val)
                elif isinstance(val, float):
                    text = format(val, ".17g")
                else:
                    text = str(val)
                cp[sec][key] = text
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def parse_config(path: str | Path | None, overrides: list[str] = ()) -> RunConfig:
    """Load the INI file (if given) and apply `section.key=value` overrides.

    Overrides always win over file values. Every key is validated against
    the schema; unknown keys fail with a nearest-key suggestion.
    """
    cfg = RunConfig()
    if path is not None:
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file not found: {path}")
        cp = configparser.ConfigParser()
        try:
            cp.read(path)
        except configparser.Error as exc:
            raise ConfigError(f"config file does not parse: {exc}") from None
        for section in cp.sections():
            sec_l = section.lower()
            if sec_l not in SCHEMA:
                raise ConfigError(_suggest(sec_l, next(iter(cp[section]), "")))
            for key, raw in cp[section].items():
                if key not in SCHEMA[sec_l]:
                    raise ConfigError(_suggest(sec_l, key))
                cfg.values.setdefault(sec_l, {})[key] = _parse_value(sec_l, key, raw)
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override {item!r} is not of the form section.key=value")
        dotted, raw = item.split("=", 1)
        if "." not in dotted:
            raise ConfigError(f"override {item!r} needs a section.key target")
        section, key = dotted.strip().lower().split(".", 1)
        if section not in SCHEMA or key not in SCHEMA[section]:
            raise ConfigError(_suggest(section, key))
        cfg.values.setdefault(section, {})[key] = _parse_value(section, key, raw)
    policy = cfg.get("trigger", "policy")
    if policy is not None and policy not in POLICIES:
        raise ConfigError(
            f"[trigger] policy must be one of {POLICIES}, got {policy!r}"
        )
    init = cfg.get("consensus", "init")
    if init is not None and init not in ("local", "average"):
        raise ConfigError("[consensus] init must be 'local' or 'average'")
    return cfg
