"""Experiment configuration: one INI file with sections, validated against a schema.

Precedence (lowest to highest): built-in defaults, the config file, the
``KBL_WORKERS`` environment variable (``run.workers`` only), command-line
flags (``--seed``, ``--out``, ``--set section.key=value``).
"""

from __future__ import annotations

import configparser
import io
import math
import os
from dataclasses import dataclass
from typing import Any, Callable, Optional

from .errors import ConfigError


def _floats(text: str) -> tuple:
    text = text.strip()
    if not text:
        return ()
    return tuple(float(x) for x in text.split(","))


def _bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {text!r}")


def _in(*choices):
    def check(v):
        if v not in choices:
            raise ValueError(f"must be one of {choices}")
    return check


def _positive(v):
    if isinstance(v, tuple):
        if any(not x > 0 for x in v):
            raise ValueError("all entries must be > 0")
    elif not v > 0:
        raise ValueError("must be > 0")


def _nonneg(v):
    if not v >= 0:
        raise ValueError("must be >= 0")


def _unit_interval(v):
    if not 0 < v <= 1:
        raise ValueError("must lie in (0, 1]")


def _growth_power(v):
    if not 0 <= v < 2:
        raise ValueError("must lie in [0, 2)")


@dataclass(frozen=True)
class Key:
    default: str
    parse: Callable[[str], Any]
    check: Optional[Callable[[Any], None]] = None
    doc: str = ""


SCHEMA = {
    "model": {
        "zeta": Key("constant", str, _in("constant", "abs_power"), "killing function family"),
        "zeta_param": Key("1.0", float, _nonneg, "constant value or exponent p"),
        "d": Key("1", int, _positive, "spatial dimension"),
        "T": Key("1.0", float, _positive, "time horizon"),
        "m": Key("200", int, _positive, "number of time steps"),
    },
    "run": {
        "n": Key("100000", int, _positive, "particle count"),
        "replicas": Key("20", int, _positive, "independent replicas"),
        "seed": Key("20240601", int, _nonneg, "master seed"),
        "workers": Key("1", int, _positive, "worker threads"),
    },
    "lln": {
        "tolerance": Key("0.02", float, _positive, "max allowed sup |mean mass - a(t)|"),
        "distance_stride": Key("20", int, _positive, "dictionary distance every k-th grid time"),
    },
    "simulate": {
        "drift": Key("0", _floats, None, "constant drift vector (comma separated)"),
        "threshold_rate": Key("1.0", float, _positive, "exponential threshold rate"),
        "kill_times": Key("false", _bool, None, "also write per-particle kill times"),
    },
    "fixed_point": {
        "M": Key("100000", int, _positive, "sample count"),
        "tol": Key("1e-4", float, _positive, "sup-norm stopping tolerance"),
        "max_iter": Key("50", int, _positive, "iteration cap"),
        "damping": Key("1.0", float, _unit_interval, "initial damping"),
        "drift": Key("0", _floats, None, "constant drift vector"),
        "threshold_rate": Key("1.0", float, _positive, "exponential threshold rate"),
    },
    "rate_frontier": {
        "M": Key("20000", int, _positive, "samples per control"),
        "rates": Key("0.25,0.5,1,2,4", _floats, _positive, "threshold rates scanned at zero drift"),
        "drifts": Key("-1,-0.5,0.5,1", _floats, None, "constant drifts scanned at rate 1"),
        "bin_width": Key("0.02", float, _positive, "observable bin width"),
        "tol": Key("1e-6", float, _positive, "fixed-point tolerance"),
    },
    "laplace": {
        "slope": Key("1.0", float, None, "F = clip(slope * mass(T) + offset, lower, upper)"),
        "offset": Key("0.0", float, None, ""),
        "lower": Key("-inf", float, None, ""),
        "upper": Key("inf", float, None, ""),
        "ns": Key("100,500", _floats, _positive, "particle counts"),
        "replicas": Key("200", int, _positive, "replicas per control and per estimate"),
        "rates": Key("1,1.25,1.5,2,3,4", _floats, _positive, "threshold rates scanned"),
        "drifts": Key("0", _floats, None, "constant drifts scanned"),
        "importance": Key("true", _bool, None, "importance-sample the Laplace estimate"),
    },
    "varrep": {
        "T": Key("1.0", float, _positive, "horizon of the single Brownian motion"),
        "nodes": Key("64", int, _positive, "quadrature nodes per axis"),
        "alphas": Key("0.5,1", _floats, None, "cases g(w,x) = alpha x"),
        "constants": Key("0.3", _floats, None, "cases g = c"),
        "random_cases": Key("0", int, _nonneg, "additional random smooth bounded cases"),
        "random_seed": Key("0", int, _nonneg, "seed for the random cases"),
        "tolerance": Key("1e-6", float, _positive, "allowed RHS - LHS deficit"),
        "equality_tolerance": Key("1e-5", float, _positive, "allowed |gap| for exact cases"),
    },
    "output": {
        "dir": Key("kbl-out", str, None, "output directory"),
    },
}


class Config:
    """Parsed and validated configuration; ``cfg[section][key]`` gives typed values."""

    def __init__(self, raw: dict):
        self.raw = raw
        self.values = {}
        for section, keys in SCHEMA.items():
            vals = {}
            for key, spec in keys.items():
                text = raw[section][key]
                try:
                    v = spec.parse(text)
                    if isinstance(v, float) and math.isnan(v):
                        raise ValueError("NaN not allowed")
                    if spec.check is not None:
                        spec.check(v)
                except (ValueError, TypeError) as exc:
                    raise ConfigError(f"[{section}] {key} = {text!r}: {exc}") from None
                vals[key] = v
            self.values[section] = vals

    def __getitem__(self, section):
        return self.values[section]

    def to_ini(self) -> str:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        for section in SCHEMA:
            cp[section] = dict(self.raw[section])
        buf = io.StringIO()
        cp.write(buf)
        return buf.getvalue()


def _defaults() -> dict:
    return {s: {k: spec.default for k, spec in keys.items()} for s, keys in SCHEMA.items()}


def _merge(raw: dict, section: str, key: str, value: str, origin: str):
    if section not in SCHEMA:
        raise ConfigError(f"{origin}: unknown section [{section}]")
    if key not in SCHEMA[section]:
        raise ConfigError(f"{origin}: unknown key {key!r} in [{section}]")
    raw[section][key] = str(value).strip()


def load_config(path: Optional[str] = None, overrides: Optional[list] = None,
                environ: Optional[dict] = None) -> Config:
    """Build a :class:`Config` from defaults, an optional INI file, environment and overrides.

    ``overrides`` is a list of ``"section.key=value"`` strings.
    """
    raw = _defaults()
    if path is not None:
        cp = configparser.ConfigParser(interpolation=None)
        cp.optionxform = str
        try:
            with open(path, encoding="utf-8") as fh:
                cp.read_file(fh)
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        except configparser.Error as exc:
            raise ConfigError(f"malformed config {path}: {exc}") from None
        for section in cp.sections():
            for key, value in cp.items(section):
                _merge(raw, section, key, value, path)
    env = os.environ if environ is None else environ
    if env.get("KBL_WORKERS"):
        _merge(raw, "run", "workers", env["KBL_WORKERS"], "KBL_WORKERS")
    for item in overrides or []:
        if "=" not in item or "." not in item.split("=", 1)[0]:
            raise ConfigError(f"override must look like section.key=value, got {item!r}")
        lhs, value = item.split("=", 1)
        section, key = lhs.strip().split(".", 1)
        _merge(raw, section, key, value, "--set")
    return Config(raw)
