"""Sectioned key-value configuration and its canonical digest.

A config file looks like::

    [plan]
    d = 1
    N = 200
    replicas = 10000
    targets = 20:0.5, 20:1
    normalized = true

    [pde]
    d = 3
    r = 1
    t_final = 64

Values are parsed against the schemas below; unknown keys and malformed
values raise :class:`ConfigError` naming the section, key and line.
"""
from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass

from .harness import ExperimentPlan
from .pde import PdeConfig

__all__ = ["ConfigError", "RunConfig", "load", "loads", "dumps", "digest", "plan_from", "pde_from"]


class ConfigError(ValueError):
    pass


def _bool(s):
    v = s.strip().lower()
    if v in ("1", "true", "yes", "on"):
        return True
    if v in ("0", "false", "no", "off"):
        return False
    raise ValueError(f"not a boolean: {s!r}")


def _int(s):
    s = s.strip().replace("_", "")
    return int(float(s)) if "e" in s.lower() else int(s)


def _floats(s):
    return tuple(float(x) for x in s.replace(",", " ").split()) if s.strip() else ()


def _targets(s):
    out = []
    for item in s.split(","):
        item = item.strip()
        if not item:
            continue
        t, _, r = item.partition(":")
        if not r:
            raise ValueError(f"target {item!r} is not of the form t:r")
        out.append((float(t), float(r)))
    return tuple(out)


def _opt_float(s):
    return None if s.strip().lower() in ("", "none", "auto") else float(s)


def _opt_int(s):
    return None if s.strip().lower() in ("", "none", "auto") else _int(s)


PLAN_SCHEMA = {
    "d": _int,
    "n": _int,
    "replicas": _int,
    "seed": _int,
    "mode": str.strip,
    "targets": _targets,
    "normalized": _bool,
    "confidence": float,
    "epsilon": float,
    "start_point": _floats,
    "mass": float,
    "method": str.strip,
    "population_cap": _int,
}
PLAN_REQUIRED = ("d", "n", "replicas", "targets")

PDE_SCHEMA = {
    "d": _int,
    "r": float,
    "t_final": float,
    "rmax": _opt_float,
    "spacing": float,
    "grid_points": _opt_int,
    "t0": _opt_float,
    "theta": _opt_float,
    "step_fraction": float,
    "output_times": _floats,
    "tolerance": float,
    "tail_budget": float,
    "uniform": _bool,
    "kind": str.strip,
    "levels": _int,
    "dump_profiles": _bool,
}
PDE_REQUIRED = ("d", "r", "t_final")
PDE_KINDS = ("solution", "kappa", "a2", "d1_limit")

SCHEMAS = {"plan": (PLAN_SCHEMA, PLAN_REQUIRED), "pde": (PDE_SCHEMA, PDE_REQUIRED)}


@dataclass
class RunConfig:
    sections: dict

    def section(self, name: str) -> dict:
        return self.sections.get(name, {})

    @property
    def seed(self):
        return self.section("plan").get("seed")


def _line_of(text: str, section: str, key: str) -> int | None:
    current = None
    for i, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("[") and line.endswith("]"):
            current = line[1:-1].strip().lower()
        elif current == section and "=" in line and line.split("=", 1)[0].strip().lower() == key:
            return i
    return None


def loads(text: str, source: str = "<config>") -> RunConfig:
    cp = configparser.ConfigParser(inline_comment_prefixes=("#", ";"), interpolation=None)
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    sections = {}
    for name in cp.sections():
        key = name.strip().lower()
        if key not in SCHEMAS:
            raise ConfigError(f"{source}: unknown section [{name}] (expected one of {sorted(SCHEMAS)})")
        schema, required = SCHEMAS[key]
        values = {}
        for field_, raw in cp.items(name):
            if field_ not in schema:
                line = _line_of(text, key, field_)
                raise ConfigError(f"{source}:{line}: [{key}] unknown field {field_!r}")
            try:
                values[field_] = schema[field_](raw)
            except ValueError as exc:
                line = _line_of(text, key, field_)
                raise ConfigError(f"{source}:{line}: [{key}] field {field_!r}: {exc}") from None
        missing = [f for f in required if f not in values]
        if missing:
            raise ConfigError(f"{source}: [{key}] missing required field {missing[0]!r}")
        sections[key] = values
    if not sections:
        raise ConfigError(f"{source}: no [plan] or [pde] section")
    return RunConfig(sections)


def load(path) -> RunConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    return loads(text, str(path))


def _fmt(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if v is None:
        return "auto"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, tuple):
        if v and isinstance(v[0], tuple):
            return ", ".join(f"{t!r}:{r!r}" for t, r in v)
        return ", ".join(repr(float(x)) for x in v)
    return str(v)


def dumps(cfg: RunConfig) -> str:
    """Canonical text form; re-parses to the same values."""
    lines = []
    for name in sorted(cfg.sections):
        lines.append(f"[{name}]")
        for key in sorted(cfg.sections[name]):
            lines.append(f"{key} = {_fmt(cfg.sections[name][key])}")
        lines.append("")
    return "\n".join(lines)


def _jsonable(v):
    if isinstance(v, tuple):
        return [_jsonable(x) for x in v]
    return v


def digest(cfg: RunConfig, exclude=("seed",)) -> str:
    """sha256 of the canonical form with the seed left out, first 16 hex digits.

    Runs that differ only in their seed share a digest so they can be pooled.
    """
    data = {
        s: {k: _jsonable(v) for k, v in sorted(vals.items()) if k not in exclude}
        for s, vals in sorted(cfg.sections.items())
    }
    blob = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def plan_from(cfg: RunConfig, seed: int | None = None, **overrides) -> ExperimentPlan:
    p = dict(cfg.section("plan"))
    if not p:
        raise ConfigError("no [plan] section")
    if seed is None:
        seed = p.get("seed")
    if seed is None:
        raise ConfigError("missing required field 'seed' (give --seed or [plan] seed)")
    p.pop("seed", None)
    kw = {("N" if k == "n" else k): v for k, v in p.items()}
    if "start_point" in kw and not kw["start_point"]:
        kw.pop("start_point")
    kw.update(overrides)
    try:
        return ExperimentPlan(seed=seed, **kw)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[plan] {exc}") from None


def pde_from(cfg: RunConfig, tolerance: float | None = None) -> tuple[PdeConfig, dict]:
    p = dict(cfg.section("pde"))
    if not p:
        raise ConfigError("no [pde] section")
    extras = {k: p.pop(k) for k in ("kind", "levels", "dump_profiles") if k in p}
    kind = extras.setdefault("kind", "solution")
    if kind not in PDE_KINDS:
        raise ConfigError(f"[pde] field 'kind': must be one of {PDE_KINDS}, got {kind!r}")
    if tolerance is not None:
        p["tolerance"] = tolerance
    try:
        return PdeConfig(**p), extras
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"[pde] {exc}") from None
