"""Run configurations, CSV output and run manifests.

Config files are line oriented::

    # comment
    command = solve
    potential.family = vdw
    solve.mu = 150
    solve.extent = 40

Keys without a dot live in the top-level section. Lists are comma
separated. Every line is checked against a schema, and errors name the line.
"""

from __future__ import annotations

import csv
import hashlib
import math
import os
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError

COMMANDS = ("criticality", "solve", "sweep", "fig1", "classical", "vortex", "diagnose")

# (type, required) per key; type is one of str, int, float, bool, floats, strs
SCHEMA: dict[str, dict[str, tuple[str, bool]]] = {
    "": {"command": ("str", True), "output": ("str", False), "seed": ("int", False)},
    "potential": {
        "family": ("str", True),
        "dim": ("int", False),
        "c": ("float", False),
        "R0": ("float", False),
        "sigma": ("float", False),
        "A": ("float", False),
        "strength": ("float", False),
        "contact": ("float", False),
        "epsilon": ("float", False),
        "r": ("float", False),
        "s": ("float", False),
        "kappa": ("float", False),
        "data": ("str", False),
    },
    "criticality": {"n": ("int", False), "kmax": ("float", False), "scan": ("bool", False)},
    "solve": {
        "mu": ("float", False),
        "lam": ("float", False),
        "extent": ("floats", True),
        "h": ("float", True),
        "bc": ("str", False),
        "seeds": ("str", False),
        "seed_file": ("str", False),
        "multistart": ("int", False),
        "max_iters": ("int", False),
        "grad_tol": ("float", False),
        "allow_indeterminate": ("bool", False),
    },
    "sweep": {
        "mu": ("floats", True),
        "L": ("floats", True),
        "bc": ("strs", False),
        "h": ("float", False),
        "refine": ("bool", False),
        "multistart": ("int", False),
    },
    "fig1": {"mu": ("floats", False), "extent": ("float", False), "h": ("float", False)},
    "classical": {
        "mu": ("float", False),
        "L": ("floats", True),
        "h": ("float", False),
        "bc": ("str", False),
    },
    "vortex": {"mu": ("float", True), "L": ("float", True), "cells": ("int", False)},
    "diagnose": {
        "snapshot": ("str", True),
        "R": ("float", False),
        "mu": ("float", False),
        "radius": ("float", False),
    },
}

# potential block is optional where a built-in recipe supplies it
_POTENTIAL_OPTIONAL = {"fig1", "diagnose"}


@dataclass
class RunConfig:
    command: str
    potential: dict = field(default_factory=dict)
    params: dict = field(default_factory=dict)
    output: str | None = None
    seed: int = 0

    def serialize(self) -> str:
        lines = [f"command = {self.command}"]
        if self.output is not None:
            lines.append(f"output = {self.output}")
        lines.append(f"seed = {self.seed}")
        for k in sorted(self.potential):
            lines.append(f"potential.{k} = {_format(self.potential[k])}")
        for k in sorted(self.params):
            lines.append(f"{self.command}.{k} = {_format(self.params[k])}")
        return "\n".join(lines) + "\n"

    def digest(self) -> str:
        return hashlib.sha256(self.serialize().encode()).hexdigest()


def _format(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return repr(v)
    if isinstance(v, (list, tuple)):
        return ", ".join(_format(x) for x in v)
    return str(v)


def _convert(kind: str, raw: str, lineno: int, key: str):
    def fail():
        raise ConfigError(f"line {lineno}: {key} expects {kind}, got {raw!r}")

    try:
        if kind == "str":
            if not raw:
                fail()
            return raw
        if kind == "int":
            return int(raw)
        if kind == "float":
            v = float(raw)
            if math.isnan(v):
                fail()
            return v
        if kind == "bool":
            low = raw.lower()
            if low in ("true", "yes", "1"):
                return True
            if low in ("false", "no", "0"):
                return False
            fail()
        if kind == "floats":
            return [float(x) for x in raw.split(",")]
        if kind == "strs":
            items = [x.strip() for x in raw.split(",")]
            if not all(items):
                fail()
            return items
    except ValueError:
        fail()
    raise AssertionError(kind)


def parse_config(text: str) -> RunConfig:
    """Parse config text; the first problem found raises :class:`ConfigError`."""
    seen: dict[str, int] = {}
    values: dict[str, dict] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        stripped = line.split("#", 1)[0].strip()
        if not stripped:
            continue
        if "=" not in stripped:
            raise ConfigError(f"line {lineno}: expected 'section.key = value'")
        key, raw = (part.strip() for part in stripped.split("=", 1))
        section, _, name = key.rpartition(".")
        if section not in SCHEMA or name not in SCHEMA[section]:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        if key in seen:
            raise ConfigError(f"line {lineno}: duplicate key {key!r} (first set on line {seen[key]})")
        seen[key] = lineno
        values.setdefault(section, {})[name] = _convert(SCHEMA[section][name][0], raw, lineno, key)
    top = values.get("", {})
    if "command" not in top:
        raise ConfigError("missing required key 'command'")
    command = top["command"]
    if command not in COMMANDS:
        raise ConfigError(f"line {seen['command']}: unknown command {command!r}")
    for section in values:
        if section not in ("", "potential", command):
            first = min(v for k, v in seen.items() if k.startswith(section + "."))
            raise ConfigError(f"line {first}: section {section!r} does not apply to command {command!r}")
    pot = values.get("potential", {})
    if command not in _POTENTIAL_OPTIONAL or pot:
        if "family" not in pot:
            raise ConfigError("missing required key 'potential.family'")
    params = values.get(command, {})
    for name, (_, required) in SCHEMA[command].items():
        if required and name not in params:
            raise ConfigError(f"missing required key '{command}.{name}'")
    if command == "solve" and ("mu" in params) == ("lam" in params):
        raise ConfigError("solve needs exactly one of 'solve.mu' or 'solve.lam'")
    return RunConfig(command, pot, params, top.get("output"), top.get("seed", 0))


def load_config(path) -> RunConfig:
    return parse_config(Path(path).read_text())


def build_potential(block: dict):
    """Construct the potential described by a config block."""
    import numpy as np

    from .potential import make_potential

    block = dict(block)
    family = block.pop("family")
    kw = {k: block.pop(k) for k in ("dim", "contact", "epsilon", "r", "s", "kappa") if k in block}
    data = None
    if "data" in block:
        arr = np.loadtxt(block.pop("data"), ndmin=2)
        data = (arr[:, 0], arr[:, 1])
    return make_potential(family, block, data=data, **kw)


# --- CSV ------------------------------------------------------------------------

def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        return format(v, ".17g")
    if hasattr(v, "item"):
        return _cell(v.item())
    return str(v)


def emit_csv(path, records, schema) -> Path:
    """Header row then one row per record; floats at 17 significant digits."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(schema)
        for rec in records:
            row = [rec.get(k) for k in schema] if isinstance(rec, dict) else list(rec)
            if len(row) != len(schema):
                raise ValueError("record does not match the schema")
            w.writerow([_cell(v) for v in row])
    return path


def read_csv(path) -> list[dict[str, str]]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- manifest -------------------------------------------------------------------

def output_dir(default) -> Path:
    out = Path(os.environ.get("GPSOLID_OUT") or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def write_manifest(out: Path, cfg: RunConfig, version: str, wall_time: float, cells: dict, files) -> Path:
    """``key=value`` lines; ``wall_time`` and ``timestamp`` are the only volatile entries."""
    import datetime

    lines = [
        f"config_hash={cfg.digest()}",
        f"version={version}",
        f"command={cfg.command}",
        f"wall_time={wall_time:.3f}",
        f"timestamp={datetime.datetime.now(datetime.timezone.utc).isoformat()}",
    ]
    for name in sorted(cells):
        lines.append(f"cell.{name}={'converged' if cells[name] else 'not-converged'}")
    for f in sorted(Path(x).name for x in files):
        lines.append(f"file={f}")
    path = out / "manifest.txt"
    path.write_text("\n".join(lines) + "\n")
    return path
