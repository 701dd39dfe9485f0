"""Run configuration: plain-text key=value files with dotted sections.

Example::

    # canonical singular-mobility run
    m = 1.3333333333333333
    p = 1.5
    n = 3
    grid.r_max = 30
    grid.cells = 512
    grid.stretch = 1.0025
    time.tau_end = 14
    init.D0 = 2.0
    init.D1 = 0.5
    init.shape = blend
    reg.eps = 0.1
    output.cadence = 0.05
    output.path = out/run1

m, p and n are required; everything else has defaults.  Parsed configs
re-serialize canonically (sorted keys), which is what gets hashed into every
output file for provenance.  The environment variable DNFLOW_OUTPUT_DIR, when
set, relocates output.path (directory override only).
"""

from __future__ import annotations

import hashlib
import os
from dataclasses import dataclass, fields
from pathlib import Path


class ConfigError(ValueError):
    """Missing, unknown, or invalid configuration key; carries the key."""

    def __init__(self, message: str, key: str = ""):
        super().__init__(message)
        self.key = key


# dotted config key -> RunConfig attribute
KEY_MAP = {
    "m": "m", "p": "p", "n": "n", "seed": "seed",
    "grid.r_max": "grid_r_max", "grid.cells": "grid_cells",
    "grid.stretch": "grid_stretch",
    "time.tau_end": "time_tau_end", "time.safety": "time_safety",
    "init.D0": "init_D0", "init.D1": "init_D1", "init.shape": "init_shape",
    "init.r0": "init_r0", "init.width": "init_width",
    "init.amplitude": "init_amplitude", "init.mode": "init_mode",
    "reg.eps": "reg_eps", "reg.eps_reg": "reg_eps_reg",
    "solver.drift": "solver_drift", "solver.max_steps": "max_steps",
    "spectral.ell_max": "spectral_ell_max", "spectral.eps": "spectral_eps",
    "output.cadence": "output_cadence", "output.path": "output_path",
    "output.snapshot_every": "output_snapshot_every",
}
REQUIRED_KEYS = ("m", "p", "n")


@dataclass
class RunConfig:
    m: float
    p: float
    n: int
    grid_r_max: float = 30.0
    grid_cells: int = 512
    grid_stretch: float = 1.0025
    time_tau_end: float = 12.0
    time_safety: float = 0.4
    init_D0: float = 2.0
    init_D1: float = 0.5
    init_shape: str = "blend"
    init_r0: float = 1.5
    init_width: float = 0.5
    init_amplitude: float = 0.05
    init_mode: int = 0
    reg_eps: float = 0.1
    reg_eps_reg: float | str = "auto"
    solver_drift: str = "well_balanced"
    max_steps: int = 30_000_000
    spectral_ell_max: int = 4
    spectral_eps: float | str = "auto"
    output_cadence: float = 0.05
    output_path: str = "out"
    output_snapshot_every: int = 10
    seed: int = 0
    strict_sandwich: bool = False
    sandwich_tol: float = 0.05

    def validate(self) -> None:
        if not self.init_D0 >= self.init_D1 > 0.0:
            raise ConfigError(
                f"init.D0 >= init.D1 > 0 required, got {self.init_D0}, "
                f"{self.init_D1}", key="init.D0")
        for key, val in (("time.tau_end", self.time_tau_end),
                         ("time.safety", self.time_safety),
                         ("output.cadence", self.output_cadence),
                         ("grid.r_max", self.grid_r_max)):
            if not val > 0.0:
                raise ConfigError(f"{key} must be positive, got {val}", key=key)
        if self.grid_cells < 16:
            raise ConfigError("grid.cells must be >= 16", key="grid.cells")
        if self.solver_drift not in ("well_balanced", "geometric"):
            raise ConfigError(f"unknown solver.drift '{self.solver_drift}'",
                              key="solver.drift")
        if self.p < 2.0 and self.resolved_eps(self.p) <= 0.0:
            raise ConfigError("reg.eps must be positive when p < 2",
                              key="reg.eps")

    def resolved_eps(self, p: float) -> float:
        return float(self.reg_eps)

    def resolved_eps_reg(self, h_min: float, p: float) -> float:
        if self.reg_eps_reg == "auto":
            return h_min if p < 2.0 else 0.0
        val = float(self.reg_eps_reg)
        if val < 0.0:
            raise ConfigError("reg.eps_reg must be >= 0", key="reg.eps_reg")
        return val

    def resolved_spectral_eps(self, p: float) -> float:
        if self.spectral_eps == "auto":
            return self.reg_eps if p < 2.0 else 0.0
        return float(self.spectral_eps)

    def resolved_output_path(self) -> Path:
        override = os.environ.get("DNFLOW_OUTPUT_DIR")
        path = Path(self.output_path)
        if override:
            return Path(override) / path.name
        return path

    def to_text(self) -> str:
        """Canonical serialization: sorted dotted keys, one per line."""
        attr_to_key = {v: k for k, v in KEY_MAP.items()}
        lines = []
        for f in fields(self):
            key = attr_to_key.get(f.name)
            if key is None:
                continue
            val = getattr(self, f.name)
            lines.append(f"{key} = {val!r}" if isinstance(val, str)
                         else f"{key} = {_fmt(val)}")
        return "\n".join(sorted(lines)) + "\n"

    def config_hash(self) -> str:
        return hashlib.sha256(self.to_text().encode()).hexdigest()[:16]


def _fmt(val) -> str:
    if isinstance(val, float):
        return f"{val:.17g}"
    return str(val)


def _coerce(key: str, raw: str):
    raw = raw.strip()
    if key in ("init.shape", "solver.drift", "output.path"):
        return raw.strip("'\"")
    if key in ("reg.eps_reg", "spectral.eps") and raw == "auto":
        return "auto"
    if key in ("n", "grid.cells", "init.mode", "spectral.ell_max",
               "output.snapshot_every", "seed", "solver.max_steps"):
        try:
            return int(raw)
        except ValueError as exc:
            raise ConfigError(f"key '{key}' expects an integer, got '{raw}'",
                              key=key) from exc
    try:
        return float(raw)
    except ValueError as exc:
        raise ConfigError(f"key '{key}' expects a number, got '{raw}'",
                          key=key) from exc


def parse_config(text: str) -> RunConfig:
    """Parse key = value lines ('#' comments allowed) into a RunConfig."""
    seen: dict[str, object] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got "
                              f"'{line}'", key=line)
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in KEY_MAP:
            raise ConfigError(f"line {lineno}: unknown config key '{key}'",
                              key=key)
        seen[key] = _coerce(key, raw)
    for key in REQUIRED_KEYS:
        if key not in seen:
            raise ConfigError(f"missing required config key '{key}'", key=key)
    kwargs = {KEY_MAP[k]: v for k, v in seen.items()}
    return RunConfig(**kwargs)


def load_config(path: str | Path) -> RunConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}",
                          key=str(path)) from exc
    return parse_config(text)
