"""Run configuration: key=value files, ``EZSDU_`` environment overrides, flags.

Later sources override earlier ones: preset or ``--config`` file, then the
environment, then command-line flags.  Keys are case-sensitive (``R`` and
``r`` are different parameters).
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from importlib import resources
from pathlib import Path

from .errors import ConfigError

ENV_PREFIX = "EZSDU_"
PRESETS = ("baseline", "r_below_one")

MARKET_KEYS = ("R", "S", "r", "mu", "sigma")


@dataclass
class RunConfig:
    R: float | None = None
    S: float | None = None
    r: float | None = None
    mu: float | None = None
    sigma: float | None = None
    x0: float = 1.0
    seed: int = 0
    output: str = "-"
    # strategy override; defaults to the optimal pair
    pi: float | None = None
    xi: float | None = None
    # lattice
    steps: int | None = None  # lattice default 200; Monte Carlo default one per unit time
    horizon: float | None = None
    calibration: str = "moment"
    up_prob: float = 0.5
    tail: str = "proportional"
    consumption: str = "proportional"
    gamma: float = 1.0
    sigma_ups: int | None = None
    tau_downs: int | None = None
    # family
    A0: float | None = None
    T: float | None = None
    t_max: float | None = None
    points: int = 101
    # fixed point
    epsilon: float = 0.0
    nu: float = 0.0
    tol: float = 1e-10
    max_iter: int = 500
    # Monte Carlo
    paths: int = 100000
    candidate: str = "proportional"
    scale: float = 1.0
    # classify
    input: str | None = None

    def resolved(self) -> list[tuple[str, str]]:
        """All keys with their values in declaration order (``None`` shown empty)."""
        out = []
        for f in fields(self):
            v = getattr(self, f.name)
            out.append((f.name, "" if v is None else format_value(v)))
        return out

    def require(self, *keys: str) -> None:
        missing = [k for k in keys if getattr(self, k) is None]
        if missing:
            raise ConfigError(f"missing required key(s): {', '.join(missing)}")


_TYPES = {f.name: f.type for f in fields(RunConfig)}
KEYS = tuple(_TYPES)


def format_value(v) -> str:
    if isinstance(v, float):
        return format(v, ".17g")
    return str(v)


def _convert(key: str, raw: str):
    if key not in _TYPES:
        raise ConfigError(f"unknown key {key!r}")
    raw = raw.strip()
    typ = _TYPES[key]
    if raw == "" and "None" in typ:
        return None
    try:
        if typ.startswith("float"):
            return float(raw)
        if typ.startswith("int"):
            return int(raw)
    except ValueError as exc:
        raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    return raw


def parse_lines(lines, source: str = "<config>") -> dict:
    """Parse ``key=value`` lines; blank lines and ``#`` comments are skipped."""
    out = {}
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{n}: expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = _convert(key.strip(), value)
    return out


def read_file(path: str | Path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    return parse_lines(text.splitlines(), str(path))


def read_preset(name: str) -> dict:
    if name not in PRESETS:
        raise ConfigError(f"unknown preset {name!r}; choose from {', '.join(PRESETS)}")
    text = resources.files("ezsdu.configs").joinpath(f"{name}.cfg").read_text()
    return parse_lines(text.splitlines(), f"preset {name}")


def read_env(environ=None) -> dict:
    environ = os.environ if environ is None else environ
    out = {}
    for name, value in environ.items():
        if name.startswith(ENV_PREFIX):
            key = name[len(ENV_PREFIX) :]
            out[key] = _convert(key, value)
    return out


def build_config(
    preset: str | None = None,
    path: str | None = None,
    flags: dict | None = None,
    environ=None,
) -> RunConfig:
    values: dict = {}
    if preset:
        values.update(read_preset(preset))
    if path:
        values.update(read_file(path))
    values.update(read_env(environ))
    for key, v in (flags or {}).items():
        if v is not None:
            values[key] = _convert(key, v) if isinstance(v, str) else v
    return RunConfig(**values)
