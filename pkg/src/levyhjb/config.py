"""Experiment configs: nested YAML blocks loaded into dataclasses.

Seeds are never defaulted; a config without ``mc.seed`` is rejected.
"""
from __future__ import annotations

from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Any

import yaml

from .errors import ConfigError
from .problem import FAMILIES

FORMATS = ("csv", "json")


@dataclass
class ProblemBlock:
    family: str
    params: dict = field(default_factory=dict)


@dataclass
class GridBlock:
    h: float
    time_steps: int | None = None
    delta: float = 0.0
    eps: float = 0.0
    n_controls: int | None = None  # finite subset size for box control sets


@dataclass
class CascadeBlock:
    eps: list = field(default_factory=list)
    n_controls: list = field(default_factory=list)
    delta: list = field(default_factory=list)  # multiples of eta
    h: float | None = None
    psi: str | None = None  # terminal data override for the studies


@dataclass
class McBlock:
    n_paths: int
    dt: float
    seed: int
    workers: int | None = None


@dataclass
class SimulateBlock:
    x: list
    t: float = 0.0
    control: list | None = None  # constant control; None uses the first control point
    n_recorded: int = 1


@dataclass
class VerifyBlock:
    x: list
    t: float = 0.0
    M1: int = 50
    cell_h: float = 0.05
    dpp_rules: list = field(default_factory=list)  # e.g. ["T", ["time", 0.5], ["exit", 0.2]]
    coupling_shifts: list = field(default_factory=list)
    coupling_delta: float | None = None  # multiple of eta


@dataclass
class BarrierBlock:
    n_samples: int = 1000
    seed: int | None = None


@dataclass
class OutputsBlock:
    directory: str = "out"
    formats: list = field(default_factory=lambda: list(FORMATS))


@dataclass
class ExperimentConfig:
    problem: ProblemBlock
    mc: McBlock
    outputs: OutputsBlock
    grid: GridBlock | None = None
    cascade: CascadeBlock | None = None
    simulate: SimulateBlock | None = None
    verify: VerifyBlock | None = None
    barrier: BarrierBlock | None = None

    def require(self, block: str):
        value = getattr(self, block)
        if value is None:
            raise ConfigError(f"config has no '{block}' block")
        return value


def _block(cls, raw: Any, name: str):
    if raw is None:
        return None
    if not isinstance(raw, dict):
        raise ConfigError(f"'{name}' must be a mapping")
    known = {f.name for f in fields(cls)}
    extra = set(raw) - known
    if extra:
        raise ConfigError(f"unknown keys in '{name}': {sorted(extra)}")
    try:
        return cls(**raw)
    except TypeError as exc:
        raise ConfigError(f"'{name}': {exc}") from None


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a mapping of blocks")
    extra = set(raw) - {f.name for f in fields(ExperimentConfig)}
    if extra:
        raise ConfigError(f"unknown blocks: {sorted(extra)}")
    for key in ("problem", "mc"):
        if key not in raw:
            raise ConfigError(f"missing '{key}' block")
    mc_raw = raw["mc"]
    if not isinstance(mc_raw, dict) or mc_raw.get("seed") is None:
        raise ConfigError("mc.seed must be given explicitly")
    cfg = ExperimentConfig(
        problem=_block(ProblemBlock, raw["problem"], "problem"),
        mc=_block(McBlock, mc_raw, "mc"),
        outputs=_block(OutputsBlock, raw.get("outputs") or {}, "outputs"),
        grid=_block(GridBlock, raw.get("grid"), "grid"),
        cascade=_block(CascadeBlock, raw.get("cascade"), "cascade"),
        simulate=_block(SimulateBlock, raw.get("simulate"), "simulate"),
        verify=_block(VerifyBlock, raw.get("verify"), "verify"),
        barrier=_block(BarrierBlock, raw.get("barrier"), "barrier"),
    )
    if cfg.problem.family not in FAMILIES:
        raise ConfigError(f"unknown family {cfg.problem.family!r}; known: {sorted(FAMILIES)}")
    if not isinstance(cfg.mc.seed, int) or isinstance(cfg.mc.seed, bool) or cfg.mc.seed < 0:
        raise ConfigError("mc.seed must be a nonnegative integer")
    if cfg.mc.n_paths < 2 or cfg.mc.dt <= 0:
        raise ConfigError("mc needs n_paths >= 2 and dt > 0")
    bad = set(cfg.outputs.formats) - set(FORMATS)
    if bad:
        raise ConfigError(f"unknown output formats {sorted(bad)}")
    if cfg.grid is not None and not cfg.grid.h > 0:
        raise ConfigError("grid.h must be positive")
    return cfg


def load_config(path) -> ExperimentConfig:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError(f"config is not valid YAML: {exc}") from None
    return parse_config(raw)
