"""Run configuration: an INI file with one section per pipeline stage."""

from __future__ import annotations

import configparser
import hashlib
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from .heuristics import ALL_HEURISTICS, HeuristicConfig, HeuristicId
from .synthgen import GeneratorConfig


@dataclass(frozen=True)
class PathsSpec:
    out_dir: str = "runs"
    chain: str = ""  # external ledger; empty means use the generate stage's output
    chain_format: str = "jsonl"
    ground_truth: str = ""


@dataclass(frozen=True)
class GenerateSpec:
    entity_count: int = 200
    entity_size_exponent: float = 2.0
    tx_count: int = 20_000
    address_reuse_rate: float = 0.8
    change_behavior_rate: float = 0.3
    locktime_wallet_fraction: float = 0.3
    peeling_chain_rate: float = 0.02
    power10_payment_rate: float = 0.2
    multi_input_rate: float = 0.3
    p2sh_fraction: float = 0.3
    semesters: int = 8
    start: str = "2012-01-01"
    txs_per_block: int = 10


@dataclass(frozen=True)
class HeuristicsSpec:
    enabled: tuple[str, ...] = tuple(h.value for h in HeuristicId)
    power10_min_exponent: int = 4
    peeling_min_chain_length: int = 2
    unique_candidate_only: bool = False
    locktime_tolerance: int = 10


@dataclass(frozen=True)
class SampleSpec:
    enabled: bool = True
    seed_count: int = 200


@dataclass(frozen=True)
class WindowsSpec:
    start: str = "2012-01-01"
    semesters: int = 8
    kind: str = "cumulative"  # cumulative | partial | both
    origin: str = ""
    retain_isolated: bool = False


@dataclass(frozen=True)
class LpaSpec:
    p: float = 0.1
    max_iters: int = 100
    random_ties: bool = False


@dataclass(frozen=True)
class SweepSpec:
    p_grid: tuple[float, ...] = (0.0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3)
    repeats: int = 5


@dataclass(frozen=True)
class AnalysisSpec:
    network: str = ""  # network name; empty selects the last built window
    randomize_count: int = 3
    randomize_schedule: str = "escalating"  # escalating: 4i|E| swaps for replica i; fixed: 4|E|
    fit_min_tail: int = 50


SECTIONS = {
    "paths": PathsSpec,
    "generate": GenerateSpec,
    "heuristics": HeuristicsSpec,
    "sample": SampleSpec,
    "windows": WindowsSpec,
    "lpa": LpaSpec,
    "sweep": SweepSpec,
    "analysis": AnalysisSpec,
}

# sections each stage's outputs depend on (besides the global seed)
STAGE_SECTIONS = {
    "generate": ("paths", "generate"),
    "sample": ("paths", "generate", "sample"),
    "build": ("paths", "generate", "sample", "heuristics", "windows"),
    "cluster": ("paths", "generate", "sample", "heuristics", "windows", "lpa"),
    "metrics": ("paths", "generate", "sample", "heuristics", "windows", "lpa"),
    "sweep": ("paths", "generate", "sample", "heuristics", "windows", "lpa", "sweep"),
    "randomize": ("paths", "generate", "sample", "heuristics", "windows", "analysis"),
    "fit": ("paths", "generate", "sample", "heuristics", "windows", "lpa", "analysis"),
}


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    rng_seed: int = 0
    paths: PathsSpec = field(default_factory=PathsSpec)
    generate: GenerateSpec = field(default_factory=GenerateSpec)
    heuristics: HeuristicsSpec = field(default_factory=HeuristicsSpec)
    sample: SampleSpec = field(default_factory=SampleSpec)
    windows: WindowsSpec = field(default_factory=WindowsSpec)
    lpa: LpaSpec = field(default_factory=LpaSpec)
    sweep: SweepSpec = field(default_factory=SweepSpec)
    analysis: AnalysisSpec = field(default_factory=AnalysisSpec)

    def to_dict(self) -> dict:
        out: dict[str, Any] = {"rng_seed": self.rng_seed}
        for name in SECTIONS:
            spec = getattr(self, name)
            out[name] = {f.name: (list(v) if isinstance(v := getattr(spec, f.name), tuple) else v)
                         for f in fields(spec)}
        return out

    def hash(self, sections: tuple[str, ...] | None = None) -> str:
        d = self.to_dict()
        d["paths"].pop("out_dir")  # where outputs go does not change what they contain
        if sections is not None:
            d = {"rng_seed": d["rng_seed"], **{s: d[s] for s in sections}}
        blob = json.dumps(d, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]

    @property
    def config_hash(self) -> str:
        return self.hash()

    def stage_hash(self, stage: str) -> str:
        return self.hash(STAGE_SECTIONS[stage])

    @property
    def run_dir(self) -> Path:
        """Directory keyed by the data-defining sections, shared by all stages up to build."""
        return Path(self.paths.out_dir) / f"run-{self.stage_hash('build')}"

    def generator_config(self, rng_seed: int) -> GeneratorConfig:
        return GeneratorConfig(**{f.name: getattr(self.generate, f.name) for f in fields(GenerateSpec)},
                               rng_seed=rng_seed)

    def heuristic_config(self) -> HeuristicConfig:
        h = self.heuristics
        try:
            enabled = frozenset(HeuristicId(x) for x in h.enabled) if h.enabled else ALL_HEURISTICS
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return HeuristicConfig(enabled, h.power10_min_exponent, h.peeling_min_chain_length,
                               h.unique_candidate_only, h.locktime_tolerance)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, rng_seed=seed)

    def to_ini(self) -> str:
        lines = [f"rng_seed = {self.rng_seed}", ""]
        for name, d in self.to_dict().items():
            if name == "rng_seed":
                continue
            lines.append(f"[{name}]")
            for key, value in d.items():
                lines.append(f"{key} = {_format(value)}")
            lines.append("")
        return "\n".join(lines)


def _format(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, list):
        return ", ".join(str(v) for v in value)
    return str(value)


def _parse(raw: str, default, where: str):
    raw = raw.strip()
    try:
        if isinstance(default, bool):
            low = raw.lower()
            if low not in ("true", "false", "yes", "no", "1", "0"):
                raise ValueError(f"not a boolean: {raw!r}")
            return low in ("true", "yes", "1")
        if isinstance(default, int):
            return int(raw)
        if isinstance(default, float):
            return float(raw)
        if isinstance(default, tuple):
            items = [x.strip() for x in raw.split(",") if x.strip()]
            if default and isinstance(default[0], float):
                return tuple(float(x) for x in items)
            return tuple(items)
        return raw
    except ValueError as exc:
        raise ConfigError(f"{where}: {exc}") from exc


def parse_config(text: str) -> RunConfig:
    cp = configparser.ConfigParser(interpolation=None, default_section="__none__")
    try:
        cp.read_string("[__top__]\n" + text)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    kwargs: dict[str, Any] = {}
    top = cp["__top__"]
    for key in top:
        if key != "rng_seed":
            raise ConfigError(f"unknown top-level key {key!r}")
    if "rng_seed" in top:
        kwargs["rng_seed"] = _parse(top["rng_seed"], 0, "rng_seed")
    for section in cp.sections():
        if section == "__top__":
            continue
        if section not in SECTIONS:
            raise ConfigError(f"unknown section [{section}]")
        spec_cls = SECTIONS[section]
        defaults = spec_cls()
        known = {f.name for f in fields(spec_cls)}
        values = {}
        for key, raw in cp[section].items():
            if key not in known:
                raise ConfigError(f"unknown key {key!r} in [{section}]")
            values[key] = _parse(raw, getattr(defaults, key), f"[{section}] {key}")
        kwargs[section] = spec_cls(**values)
    return RunConfig(**kwargs)


def load_config(path: str | Path | None) -> RunConfig:
    if path is None:
        return RunConfig()
    p = Path(path)
    if not p.exists():
        raise ConfigError(f"config file {p} does not exist")
    return parse_config(p.read_text(encoding="utf-8"))
