"""Experiment configuration: YAML ingestion, validation and metric construction."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .metrics import MODES, Arc, Cylinder, Semimetric, arc_metric, cut_semimetric, dyadic_metric, \
    hamming_window_metric, indicator_semimetric
from .scaling import BOUNDED_RISE, BURN_IN, DEFAULT_EPS_GRID, DEFAULT_M, DEFAULT_SCHEDULE, DOMINANCE_MARGIN
from .systems import SYSTEM_KINDS, SystemSpec

METRIC_KINDS = ("cut", "indicator", "arc", "dyadic", "hamming_window")

METRIC_HELP = {
    "cut": "0/1 semimetric of a partition; cells: list of [lo, hi] arcs or binary prefixes",
    "indicator": "|1_A(x) - 1_A(y)|; set: an [lo, hi] arc or a binary prefix",
    "arc": "shortest arc length on the circle (diameter 1/2)",
    "dyadic": "2^-n at the first differing coordinate n (diameter 1/2)",
    "hamming_window": "fraction of differing coordinates among the first k; k: window length",
}

_TOP_KEYS = {"name", "system", "metrics", "modes", "schedule", "eps_grid", "m", "seed", "p", "strategy",
             "max_resamples", "output", "classify"}
_METRIC_KEYS = {"cut": {"cells"}, "indicator": {"set"}, "arc": set(), "dyadic": set(), "hamming_window": {"k"}}
_CLASSIFY_KEYS = {"margin", "rise_tol", "burn_in"}

BUNDLED_DIR = Path(__file__).parent / "configs"


class ConfigError(ValueError):
    """Invalid configuration; ``field`` names the offending entry."""

    def __init__(self, field_name: str, message: str):
        self.field = field_name
        super().__init__(f"{field_name}: {message}")


@dataclass
class MetricSpec:
    kind: str
    params: dict[str, Any] = field(default_factory=dict)
    normalize: bool = True
    label: str = ""

    def to_dict(self) -> dict[str, Any]:
        d = {"kind": self.kind, **copy.deepcopy(self.params), "normalize": self.normalize}
        if self.label:
            d["label"] = self.label
        return d


@dataclass
class ExperimentConfig:
    name: str
    system: SystemSpec
    metrics: list[MetricSpec]
    modes: list[str] = field(default_factory=lambda: ["average"])
    schedule: list[int] = field(default_factory=lambda: list(DEFAULT_SCHEDULE))
    eps_grid: list[float] = field(default_factory=lambda: list(DEFAULT_EPS_GRID))
    m: int = DEFAULT_M
    seed: int = 0
    p: float = 2.0
    strategy: str = "greedy"
    max_resamples: int = 8
    output: str = "results"
    classify: dict[str, float] = field(default_factory=lambda: {
        "margin": DOMINANCE_MARGIN, "rise_tol": BOUNDED_RISE, "burn_in": BURN_IN})

    def to_dict(self) -> dict[str, Any]:
        return {
            "name": self.name,
            "system": self.system.to_dict(),
            "metrics": [s.to_dict() for s in self.metrics],
            "modes": list(self.modes),
            "schedule": list(self.schedule),
            "eps_grid": list(self.eps_grid),
            "m": self.m,
            "seed": self.seed,
            "p": self.p,
            "strategy": self.strategy,
            "max_resamples": self.max_resamples,
            "output": self.output,
            "classify": dict(self.classify),
        }

    def to_yaml(self) -> str:
        return yaml.safe_dump(self.to_dict(), sort_keys=False)


def _int(value, name: str, lo: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int):
        raise ConfigError(name, f"expected an integer, got {value!r}")
    if value < lo:
        raise ConfigError(name, f"must be >= {lo}, got {value}")
    return value


def _float(value, name: str) -> float:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ConfigError(name, f"expected a number, got {value!r}")
    return float(value)


def _schedule(value) -> list[int]:
    if isinstance(value, dict):
        extra = set(value) - {"powers_of_two"}
        if extra:
            raise ConfigError(f"schedule.{sorted(extra)[0]}", "unknown key")
        lo_hi = value.get("powers_of_two")
        if not (isinstance(lo_hi, list) and len(lo_hi) == 2):
            raise ConfigError("schedule.powers_of_two", "expected [first_exponent, last_exponent]")
        lo = _int(lo_hi[0], "schedule.powers_of_two", 0)
        hi = _int(lo_hi[1], "schedule.powers_of_two", lo)
        return [2 ** i for i in range(lo, hi + 1)]
    if not isinstance(value, list) or not value:
        raise ConfigError("schedule", "expected a non-empty list of integers")
    out = [_int(v, f"schedule[{i}]", 1) for i, v in enumerate(value)]
    if any(b <= a for a, b in zip(out, out[1:])):
        raise ConfigError("schedule", "must be strictly increasing")
    return out


def _cell(value, name: str, domain: str):
    if domain == "word":
        if not (isinstance(value, str) and value and set(value) <= {"0", "1"}):
            raise ConfigError(name, f"expected a binary prefix string, got {value!r}")
        return Cylinder(value)
    if not (isinstance(value, list) and len(value) == 2):
        raise ConfigError(name, f"expected an arc [lo, hi], got {value!r}")
    lo, hi = (_float(v, name) for v in value)
    if not (0.0 <= lo <= 1.0 and 0.0 <= hi <= 1.0):
        raise ConfigError(name, "arc endpoints must lie in [0, 1]")
    return Arc(lo, hi)


def _metric_spec(value, idx: int, domain: str) -> MetricSpec:
    where = f"metrics[{idx}]"
    if isinstance(value, str):
        value = {"kind": value}
    if not isinstance(value, dict):
        raise ConfigError(where, "expected a mapping or a metric name")
    value = dict(value)
    kind = value.pop("kind", None)
    if kind not in METRIC_KINDS:
        raise ConfigError(f"{where}.kind", f"unknown metric {kind!r}; known: {', '.join(METRIC_KINDS)}")
    normalize = value.pop("normalize", True)
    if not isinstance(normalize, bool):
        raise ConfigError(f"{where}.normalize", "expected true or false")
    label = value.pop("label", "")
    extra = set(value) - _METRIC_KEYS[kind]
    if extra:
        raise ConfigError(f"{where}.{sorted(extra)[0]}", f"unknown key for {kind}")
    missing = _METRIC_KEYS[kind] - set(value)
    if missing:
        raise ConfigError(f"{where}.{sorted(missing)[0]}", "required")
    needs = {"arc": "circle", "dyadic": "word", "hamming_window": "word"}.get(kind)
    if needs and needs != domain:
        raise ConfigError(f"{where}.kind", f"{kind} needs a {needs} system")
    if kind == "cut":
        cells = value["cells"]
        if not isinstance(cells, list) or not cells:
            raise ConfigError(f"{where}.cells", "expected a non-empty list")
        for j, c in enumerate(cells):
            _cell(c, f"{where}.cells[{j}]", domain)
    elif kind == "indicator":
        _cell(value["set"], f"{where}.set", domain)
    elif kind == "hamming_window":
        k = _int(value["k"], f"{where}.k", 1)
        if k > 64:
            raise ConfigError(f"{where}.k", "must be <= 64")
    return MetricSpec(kind, value, normalize, str(label))


def build_metric(spec: MetricSpec, system: SystemSpec) -> Semimetric:
    domain = "word" if system.symbolic else "circle"
    if spec.kind == "cut":
        rho = cut_semimetric([_cell(c, "cells", domain) for c in spec.params["cells"]])
    elif spec.kind == "indicator":
        rho = indicator_semimetric(_cell(spec.params["set"], "set", domain))
    elif spec.kind == "arc":
        rho = arc_metric()
    elif spec.kind == "dyadic":
        rho = dyadic_metric()
    else:
        rho = hamming_window_metric(int(spec.params["k"]))
    if spec.normalize:
        rho = rho.normalized()
    if spec.label:
        rho = replace(rho, name=spec.label)
    return rho


def parse_config(raw: Any) -> ExperimentConfig:
    """Validate a config mapping.  Raises ConfigError before any computation."""
    if not isinstance(raw, dict):
        raise ConfigError("<root>", "expected a mapping")
    extra = set(raw) - _TOP_KEYS
    if extra:
        raise ConfigError(sorted(extra)[0], "unknown key")
    for key in ("system", "metrics"):
        if key not in raw:
            raise ConfigError(key, "required")
    sys_raw = raw["system"]
    if not isinstance(sys_raw, dict):
        raise ConfigError("system", "expected a mapping")
    if sys_raw.get("kind") not in SYSTEM_KINDS:
        raise ConfigError("system.kind", f"unknown system {sys_raw.get('kind')!r}; known: {', '.join(SYSTEM_KINDS)}")
    try:
        system = SystemSpec.from_dict(sys_raw)
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        key = next((k for k in ("alpha", "p", "depth") if k in msg), None)
        raise ConfigError(f"system.{key}" if key else "system", msg) from None
    domain = "word" if system.symbolic else "circle"
    metrics_raw = raw["metrics"]
    if not isinstance(metrics_raw, list) or not metrics_raw:
        raise ConfigError("metrics", "expected a non-empty list")
    metrics = [_metric_spec(v, i, domain) for i, v in enumerate(metrics_raw)]
    cfg = ExperimentConfig(name=str(raw.get("name", "experiment")), system=system, metrics=metrics)
    if "modes" in raw:
        modes = raw["modes"]
        if not isinstance(modes, list) or not modes:
            raise ConfigError("modes", "expected a non-empty list")
        for i, mode in enumerate(modes):
            if mode not in MODES:
                raise ConfigError(f"modes[{i}]", f"unknown mode {mode!r}; known: {', '.join(MODES)}")
        if len(set(modes)) != len(modes):
            raise ConfigError("modes", "duplicate mode")
        cfg.modes = list(modes)
    if "schedule" in raw:
        cfg.schedule = _schedule(raw["schedule"])
    if "eps_grid" in raw:
        grid = raw["eps_grid"]
        if not isinstance(grid, list) or not grid:
            raise ConfigError("eps_grid", "expected a non-empty list")
        cfg.eps_grid = [_float(e, f"eps_grid[{i}]") for i, e in enumerate(grid)]
        for i, e in enumerate(cfg.eps_grid):
            if not 0.0 < e < 1.0:
                raise ConfigError(f"eps_grid[{i}]", f"must lie in (0, 1), got {e}")
        if len(set(cfg.eps_grid)) != len(cfg.eps_grid):
            raise ConfigError("eps_grid", "duplicate value")
    if "m" in raw:
        cfg.m = _int(raw["m"], "m", 2)
    if "seed" in raw:
        cfg.seed = _int(raw["seed"], "seed", 0)
    if "p" in raw:
        cfg.p = _float(raw["p"], "p")
        if cfg.p < 1.0:
            raise ConfigError("p", "lp exponent must be >= 1")
    if "strategy" in raw:
        if raw["strategy"] not in ("greedy", "farthest"):
            raise ConfigError("strategy", "expected greedy or farthest")
        cfg.strategy = raw["strategy"]
    if "max_resamples" in raw:
        cfg.max_resamples = _int(raw["max_resamples"], "max_resamples", 0)
    if "output" in raw:
        if not isinstance(raw["output"], str) or not raw["output"]:
            raise ConfigError("output", "expected a directory path")
        cfg.output = raw["output"]
    if "classify" in raw:
        cl = raw["classify"]
        if not isinstance(cl, dict):
            raise ConfigError("classify", "expected a mapping")
        extra = set(cl) - _CLASSIFY_KEYS
        if extra:
            raise ConfigError(f"classify.{sorted(extra)[0]}", "unknown key")
        for k, v in cl.items():
            cfg.classify[k] = _float(v, f"classify.{k}")
        if not 0.0 <= cfg.classify["burn_in"] < 1.0:
            raise ConfigError("classify.burn_in", "must lie in [0, 1)")
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
    try:
        raw = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError("<file>", f"not valid YAML: {exc}") from None
    return parse_config(raw)


def bundled_configs() -> dict[str, Path]:
    return {p.stem: p for p in sorted(BUNDLED_DIR.glob("*.yaml"))}


def resolve_config(name_or_path: str) -> Path:
    """A path, or the name of a bundled config."""
    p = Path(name_or_path)
    if p.exists():
        return p
    bundled = bundled_configs()
    if name_or_path in bundled:
        return bundled[name_or_path]
    raise ConfigError("--config", f"no such file or bundled config: {name_or_path}")
