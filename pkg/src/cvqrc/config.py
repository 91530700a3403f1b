"""Experiment configuration files.

Configs are YAML.  Every mapping is checked against a closed set of keys and
every error carries the file name and line number of the offending node.
Run ``cvqrc show-schema`` for the documented layout.
"""

from __future__ import annotations

import hashlib
import math
import json
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any

import yaml

from .features import FeatureScheme, default_bv_grid, default_uv_points
from .reservoir import ReservoirConfig
from .tasks import IPCConfig, NarmaParams

__all__ = ["ConfigError", "ExperimentConfig", "NarmaTask", "SweepSpec", "load_config", "parse_config", "SCHEMA"]


SCHEMA = """\
# cvqrc experiment configuration (YAML). Unknown keys are errors.
reservoir:                 # optional block, every key optional
  n_modes: 7               # number of reservoir (and input) modes
  reflectivity: 0.75       # beam splitter R in [0, 1]
  g_range: [0.1, 0.3]      # beam-splitter-type coupling range
  h_range: [0.2, 0.4]      # two-mode-squeezing coupling range
  omega: 1.0               # mode frequency: number or list of n_modes numbers
  omega_range: null        # [lo, hi] draws random per-mode frequencies instead
  dt: 1.0                  # crystal transit time
schemes:                   # required, nonempty list of feature schemes
  - label: cov             # optional; generated from the fields when absent
    cov: true              # include the N(N+1)/2 covariance entries
    uv_points: 0           # int n -> n points evenly in [0.1, 2.0]; or explicit list
    bv_grid: 0             # int n (perfect square) -> grid {0.1, 0.6, ...}^2; or [[c1, c2], ...]
    memory_depth: 0        # P past steps appended to each row
    ensemble: null         # null = ideal; integer M = Wishart finite ensemble
task:                      # required
  kind: ipc                # ipc | narma
  washout: 500
  train: 8000
  test: 2000
  # kind: ipc only
  d_max: 9
  tau_max: 75
  threshold: 1.0e-7
  patience: 100
  equal_delays_only: null  # null = automatic (true for schemes without CDF nodes)
  # kind: narma only
  orders: [2, 3, ..., 15]
  alpha: 0.3
  beta: 0.05
  gamma: 0.0375
  delta: 0.0
  form: product            # product (beta * y_k * sum) | linear
realizations: 10           # reservoir realizations; seed of realization r = base_seed + r
base_seed: 0
output: results            # output directory
workers: 1                 # parallel realizations
baseline: null             # label of the reference scheme for IPC ratios (default: first cov-only ideal scheme)
sweep:                     # optional, consumed by the `sweep` subcommand
  axis: ensemble           # ensemble | memory_depth | scheme
  values: [null, 10000, 1000000]   # for axis 'scheme': list of scheme labels
"""


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class NarmaTask:
    orders: tuple[int, ...] = tuple(range(2, 16))
    alpha: float = 0.3
    beta: float = 0.05
    gamma: float = 0.0375
    delta: float = 0.0
    form: str = "product"
    washout: int = 500
    train: int = 8000
    test: int = 2000

    @property
    def length(self) -> int:
        return self.washout + self.train + self.test

    def params(self, n: int) -> NarmaParams:
        return NarmaParams(n, self.alpha, self.beta, self.gamma, self.delta, self.form)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["orders"] = list(self.orders)
        return d


@dataclass(frozen=True)
class SweepSpec:
    axis: str
    values: tuple


@dataclass(frozen=True)
class ExperimentConfig:
    reservoir: ReservoirConfig = field(default_factory=ReservoirConfig)
    schemes: tuple[FeatureScheme, ...] = ()
    task: NarmaTask | IPCConfig = field(default_factory=IPCConfig)
    realizations: int = 10
    base_seed: int = 0
    output: str = "results"
    workers: int = 1
    baseline: str | None = None
    sweep: SweepSpec | None = None

    def __post_init__(self):
        if self.realizations < 1:
            raise ConfigError("realizations must be at least 1")
        if not self.schemes:
            raise ConfigError("at least one scheme is required")
        labels = [s.label for s in self.schemes]
        if len(set(labels)) != len(labels):
            raise ConfigError(f"scheme labels must be unique, got {labels}")
        if self.workers < 1:
            raise ConfigError("workers must be at least 1")

    @property
    def task_kind(self) -> str:
        return "narma" if isinstance(self.task, NarmaTask) else "ipc"

    def with_overrides(self, **kw) -> "ExperimentConfig":
        return replace(self, **{k: v for k, v in kw.items() if v is not None})

    def to_dict(self) -> dict:
        task = self.task.to_dict()
        task["kind"] = self.task_kind
        return {
            "reservoir": self.reservoir.to_dict(),
            "schemes": [s.to_dict() for s in self.schemes],
            "task": task,
            "realizations": self.realizations,
            "base_seed": self.base_seed,
            "baseline": self.baseline,
            "sweep": None if self.sweep is None else {"axis": self.sweep.axis, "values": list(self.sweep.values)},
        }

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()


# --- YAML node walking -------------------------------------------------------


class _Ctx:
    def __init__(self, source: str):
        self.source = source

    def fail(self, node: yaml.Node, msg: str):
        line = node.start_mark.line + 1 if node is not None else 0
        raise ConfigError(f"{self.source}:{line}: {msg}")


def _plain(node: yaml.Node):
    return yaml.safe_load(yaml.serialize(node))


def _mapping(ctx: _Ctx, node: yaml.Node, allowed: set[str], where: str) -> dict[str, yaml.Node]:
    if not isinstance(node, yaml.MappingNode):
        ctx.fail(node, f"{where} must be a mapping")
    out = {}
    for k, v in node.value:
        key = _plain(k)
        if key not in allowed:
            ctx.fail(k, f"unknown key {key!r} in {where} (allowed: {', '.join(sorted(allowed))})")
        if key in out:
            ctx.fail(k, f"duplicate key {key!r} in {where}")
        out[key] = v
    return out


def _culprit(node, fields: dict, message: str):
    """The value node a validation message talks about, else the whole block."""
    for key, value in fields.items():
        if key in message:
            return value
    return node


def _num(ctx, node, name, kind=float, allow_none=False):
    val = _plain(node)
    if val is None and allow_none:
        return None
    if isinstance(val, str) and isinstance(node, yaml.ScalarNode) and node.style is None:
        # YAML 1.1 reads unquoted 1e6 as a string
        try:
            val = float(val)
        except ValueError:
            pass
    if isinstance(val, bool) or not isinstance(val, (int, float)) or not math.isfinite(val):
        ctx.fail(node, f"{name} must be a finite number")
    if kind is int:
        if float(val) != int(val):
            ctx.fail(node, f"{name} must be an integer")
        return int(val)
    return float(val)


def _pair(ctx, node, name):
    val = _plain(node)
    if not (isinstance(val, list) and len(val) == 2 and all(isinstance(v, (int, float)) for v in val)):
        ctx.fail(node, f"{name} must be a list of two numbers")
    return (float(val[0]), float(val[1]))


def _reservoir(ctx: _Ctx, node) -> ReservoirConfig:
    m = _mapping(ctx, node, {"n_modes", "reflectivity", "g_range", "h_range", "omega", "omega_range", "dt"}, "reservoir")
    kw: dict[str, Any] = {}
    if "n_modes" in m:
        kw["n_modes"] = _num(ctx, m["n_modes"], "n_modes", int)
    if "reflectivity" in m:
        kw["reflectivity"] = _num(ctx, m["reflectivity"], "reflectivity")
    for key in ("g_range", "h_range"):
        if key in m:
            kw[key] = _pair(ctx, m[key], key)
    if "omega_range" in m and _plain(m["omega_range"]) is not None:
        kw["omega_range"] = _pair(ctx, m["omega_range"], "omega_range")
    if "omega" in m:
        val = _plain(m["omega"])
        if isinstance(val, list):
            if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in val):
                ctx.fail(m["omega"], "omega list must contain numbers")
            kw["omega"] = tuple(float(v) for v in val)
        else:
            kw["omega"] = _num(ctx, m["omega"], "omega")
    if "dt" in m:
        kw["dt"] = _num(ctx, m["dt"], "dt")
    try:
        return ReservoirConfig(**kw)
    except ValueError as exc:
        ctx.fail(_culprit(node, m, str(exc)), f"invalid reservoir: {exc}")


_SCHEME_KEYS = {"label", "cov", "uv_points", "bv_grid", "memory_depth", "ensemble"}


def _scheme(ctx: _Ctx, node, i: int) -> FeatureScheme:
    m = _mapping(ctx, node, _SCHEME_KEYS, f"schemes[{i}]")
    kw: dict[str, Any] = {}
    if "label" in m:
        kw["label"] = str(_plain(m["label"]))
    if "cov" in m:
        val = _plain(m["cov"])
        if not isinstance(val, bool):
            ctx.fail(m["cov"], "cov must be true or false")
        kw["include_cov"] = val
    if "uv_points" in m:
        val = _plain(m["uv_points"])
        if isinstance(val, int) and not isinstance(val, bool):
            kw["uv_points"] = default_uv_points(val) if val else ()
        elif isinstance(val, list) and all(isinstance(v, (int, float)) for v in val):
            kw["uv_points"] = tuple(float(v) for v in val)
        else:
            ctx.fail(m["uv_points"], "uv_points must be a count or a list of numbers")
    if "bv_grid" in m:
        val = _plain(m["bv_grid"])
        try:
            if isinstance(val, int) and not isinstance(val, bool):
                kw["bv_grid"] = default_bv_grid(val) if val else ()
            elif isinstance(val, list):
                kw["bv_grid"] = tuple(_pair(ctx, p, "bv_grid point") for p in m["bv_grid"].value)
            else:
                raise ValueError("bv_grid must be a count or a list of [c1, c2] points")
        except ValueError as exc:
            ctx.fail(m["bv_grid"], str(exc))
    if "memory_depth" in m:
        kw["memory_depth"] = _num(ctx, m["memory_depth"], "memory_depth", int)
    if "ensemble" in m:
        kw["ensemble"] = _num(ctx, m["ensemble"], "ensemble", int, allow_none=True)
    try:
        return FeatureScheme(**kw)
    except ValueError as exc:
        ctx.fail(_culprit(node, m, str(exc)), f"invalid scheme: {exc}")


_SPLIT = {"washout", "train", "test"}
_IPC_KEYS = {"d_max", "tau_max", "threshold", "patience", "equal_delays_only"}
_NARMA_KEYS = {"orders", "alpha", "beta", "gamma", "delta", "form"}


def _task(ctx: _Ctx, node):
    m = _mapping(ctx, node, {"kind"} | _SPLIT | _IPC_KEYS | _NARMA_KEYS, "task")
    if "kind" not in m:
        ctx.fail(node, "task.kind is required (ipc or narma)")
    kind = _plain(m["kind"])
    if kind not in ("ipc", "narma"):
        ctx.fail(m["kind"], f"task.kind must be 'ipc' or 'narma', got {kind!r}")
    wrong = _NARMA_KEYS if kind == "ipc" else _IPC_KEYS
    for key in wrong & m.keys():
        ctx.fail(m[key], f"key {key!r} does not apply to task kind {kind!r}")
    kw: dict[str, Any] = {k: _num(ctx, m[k], k, int) for k in _SPLIT & m.keys()}
    try:
        if kind == "ipc":
            for k in ("d_max", "tau_max", "patience"):
                if k in m:
                    kw[k] = _num(ctx, m[k], k, int)
            if "threshold" in m:
                kw["threshold"] = _num(ctx, m["threshold"], "threshold")
            if "equal_delays_only" in m:
                val = _plain(m["equal_delays_only"])
                if val is not None and not isinstance(val, bool):
                    ctx.fail(m["equal_delays_only"], "equal_delays_only must be true, false or null")
                kw["equal_delays_only"] = val
            return IPCConfig(**kw)
        if "orders" in m:
            val = _plain(m["orders"])
            if not (isinstance(val, list) and val and all(isinstance(v, int) and v >= 1 for v in val)):
                ctx.fail(m["orders"], "orders must be a nonempty list of positive integers")
            kw["orders"] = tuple(val)
        for k in ("alpha", "beta", "gamma", "delta"):
            if k in m:
                kw[k] = _num(ctx, m[k], k)
        if "form" in m:
            form = _plain(m["form"])
            if form not in ("product", "linear"):
                ctx.fail(m["form"], "form must be 'product' or 'linear'")
            kw["form"] = form
        return NarmaTask(**kw)
    except ValueError as exc:
        ctx.fail(_culprit(node, m, str(exc)), f"invalid task: {exc}")


def _sweep(ctx: _Ctx, node) -> SweepSpec:
    m = _mapping(ctx, node, {"axis", "values"}, "sweep")
    if "axis" not in m or "values" not in m:
        ctx.fail(node, "sweep needs both 'axis' and 'values'")
    axis = _plain(m["axis"])
    if axis not in ("ensemble", "memory_depth", "scheme"):
        ctx.fail(m["axis"], f"sweep axis must be ensemble, memory_depth or scheme, got {axis!r}")
    if not isinstance(m["values"], yaml.SequenceNode) or not m["values"].value:
        ctx.fail(m["values"], "sweep values must be a nonempty list")
    vals = []
    for v in m["values"].value:
        if axis == "ensemble":
            val = _num(ctx, v, "ensemble value", int, allow_none=True)
            if val is not None and val < 1:
                ctx.fail(v, "ensemble sizes must be positive")
        elif axis == "memory_depth":
            val = _num(ctx, v, "memory depth", int)
            if val < 0:
                ctx.fail(v, "memory depth must be nonnegative")
        else:
            val = str(_plain(v))
        vals.append(val)
    return SweepSpec(axis, tuple(vals))


_TOP = {"reservoir", "schemes", "task", "realizations", "base_seed", "output", "workers", "baseline", "sweep"}


def parse_config(text: str, source: str = "<config>") -> ExperimentConfig:
    ctx = _Ctx(source)
    try:
        root = yaml.compose(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else 0
        raise ConfigError(f"{source}:{line}: YAML syntax error: {getattr(exc, 'problem', exc)}") from None
    if root is None:
        raise ConfigError(f"{source}:1: empty configuration")
    m = _mapping(ctx, root, _TOP, "top level")
    kw: dict[str, Any] = {}
    if "reservoir" in m:
        kw["reservoir"] = _reservoir(ctx, m["reservoir"])
    if "schemes" not in m:
        ctx.fail(root, "'schemes' is required")
    sn = m["schemes"]
    if not isinstance(sn, yaml.SequenceNode) or not sn.value:
        ctx.fail(sn, "schemes must be a nonempty list")
    kw["schemes"] = tuple(_scheme(ctx, s, i) for i, s in enumerate(sn.value))
    if "task" not in m:
        ctx.fail(root, "'task' is required")
    kw["task"] = _task(ctx, m["task"])
    for key in ("realizations", "base_seed", "workers"):
        if key in m:
            kw[key] = _num(ctx, m[key], key, int)
    if "base_seed" in kw and not 0 <= kw["base_seed"] < 2**63:
        ctx.fail(m["base_seed"], "base_seed must be a nonnegative 64-bit integer")
    if "output" in m:
        kw["output"] = str(_plain(m["output"]))
    if "baseline" in m:
        val = _plain(m["baseline"])
        kw["baseline"] = None if val is None else str(val)
    if "sweep" in m:
        kw["sweep"] = _sweep(ctx, m["sweep"])
    try:
        cfg = ExperimentConfig(**kw)
    except ConfigError as exc:
        raise ConfigError(f"{source}:{root.start_mark.line + 1}: {exc}") from None
    labels = {s.label for s in cfg.schemes}
    if cfg.baseline is not None and cfg.baseline not in labels:
        ctx.fail(m["baseline"], f"baseline {cfg.baseline!r} is not a scheme label")
    if cfg.sweep is not None and cfg.sweep.axis == "scheme":
        missing = [v for v in cfg.sweep.values if v not in labels]
        if missing:
            ctx.fail(m["sweep"], f"sweep refers to unknown scheme labels {missing}")
    return cfg


def load_config(path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"{path}: cannot read config: {exc.strerror}") from None
    return parse_config(text, str(path))
