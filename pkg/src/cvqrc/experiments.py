"""Experiment runners over reservoir realizations.

Realization ``r`` uses seed ``base_seed + r``.  Its stream is split into
child keys ``0`` (couplings), ``1`` (inputs) and ``(2, M)`` (finite-ensemble
noise for ensemble size ``M``), so every scheme and every sweep value sees
the same reservoir, inputs and noise for a given seed.
"""

from __future__ import annotations

import csv
import io
import json
import platform
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .config import ConfigError, ExperimentConfig, NarmaTask, SweepSpec
from .features import (
    FeatureScheme,
    bv_cdf_features,
    cov_features,
    lag_stack,
    noisy_x_stack,
    uv_cdf_features,
    x_submatrix,
)
from .numerics import RNG_ALGORITHM, RngStream
from .readout import Trainer, nmse
from .reservoir import Trajectory, init_reservoir, run_trajectory
from .tasks import IPCConfig, IPCReport, gen_inputs, ipc_from_features, narma_target

__all__ = [
    "NumericalFailure",
    "ResultRow",
    "ResultTable",
    "Realization",
    "realize",
    "FeatureCache",
    "run_narma",
    "run_ipc",
    "sweep",
    "expand_sweep",
    "write_results",
]


class NumericalFailure(RuntimeError):
    """A realization produced non-finite or degenerate numbers."""

    def __init__(self, seed: int, scheme: str | None, reason: str):
        self.seed = seed
        self.scheme = scheme
        where = f"seed {seed}" + (f", scheme {scheme!r}" if scheme else ", reservoir evolution")
        super().__init__(f"numerical failure at {where}: {reason}")


@dataclass(frozen=True)
class ResultRow:
    scheme: str
    seed: int
    metric: str
    value: float


def _std(v: np.ndarray) -> float:
    return float(np.std(v, ddof=1)) if v.size > 1 else 0.0


@dataclass
class ResultTable:
    """Per-realization rows plus aggregates derived from them.

    Aggregates are never stored independently: :meth:`aggregates` recomputes
    mean and standard deviation (``ddof=1``) for every (scheme, metric), and for
    IPC tables the ratio of mean totals against ``baseline``.
    """

    rows: list[ResultRow] = field(default_factory=list)
    baseline: str | None = None
    reports: dict = field(default_factory=dict)

    def schemes(self) -> list[str]:
        return list(dict.fromkeys(r.scheme for r in self.rows))

    def metrics(self, scheme: str | None = None) -> list[str]:
        return list(dict.fromkeys(r.metric for r in self.rows if scheme is None or r.scheme == scheme))

    def seeds(self, scheme: str | None = None) -> list[int]:
        return list(dict.fromkeys(r.seed for r in self.rows if scheme is None or r.scheme == scheme))

    def values(self, scheme: str, metric: str) -> np.ndarray:
        return np.array([r.value for r in self.rows if r.scheme == scheme and r.metric == metric])

    def mean(self, scheme: str, metric: str) -> float:
        v = self.values(scheme, metric)
        if v.size == 0:
            raise KeyError(f"no rows for {scheme!r} / {metric!r}")
        return float(v.mean())

    def ratio_of_means(self, scheme: str, metric: str = "ipc_total") -> float:
        if self.baseline is None:
            raise ValueError("table has no baseline scheme")
        return self.mean(scheme, metric) / self.mean(self.baseline, metric)

    def aggregates(self) -> list[tuple[str, str, str, float]]:
        """``(scheme, metric, statistic, value)`` in row order."""
        out = []
        for scheme in self.schemes():
            for metric in self.metrics(scheme):
                v = self.values(scheme, metric)
                out.append((scheme, metric, "mean", float(v.mean())))
                out.append((scheme, metric, "std", _std(v)))
                out.append((scheme, metric, "count", float(v.size)))
            if self.baseline is not None and "ipc_total" in self.metrics(scheme):
                out.append((scheme, "ipc_total", "ratio_of_means", self.ratio_of_means(scheme)))
        return out

    def rows_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scheme", "seed", "metric", "value"])
        for r in self.rows:
            w.writerow([r.scheme, r.seed, r.metric, repr(float(r.value))])
        return buf.getvalue()

    def aggregates_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["scheme", "metric", "statistic", "value"])
        for scheme, metric, stat, value in self.aggregates():
            w.writerow([scheme, metric, stat, repr(float(value))])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, rows_text: str, aggregates_text: str | None = None, baseline: str | None = None, rtol: float = 1e-12):
        """Parse a rows CSV and, if given, check the aggregates CSV against it."""
        rd = csv.DictReader(io.StringIO(rows_text))
        rows = [ResultRow(r["scheme"], int(r["seed"]), r["metric"], float(r["value"])) for r in rd]
        table = cls(rows, baseline)
        if aggregates_text is not None:
            stored = list(csv.DictReader(io.StringIO(aggregates_text)))
            fresh = table.aggregates()
            if len(stored) != len(fresh):
                raise ValueError("aggregate table does not match its rows")
            for s, (scheme, metric, stat, value) in zip(stored, fresh):
                if (s["scheme"], s["metric"], s["statistic"]) != (scheme, metric, stat):
                    raise ValueError(f"aggregate row {s} out of order")
                if not np.isclose(float(s["value"]), value, rtol=rtol, atol=0.0):
                    raise ValueError(f"aggregate {scheme}/{metric}/{stat} = {s['value']} disagrees with rows ({value})")
        return table


# --- realizations and features ----------------------------------------------


@dataclass
class Realization:
    index: int
    seed: int
    trajectory: Trajectory


def task_length(task) -> int:
    return task.length


def realize(config: ExperimentConfig, index: int) -> Realization:
    seed = config.base_seed + index
    rng = RngStream(seed)
    res_cfg = replace(config.reservoir, seed=seed)
    instance = init_reservoir(res_cfg, rng.child(0))
    inputs = gen_inputs(task_length(config.task), rng.child(1))
    with np.errstate(over="ignore", invalid="ignore"):
        traj = run_trajectory(instance, inputs)
    if not np.all(np.isfinite(traj.sigma_out)):
        raise NumericalFailure(seed, None, "output covariance is not finite (unstable reservoir)")
    return Realization(index, seed, traj)


class FeatureCache:
    """Per-step node blocks of one realization, shared across schemes.

    Blocks are keyed by ensemble size and feature family, so schemes that
    differ only in memory depth or in which families they combine reuse the
    same arrays (and the same noise draws).
    """

    def __init__(self, realization: Realization):
        self.realization = realization
        self.rng = RngStream(realization.seed)
        self._sx: dict = {}
        self._blocks: dict = {}

    def sigma_x(self, M: int | None) -> np.ndarray:
        if M not in self._sx:
            sx = x_submatrix(self.realization.trajectory.sigma_out)
            if M is not None:
                steps = np.arange(sx.shape[0])
                sx = noisy_x_stack(sx, M, self.rng.child(2, M), steps)
            self._sx[M] = sx
        return self._sx[M]

    def _block(self, key, fn):
        if key not in self._blocks:
            self._blocks[key] = fn()
        return self._blocks[key]

    def nodes(self, scheme: FeatureScheme) -> np.ndarray:
        M = scheme.ensemble
        parts = []
        if scheme.include_cov:
            parts.append(self._block((M, "cov"), lambda: cov_features(self.sigma_x(M))))
        if scheme.uv_points:
            key = (M, "uv", scheme.uv_points)
            parts.append(self._block(key, lambda: uv_cdf_features(self.sigma_x(M), scheme.uv_points)))
        if scheme.bv_grid:
            key = (M, "bv", scheme.bv_grid)
            parts.append(self._block(key, lambda: bv_cdf_features(self.sigma_x(M), scheme.bv_grid)))
        return np.concatenate(parts, axis=1)

    def matrix(self, scheme: FeatureScheme, start: int, stop: int) -> np.ndarray:
        return lag_stack(self.nodes(scheme), scheme.memory_depth, start, stop)


def _guard(seed: int, label: str, fn):
    try:
        out = fn()
    except (np.linalg.LinAlgError, FloatingPointError, ValueError) as exc:
        raise NumericalFailure(seed, label, str(exc)) from exc
    vals = out.per_degree if isinstance(out, IPCReport) else out
    if not np.all(np.isfinite(vals)):
        raise NumericalFailure(seed, label, "non-finite result")
    return out


# --- per-realization work ----------------------------------------------------


def _narma_realization(config: ExperimentConfig, index: int) -> list[ResultRow]:
    task: NarmaTask = config.task
    real = realize(config, index)
    cache = FeatureCache(real)
    start, mid, stop = task.washout, task.washout + task.train, task.length
    s = real.trajectory.inputs
    targets = {}
    for n in task.orders:
        targets[n] = _guard(real.seed, f"NARMA{n}", lambda: narma_target(s, task.params(n))[start:stop])
    rows = []
    for scheme in config.schemes:

        def work():
            O = cache.matrix(scheme, start, stop)
            trainer = Trainer(O[: mid - start])
            Y = np.column_stack([targets[n] for n in task.orders])
            W = trainer.fit(Y[: mid - start]).weights
            return nmse(Y[mid - start :], O[mid - start :] @ W)

        errs = _guard(real.seed, scheme.label, work)
        for n, e in zip(task.orders, np.atleast_1d(errs)):
            rows.append(ResultRow(scheme.label, real.seed, f"nmse_n{n}", float(e)))
            rows.append(ResultRow(scheme.label, real.seed, f"capacity_n{n}", float(max(0.0, 1.0 - e))))
    return rows


def _ipc_realization(config: ExperimentConfig, index: int):
    task: IPCConfig = config.task
    real = realize(config, index)
    cache = FeatureCache(real)
    start, mid, stop = task.washout, task.washout + task.train, task.length
    rows, reports = [], {}
    for scheme in config.schemes:
        equal_only = task.equal_delays_only
        if equal_only is None:
            equal_only = not scheme.has_cdf

        def work():
            O = cache.matrix(scheme, start, stop)
            k = mid - start
            return ipc_from_features(O[:k], O[k:], real.trajectory.inputs, start, task, equal_only)

        rep: IPCReport = _guard(real.seed, scheme.label, work)
        rows.append(ResultRow(scheme.label, real.seed, "ipc_total", rep.total))
        for d, c in enumerate(rep.per_degree, start=1):
            rows.append(ResultRow(scheme.label, real.seed, f"ipc_degree_{d}", float(c)))
        rows.append(ResultRow(scheme.label, real.seed, "rank", float(rep.rank)))
        rows.append(ResultRow(scheme.label, real.seed, "n_columns", float(rep.n_columns)))
        reports[f"{real.seed}/{scheme.label}"] = rep.to_dict()
    return rows, reports


def _check(config: ExperimentConfig, kind: str) -> None:
    if config.task_kind != kind:
        raise ConfigError(f"config task kind is {config.task_kind!r}, this runner needs {kind!r}")
    task = config.task
    P = max(s.memory_depth for s in config.schemes)
    if task.washout < P:
        raise ConfigError(f"washout {task.washout} is shorter than the largest memory depth {P}")
    n_modes = config.reservoir.n_modes
    for s in config.schemes:
        if s.ensemble is not None and s.ensemble < n_modes:
            raise ConfigError(f"scheme {s.label!r}: ensemble size {s.ensemble} below the number of modes {n_modes}")
        if s.bv_grid and n_modes < 2:
            raise ConfigError(f"scheme {s.label!r}: bivariate CDF nodes need at least two modes")


def _map(fn, config: ExperimentConfig, workers: int):
    idx = range(config.realizations)
    if workers <= 1 or config.realizations == 1:
        return [fn(config, i) for i in idx]
    with ProcessPoolExecutor(max_workers=min(workers, config.realizations)) as pool:
        # map preserves submission order, so rows commit deterministically
        return list(pool.map(fn, [config] * len(idx), idx))


def default_baseline(config: ExperimentConfig) -> str | None:
    if config.baseline is not None:
        return config.baseline
    for s in config.schemes:
        if s.include_cov and not s.has_cdf and s.memory_depth == 0 and s.ensemble is None:
            return s.label
    return None


def run_narma(config: ExperimentConfig, workers: int | None = None) -> ResultTable:
    """NMSE and capacity per realization, scheme and NARMA order."""
    _check(config, "narma")
    results = _map(_narma_realization, config, workers or config.workers)
    return ResultTable([r for rows in results for r in rows])


def run_ipc(config: ExperimentConfig, workers: int | None = None) -> ResultTable:
    """Total and per-degree IPC per realization and scheme.

    When a baseline scheme exists (explicit or the first ideal cov-only
    scheme without memory) each realization also gets an ``ipc_ratio`` row
    against the baseline of the same seed.
    """
    _check(config, "ipc")
    results = _map(_ipc_realization, config, workers or config.workers)
    rows = [r for rs, _ in results for r in rs]
    reports = {k: v for _, reps in results for k, v in reps.items()}
    baseline = default_baseline(config)
    if baseline is not None:
        base = {r.seed: r.value for r in rows if r.scheme == baseline and r.metric == "ipc_total"}
        ratios = [
            ResultRow(r.scheme, r.seed, "ipc_ratio", r.value / base[r.seed])
            for r in rows
            if r.metric == "ipc_total"
        ]
        rows = _interleave(rows, ratios)
    return ResultTable(rows, baseline, reports)


def _interleave(rows: list[ResultRow], ratios: list[ResultRow]) -> list[ResultRow]:
    extra = {(r.scheme, r.seed): r for r in ratios}
    out = []
    for r in rows:
        out.append(r)
        if r.metric == "ipc_total":
            out.append(extra[(r.scheme, r.seed)])
    return out


def _value_tag(v) -> str:
    return "inf" if v is None else str(v)


def expand_sweep(config: ExperimentConfig, spec: SweepSpec | None = None) -> ExperimentConfig:
    """Replace the scheme list by the sweep cells.

    For ``ensemble`` and ``memory_depth`` every configured scheme is crossed
    with every value and relabelled ``<label>@<axis>=<value>``; ``scheme``
    keeps the listed schemes in the listed order.
    """
    spec = spec or config.sweep
    if spec is None:
        raise ConfigError("config has no 'sweep' block")
    if spec.axis == "scheme":
        by_label = {s.label: s for s in config.schemes}
        missing = [v for v in spec.values if v not in by_label]
        if missing:
            raise ConfigError(f"sweep refers to unknown scheme labels {missing}")
        schemes = tuple(by_label[v] for v in spec.values)
        baseline = config.baseline if config.baseline in spec.values else None
    else:
        schemes = tuple(
            replace(s, **{spec.axis: v}, label=f"{s.label}@{spec.axis}={_value_tag(v)}")
            for s in config.schemes
            for v in spec.values
        )
        baseline = None
        if config.baseline is not None:
            # keep the reference in the sweep if it sits at one of the values
            cands = [s.label for s in schemes if s.label.startswith(config.baseline + "@")]
            baseline = cands[0] if cands else None
    return replace(config, schemes=schemes, baseline=baseline, sweep=spec)


def sweep(config: ExperimentConfig, workers: int | None = None) -> ResultTable:
    """Run the configured task over every sweep cell on shared realizations."""
    cfg = expand_sweep(config)
    return run_ipc(cfg, workers) if cfg.task_kind == "ipc" else run_narma(cfg, workers)


# --- output ------------------------------------------------------------------


def _dump(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def metadata(config: ExperimentConfig, kind: str) -> dict:
    return {
        "command": kind,
        "package_version": __version__,
        "versions": {"python": platform.python_version(), "numpy": np.__version__, "scipy": scipy.__version__},
        "rng_algorithm": RNG_ALGORITHM,
        "seeds": [config.base_seed + r for r in range(config.realizations)],
        "config_sha256": config.digest(),
        "config": config.to_dict(),
    }


def write_results(table: ResultTable, config: ExperimentConfig, out_dir, kind: str) -> list[Path]:
    """Write ``results.csv``, ``aggregates.csv``, ``metadata.json`` and, for IPC, ``reports.json``.

    The files carry no wall-clock information, so repeated runs of the same
    config are byte-identical.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = {
        "results.csv": table.rows_csv(),
        "aggregates.csv": table.aggregates_csv(),
        "metadata.json": _dump({**metadata(config, kind), "baseline": table.baseline}),
    }
    if table.reports:
        files["reports.json"] = _dump(table.reports)
    paths = []
    for name, text in files.items():
        p = out / name
        p.write_text(text)
        paths.append(p)
    return paths
