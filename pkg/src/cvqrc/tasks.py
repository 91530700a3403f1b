"""Benchmark tasks: inputs, NARMA targets, Legendre products and IPC."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from itertools import combinations_with_replacement
from typing import Iterator, Sequence

import numpy as np

from .features import FeatureScheme, assemble_feature_matrix
from .numerics import MAX_LEGENDRE_DEGREE, RngStream, legendre_table
from .readout import Trainer, capacity, nmse
from .reservoir import Trajectory

__all__ = [
    "NarmaParams",
    "IPCConfig",
    "IPCReport",
    "gen_inputs",
    "narma_target",
    "legendre_target",
    "enumerate_delay_lists",
    "ipc_from_features",
    "compute_ipc",
]


def gen_inputs(length: int, rng: RngStream) -> np.ndarray:
    """i.i.d. uniform inputs on [-1, 1]."""
    if length <= 0:
        raise ValueError("length must be positive")
    return rng.uniform(-1.0, 1.0, size=int(length))


@dataclass(frozen=True)
class NarmaParams:
    n: int
    alpha: float = 0.3
    beta: float = 0.05
    gamma: float = 0.0375
    delta: float = 0.0
    form: str = "product"

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("NARMA order must be at least 1")
        if self.form not in ("product", "linear"):
            raise ValueError(f"unknown NARMA form {self.form!r}")


def narma_target(s: Sequence[float], params: NarmaParams) -> np.ndarray:
    """NARMA-n target aligned with the feature rows.

    Runs ``y[k+1] = a y[k] + b y[k] sum_{t<n} y[k-t] + g s[k-n+1] s[k] + d``
    with ``y[k] = 0`` for ``k < n`` and returns ``out[k] = y[k+1]``, which
    only depends on inputs up to step ``k``.  Entries with ``k < n - 1`` are
    zero.  ``form="linear"`` drops the ``y[k]`` factor in the moving-average
    term; that variant diverges for n around 15 at the default coefficients.
    """
    s = np.asarray(s, dtype=float)
    n = params.n
    T = s.size
    if T <= n:
        raise ValueError(f"sequence of length {T} too short for NARMA{n}")
    a, b, g, d = params.alpha, params.beta, params.gamma, params.delta
    product = params.form == "product"
    y = np.zeros(T + 1)
    window = 0.0  # running sum of y[k-n+1..k]
    for k in range(T):
        if k >= n - 1:
            ma = y[k] * window if product else window
            y[k + 1] = a * y[k] + b * ma + g * s[k - n + 1] * s[k] + d
        window += y[k + 1] - (y[k + 1 - n] if k + 1 - n >= 0 else 0.0)
    if not np.all(np.isfinite(y)):
        raise FloatingPointError(f"NARMA{n} recursion diverged")
    return y[1:]


def _multiplicities(delays: Sequence[int]) -> list[tuple[int, int]]:
    return sorted(Counter(int(t) for t in delays).items())


def legendre_target(delays: Sequence[int], s: Sequence[float], table: np.ndarray | None = None) -> np.ndarray:
    """Product over distinct delays ``tau`` of ``P_{m(tau)}(s[k - tau])``.

    Entries ``k < max(delays)`` lack history and are returned as NaN.
    """
    s = np.asarray(s, dtype=float)
    mult = _multiplicities(delays)
    if not mult:
        raise ValueError("empty delay list")
    if table is None:
        table = legendre_table(s, max(m for _, m in mult))
    tmax = mult[-1][0]
    if tmax >= s.size:
        raise ValueError("not enough input history for the requested delays")
    out = np.full(s.size, np.nan)
    prod = np.ones(s.size - tmax)
    for tau, m in mult:
        prod *= table[m, tmax - tau : s.size - tau]
    out[tmax:] = prod
    return out


def enumerate_delay_lists(degree: int, tau_max: int, equal_only: bool = False) -> Iterator[tuple[int, ...]]:
    """Non-decreasing delay lists of length ``degree`` with entries in ``[0, tau_max]``.

    Lists come grouped by their largest delay (ascending) and in
    lexicographic order inside a group.
    """
    if degree < 1:
        raise ValueError("degree must be at least 1")
    for top in range(tau_max + 1):
        if equal_only:
            yield (top,) * degree
            continue
        for head in combinations_with_replacement(range(top + 1), degree - 1):
            yield head + (top,)


@dataclass(frozen=True)
class IPCConfig:
    d_max: int = 9
    tau_max: int = 75
    threshold: float = 1e-7
    patience: int = 100
    washout: int = 500
    train: int = 8000
    test: int = 2000
    equal_delays_only: bool | None = None  # None: decided by the scheme (True without CDF nodes)

    def __post_init__(self):
        if min(self.d_max, self.patience, self.train, self.test) < 1 or self.tau_max < 0:
            raise ValueError("IPC settings must be positive")
        if not 1 <= self.d_max <= MAX_LEGENDRE_DEGREE:
            raise ValueError(f"d_max must lie in [1, {MAX_LEGENDRE_DEGREE}]")
        if self.threshold < 0:
            raise ValueError("threshold must be nonnegative")
        if self.washout < self.tau_max:
            raise ValueError("washout must cover tau_max steps of history")

    @property
    def length(self) -> int:
        return self.washout + self.train + self.test

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class IPCReport:
    per_degree: np.ndarray
    task_log: list[tuple[tuple[int, ...], float]] = field(default_factory=list)
    evaluated: list[int] = field(default_factory=list)
    n_columns: int = 0
    rank: int = 0

    @property
    def total(self) -> float:
        return float(np.sum(self.per_degree))

    def to_dict(self) -> dict:
        return {
            "total": self.total,
            "per_degree": {str(d + 1): float(c) for d, c in enumerate(self.per_degree)},
            "evaluated_per_degree": {str(d + 1): int(c) for d, c in enumerate(self.evaluated)},
            "n_columns": int(self.n_columns),
            "rank": int(self.rank),
            "tasks": [{"delays": list(t), "capacity": float(c)} for t, c in self.task_log],
        }


def ipc_from_features(
    O_train: np.ndarray,
    O_test: np.ndarray,
    inputs: np.ndarray,
    train_start: int,
    config: IPCConfig,
    equal_only: bool = False,
    rcond: float | None = None,
) -> IPCReport:
    """IPC enumeration given feature matrices.

    ``O_train`` covers steps ``train_start .. train_start+len-1`` and
    ``O_test`` the steps right after; ``inputs`` is the full input sequence
    indexed by absolute step.
    """
    n_tr, n_te = O_train.shape[0], O_test.shape[0]
    if train_start < config.tau_max:
        raise ValueError("not enough wash-out history for tau_max")
    if train_start + n_tr + n_te > inputs.size:
        raise ValueError("feature windows exceed the input sequence")
    trainer = Trainer(O_train) if rcond is None else Trainer(O_train, rcond)
    table = legendre_table(inputs, config.d_max)
    lo, hi = train_start, train_start + n_tr + n_te

    def targets(batch):
        Y = np.empty((hi - lo, len(batch)))
        for c, delays in enumerate(batch):
            col = np.ones(hi - lo)
            for tau, m in _multiplicities(delays):
                col *= table[m, lo - tau : hi - tau]
            Y[:, c] = col
        return Y

    per_degree = np.zeros(config.d_max)
    log: list[tuple[tuple[int, ...], float]] = []
    evaluated = []
    for degree in range(1, config.d_max + 1):
        stream = enumerate_delay_lists(degree, config.tau_max, equal_only)
        misses = 0
        count = 0
        batch_size = 16
        done = False
        while not done:
            batch = [t for _, t in zip(range(batch_size), stream)]
            if not batch:
                break
            Y = targets(batch)
            W = trainer.fit(Y[:n_tr]).weights
            caps = capacity(nmse(Y[n_tr:], O_test @ W))
            for delays, cap in zip(batch, np.atleast_1d(caps)):
                count += 1
                if cap > config.threshold:
                    per_degree[degree - 1] += cap
                    log.append((delays, float(cap)))
                    misses = 0
                else:
                    misses += 1
                    if misses >= config.patience:
                        done = True
                        break
            batch_size = min(2 * batch_size, 512)
        evaluated.append(count)
    return IPCReport(per_degree, log, evaluated, O_train.shape[1], trainer.rank)


def compute_ipc(
    records: Trajectory,
    scheme: FeatureScheme,
    config: IPCConfig,
    rng: RngStream | None = None,
) -> IPCReport:
    """Full IPC estimate of one trajectory under one feature scheme."""
    if len(records) < config.length:
        raise ValueError(f"trajectory has {len(records)} steps, IPC needs {config.length}")
    if config.washout < max(config.tau_max, scheme.memory_depth):
        raise ValueError("wash-out shorter than the delays it must cover")
    start = config.washout
    mid = start + config.train
    stop = mid + config.test
    O = assemble_feature_matrix(records, scheme, (start, stop), rng).values
    equal_only = config.equal_delays_only
    if equal_only is None:
        equal_only = not scheme.has_cdf
    return ipc_from_features(O[: config.train], O[config.train :], records.inputs, start, config, equal_only)
