"""Computational nodes extracted from output-register covariances.

Per step the homodyne x-block of the output covariance yields

* the ``N(N+1)/2`` upper-triangle covariance entries,
* univariate CDF samples ``Phi(c_a / sqrt(var_i))`` per mode and threshold,
* bivariate CDF samples per mode pair (lexicographic) and grid point.

A row of the feature matrix is ``[1, nodes(k), nodes(k-1), ..., nodes(k-P)]``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np

from .numerics import RngStream, bivariate_normal_cdf, std_normal_cdf, wishart_sample
from .reservoir import Trajectory

__all__ = [
    "FeatureScheme",
    "FeatureMatrix",
    "default_uv_points",
    "default_bv_grid",
    "x_submatrix",
    "apply_ensemble_noise",
    "noisy_x_stack",
    "cov_features",
    "uv_cdf_features",
    "bv_cdf_features",
    "step_nodes",
    "node_names",
    "lag_stack",
    "assemble_feature_matrix",
    "homodyne_tally_features",
]


def default_uv_points(n: int = 10) -> tuple[float, ...]:
    return tuple(float(c) for c in np.linspace(0.1, 2.0, n))


def default_bv_grid(n: int = 9) -> tuple[tuple[float, float], ...]:
    """Square grid ``{0.1, 0.6, 1.1, ...}^2`` with ``n`` points (a perfect square)."""
    side = int(round(np.sqrt(n)))
    if side * side != n or side < 1:
        raise ValueError(f"bivariate grid size {n} is not a perfect square")
    axis = [round(0.1 + 0.5 * i, 10) for i in range(side)]
    return tuple((a, b) for a in axis for b in axis)


@dataclass(frozen=True)
class FeatureScheme:
    """Which nodes to read out per step.

    ``ensemble=None`` is the ideal infinite ensemble; an integer ``M`` draws
    one Wishart estimate per step and feeds it to every feature family.
    """

    include_cov: bool = True
    uv_points: tuple[float, ...] = ()
    bv_grid: tuple[tuple[float, float], ...] = ()
    memory_depth: int = 0
    ensemble: int | None = None
    label: str = ""

    def __post_init__(self):
        uv = tuple(float(c) for c in self.uv_points)
        if any(b <= a for a, b in zip(uv, uv[1:])):
            raise ValueError("uv_points must be strictly increasing")
        bv = tuple((float(a), float(b)) for a, b in self.bv_grid)
        if len(set(bv)) != len(bv):
            raise ValueError("bv_grid points must be distinct")
        if self.memory_depth < 0:
            raise ValueError("memory_depth must be nonnegative")
        if self.ensemble is not None and self.ensemble < 1:
            raise ValueError("ensemble size must be positive")
        if not (self.include_cov or uv or bv):
            raise ValueError("scheme selects no nodes")
        object.__setattr__(self, "uv_points", uv)
        object.__setattr__(self, "bv_grid", bv)
        if not self.label:
            object.__setattr__(self, "label", self.auto_label())

    def auto_label(self) -> str:
        parts = []
        if self.include_cov and not (self.uv_points or self.bv_grid):
            parts.append("cov")
        if self.uv_points:
            parts.append(f"UV-CDF{len(self.uv_points)}")
        if self.bv_grid:
            parts.append(f"BV-CDF{len(self.bv_grid)}")
        if not self.include_cov:
            parts.append("nocov")
        if self.memory_depth:
            parts.append(f"CM{self.memory_depth}")
        if self.ensemble is not None:
            parts.append(f"M{self.ensemble:g}")
        return "+".join(parts)

    @property
    def has_cdf(self) -> bool:
        return bool(self.uv_points or self.bv_grid)

    def nodes_per_step(self, n_modes: int) -> int:
        n = n_modes
        count = n * (n + 1) // 2 if self.include_cov else 0
        return count + n * len(self.uv_points) + n * (n - 1) // 2 * len(self.bv_grid)

    def n_columns(self, n_modes: int) -> int:
        return 1 + (self.memory_depth + 1) * self.nodes_per_step(n_modes)

    def to_dict(self) -> dict:
        return {
            "label": self.label,
            "include_cov": self.include_cov,
            "uv_points": list(self.uv_points),
            "bv_grid": [list(p) for p in self.bv_grid],
            "memory_depth": self.memory_depth,
            "ensemble": self.ensemble,
        }


@dataclass
class FeatureMatrix:
    values: np.ndarray
    columns: list[str]
    steps: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))

    @property
    def shape(self):
        return self.values.shape

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["step"] + self.columns)
            for k, row in zip(self.steps, self.values):
                w.writerow([int(k)] + [repr(float(v)) for v in row])


def x_submatrix(sigma_out: np.ndarray) -> np.ndarray:
    """x-quadrature block of one covariance or a stack of them."""
    return np.asarray(sigma_out)[..., 0::2, 0::2]


def apply_ensemble_noise(sigma_x: np.ndarray, scheme: FeatureScheme, rng: RngStream) -> np.ndarray:
    """Replace ``sigma_x`` by a finite-ensemble maximum-likelihood estimate."""
    if scheme.ensemble is None:
        return sigma_x
    return wishart_sample(sigma_x, scheme.ensemble, rng)


def noisy_x_stack(sigma_x: np.ndarray, M: int | None, rng: RngStream, step_indices: Sequence[int]) -> np.ndarray:
    """Apply finite-ensemble noise to a stack, one child stream per step index.

    The draw for step ``k`` comes from ``rng.child(k)``, so it does not depend
    on which window or how many steps are processed together.
    """
    if M is None:
        return sigma_x
    T, n, _ = sigma_x.shape
    if M < n:
        raise ValueError(f"ensemble size M={M} below number of modes {n}")
    dof = M - np.arange(n)
    rows, cols = np.tril_indices(n, -1)
    A = np.zeros((T, n, n))
    for t, k in enumerate(step_indices):
        child = rng.child(int(k))
        A[t, np.arange(n), np.arange(n)] = np.sqrt(2.0 * child.gamma(dof / 2.0))
        A[t, rows, cols] = child.normal(rows.size)
    L = np.linalg.cholesky(sigma_x)
    LA = L @ A
    W = LA @ np.swapaxes(LA, -1, -2) / M
    return 0.5 * (W + np.swapaxes(W, -1, -2))


def cov_features(sigma_x: np.ndarray) -> np.ndarray:
    """Upper triangle including the diagonal, row-major."""
    sigma_x = np.asarray(sigma_x)
    iu = np.triu_indices(sigma_x.shape[-1])
    return sigma_x[..., iu[0], iu[1]]


def _variances(sigma_x: np.ndarray) -> np.ndarray:
    var = np.diagonal(sigma_x, axis1=-2, axis2=-1)
    if np.any(var <= 0):
        raise ValueError("nonpositive quadrature variance")
    return var


def uv_cdf_features(sigma_x: np.ndarray, points: Sequence[float]) -> np.ndarray:
    """``Phi(c_a / sqrt(var_i))`` ordered mode-major, threshold-minor."""
    sigma_x = np.asarray(sigma_x, dtype=float)
    c = np.asarray(points, dtype=float)
    sd = np.sqrt(_variances(sigma_x))
    vals = std_normal_cdf(c[None, :] / sd[..., :, None])
    return vals.reshape(sigma_x.shape[:-2] + (-1,))


def bv_cdf_features(sigma_x: np.ndarray, grid: Sequence[tuple[float, float]]) -> np.ndarray:
    """Bivariate CDFs per mode pair ``i < j`` (lexicographic) and grid point."""
    sigma_x = np.asarray(sigma_x, dtype=float)
    n = sigma_x.shape[-1]
    g = np.asarray(grid, dtype=float).reshape(-1, 2)
    sd = np.sqrt(_variances(sigma_x))
    pairs = np.array(list(combinations(range(n), 2)), dtype=int).reshape(-1, 2)
    i, j = pairs[:, 0], pairs[:, 1]
    si, sj = sd[..., i], sd[..., j]
    rho = sigma_x[..., i, j] / (si * sj)
    if np.any(np.abs(rho) >= 1.0):
        raise ValueError("degenerate mode-pair covariance")
    h = g[:, 0] / si[..., :, None]
    k = g[:, 1] / sj[..., :, None]
    vals = bivariate_normal_cdf(h, k, rho[..., :, None])
    return vals.reshape(sigma_x.shape[:-2] + (-1,))


def step_nodes(sigma_x: np.ndarray, scheme: FeatureScheme) -> np.ndarray:
    """Per-step node vectors (no bias, no lags) for a stack ``(T, N, N)``."""
    blocks = []
    if scheme.include_cov:
        blocks.append(cov_features(sigma_x))
    if scheme.uv_points:
        blocks.append(uv_cdf_features(sigma_x, scheme.uv_points))
    if scheme.bv_grid:
        blocks.append(bv_cdf_features(sigma_x, scheme.bv_grid))
    return np.concatenate(blocks, axis=-1)


def node_names(scheme: FeatureScheme, n_modes: int) -> list[str]:
    names = []
    if scheme.include_cov:
        names += [f"cov[{i}][{j}]" for i in range(n_modes) for j in range(i, n_modes)]
    names += [f"uvcdf[{i}][{a}]" for i in range(n_modes) for a in range(len(scheme.uv_points))]
    names += [
        f"bvcdf[{i}][{j}][{a}]"
        for i, j in combinations(range(n_modes), 2)
        for a in range(len(scheme.bv_grid))
    ]
    return names


def lag_stack(nodes: np.ndarray, memory_depth: int, start: int, stop: int) -> np.ndarray:
    """Rows ``k`` in ``[start, stop)`` of ``[1, nodes[k], nodes[k-1], ..., nodes[k-P]]``.

    ``nodes`` is indexed by absolute step.
    """
    if start < memory_depth:
        raise ValueError(f"window start {start} leaves no room for {memory_depth} delayed steps")
    if stop > nodes.shape[0] or stop <= start:
        raise ValueError("window outside the available steps")
    T = stop - start
    out = np.empty((T, 1 + (memory_depth + 1) * nodes.shape[1]))
    out[:, 0] = 1.0
    w = nodes.shape[1]
    for lag in range(memory_depth + 1):
        out[:, 1 + lag * w : 1 + (lag + 1) * w] = nodes[start - lag : stop - lag]
    return out


def assemble_feature_matrix(
    records: Trajectory,
    scheme: FeatureScheme,
    window: tuple[int, int],
    rng: RngStream | None = None,
) -> FeatureMatrix:
    """Feature matrix for steps ``window[0] <= k < window[1]``.

    Columns: ``bias``, then for each lag ``0..P`` the per-step nodes in the
    order covariances, univariate CDF, bivariate CDF (see :func:`node_names`),
    each suffixed ``@lag<l>``.
    """
    start, stop = window
    P = scheme.memory_depth
    if start < P:
        raise ValueError(f"window start {start} < memory depth {P}")
    if stop > len(records) or stop <= start:
        raise ValueError("window outside the trajectory")
    if scheme.ensemble is not None and rng is None:
        raise ValueError("finite-ensemble scheme needs an rng")
    lo = start - P
    sx = x_submatrix(records.sigma_out[lo:stop])
    steps = np.arange(lo, stop) + records.start_index
    sx = noisy_x_stack(sx, scheme.ensemble, rng, steps) if scheme.ensemble is not None else sx
    nodes = step_nodes(sx, scheme)
    # re-index so that lag_stack sees absolute positions
    padded = np.empty((stop, nodes.shape[1]))
    padded[lo:stop] = nodes
    values = lag_stack(padded, P, start, stop)
    base = node_names(scheme, records.n_modes)
    cols = ["bias"] + [f"{name}@lag{lag}" for lag in range(P + 1) for name in base]
    return FeatureMatrix(values, cols, np.arange(start, stop) + records.start_index)


def homodyne_tally_features(
    sigma_x: np.ndarray,
    points: Sequence[float],
    grid: Sequence[tuple[float, float]],
    M: int,
    rng: RngStream,
) -> tuple[np.ndarray, np.ndarray]:
    """Outcome-level oracle: tally CDFs from ``M`` simulated homodyne records.

    Returns ``(uv, bv)`` in the same layout as :func:`uv_cdf_features` and
    :func:`bv_cdf_features` for a single ``(N, N)`` block.
    """
    sigma_x = np.asarray(sigma_x, dtype=float)
    n = sigma_x.shape[0]
    L = np.linalg.cholesky(sigma_x)
    X = rng.normal((M, n)) @ L.T
    c = np.asarray(points, dtype=float)
    uv = (X[:, :, None] <= c[None, None, :]).mean(axis=0).reshape(-1)
    g = np.asarray(grid, dtype=float).reshape(-1, 2)
    bv = []
    for i, j in combinations(range(n), 2):
        below = (X[:, i, None] <= g[None, :, 0]) & (X[:, j, None] <= g[None, :, 1])
        bv.append(below.mean(axis=0))
    bv = np.concatenate(bv) if bv else np.zeros(0)
    return uv, bv
