"""Special functions, samplers and matrix routines.

Everything here accepts numpy arrays where that makes sense; the scalar
contracts are the array contracts applied elementwise.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import pi

import numpy as np
from scipy import linalg as sla
from scipy import special

__all__ = [
    "RngStream",
    "erf",
    "std_normal_cdf",
    "bivariate_normal_cdf",
    "matrix_exp",
    "pseudoinverse",
    "normalized_legendre",
    "legendre_table",
    "wishart_sample",
    "DEFAULT_RCOND",
    "MAX_LEGENDRE_DEGREE",
]

DEFAULT_RCOND = 1e-12
MAX_LEGENDRE_DEGREE = 9

RNG_ALGORITHM = "numpy-philox4x64-seedsequence"


@dataclass
class RngStream:
    """Seeded random stream backed by numpy's counter-based Philox generator.

    Child streams are derived with :meth:`child`, which feeds the parent seed
    and the full key path into a ``SeedSequence`` as ``spawn_key``.  The child
    of ``RngStream(s)`` under keys ``(a, b)`` is therefore a pure function of
    ``(s, a, b)`` and independent of how many draws the parent has made.
    """

    seed: int
    key: tuple[int, ...] = ()
    algorithm: str = RNG_ALGORITHM
    generator: np.random.Generator = field(init=False, repr=False)

    def __post_init__(self) -> None:
        if self.algorithm != RNG_ALGORITHM:
            raise ValueError(f"unsupported rng algorithm {self.algorithm!r}")
        seed = int(self.seed)
        if not 0 <= seed < 2**64:
            raise ValueError("seed must be an unsigned 64-bit integer")
        ss = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in self.key))
        self.generator = np.random.Generator(np.random.Philox(ss))

    def child(self, *keys: int) -> "RngStream":
        return RngStream(self.seed, self.key + tuple(int(k) for k in keys))

    # thin pass-throughs so callers don't reach into .generator everywhere
    def uniform(self, low=0.0, high=1.0, size=None):
        return self.generator.uniform(low, high, size)

    def normal(self, size=None):
        return self.generator.standard_normal(size)

    def gamma(self, shape, size=None):
        return self.generator.standard_gamma(shape, size)

    def describe(self) -> dict:
        return {"seed": int(self.seed), "key": list(self.key), "algorithm": self.algorithm}


def erf(x):
    """Error function (delegates to the Cephes implementation in scipy)."""
    return special.erf(x)


def std_normal_cdf(z):
    """Standard normal CDF, ``0.5 * (1 + erf(z / sqrt(2)))``.

    Evaluated through ``erfc`` so that the lower tail keeps relative accuracy.
    """
    return 0.5 * special.erfc(-np.asarray(z, dtype=float) / np.sqrt(2.0))


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)
# nodes mapped to (0, 2); weights sum to 2
_GL_X = 1.0 + _GL_X


def _bvn_upper(h, k, r):
    """P(X > h, Y > k) for correlation ``r``; 1-d float arrays of equal shape.

    Genz's BVNU algorithm (Drezner-Wesolowsky integral in the arcsine
    variable for moderate |r|, asymptotic expansion plus quadrature in
    ``sqrt(1 - r^2)`` for |r| >= 0.925), always with 20 Gauss-Legendre nodes.
    """
    out = np.empty_like(h)
    tp = 2.0 * pi

    mid = np.abs(r) < 0.925
    if mid.any():
        hm, km, rm = h[mid], k[mid], r[mid]
        hk = hm * km
        hs = 0.5 * (hm * hm + km * km)
        asr = 0.5 * np.arcsin(rm)
        sn = np.sin(asr[:, None] * _GL_X[None, :])
        vals = np.exp((sn * hk[:, None] - hs[:, None]) / (1.0 - sn * sn)) @ _GL_W
        out[mid] = vals * asr / tp + std_normal_cdf(-hm) * std_normal_cdf(-km)

    hi = ~mid
    if hi.any():
        hh, kk, rr = h[hi], k[hi].copy(), r[hi]
        neg = rr < 0
        kk[neg] = -kk[neg]
        hk = hh * kk
        bvn = np.zeros_like(hh)
        inner = np.abs(rr) < 1.0
        if inner.any():
            hi_, ki, ri, hki = hh[inner], kk[inner], rr[inner], hk[inner]
            as_ = 1.0 - ri * ri
            a = np.sqrt(as_)
            bs = (hi_ - ki) ** 2
            c = (4.0 - hki) / 8.0
            d = (12.0 - hki) / 80.0
            asr = -(bs / as_ + hki) / 2.0
            b0 = np.where(
                asr > -100.0,
                a * np.exp(np.maximum(asr, -100.0)) * (1.0 - c * (bs - as_) * (1.0 - d * bs) / 3.0 + c * d * as_ * as_),
                0.0,
            )
            b = np.sqrt(bs)
            sp = np.sqrt(tp) * std_normal_cdf(-b / a)
            corr = np.exp(-np.minimum(hki, 200.0) / 2.0) * sp * b * (1.0 - c * bs * (1.0 - d * bs) / 3.0)
            b0 = np.where(hki > -100.0, b0 - corr, b0)
            a2 = a / 2.0
            xs = (a2[:, None] * _GL_X[None, :]) ** 2
            asr2 = -(bs[:, None] / xs + hki[:, None]) / 2.0
            ok = asr2 > -100.0
            sp2 = 1.0 + c[:, None] * xs * (1.0 + 5.0 * d[:, None] * xs)
            rs = np.sqrt(1.0 - xs)
            ep = np.exp(-(hki[:, None] / 2.0) * xs / (1.0 + rs) ** 2) / rs
            terms = np.where(ok, np.exp(np.maximum(asr2, -100.0)) * (sp2 - ep), 0.0)
            bvn[inner] = (a2 * (terms @ _GL_W) - b0) / tp
        pos = ~neg
        res = np.empty_like(hh)
        res[pos] = bvn[pos] + std_normal_cdf(-np.maximum(hh[pos], kk[pos]))
        # negative correlation: kk was already reflected
        hn, kn, bn = hh[neg], kk[neg], bvn[neg]
        lower = np.where(
            hn < 0,
            std_normal_cdf(kn) - std_normal_cdf(hn),
            std_normal_cdf(-hn) - std_normal_cdf(-kn),
        )
        res[neg] = np.where(hn >= kn, -bn, lower - bn)
        out[hi] = res
    return np.clip(out, 0.0, 1.0)


def bivariate_normal_cdf(h, k, rho):
    """P(X1 <= h, X2 <= k) for a standard bivariate normal with correlation ``rho``.

    Broadcasts over its arguments.  ``|rho| = 1`` is handled exactly through the
    comonotone / antimonotone limits; ``|rho|`` may exceed one by at most 1e-12
    of rounding slack before a ``ValueError`` is raised.
    """
    h, k, rho = np.broadcast_arrays(
        np.asarray(h, dtype=float), np.asarray(k, dtype=float), np.asarray(rho, dtype=float)
    )
    if np.any(np.abs(rho) > 1.0 + 1e-12):
        raise ValueError("correlation outside [-1, 1]")
    shape = h.shape
    h, k, r = h.ravel(), k.ravel(), np.clip(rho.ravel(), -1.0, 1.0)
    out = np.empty(h.shape)

    # Exactly degenerate correlations; the asymptotic branch already copes
    # with |r| -> 1 continuously, this only avoids 0/0 at the endpoint.
    plus = r == 1.0
    minus = r == -1.0
    out[plus] = np.minimum(std_normal_cdf(h[plus]), std_normal_cdf(k[plus]))
    out[minus] = np.maximum(std_normal_cdf(h[minus]) - std_normal_cdf(-k[minus]), 0.0)

    rest = ~(plus | minus)
    if rest.any():
        out[rest] = _bvn_upper(-h[rest], -k[rest], r[rest])
    out = out.reshape(shape)
    return out if shape else float(out)


def matrix_exp(A):
    """Matrix exponential (scipy's Pade scaling-and-squaring)."""
    A = np.asarray(A, dtype=float)
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix_exp needs a square matrix, got shape {A.shape}")
    return sla.expm(A)


def pseudoinverse(A, rcond: float = DEFAULT_RCOND, return_rank: bool = False):
    """Moore-Penrose pseudoinverse via SVD.

    Singular values at or below ``rcond * s_max`` are treated as zero; with
    ``return_rank`` the number of kept singular values is returned too.
    """
    A = np.asarray(A, dtype=float)
    if not 0.0 < rcond < 1.0:
        raise ValueError("rcond must lie in (0, 1)")
    if A.size == 0:
        out = np.zeros(A.shape[::-1])
        return (out, 0) if return_rank else out
    if not np.all(np.isfinite(A)):
        raise np.linalg.LinAlgError("pseudoinverse of a matrix with non-finite entries")
    u, s, vt = np.linalg.svd(A, full_matrices=False)
    keep = s > rcond * s[0]
    inv = np.zeros_like(s)
    inv[keep] = 1.0 / s[keep]
    out = (vt.T * inv) @ u.T
    return (out, int(keep.sum())) if return_rank else out


def legendre_table(s, max_degree: int = MAX_LEGENDRE_DEGREE):
    """Rows ``d = 0..max_degree`` of ``sqrt(2d+1) * P_d(s)`` via the three-term recurrence."""
    s = np.asarray(s, dtype=float)
    if max_degree < 0:
        raise ValueError("max_degree must be nonnegative")
    p = np.empty((max_degree + 1,) + s.shape)
    p[0] = 1.0
    if max_degree >= 1:
        p[1] = s
    for d in range(1, max_degree):
        # (d+1) P_{d+1} = (2d+1) s P_d - d P_{d-1}
        p[d + 1] = ((2 * d + 1) * s * p[d] - d * p[d - 1]) / (d + 1)
    norms = np.sqrt(2.0 * np.arange(max_degree + 1) + 1.0)
    return p * norms.reshape((-1,) + (1,) * s.ndim)


def normalized_legendre(d: int, s, max_degree: int = MAX_LEGENDRE_DEGREE):
    """``sqrt(2d+1) * P_d(s)``: orthonormal under the uniform law on [-1, 1]."""
    if not 0 <= d <= max_degree:
        raise ValueError(f"degree {d} outside [0, {max_degree}]")
    s_arr = np.asarray(s, dtype=float)
    if np.any(np.abs(s_arr) > 1.0):
        raise ValueError("argument outside [-1, 1]")
    val = legendre_table(s_arr, d)[d]
    return val if s_arr.ndim else float(val)


def wishart_sample(sigma, M: int, rng: RngStream, size: int | None = None):
    """Draw ``W / M`` with ``W ~ Wishart(sigma, M)`` by the Bartlett decomposition.

    ``sigma`` may be a single ``(n, n)`` matrix or a stack ``(T, n, n)``; a stack
    gets one independent draw per entry.  ``size`` adds a leading axis of
    repeated draws for a single matrix.

    The Bartlett factor ``A`` is lower triangular with ``A_ii^2 ~ chi^2(M - i)``
    (``i`` zero-based) and standard normal entries below the diagonal; the
    chi-square variates come from the gamma sampler so huge ``M`` is fine.
    """
    sigma = np.asarray(sigma, dtype=float)
    single = sigma.ndim == 2
    if single:
        stack = sigma[None] if size is None else np.broadcast_to(sigma, (size,) + sigma.shape)
    else:
        if size is not None:
            raise ValueError("size only applies to a single matrix")
        stack = sigma
    n = stack.shape[-1]
    if stack.shape[-2] != n:
        raise ValueError("sigma must be square")
    M = int(M)
    if M < n:
        raise ValueError(f"ensemble size M={M} below dimension n={n}")
    try:
        L = np.linalg.cholesky(stack)
    except np.linalg.LinAlgError as exc:
        raise ValueError("sigma is not positive definite") from exc

    T = stack.shape[0]
    dof = M - np.arange(n)
    A = np.zeros((T, n, n))
    diag = np.sqrt(2.0 * rng.gamma(np.broadcast_to(dof / 2.0, (T, n))))
    A[:, np.arange(n), np.arange(n)] = diag
    rows, cols = np.tril_indices(n, -1)
    if rows.size:
        A[:, rows, cols] = rng.normal((T, rows.size))
    LA = L @ A
    W = LA @ np.swapaxes(LA, -1, -2) / M
    W = 0.5 * (W + np.swapaxes(W, -1, -2))
    if single and size is None:
        return W[0]
    return W
