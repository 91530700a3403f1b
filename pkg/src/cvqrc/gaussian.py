"""Zero-mean Gaussian states and symplectic maps.

Quadratures are ordered ``x1, p1, x2, p2, ...`` with ``x = a^dag + a`` and
``p = i(a^dag - a)``, so the vacuum covariance is the identity and
``[x, p] = 2i``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .numerics import matrix_exp

__all__ = [
    "HamiltonianSpec",
    "symplectic_form",
    "x_indices",
    "p_indices",
    "squeezed_vacuum_cov",
    "direct_sum",
    "hamiltonian_matrix",
    "propagator",
    "beam_splitter",
    "step_symplectic",
    "evolve",
    "is_symplectic",
    "symplectic_residual",
    "is_valid_covariance",
]


def symplectic_form(n_modes: int) -> np.ndarray:
    """Block-diagonal Omega with ``[[0, 2], [-2, 0]]`` per mode."""
    if n_modes < 1:
        raise ValueError("need at least one mode")
    return np.kron(np.eye(n_modes), np.array([[0.0, 2.0], [-2.0, 0.0]]))


def x_indices(n_modes: int) -> np.ndarray:
    return 2 * np.arange(n_modes)


def p_indices(n_modes: int) -> np.ndarray:
    return 2 * np.arange(n_modes) + 1


def squeezed_vacuum_cov(r: float, phi: float = 0.0, n_th: float = 0.0) -> np.ndarray:
    """Single-mode squeezed thermal state covariance."""
    if r < 0 or n_th < 0:
        raise ValueError("squeezing magnitude and thermal number must be nonnegative")
    # cosh(2r) I + sinh(2r) [[cos phi, sin phi], [sin phi, -cos phi]], written in its
    # eigenbasis so the anti-squeezed direction keeps full relative precision
    c, s = np.cos(phi / 2), np.sin(phi / 2)
    u = np.array([c, s])
    v = np.array([-s, c])
    return (2 * n_th + 1) * (np.exp(2 * r) * np.outer(u, u) + np.exp(-2 * r) * np.outer(v, v))


def direct_sum(*blocks: np.ndarray) -> np.ndarray:
    return sla.block_diag(*blocks)


@dataclass(frozen=True)
class HamiltonianSpec:
    """Quadratic crystal Hamiltonian.

    ``omegas`` are the free mode frequencies, ``g`` the beam-splitter-type and
    ``h`` the two-mode-squeezing-type couplings (symmetric, zero diagonal).
    """

    omegas: np.ndarray
    g: np.ndarray
    h: np.ndarray

    def __post_init__(self):
        omegas = np.atleast_1d(np.asarray(self.omegas, dtype=float))
        n = omegas.size
        for name in ("g", "h"):
            m = np.asarray(getattr(self, name), dtype=float)
            if m.shape != (n, n):
                raise ValueError(f"{name} must be {n}x{n}, got {m.shape}")
            if not np.allclose(m, m.T, atol=1e-14, rtol=0):
                raise ValueError(f"{name} coupling matrix is not symmetric")
            if np.any(np.diag(m) != 0):
                raise ValueError(f"{name} coupling matrix must have zero diagonal")
            object.__setattr__(self, name, m)
        if np.any(omegas <= 0):
            raise ValueError("mode frequencies must be positive")
        object.__setattr__(self, "omegas", omegas)

    @property
    def n_modes(self) -> int:
        return self.omegas.size


def hamiltonian_matrix(spec: HamiltonianSpec) -> np.ndarray:
    """Real symmetric ``M`` with ``H = x^T M x / 2`` (constants dropped).

    Substituting ``a_j = (x_j + i p_j)/2``:
    ``w (a^dag a + 1/2) -> w (x^2 + p^2)/4``,
    ``g (a_j^dag a_k + h.c.) -> g (x_j x_k + p_j p_k)/2`` and
    ``i h (a_j^dag a_k^dag - h.c.) -> h (x_j p_k + p_j x_k)/2``.
    """
    n = spec.n_modes
    xi, pi_ = x_indices(n), p_indices(n)
    M = np.zeros((2 * n, 2 * n))
    M[xi, xi] = spec.omegas / 2
    M[pi_, pi_] = spec.omegas / 2
    M[np.ix_(xi, xi)] += spec.g / 2
    M[np.ix_(pi_, pi_)] += spec.g / 2
    M[np.ix_(xi, pi_)] += spec.h / 2
    M[np.ix_(pi_, xi)] += spec.h / 2
    return M


def propagator(M: np.ndarray, dt: float) -> np.ndarray:
    """``exp(Omega M dt)``."""
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or M.shape[0] % 2:
        raise ValueError("M must be a square matrix of even size")
    if not np.allclose(M, M.T, atol=1e-12, rtol=0):
        raise ValueError("M must be symmetric")
    omega = symplectic_form(M.shape[0] // 2)
    return matrix_exp(omega @ M * dt)


def beam_splitter(n_modes: int, R: float) -> np.ndarray:
    """Register-mixing beam splitter on two ``n_modes`` registers.

    ``[[sqrt(R) I, sqrt(1-R) I], [-sqrt(1-R) I, sqrt(R) I]]``; the minus sign
    on the lower-left block makes the map orthogonal and hence symplectic.
    """
    if not 0.0 <= R <= 1.0:
        raise ValueError(f"reflectivity {R} outside [0, 1]")
    eye = np.eye(2 * n_modes)
    t = np.sqrt(1.0 - R)
    r = np.sqrt(R)
    return np.block([[r * eye, t * eye], [-t * eye, r * eye]])


def step_symplectic(S1: np.ndarray, S2: np.ndarray, R: float) -> np.ndarray:
    """Beam splitter followed by crystal ``S1`` on the first register and ``S2`` on the second."""
    S1 = np.asarray(S1, dtype=float)
    S2 = np.asarray(S2, dtype=float)
    if S1.shape != S2.shape or S1.ndim != 2 or S1.shape[0] % 2:
        raise ValueError("S1 and S2 must be square matrices of the same even size")
    n = S1.shape[0] // 2
    return sla.block_diag(S1, S2) @ beam_splitter(n, R)


def evolve(sigma: np.ndarray, S: np.ndarray) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    S = np.asarray(S, dtype=float)
    if S.shape[1] != sigma.shape[0] or sigma.shape[0] != sigma.shape[1]:
        raise ValueError(f"dimension mismatch: S {S.shape}, sigma {sigma.shape}")
    out = S @ sigma @ S.T
    return 0.5 * (out + out.T)


def symplectic_residual(S: np.ndarray) -> float:
    """``max |S Omega S^T - Omega|``."""
    omega = symplectic_form(S.shape[0] // 2)
    return float(np.max(np.abs(S @ omega @ S.T - omega)))


def is_symplectic(S: np.ndarray, tol: float = 1e-10) -> bool:
    return symplectic_residual(S) <= tol


def is_valid_covariance(sigma: np.ndarray, tol: float = 1e-9) -> bool:
    """Symmetric, positive definite and ``sigma + i Omega / 2 >= 0``.

    The factor 1/2 comes from ``[x, p] = 2i`` with the vacuum at the
    identity: the vacuum saturates the bound.
    """
    sigma = np.asarray(sigma, dtype=float)
    if sigma.ndim != 2 or sigma.shape[0] != sigma.shape[1] or sigma.shape[0] % 2:
        return False
    scale = max(1.0, float(np.max(np.abs(sigma))))
    if np.max(np.abs(sigma - sigma.T)) > 1e-12 * scale:
        return False
    if np.min(np.linalg.eigvalsh(sigma)) <= 0:
        return False
    omega = symplectic_form(sigma.shape[0] // 2)
    return bool(np.min(np.linalg.eigvalsh(sigma + 0.5j * omega)) >= -tol * scale)
