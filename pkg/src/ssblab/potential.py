"""Two-parameter O(D) quartic potential with a learning-rate-dependent mass.

V(w) = m^2/2 |w|^2 + lambda/4 |w|^4 with m^2 = -mu^2 + lambda*eta^2/4.
Below the critical learning rate eta_c = 2*mu/sqrt(lambda) the mass term
turns negative and the minimum moves from the origin onto the sphere
|w| = sqrt(-m^2/lambda), breaking O(D) down to O(D-1). The radial
(sigma) curvature at the minimum is -2 m^2; the D-1 tangential (pi)
directions are flat at zero temperature.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import null_space


class UnbrokenPhaseError(ValueError):
    """Operation requires the broken phase (m^2 < 0)."""


@dataclass(frozen=True)
class PotentialParams:
    """Potential couplings: mu_sq > 0, lam > 0, learning rate eta >= 0, dim >= 1."""

    mu_sq: float
    lam: float
    eta: float
    dim: int

    def __post_init__(self):
        if not (self.mu_sq > 0.0 and np.isfinite(self.mu_sq)):
            raise ValueError("mu_sq must be positive and finite")
        if not (self.lam > 0.0 and np.isfinite(self.lam)):
            raise ValueError("lam must be positive and finite")
        if not (self.eta >= 0.0 and np.isfinite(self.eta)):
            raise ValueError("eta must be nonnegative and finite")
        if self.dim < 1:
            raise ValueError("dim must be >= 1")

    @classmethod
    def from_mass_sq(cls, m_sq: float, lam: float, dim: int, eta: float | None = None):
        """Params realizing a target m^2 through the thermal-mass relation."""
        if m_sq < 0.0:
            return cls(mu_sq=-m_sq, lam=lam, eta=0.0, dim=dim)
        if eta is not None:
            mu_sq = 0.25 * lam * eta * eta - m_sq
            if mu_sq <= 0.0:
                raise ValueError("requested (m_sq, eta) needs mu_sq <= 0")
            return cls(mu_sq=mu_sq, lam=lam, eta=eta, dim=dim)
        return cls(mu_sq=1.0, lam=lam, eta=2.0 * np.sqrt((m_sq + 1.0) / lam), dim=dim)


@dataclass
class SSBDecomposition:
    """Radial/tangential split of fluctuations around a broken-phase minimum."""

    vev: float
    sigma_mode: np.ndarray
    pi_modes: np.ndarray  # (dim-1, dim), orthonormal rows
    mass_sigma_sq: float
    mass_pi_sq: float


@dataclass
class MinimizeResult:
    w_min: np.ndarray
    iters: int
    converged: bool
    grad_inf_norm: float
    saddle: bool = False


def mass_squared(p: PotentialParams) -> float:
    """Thermal mass m^2(eta) = -mu^2 + lambda*eta^2/4."""
    return -p.mu_sq + 0.25 * p.lam * p.eta * p.eta


def critical_eta(p: PotentialParams) -> float:
    """Learning rate where m^2 crosses zero: 2*mu/sqrt(lambda)."""
    return 2.0 * np.sqrt(p.mu_sq / p.lam)


def _check_dim(p: PotentialParams, w: np.ndarray):
    if w.shape != (p.dim,):
        raise ValueError(f"field of shape {w.shape} for dim={p.dim} potential")


def potential_value(p: PotentialParams, w) -> float:
    w = np.asarray(w, dtype=float)
    _check_dim(p, w)
    r2 = float(w @ w)
    return 0.5 * mass_squared(p) * r2 + 0.25 * p.lam * r2 * r2


def potential_gradient(p: PotentialParams, w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    _check_dim(p, w)
    return (mass_squared(p) + p.lam * float(w @ w)) * w


def potential_hessian(p: PotentialParams, w) -> np.ndarray:
    """(m^2 + lambda |w|^2) I + 2 lambda w w^T (exact second derivative)."""
    w = np.asarray(w, dtype=float)
    _check_dim(p, w)
    r2 = float(w @ w)
    return (mass_squared(p) + p.lam * r2) * np.eye(p.dim) + 2.0 * p.lam * np.outer(w, w)


def minimizer_norm(p: PotentialParams) -> float:
    """Norm of the global minimizer: 0 for m^2 >= 0, else sqrt(-m^2/lambda)."""
    m_sq = mass_squared(p)
    if m_sq >= 0.0:
        return 0.0
    return float(np.sqrt(-m_sq / p.lam))


def vev(p: PotentialParams) -> float:
    return minimizer_norm(p)


def default_step(p: PotentialParams) -> float:
    """Conservative fixed gradient-descent step, 0.1 / (|m^2| + 3 lambda v^2)."""
    m_sq = mass_squared(p)
    curv = abs(m_sq) + 3.0 * p.lam * minimizer_norm(p) ** 2
    if curv == 0.0:
        curv = p.lam  # critical point: quartic-only scale
    return 0.1 / curv

def numeric_minimize(
    p: PotentialParams,
    w0,
    step: float | None = None,
    max_iters: int = 100_000,
    gtol: float = 1e-10,
) -> MinimizeResult:
    """Plain fixed-step gradient descent on the potential.

    Converges when the sup norm of the gradient drops below `gtol`.
    Starting exactly at the origin in the broken phase is a stationary
    saddle; the point is returned unchanged with `saddle` set.
    """
    w = np.asarray(w0, dtype=float).copy()
    _check_dim(p, w)
    if not np.all(np.isfinite(w)):
        raise ValueError("w0 must be finite")
    if step is None:
        step = default_step(p)
    if step <= 0.0:
        raise ValueError("step must be positive")

    saddle = mass_squared(p) < 0.0 and np.all(w == 0.0)
    g = potential_gradient(p, w)
    gnorm = float(np.max(np.abs(g))) if p.dim else 0.0
    iters = 0
    while gnorm > gtol and iters < max_iters:
        w -= step * g
        g = potential_gradient(p, w)
        gnorm = float(np.max(np.abs(g)))
        iters += 1
    return MinimizeResult(w, iters, gnorm <= gtol, gnorm, saddle)


def decompose(p: PotentialParams, w_min, norm_tol: float = 1e-4) -> SSBDecomposition:
    """Split directions at a broken-phase minimum into sigma and pi modes.

    sigma is the radial unit vector through w_min with curvature -2 m^2;
    the pi modes span the orthogonal complement (mass lambda*eta^2/4,
    vanishing at zero learning rate).
    """
    m_sq = mass_squared(p)
    if m_sq >= 0.0:
        raise UnbrokenPhaseError(f"m^2 = {m_sq:g} >= 0: no broken phase to decompose")
    w_min = np.asarray(w_min, dtype=float)
    _check_dim(p, w_min)
    v = minimizer_norm(p)
    r = float(np.linalg.norm(w_min))
    if abs(r - v) > norm_tol:
        raise ValueError(f"|w_min| = {r:g} is not within {norm_tol:g} of the vev {v:g}")
    sigma = w_min / r
    pi = null_space(sigma[None, :]).T  # (dim-1, dim) orthonormal rows
    return SSBDecomposition(
        vev=v,
        sigma_mode=sigma,
        pi_modes=pi,
        mass_sigma_sq=-2.0 * m_sq,
        mass_pi_sq=0.25 * p.lam * p.eta * p.eta,
    )


def goldstone_count(p: PotentialParams, w_min, zero_tol: float = 1e-8) -> int:
    """Number of near-zero Hessian eigenvalues at a minimum.

    Eigenvalues with |e| < zero_tol * max|e| count as flat directions;
    D-1 of them appear in the broken phase at eta = 0.
    """
    h = potential_hessian(p, w_min)
    eigs = np.linalg.eigvalsh(h)
    scale = float(np.max(np.abs(eigs)))
    if scale == 0.0:
        return p.dim
    return int(np.sum(np.abs(eigs) < zero_tol * scale))
