"""Exact group-element algebra for layer symmetries.

Group elements are invertible linear or affine maps acting on feature
vectors: orthogonal matrices, permutation matrices, or general affine
maps (matrix plus offset). The module also provides elementwise
nonlinearities and the checks that decide whether a group element
commutes with a nonlinearity (the remnant-symmetry gate used by the
network harness).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import reduce

import numpy as np
from scipy.special import expit

ORTHO_TOL = 1e-12
DET_TOL = 1e-12

# structure ordering for composition: permutation is the most structured,
# affine the least
_KIND_RANK = {"permutation": 0, "orthogonal": 1, "affine": 2}


class DimensionMismatchError(ValueError):
    """Operands act on spaces of different dimension."""


class SingularMatrixError(ValueError):
    """Affine matrix is numerically singular."""


class InvalidGroupElementError(ValueError):
    """Matrix/offset violates the invariants of the declared kind."""


@dataclass(frozen=True, eq=False)
class GroupElement:
    """An invertible map x -> matrix @ x + offset.

    kind is one of 'orthogonal', 'permutation', 'affine'. Permutations
    and orthogonal elements carry a zero offset; affine elements may
    translate. Validation happens at construction.
    """

    kind: str
    matrix: np.ndarray
    offset: np.ndarray
    dim: int

    def __post_init__(self):
        m = np.asarray(self.matrix, dtype=float)
        o = np.asarray(self.offset, dtype=float)
        object.__setattr__(self, "matrix", m)
        object.__setattr__(self, "offset", o)
        if m.shape != (self.dim, self.dim) or o.shape != (self.dim,):
            raise InvalidGroupElementError(
                f"shape mismatch for dim={self.dim}: matrix {m.shape}, offset {o.shape}"
            )
        if self.kind == "orthogonal":
            dev = np.max(np.abs(m.T @ m - np.eye(self.dim)))
            if dev >= ORTHO_TOL:
                raise InvalidGroupElementError(f"not orthogonal: |Q^T Q - I| = {dev:g}")
            if np.any(o != 0.0):
                raise InvalidGroupElementError("orthogonal element must have zero offset")
        elif self.kind == "permutation":
            is_01 = np.all((m == 0.0) | (m == 1.0))
            if not (is_01 and np.all(m.sum(axis=0) == 1.0) and np.all(m.sum(axis=1) == 1.0)):
                raise InvalidGroupElementError("not a permutation matrix")
            if np.any(o != 0.0):
                raise InvalidGroupElementError("permutation element must have zero offset")
        elif self.kind == "affine":
            if abs(np.linalg.det(m)) <= DET_TOL:
                raise SingularMatrixError("affine matrix is singular")
        else:
            raise InvalidGroupElementError(f"unknown kind {self.kind!r}")


@dataclass(frozen=True)
class Nonlinearity:
    """Elementwise nonlinear operator: relu, sigmoid, or identity."""

    kind: str = "relu"

    def __post_init__(self):
        if self.kind not in ("relu", "sigmoid", "identity"):
            raise ValueError(f"unknown nonlinearity {self.kind!r}")

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "relu":
            return np.maximum(x, 0.0)
        if self.kind == "sigmoid":
            return expit(x)
        return x

    def derivative(self, x):
        x = np.asarray(x, dtype=float)
        if self.kind == "relu":
            return (x > 0.0).astype(float)
        if self.kind == "sigmoid":
            s = expit(x)
            return s * (1.0 - s)
        return np.ones_like(x)


@dataclass
class RemnantRestriction:
    """Index set surviving a ReLU, with the reduced dimension."""

    surviving_dims: np.ndarray
    d_prime: int
    restricted_norm_sq: float


def identity(dim: int, kind: str = "permutation") -> GroupElement:
    """Identity element (a permutation matrix, hence valid for any kind)."""
    return GroupElement(kind, np.eye(dim), np.zeros(dim), dim)


def rotation_2d(theta: float) -> GroupElement:
    c, s = np.cos(theta), np.sin(theta)
    return GroupElement("orthogonal", np.array([[c, -s], [s, c]]), np.zeros(2), 2)


def permutation(perm) -> GroupElement:
    """Permutation element sending coordinate j to position perm[j]."""
    perm = np.asarray(perm, dtype=int)
    d = perm.size
    m = np.zeros((d, d))
    m[perm, np.arange(d)] = 1.0
    return GroupElement("permutation", m, np.zeros(d), d)


def random_orthogonal(dim: int, rng: np.random.Generator) -> GroupElement:
    """Haar-distributed orthogonal element (QR with sign fix)."""
    a = rng.standard_normal((dim, dim))
    q, r = np.linalg.qr(a)
    q = q * np.sign(np.diag(r))
    return GroupElement("orthogonal", q, np.zeros(dim), dim)


def random_permutation(dim: int, rng: np.random.Generator) -> GroupElement:
    return permutation(rng.permutation(dim))


def random_affine(dim: int, rng: np.random.Generator, scale: float = 1.0) -> GroupElement:
    """Random affine element; resamples until comfortably invertible."""
    while True:
        m = rng.standard_normal((dim, dim)) * scale
        if abs(np.linalg.det(m)) > 1e-6:
            return GroupElement("affine", m, rng.standard_normal(dim) * scale, dim)


def apply(q: GroupElement, x) -> np.ndarray:
    """Apply the map: matrix @ x + offset."""
    x = np.asarray(x, dtype=float)
    if x.shape != (q.dim,):
        raise DimensionMismatchError(f"vector of dim {x.shape} given to element of dim {q.dim}")
    return q.matrix @ x + q.offset


def compose(q1: GroupElement, q2: GroupElement) -> GroupElement:
    """Element applying q2 first, then q1.

    The result kind is the least structured of the two operands
    (permutation < orthogonal < affine).
    """
    if q1.dim != q2.dim:
        raise DimensionMismatchError(f"dims {q1.dim} and {q2.dim}")
    kind = max(q1.kind, q2.kind, key=_KIND_RANK.get)
    return GroupElement(kind, q1.matrix @ q2.matrix, q1.matrix @ q2.offset + q1.offset, q1.dim)


def invert(q: GroupElement) -> GroupElement:
    """Group inverse; transpose for orthogonal/permutation kinds."""
    if q.kind in ("orthogonal", "permutation"):
        return GroupElement(q.kind, q.matrix.T.copy(), np.zeros(q.dim), q.dim)
    if abs(np.linalg.det(q.matrix)) <= DET_TOL:
        raise SingularMatrixError("cannot invert a singular affine element")
    minv = np.linalg.inv(q.matrix)
    return GroupElement("affine", minv, -minv @ q.offset, q.dim)


def conjugate_weights(q: GroupElement, w) -> np.ndarray:
    """Similarity transform Q W Q^{-1} of a square weight matrix."""
    w = np.asarray(w, dtype=float)
    if w.shape != (q.dim, q.dim):
        raise DimensionMismatchError(f"weights {w.shape} vs element dim {q.dim}")
    return q.matrix @ w @ invert(q).matrix


def commutes_with(
    q: GroupElement,
    r: Nonlinearity,
    trials: int = 100,
    tol: float = 1e-9,
    seed: int = 0,
):
    """Randomized falsifier for r(Qx) == Q r(x).

    Samples `trials` standard-normal vectors and returns the first
    counterexample found, or None when every trial commutes within
    `tol`. A None result is one-sided evidence, not a proof.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    for _ in range(trials):
        x = rng.standard_normal(q.dim)
        dev = np.max(np.abs(r(apply(q, x)) - apply(q, r(x))))
        if dev > tol:
            return x
    return None


def remnant_restriction(x, r: Nonlinearity) -> RemnantRestriction:
    """Coordinates surviving a ReLU and the norm invariant they carry.

    The squared norm of relu(x) equals the squared norm of x restricted
    to the surviving (strictly positive) coordinates, exactly.
    """
    if r.kind != "relu":
        raise ValueError("remnant restriction is defined for the relu nonlinearity")
    x = np.asarray(x, dtype=float)
    if not np.all(np.isfinite(x)):
        raise ValueError("input must be finite")
    surviving = np.flatnonzero(x > 0.0)
    # summed over the full relu output (dropped terms are exact zeros) so
    # the norm identity holds bitwise
    norm_sq = float(np.sum(np.maximum(x, 0.0) ** 2))
    return RemnantRestriction(surviving, surviving.size, norm_sq)


def affine_collapse(layers) -> GroupElement:
    """Collapse a stack of affine elements into one (layers[0] applied first)."""
    layers = list(layers)
    if not layers:
        raise ValueError("need at least one layer")
    dims = {q.dim for q in layers}
    if len(dims) > 1:
        raise DimensionMismatchError(f"mixed dims {sorted(dims)}")
    return reduce(lambda acc, nxt: compose(nxt, acc), layers)
