"""Finite-dimensional Hilbert-space primitives.

Vectors are plain 1-D float arrays. The ambient space is R^n with either the
euclidean inner product or one induced by a symmetric positive-definite Gram
matrix. Everything here is immutable after construction.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    IncompatibleStructure,
    UnsupportedProjection,
    ValidationError,
)

ATOL = 1e-12
RTOL = 1e-9

# dense eigensolvers below this size, ARPACK above
_DENSE_LIMIT = 2000


def isclose(a, b, atol=ATOL, rtol=RTOL):
    """Equality up to ``atol`` or ``rtol``, whichever is looser."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = np.maximum(np.abs(a), np.abs(b))
    return bool(np.all(np.abs(a - b) <= np.maximum(atol, rtol * scale)))


def _frozen(x, dtype=float):
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


def as_vector(x, dim=None, name="vector"):
    """Validate and return a finite 1-D float array."""
    v = np.asarray(x, dtype=float)
    if v.ndim == 0:
        v = v.reshape(1)
    if v.ndim != 1:
        raise ValidationError(f"{name} must be one-dimensional, got shape {v.shape}")
    if dim is not None and v.shape[0] != dim:
        raise ValidationError(f"{name} has length {v.shape[0]}, expected {dim}")
    if not np.all(np.isfinite(v)):
        raise ValidationError(f"{name} has non-finite entries")
    return v


# ---------------------------------------------------------------------------
# inner products


@dataclass(frozen=True, eq=False)
class InnerProduct:
    """Euclidean (``gram is None``) or Gram-matrix inner product on R^n."""

    gram: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.gram is None:
            return
        G = np.array(self.gram, dtype=float)
        if G.ndim != 2 or G.shape[0] != G.shape[1]:
            raise ValidationError("gram matrix must be square")
        scale = max(np.max(np.abs(G)), 1.0)
        if np.max(np.abs(G - G.T)) > 1e-12 * scale:
            raise ValidationError("gram matrix is not symmetric")
        if np.linalg.eigvalsh(0.5 * (G + G.T))[0] <= 0.0:
            raise ValidationError("gram matrix is not positive definite")
        object.__setattr__(self, "gram", _frozen(0.5 * (G + G.T)))

    @classmethod
    def euclidean(cls):
        return cls()

    @classmethod
    def from_gram(cls, matrix):
        return cls(gram=matrix)

    @property
    def kind(self):
        return "euclidean" if self.gram is None else "gram"

    @property
    def is_euclidean(self):
        return self.gram is None

    def riesz(self, v):
        """Coefficient vector ``G v`` so that ``inner(u, v) == u @ riesz(v)``."""
        v = np.asarray(v, dtype=float)
        if self.gram is None:
            return v
        return v @ self.gram if v.ndim > 1 else self.gram @ v

    def inner(self, u, v):
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        if self.gram is None:
            return float(u @ v)
        return float(u @ self.gram @ v)

    def norm(self, u):
        u = np.asarray(u, dtype=float)
        if self.gram is None:
            return float(np.linalg.norm(u))
        return float(np.sqrt(max(u @ self.gram @ u, 0.0)))

    def norms(self, U):
        """Row-wise norms of a 2-D batch."""
        U = np.asarray(U, dtype=float)
        if self.gram is None:
            return np.linalg.norm(U, axis=-1)
        return np.sqrt(np.maximum(np.einsum("...i,ij,...j->...", U, self.gram, U), 0.0))

    def coordinate_dual_norms(self, dim):
        """Dual norm of each coordinate functional ``v -> v_i``."""
        if self.gram is None:
            return np.ones(dim)
        return np.sqrt(np.diag(np.linalg.inv(self.gram)))

    def to_dict(self):
        if self.gram is None:
            return {"kind": "euclidean"}
        return {"kind": "gram", "matrix": self.gram.tolist()}


EUCLIDEAN = InnerProduct()


# ---------------------------------------------------------------------------
# convex sets


class ConvexSet:
    """Closed convex subset of R^n with an exact projection oracle."""

    kind = "abstract"
    dim: int

    def contains(self, x, tol=0.0):
        raise NotImplementedError

    def project(self, x, inner=EUCLIDEAN):
        raise NotImplementedError

    def bounds(self):
        """Per-coordinate (lower, upper) if the set is a coordinate box, else None."""
        return None

    def distance(self, x, inner=EUCLIDEAN):
        x = as_vector(x, self.dim)
        return inner.norm(x - self.project(x, inner))


@dataclass(frozen=True, eq=False)
class WholeSpace(ConvexSet):
    dim: int
    kind = "whole_space"

    def contains(self, x, tol=0.0):
        return True

    def project(self, x, inner=EUCLIDEAN):
        return np.array(as_vector(x, self.dim), copy=True)

    def bounds(self):
        return np.full(self.dim, -np.inf), np.full(self.dim, np.inf)

    def to_dict(self):
        return {"kind": "whole_space", "dim": self.dim}


@dataclass(frozen=True, eq=False)
class Box(ConvexSet):
    """Coordinate box ``lower <= x <= upper`` (infinite bounds allowed)."""

    lower: np.ndarray
    upper: np.ndarray
    kind = "box"

    def __post_init__(self):
        lo = np.asarray(self.lower, dtype=float).reshape(-1)
        hi = np.asarray(self.upper, dtype=float).reshape(-1)
        if lo.shape != hi.shape:
            raise ValidationError("box bounds have different lengths")
        if np.any(np.isnan(lo)) or np.any(np.isnan(hi)):
            raise ValidationError("box bounds contain NaN")
        if np.any(lo > hi):
            raise ValidationError("box is empty: some lower bound exceeds its upper bound")
        if np.any(lo == np.inf) or np.any(hi == -np.inf):
            raise ValidationError("box is empty: infinite bound on the wrong side")
        object.__setattr__(self, "lower", _frozen(lo))
        object.__setattr__(self, "upper", _frozen(hi))

    @property
    def dim(self):
        return self.lower.shape[0]

    @classmethod
    def interval(cls, lo, hi):
        return cls(np.array([lo], float), np.array([hi], float))

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def project(self, x, inner=EUCLIDEAN):
        if not inner.is_euclidean:
            raise UnsupportedProjection("box projection has no closed form under a Gram inner product")
        x = as_vector(x, self.dim)
        return np.minimum(np.maximum(x, self.lower), self.upper)

    def bounds(self):
        return np.array(self.lower), np.array(self.upper)

    @property
    def is_bounded(self):
        return bool(np.all(np.isfinite(self.lower)) and np.all(np.isfinite(self.upper)))

    def vertices(self, limit=64):
        """All corners of a bounded box, or None when there are more than ``limit``."""
        if not self.is_bounded or 2 ** self.dim > limit:
            return None
        corners = np.array(np.meshgrid(*[[lo, hi] for lo, hi in zip(self.lower, self.upper)], indexing="ij"))
        return corners.reshape(self.dim, -1).T

    def scaled(self, s):
        return Box(self.lower * s, self.upper * s)

    def translated(self, shift):
        shift = np.broadcast_to(np.asarray(shift, dtype=float), self.lower.shape)
        return Box(self.lower + shift, self.upper + shift)

    def to_dict(self):
        return {"kind": "box", "lower": _encode_bounds(self.lower), "upper": _encode_bounds(self.upper)}


@dataclass(frozen=True, eq=False)
class AffineSlice(ConvexSet):
    """``{x : x[indices] == values}``; never empty."""

    dim: int
    indices: np.ndarray
    values: np.ndarray
    kind = "affine_slice"

    def __post_init__(self):
        idx = np.asarray(self.indices, dtype=np.int64).reshape(-1)
        val = np.asarray(self.values, dtype=float).reshape(-1)
        if idx.shape != val.shape:
            raise ValidationError("affine slice: indices and values differ in length")
        if idx.size and (idx.min() < 0 or idx.max() >= self.dim):
            raise ValidationError("affine slice: index out of range")
        if np.unique(idx).size != idx.size:
            raise ValidationError("affine slice: repeated index")
        if not np.all(np.isfinite(val)):
            raise ValidationError("affine slice: non-finite value")
        object.__setattr__(self, "indices", _frozen(idx, np.int64))
        object.__setattr__(self, "values", _frozen(val))

    @property
    def free(self):
        mask = np.ones(self.dim, dtype=bool)
        mask[self.indices] = False
        return np.flatnonzero(mask)

    def contains(self, x, tol=0.0):
        x = np.asarray(x, dtype=float)
        return bool(np.all(np.abs(x[self.indices] - self.values) <= tol))

    def project(self, x, inner=EUCLIDEAN):
        x = as_vector(x, self.dim)
        y = np.array(x, copy=True)
        y[self.indices] = self.values
        if inner.is_euclidean or self.indices.size == 0:
            return y
        # minimise (y-x)^T G (y-x) over the free block with the fixed block pinned
        G = inner.gram
        F = self.free
        if F.size:
            d_fixed = self.values - x[self.indices]
            rhs = -G[np.ix_(F, self.indices)] @ d_fixed
            y[F] = x[F] + scipy.linalg.solve(G[np.ix_(F, F)], rhs, assume_a="pos")
        return y

    def bounds(self):
        lo = np.full(self.dim, -np.inf)
        hi = np.full(self.dim, np.inf)
        lo[self.indices] = self.values
        hi[self.indices] = self.values
        return lo, hi

    def shifted(self, values):
        return AffineSlice(self.dim, self.indices, values)

    def to_dict(self):
        return {
            "kind": "affine_slice",
            "dim": self.dim,
            "indices": self.indices.tolist(),
            "values": self.values.tolist(),
        }


@dataclass(frozen=True, eq=False)
class ScaledBoxFamily:
    """Boxes ``s * base`` indexed by a positive scale ``s``."""

    base: Box

    def __call__(self, s):
        if not s > 0:
            raise ValidationError("scale parameter must be positive")
        return self.base.scaled(s)


def _encode_bounds(b):
    return [None if not np.isfinite(t) else float(t) for t in b]


def project(K: ConvexSet, x, inner=EUCLIDEAN):
    """Exact projection of ``x`` onto ``K``."""
    return K.project(x, inner)


def distance(K: ConvexSet, x, inner=EUCLIDEAN):
    """``inf_{v in K} ||x - v||``."""
    return K.distance(x, inner)


# ---------------------------------------------------------------------------
# convex functionals


@dataclass(frozen=True, eq=False)
class ConvexFunctional:
    """Separable piecewise-linear functional

        j(v) = sum_i  pos_i * max(v_i, 0) + abs_i * |v_i|

    with non-negative weights. ``weighted_positive_part`` and
    ``tangential_weighted_abs`` build the two elementary kinds; ``+`` sums them.
    """

    pos: np.ndarray
    abs: np.ndarray

    def __post_init__(self):
        p = np.asarray(self.pos, dtype=float).reshape(-1)
        a = np.asarray(self.abs, dtype=float).reshape(-1)
        if p.shape != a.shape:
            raise ValidationError("functional weights differ in length")
        if np.any(p < 0) or np.any(a < 0) or not (np.all(np.isfinite(p)) and np.all(np.isfinite(a))):
            raise ValidationError("functional weights must be finite and non-negative")
        object.__setattr__(self, "pos", _frozen(p))
        object.__setattr__(self, "abs", _frozen(a))

    @classmethod
    def zero(cls, dim):
        return cls(np.zeros(dim), np.zeros(dim))

    @classmethod
    def weighted_positive_part(cls, dim, indices, weights):
        p = np.zeros(dim)
        np.add.at(p, np.asarray(indices, dtype=np.int64), np.asarray(weights, dtype=float))
        return cls(p, np.zeros(dim))

    @classmethod
    def tangential_weighted_abs(cls, dim, indices, weights):
        a = np.zeros(dim)
        np.add.at(a, np.asarray(indices, dtype=np.int64), np.asarray(weights, dtype=float))
        return cls(np.zeros(dim), a)

    def __add__(self, other):
        if not isinstance(other, ConvexFunctional):
            return NotImplemented
        if other.dim != self.dim:
            raise ValidationError("cannot add functionals of different dimension")
        return ConvexFunctional(self.pos + other.pos, self.abs + other.abs)

    @property
    def dim(self):
        return self.pos.shape[0]

    @property
    def kind(self):
        has_pos = bool(np.any(self.pos))
        has_abs = bool(np.any(self.abs))
        if has_pos and has_abs:
            return "sum"
        if has_pos:
            return "weighted_positive_part"
        if has_abs:
            return "tangential_weighted_abs"
        return "zero"

    @property
    def is_zero(self):
        return self.kind == "zero"

    def __call__(self, v):
        v = np.asarray(v, dtype=float)
        return np.maximum(v, 0.0) @ self.pos + np.abs(v) @ self.abs

    def slopes(self):
        """Left and right derivatives at the kink ``v_i = 0``."""
        return -self.abs, self.pos + self.abs

    def subgradient(self, v):
        """An element of the subdifferential (0 at kinks, which always qualifies)."""
        v = np.asarray(v, dtype=float)
        left, right = self.slopes()
        return np.where(v > 0, right, np.where(v < 0, left, 0.0))

    def affine_minorant(self):
        """``(alpha, beta)`` with ``j(v) >= (alpha, v) + beta``; j >= 0 so zero works."""
        return np.zeros(self.dim), 0.0

    def lipschitz_bound(self, D=None, inner=EUCLIDEAN):
        """Global Lipschitz constant, hence a valid ``L_D`` for every radius ``D``."""
        return float(np.sum((self.pos + self.abs) * inner.coordinate_dual_norms(self.dim)))

    def prox(self, x, rho):
        """``argmin_v 1/2 |v - x|^2 + rho j(v)``, coordinatewise."""
        left, right = self.slopes()
        x = np.asarray(x, dtype=float)
        return x - np.clip(x, rho * left, rho * right)

    def to_dict(self):
        terms = []
        if np.any(self.pos):
            idx = np.flatnonzero(self.pos)
            terms.append({"kind": "weighted_positive_part", "indices": idx.tolist(), "weights": self.pos[idx].tolist()})
        if np.any(self.abs):
            idx = np.flatnonzero(self.abs)
            terms.append({"kind": "tangential_weighted_abs", "indices": idx.tolist(), "weights": self.abs[idx].tolist()})
        if not terms:
            return {"kind": "zero", "dim": self.dim}
        if len(terms) == 1:
            return {**terms[0], "dim": self.dim}
        return {"kind": "sum", "dim": self.dim, "terms": terms}


def combined_prox(K: ConvexSet, j: ConvexFunctional, rho, x, inner=EUCLIDEAN):
    """Resolvent of ``rho * j + indicator(K)`` at ``x``.

    Closed form: 1-D prox of the piecewise-linear term, then a clamp to the
    coordinate bounds. Exact because every coordinate decouples.
    """
    return prox_map(K, j, rho, inner)(np.asarray(x, dtype=float))


def prox_map(K: ConvexSet, j: ConvexFunctional, rho, inner=EUCLIDEAN):
    """Precomputed ``x -> combined_prox(K, j, rho, x)`` for use in tight loops."""
    if not rho > 0:
        raise ValidationError("rho must be positive")
    if not inner.is_euclidean:
        raise IncompatibleStructure("combined_prox needs the euclidean inner product")
    b = K.bounds()
    if b is None:
        raise IncompatibleStructure(f"set of kind {K.kind!r} is not coordinate-separable")
    if j.dim != K.dim:
        raise IncompatibleStructure("functional and set act on different dimensions")
    lo, hi = b
    left, right = j.slopes()
    t_lo, t_hi = rho * left, rho * right
    boxed = bool(np.any(np.isfinite(lo)) or np.any(np.isfinite(hi)))
    if j.is_zero:
        if not boxed:
            return lambda x: np.array(x, dtype=float, copy=True)
        return lambda x: np.clip(x, lo, hi)

    def apply(x):
        y = x - np.clip(x, t_lo, t_hi)
        return np.clip(y, lo, hi) if boxed else y

    return apply


# ---------------------------------------------------------------------------
# penalty operators


@dataclass(frozen=True, eq=False)
class PenaltyOperator:
    """Monotone operator vanishing exactly on a constraint set.

    ``proj_residual``: ``G = I - P_K``.
    ``boundary_mass``: ``(G u)_i = w_i (u_i - b_i)`` on ``indices``, zero elsewhere.
    """

    kind: str
    dim: int
    set: Optional[ConvexSet] = None
    indices: Optional[np.ndarray] = None
    targets: Optional[np.ndarray] = None
    weights: Optional[np.ndarray] = None

    @classmethod
    def proj_residual(cls, K: ConvexSet):
        return cls("proj_residual", K.dim, set=K)

    @classmethod
    def boundary_mass(cls, dim, indices, targets, weights):
        idx = _frozen(np.asarray(indices, dtype=np.int64).reshape(-1), np.int64)
        t = _frozen(np.asarray(targets, dtype=float).reshape(-1))
        w = _frozen(np.asarray(weights, dtype=float).reshape(-1))
        if not (idx.shape == t.shape == w.shape):
            raise ValidationError("boundary_mass arrays differ in length")
        if np.any(w <= 0):
            raise ValidationError("boundary_mass weights must be positive")
        return cls("boundary_mass", dim, indices=idx, targets=t, weights=w)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "proj_residual":
            return u - self.set.project(u)
        out = np.zeros_like(u)
        out[self.indices] = self.weights * (u[self.indices] - self.targets)
        return out

    @property
    def lipschitz(self):
        if self.kind == "proj_residual":
            return 1.0
        return float(np.max(self.weights)) if self.weights.size else 0.0

    def kernel_set(self):
        if self.kind == "proj_residual":
            return self.set
        return AffineSlice(self.dim, self.indices, self.targets)

    def evaluator(self):
        """Validation-free ``u -> G u`` for tight loops."""
        if self.kind == "proj_residual":
            b = self.set.bounds()
            if b is None:
                return self.__call__
            lo, hi = b
            return lambda u: u - np.clip(u, lo, hi)
        return self.__call__

    def linear_part(self):
        """``(W, c)`` with ``G u = W u + c`` when G is affine, else None."""
        if self.kind != "boundary_mass":
            return None
        d = np.zeros(self.dim)
        d[self.indices] = self.weights
        c = np.zeros(self.dim)
        c[self.indices] = -self.weights * self.targets
        return sp.diags(d).tocsr(), c


# ---------------------------------------------------------------------------
# monotone operators


def certify_constants(matrix, inner=EUCLIDEAN):
    """Strong-monotonicity and Lipschitz constants of a linear map.

    ``m`` is the smallest eigenvalue of the symmetric part, ``M`` the operator
    norm, both relative to ``inner``.
    """
    n = matrix.shape[0]
    if inner.is_euclidean:
        if sp.issparse(matrix) and n > _DENSE_LIMIT:
            S = (0.5 * (matrix + matrix.T)).tocsc()
            m = spla.eigsh(S, k=1, sigma=0.0, which="LM", tol=1e-10, return_eigenvectors=False)[0]
            M = spla.svds(matrix.tocsc(), k=1, tol=1e-10, return_singular_vectors=False)[0]
            return float(m), float(M)
        A = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
        m = np.linalg.eigvalsh(0.5 * (A + A.T))[0]
        M = np.linalg.norm(A, 2)
        return float(m), float(M)
    A = matrix.toarray() if sp.issparse(matrix) else np.asarray(matrix, dtype=float)
    G = inner.gram
    GA = G @ A
    m = scipy.linalg.eigh(0.5 * (GA + GA.T), G, eigvals_only=True)[0]
    M2 = scipy.linalg.eigh(A.T @ G @ A, G, eigvals_only=True)[-1]
    return float(m), float(np.sqrt(max(M2, 0.0)))


def _is_symmetric(matrix):
    if sp.issparse(matrix):
        diff = abs(matrix - matrix.T)
        scale = max(abs(matrix).max(), 1.0)
        return diff.nnz == 0 or diff.max() <= 1e-12 * scale
    A = np.asarray(matrix)
    return np.max(np.abs(A - A.T), initial=0.0) <= 1e-12 * max(np.max(np.abs(A), initial=0.0), 1.0)


@dataclass(frozen=True, eq=False)
class MonotoneOperator:
    """Strongly monotone Lipschitz operator with certified constants.

    ``potential`` marks gradients of convex functions (symmetric linear maps and
    their sums with penalty operators); the solver uses a wider step window for them.
    """

    kind: str
    dim: int
    m: float
    M: float
    matrix: object = None
    shift: Optional[np.ndarray] = None
    base: Optional["MonotoneOperator"] = None
    penalty: Optional[PenaltyOperator] = None
    weight: float = 0.0
    func: Optional[Callable] = None
    potential: bool = False
    inner: InnerProduct = field(default=EUCLIDEAN)

    def __post_init__(self):
        if not (np.isfinite(self.m) and np.isfinite(self.M)):
            raise ValidationError("operator constants must be finite")
        if self.M < 0 or self.m > self.M * (1 + 1e-9) + 1e-12:
            raise ValidationError(f"need 0 <= m <= M, got m={self.m}, M={self.M}")

    @classmethod
    def linear(cls, matrix, m=None, M=None, inner=EUCLIDEAN):
        A = matrix.tocsr() if sp.issparse(matrix) else _frozen(np.atleast_2d(np.asarray(matrix, dtype=float)))
        if A.shape[0] != A.shape[1]:
            raise ValidationError("operator matrix must be square")
        if m is None or M is None:
            cm, cM = certify_constants(A, inner)
            m = cm if m is None else m
            M = cM if M is None else M
        potential = inner.is_euclidean and _is_symmetric(A)
        return cls("linear", A.shape[0], float(m), float(M), matrix=A, potential=potential, inner=inner)

    @classmethod
    def affine(cls, matrix, shift, m=None, M=None, inner=EUCLIDEAN):
        lin = cls.linear(matrix, m, M, inner)
        c = _frozen(as_vector(shift, lin.dim, "shift"))
        return cls("affine", lin.dim, lin.m, lin.M, matrix=lin.matrix, shift=c, potential=lin.potential, inner=inner)

    @classmethod
    def penalized(cls, base: "MonotoneOperator", penalty: PenaltyOperator, lam):
        if not lam > 0:
            raise ValidationError("penalty parameter must be positive")
        if penalty.dim != base.dim:
            raise ValidationError("penalty and base operator differ in dimension")
        w = 1.0 / lam
        return cls(
            "penalized",
            base.dim,
            base.m,
            base.M + penalty.lipschitz * w,
            base=base,
            penalty=penalty,
            weight=w,
            potential=base.potential and base.inner.is_euclidean,
            inner=base.inner,
        )

    @classmethod
    def nonlinear(cls, func, dim, m, M, potential=False, inner=EUCLIDEAN):
        """Caller-certified operator; check it with :func:`probe_constants`."""
        return cls("nonlinear", dim, float(m), float(M), func=func, potential=potential, inner=inner)

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        if self.kind == "linear":
            return self.matrix @ u
        if self.kind == "affine":
            return self.matrix @ u + self.shift
        if self.kind == "penalized":
            return self.base(u) + self.weight * self.penalty(u)
        return np.asarray(self.func(u), dtype=float)

    def evaluator(self):
        """Dispatch-free ``u -> A u`` for tight loops."""
        if self.kind == "linear":
            mat = self.matrix
            return lambda u: mat @ u
        if self.kind == "affine":
            mat, c = self.matrix, self.shift
            return lambda u: mat @ u + c
        if self.kind == "penalized":
            base, pen, w = self.base.evaluator(), self.penalty.evaluator(), self.weight
            return lambda u: base(u) + w * pen(u)
        return self.__call__

    def affine_part(self):
        """``(matrix, shift)`` when the operator is affine, else None."""
        if self.kind == "linear":
            return self.matrix, np.zeros(self.dim)
        if self.kind == "affine":
            return self.matrix, np.array(self.shift)
        if self.kind == "penalized":
            inner_part = self.base.affine_part()
            pen = self.penalty.linear_part()
            if inner_part is None or pen is None:
                return None
            B, c = inner_part
            W, d = pen
            if sp.issparse(B):
                return (B + self.weight * W).tocsr(), c + self.weight * d
            return B + self.weight * W.toarray(), c + self.weight * d
        return None

    def to_dict(self):
        part = self.affine_part()
        if part is None or self.kind == "penalized":
            raise ValidationError(f"operator of kind {self.kind!r} is not serializable")
        A, c = part
        out = {"kind": self.kind, "m": self.m, "M": self.M}
        if sp.issparse(A):
            A = A.tocsr()
            out["csr"] = {
                "data": A.data.tolist(),
                "indices": A.indices.tolist(),
                "indptr": A.indptr.tolist(),
                "shape": list(A.shape),
            }
        else:
            out["matrix"] = np.asarray(A).tolist()
        if self.kind == "affine":
            out["shift"] = c.tolist()
        return out


def probe_constants(op: MonotoneOperator, rng, pairs=1000, scale=1.0, inner=EUCLIDEAN):
    """Worst observed ratios over random pairs.

    Returns ``(min (Au-Av,u-v)/|u-v|^2, max |Au-Av|/|u-v|)``; a valid pair of
    constants must satisfy ``m <= first`` and ``M >= second``.
    """
    lo, hi = np.inf, 0.0
    for _ in range(pairs):
        u = scale * rng.standard_normal(op.dim)
        v = scale * rng.standard_normal(op.dim)
        d = u - v
        nd = inner.norm(d)
        if nd == 0:
            continue
        Ad = op(u) - op(v)
        lo = min(lo, inner.inner(Ad, d) / nd**2)
        hi = max(hi, inner.norm(Ad) / nd)
    return lo, hi
