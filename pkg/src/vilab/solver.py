"""Fixed-point solvers for the variational inequality

    u in K,  (Au, v - u) + j(v) - j(u) >= (f, v - u)   for all v in K.

The iteration is the projected/proximal Banach map
``u <- prox_{rho j + I_K}(u - rho (A u - f))``; it contracts whenever ``A`` is
strongly monotone and Lipschitz and ``rho`` lies in the window below.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import (
    KernelMismatch,
    MaxIterExceeded,
    NonContraction,
    SmallnessViolated,
    ValidationError,
)
from .hilbert import (
    EUCLIDEAN,
    AffineSlice,
    ConvexFunctional,
    ConvexSet,
    InnerProduct,
    MonotoneOperator,
    PenaltyOperator,
    WholeSpace,
    as_vector,
    prox_map,
)

# ratios are only recorded while steps are above this (relative) noise floor
_RATIO_FLOOR = 1e-9
_BURN_IN = 5


@dataclass(frozen=True, eq=False)
class VIProblem:
    """Bundle ``(A, j, K, f)``; the common input of solvers and checkers."""

    A: MonotoneOperator
    j: ConvexFunctional
    K: ConvexSet
    f: np.ndarray
    inner: InnerProduct = EUCLIDEAN
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        n = self.A.dim
        object.__setattr__(self, "f", _ro(as_vector(self.f, n, "f")))
        if self.j.dim != n or self.K.dim != n:
            raise ValidationError(f"dimension mismatch: A={n}, j={self.j.dim}, K={self.K.dim}")
        if not self.A.m > 0:
            raise ValidationError(f"operator is not strongly monotone (m={self.A.m})")

    @property
    def dim(self):
        return self.A.dim

    @property
    def m(self):
        return self.A.m

    @property
    def M(self):
        return self.A.M

    def with_rhs(self, f):
        return VIProblem(self.A, self.j, self.K, f, self.inner)

    def with_set(self, K):
        return VIProblem(self.A, self.j, K, self.f, self.inner)

    def with_functional(self, j):
        return VIProblem(self.A, j, self.K, self.f, self.inner)

    def vi_gap(self, u, v):
        """``(Au - f, v - u) + j(v) - j(u)`` for one ``v`` or a batch of rows."""
        g = self.inner.riesz(self.A(u) - self.f)
        V = np.asarray(v, dtype=float)
        return (V - u) @ g + self.j(V) - self.j(u)

    def energy(self, u):
        """``1/2 (Au, u) + j(u) - (f, u)``; meaningful for symmetric linear A."""
        u = np.asarray(u, dtype=float)
        return 0.5 * self.inner.inner(self.A(u), u) + self.j(u) - self.inner.inner(self.f, u)

    def reference_solution(self, tol=1e-12):
        """High-accuracy solution, cached per problem instance."""
        key = ("ref", tol)
        if key not in self._cache:
            self._cache[key] = solve_vi(self, SolveConfig(tol=tol)).u
        return np.array(self._cache[key], copy=True)


def _ro(x):
    x = np.array(x, dtype=float, copy=True)
    x.setflags(write=False)
    return x


@dataclass(frozen=True)
class SolveConfig:
    rho: Optional[float] = None
    tol: float = 1e-10
    max_iter: int = 200_000
    method: str = "auto"
    x0: Optional[np.ndarray] = None

    def __post_init__(self):
        if not self.tol > 0:
            raise ValidationError("tol must be positive")
        if self.max_iter < 1:
            raise ValidationError("max_iter must be at least 1")
        if self.method not in ("auto", "iterate", "direct"):
            raise ValidationError(f"unknown method {self.method!r}")
        if self.rho is not None and not self.rho > 0:
            raise ValidationError("rho must be positive")


@dataclass
class SolveReport:
    u: np.ndarray
    iterations: int
    final_step: float
    contraction_estimate: float
    converged: bool
    rho: float = 0.0
    contraction_bound: float = 0.0
    method: str = "iterate"
    m: float = 0.0
    M: float = 0.0
    outer_iterations: int = 0
    outer_ratio: float = 0.0
    step_history: list = field(default_factory=list, repr=False)

    def to_dict(self):
        return {
            "u": [float(t) for t in self.u],
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
            "contraction_estimate": float(self.contraction_estimate),
            "final_step": float(self.final_step),
            "rho": float(self.rho),
            "contraction_bound": float(self.contraction_bound),
            "method": self.method,
            "m": float(self.m),
            "M": float(self.M),
            "outer_iterations": int(self.outer_iterations),
            "outer_ratio": float(self.outer_ratio),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)


def step_window(A: MonotoneOperator):
    """Open upper bound of admissible relaxation steps."""
    if A.potential:
        return 2.0 / A.M
    return 2.0 * A.m / A.M**2


def default_step(A: MonotoneOperator):
    if A.potential:
        return 2.0 / (A.m + A.M)
    return A.m / A.M**2


def contraction_factor(A: MonotoneOperator, rho):
    """Lipschitz constant of ``u -> u - rho A u``.

    For gradients of convex functions the sharper ``max|1 - rho t|`` over
    ``t in [m, M]`` holds; it never exceeds the general bound.
    """
    general = np.sqrt(max(1.0 - 2.0 * rho * A.m + (rho * A.M) ** 2, 0.0))
    if A.potential:
        return min(general, max(abs(1.0 - rho * A.m), abs(1.0 - rho * A.M)))
    return general


def _direct_eligible(problem: VIProblem):
    if not problem.inner.is_euclidean or not problem.j.is_zero:
        return False
    if not isinstance(problem.K, (WholeSpace, AffineSlice)):
        return False
    return problem.A.affine_part() is not None


def _solve_direct(problem: VIProblem):
    A, c = problem.A.affine_part()
    n = problem.dim
    u = np.zeros(n)
    rhs = problem.f - c
    if isinstance(problem.K, AffineSlice):
        fixed = problem.K.indices
        free = problem.K.free
        u[fixed] = problem.K.values
    else:
        fixed = np.zeros(0, dtype=np.int64)
        free = np.arange(n)
    if free.size:
        if sp.issparse(A):
            A = A.tocsr()
            A_ff = A[free][:, free].tocsc()
            r = rhs[free] - A[free][:, fixed] @ u[fixed]
            u[free] = spla.spsolve(A_ff, r) if free.size > 1 else r / A_ff.toarray()[0, 0]
        else:
            A = np.asarray(A)
            r = rhs[free] - A[np.ix_(free, fixed)] @ u[fixed]
            u[free] = scipy.linalg.solve(A[np.ix_(free, free)], r)
    return u


def solve_vi(problem: VIProblem, config: SolveConfig = SolveConfig()) -> SolveReport:
    """Solve the VI by proximal fixed-point iteration (or a direct linear solve).

    ``method="auto"`` takes the exact linear solve when there is no inequality
    structure at all: zero ``j``, ``K`` a whole space or affine slice, affine ``A``.
    """
    A = problem.A
    use_direct = config.method == "direct" or (config.method == "auto" and _direct_eligible(problem))
    if use_direct:
        if not _direct_eligible(problem):
            raise ValidationError("direct method needs zero j, affine K, affine A and euclidean inner product")
        u = _solve_direct(problem)
        return SolveReport(u, 0, 0.0, 0.0, True, 0.0, 0.0, "direct", A.m, A.M)

    rho = default_step(A) if config.rho is None else float(config.rho)
    limit = step_window(A)
    if not 0.0 < rho < limit:
        raise NonContraction(f"rho={rho:g} outside the contraction window (0, {limit:g})")
    q = contraction_factor(A, rho)

    K, j, f = problem.K, problem.j, problem.f
    x0 = np.zeros(problem.dim) if config.x0 is None else as_vector(config.x0, problem.dim, "x0")
    u = K.project(x0)
    prox = prox_map(K, j, rho, problem.inner)
    Aev = A.evaluator()
    prev_step = None
    est = 0.0
    step = np.inf
    history = []
    for k in range(1, config.max_iter + 1):
        u_new = prox(u - rho * (Aev(u) - f))
        d = u_new - u
        step = math.sqrt(d @ d)
        u = u_new
        if len(history) < 10_000:
            history.append(step)
        if prev_step is not None and k > _BURN_IN and step > 0.0:
            floor = _RATIO_FLOOR * (1.0 + math.sqrt(u @ u))
            if prev_step > floor and step > floor:
                est = max(est, step / prev_step)
        prev_step = step
        if step <= config.tol:
            return SolveReport(u, k, step, est, True, rho, q, "iterate", A.m, A.M, step_history=history)
    report = SolveReport(u, config.max_iter, step, est, False, rho, q, "iterate", A.m, A.M, step_history=history)
    raise MaxIterExceeded(f"no convergence in {config.max_iter} iterations (last step {step:.3e})", report)


# ---------------------------------------------------------------------------
# penalty


def check_penalty_kernel(G: PenaltyOperator, K: ConvexSet, rng=None, probes=64, scale=3.0):
    """Probe ``G u = 0 <=> u in K``; raise :class:`KernelMismatch` on failure."""
    if G.dim != K.dim:
        raise KernelMismatch("penalty operator and constraint set differ in dimension")
    rng = np.random.default_rng(0) if rng is None else rng
    ker = G.kernel_set()
    anchor = K.project(np.zeros(K.dim))
    for _ in range(probes):
        x = anchor + scale * rng.standard_normal(K.dim)
        for y in (K.project(x), ker.project(x)):
            in_k = K.contains(y, tol=1e-12)
            zero = float(np.linalg.norm(G(y))) <= 1e-12
            if in_k != zero:
                raise KernelMismatch("penalty operator kernel differs from the constraint set")
        if K.distance(x) > 1e-8 and float(np.linalg.norm(G(x))) <= 1e-12:
            raise KernelMismatch("penalty operator vanishes outside the constraint set")


def penalized_problem(problem: VIProblem, G: PenaltyOperator, lam):
    if not lam >= 1e-12:
        raise ValidationError(f"penalty parameter {lam:g} below 1e-12; use the constrained solver")
    op = MonotoneOperator.penalized(problem.A, G, lam)
    return VIProblem(op, problem.j, WholeSpace(problem.dim), problem.f, problem.inner)


def solve_penalized(problem: VIProblem, G: PenaltyOperator, lam, config: SolveConfig = SolveConfig()):
    """Solve the unconstrained VI with operator ``A + G / lam``.

    The report's ``m``/``M`` are the constants of the penalized operator
    (``m`` unchanged, ``M + L_G / lam``).
    """
    check_penalty_kernel(G, problem.K)
    return solve_vi(penalized_problem(problem, G, lam), config)


# ---------------------------------------------------------------------------
# quasi-variational friction


@dataclass(frozen=True)
class FrictionTerm:
    """Frozen-argument friction ``phi(eta, v) = sum_i c_i max(eta[nu_i], 0) |v[tau_i]|``.

    ``coeffs`` already includes friction coefficient, yield limit and boundary
    weight per contact node. ``d0``, ``mu_max``, ``F_max`` and ``m_F`` feed
    the smallness guard ``d0^2 mu_max F_max < m_F``.
    """

    normal_idx: np.ndarray
    tangential_idx: np.ndarray
    coeffs: np.ndarray
    d0: float
    mu_max: float
    F_max: float
    m_F: float

    @property
    def smallness_value(self):
        return self.d0**2 * self.mu_max * self.F_max

    def check_smallness(self):
        lhs = self.smallness_value
        if not lhs < self.m_F:
            raise SmallnessViolated(f"d0^2 max(mu) max(F) = {lhs:.4g} >= m_F = {self.m_F:.4g}")

    def frozen_functional(self, eta, dim):
        w = np.asarray(self.coeffs) * np.maximum(np.asarray(eta)[self.normal_idx], 0.0)
        return ConvexFunctional.tangential_weighted_abs(dim, self.tangential_idx, w)


def solve_qvi_friction(
    problem: VIProblem,
    friction: FrictionTerm,
    config: SolveConfig = SolveConfig(),
    outer_tol=1e-10,
    max_outer=100,
):
    """Outer fixed point ``eta <- solve_vi(j + phi(eta, .))`` with warm starts."""
    if not outer_tol > 0:
        raise ValidationError("outer_tol must be positive")
    friction.check_smallness()
    base = solve_vi(problem, config)
    if not np.any(friction.coeffs):
        base.outer_iterations = 1
        return base
    eta = base.u
    total = base.iterations
    prev = None
    ratio = 0.0
    for s in range(1, max_outer + 1):
        jt = problem.j + friction.frozen_functional(eta, problem.dim)
        cfg = SolveConfig(config.rho, config.tol, config.max_iter, config.method, x0=eta)
        rep = solve_vi(problem.with_functional(jt), cfg)
        total += rep.iterations
        delta = float(np.linalg.norm(rep.u - eta))
        if prev is not None and prev > _RATIO_FLOOR:
            ratio = max(ratio, delta / prev)
        prev = delta
        eta = rep.u
        if delta <= outer_tol:
            rep.iterations = total
            rep.outer_iterations = s
            rep.outer_ratio = ratio
            return rep
    rep.iterations = total
    rep.outer_iterations = max_outer
    rep.outer_ratio = ratio
    rep.converged = False
    raise MaxIterExceeded(f"friction outer loop did not converge in {max_outer} steps", rep)
