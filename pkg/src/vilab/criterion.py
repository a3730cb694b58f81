"""Convergence criterion for candidate sequences and their classification.

A sequence ``u_n`` converges to the solution of the VI iff ``d(u_n, K) -> 0``
and the perturbed inequality

    (A u_n, v - u_n) + j(v) - j(u_n) + eps_n (1 + ||v - u_n||) >= (f, v - u_n)

holds for all ``v in K`` with ``eps_n -> 0``. The smallest admissible
``eps_n`` is a supremum over ``K``; :func:`epsilon_residual` returns a
certified lower bound on it computed from a finite probe set.
"""

from __future__ import annotations

import csv
import enum
import io
import json
import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ValidationError
from .hilbert import Box, as_vector
from .solver import VIProblem, default_step


class ResidualMode(enum.Enum):
    ONE_PLUS_NORM = "one_plus_norm"
    NORM = "norm"


@dataclass(frozen=True, eq=False)
class CandidateSequence:
    """Ordered vectors ``u_1..u_N``. ``indices`` holds the sequence index ``n``
    of each item, so sparse samples such as ``n = 1, 2, 4, ...`` are allowed."""

    items: np.ndarray
    label: str = ""
    indices: Optional[np.ndarray] = None

    def __post_init__(self):
        try:
            arr = np.array([np.atleast_1d(np.asarray(x, dtype=float)) for x in self.items], dtype=float)
        except ValueError as exc:
            raise ValidationError("sequence items have different dimensions") from exc
        if arr.ndim != 2 or arr.shape[0] == 0:
            raise ValidationError("sequence must be a nonempty list of equal-length vectors")
        if not np.all(np.isfinite(arr)):
            raise ValidationError("sequence has non-finite entries")
        arr.setflags(write=False)
        object.__setattr__(self, "items", arr)
        idx = np.arange(1, arr.shape[0] + 1) if self.indices is None else np.asarray(self.indices, dtype=float)
        if idx.shape != (arr.shape[0],) or np.any(idx <= 0) or np.any(np.diff(idx) <= 0):
            raise ValidationError("sequence indices must be positive and strictly increasing")
        idx = np.array(idx, dtype=float)
        idx.setflags(write=False)
        object.__setattr__(self, "indices", idx)

    def __len__(self):
        return self.items.shape[0]

    @property
    def dim(self):
        return self.items.shape[1]

    @classmethod
    def from_function(cls, func, ns, label=""):
        ns = list(ns)
        return cls([func(n) for n in ns], label, np.asarray(ns, dtype=float))


# ---------------------------------------------------------------------------
# epsilon residual


def _feasible_box(K):
    b = K.bounds()
    if b is None:
        raise ValidationError(f"set of kind {K.kind!r} has no coordinate bounds")
    return b


class _Ratio:
    """Vectorised ``phi(v) / denom(v)`` for one ``u_n``."""

    def __init__(self, problem: VIProblem, u_n, mode):
        self.u = u_n
        self.inner = problem.inner
        self.j = problem.j
        self.g = problem.inner.riesz(problem.f - problem.A(u_n))
        self.ju = float(problem.j(u_n))
        self.norm_mode = mode is ResidualMode.NORM
        self.tiny = 1e-12 * (1.0 + float(np.linalg.norm(u_n)))

    def __call__(self, V):
        D = V - self.u
        phi = D @ self.g + self.ju - self.j(V)
        dist = self.inner.norms(D)
        if self.norm_mode:
            with np.errstate(divide="ignore", invalid="ignore"):
                r = phi / dist
            return np.where(dist > self.tiny, r, -np.inf)
        return phi / (1.0 + dist)

    def gradient(self, V):
        D = V - self.u
        phi = D @ self.g + self.ju - self.j(V)
        dist = self.inner.norms(D)
        safe = np.maximum(dist, self.tiny)[:, None]
        dphi = self.g - self.j.subgradient(V)
        ddist = self.inner.riesz(D) / safe
        den = safe if self.norm_mode else 1.0 + dist[:, None]
        return (dphi * den - phi[:, None] * ddist) / den**2


def _ray_limits(c, P, lo, hi, cap):
    """Largest ``t`` with ``c + t (p - c)`` inside the box, capped."""
    d = P - c
    with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
        up = np.where(d > 0, (hi - c) / d, np.inf)
        dn = np.where(d < 0, (lo - c) / d, np.inf)
    t = np.minimum(np.min(up, axis=1), np.min(dn, axis=1))
    return np.clip(np.minimum(t, cap), 1.0, None)


def _line_search(ratio, c, P, lo, hi, cap, levels=3, points=33):
    """Maximise ``ratio`` along each ray ``c + t (p - c)``, ``t in [0, T]``.

    The ratio is quasi-concave in ``t`` wherever it is positive, so a grid
    followed by local zooms finds the maximiser up to the final grid spacing.
    """
    T = _ray_limits(c, P, lo, hi, cap)
    a = np.zeros_like(T)
    b = T
    best_t = np.ones_like(T)
    best_r = ratio(P)
    d = P - c
    for _ in range(levels):
        s = np.linspace(0.0, 1.0, points)
        ts = a[:, None] + (b - a)[:, None] * s[None, :]
        V = c[None, None, :] + ts[:, :, None] * d[:, None, :]
        V = np.clip(V, lo, hi)
        R = ratio(V.reshape(-1, c.size)).reshape(ts.shape)
        k = np.argmax(R, axis=1)
        rows = np.arange(len(T))
        r = R[rows, k]
        better = r > best_r
        best_r = np.where(better, r, best_r)
        best_t = np.where(better, ts[rows, k], best_t)
        h = (b - a) / (points - 1)
        a = np.maximum(best_t - h, 0.0)
        b = np.minimum(best_t + h, T)
    V = np.clip(c + best_t[:, None] * d, lo, hi)
    return V, ratio(V)


def _ascent(ratio, V, R, lo, hi, steps=20, trials=8):
    """Projected supergradient ascent; a step is kept only if it improves."""
    shrink = 0.5 ** np.arange(trials)
    for _ in range(steps):
        G = ratio.gradient(V)
        gn = np.linalg.norm(G, axis=1)
        ok = np.isfinite(gn) & (gn > 0)
        if not np.any(ok):
            break
        scale = (1.0 + np.linalg.norm(V - ratio.u, axis=1)) / np.where(ok, gn, 1.0)
        C = V[:, None, :] + (scale[:, None] * shrink[None, :])[:, :, None] * G[:, None, :]
        C = np.clip(C, lo, hi)
        RC = ratio(C.reshape(-1, V.shape[1])).reshape(C.shape[:2])
        RC[~ok] = -np.inf
        k = np.argmax(RC, axis=1)
        rows = np.arange(V.shape[0])
        rc = RC[rows, k]
        better = rc > R
        if not np.any(better):
            break
        V = np.where(better[:, None], C[rows, k], V)
        R = np.where(better, rc, R)
    return V, R


def _interval_max(ratio, lo, hi, center, scale):
    """Dense-grid maximisation on a 1-D interval, refined to about 1e-6 relative."""
    a = lo if np.isfinite(lo) else center - 100.0 * scale
    b = hi if np.isfinite(hi) else center + 100.0 * scale
    best_v, best_r = center, -np.inf
    for _ in range(3):
        grid = np.linspace(a, b, 2001)
        R = ratio(grid[:, None])
        k = int(np.argmax(R))
        if R[k] > best_r:
            best_r, best_v = float(R[k]), float(grid[k])
        h = (b - a) / 2000
        a, b = max(best_v - 2 * h, lo), min(best_v + 2 * h, hi)
    return best_r


def epsilon_residual(
    problem: VIProblem,
    u_n,
    mode: ResidualMode = ResidualMode.ONE_PLUS_NORM,
    probe_budget: int = 32,
    reference=None,
    seed: int = 0,
):
    """Certified lower bound on the smallest admissible ``eps`` at ``u_n``.

    Returns ``max_{v in V} phi(v) / denom(v)`` over a finite probe set ``V``
    inside ``K``, floored at 0, where ``phi(v) = (f - A u_n, v - u_n) +
    j(u_n) - j(v)`` and ``denom`` is ``1 + ||v - u_n||`` or ``||v - u_n||``.
    Every probe lies in ``K``, so the true supremum is at least the result.

    Probes: the reference solution, ``P_K(u_n)``, one projected step from
    ``u_n``, box vertices (at most 64), and ``probe_budget`` random points of
    ``K`` drawn from a seed so that a larger budget only adds probes. Each
    probe is refined by a line search along the ray from ``P_K(u_n)`` and by
    20 projected ascent steps. One-dimensional problems also get a dense grid.
    """
    if probe_budget < 8:
        raise ValidationError("probe_budget must be at least 8")
    mode = ResidualMode(mode)
    K = problem.K
    n = problem.dim
    u_n = as_vector(u_n, n, "u_n")
    lo, hi = _feasible_box(K)
    u_ref = problem.reference_solution() if reference is None else as_vector(reference, n, "reference")
    ratio = _Ratio(problem, u_n, mode)

    c = K.project(u_n, problem.inner)
    rho = default_step(problem.A)
    step_pt = np.clip(u_n - rho * (problem.A(u_n) - problem.f), lo, hi)
    fixed = [np.clip(u_ref, lo, hi), c, step_pt]
    if isinstance(K, Box):
        verts = K.vertices(64)
        if verts is not None:
            fixed.extend(verts)

    scale = 1.0 + float(np.max(np.abs(u_n), initial=0.0)) + float(np.max(np.abs(u_ref), initial=0.0))
    finite = np.isfinite(lo) & np.isfinite(hi)
    U = np.random.default_rng([seed, 1]).random((probe_budget, n))
    Z = np.random.default_rng([seed, 2]).standard_normal((probe_budget, n))
    width = np.where(finite, hi - lo, 0.0)
    rand = np.where(finite, np.where(finite, lo, 0.0) + U * width, c + scale * Z)
    rand = np.clip(rand, lo, hi)
    P = np.vstack([np.asarray(fixed), rand])

    best = float(np.max(ratio(P)))
    # per-probe cap keeps each probe's refinement independent of the others
    cap = 10.0 * scale / np.maximum(np.max(np.abs(P - c), axis=1), 1e-12)
    V, R = _line_search(ratio, c, P, lo, hi, cap)
    V, R = _ascent(ratio, V, R, lo, hi)
    best = max(best, float(np.max(R)))
    if n == 1:
        best = max(best, _interval_max(ratio, lo[0], hi[0], float(c[0]), scale))
    return max(best, 0.0)


# ---------------------------------------------------------------------------
# decay test and reports


@dataclass(frozen=True)
class DecayTest:
    """Finite-sample proxy for ``x_n -> 0``.

    Passes when the final value is at most ``floor``, or when the log-log slope
    over the last half of the samples is at most ``slope_max`` and the final
    value is at most ``value_tol``.
    """

    slope_max: float = -0.5
    value_tol: float = 1e-3
    floor: float = 1e-8

    def slope(self, values, ns):
        values = np.asarray(values, dtype=float)
        ns = np.asarray(ns, dtype=float)
        k = len(values)
        start = k // 2 if k >= 4 else 0
        x = np.log(ns[start:])
        y = np.log(np.maximum(values[start:], 1e-300))
        if len(x) < 2 or np.ptp(x) == 0:
            return 0.0
        return float(np.polyfit(x, y, 1)[0])

    def passes(self, values, ns=None):
        values = np.asarray(values, dtype=float)
        ns = np.arange(1, len(values) + 1) if ns is None else ns
        final = float(values[-1])
        if final <= self.floor:
            return True
        return final <= self.value_tol and self.slope(values, ns) <= self.slope_max


def _tail(k):
    return slice(k - max(1, math.ceil(k / 4)), k)


def lemma_bound(problem: VIProblem, u, eps):
    """A priori radius from the boundedness lemma.

    With ``x = ||u - u_n||``: ``m x^2 <= a x + b`` where
    ``a = ||alpha|| + ||Au|| + ||f|| + eps`` and
    ``b = |j(u)| + ||alpha|| ||u|| + |beta| + eps``; hence
    ``||u_n|| <= ||u|| + a/m + sqrt(b/m)``.
    """
    ip = problem.inner
    alpha, beta = problem.j.affine_minorant()
    na = ip.norm(alpha)
    a = na + ip.norm(problem.A(u)) + ip.norm(problem.f) + eps
    b = abs(float(problem.j(u))) + na * ip.norm(u) + abs(beta) + eps
    return ip.norm(u) + a / problem.m + math.sqrt(b / problem.m)


@dataclass
class CriterionReport:
    label: str
    n: np.ndarray
    distance: np.ndarray
    eps_one_plus: np.ndarray
    eps_norm: Optional[np.ndarray]
    lp_witness_norm: np.ndarray
    err_to_solution: np.ndarray
    D: float
    D_bound: float
    bounded: bool
    t_approximating: bool
    converging_trend: bool
    tykhonov_approximating: Optional[bool] = None
    lp_approximating: Optional[bool] = None
    implications_ok: Optional[bool] = None
    in_K: Optional[np.ndarray] = field(default=None, repr=False)

    COLUMNS = ("n", "distance", "eps_one_plus", "eps_norm", "lp_witness_norm", "err_to_solution")

    def flags(self):
        return {
            "t_approximating": self.t_approximating,
            "tykhonov_approximating": self.tykhonov_approximating,
            "lp_approximating": self.lp_approximating,
            "converging_trend": self.converging_trend,
            "bounded": self.bounded,
            "implications_ok": self.implications_ok,
        }

    def rows(self):
        eps_norm = self.eps_norm if self.eps_norm is not None else [None] * len(self.n)
        for i in range(len(self.n)):
            yield {
                "n": _num(self.n[i]),
                "distance": float(self.distance[i]),
                "eps_one_plus": float(self.eps_one_plus[i]),
                "eps_norm": None if eps_norm[i] is None else float(eps_norm[i]),
                "lp_witness_norm": float(self.lp_witness_norm[i]),
                "err_to_solution": float(self.err_to_solution[i]),
            }

    def to_dict(self):
        return {
            "label": self.label,
            "flags": self.flags(),
            "D": self.D,
            "D_bound": self.D_bound,
            "rows": list(self.rows()),
        }

    def to_json(self, **kw):
        return json.dumps(self.to_dict(), **kw)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.COLUMNS)
        for row in self.rows():
            w.writerow(["" if row[c] is None else repr(row[c]) for c in self.COLUMNS])
        return buf.getvalue()


def _num(x):
    x = float(x)
    return int(x) if x.is_integer() else x


def boundedness_check(problem: VIProblem, seq: CandidateSequence, eps=1e-3, reference=None):
    """``(D, D_bound, ok)``.

    ``D = max ||u_n||``. ``D_bound`` is the lemma radius for slack ``eps``; a
    tail element beyond it cannot meet the inequality with that slack, so the
    sequence cannot satisfy the residual condition with ``eps_n <= eps``.
    """
    u = problem.reference_solution() if reference is None else reference
    norms = problem.inner.norms(seq.items)
    D = float(np.max(norms))
    bound = lemma_bound(problem, u, eps)
    ok = bool(np.max(norms[_tail(len(seq))]) <= bound)
    return D, bound, ok


def _evaluate(problem, seq, probe_budget, decay, seed, with_norm):
    u = problem.reference_solution()
    K, ip = problem.K, problem.inner
    proj = np.array([K.project(x, ip) for x in seq.items])
    W = proj - seq.items
    dist = ip.norms(W)
    eps1 = np.array([epsilon_residual(problem, x, ResidualMode.ONE_PLUS_NORM, probe_budget, u, seed) for x in seq.items])
    epsn = None
    if with_norm:
        epsn = np.array([epsilon_residual(problem, x, ResidualMode.NORM, probe_budget, u, seed) for x in seq.items])
    err = ip.norms(seq.items - u)
    D, D_bound, bounded = boundedness_check(problem, seq, decay.value_tol, u)
    tail = _tail(len(seq))
    t_flag = bool(
        bounded
        and np.max(np.maximum(dist, eps1)[tail]) <= decay.value_tol
        and decay.passes(dist, seq.indices)
        and decay.passes(eps1, seq.indices)
    )
    conv = bool(np.max(err[tail]) <= decay.value_tol)
    in_K = np.array([K.contains(x) for x in seq.items])
    return CriterionReport(
        seq.label, seq.indices, dist, eps1, epsn, dist.copy(), err, D, D_bound, bounded, t_flag, conv, in_K=in_K
    )


def check_criterion(problem: VIProblem, seq: CandidateSequence, probe_budget=32, decay=DecayTest(), seed=0):
    """Distance and residual columns plus the ``t_approximating`` and
    ``converging_trend`` flags."""
    return _evaluate(problem, seq, probe_budget, decay, seed, with_norm=False)


def classify_sequence(problem: VIProblem, seq: CandidateSequence, probe_budget=32, decay=DecayTest(), seed=0):
    """All flags, including the feasible (Tykhonov) and infeasible
    (Levitin-Polyak) approximating-sequence tests with the ``NORM`` residual."""
    rep = _evaluate(problem, seq, probe_budget, decay, seed, with_norm=True)
    ns = seq.indices
    eps_ok = decay.passes(rep.eps_norm, ns)
    rep.tykhonov_approximating = bool(rep.bounded and np.all(rep.in_K) and eps_ok)
    rep.lp_approximating = bool(rep.bounded and decay.passes(rep.lp_witness_norm, ns) and eps_ok)
    rep.implications_ok = bool(
        (not rep.tykhonov_approximating or rep.lp_approximating) and (not rep.lp_approximating or rep.converging_trend)
    )
    return rep


# ---------------------------------------------------------------------------
# sequence builders


def geometric_indices(max_power=20):
    return [2**k for k in range(max_power + 1)]


def perturbed_sequence(u, direction, ns: Sequence[int], K=None, label="u + e/n"):
    """``u + e / n``; projected onto ``K`` when given."""
    u = np.asarray(u, dtype=float)
    e = np.asarray(direction, dtype=float)
    if K is None:
        return CandidateSequence.from_function(lambda n: u + e / n, ns, label)
    return CandidateSequence.from_function(lambda n: K.project(u + e / n), ns, label)


def constant_sequence(w, ns: Sequence[int], label="constant"):
    w = np.asarray(w, dtype=float)
    return CandidateSequence.from_function(lambda n: w, ns, label)


def iterate_sequence(problem: VIProblem, max_items=40, rho=None, tol=1e-12, max_iter=200_000):
    """Solver iterates ``u^1, u^2, ...`` subsampled geometrically to ``max_items``."""
    from .hilbert import prox_map

    A = problem.A
    rho = default_step(A) if rho is None else rho
    prox = prox_map(problem.K, problem.j, rho, problem.inner)
    u = problem.K.project(np.zeros(problem.dim))
    its = []
    for _ in range(max_iter):
        u_new = prox(u - rho * (A(u) - problem.f))
        its.append(u_new)
        done = np.linalg.norm(u_new - u) <= tol
        u = u_new
        if done:
            break
    k = len(its)
    if k <= max_items:
        idx = np.arange(k)
    else:
        idx = np.unique(np.round(np.geomspace(1, k, max_items)).astype(int)) - 1
    return CandidateSequence([its[i] for i in idx], "solver iterates", idx + 1)
