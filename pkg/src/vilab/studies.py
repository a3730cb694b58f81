"""Convergence experiments: penalty, data perturbation and set perturbation.

Each runner solves one perturbed problem per ladder entry and tabulates the
error against the unperturbed solution together with the criterion quantities
``d(u_n, K)`` and the residual estimate.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .criterion import ResidualMode, epsilon_residual
from .errors import ValidationError, VIError
from .hilbert import Box, ConvexFunctional, ConvexSet, MonotoneOperator, PenaltyOperator
from .solver import SolveConfig, VIProblem, solve_penalized, solve_vi

STUDY_CONFIG = SolveConfig(tol=1e-12)
DECAY_THRESHOLD = 1e-3


def default_lambdas(count=13):
    """``2^-n`` for ``n = 0 .. count-1``."""
    return [2.0**-n for n in range(count)]


def harmonic(count=12):
    return list(range(1, count + 1))


@dataclass(frozen=True, eq=False)
class StudyLadder:
    """A sequence of perturbed problems around ``base``.

    ``kind`` is ``"penalty"`` (``params`` = decreasing lambdas, ``penalty`` = G),
    ``"data"`` (``params`` = right-hand sides) or ``"mosco"`` (``params`` = sets).
    ``labels`` are the printed parameter values.
    """

    kind: str
    base: VIProblem
    params: tuple
    penalty: Optional[PenaltyOperator] = None
    labels: tuple = ()

    def __post_init__(self):
        if self.kind not in ("penalty", "data", "mosco"):
            raise ValidationError(f"unknown ladder kind {self.kind!r}")
        params = tuple(self.params)
        if len(params) < 4:
            raise ValidationError("a ladder needs at least 4 entries")
        if self.kind == "penalty":
            lam = np.asarray(params, dtype=float)
            if self.penalty is None:
                raise ValidationError("penalty ladder needs a penalty operator")
            if np.any(lam <= 0) or np.any(np.diff(lam) >= 0):
                raise ValidationError("penalty parameters must be positive and strictly decreasing")
        if self.kind == "mosco":
            for K in params:
                if not isinstance(K, ConvexSet) or K.dim != self.base.dim:
                    raise ValidationError("mosco ladder entries must be sets of the problem dimension")
        object.__setattr__(self, "params", params)
        labels = tuple(self.labels) if self.labels else tuple(range(1, len(params) + 1))
        if self.kind == "penalty" and not self.labels:
            labels = tuple(float(x) for x in params)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def penalty_ladder(cls, base, G, lambdas=None):
        return cls("penalty", base, tuple(default_lambdas() if lambdas is None else lambdas), G)

    @classmethod
    def data_ladder(cls, base, rhs_list, labels=()):
        return cls("data", base, tuple(np.asarray(f, dtype=float) for f in rhs_list), labels=labels)

    @classmethod
    def mosco_ladder(cls, base, sets, labels=()):
        return cls("mosco", base, tuple(sets), labels=labels)


@dataclass
class ConvergenceTable:
    kind: str
    columns: list
    rows: list
    reference_u: np.ndarray
    checks: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    @property
    def failed_rows(self):
        return [r for r in self.rows if r.get("status", "ok") != "ok"]

    @property
    def passed(self):
        return not self.failed_rows and all(self.checks.values())

    def column(self, name):
        return np.array([r[name] if r[name] is not None else np.nan for r in self.rows], dtype=float)

    def to_csv(self):
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(self.columns)
        for r in self.rows:
            w.writerow([_fmt(r.get(c)) for c in self.columns])
        return buf.getvalue()

    def reference_hash(self):
        return hashlib.sha256(np.ascontiguousarray(self.reference_u, dtype="<f8").tobytes()).hexdigest()

    def manifest(self):
        return {
            "kind": self.kind,
            "columns": list(self.columns),
            "rows": len(self.rows),
            "reference_sha256": self.reference_hash(),
            "reference_norm": float(np.linalg.norm(self.reference_u)),
            "checks": {k: bool(v) for k, v in self.checks.items()},
            "failed_rows": len(self.failed_rows),
            **self.meta,
        }

    def manifest_json(self):
        return json.dumps(self.manifest(), indent=2, sort_keys=True) + "\n"


def _fmt(x):
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def smoothed_nonincreasing(values, slack=1e-9):
    """Pairwise averages of ``values`` never increase by more than ``slack``."""
    v = np.asarray(values, dtype=float)
    if len(v) < 3:
        return True
    s = 0.5 * (v[:-1] + v[1:])
    return bool(np.all(np.diff(s) <= slack))


def _residual(problem, u, ref, probe_budget):
    return epsilon_residual(problem, u, ResidualMode.ONE_PLUS_NORM, probe_budget, reference=ref)


def _common_checks(table_rows, threshold):
    err = np.array([r["error"] for r in table_rows if r["status"] == "ok"])
    return {
        "final_below_threshold": bool(err.size and err[-1] <= threshold),
        "monotone_trend": smoothed_nonincreasing(err),
    }


def run_penalty_study(ladder: StudyLadder, config=STUDY_CONFIG, probe_budget=16, threshold=DECAY_THRESHOLD, spot_checks=32):
    """Solve with ``A + G / lambda`` for every lambda in the ladder."""
    if ladder.kind != "penalty":
        raise ValidationError("run_penalty_study needs a penalty ladder")
    P, G = ladder.base, ladder.penalty
    u = P.reference_solution()
    rng = np.random.default_rng(0)
    zzz = G.kind == "proj_residual"
    if zzz:
        probes = np.array([P.K.project(u + 2.0 * rng.standard_normal(P.dim)) for _ in range(spot_checks)])
    rows = []
    for lam, label in zip(ladder.params, ladder.labels):
        row = {"param": label, "error": None, "distance": None, "eps": None, "iterations": None, "status": "ok"}
        try:
            rep = solve_penalized(P, G, lam, config)
        except VIError as exc:
            row["status"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            continue
        un = rep.u
        row.update(
            error=P.inner.norm(un - u),
            distance=P.K.distance(un, P.inner),
            eps=_residual(P, un, u, probe_budget),
            iterations=rep.iterations,
        )
        if zzz:
            row["zzz_max"] = float(np.max((probes - un) @ G(un)))
        rows.append(row)
    cols = ["param", "error", "distance", "eps", "iterations", "status"]
    checks = _common_checks(rows, threshold)
    dist = [r["distance"] for r in rows if r["status"] == "ok"]
    checks["distance_nonincreasing"] = bool(np.all(np.diff(dist) <= 1e-9)) if len(dist) > 1 else True
    if zzz:
        cols.insert(5, "zzz_max")
        checks["zzz_sign"] = all(r["zzz_max"] <= 1e-12 for r in rows if r["status"] == "ok")
    return ConvergenceTable("penalty", cols, rows, u, checks, {"lambdas": [float(x) for x in ladder.params]})


def run_data_study(ladder: StudyLadder, config=STUDY_CONFIG, probe_budget=16, threshold=DECAY_THRESHOLD):
    """Solve with perturbed right-hand sides ``f_n``.

    Checks per row: ``eps_n <= ||f_n - f|| + 1e-8`` and the strong-monotonicity
    rate ``||u_n - u|| <= ||f_n - f|| / m + 1e-9``.
    """
    if ladder.kind != "data":
        raise ValidationError("run_data_study needs a data ladder")
    P = ladder.base
    u = P.reference_solution()
    rows = []
    for fn, label in zip(ladder.params, ladder.labels):
        row = {"param": label, "error": None, "distance": None, "eps": None, "iterations": None, "status": "ok"}
        try:
            rep = solve_vi(P.with_rhs(fn), config)
        except VIError as exc:
            row["status"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            continue
        un = rep.u
        df = P.inner.norm(fn - P.f)
        row.update(
            error=P.inner.norm(un - u),
            distance=P.K.distance(un, P.inner),
            eps=_residual(P, un, u, probe_budget),
            iterations=rep.iterations,
            data_gap=df,
        )
        row["eps_ok"] = row["eps"] <= df + 1e-8
        row["rate_ok"] = row["error"] <= df / P.m + 1e-9
        rows.append(row)
    ok = [r for r in rows if r["status"] == "ok"]
    checks = _common_checks(rows, threshold)
    checks["eps_bound"] = all(r["eps_ok"] for r in ok)
    checks["lipschitz_rate"] = all(r["rate_ok"] for r in ok)
    cols = ["param", "data_gap", "error", "distance", "eps", "iterations", "eps_ok", "rate_ok", "status"]
    return ConvergenceTable("data", cols, rows, u, checks)


def run_mosco_study(ladder: StudyLadder, config=STUDY_CONFIG, probe_budget=16, threshold=DECAY_THRESHOLD):
    """Solve over perturbed sets ``K_n``; records ``||P_{K_n}(u) - u||``."""
    if ladder.kind != "mosco":
        raise ValidationError("run_mosco_study needs a mosco ladder")
    P = ladder.base
    u = P.reference_solution()
    rows = []
    for Kn, label in zip(ladder.params, ladder.labels):
        row = {"param": label, "error": None, "distance": None, "eps": None, "iterations": None, "status": "ok"}
        try:
            rep = solve_vi(P.with_set(Kn), config)
        except VIError as exc:
            row["status"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            continue
        un = rep.u
        row.update(
            error=P.inner.norm(un - u),
            distance=P.K.distance(un, P.inner),
            eps=_residual(P, un, u, probe_budget),
            iterations=rep.iterations,
            mosco_witness=P.inner.norm(Kn.project(u, P.inner) - u),
        )
        rows.append(row)
    cols = ["param", "error", "distance", "eps", "mosco_witness", "iterations", "status"]
    return ConvergenceTable("mosco", cols, rows, u, _common_checks(rows, threshold))


# ---------------------------------------------------------------------------
# presets


def scalar_problem(f=2.0, lo=0.0, hi=1.0):
    """``K = [lo, hi]``, ``A = I``, ``j = 0`` on the real line."""
    return VIProblem(MonotoneOperator.linear(np.eye(1)), ConvexFunctional.zero(1), Box.interval(lo, hi), [f])


def scalar_penalty_ladder(lambdas=None):
    P = scalar_problem(2.0)
    return StudyLadder.penalty_ladder(P, PenaltyOperator.proj_residual(P.K), lambdas)


def scalar_data_ladder(ns=None):
    ns = harmonic() if ns is None else ns
    return StudyLadder.data_ladder(scalar_problem(2.0), [[2.0 + 1.0 / n] for n in ns], labels=tuple(ns))


def interval_mosco_ladder(ns=None):
    ns = harmonic() if ns is None else ns
    return StudyLadder.mosco_ladder(scalar_problem(2.0), [Box.interval(0.0, 1.0 + 1.0 / n) for n in ns], labels=tuple(ns))


def random_spd_problem(rng, n=6, box=True, friction=True):
    """Random SPD operator, box set and positive-part functional."""
    B = rng.standard_normal((n, n))
    S = B @ B.T / n + 0.5 * np.eye(n)
    if box:
        K = Box(-rng.uniform(0.2, 1.0, n), rng.uniform(0.2, 1.0, n))
    else:
        from .hilbert import WholeSpace

        K = WholeSpace(n)
    j = ConvexFunctional.weighted_positive_part(n, np.arange(n), rng.uniform(0.0, 0.5, n)) if friction else ConvexFunctional.zero(n)
    return VIProblem(MonotoneOperator.linear(S), j, K, 3.0 * rng.standard_normal(n))


def random_data_ladder(rng, n=6, ns=None):
    P = random_spd_problem(rng, n)
    ns = harmonic() if ns is None else ns
    r = rng.standard_normal(n)
    return StudyLadder.data_ladder(P, [P.f + r / k for k in ns], labels=tuple(ns))
