"""Golden examples on the scalar problem ``K = [0, 1]``, ``A = I``, ``j = 0``."""

from __future__ import annotations

import numpy as np

from .criterion import CandidateSequence, ResidualMode, classify_sequence, epsilon_residual, geometric_indices
from .solver import solve_vi
from .studies import scalar_problem


def _case(name, passed, **values):
    return {"name": name, "passed": bool(passed), "values": {k: float(v) for k, v in values.items()}}


def golden_projection(seed=0):
    u = solve_vi(scalar_problem(2.0)).u[0]
    return _case("solution equals projection of f = 2", abs(u - 1.0) <= 1e-10, u=u)


def golden_infeasible_constant(seed=0):
    P = scalar_problem(2.0)
    seq = CandidateSequence.from_function(lambda n: [2.0], geometric_indices(), "u_n = 2")
    rep = classify_sequence(P, seq, seed=seed)
    ok = np.all(rep.eps_one_plus == 0) and np.all(rep.eps_norm == 0) and np.allclose(rep.distance, 1.0, atol=1e-12, rtol=0)
    ok = ok and not rep.t_approximating and not rep.converging_trend
    return _case("u_n = f outside K: eps = 0, d = 1, not convergent", ok, eps_max=rep.eps_one_plus.max(), d_min=rep.distance.min())


def golden_feasible_constant(seed=0):
    P = scalar_problem(0.5)
    seq = CandidateSequence.from_function(lambda n: [0.0], range(1, 17), "u_n = 0")
    rep = classify_sequence(P, seq, seed=seed)
    eps = rep.eps_one_plus
    ok = np.all(rep.distance == 0) and np.all(eps[1:] >= 0.2) and not rep.t_approximating
    return _case("f = 1/2, u_n = 0: d = 0, eps near 1/4, not convergent", ok, eps_min=eps[1:].min(), eps_max=eps.max())


def golden_mode_separation(seed=0):
    P = scalar_problem(2.0)
    worst_norm, worst_ratio = np.inf, 0.0
    for n in range(2, 65):
        un = [1.0 - 1.0 / n]
        e_norm = epsilon_residual(P, un, ResidualMode.NORM, seed=seed)
        e_one = epsilon_residual(P, un, ResidualMode.ONE_PLUS_NORM, seed=seed)
        worst_norm = min(worst_norm, e_norm)
        worst_ratio = max(worst_ratio, e_one * n / 2.0)
    return _case(
        "u_n = 1 - 1/n: NORM residual >= 1, ONE_PLUS_NORM residual <= 2/n",
        worst_norm >= 1.0 and worst_ratio <= 1.0,
        min_eps_norm=worst_norm,
        max_eps_one_plus_times_n_over_2=worst_ratio,
    )


def golden_levitin_polyak(seed=0):
    P = scalar_problem(1.0)
    seq = CandidateSequence.from_function(lambda n: [1.0 + 1.0 / n], geometric_indices(), "u_n = 1 + 1/n")
    rep = classify_sequence(P, seq, seed=seed)
    return _case(
        "u_n = 1 + 1/n with f = 1: Levitin-Polyak but not Tykhonov",
        rep.lp_approximating and not rep.tykhonov_approximating,
        D=rep.D,
        D_bound=rep.D_bound,
    )


GOLDEN = [golden_projection, golden_infeasible_constant, golden_feasible_constant, golden_mode_separation, golden_levitin_polyak]


def run_selftest(seed=0):
    return [case(seed) for case in GOLDEN]
