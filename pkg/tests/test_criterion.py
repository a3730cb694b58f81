import numpy as np
import pytest
from hypothesis import assume, given, settings
from hypothesis import strategies as st

from oracles import grid_argmax_1d
from vilab.criterion import (
    CandidateSequence,
    CriterionReport,
    DecayTest,
    ResidualMode,
    boundedness_check,
    check_criterion,
    classify_sequence,
    constant_sequence,
    epsilon_residual,
    geometric_indices,
    iterate_sequence,
    lemma_bound,
    perturbed_sequence,
)
from vilab.errors import ValidationError
from vilab.hilbert import Box, ConvexFunctional, MonotoneOperator
from vilab.solver import VIProblem
from vilab.studies import random_spd_problem, scalar_problem


def _scalar_sup(a, f, lo, hi, w, u_n, mode):
    """Grid supremum of the residual ratio for a 1-D problem with j = w max(v, 0)."""

    def ratio(v):
        phi = (f - a * u_n) * (v - u_n) + w * max(u_n, 0.0) - w * np.maximum(v, 0.0)
        d = np.abs(v - u_n)
        if mode is ResidualMode.NORM:
            return np.where(d > 1e-12, phi / np.where(d > 0, d, 1.0), -np.inf)
        return phi / (1.0 + d)

    return max(grid_argmax_1d(ratio, lo, hi)[1], 0.0)


# ---------------------------------------------------------------------------
# frozen golden values


def test_feasible_constant_sup_is_quarter():
    sup = _scalar_sup(1.0, 0.5, 0.0, 1.0, 0.0, 0.0, ResidualMode.ONE_PLUS_NORM)
    assert sup == pytest.approx(0.25, abs=1e-9)
    assert epsilon_residual(scalar_problem(0.5), [0.0]) == pytest.approx(0.25, abs=1e-9)


@pytest.mark.parametrize("n", [2, 3, 10, 64])
def test_mode_separation_values(n):
    un = 1.0 - 1.0 / n
    # NORM: phi / |v - u_n| = 1 + 1/n for every v > u_n; ONE_PLUS: sup at v = 1 gives 1/n
    assert _scalar_sup(1.0, 2.0, 0.0, 1.0, 0.0, un, ResidualMode.NORM) == pytest.approx(1 + 1 / n, abs=1e-9)
    assert _scalar_sup(1.0, 2.0, 0.0, 1.0, 0.0, un, ResidualMode.ONE_PLUS_NORM) == pytest.approx(1 / n, abs=1e-9)
    P = scalar_problem(2.0)
    assert epsilon_residual(P, [un], ResidualMode.NORM) == pytest.approx(1 + 1 / n, abs=1e-9)
    assert epsilon_residual(P, [un], ResidualMode.ONE_PLUS_NORM) == pytest.approx(1 / n, abs=1e-9)


def test_infeasible_fixed_point_has_zero_residual():
    P = scalar_problem(2.0)
    assert epsilon_residual(P, [2.0]) == 0.0
    assert epsilon_residual(P, [2.0], ResidualMode.NORM) == 0.0


@settings(max_examples=40, deadline=None)
@given(
    st.floats(0.2, 3.0),
    st.floats(-3.0, 3.0),
    st.floats(0.0, 1.0),
    st.floats(-2.0, 2.0),
    st.sampled_from(list(ResidualMode)),
)
def test_scalar_residual_matches_grid_supremum(a, f, w, u_n, mode):
    lo, hi = -1.0, 1.5
    P = VIProblem(MonotoneOperator.linear([[a]]), ConvexFunctional.weighted_positive_part(1, [0], [w]), Box.interval(lo, hi), [f])
    est = epsilon_residual(P, [u_n], mode)
    sup = _scalar_sup(a, f, lo, hi, w, u_n, mode)
    # certified lower bound, and tight in one dimension
    assert est <= sup + 1e-6 * (1 + sup)
    assert est >= sup - 1e-4 * (1 + sup)


# ---------------------------------------------------------------------------
# properties of the estimator


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_residual_monotone_in_probe_budget(seed):
    rng = np.random.default_rng(seed)
    P = random_spd_problem(rng, int(rng.integers(2, 7)))
    x = P.reference_solution() + rng.standard_normal(P.dim)
    values = [epsilon_residual(P, x, probe_budget=b, seed=seed % 1000) for b in (8, 16, 32)]
    assert values[0] <= values[1] <= values[2]


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_residual_vanishes_at_solution_and_norm_dominates(seed):
    rng = np.random.default_rng(seed)
    P = random_spd_problem(rng, int(rng.integers(2, 7)))
    u = P.reference_solution()
    assert epsilon_residual(P, u) <= 1e-9
    x = u + 0.5 * rng.standard_normal(P.dim)
    assert epsilon_residual(P, x, ResidualMode.NORM) >= epsilon_residual(P, x, ResidualMode.ONE_PLUS_NORM) - 1e-12


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_residual_is_a_lower_bound(seed):
    # every point of K gives a ratio no larger than the true supremum; the estimate
    # must not exceed the best of many random feasible points by more than it can justify
    rng = np.random.default_rng(seed)
    P = random_spd_problem(rng, int(rng.integers(1, 5)))
    x = P.reference_solution() + rng.standard_normal(P.dim)
    est = epsilon_residual(P, x)
    lo, hi = P.K.bounds()
    V = rng.uniform(lo, hi, (20000, P.dim))
    phi = -P.vi_gap(x, V)
    best = np.max(phi / (1 + np.linalg.norm(V - x, axis=1)))
    # the sampled maximum is itself a lower bound, so est may exceed it only slightly
    assert est >= best - 1e-2 * (1 + abs(best))
    assert est >= 0.0


def test_residual_validates_budget():
    with pytest.raises(ValidationError):
        epsilon_residual(scalar_problem(2.0), [0.0], probe_budget=4)


# ---------------------------------------------------------------------------
# sequences, decay test and reports


def test_candidate_sequence_validation():
    with pytest.raises(ValidationError):
        CandidateSequence([[1.0, 2.0], [1.0]])
    with pytest.raises(ValidationError):
        CandidateSequence([])
    with pytest.raises(ValidationError):
        CandidateSequence([[1.0], [2.0]], indices=[2, 1])
    with pytest.raises(ValidationError):
        CandidateSequence([[np.nan]])
    seq = CandidateSequence([[1.0], [2.0]])
    np.testing.assert_array_equal(seq.indices, [1, 2])
    assert len(seq) == 2 and seq.dim == 1


def test_decay_test():
    ns = np.array(geometric_indices(12), dtype=float)
    d = DecayTest()
    assert d.passes(1.0 / ns, ns)
    assert not d.passes(np.ones_like(ns), ns)
    assert d.passes(np.zeros_like(ns), ns)
    assert not d.passes(1.0 / np.log(ns + 1), ns)
    assert d.slope(1.0 / ns, ns) == pytest.approx(-1.0)


def test_lemma_bound_value():
    P = scalar_problem(2.0)
    # u = 1, m = 1: a = |Au| + |f| + eps = 3 + eps, b = eps
    eps = 1e-3
    assert lemma_bound(P, np.array([1.0]), eps) == pytest.approx(1 + 3 + eps + np.sqrt(eps))


def test_unbounded_sequence_is_flagged():
    P = scalar_problem(2.0)
    seq = CandidateSequence.from_function(lambda n: [float(n)], geometric_indices(10), "u_n = n")
    D, bound, ok = boundedness_check(P, seq)
    assert D == 1024 and not ok
    rep = classify_sequence(P, seq)
    assert not rep.bounded and not rep.t_approximating


def test_levitin_polyak_flags_and_report_io():
    P = scalar_problem(1.0)
    seq = CandidateSequence.from_function(lambda n: [1.0 + 1.0 / n], geometric_indices(), "lp")
    rep = classify_sequence(P, seq)
    assert rep.lp_approximating and not rep.tykhonov_approximating
    assert rep.implications_ok and rep.converging_trend and rep.t_approximating
    assert rep.D == pytest.approx(2.0)
    lines = rep.to_csv().splitlines()
    assert lines[0] == ",".join(CriterionReport.COLUMNS)
    assert len(lines) == len(seq) + 1
    assert rep.to_dict()["flags"]["lp_approximating"] is True


def test_tykhonov_sequence():
    P = scalar_problem(2.0)
    seq = CandidateSequence.from_function(lambda n: [1.0 - 1.0 / (n + 1)], geometric_indices(), "feasible")
    rep = classify_sequence(P, seq)
    # NORM residual stays above 1 so the feasible sequence is not Tykhonov
    assert not rep.tykhonov_approximating
    assert rep.t_approximating and rep.converging_trend


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_flags_agree_on_constructed_sequences(seed):
    rng = np.random.default_rng(seed)
    P = random_spd_problem(rng, int(rng.integers(2, 6)))
    u = P.reference_solution()
    e = rng.standard_normal(P.dim)
    e /= np.linalg.norm(e)
    ns = geometric_indices()
    good = check_criterion(P, perturbed_sequence(u, e, ns, P.K), probe_budget=8)
    assert good.t_approximating and good.converging_trend
    w = P.K.project(u + 0.5 * e)
    assume(np.linalg.norm(w - u) > 0.05)
    bad = check_criterion(P, constant_sequence(w, ns), probe_budget=8)
    assert not bad.t_approximating and not bad.converging_trend


def test_iterate_sequence_converges():
    P = random_spd_problem(np.random.default_rng(11), 4)
    seq = iterate_sequence(P, max_items=30)
    assert len(seq) <= 30
    assert np.all(np.diff(seq.indices) > 0)
    assert np.linalg.norm(seq.items[-1] - P.reference_solution()) <= 1e-9
