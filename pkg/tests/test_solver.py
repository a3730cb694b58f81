import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import bisect, enumerate_qp, qvi_fixed_point
from vilab.errors import KernelMismatch, MaxIterExceeded, NonContraction, SmallnessViolated, ValidationError
from vilab.hilbert import AffineSlice, Box, ConvexFunctional, MonotoneOperator, PenaltyOperator, WholeSpace
from vilab.solver import (
    FrictionTerm,
    SolveConfig,
    VIProblem,
    check_penalty_kernel,
    contraction_factor,
    default_step,
    solve_penalized,
    solve_qvi_friction,
    solve_vi,
    step_window,
)
from vilab.studies import random_spd_problem, scalar_problem

TIGHT = SolveConfig(tol=1e-13)


def test_scalar_projection_example():
    assert solve_vi(scalar_problem(2.0)).u[0] == pytest.approx(1.0, abs=1e-10)
    assert solve_vi(scalar_problem(0.5)).u[0] == pytest.approx(0.5, abs=1e-10)
    assert solve_vi(scalar_problem(-3.0)).u[0] == pytest.approx(0.0, abs=1e-10)


def test_diagonal_example_matches_enumeration():
    # A = 2I, f = (3, 0.5), K = [0, 1]^2
    S = 2.0 * np.eye(2)
    f = np.array([3.0, 0.5])
    expected = enumerate_qp(S, f, [0, 0], [1, 1])
    np.testing.assert_allclose(expected, [1.0, 0.25], atol=1e-15)
    P = VIProblem(MonotoneOperator.linear(S), ConvexFunctional.zero(2), Box([0, 0], [1, 1]), f)
    np.testing.assert_allclose(solve_vi(P, TIGHT).u, [1.0, 0.25], atol=1e-12)


def test_positive_part_example_matches_enumeration():
    S = np.array([[2.0, 0.5], [0.5, 1.0]])
    f = np.array([1.5, 1.0])
    w = np.array([0.5, 0.25])
    expected = enumerate_qp(S, f, [-1, -1], [1, 1], pos=w)
    P = VIProblem(
        MonotoneOperator.linear(S), ConvexFunctional.weighted_positive_part(2, [0, 1], w), Box([-1, -1], [1, 1]), f
    )
    np.testing.assert_allclose(solve_vi(P, TIGHT).u, expected, atol=1e-10)


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_observed_contraction_below_bound(seed):
    rng = np.random.default_rng(seed)
    P = random_spd_problem(rng, int(rng.integers(1, 8)))
    rep = solve_vi(P, SolveConfig(tol=1e-11))
    assert rep.converged
    assert rep.contraction_bound < 1.0
    assert rep.contraction_estimate <= rep.contraction_bound + 1e-6


def test_nonsymmetric_operator_uses_general_window():
    A = np.array([[2.0, 1.0], [-1.0, 2.0]])
    op = MonotoneOperator.linear(A)
    assert step_window(op) == pytest.approx(2 * op.m / op.M**2)
    rho = default_step(op)
    assert contraction_factor(op, rho) == pytest.approx(np.sqrt(1 - op.m**2 / op.M**2))
    P = VIProblem(op, ConvexFunctional.zero(2), Box([0, 0], [1, 1]), [3.0, 3.0])
    u = solve_vi(P, TIGHT).u
    gaps = P.vi_gap(u, np.random.default_rng(0).uniform(0, 1, (500, 2)))
    assert gaps.min() >= -1e-10


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_solution_is_unique_from_two_starts(seed):
    rng = np.random.default_rng(seed)
    P = random_spd_problem(rng, int(rng.integers(1, 8)))
    a = solve_vi(P, SolveConfig(tol=1e-12, x0=10 * rng.standard_normal(P.dim))).u
    b = solve_vi(P, SolveConfig(tol=1e-12, x0=-10 * rng.standard_normal(P.dim))).u
    assert np.linalg.norm(a - b) <= 1e-9


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_vi_certificate_on_random_feasible_points(seed):
    rng = np.random.default_rng(seed)
    P = random_spd_problem(rng, int(rng.integers(1, 8)))
    u = solve_vi(P, TIGHT).u
    lo, hi = P.K.bounds()
    V = rng.uniform(lo, hi, (1000, P.dim))
    assert P.vi_gap(u, V).min() >= -1e-9


def test_rho_outside_window_raises():
    P = scalar_problem(2.0)
    with pytest.raises(NonContraction):
        solve_vi(P, SolveConfig(rho=2.5))


def test_max_iter_carries_report():
    P = random_spd_problem(np.random.default_rng(1), 5)
    with pytest.raises(MaxIterExceeded) as info:
        solve_vi(P, SolveConfig(tol=1e-14, max_iter=3, method="iterate"))
    assert info.value.report.iterations == 3
    assert not info.value.report.converged


def test_direct_path_on_affine_slice():
    S = np.array([[2.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 2.0]])
    f = np.array([1.0, 0.0, 1.0])
    K = AffineSlice(3, [2], [0.5])
    P = VIProblem(MonotoneOperator.linear(S), ConvexFunctional.zero(3), K, f)
    rep = solve_vi(P)
    assert rep.method == "direct"
    it = solve_vi(P, SolveConfig(tol=1e-13, method="iterate")).u
    np.testing.assert_allclose(rep.u, it, atol=1e-10)
    with pytest.raises(ValidationError):
        solve_vi(scalar_problem(2.0), SolveConfig(method="direct"))


def test_problem_validation():
    op = MonotoneOperator.linear(np.eye(2))
    with pytest.raises(ValidationError):
        VIProblem(op, ConvexFunctional.zero(3), WholeSpace(2), [0, 0])
    with pytest.raises(ValidationError):
        VIProblem(op, ConvexFunctional.zero(2), WholeSpace(2), [0, 0, 0])
    with pytest.raises(ValidationError):
        VIProblem(MonotoneOperator.linear(np.diag([1.0, 0.0])), ConvexFunctional.zero(2), WholeSpace(2), [0, 0])
    with pytest.raises(ValidationError):
        SolveConfig(tol=0.0)


# ---------------------------------------------------------------------------
# penalty


@pytest.mark.parametrize("lam", [1.0, 0.25, 1e-2, 1e-4])
def test_scalar_penalty_matches_bisection(lam):
    root = bisect(lambda x: x + (x - min(max(x, 0.0), 1.0)) / lam - 2.0, -10.0, 10.0)
    assert root == pytest.approx(1.0 + lam / (1.0 + lam), abs=1e-12)
    P = scalar_problem(2.0)
    u = solve_penalized(P, PenaltyOperator.proj_residual(P.K), lam, SolveConfig(tol=1e-12)).u[0]
    assert u == pytest.approx(root, abs=1e-9)


def test_penalty_consistency_on_random_problem():
    rng = np.random.default_rng(3)
    P = random_spd_problem(rng, 5)
    u = P.reference_solution()
    G = PenaltyOperator.proj_residual(P.K)
    errs = [np.linalg.norm(solve_penalized(P, G, lam, SolveConfig(tol=1e-12)).u - u) for lam in (1e-1, 1e-2, 1e-3, 1e-4)]
    assert np.all(np.diff(errs) < 0)
    assert errs[-1] <= 1e-3


def test_tiny_lambda_rejected():
    P = scalar_problem(2.0)
    with pytest.raises(ValidationError):
        solve_penalized(P, PenaltyOperator.proj_residual(P.K), 1e-13)


def test_kernel_mismatch_detected():
    P = scalar_problem(2.0)
    wrong = PenaltyOperator.proj_residual(Box.interval(0.0, 2.0))
    with pytest.raises(KernelMismatch):
        check_penalty_kernel(wrong, P.K)
    with pytest.raises(KernelMismatch):
        solve_penalized(P, wrong, 0.1)
    check_penalty_kernel(PenaltyOperator.proj_residual(P.K), P.K)


# ---------------------------------------------------------------------------
# friction


def _two_node():
    """Normals at 0 and 2, tangents at 1 and 3; normal bound 0.2, positive-part weight 0.5."""
    S = np.array(
        [
            [3.0, -1.0, -1.0, 0.0],
            [-1.0, 2.0, 0.0, -0.5],
            [-1.0, 0.0, 3.0, -1.0],
            [0.0, -0.5, -1.0, 2.0],
        ]
    )
    f = np.array([1.5, 0.8, 1.2, -0.6])
    lo = np.array([-np.inf, -np.inf, -np.inf, -np.inf])
    hi = np.array([0.2, np.inf, 0.2, np.inf])
    pos = np.array([0.5, 0.0, 0.5, 0.0])
    P = VIProblem(MonotoneOperator.linear(S), ConvexFunctional(pos, np.zeros(4)), Box(lo, hi), f)
    return P, S, f, lo, hi, pos


def _friction(mu, F=1.0, m_F=None, d0=1.0):
    P = _two_node()[0]
    coeffs = np.array([mu * F, mu * F])
    return FrictionTerm(np.array([0, 2]), np.array([1, 3]), coeffs, d0, mu, F, P.m if m_F is None else m_F)


def test_qvi_matches_enumeration_fixed_point():
    P, S, f, lo, hi, pos = _two_node()
    u0 = enumerate_qp(S, f, lo, hi, pos)
    assert np.all(u0[[0, 2]] > 0)  # both nodes in contact
    expected, _ = qvi_fixed_point(S, f, lo, hi, pos, [0, 2], [1, 3], [0.01, 0.01])
    rep = solve_qvi_friction(P, _friction(0.01), SolveConfig(tol=1e-13), outer_tol=1e-12)
    np.testing.assert_allclose(rep.u, expected, atol=1e-9)
    assert rep.outer_iterations <= 10
    assert rep.outer_ratio < 0.1


def test_friction_effect_grows_with_mu():
    P = _two_node()[0]
    cfg = SolveConfig(tol=1e-13)
    u0 = solve_vi(P, cfg).u
    d1 = np.linalg.norm(solve_qvi_friction(P, _friction(0.01), cfg).u - u0)
    d2 = np.linalg.norm(solve_qvi_friction(P, _friction(0.02), cfg).u - u0)
    assert 0 < d1 < d2


def test_zero_friction_is_bitwise_frictionless():
    P = _two_node()[0]
    cfg = SolveConfig(tol=1e-12)
    rep = solve_qvi_friction(P, _friction(0.0), cfg)
    assert np.array_equal(rep.u, solve_vi(P, cfg).u)
    assert rep.outer_iterations == 1


def test_smallness_guard():
    with pytest.raises(SmallnessViolated):
        solve_qvi_friction(_two_node()[0], _friction(1.0, F=1.0, m_F=0.5, d0=1.0))
    assert _friction(0.3, F=2.0, d0=1.5).smallness_value == pytest.approx(1.5**2 * 0.3 * 2.0)
