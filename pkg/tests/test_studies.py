import numpy as np
import pytest

from vilab.errors import ValidationError
from vilab.hilbert import Box, PenaltyOperator
from vilab.studies import (
    ConvergenceTable,
    StudyLadder,
    default_lambdas,
    interval_mosco_ladder,
    random_data_ladder,
    run_data_study,
    run_mosco_study,
    run_penalty_study,
    scalar_data_ladder,
    scalar_penalty_ladder,
    scalar_problem,
    smoothed_nonincreasing,
)

GEOMETRIC = [2**p for p in range(13)]


def test_scalar_penalty_table():
    table = run_penalty_study(scalar_penalty_ladder())
    lam = np.array(default_lambdas())
    np.testing.assert_allclose(table.column("error"), lam / (1 + lam), atol=1e-9, rtol=0)
    np.testing.assert_allclose(table.column("distance"), lam / (1 + lam), atol=1e-9, rtol=0)
    assert table.passed
    assert table.checks["zzz_sign"] and table.checks["distance_nonincreasing"]
    assert table.columns[0] == "param" and "zzz_max" in table.columns


def test_scalar_data_table_is_exact():
    # u = P_[0,1](2 + 1/n) = 1 for every n
    table = run_data_study(scalar_data_ladder(GEOMETRIC))
    assert np.all(table.column("error") == 0.0)
    np.testing.assert_allclose(table.column("data_gap"), 1.0 / np.array(GEOMETRIC), rtol=1e-14)
    assert table.passed


def test_interval_mosco_table():
    # K_n = [0, 1 + 1/n] gives u_n = 1 + 1/n
    table = run_mosco_study(interval_mosco_ladder(GEOMETRIC))
    np.testing.assert_allclose(table.column("error"), 1.0 / np.array(GEOMETRIC), atol=1e-10, rtol=0)
    assert np.all(table.column("mosco_witness") == 0.0)
    assert table.passed


def test_harmonic_mosco_ladder_fails_threshold():
    table = run_mosco_study(interval_mosco_ladder())
    assert not table.checks["final_below_threshold"]
    assert table.checks["monotone_trend"]


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_random_data_study_bounds(seed):
    rng = np.random.default_rng(seed)
    ladder = random_data_ladder(rng, 5, GEOMETRIC)
    table = run_data_study(ladder)
    assert table.checks["eps_bound"] and table.checks["lipschitz_rate"]
    assert table.passed


def test_ladder_validation():
    P = scalar_problem()
    G = PenaltyOperator.proj_residual(P.K)
    with pytest.raises(ValidationError):
        StudyLadder.penalty_ladder(P, G, [1.0, 0.5, 0.5, 0.1])
    with pytest.raises(ValidationError):
        StudyLadder.penalty_ladder(P, G, [1.0, 0.5, 0.1])
    with pytest.raises(ValidationError):
        StudyLadder("other", P, (1, 2, 3, 4))
    with pytest.raises(ValidationError):
        StudyLadder.mosco_ladder(P, [Box([0, 0], [1, 1])] * 4)
    with pytest.raises(ValidationError):
        run_data_study(scalar_penalty_ladder())


def test_table_csv_and_manifest_are_deterministic():
    a = run_mosco_study(interval_mosco_ladder(GEOMETRIC))
    b = run_mosco_study(interval_mosco_ladder(GEOMETRIC))
    assert a.to_csv() == b.to_csv()
    assert a.manifest_json() == b.manifest_json()
    lines = a.to_csv().splitlines()
    assert lines[0] == ",".join(a.columns)
    assert len(lines) == len(GEOMETRIC) + 1
    man = a.manifest()
    assert man["rows"] == len(GEOMETRIC) and len(man["reference_sha256"]) == 64


def test_failed_rows_are_recorded():
    t = ConvergenceTable("x", ["param", "status"], [{"param": 1, "status": "ok"}, {"param": 2, "status": "MaxIterExceeded"}], np.zeros(1))
    assert len(t.failed_rows) == 1 and not t.passed


def test_smoothed_nonincreasing():
    assert smoothed_nonincreasing([4, 2, 2.5, 1, 1.2, 0.5])
    assert not smoothed_nonincreasing([1, 2, 3, 4])
    assert smoothed_nonincreasing([1, 2])
