import json

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings
from hypothesis import strategies as st

from vilab.criterion import CandidateSequence
from vilab.errors import ValidationError
from vilab.hilbert import AffineSlice, Box, ConvexFunctional, InnerProduct, MonotoneOperator, WholeSpace
from vilab.serialize import (
    dump_problem,
    load_problem,
    problem_from_dict,
    problem_to_dict,
    problems_equal,
    read_sequence,
    write_sequence,
)
from vilab.solver import VIProblem
from vilab.studies import random_spd_problem

SCALAR = {
    "operator": {"kind": "linear", "matrix": [[1.0]]},
    "set": {"kind": "box", "lower": [0.0], "upper": [1.0]},
    "functional": {"kind": "zero", "dim": 1},
    "rhs": [2.0],
}


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_round_trip_random_problems(seed):
    P = random_spd_problem(np.random.default_rng(seed), int(seed % 6) + 1)
    back = problem_from_dict(json.loads(dump_problem(P)))
    assert problems_equal(P, back)
    assert dump_problem(back) == dump_problem(P)


def test_round_trip_other_kinds(tmp_path):
    n = 3
    S = sp.csr_matrix(np.diag([2.0, 3.0, 4.0]))
    j = ConvexFunctional.weighted_positive_part(n, [0], [0.5]) + ConvexFunctional.tangential_weighted_abs(n, [2], [0.1])
    cases = [
        VIProblem(MonotoneOperator.linear(S), j, AffineSlice(n, [1], [0.5]), [1, 2, 3]),
        VIProblem(MonotoneOperator.affine(np.eye(n), [1, 0, -1]), ConvexFunctional.zero(n), WholeSpace(n), [0, 0, 0]),
        VIProblem(
            MonotoneOperator.linear(np.eye(n), inner=InnerProduct.from_gram(np.diag([1.0, 2.0, 3.0]))),
            ConvexFunctional.zero(n),
            AffineSlice(n, [0], [1.0]),
            [1, 1, 1],
            InnerProduct.from_gram(np.diag([1.0, 2.0, 3.0])),
        ),
        VIProblem(MonotoneOperator.linear(np.eye(2)), ConvexFunctional.zero(2), Box([0.0, -np.inf], [np.inf, 1.0]), [1, 1]),
    ]
    for k, P in enumerate(cases):
        path = tmp_path / f"p{k}.json"
        path.write_text(dump_problem(P))
        assert problems_equal(P, load_problem(path))


@pytest.mark.parametrize(
    "mutate, field",
    [
        (lambda d: d["set"].__setitem__("upper", ["x"]), "$.set"),
        (lambda d: d.pop("rhs"), "rhs"),
        (lambda d: d["operator"].__setitem__("kind", "cubic"), "$.operator"),
        (lambda d: d.__setitem__("rhs", [1.0, 2.0]), "$.rhs"),
        (lambda d: d["functional"].__setitem__("dim", 3), "$.functional"),
        (lambda d: d.__setitem__("extra", 1), "extra"),
    ],
)
def test_invalid_documents_name_the_field(mutate, field):
    doc = json.loads(json.dumps(SCALAR))
    mutate(doc)
    with pytest.raises(ValidationError) as info:
        problem_from_dict(doc)
    assert field in str(info.value)


def test_bad_json_file(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    with pytest.raises(ValidationError):
        load_problem(path)


def test_empty_box_rejected():
    doc = json.loads(json.dumps(SCALAR))
    doc["set"]["lower"] = [2.0]
    with pytest.raises(ValidationError):
        problem_from_dict(doc)


def test_problem_to_dict_shape():
    d = problem_to_dict(problem_from_dict(SCALAR))
    assert d["inner_product"] == {"kind": "euclidean"}
    assert d["set"] == SCALAR["set"]


def test_sequence_round_trip():
    seq = CandidateSequence([[1.0, 2.0], [0.5, 1.0 / 3.0]], "s", [1, 4])
    back = read_sequence(write_sequence(seq))
    np.testing.assert_array_equal(back.items, seq.items)
    np.testing.assert_array_equal(back.indices, seq.indices)


def test_sequence_without_header():
    seq = read_sequence("1.0,2.0\n3.0,4.0\n")
    np.testing.assert_array_equal(seq.indices, [1, 2])
    with pytest.raises(ValidationError):
        read_sequence("1.0,2.0\n3.0\n")
    with pytest.raises(ValidationError):
        read_sequence("")
