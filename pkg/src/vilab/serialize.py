"""JSON problem documents and sequence files.

A problem document has the fields ``inner_product``, ``operator``, ``set``,
``functional`` and ``rhs``; see ``PROBLEM_SCHEMA``. Infinite box bounds are
written as ``null``.
"""

from __future__ import annotations

import csv
import io
import json

import jsonschema
import numpy as np
import scipy.sparse as sp

from .criterion import CandidateSequence
from .errors import ValidationError
from .hilbert import (
    AffineSlice,
    Box,
    ConvexFunctional,
    InnerProduct,
    MonotoneOperator,
    WholeSpace,
)
from .solver import VIProblem

_num = {"type": "number"}
_vec = {"type": "array", "items": _num, "minItems": 1}
_bound = {"type": "array", "items": {"type": ["number", "null"]}, "minItems": 1}
_idx = {"type": "array", "items": {"type": "integer", "minimum": 0}}
_matrix = {"type": "array", "items": _vec, "minItems": 1}
_csr = {
    "type": "object",
    "required": ["data", "indices", "indptr", "shape"],
    "properties": {
        "data": {"type": "array", "items": _num},
        "indices": _idx,
        "indptr": _idx,
        "shape": {"type": "array", "items": {"type": "integer", "minimum": 1}, "minItems": 2, "maxItems": 2},
    },
    "additionalProperties": False,
}


def _term(kind, extra_required, extra_props):
    return {
        "type": "object",
        "required": ["kind", *extra_required],
        "properties": {"kind": {"const": kind}, **extra_props},
        "additionalProperties": False,
    }


_weighted = {"dim": {"type": "integer", "minimum": 1}, "indices": _idx, "weights": {"type": "array", "items": {"type": "number", "minimum": 0}}}
_wpp = _term("weighted_positive_part", ["dim", "indices", "weights"], _weighted)
_twa = _term("tangential_weighted_abs", ["dim", "indices", "weights"], _weighted)
_twa_in_sum = _term("tangential_weighted_abs", ["indices", "weights"], _weighted)
_wpp_in_sum = _term("weighted_positive_part", ["indices", "weights"], _weighted)

PROBLEM_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "title": "vilab problem",
    "type": "object",
    "required": ["operator", "set", "functional", "rhs"],
    "properties": {
        "inner_product": {
            "oneOf": [
                _term("euclidean", [], {}),
                _term("gram", ["matrix"], {"matrix": _matrix}),
            ]
        },
        "operator": {
            "type": "object",
            "required": ["kind"],
            "properties": {
                "kind": {"enum": ["linear", "affine"]},
                "matrix": _matrix,
                "csr": _csr,
                "shift": _vec,
                "m": {"type": "number", "exclusiveMinimum": 0},
                "M": {"type": "number", "exclusiveMinimum": 0},
            },
            "oneOf": [{"required": ["matrix"]}, {"required": ["csr"]}],
            "additionalProperties": False,
        },
        "set": {
            "oneOf": [
                _term("whole_space", ["dim"], {"dim": {"type": "integer", "minimum": 1}}),
                _term("box", ["lower", "upper"], {"lower": _bound, "upper": _bound}),
                _term(
                    "affine_slice",
                    ["dim", "indices", "values"],
                    {"dim": {"type": "integer", "minimum": 1}, "indices": _idx, "values": {"type": "array", "items": _num}},
                ),
            ]
        },
        "functional": {
            "oneOf": [
                _term("zero", ["dim"], {"dim": {"type": "integer", "minimum": 1}}),
                _wpp,
                _twa,
                _term(
                    "sum",
                    ["dim", "terms"],
                    {"dim": {"type": "integer", "minimum": 1}, "terms": {"type": "array", "items": {"oneOf": [_wpp_in_sum, _twa_in_sum]}}},
                ),
            ]
        },
        "rhs": _vec,
    },
    "additionalProperties": False,
}

_VALIDATOR = jsonschema.Draft202012Validator(PROBLEM_SCHEMA)


def validate_document(doc):
    """Raise :class:`ValidationError` naming the offending field."""
    err = jsonschema.exceptions.best_match(_VALIDATOR.iter_errors(doc))
    if err is not None:
        raise ValidationError(f"{err.json_path}: {err.message}")


def _bounds(values, fill):
    return np.array([fill if v is None else float(v) for v in values], dtype=float)


def _functional(doc, n):
    kind = doc["kind"]
    if doc.get("dim", n) != n:
        raise ValidationError(f"$.functional.dim: {doc['dim']} does not match operator dimension {n}")
    if kind == "zero":
        return ConvexFunctional.zero(n)
    if kind == "sum":
        out = ConvexFunctional.zero(n)
        for t in doc["terms"]:
            out = out + _functional({**t, "dim": n}, n)
        return out
    idx, w = doc["indices"], doc["weights"]
    if len(idx) != len(w):
        raise ValidationError("$.functional: indices and weights differ in length")
    if idx and max(idx) >= n:
        raise ValidationError("$.functional.indices: index out of range")
    if kind == "weighted_positive_part":
        return ConvexFunctional.weighted_positive_part(n, idx, w)
    return ConvexFunctional.tangential_weighted_abs(n, idx, w)


def problem_from_dict(doc) -> VIProblem:
    validate_document(doc)
    ip_doc = doc.get("inner_product", {"kind": "euclidean"})
    inner = InnerProduct() if ip_doc["kind"] == "euclidean" else InnerProduct.from_gram(ip_doc["matrix"])

    op = doc["operator"]
    if "csr" in op:
        c = op["csr"]
        A = sp.csr_matrix((c["data"], c["indices"], c["indptr"]), shape=tuple(c["shape"]))
    else:
        A = np.asarray(op["matrix"], dtype=float)
        if A.ndim != 2:
            raise ValidationError("$.operator.matrix: rows have different lengths")
    if A.shape[0] != A.shape[1]:
        raise ValidationError("$.operator: matrix is not square")
    n = A.shape[0]
    if not inner.is_euclidean and inner.gram.shape != (n, n):
        raise ValidationError("$.inner_product.matrix: size does not match the operator")
    m, M = op.get("m"), op.get("M")
    if op["kind"] == "affine":
        if "shift" not in op:
            raise ValidationError("$.operator.shift: required for an affine operator")
        if len(op["shift"]) != n:
            raise ValidationError("$.operator.shift: wrong length")
        A_op = MonotoneOperator.affine(A, op["shift"], m, M, inner)
    else:
        A_op = MonotoneOperator.linear(A, m, M, inner)

    s = doc["set"]
    if s["kind"] == "whole_space":
        K = WholeSpace(s["dim"])
    elif s["kind"] == "box":
        K = Box(_bounds(s["lower"], -np.inf), _bounds(s["upper"], np.inf))
    else:
        K = AffineSlice(s["dim"], s["indices"], s["values"])
    if K.dim != n:
        raise ValidationError(f"$.set: dimension {K.dim} does not match operator dimension {n}")
    j = _functional(doc["functional"], n)
    if len(doc["rhs"]) != n:
        raise ValidationError(f"$.rhs: length {len(doc['rhs'])} does not match operator dimension {n}")
    return VIProblem(A_op, j, K, doc["rhs"], inner)


def problem_to_dict(problem: VIProblem):
    return {
        "inner_product": problem.inner.to_dict(),
        "operator": problem.A.to_dict(),
        "set": problem.K.to_dict(),
        "functional": problem.j.to_dict(),
        "rhs": [float(x) for x in problem.f],
    }


def load_problem(path) -> VIProblem:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"invalid JSON at line {exc.lineno}: {exc.msg}") from exc
    return problem_from_dict(doc)


def dump_problem(problem: VIProblem):
    return json.dumps(problem_to_dict(problem), indent=2) + "\n"


def problems_equal(p: VIProblem, q: VIProblem):
    """Structural equality of two problems (exact floating-point comparison)."""

    def mat(x):
        return x.toarray() if sp.issparse(x) else np.asarray(x)

    pa, qa = p.A.affine_part(), q.A.affine_part()
    if p.A.kind != q.A.kind or p.A.m != q.A.m or p.A.M != q.A.M:
        return False
    if not (np.array_equal(mat(pa[0]), mat(qa[0])) and np.array_equal(pa[1], qa[1])):
        return False
    if p.K.to_dict() != q.K.to_dict() or p.inner.to_dict() != q.inner.to_dict():
        return False
    return np.array_equal(p.j.pos, q.j.pos) and np.array_equal(p.j.abs, q.j.abs) and np.array_equal(p.f, q.f)


# ---------------------------------------------------------------------------
# sequences


def read_sequence(text, label="") -> CandidateSequence:
    """One vector per CSV row; an optional header may name an ``n`` column."""
    rows = [r for r in csv.reader(io.StringIO(text)) if r and any(c.strip() for c in r)]
    if not rows:
        raise ValidationError("sequence file is empty")
    header = None
    try:
        [float(c) for c in rows[0]]
    except ValueError:
        header = [c.strip() for c in rows[0]]
        rows = rows[1:]
    try:
        data = [[float(c) for c in r] for r in rows]
    except ValueError as exc:
        raise ValidationError(f"sequence file: {exc}") from exc
    if len({len(r) for r in data}) > 1:
        raise ValidationError("sequence rows have different lengths")
    arr = np.array(data, dtype=float)
    idx = None
    if header is not None and "n" in header:
        k = header.index("n")
        idx = arr[:, k]
        arr = np.delete(arr, k, axis=1)
    return CandidateSequence(arr, label, idx)


def write_sequence(seq: CandidateSequence):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["n"] + [f"u{i}" for i in range(seq.dim)])
    for n, x in zip(seq.indices, seq.items):
        w.writerow([int(n) if float(n).is_integer() else repr(float(n))] + [repr(float(v)) for v in x])
    return buf.getvalue()
