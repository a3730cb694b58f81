"""P1 discretisation of the stationary heat problem

    -div grad u = g in the domain,  u = 0 on gamma1,
    -du/dnu = q on gamma2,          u = b on gamma3,

and of its penalised version where the gamma3 condition becomes the flux law
``-du/dnu = (u - b) / lambda``.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .criterion import epsilon_residual
from .errors import NonSPD, ValidationError, VIError
from .hilbert import AffineSlice, ConvexFunctional, MonotoneOperator, PenaltyOperator
from .mesh import Mesh, interval_mesh, rectangle_mesh
from .solver import SolveConfig, VIProblem, solve_penalized, solve_vi
from .studies import ConvergenceTable, default_lambdas, smoothed_nonincreasing


def _nodal(values, n, name):
    v = np.asarray(values, dtype=float)
    if v.ndim == 0:
        return np.full(n, float(v))
    if v.shape != (n,):
        raise ValidationError(f"{name} must be a scalar or one value per node")
    return v


def p1_gradients(mesh: Mesh):
    """Per-element gradients of the barycentric basis, shape ``(E, d+1, d)``."""
    X = mesh.nodes[mesh.elements]
    d = mesh.dim
    # columns: x_k - x_0 for k = 1..d
    J = np.transpose(X[:, 1:, :] - X[:, :1, :], (0, 2, 1))
    Jinv = np.linalg.inv(J)
    ref = np.vstack([-np.ones(d), np.eye(d)])  # reference gradients (d+1, d)
    return np.einsum("kd,edc->ekc", ref, Jinv)


def stiffness_matrix(mesh: Mesh):
    grads = p1_gradients(mesh)
    vol = mesh.measures()
    local = np.einsum("e,eic,ejc->eij", vol, grads, grads)
    E = mesh.elements
    k = E.shape[1]
    rows = np.repeat(E, k, axis=1).ravel()
    cols = np.tile(E, (1, k)).ravel()
    n = mesh.num_nodes
    return sp.csr_matrix((local.ravel(), (rows, cols)), shape=(n, n))


def load_vector(mesh: Mesh, g, q):
    """One-point quadrature for ``int g v`` and ``int_{gamma2} q v``."""
    n = mesh.num_nodes
    g = _nodal(g, n, "g")
    q = _nodal(q, n, "q")
    E = mesh.elements
    k = E.shape[1]
    gc = g[E].mean(axis=1) * mesh.measures() / k
    f = np.zeros(n)
    np.add.at(f, E, np.repeat(gc[:, None], k, axis=1))
    for facet in mesh.facets_with("gamma2"):
        share = np.mean(q[list(facet)]) * mesh.facet_measure(facet) / len(facet)
        for v in facet:
            f[v] -= share
    return f


@dataclass(frozen=True, eq=False)
class HeatModel:
    """Assembled heat problem on the non-gamma1 dofs.

    ``problem`` is the constrained VI (``K`` = affine slice ``u = b`` on
    gamma3, ``j = 0``) and ``penalty`` the lumped boundary-mass operator of
    that slice.
    """

    mesh: Mesh
    g: np.ndarray
    q: np.ndarray
    b: np.ndarray
    stiffness: sp.csr_matrix
    free: np.ndarray
    gamma3: np.ndarray
    boundary_weights: np.ndarray
    problem: VIProblem
    penalty: PenaltyOperator

    def full_field(self, u_red):
        u = np.zeros(self.mesh.num_nodes)
        u[self.free] = u_red
        return u

    def energy_norm(self, u_red):
        return float(np.sqrt(max(u_red @ (self.problem.A.matrix @ u_red), 0.0)))

    def nodal_csv(self, u_red):
        u = self.full_field(u_red)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node_id", "x", "y", "u"])
        for i, x in enumerate(self.mesh.nodes):
            y = x[1] if self.mesh.dim == 2 else 0.0
            w.writerow([i, repr(float(x[0])), repr(float(y)), repr(float(u[i]))])
        return buf.getvalue()


def assemble_heat(mesh: Mesh, g=0.0, q=0.0, b=0.0):
    """Assemble stiffness, load and gamma3 data; eliminate gamma1 (``u = 0``)."""
    n = mesh.num_nodes
    g, q, b = _nodal(g, n, "g"), _nodal(q, n, "q"), _nodal(b, n, "b")
    S = stiffness_matrix(mesh)
    f = load_vector(mesh, g, q)
    fixed = set(mesh.nodes_with("gamma1").tolist())
    free = np.array([i for i in range(n) if i not in fixed], dtype=np.int64)
    if free.size == 0:
        raise ValidationError("no free dofs")
    pos = {v: k for k, v in enumerate(free)}
    A = S[free][:, free].tocsr()
    g3 = mesh.nodes_with("gamma3")
    g3_red = np.array([pos[v] for v in g3], dtype=np.int64)
    w_all = mesh.lumped_boundary_mass("gamma3")
    weights = w_all[g3]
    if g3.size and np.any(weights <= 0):
        raise ValidationError("gamma3 node without a gamma3 facet")
    op = MonotoneOperator.linear(A)
    if not op.m > 0:
        raise NonSPD(f"reduced stiffness is not positive definite (lambda_min = {op.m:.3e})")
    K = AffineSlice(free.size, g3_red, b[g3])
    P = VIProblem(op, ConvexFunctional.zero(free.size), K, f[free])
    G = PenaltyOperator.boundary_mass(free.size, g3_red, b[g3], weights)
    return HeatModel(mesh, g, q, b, S, free, g3_red, weights, P, G)


def heat_mesh(dim=1, nx=64, ny=None):
    if dim == 1:
        return interval_mesh(nx)
    if dim == 2:
        return rectangle_mesh(nx, nx if ny is None else ny)
    raise ValidationError("dim must be 1 or 2")


def penalized_trace_1d(lam):
    """Exact ``u(1)`` for ``-u'' = 2``, ``u(0) = 0``, ``-u'(1) = u(1) / lam``."""
    return lam / (1.0 + lam)


def solve_constrained(model: HeatModel, config=SolveConfig(tol=1e-12)):
    return solve_vi(model.problem, config)


def run_heat_penalty_study(model: HeatModel, lambdas=None, config=SolveConfig(tol=1e-12), threshold=1e-3):
    """Penalised solves over a decreasing lambda ladder.

    Columns: ``lambda``, ``error`` (euclidean, reduced dofs), ``rel_error``,
    ``trace_mean`` (mean gamma3 value), ``distance`` to the slice, the
    residual estimate ``eps`` and ``iterations``.
    """
    lambdas = default_lambdas(14) if lambdas is None else list(lambdas)
    lam = np.asarray(lambdas, dtype=float)
    if len(lam) < 4 or np.any(lam <= 0) or np.any(np.diff(lam) >= 0):
        raise ValidationError("lambda ladder must have at least 4 strictly decreasing positive values")
    P = model.problem
    u = solve_constrained(model, config).u
    nu = max(float(np.linalg.norm(u)), 1e-300)
    rows = []
    for l in lam:
        row = {"lambda": float(l), "status": "ok"}
        try:
            rep = solve_penalized(P, model.penalty, float(l), config)
        except VIError as exc:
            row.update(error=None, rel_error=None, trace_mean=None, distance=None, eps=None, iterations=None)
            row["status"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            continue
        un = rep.u
        err = float(np.linalg.norm(un - u))
        row.update(
            error=err,
            rel_error=err / nu if np.linalg.norm(u) > 0 else err,
            trace_mean=float(np.mean(un[model.gamma3])) if model.gamma3.size else 0.0,
            distance=P.K.distance(un),
            eps=epsilon_residual(P, un, probe_budget=8, reference=u),
            iterations=rep.iterations,
        )
        rows.append(row)
    ok = [r for r in rows if r["status"] == "ok"]
    errs = [r["error"] for r in ok]
    checks = {
        "final_below_threshold": bool(ok and errs[-1] <= threshold * max(1.0, nu)),
        "monotone_trend": smoothed_nonincreasing(errs),
    }
    cols = ["lambda", "error", "rel_error", "trace_mean", "distance", "eps", "iterations", "status"]
    return ConvergenceTable("heat", cols, rows, u, checks, {"lambdas": [float(x) for x in lam]})
