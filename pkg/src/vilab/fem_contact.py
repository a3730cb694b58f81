"""Plane-strain contact of a clamped elastic rectangle with a rigid-plastic layer.

Geometry: ``[0, lx] x [0, ly]``, clamped on ``x = 0`` (gamma1), traction on
the top edge (part of gamma2), contact on the bottom edge (gamma3) with
outward normal ``nu = (0, -1)``. On gamma3 the normal displacement is
``u_nu = -u_y`` and the tangential one is ``u_x``.

The exported problem lives in transformed coordinates where every gamma3
``y`` dof is replaced by ``u_nu``. The transform is a signed permutation, so
euclidean norms are unchanged and the layer constraint ``u_nu <= k`` is a
coordinate bound.
"""

from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np
import scipy.linalg

from .criterion import ResidualMode, epsilon_residual
from .errors import NonSPD, ValidationError, VIError
from .fem_heat import p1_gradients
from .hilbert import Box, ConvexFunctional, MonotoneOperator
from .mesh import Mesh, contact_tagger, rectangle_mesh
from .solver import FrictionTerm, SolveConfig, VIProblem, solve_qvi_friction, solve_vi
from .studies import ConvergenceTable

CONTACT_CONFIG = SolveConfig(tol=1e-11, max_iter=2_000_000)


@dataclass(frozen=True)
class ElasticMaterial:
    """Linear isotropic law ``F eps = 2 mu eps + lambda tr(eps) I``."""

    lame_lambda: float = 1.0
    lame_mu: float = 1.0
    dim: int = 2

    def __post_init__(self):
        if self.lame_lambda < 0 or not self.lame_mu > 0:
            raise ValidationError("need lame_lambda >= 0 and lame_mu > 0")

    @property
    def m_F(self):
        return 2.0 * self.lame_mu

    @property
    def M_F(self):
        return 2.0 * self.lame_mu + self.dim * self.lame_lambda

    def apply(self, eps):
        """``F`` applied to a symmetric tensor (or a batch, shape ``(..., d, d)``)."""
        eps = np.asarray(eps, dtype=float)
        tr = np.trace(eps, axis1=-2, axis2=-1)
        return 2.0 * self.lame_mu * eps + self.lame_lambda * tr[..., None, None] * np.eye(eps.shape[-1])

    def voigt(self):
        """Plane-strain matrix acting on ``(e_xx, e_yy, 2 e_xy)``."""
        lam, mu = self.lame_lambda, self.lame_mu
        return np.array([[lam + 2 * mu, lam, 0.0], [lam, lam + 2 * mu, 0.0], [0.0, 0.0, mu]])


# tensor inner product eps:eps in the same Voigt variables
VOIGT_IDENTITY = np.diag([1.0, 1.0, 0.5])


@dataclass(frozen=True, eq=False)
class ContactData:
    """Geometry, material, yield limit ``F``, layer thickness ``k``, loads and
    friction coefficient ``mu`` (zero for the frictionless problem)."""

    lx: float = 2.0
    ly: float = 1.0
    nx: int = 4
    ny: int = 2
    material: ElasticMaterial = field(default_factory=ElasticMaterial)
    F: float = 0.5
    k: float = 0.05
    f0: tuple = (0.0, -0.2)
    f2: tuple = (0.3, -0.4)
    mu: float = 0.0

    def __post_init__(self):
        if not self.k > 0:
            raise ValidationError("layer thickness k must be positive")
        if np.any(np.asarray(self.F) < 0):
            raise ValidationError("yield limit F must be non-negative")
        if np.any(np.asarray(self.mu) < 0):
            raise ValidationError("friction coefficient must be non-negative")
        if len(self.f0) != 2 or len(self.f2) != 2:
            raise ValidationError("loads are 2-vectors")


def elasticity_matrix(mesh: Mesh, D):
    """P1 plane-strain stiffness for the Voigt matrix ``D``; dofs ``(2i, 2i+1)``."""
    grads = p1_gradients(mesh)  # (E, 3, 2)
    vol = mesh.measures()
    E = mesh.elements
    nE = E.shape[0]
    B = np.zeros((nE, 3, 6))
    B[:, 0, 0::2] = grads[:, :, 0]
    B[:, 1, 1::2] = grads[:, :, 1]
    B[:, 2, 0::2] = grads[:, :, 1]
    B[:, 2, 1::2] = grads[:, :, 0]
    local = np.einsum("e,eai,ab,ebj->eij", vol, B, D, B)
    dofs = np.empty((nE, 6), dtype=np.int64)
    dofs[:, 0::2] = 2 * E
    dofs[:, 1::2] = 2 * E + 1
    n = 2 * mesh.num_nodes
    S = np.zeros((n, n))
    for e in range(nE):
        S[np.ix_(dofs[e], dofs[e])] += local[e]
    return S


@dataclass(frozen=True, eq=False)
class ContactModel:
    """Assembled contact problem in transformed coordinates.

    ``free`` lists full dof numbers of the reduced unknowns; ``sign`` is the
    per-unknown sign of the transform; ``normal_idx``/``tangential_idx`` are
    the reduced positions of ``u_nu``/``u_tau`` at gamma3 nodes
    ``contact_nodes``, which carry lumped weights ``weights``.
    """

    data: ContactData
    mesh: Mesh
    problem: VIProblem
    free: np.ndarray
    sign: np.ndarray
    contact_nodes: np.ndarray
    normal_idx: np.ndarray
    tangential_idx: np.ndarray
    weights: np.ndarray
    d0: float
    S_V: np.ndarray

    def friction(self, mu=None, F=None):
        mu = self.data.mu if mu is None else mu
        F = self.data.F if F is None else F
        mu_n = np.broadcast_to(np.asarray(mu, dtype=float), self.weights.shape)
        F_n = np.broadcast_to(np.asarray(F, dtype=float), self.weights.shape)
        return FrictionTerm(
            self.normal_idx,
            self.tangential_idx,
            mu_n * F_n * self.weights,
            self.d0,
            float(np.max(mu_n, initial=0.0)),
            float(np.max(F_n, initial=0.0)),
            self.data.material.m_F,
        )

    def to_displacement(self, u_red):
        """Nodal ``(ux, uy)`` array of shape ``(N, 2)``."""
        full = np.zeros(2 * self.mesh.num_nodes)
        full[self.free] = self.sign * u_red
        return full.reshape(-1, 2)

    def contact_active(self, u_red, tol=1e-8):
        active = np.zeros(self.mesh.num_nodes, dtype=bool)
        hit = u_red[self.normal_idx] >= self.data.k - tol
        active[self.contact_nodes[hit]] = True
        return active

    def displacement_csv(self, u_red):
        U = self.to_displacement(u_red)
        act = self.contact_active(u_red)
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["node", "x", "y", "ux", "uy", "contact_active"])
        for i, (x, y) in enumerate(self.mesh.nodes):
            w.writerow([i, repr(float(x)), repr(float(y)), repr(float(U[i, 0])), repr(float(U[i, 1])), int(act[i])])
        return buf.getvalue()


def contact_mesh(data: ContactData):
    return rectangle_mesh(data.nx, data.ny, data.lx, data.ly, tagger=contact_tagger)


def _load(mesh: Mesh, data: ContactData):
    f = np.zeros(2 * mesh.num_nodes)
    E = mesh.elements
    share = mesh.measures() / 3.0
    for c in range(2):
        np.add.at(f, 2 * E + c, np.repeat(share[:, None], 3, axis=1) * data.f0[c])
    for facet in mesh.facets_with("gamma2"):
        if not np.allclose(mesh.nodes[list(facet), 1], data.ly):
            continue  # traction acts on the top edge only
        h = mesh.facet_measure(facet) / 2.0
        for v in facet:
            f[2 * v] += h * data.f2[0]
            f[2 * v + 1] += h * data.f2[1]
    return f


def assemble_contact(data: ContactData) -> ContactModel:
    """Assemble the frictionless problem: stiffness, layer box, yield functional."""
    mesh = contact_mesh(data)
    S = elasticity_matrix(mesh, data.material.voigt())
    SV = elasticity_matrix(mesh, VOIGT_IDENTITY)
    f = _load(mesh, data)

    clamped = set(mesh.nodes_with("gamma1").tolist())
    free = np.array([d for d in range(2 * mesh.num_nodes) if d // 2 not in clamped], dtype=np.int64)
    pos = {d: i for i, d in enumerate(free)}
    g3 = np.array([v for v in mesh.nodes_with("gamma3") if v not in clamped], dtype=np.int64)
    w_g3 = mesh.lumped_boundary_mass("gamma3")[g3]
    normal_idx = np.array([pos[2 * v + 1] for v in g3], dtype=np.int64)
    tangential_idx = np.array([pos[2 * v] for v in g3], dtype=np.int64)
    sign = np.ones(free.size)
    sign[normal_idx] = -1.0

    A = sign[:, None] * S[np.ix_(free, free)] * sign[None, :]
    A = 0.5 * (A + A.T)
    op = MonotoneOperator.linear(A)
    if not op.m > 0:
        raise NonSPD(f"reduced stiffness is not positive definite (lambda_min = {op.m:.3e})")
    fr = sign * f[free]

    n = free.size
    upper = np.full(n, np.inf)
    upper[normal_idx] = data.k
    K = Box(np.full(n, -np.inf), upper)
    F = np.broadcast_to(np.asarray(data.F, dtype=float), g3.shape)
    j = ConvexFunctional.weighted_positive_part(n, normal_idx, F * w_g3)
    P = VIProblem(op, j, K, fr)

    # trace constant over the whole boundary: max of (v, M v) / (v, S_V v)
    mass = mesh.lumped_boundary_mass()
    Mb = np.repeat(mass, 2)[free]
    SVr = SV[np.ix_(free, free)]
    lam = scipy.linalg.eigh(np.diag(Mb), SVr, eigvals_only=True)
    d0 = float(np.sqrt(lam[-1]))
    return ContactModel(data, mesh, P, free, sign, g3, normal_idx, tangential_idx, w_g3, d0, SVr)


def solve_contact(model: ContactModel, config=CONTACT_CONFIG):
    """Frictionless solve."""
    return solve_vi(model.problem, config)


def solve_contact_frictional(model: ContactModel, mu=None, config=CONTACT_CONFIG, outer_tol=1e-10):
    """Friction solve by the outer fixed point over the frozen normal displacement."""
    return solve_qvi_friction(model.problem, model.friction(mu), config, outer_tol)


def perturbed_data(data: ContactData, n, mu0=0.02, dF=None, df0=(0.05, -0.05), df2=(-0.1, 0.1)):
    """Row ``n`` of the harmonic ladders: ``k(1+1/n)``, ``mu0/n``, ``F(1+1/n)``,
    loads shifted by ``delta/n``."""
    F = np.asarray(data.F, dtype=float)
    Fn = F * (1.0 + 1.0 / n) if dF is None else F + np.asarray(dF) / n
    return replace(
        data,
        k=data.k * (1.0 + 1.0 / n),
        mu=mu0 / n,
        F=Fn if Fn.ndim else float(Fn),
        f0=tuple(np.asarray(data.f0) + np.asarray(df0) / n),
        f2=tuple(np.asarray(data.f2) + np.asarray(df2) / n),
    )


def data_gap(base: ContactData, pert: ContactData):
    """``max(||F_n - F||_inf, ||f0_n - f0|| + ||f2_n - f2||, max mu_n * max F_n)``."""
    dF = float(np.max(np.abs(np.asarray(pert.F) - np.asarray(base.F))))
    dl = float(np.linalg.norm(np.subtract(pert.f0, base.f0)) + np.linalg.norm(np.subtract(pert.f2, base.f2)))
    fr = float(np.max(pert.mu)) * float(np.max(pert.F))
    return max(dF, dl, fr)


def run_theorem5_study(
    data: ContactData,
    ns=None,
    mu0=0.02,
    df0=(0.05, -0.05),
    df2=(-0.1, 0.1),
    config=CONTACT_CONFIG,
    probe_budget=16,
    threshold=1e-3,
):
    """Frictional solves along the perturbation ladders.

    Columns: ``n``, ``k_n``, ``mu_n``, ``error`` ``||u_n - u||``, ``distance``
    ``d(u_n, K)``, ``w10_bound`` ``|1 - k/k_n| ||u_n||``, ``eps`` (residual
    estimate against the unperturbed problem), ``data_gap``, outer and inner
    iteration counts. ``meta["C"]`` is the fitted ratio ``max eps / data_gap``.
    """
    ns = [2**p for p in range(13)] if ns is None else list(ns)
    base = assemble_contact(replace(data, mu=0.0))
    P = base.problem
    u = solve_contact(base, config).u
    nu = float(np.linalg.norm(u))
    rows = []
    for n in ns:
        pd = perturbed_data(data, n, mu0, None, df0, df2)
        row = {"n": n, "k_n": pd.k, "mu_n": pd.mu, "status": "ok"}
        try:
            model = assemble_contact(pd)
            rep = solve_contact_frictional(model, config=config)
        except VIError as exc:
            row["status"] = f"{type(exc).__name__}: {exc}"
            rows.append(row)
            continue
        un = rep.u
        row.update(
            error=float(np.linalg.norm(un - u)),
            distance=P.K.distance(un),
            w10_bound=abs(1.0 - data.k / pd.k) * float(np.linalg.norm(un)),
            eps=epsilon_residual(P, un, ResidualMode.ONE_PLUS_NORM, probe_budget, reference=u),
            data_gap=data_gap(data, pd),
            outer=rep.outer_iterations,
            iterations=rep.iterations,
        )
        rows.append(row)
    ok = [r for r in rows if r["status"] == "ok"]
    err = np.array([r["error"] for r in ok])
    C = max((r["eps"] / r["data_gap"] for r in ok if r["data_gap"] > 0), default=0.0)
    tail = err[1:] if len(err) > 2 else err
    checks = {
        "strictly_decreasing_after_2": bool(len(tail) < 2 or np.all(np.diff(tail) < 0)),
        "final_below_threshold": bool(len(err) and err[-1] <= threshold * nu),
        "w10": all(r["distance"] <= r["w10_bound"] + 1e-12 for r in ok),
    }
    cols = ["n", "k_n", "mu_n", "error", "distance", "w10_bound", "eps", "data_gap", "outer", "iterations", "status"]
    return ConvergenceTable("contact", cols, rows, u, checks, {"C": C, "ns": ns, "reference_norm_euclid": nu})
