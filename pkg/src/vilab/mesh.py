"""Simplicial meshes in 1-D and 2-D with a three-part boundary partition."""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import EmptyGamma1, MeshError, UntaggedBoundary

GAMMAS = ("gamma1", "gamma2", "gamma3")
NONE = "none"


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming P1 mesh.

    ``node_tags[i]`` is one of ``gamma1/gamma2/gamma3`` for boundary nodes,
    ``none`` for a boundary node outside every part, and ``""`` for interior
    nodes. Facet tags default to the common tag of the facet's nodes; a facet
    joining a gamma1 corner to another part takes that part, other mixed
    facets are gamma2. Explicit ``facet_tags`` override that.
    """

    nodes: np.ndarray
    elements: np.ndarray
    node_tags: tuple
    facet_tags: Optional[dict] = None

    def __post_init__(self):
        X = np.array(self.nodes, dtype=float)
        if X.ndim == 1:
            X = X[:, None]
        E = np.array(self.elements, dtype=np.int64)
        if X.ndim != 2 or X.shape[1] not in (1, 2):
            raise MeshError("nodes must be an (N, 1) or (N, 2) array")
        d = X.shape[1]
        if E.ndim != 2 or E.shape[1] != d + 1:
            raise MeshError(f"elements must have {d + 1} vertices in {d}-D")
        if E.size == 0:
            raise MeshError("mesh has no elements")
        if E.min() < 0 or E.max() >= X.shape[0]:
            raise MeshError("element references a missing node")
        if len(self.node_tags) != X.shape[0]:
            raise MeshError("node_tags must have one entry per node")
        X.setflags(write=False)
        E.setflags(write=False)
        object.__setattr__(self, "nodes", X)
        object.__setattr__(self, "elements", E)
        object.__setattr__(self, "node_tags", tuple(self.node_tags))
        if np.any(self.measures() <= 0):
            raise MeshError("degenerate element")
        self._validate_tags()

    @property
    def dim(self):
        return self.nodes.shape[1]

    @property
    def num_nodes(self):
        return self.nodes.shape[0]

    def measures(self):
        X, E = self.nodes, self.elements
        if self.dim == 1:
            return np.abs(X[E[:, 1], 0] - X[E[:, 0], 0])
        a = X[E[:, 1]] - X[E[:, 0]]
        b = X[E[:, 2]] - X[E[:, 0]]
        return 0.5 * np.abs(a[:, 0] * b[:, 1] - a[:, 1] * b[:, 0])

    def boundary_facets(self):
        """Facets (sorted node tuples) that belong to exactly one element."""
        count = {}
        d = self.dim
        for el in self.elements:
            for skip in range(d + 1):
                f = tuple(sorted(int(v) for i, v in enumerate(el) if i != skip))
                count[f] = count.get(f, 0) + 1
        return sorted(f for f, c in count.items() if c == 1)

    def boundary_nodes(self):
        return sorted({v for f in self.boundary_facets() for v in f})

    def facet_tag(self, facet):
        if self.facet_tags is not None:
            key = ",".join(str(v) for v in sorted(facet))
            if key in self.facet_tags:
                return self.facet_tags[key]
        tags = {self.node_tags[v] for v in facet}
        if len(tags) == 2 and "gamma1" in tags:
            tags.discard("gamma1")  # a clamped corner does not make the facet Dirichlet
        return tags.pop() if len(tags) == 1 else "gamma2"

    def facets_with(self, tag):
        return [f for f in self.boundary_facets() if self.facet_tag(f) == tag]

    def facet_measure(self, facet):
        if self.dim == 1:
            return 1.0
        a, b = self.nodes[facet[0]], self.nodes[facet[1]]
        return float(np.linalg.norm(a - b))

    def nodes_with(self, tag):
        return np.array([i for i, t in enumerate(self.node_tags) if t == tag], dtype=np.int64)

    def _validate_tags(self):
        for v in self.boundary_nodes():
            if self.node_tags[v] not in GAMMAS + (NONE,):
                raise UntaggedBoundary(f"boundary node {v} at {self.nodes[v].tolist()} has no tag")
        if self.nodes_with("gamma1").size == 0:
            raise EmptyGamma1("gamma1 is empty; the problem would not be coercive")

    def lumped_boundary_mass(self, tag=None):
        """Per-node share of the measure of boundary facets (all, or one tag)."""
        w = np.zeros(self.num_nodes)
        for f in self.boundary_facets():
            if tag is not None and self.facet_tag(f) != tag:
                continue
            share = self.facet_measure(f) / len(f)
            for v in f:
                w[v] += share
        return w

    # -- io ---------------------------------------------------------------

    def to_dict(self):
        tags = {g: self.nodes_with(g).tolist() for g in GAMMAS + (NONE,)}
        out = {
            "dim": self.dim,
            "nodes": self.nodes.tolist(),
            "elements": self.elements.tolist(),
            "boundary_tags": {k: v for k, v in tags.items() if v},
        }
        if self.facet_tags:
            out["facet_tags"] = dict(self.facet_tags)
        return out

    @classmethod
    def from_dict(cls, data):
        try:
            nodes = np.asarray(data["nodes"], dtype=float)
            elements = np.asarray(data["elements"], dtype=np.int64)
            btags = data.get("boundary_tags", {})
        except (KeyError, TypeError, ValueError) as exc:
            raise MeshError(f"malformed mesh document: {exc}") from exc
        if nodes.ndim == 1:
            nodes = nodes[:, None]
        tags = [""] * nodes.shape[0]
        for name, ids in btags.items():
            if name not in GAMMAS + (NONE,):
                raise MeshError(f"unknown boundary tag {name!r}")
            for i in ids:
                tags[int(i)] = name
        return cls(nodes, elements, tuple(tags), data.get("facet_tags"))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, text):
        return cls.from_dict(json.loads(text))


def interval_mesh(n, length=1.0, left="gamma1", right="gamma3"):
    """Uniform mesh of ``(0, length)`` with ``n`` elements."""
    if n < 1:
        raise MeshError("need at least one element")
    x = np.linspace(0.0, length, n + 1)
    E = np.column_stack([np.arange(n), np.arange(1, n + 1)])
    tags = [""] * (n + 1)
    tags[0], tags[-1] = left, right
    return Mesh(x[:, None], E, tuple(tags))


def rectangle_mesh(nx, ny, lx=1.0, ly=1.0, tagger=None):
    """Structured triangulation of ``[0, lx] x [0, ly]``, two triangles per cell.

    ``tagger(x, y, lx, ly)`` returns the tag of a boundary node.
    """
    if nx < 1 or ny < 1:
        raise MeshError("need at least one cell per direction")
    xs = np.linspace(0.0, lx, nx + 1)
    ys = np.linspace(0.0, ly, ny + 1)
    X, Y = np.meshgrid(xs, ys, indexing="xy")
    nodes = np.column_stack([X.ravel(), Y.ravel()])

    def nid(i, j):
        return j * (nx + 1) + i

    els = []
    for j in range(ny):
        for i in range(nx):
            a, b, c, d = nid(i, j), nid(i + 1, j), nid(i + 1, j + 1), nid(i, j + 1)
            els.append((a, b, c))
            els.append((a, c, d))
    tagger = heat_tagger if tagger is None else tagger
    tags = []
    for x, y in nodes:
        on_bnd = np.isclose(x, 0) or np.isclose(x, lx) or np.isclose(y, 0) or np.isclose(y, ly)
        tags.append(tagger(x, y, lx, ly) if on_bnd else "")
    return Mesh(nodes, np.array(els), tuple(tags))


def heat_tagger(x, y, lx, ly):
    """gamma1 on ``x = 0``, gamma3 on ``x = lx``, gamma2 on the rest."""
    if np.isclose(x, 0.0):
        return "gamma1"
    if np.isclose(x, lx):
        return "gamma3"
    return "gamma2"


def contact_tagger(x, y, lx, ly):
    """gamma1 on ``x = 0`` (clamped), gamma3 on ``y = 0``, gamma2 elsewhere."""
    if np.isclose(x, 0.0):
        return "gamma1"
    if np.isclose(y, 0.0):
        return "gamma3"
    return "gamma2"
