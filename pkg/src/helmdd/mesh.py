"""Structured triangular meshes of rectangles and the P2 Lagrange space on them.

Local conventions used throughout the package:

* triangle ``(v0, v1, v2)`` is counter-clockwise;
* local edge ``j`` joins ``v_j`` and ``v_{j+1 mod 3}``;
* the six local P2 dofs are ``[v0, v1, v2, m01, m12, m20]``.
"""
from __future__ import annotations

import enum
import math
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from pathlib import Path

import numpy as np

LOCAL_EDGES = np.array([[0, 1], [1, 2], [2, 0]])
SIDES = ("bottom", "right", "top", "left")


class MeshError(ValueError):
    pass


class BoundaryTag(enum.IntEnum):
    DIRICHLET = 1
    NEUMANN = 2
    ROBIN = 3


class DofClass(enum.IntEnum):
    INTERIOR = 0
    DIRICHLET = 1
    NEUMANN = 2
    ROBIN = 3


# Corner precedence when a dof touches several tagged edges.
_PRECEDENCE = {BoundaryTag.DIRICHLET: 3, BoundaryTag.ROBIN: 2, BoundaryTag.NEUMANN: 1}


def _readonly(a):
    a = np.ascontiguousarray(a)
    a.setflags(write=False)
    return a


class Mesh:
    """Conforming triangle mesh with tagged boundary edges.

    Parameters
    ----------
    vertices : (nv, 2) float array
    triangles : (nt, 3) int array, counter-clockwise
    boundary_edges : (nbe, 2) int array
    boundary_tags : (nbe,) int array of :class:`BoundaryTag` values
    """

    def __init__(self, vertices, triangles, boundary_edges, boundary_tags):
        self.vertices = _readonly(np.asarray(vertices, dtype=float).reshape(-1, 2))
        self.triangles = _readonly(np.asarray(triangles, dtype=np.int64).reshape(-1, 3))
        self.boundary_edges = _readonly(np.asarray(boundary_edges, dtype=np.int64).reshape(-1, 2))
        self.boundary_tags = _readonly(np.asarray(boundary_tags, dtype=np.int64).reshape(-1))
        if len(self.boundary_tags) != len(self.boundary_edges):
            raise MeshError("one tag per boundary edge required")

        all_edges = np.sort(self.triangles[:, LOCAL_EDGES].reshape(-1, 2), axis=1)
        edges, inverse, counts = np.unique(all_edges, axis=0, return_inverse=True, return_counts=True)
        self.edges = _readonly(edges)
        self.tri_edges = _readonly(inverse.reshape(-1, 3))
        self.edge_counts = _readonly(counts)

        tags = np.zeros(len(edges), dtype=np.int64)
        if len(self.boundary_edges):
            bsorted = np.sort(self.boundary_edges, axis=1)
            idx = self._edge_lookup(bsorted)
            if np.any(idx < 0):
                raise MeshError("boundary edge is not an edge of the mesh")
            tags[idx] = self.boundary_tags
        self.edge_tags = _readonly(tags)
        self._validate()

    def _edge_lookup(self, pairs):
        """Index of each sorted vertex pair in the edge table, -1 if absent."""
        nv = len(self.vertices)
        keys = self.edges[:, 0] * nv + self.edges[:, 1]
        q = pairs[:, 0] * nv + pairs[:, 1]
        pos = np.searchsorted(keys, q)
        pos = np.minimum(pos, len(keys) - 1)
        return np.where(keys[pos] == q, pos, -1)

    def _validate(self):
        if np.any(self.signed_areas() <= 0):
            raise MeshError("triangles must have positive orientation")
        if np.any(self.edge_counts > 2):
            raise MeshError("non-manifold edge")
        on_boundary = self.edge_counts == 1
        tagged = self.edge_tags > 0
        if not np.array_equal(on_boundary, tagged):
            raise MeshError("boundary edges must exactly cover the topological boundary")

    @property
    def n_vertices(self):
        return len(self.vertices)

    @property
    def n_triangles(self):
        return len(self.triangles)

    @property
    def n_edges(self):
        return len(self.edges)

    def signed_areas(self):
        p = self.vertices[self.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    def edge_lengths(self):
        p = self.vertices[self.edges]
        return np.linalg.norm(p[:, 1] - p[:, 0], axis=1)

    @property
    def h(self):
        """Maximum edge length."""
        return float(self.edge_lengths().max())

    def centroids(self):
        return self.vertices[self.triangles].mean(axis=1)

    def edge_triangles(self):
        """(ne, 2) array of adjacent triangles, -1 where the edge is on the boundary."""
        out = -np.ones((self.n_edges, 2), dtype=np.int64)
        flat_e = self.tri_edges.reshape(-1)
        flat_t = np.repeat(np.arange(self.n_triangles), 3)
        order = np.argsort(flat_e, kind="stable")
        e_sorted = flat_e[order]
        t_sorted = flat_t[order]
        first = np.ones(len(e_sorted), dtype=bool)
        first[1:] = e_sorted[1:] != e_sorted[:-1]
        out[e_sorted[first], 0] = t_sorted[first]
        out[e_sorted[~first], 1] = t_sorted[~first]
        return out

    def bounding_box(self):
        lo = self.vertices.min(axis=0)
        hi = self.vertices.max(axis=0)
        return (lo[0], hi[0]), (lo[1], hi[1])


def build_rect_mesh(x_extent, y_extent, nx, ny, tag_rule=None):
    """Structured mesh of a rectangle, each cell cut along its lower-left to upper-right diagonal.

    ``tag_rule`` maps side names (``bottom``, ``right``, ``top``, ``left``) to a
    :class:`BoundaryTag`, or is a callable ``side -> tag``. Missing sides default to Robin.
    """
    if nx < 1 or ny < 1:
        raise MeshError(f"cell counts must be positive, got nx={nx}, ny={ny}")
    (x0, x1), (y0, y1) = x_extent, y_extent
    if not (x1 > x0 and y1 > y0):
        raise MeshError("degenerate rectangle extents")
    rule = _tag_rule(tag_rule)

    xs = np.linspace(x0, x1, nx + 1)
    ys = np.linspace(y0, y1, ny + 1)
    X, Y = np.meshgrid(xs, ys)
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (nx + 1) + i

    I, J = np.meshgrid(np.arange(nx), np.arange(ny))
    I, J = I.ravel(), J.ravel()
    v00, v10, v11, v01 = vid(I, J), vid(I + 1, J), vid(I + 1, J + 1), vid(I, J + 1)
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.empty((2 * nx * ny, 3), dtype=np.int64)
    triangles[0::2] = lower
    triangles[1::2] = upper

    ii = np.arange(nx)
    jj = np.arange(ny)
    sides = {
        "bottom": np.column_stack([vid(ii, 0), vid(ii + 1, 0)]),
        "right": np.column_stack([vid(nx, jj), vid(nx, jj + 1)]),
        "top": np.column_stack([vid(ii + 1, ny), vid(ii, ny)]),
        "left": np.column_stack([vid(0, jj + 1), vid(0, jj)]),
    }
    bedges = np.vstack([sides[s] for s in SIDES])
    btags = np.concatenate([np.full(len(sides[s]), int(rule(s))) for s in SIDES])
    return Mesh(vertices, triangles, bedges, btags)


def _tag_rule(tag_rule) -> Callable[[str], BoundaryTag]:
    if tag_rule is None:
        return lambda side: BoundaryTag.ROBIN
    if isinstance(tag_rule, Mapping):
        unknown = set(tag_rule) - set(SIDES)
        if unknown:
            raise MeshError(f"unknown sides {sorted(unknown)}")
        return lambda side: BoundaryTag(tag_rule.get(side, BoundaryTag.ROBIN))
    return lambda side: BoundaryTag(tag_rule(side))


def refine_uniform(mesh: Mesh, s: int) -> Mesh:
    """Split every edge into ``s`` equal parts and every triangle into ``s**2`` similar ones.

    Input vertices keep their indices; new vertices are appended (edge points first,
    then triangle-interior points).
    """
    if s < 1:
        raise MeshError(f"refinement factor must be >= 1, got {s}")
    if s == 1:
        return Mesh(mesh.vertices, mesh.triangles, mesh.boundary_edges, mesh.boundary_tags)

    nv, ne, nt = mesh.n_vertices, mesh.n_edges, mesh.n_triangles
    V = mesh.vertices
    E = mesh.edges
    tv = mesh.triangles

    # Edge points: edge e (a < b) has points a + t/s (b - a), t = 1..s-1.
    t = np.arange(1, s)
    edge_pts = V[E[:, 0]][:, None, :] + (t / s)[None, :, None] * (V[E[:, 1]] - V[E[:, 0]])[:, None, :]
    edge_base = nv

    n_int = (s - 1) * (s - 2) // 2
    int_base = nv + ne * (s - 1)
    lattice_int = [(i, j) for j in range(1, s) for i in range(1, s) if i + j <= s - 1]
    int_slot = {ij: q for q, ij in enumerate(lattice_int)}

    def edge_point(a, b, frac):
        # frac/s measured from vertex a towards vertex b
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        e = mesh._edge_lookup(np.column_stack([lo, hi]))
        tt = np.where(a < b, frac, s - frac)
        return edge_base + e * (s - 1) + (tt - 1)

    def point(i, j):
        a, b, c = tv[:, 0], tv[:, 1], tv[:, 2]
        if (i, j) == (0, 0):
            return a
        if (i, j) == (s, 0):
            return b
        if (i, j) == (0, s):
            return c
        if j == 0:
            return edge_point(a, b, np.full(nt, i))
        if i == 0:
            return edge_point(a, c, np.full(nt, j))
        if i + j == s:
            return edge_point(b, c, np.full(nt, j))
        return int_base + np.arange(nt) * n_int + int_slot[(i, j)]

    p0 = V[tv[:, 0]]
    d1 = V[tv[:, 1]] - p0
    d2 = V[tv[:, 2]] - p0
    int_pts = np.empty((nt, n_int, 2))
    for (i, j), q in int_slot.items():
        int_pts[:, q] = p0 + (i / s) * d1 + (j / s) * d2

    new_vertices = np.vstack([V, edge_pts.reshape(-1, 2), int_pts.reshape(-1, 2)])

    tris = []
    for j in range(s):
        for i in range(s - j):
            tris.append(np.column_stack([point(i, j), point(i + 1, j), point(i, j + 1)]))
            if i + j <= s - 2:
                tris.append(np.column_stack([point(i + 1, j), point(i + 1, j + 1), point(i, j + 1)]))
    new_tris = np.stack(tris, axis=1).reshape(-1, 3)

    be = mesh.boundary_edges
    a, b = be[:, 0], be[:, 1]
    chain = [a] + [edge_point(a, b, np.full(len(be), q)) for q in range(1, s)] + [b]
    chain = np.column_stack(chain)
    new_be = np.stack([chain[:, :-1], chain[:, 1:]], axis=2).reshape(-1, 2)
    new_tags = np.repeat(mesh.boundary_tags, s)
    return Mesh(new_vertices, new_tris, new_be, new_tags)


def mesh_resolution_for(k_max: float, n_ppwl: float) -> float:
    """Target element diameter giving ``n_ppwl`` points per wavelength at wave number ``k_max``."""
    if not (k_max > 0 and n_ppwl > 0):
        raise ValueError("k_max and n_ppwl must be positive")
    return 2.0 * math.pi / (k_max * n_ppwl)


@dataclass(frozen=True, eq=False)
class FeSpace:
    """Continuous P2 Lagrange space.

    Dofs are numbered with the ``n`` non-Dirichlet dofs first and the ``d`` Dirichlet
    dofs last, so the leading ``n x n`` block of an assembled matrix is the reduced system.
    """

    mesh: Mesh
    tri_dofs: np.ndarray  # (nt, 6)
    edge_dofs: np.ndarray  # (ne, 3): endpoint a, midpoint, endpoint b
    coords: np.ndarray  # (ndof, 2)
    dof_class: np.ndarray  # (ndof,) DofClass values
    n: int
    d: int

    @property
    def ndof(self):
        return self.n + self.d

    def vertex_dofs(self):
        return self.edge_dofs[:, [0, 2]]


def build_p2_space(mesh: Mesh) -> FeSpace:
    nv, ne = mesh.n_vertices, mesh.n_edges
    ndof = nv + ne
    # natural numbering: vertices then edge midpoints
    edge_nat = np.column_stack([mesh.edges[:, 0], nv + np.arange(ne), mesh.edges[:, 1]])
    nat_coords = np.vstack([mesh.vertices, mesh.vertices[mesh.edges].mean(axis=1)])

    rank = np.zeros(ndof, dtype=np.int64)
    cls = np.zeros(ndof, dtype=np.int64)
    for tag in (BoundaryTag.NEUMANN, BoundaryTag.ROBIN, BoundaryTag.DIRICHLET):
        on = np.flatnonzero(mesh.edge_tags == tag)
        dofs = np.unique(edge_nat[on].ravel())
        upgrade = dofs[rank[dofs] < _PRECEDENCE[tag]]
        rank[upgrade] = _PRECEDENCE[tag]
        cls[upgrade] = int(tag)

    is_dir = cls == DofClass.DIRICHLET
    order = np.concatenate([np.flatnonzero(~is_dir), np.flatnonzero(is_dir)])
    perm = np.empty(ndof, dtype=np.int64)
    perm[order] = np.arange(ndof)

    tri_nat = np.column_stack([mesh.triangles, nv + mesh.tri_edges])
    return FeSpace(
        mesh=mesh,
        tri_dofs=_readonly(perm[tri_nat]),
        edge_dofs=_readonly(perm[edge_nat]),
        coords=_readonly(nat_coords[order]),
        dof_class=_readonly(cls[order]),
        n=int((~is_dir).sum()),
        d=int(is_dir.sum()),
    )


def dump_mesh(mesh: Mesh, path) -> None:
    """Write the plain-text debug format: ``nv nt nbe`` header, vertices, triangles, tagged edges."""
    lines = [f"{mesh.n_vertices} {mesh.n_triangles} {len(mesh.boundary_edges)}"]
    lines += [f"{x:.17g} {y:.17g}" for x, y in mesh.vertices]
    lines += [f"{a} {b} {c}" for a, b, c in mesh.triangles]
    lines += [f"{a} {b} {t}" for (a, b), t in zip(mesh.boundary_edges, mesh.boundary_tags)]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mesh(path) -> Mesh:
    tokens = Path(path).read_text().split()
    try:
        nv, nt, nbe = (int(x) for x in tokens[:3])
        data = tokens[3:]
        verts = np.array(data[: 2 * nv], dtype=float).reshape(nv, 2)
        data = data[2 * nv:]
        tris = np.array(data[: 3 * nt], dtype=np.int64).reshape(nt, 3)
        data = data[3 * nt:]
        be = np.array(data[: 3 * nbe], dtype=np.int64).reshape(nbe, 3)
    except ValueError as exc:
        raise MeshError(f"malformed mesh file {path}: {exc}") from exc
    return Mesh(verts, tris, be[:, :2], be[:, 2])
