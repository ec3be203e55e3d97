"""P2 finite-element assembly of Helmholtz/Laplace forms, loads and boundary terms.

Matrices are ``scipy.sparse.csr_matrix`` with ``complex128`` entries and canonical
(sorted, duplicate-free) structure.
"""
from __future__ import annotations

import weakref
from dataclasses import dataclass
from functools import cached_property

import numpy as np
import scipy.io
import scipy.sparse as sp

from .mesh import BoundaryTag, FeSpace


class AssemblyError(ValueError):
    pass


# 6-point symmetric rule, exact to degree 4; barycentric points, weights sum to 1.
_A1, _W1 = 0.44594849091596488632, 0.22338158967801146570
_A2, _W2 = 0.09157621350977074346, 0.10995174365532186764
QUAD_BARY = np.array(
    [
        [1 - 2 * _A1, _A1, _A1],
        [_A1, 1 - 2 * _A1, _A1],
        [_A1, _A1, 1 - 2 * _A1],
        [1 - 2 * _A2, _A2, _A2],
        [_A2, 1 - 2 * _A2, _A2],
        [_A2, _A2, 1 - 2 * _A2],
    ]
)
QUAD_W = np.array([_W1] * 3 + [_W2] * 3)

# 3-point Gauss-Legendre on [0, 1], exact to degree 5.
GAUSS_T = 0.5 + 0.5 * np.array([-np.sqrt(0.6), 0.0, np.sqrt(0.6)])
GAUSS_W = np.array([5.0, 8.0, 5.0]) / 18.0


def p2_shape(bary):
    """P2 basis values ``[v0, v1, v2, m01, m12, m20]`` at barycentric points ``(..., 3)``."""
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    return np.stack(
        [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0],
        axis=-1,
    )


def p2_shape_dbary(bary):
    """Derivatives of the P2 basis with respect to the barycentrics, shape ``(..., 6, 3)``."""
    l0, l1, l2 = bary[..., 0], bary[..., 1], bary[..., 2]
    z = np.zeros_like(l0)
    rows = [
        [4 * l0 - 1, z, z],
        [z, 4 * l1 - 1, z],
        [z, z, 4 * l2 - 1],
        [4 * l1, 4 * l0, z],
        [z, 4 * l2, 4 * l1],
        [4 * l2, z, 4 * l0],
    ]
    return np.stack([np.stack(r, axis=-1) for r in rows], axis=-2)


def p2_edge_shape(t):
    """1D P2 trace basis on an edge, ordered ``[endpoint a, midpoint, endpoint b]``."""
    return np.stack([(1 - t) * (1 - 2 * t), 4 * t * (1 - t), t * (2 * t - 1)], axis=-1)


class WaveNumberField:
    """Wave number ``k(x)`` evaluated on arrays of points of shape ``(..., 2)``."""

    def __init__(self, fn, k_max=None, label="k"):
        self._fn = fn
        self._k_max = k_max
        self.label = label

    @classmethod
    def constant(cls, k):
        k = float(k)
        return cls(lambda xy: np.full(np.shape(xy)[:-1], k), k_max=k, label=f"k={k:g}")

    @classmethod
    def from_velocity(cls, velocity, frequency, c_min=None):
        omega = 2 * np.pi * float(frequency)
        k_max = None if c_min is None else omega / c_min
        return cls(lambda xy: omega / velocity(xy), k_max=k_max, label=f"f={frequency:g}")

    def __call__(self, xy):
        k = np.asarray(self._fn(np.asarray(xy, dtype=float)), dtype=float)
        if not np.all(np.isfinite(k)) or np.any(k < 0):
            raise AssemblyError("wave number must be finite and non-negative")
        return k

    @property
    def k_max(self):
        return self._k_max

    def max_over(self, points):
        if self._k_max is not None:
            return self._k_max
        return float(self(points).max())


@dataclass(frozen=True)
class AssemblyRecipe:
    """Which form to assemble.

    ``volume`` is ``"helmholtz"`` (``grad.grad - (k^2 + i eps)``) or ``"laplace"``.
    ``robin`` applies ``i k`` impedance on the physical Robin edges; ``interface_edges``
    lists extra (artificial) edges that get the same impedance term.
    """

    volume: str = "helmholtz"
    eps: float = 0.0
    robin: bool = True
    interface_edges: tuple = ()
    quad_order: int = 4

    def __post_init__(self):
        if self.volume not in ("helmholtz", "laplace"):
            raise AssemblyError(f"unknown volume term {self.volume!r}")
        if self.quad_order > 4:
            raise AssemblyError("only the degree-4 triangle rule is available")


class ElementData:
    """Per-element geometry and reference quantities shared by all assemblies on a space."""

    def __init__(self, space: FeSpace):
        self.space = space
        mesh = space.mesh
        p = mesh.vertices[mesh.triangles]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
        self.area = 0.5 * det
        # gradients of barycentrics: rows of J^{-1}, J = [d1 d2]
        g1 = np.column_stack([d2[:, 1], -d2[:, 0]]) / det[:, None]
        g2 = np.column_stack([-d1[:, 1], d1[:, 0]]) / det[:, None]
        self.grad_bary = np.stack([-(g1 + g2), g1, g2], axis=1)  # (nt, 3, 2)
        self.qpoints = np.einsum("qi,eid->eqd", QUAD_BARY, p)  # (nt, 6, 2)
        self.phi = p2_shape(QUAD_BARY)  # (6 q, 6 a)
        self._dphi = p2_shape_dbary(QUAD_BARY)  # (6 q, 6 a, 3)

    @cached_property
    def stiffness(self):
        grads = np.einsum("qai,eid->eqad", self._dphi, self.grad_bary)
        return np.einsum("e,q,eqad,eqbd->eab", self.area, QUAD_W, grads, grads)

    def weighted_mass(self, weight=None, sel=slice(None)):
        """Element mass matrices ``int c phi_a phi_b`` on ``sel``; ``weight`` is ``(m, 6)`` at quadrature points."""
        area = self.area[sel]
        if weight is None:
            weight = np.ones((len(area), len(QUAD_W)))
        ref = np.einsum("q,qa,qb->qab", QUAD_W, self.phi, self.phi)
        return area[:, None, None] * np.einsum("eq,qab->eab", weight, ref)


_ELEMENT_CACHE: "weakref.WeakKeyDictionary[FeSpace, ElementData]" = weakref.WeakKeyDictionary()


def element_data(space: FeSpace) -> ElementData:
    data = _ELEMENT_CACHE.get(space)
    if data is None:
        data = _ELEMENT_CACHE[space] = ElementData(space)
    return data


def _scatter(dofs, local, size):
    """Sum local blocks ``(m, p, p)`` with dof maps ``(m, p)`` into a CSR matrix."""
    p = dofs.shape[1]
    rows = np.repeat(dofs, p, axis=1).ravel()
    cols = np.tile(dofs, (1, p)).ravel()
    A = sp.coo_matrix((local.ravel(), (rows, cols)), shape=(size, size)).tocsr()
    A.sum_duplicates()
    return A


def _symmetrize(A):
    # Exact complex symmetry regardless of accumulation order.
    A = ((A + A.T) * 0.5).tocsr()
    A.sum_duplicates()
    A.sort_indices()
    return A


def robin_edges(space: FeSpace, elements=None):
    """Physical Robin edge ids, optionally restricted to edges of the given elements."""
    mesh = space.mesh
    edges = np.flatnonzero(mesh.edge_tags == BoundaryTag.ROBIN)
    if elements is not None:
        inside = np.zeros(mesh.n_edges, dtype=bool)
        inside[mesh.tri_edges[np.asarray(elements)].ravel()] = True
        edges = edges[inside[edges]]
    return edges


def edge_mass_blocks(space: FeSpace, edges, weight=None):
    """Edge mass matrices ``(len(edges), 3, 3)`` of ``int_e w phi_a phi_b ds``.

    ``weight`` is a callable on points ``(..., 2)``; ``None`` means 1.
    """
    edges = np.asarray(edges, dtype=np.int64)
    ends = space.mesh.vertices[space.mesh.edges[edges]]  # (m, 2, 2)
    length = np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1)
    psi = p2_edge_shape(GAUSS_T)  # (3 q, 3 a)
    if weight is None:
        w = np.ones((len(edges), len(GAUSS_T)))
    else:
        pts = ends[:, 0, None, :] + GAUSS_T[None, :, None] * (ends[:, 1] - ends[:, 0])[:, None, :]
        w = np.asarray(weight(pts))
    return np.einsum("m,q,mq,qa,qb->mab", length, GAUSS_W, w, psi, psi)


def assemble(space: FeSpace, recipe: AssemblyRecipe, k: WaveNumberField | None = None, elements=None):
    """Assemble the full ``(n+d) x (n+d)`` matrix of the recipe's sesquilinear form.

    ``elements`` restricts the volume integral (and the physical Robin edges) to a
    subset of triangles; rows and columns keep the global numbering.
    """
    data = element_data(space)
    sel = slice(None) if elements is None else np.asarray(elements, dtype=np.int64)
    local = data.stiffness[sel].astype(complex)
    if recipe.volume == "helmholtz":
        if k is None:
            raise AssemblyError("Helmholtz assembly needs a wave number field")
        kq = k(data.qpoints[sel])
        local = local - data.weighted_mass(kq**2, sel)
        if recipe.eps:
            local = local - 1j * recipe.eps * data.weighted_mass(sel=sel)
    A = _scatter(space.tri_dofs[sel], local, space.ndof)

    if recipe.volume == "helmholtz":
        edges = robin_edges(space, elements) if recipe.robin else np.empty(0, dtype=np.int64)
        if len(recipe.interface_edges):
            edges = np.concatenate([edges, np.asarray(recipe.interface_edges, dtype=np.int64)])
        if len(edges):
            blocks = 1j * edge_mass_blocks(space, edges, weight=k)
            A = A + _scatter(space.edge_dofs[edges], blocks, space.ndof)
    return _symmetrize(A)


def assemble_mass(space: FeSpace, elements=None):
    data = element_data(space)
    sel = slice(None) if elements is None else np.asarray(elements, dtype=np.int64)
    return _symmetrize(_scatter(space.tri_dofs[sel], data.weighted_mass(sel=sel).astype(complex), space.ndof))


def _bincount_complex(idx, vals, size):
    vals = np.asarray(vals, dtype=complex).ravel()
    idx = np.asarray(idx).ravel()
    return np.bincount(idx, vals.real, size) + 1j * np.bincount(idx, vals.imag, size)


def assemble_rhs(space: FeSpace, source):
    """Load vector ``int f phi_i`` for a callable source on points ``(..., 2)``."""
    data = element_data(space)
    fq = np.asarray(source(data.qpoints), dtype=complex)  # (nt, 6)
    local = np.einsum("e,q,eq,qa->ea", data.area, QUAD_W, fq, data.phi)
    return _bincount_complex(space.tri_dofs, local, space.ndof)


def assemble_boundary_rhs(space: FeSpace, g, edges=None):
    """Boundary load ``int_edges g phi_i ds``; defaults to the physical Robin edges."""
    if edges is None:
        edges = robin_edges(space)
    edges = np.asarray(edges, dtype=np.int64)
    ends = space.mesh.vertices[space.mesh.edges[edges]]
    length = np.linalg.norm(ends[:, 1] - ends[:, 0], axis=1)
    pts = ends[:, 0, None, :] + GAUSS_T[None, :, None] * (ends[:, 1] - ends[:, 0])[:, None, :]
    gq = np.asarray(g(pts), dtype=complex)
    local = np.einsum("m,q,mq,qa->ma", length, GAUSS_W, gq, p2_edge_shape(GAUSS_T))
    return _bincount_complex(space.edge_dofs[edges], local, space.ndof)


def gaussian_source(center, amplitude, radius):
    """Mollified point source: a normalised Gaussian of standard deviation ``radius``."""
    cx, cy = center
    r2 = float(radius) ** 2

    def source(xy):
        d2 = (xy[..., 0] - cx) ** 2 + (xy[..., 1] - cy) ** 2
        return amplitude * np.exp(-0.5 * d2 / r2) / (2 * np.pi * r2)

    return source


def eliminate_dirichlet(A_full, rhs_full, dirichlet_values, n=None):
    """Reduce to the non-Dirichlet block and move the lifting to the right-hand side.

    Passing ``n`` (the non-Dirichlet count) checks the length of ``dirichlet_values``.
    """
    size = A_full.shape[0]
    ubar = np.asarray(dirichlet_values, dtype=complex).ravel()
    d = len(ubar)
    if A_full.shape != (size, size) or len(rhs_full) != size or d > size:
        raise AssemblyError("inconsistent sizes for Dirichlet elimination")
    if n is not None and n + d != size:
        raise AssemblyError(f"expected {size - n} Dirichlet values, got {d}")
    n = size - d
    A_full = sp.csr_matrix(A_full)
    rhs = np.asarray(rhs_full, dtype=complex)
    if d == 0:
        return A_full, rhs.copy()
    A = A_full[:n, :n].tocsr()
    f = rhs[:n] - A_full[:n, n:] @ ubar
    return A, f


def reconstruct(u, dirichlet_values):
    """Full coefficient vector from the reduced solution and the Dirichlet data."""
    return np.concatenate([np.asarray(u, dtype=complex), np.asarray(dirichlet_values, dtype=complex)])


def assemble_interface_mass(space: FeSpace, edge_set, dof_set=None):
    """Mass matrix ``int_Gamma phi_j phi_i ds`` over ``edge_set``, restricted to ``dof_set``.

    ``dof_set`` defaults to all dofs carried by the edges (sorted).
    """
    edges = np.asarray(edge_set, dtype=np.int64)
    if len(edges) == 0:
        raise AssemblyError("empty interface")
    if dof_set is None:
        dof_set = np.unique(space.edge_dofs[edges])
    dof_set = np.asarray(dof_set, dtype=np.int64)
    M = _scatter(space.edge_dofs[edges], edge_mass_blocks(space, edges).astype(complex), space.ndof)
    return _symmetrize(M[dof_set][:, dof_set])


def l2_error(space: FeSpace, u_full, exact):
    """L2 norm of ``u_h - exact`` using the element quadrature rule."""
    data = element_data(space)
    uq = np.einsum("qa,ea->eq", data.phi, np.asarray(u_full)[space.tri_dofs])
    diff = uq - exact(data.qpoints)
    return float(np.sqrt(np.einsum("e,q,eq->", data.area, QUAD_W, np.abs(diff) ** 2)))


def export_matrix_market(A, path):
    scipy.io.mmwrite(str(path), sp.coo_matrix(A).astype(complex), field="complex", symmetry="general")
