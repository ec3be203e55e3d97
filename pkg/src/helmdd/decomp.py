"""Element partitions, overlapping subdomains, restriction maps and Boolean partition of unity."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .mesh import FeSpace, Mesh


class PartitionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Partition:
    n_parts: int
    owner: np.ndarray  # (nt,) subdomain id per triangle
    mode: str = "strips"

    def __post_init__(self):
        counts = np.bincount(self.owner, minlength=self.n_parts)
        if len(counts) != self.n_parts or np.any(counts == 0):
            raise PartitionError("every subdomain must own at least one triangle")

    def elements(self, s):
        return np.flatnonzero(self.owner == s)


def _grid_shape(N):
    q = int(math.isqrt(N))
    while N % q:
        q -= 1
    return N // q, q


def partition_geometric(mesh: Mesh, N: int, mode: str = "strips", grid=None) -> Partition:
    """Bin triangle centroids into ``N`` vertical strips or a ``p x q`` grid of equal-width cells."""
    if N < 1:
        raise PartitionError("need at least one subdomain")
    if N > mesh.n_triangles:
        raise PartitionError(f"{N} subdomains for {mesh.n_triangles} triangles")
    c = mesh.centroids()
    (x0, x1), (y0, y1) = mesh.bounding_box()

    def bins(v, lo, hi, m):
        return np.clip(np.floor((v - lo) / (hi - lo) * m).astype(np.int64), 0, m - 1)

    if mode == "strips":
        owner = bins(c[:, 0], x0, x1, N)
    elif mode == "grid":
        p, q = grid if grid is not None else _grid_shape(N)
        if p * q != N:
            raise PartitionError(f"grid {p}x{q} does not match N={N}")
        owner = bins(c[:, 1], y0, y1, q) * p + bins(c[:, 0], x0, x1, p)
    else:
        raise PartitionError(f"unknown partition mode {mode!r}")
    if np.any(np.bincount(owner, minlength=N) == 0):
        raise PartitionError(f"empty bin for N={N} in mode {mode!r}")
    return Partition(N, owner, mode)


def refine_partition(partition: Partition, s: int) -> Partition:
    """Lift a partition to ``refine_uniform(mesh, s)`` (children of triangle t are contiguous)."""
    return Partition(partition.n_parts, np.repeat(partition.owner, s * s), partition.mode)


def load_partition(path, mesh: Mesh) -> Partition:
    """Read ``triangle_index subdomain_id`` lines."""
    data = np.loadtxt(path, dtype=np.int64, ndmin=2)
    owner = -np.ones(mesh.n_triangles, dtype=np.int64)
    owner[data[:, 0]] = data[:, 1]
    if np.any(owner < 0):
        raise PartitionError("partition file does not cover every triangle")
    return Partition(int(owner.max()) + 1, owner, "file")


def save_partition(partition: Partition, path) -> None:
    rows = np.column_stack([np.arange(len(partition.owner)), partition.owner])
    np.savetxt(Path(path), rows, fmt="%d")


@dataclass(eq=False)
class Subdomain:
    id: int
    elements: np.ndarray  # triangles of the overlapping subdomain
    core: np.ndarray  # triangles of the non-overlapping part
    dofs: np.ndarray  # sorted reduced (non-Dirichlet) global dof indices
    gamma: np.ndarray  # local positions of artificial-interface dofs
    interface_edges: np.ndarray  # edges on the artificial boundary
    pou: np.ndarray  # 0/1 weight per local dof
    overlap_elements: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=np.int64))

    @property
    def size(self):
        return len(self.dofs)

    @property
    def interior(self):
        mask = np.ones(self.size, dtype=bool)
        mask[self.gamma] = False
        return np.flatnonzero(mask)

    def restrict(self, v):
        return v[self.dofs]

    def prolong_add(self, local, out):
        out[self.dofs] += local
        return out


@dataclass(eq=False)
class Decomposition:
    space: FeSpace
    partition: Partition
    subdomains: list
    overlap_layers: int
    multiplicity: np.ndarray  # number of subdomains containing each triangle

    @property
    def n(self):
        return self.space.n

    @property
    def N(self):
        return len(self.subdomains)

    def __iter__(self):
        return iter(self.subdomains)

    def __len__(self):
        return len(self.subdomains)

    def restriction(self, s):
        """Sparse Boolean ``R_s`` of shape ``(n_s, n)``."""
        sub = self.subdomains[s]
        return sp.csr_matrix((np.ones(sub.size), (np.arange(sub.size), sub.dofs)), shape=(sub.size, self.n))

    def pou_sum(self):
        """``sum_s R_s^T D_s R_s`` as a sparse matrix (identity when the partition of unity is exact)."""
        total = sp.csr_matrix((self.n, self.n))
        for s, sub in enumerate(self.subdomains):
            R = self.restriction(s)
            total = total + R.T @ sp.diags(sub.pou) @ R
        return total.tocsr()


def incidence(space: FeSpace):
    """Triangle-to-dof incidence ``(nt, ndof)`` in the full numbering."""
    nt = space.mesh.n_triangles
    rows = np.repeat(np.arange(nt), 6)
    return sp.csr_matrix((np.ones(6 * nt), (rows, space.tri_dofs.ravel())), shape=(nt, space.ndof))


def add_layer(T, element_mask):
    """Every triangle sharing a dof with the current set."""
    dof_mask = (T.T @ element_mask.astype(float)) > 0
    return (T @ dof_mask.astype(float)) > 0


def grow_overlap(partition: Partition, space: FeSpace, layers: int = 1) -> Decomposition:
    if layers < 1:
        raise PartitionError("overlap needs at least one layer")
    mesh = space.mesh
    nt = mesh.n_triangles
    T = incidence(space)

    # owning element of a dof: smallest triangle index containing it
    owner_elem = np.full(space.ndof, nt, dtype=np.int64)
    np.minimum.at(owner_elem, space.tri_dofs.ravel(), np.repeat(np.arange(nt), 6))
    dof_owner = partition.owner[owner_elem]

    masks = []
    for s in range(partition.n_parts):
        m = partition.owner == s
        for _ in range(layers):
            m = add_layer(T, m)
        masks.append(m)
    multiplicity = np.sum(masks, axis=0)

    subs = []
    for s, m in enumerate(masks):
        elements = np.flatnonzero(m)
        full_dofs = np.unique(space.tri_dofs[elements])
        dofs = full_dofs[full_dofs < space.n]

        ecount = np.bincount(mesh.tri_edges[elements].ravel(), minlength=mesh.n_edges)
        artificial = np.flatnonzero((ecount == 1) & (mesh.edge_counts == 2))
        gdofs = np.unique(space.edge_dofs[artificial])
        gdofs = gdofs[gdofs < space.n]
        gamma = np.searchsorted(dofs, gdofs)

        subs.append(
            Subdomain(
                id=s,
                elements=elements,
                core=partition.elements(s),
                dofs=dofs,
                gamma=gamma,
                interface_edges=artificial,
                pou=(dof_owner[dofs] == s).astype(float),
                overlap_elements=elements[multiplicity[elements] >= 2],
            )
        )
    return Decomposition(space, partition, subs, layers, multiplicity)


def restrict(sub: Subdomain, v):
    return sub.restrict(v)


def prolong_add(sub: Subdomain, local, out):
    return sub.prolong_add(local, out)
