"""Coarse spaces (grid, DtN, GenEO family) and two-level Schwarz preconditioners."""
from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .assembly import AssemblyRecipe, WaveNumberField, assemble, assemble_interface_mass, p2_shape
from .decomp import Decomposition, Subdomain
from .eig import EigPairs, EigRequest, solve_gevp_smallest_real
from .krylov import KrylovConfig, gmres
from .localops import factorize, local_assembled, local_dirichlet
from .mesh import FeSpace, MeshError
from .onelevel import OneLevelPreconditioner, build_oras

GENEO_VARIANTS = ("geneo-overlap", "geneo-subdomain", "geneo-laplace", "h-geneo")
DAGGERS = ("conjugate", "transpose")


class CoarseSpaceError(RuntimeError):
    pass


# ---------------------------------------------------------------- coarse solvers


class ExactCoarseSolve:
    """Exact LU of the coarse operator (dense below a few thousand columns, sparse otherwise)."""

    iterative = False

    def __init__(self, E, tag=""):
        self.tag = tag
        if sp.issparse(E):
            self.E = sp.csc_matrix(E, dtype=complex)
            try:
                self._F = factorize(self.E, kind=f"coarse {tag}")
            except RuntimeError as exc:
                raise CoarseSpaceError(f"singular coarse operator ({tag}): {exc}") from exc
            self._solve = self._F.solve
        else:
            self.E = np.asarray(E, dtype=complex)
            if self.E.size == 0:
                raise CoarseSpaceError(f"empty coarse operator ({tag})")
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)  # singularity is reported below
                lu, piv = sla.lu_factor(self.E, check_finite=True)
            d = np.abs(np.diag(lu))
            if d.min() <= 1e-14 * max(d.max(), 1e-300):
                raise CoarseSpaceError(f"singular coarse operator ({tag})")
            self._solve = lambda y: sla.lu_solve((lu, piv), y)

    def solve(self, y):
        return self._solve(np.asarray(y, dtype=complex))


class IterativeCoarseSolve:
    """Inexact coarse solve: GMRES on the coarse matrix preconditioned by a one-level method."""

    iterative = True

    def __init__(self, E, preconditioner, tol=0.1, max_iter=200, tag="grid"):
        self.E = sp.csr_matrix(E)
        self.preconditioner = preconditioner
        self.cfg = KrylovConfig(tol=tol, max_iter=max_iter, record_history=False)
        self.tag = tag
        self.reset()

    def reset(self):
        self.counts = []
        self.capped = 0

    def solve(self, y):
        x, rep = gmres(self.E, self.preconditioner, y, self.cfg, label="inner")
        self.counts.append(rep.iterations)
        if not rep.converged:
            self.capped += 1
        return x

    @property
    def average(self):
        return float(np.mean(self.counts)) if self.counts else 0.0


# ---------------------------------------------------------------- coarse space container


@dataclass(eq=False)
class CoarseSpace:
    Z: object  # dense ndarray or sparse matrix, n x m
    solver: object
    tag: str
    counts: list = field(default_factory=list)
    columns: list = field(default_factory=list)  # (subdomain, eigenvalue) per column
    dagger: str = "conjugate"

    @property
    def m(self):
        return self.Z.shape[1]

    def adjoint(self, r):
        if self.dagger == "conjugate":
            return self.Z.conj().T @ r
        return self.Z.T @ r

    def Q(self, r):
        """Coarse correction ``Z E^{-1} Z^dagger r``."""
        return self.Z @ self.solver.solve(self.adjoint(r))

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["column", "subdomain", "re_lambda", "im_lambda"])
            for j, (s, lam) in enumerate(self.columns):
                w.writerow([j, s, f"{lam.real:.12e}", f"{lam.imag:.12e}"])


def _adjoint(Z, dagger):
    if dagger not in DAGGERS:
        raise ValueError(f"dagger must be one of {DAGGERS}")
    return Z.conj().T if dagger == "conjugate" else Z.T


def coarse_matrix(Z, A, dagger="conjugate"):
    """``E = Z^dagger A Z`` (dense for dense ``Z``)."""
    AZ = A @ Z
    E = _adjoint(Z, dagger) @ AZ
    return E.toarray() if sp.issparse(E) and not sp.issparse(Z) else E


def assemble_coarse_operator(Z, A, dagger="conjugate", tag=""):
    return ExactCoarseSolve(coarse_matrix(Z, A, dagger), tag=tag)


# ---------------------------------------------------------------- grid coarse space


def interpolation_matrix(coarse_space: FeSpace, fine_space: FeSpace):
    """Nodal interpolation from the coarse P2 space into the fine one, as a sparse ``n_f x n_c`` matrix.

    The fine mesh must come from ``refine_uniform(coarse_mesh, s)``.
    Rows of fine Dirichlet dofs and columns of coarse Dirichlet dofs are dropped.
    """
    cm, fm = coarse_space.mesh, fine_space.mesh
    ratio = fm.n_triangles / cm.n_triangles
    s = math.isqrt(int(round(ratio)))
    if s * s * cm.n_triangles != fm.n_triangles:
        raise MeshError("meshes not nested: triangle counts are not related by s^2")

    nt = fm.n_triangles
    first = np.full(fine_space.ndof, nt, dtype=np.int64)
    np.minimum.at(first, fine_space.tri_dofs.ravel(), np.repeat(np.arange(nt), 6))
    parent = first // (s * s)

    P = cm.vertices[cm.triangles[parent]]  # (ndof_f, 3, 2)
    x = fine_space.coords
    d1 = P[:, 1] - P[:, 0]
    d2 = P[:, 2] - P[:, 0]
    det = d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0]
    rx = x - P[:, 0]
    l1 = (rx[:, 0] * d2[:, 1] - rx[:, 1] * d2[:, 0]) / det
    l2 = (d1[:, 0] * rx[:, 1] - d1[:, 1] * rx[:, 0]) / det
    bary = np.column_stack([1 - l1 - l2, l1, l2])
    if bary.min() < -1e-10:
        raise MeshError("meshes not nested: fine dof outside its parent triangle")

    vals = p2_shape(bary)
    vals[np.abs(vals) < 1e-13] = 0.0
    cols = coarse_space.tri_dofs[parent]
    rows = np.repeat(np.arange(fine_space.ndof), 6)
    vals, cols = vals.ravel(), cols.ravel()
    keep = (rows < fine_space.n) & (cols < coarse_space.n) & (vals != 0)
    Z = sp.coo_matrix((vals[keep], (rows[keep], cols[keep])), shape=(fine_space.n, coarse_space.n)).tocsr()
    Z.sum_duplicates()
    return Z


def build_grid_coarse(
    fine_space: FeSpace,
    coarse_space: FeSpace,
    k: WaveNumberField,
    eps: float = 0.0,
    coarse_decomposition: Decomposition | None = None,
    inner_tol: float = 0.1,
    inner_max_iter: int = 200,
    exact: bool = False,
) -> CoarseSpace:
    """Grid coarse space: interpolation from a nested coarse mesh, coarse matrix with absorption ``eps``.

    With ``exact=False`` the coarse problem is solved by GMRES to ``inner_tol``,
    preconditioned by ORAS (with the same absorption) on ``coarse_decomposition``.
    """
    Z = interpolation_matrix(coarse_space, fine_space)
    full = assemble(coarse_space, AssemblyRecipe(eps=eps), k)
    E = full[: coarse_space.n, : coarse_space.n].tocsr()
    if exact:
        solver = ExactCoarseSolve(E, tag="grid")
    else:
        if coarse_decomposition is None:
            raise CoarseSpaceError("inner-iterative grid coarse solve needs a coarse decomposition")
        M = build_oras(coarse_space, coarse_decomposition, k, eps=eps)
        solver = IterativeCoarseSolve(E, M, tol=inner_tol, max_iter=inner_max_iter)
    return CoarseSpace(Z=Z, solver=solver, tag="grid")


# ---------------------------------------------------------------- spectral coarse spaces


@dataclass(eq=False)
class DtNPencil:
    S: np.ndarray  # Schur complement on the interface
    M: object  # interface mass matrix
    gamma: np.ndarray
    interior: np.ndarray
    extension: np.ndarray  # A_II^{-1} A_IG, dense

    def extend(self, u_gamma, size):
        u = np.zeros((size,) + u_gamma.shape[1:], dtype=complex)
        u[self.gamma] = u_gamma
        u[self.interior] = -self.extension @ u_gamma
        return u


def dtn_pencil(A, space: FeSpace, sub: Subdomain, k: WaveNumberField) -> DtNPencil:
    """Interface pencil ``(A~_GG - A_GI A_II^{-1} A_IG, M_G)`` of the subdomain DtN map."""
    if len(sub.gamma) == 0:
        raise CoarseSpaceError(f"subdomain {sub.id} has no artificial interface")
    Ad = local_dirichlet(A, sub)
    An = local_assembled(space, sub, "neumann", k)
    G, I = sub.gamma, sub.interior
    F = factorize(Ad[I][:, I], subdomain=sub.id, kind="dirichlet-interior")
    X = F.solve(Ad[I][:, G].toarray()) if len(I) else np.zeros((0, len(G)), dtype=complex)
    S = An[G][:, G].toarray() - Ad[G][:, I] @ X
    M = assemble_interface_mass(space, sub.interface_edges, sub.dofs[G])
    return DtNPencil(S=np.asarray(S), M=M, gamma=G, interior=I, extension=X)


def _finalize(columns, col_info, n, counts, tag, A, dagger, drop_dependent):
    if not columns:
        raise CoarseSpaceError(f"{tag}: no coarse vectors were selected")
    Z = np.column_stack(columns)
    Z = Z / np.linalg.norm(Z, axis=0)
    sv = np.linalg.svd(Z, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        if not drop_dependent:
            raise CoarseSpaceError(f"{tag}: coarse vectors are linearly dependent")
        _, R, piv = sla.qr(Z, mode="economic", pivoting=True)
        rank = int(np.sum(np.abs(np.diag(R)) > 1e-12 * abs(R[0, 0])))
        keep = np.sort(piv[:rank])
        warnings.warn(f"{tag}: dropped {Z.shape[1] - rank} dependent coarse vectors", stacklevel=3)
        Z = Z[:, keep]
        col_info = [col_info[j] for j in keep]
    solver = assemble_coarse_operator(Z, A, dagger=dagger, tag=tag)
    return CoarseSpace(Z=Z, solver=solver, tag=tag, counts=counts, columns=col_info, dagger=dagger)


def _prolong_column(sub: Subdomain, u_local, n):
    col = np.zeros(n, dtype=complex)
    col[sub.dofs] = sub.pou * u_local
    return col


def build_dtn_coarse(
    decomposition: Decomposition,
    A,
    k: WaveNumberField,
    req: EigRequest,
    dagger: str = "conjugate",
) -> CoarseSpace:
    """DtN coarse space: interface eigenmodes, Helmholtz-extended and weighted by ``D_s``."""
    space = decomposition.space
    columns, info, counts = [], [], []
    for sub in decomposition:
        pencil = dtn_pencil(A, space, sub, k)
        pairs = solve_gevp_smallest_real(pencil.S, pencil.M, req, subdomain=sub.id)
        counts.append(len(pairs))
        for p in pairs:
            u = pencil.extend(p.vector, sub.size)
            columns.append(_prolong_column(sub, u, decomposition.n))
            info.append((sub.id, p.value))
    return _finalize(columns, info, decomposition.n, counts, "dtn", A, dagger, drop_dependent=True)


def geneo_pencil(variant, A, space: FeSpace, sub: Subdomain, k: WaveNumberField, L=None):
    """Left and right matrices of a GenEO-type pencil on one subdomain (dense)."""
    D = sp.diags(sub.pou)
    if variant in ("geneo-overlap", "geneo-subdomain", "h-geneo"):
        left = local_assembled(space, sub, "neumann", k)
    elif variant == "geneo-laplace":
        left = local_assembled(space, sub, "neumann", volume="laplace")
    else:
        raise ValueError(f"unknown GenEO variant {variant!r}")

    if variant == "geneo-overlap":
        inner = local_assembled(space, sub, "overlap_neumann", k)
    elif variant == "geneo-subdomain":
        inner = local_dirichlet(A, sub)
    else:
        if L is None:
            raise ValueError("Laplace-based variants need the global Laplace matrix")
        inner = local_dirichlet(L, sub)
    right = D @ inner @ D
    return left.toarray(), right.toarray()


def global_laplace(space: FeSpace):
    """Reduced Laplace stiffness (Dirichlet dofs eliminated)."""
    full = assemble(space, AssemblyRecipe(volume="laplace"))
    return full[: space.n, : space.n].tocsr()


def build_geneo_family(
    decomposition: Decomposition,
    variant: str,
    A,
    k: WaveNumberField,
    req: EigRequest,
    L=None,
    dagger: str = "conjugate",
) -> CoarseSpace:
    """GenEO-type coarse space; ``variant`` is one of :data:`GENEO_VARIANTS`."""
    if variant not in GENEO_VARIANTS:
        raise ValueError(f"unknown GenEO variant {variant!r}")
    space = decomposition.space
    if variant in ("geneo-laplace", "h-geneo") and L is None:
        L = global_laplace(space)
    columns, info, counts = [], [], []
    for sub in decomposition:
        left, right = geneo_pencil(variant, A, space, sub, k, L=L)
        pairs = solve_gevp_smallest_real(left, right, req, subdomain=sub.id)
        counts.append(len(pairs))
        for p in pairs:
            columns.append(_prolong_column(sub, p.vector, decomposition.n))
            info.append((sub.id, p.value))
    return _finalize(columns, info, decomposition.n, counts, variant, A, dagger, drop_dependent=True)


def subdomain_spectrum(method, A, decomposition, s, k, req, L=None) -> EigPairs:
    """Eigenpairs of one subdomain's pencil, for diagnostics."""
    sub = decomposition.subdomains[s]
    if method == "dtn":
        pencil = dtn_pencil(A, decomposition.space, sub, k)
        return solve_gevp_smallest_real(pencil.S, pencil.M, req, subdomain=s)
    if method in ("geneo-laplace", "h-geneo") and L is None:
        L = global_laplace(decomposition.space)
    left, right = geneo_pencil(method, A, decomposition.space, sub, k, L=L)
    return solve_gevp_smallest_real(left, right, req, subdomain=s)


# ---------------------------------------------------------------- two-level preconditioner


class TwoLevelPreconditioner:
    """Adapted deflation ``M^{-1}(r - A Q r) + Q r`` or additive ``M^{-1} r + Q r``."""

    def __init__(self, one_level: OneLevelPreconditioner, coarse: CoarseSpace, A, mode="deflation", deflation_matrix=None):
        if mode not in ("deflation", "additive"):
            raise ValueError(f"unknown combination mode {mode!r}")
        self.one_level = one_level
        self.coarse = coarse
        self.A = A
        self.mode = mode
        self.deflation_matrix = A if deflation_matrix is None else deflation_matrix
        self.label = f"{one_level.label}+{coarse.tag}"

    @property
    def iterative(self):
        return getattr(self.coarse.solver, "iterative", False)

    def apply(self, r):
        r = np.asarray(r, dtype=complex)
        q = self.coarse.Q(r)
        if self.mode == "additive":
            return self.one_level.apply(r) + q
        return self.one_level.apply(r - self.deflation_matrix @ q) + q

    __call__ = apply
