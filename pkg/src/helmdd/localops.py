"""Per-subdomain matrices and their exact factorizations."""
from __future__ import annotations

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import AssemblyRecipe, WaveNumberField, assemble
from .decomp import Subdomain
from .mesh import FeSpace

KINDS = ("dirichlet", "robin", "neumann", "overlap_neumann")


class LocalSolveError(RuntimeError):
    """Failure of a local factorization, tagged with where it happened."""

    def __init__(self, message, subdomain=None, kind=None, condition=None):
        self.subdomain = subdomain
        self.kind = kind
        self.condition = condition
        where = []
        if subdomain is not None:
            where.append(f"subdomain {subdomain}")
        if kind is not None:
            where.append(f"kind {kind}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class SingularMatrixError(LocalSolveError):
    pass


class EmptyOverlapError(LocalSolveError):
    pass


def local_dirichlet(A, sub: Subdomain):
    """``R_s A R_s^T``."""
    return sp.csr_matrix(A)[sub.dofs][:, sub.dofs].tocsr()


def local_assembled(
    space: FeSpace,
    sub: Subdomain,
    kind: str,
    k: WaveNumberField | None = None,
    eps: float = 0.0,
    volume: str = "helmholtz",
):
    """Assemble a local matrix over the subdomain's own triangles.

    ``robin`` adds ``i k`` impedance on the artificial interface, ``neumann`` leaves it
    natural, ``overlap_neumann`` integrates only over triangles shared with another
    subdomain. Physical boundary conditions are those of the global problem and
    global Dirichlet dofs are eliminated.
    """
    if kind not in ("robin", "neumann", "overlap_neumann"):
        raise ValueError(f"cannot assemble local kind {kind!r}")
    elements = sub.elements
    interface = ()
    if kind == "overlap_neumann":
        elements = sub.overlap_elements
        if len(elements) == 0:
            raise EmptyOverlapError("empty overlap zone", subdomain=sub.id, kind=kind)
    elif kind == "robin" and volume == "helmholtz":
        interface = tuple(sub.interface_edges)
    recipe = AssemblyRecipe(volume=volume, eps=eps, interface_edges=interface)
    full = assemble(space, recipe, k, elements=elements)
    return full[sub.dofs][:, sub.dofs].tocsr()


class Factorization:
    """Sparse LU of a local matrix (SuperLU with partial pivoting)."""

    def __init__(self, M, label=None, subdomain=None, kind=None):
        M = sp.csc_matrix(M, dtype=complex)
        if M.shape[0] != M.shape[1]:
            raise ValueError("factorization needs a square matrix")
        self.matrix = M
        self.size = M.shape[0]
        self.label = label
        self.subdomain = subdomain
        self.kind = kind
        self._cond = None
        if self.size == 0:
            self._lu = None
            return
        try:
            self._lu = spla.splu(M)
        except RuntimeError as exc:
            raise SingularMatrixError(str(exc), subdomain=subdomain, kind=kind) from exc
        udiag = np.abs(self._lu.U.diagonal())
        if not np.all(np.isfinite(udiag)) or udiag.min() == 0.0:
            raise SingularMatrixError("zero pivot", subdomain=subdomain, kind=kind)

    def solve(self, b):
        if self._lu is None:
            return np.zeros_like(b, dtype=complex)
        return self._lu.solve(np.asarray(b, dtype=complex))

    def solve_adjoint(self, b):
        if self._lu is None:
            return np.zeros_like(b, dtype=complex)
        return self._lu.solve(np.asarray(b, dtype=complex), trans="H")

    def condest(self):
        """1-norm condition number estimate."""
        if self._cond is None:
            if self.size == 0:
                self._cond = 1.0
            else:
                inv = spla.LinearOperator(
                    self.matrix.shape, matvec=self.solve, rmatvec=self.solve_adjoint, dtype=complex
                )
                self._cond = float(spla.onenormest(self.matrix) * spla.onenormest(inv))
        return self._cond

    def residual(self, b):
        """Relative residual ``||M x - b||_inf / ||b||_inf`` of the computed solution."""
        x = self.solve(b)
        return float(np.abs(self.matrix @ x - b).max() / max(np.abs(b).max(), np.finfo(float).tiny))


def factorize(M, cond_limit=None, label=None, subdomain=None, kind=None) -> Factorization:
    """Exact factorization; with ``cond_limit`` a near-singular matrix is rejected too."""
    F = Factorization(M, label=label, subdomain=subdomain, kind=kind)
    if cond_limit is not None:
        cond = F.condest()
        if not np.isfinite(cond) or cond > cond_limit:
            raise SingularMatrixError(
                f"near-singular local matrix, condition estimate {cond:.3e}",
                subdomain=subdomain,
                kind=kind,
                condition=cond,
            )
    return F
