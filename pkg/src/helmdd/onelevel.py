"""One-level restricted additive Schwarz preconditioners (RAS, ORAS, ORAS with absorption)."""
from __future__ import annotations

import numpy as np
import scipy.sparse.linalg as spla

from .assembly import WaveNumberField
from .decomp import Decomposition
from .localops import factorize, local_assembled, local_dirichlet
from .mesh import FeSpace

RAS_COND_LIMIT = 1e12


class OneLevelPreconditioner:
    """``z = sum_s R_s^T D_s A_loc,s^{-1} R_s r`` with one exact factorization per subdomain."""

    def __init__(self, decomposition: Decomposition, factors, label):
        if len(factors) != decomposition.N:
            raise ValueError("one factorization per subdomain required")
        self.decomposition = decomposition
        self.factors = list(factors)
        self.label = label

    @property
    def shape(self):
        n = self.decomposition.n
        return (n, n)

    def apply(self, r):
        r = np.asarray(r, dtype=complex)
        z = np.zeros_like(r)
        for sub, F in zip(self.decomposition.subdomains, self.factors):
            local = F.solve(r[sub.dofs])
            w = sub.pou if local.ndim == 1 else sub.pou[:, None]
            z[sub.dofs] += w * local
        return z

    __call__ = apply

    def as_linear_operator(self):
        return spla.LinearOperator(self.shape, matvec=self.apply, matmat=self.apply, dtype=complex)


def build_ras(A, decomposition: Decomposition, cond_limit=RAS_COND_LIMIT) -> OneLevelPreconditioner:
    """RAS with local Dirichlet matrices; near-singular local problems raise."""
    factors = [
        factorize(local_dirichlet(A, sub), cond_limit=cond_limit, subdomain=sub.id, kind="dirichlet")
        for sub in decomposition
    ]
    return OneLevelPreconditioner(decomposition, factors, "RAS")


def build_oras(
    space: FeSpace, decomposition: Decomposition, k: WaveNumberField, eps: float = 0.0
) -> OneLevelPreconditioner:
    """ORAS with local Robin matrices; ``eps > 0`` adds absorption to the local problems."""
    factors = [
        factorize(local_assembled(space, sub, "robin", k, eps=eps), subdomain=sub.id, kind="robin")
        for sub in decomposition
    ]
    return OneLevelPreconditioner(decomposition, factors, "ORAS" if not eps else f"ORAS(eps={eps:g})")


def stationary_iterate(P, A, b, x0=None, iters=10):
    """Run ``x <- x + P(b - A x)`` and return the final iterate and the residual norms."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    apply = P.apply if hasattr(P, "apply") else P
    x = np.zeros(len(b), dtype=complex) if x0 is None else np.array(x0, dtype=complex)
    norms = []
    for _ in range(iters):
        r = b - A @ x
        norms.append(float(np.linalg.norm(r)))
        x = x + apply(r)
    norms.append(float(np.linalg.norm(b - A @ x)))
    return x, norms
