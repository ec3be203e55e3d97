"""Dense generalized eigensolver returning the finite eigenpairs with smallest real part."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

INFINITE_CUTOFF = 1e-10
RESIDUAL_FACTOR = 1e-8


class EigenSolveError(RuntimeError):
    def __init__(self, message, subdomain=None):
        self.subdomain = subdomain
        super().__init__(message if subdomain is None else f"{message} (subdomain {subdomain})")


@dataclass(frozen=True)
class EigPair:
    value: complex
    vector: np.ndarray
    residual: float

    @property
    def abscissa(self):
        return self.value.real


@dataclass(frozen=True)
class EigRequest:
    """Either a fixed count ``nu`` or an abscissa threshold ``eta_max``."""

    nu: int | None = None
    eta_max: float | None = None
    kind: str = ""

    def __post_init__(self):
        if (self.nu is None) == (self.eta_max is None):
            raise ValueError("set exactly one of nu / eta_max")
        if self.nu is not None and self.nu < 0:
            raise ValueError("nu must be non-negative")


class EigPairs(list):
    """Ordered eigenpairs; ``truncated`` is set when fewer than ``nu`` finite pairs exist."""

    def __init__(self, pairs=(), truncated=False):
        super().__init__(pairs)
        self.truncated = truncated

    @property
    def values(self):
        return np.array([p.value for p in self], dtype=complex)

    def vectors(self):
        if not self:
            return np.zeros((0, 0), dtype=complex)
        return np.column_stack([p.vector for p in self])


def _dense(M):
    return M.toarray() if sp.issparse(M) else np.asarray(M)


def _fix_phase(v):
    v = v / np.linalg.norm(v)
    j = int(np.argmax(np.abs(v)))
    return v * (np.conj(v[j]) / abs(v[j]))


def finite_spectrum(A, B):
    """All finite eigenvalues of the pencil and the matching right eigenvectors (QZ, unsorted)."""
    A = _dense(A).astype(complex)
    B = _dense(B).astype(complex)
    w, vr = sla.eig(A, B, right=True, homogeneous_eigvals=True)
    alpha, beta = w
    scale = np.maximum(np.abs(alpha), np.abs(beta))
    finite = (np.abs(beta) > INFINITE_CUTOFF * scale) & (scale > 0)
    return alpha[finite] / beta[finite], vr[:, finite]


def deflated_spectrum(A, B):
    """Finite spectrum by exact reduction, or ``None`` when the reduction does not apply.

    Rows/columns where ``B`` vanishes identically carry only infinite eigenvalues; they are
    eliminated through a Schur complement of ``A``. The remaining ``B`` block, when Hermitian
    positive definite, is removed by a Cholesky transform so a standard eigensolver suffices.
    """
    zero = ~(np.any(B != 0, axis=0) | np.any(B != 0, axis=1))
    z, o = np.flatnonzero(zero), np.flatnonzero(~zero)
    if len(o) == 0:
        return np.zeros(0, dtype=complex), np.zeros((A.shape[0], 0), dtype=complex)
    Boo = B[np.ix_(o, o)]
    if np.abs(Boo - Boo.conj().T).max() > 1e-13 * np.abs(Boo).max():
        return None
    try:
        C = np.linalg.cholesky(Boo)
    except np.linalg.LinAlgError:
        return None
    if len(z):
        lu, piv = sla.lu_factor(A[np.ix_(z, z)])
        d = np.abs(np.diag(lu))
        if d.min() <= 1e-12 * d.max():
            return None
        X = sla.lu_solve((lu, piv), A[np.ix_(z, o)])
        S = A[np.ix_(o, o)] - A[np.ix_(o, z)] @ X
    else:
        S = A
    T = sla.solve_triangular(C, S, lower=True)
    T = sla.solve_triangular(C, T.conj().T, lower=True).conj().T
    lam, W = sla.eig(T)
    Uo = sla.solve_triangular(C.conj().T, W, lower=False)
    U = np.zeros((A.shape[0], len(lam)), dtype=complex)
    U[o] = Uo
    if len(z):
        U[z] = -X @ Uo
    return lam, U


def solve_gevp_smallest_real(A, B, req: EigRequest, subdomain=None, method="auto") -> EigPairs:
    """Finite eigenpairs of ``A v = lam B v`` sorted by real part, then ``|Im|``, then index.

    ``method="qz"`` forces the generalized Schur path; ``"auto"`` first tries the exact
    reduction of :func:`deflated_spectrum` and falls back to QZ.
    """
    A = _dense(A).astype(complex)
    B = _dense(B).astype(complex)
    if A.shape != B.shape or A.shape[0] != A.shape[1]:
        raise ValueError("pencil matrices must be square and of equal size")
    if A.shape[0] == 0:
        return EigPairs([], truncated=bool(req.nu))
    try:
        found = deflated_spectrum(A, B) if method == "auto" else None
        lam, vecs = found if found is not None else finite_spectrum(A, B)
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigenSolveError(f"QZ failed: {exc}", subdomain) from exc

    order = np.lexsort((np.arange(len(lam)), np.abs(lam.imag), lam.real))
    if req.nu is not None:
        chosen = order[: req.nu]
        truncated = len(lam) < req.nu
    else:
        chosen = order[lam[order].real < req.eta_max]
        truncated = False

    a_max = np.abs(A).max()
    b_max = np.abs(B).max()
    pairs = []
    for j in chosen:
        v = _fix_phase(vecs[:, j])
        res = float(np.linalg.norm(A @ v - lam[j] * (B @ v)))
        if res > RESIDUAL_FACTOR * (a_max + abs(lam[j]) * b_max):
            raise EigenSolveError(f"eigenpair residual {res:.2e} above tolerance", subdomain)
        pairs.append(EigPair(complex(lam[j]), v, res))
    return EigPairs(pairs, truncated=truncated)
