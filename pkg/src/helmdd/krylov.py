"""Right-preconditioned GMRES and flexible GMRES for complex systems."""
from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse.linalg as spla


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class KrylovConfig:
    method: str = "gmres"
    tol: float = 1e-6
    max_iter: int = 500
    restart: int | None = None
    record_history: bool = True

    def __post_init__(self):
        if self.method not in ("gmres", "fgmres"):
            raise ConfigError(f"unknown Krylov method {self.method!r}")
        if not 0 < self.tol < 1:
            raise ConfigError("tolerance must lie in (0, 1)")
        if self.max_iter < 1:
            raise ConfigError("max_iter must be >= 1")
        if self.restart is not None and self.restart < 1:
            raise ConfigError("restart must be >= 1")


@dataclass
class SolverReport:
    converged: bool
    iterations: int
    history: list = field(default_factory=list)
    status: str = "converged"  # converged | max_iter | breakdown
    final_residual: float = float("nan")
    inner_avg: float | None = None
    inner_total: int | None = None
    wall_time: float = 0.0
    label: str = ""

    def cell(self):
        """Table entry: iteration count, with average inner count when present."""
        if not self.converged:
            return "×"
        if self.inner_avg is not None:
            return f"{self.iterations}({int(np.floor(self.inner_avg + 0.5))})"
        return str(self.iterations)


def as_operator(M, n):
    """Callable ``x -> M x`` from a matrix, LinearOperator, object with ``apply`` or ``None``."""
    if M is None:
        return lambda x: x
    if callable(M) and not hasattr(M, "matvec"):
        return M
    if hasattr(M, "apply"):
        return M.apply
    if isinstance(M, spla.LinearOperator):
        return M.matvec
    return lambda x: M @ x


def _givens(a, b):
    """Rotation ``(c, s)`` with ``[c s; -conj(s) c] [a; b] = [r; 0]``."""
    if b == 0:
        return 1.0, 0.0
    if a == 0:
        return 0.0, 1.0
    t = np.hypot(abs(a), abs(b))
    c = abs(a) / t
    s = (a / abs(a)) * np.conj(b) / t
    return c, s


def _krylov(A, M, b, cfg: KrylovConfig, x0, flexible, label):
    t0 = time.perf_counter()
    b = np.asarray(b, dtype=complex)
    n = len(b)
    A_op = as_operator(A, n)
    M_op = as_operator(M, n)
    x = np.zeros(n, dtype=complex) if x0 is None else np.array(x0, dtype=complex)

    bnorm = np.linalg.norm(b)
    if bnorm == 0:
        return np.zeros(n, dtype=complex), SolverReport(
            True, 0, [0.0] if cfg.record_history else [], "converged", 0.0, wall_time=0.0, label=label
        )

    r = b - A_op(x) if x0 is not None else b.copy()
    relres = np.linalg.norm(r) / bnorm
    history = [relres]
    total = 0
    status = "max_iter"
    restart = cfg.restart or cfg.max_iter
    tiny = np.finfo(float).eps

    while True:
        if relres <= cfg.tol:
            status = "converged"
            break
        if total >= cfg.max_iter:
            break
        m = min(restart, cfg.max_iter - total)
        beta = np.linalg.norm(r)
        V = np.zeros((n, m + 1), dtype=complex)
        Zs = np.zeros((n, m), dtype=complex) if flexible else None
        H = np.zeros((m + 1, m), dtype=complex)
        cs = np.zeros(m)
        sn = np.zeros(m, dtype=complex)
        g = np.zeros(m + 1, dtype=complex)
        g[0] = beta
        V[:, 0] = r / beta
        j_done = 0
        breakdown = False
        accept = False
        for j in range(m):
            z = M_op(V[:, j])
            if flexible:
                Zs[:, j] = z
            w = A_op(z)
            # modified Gram-Schmidt with one reorthogonalization pass
            for _ in range(2):
                for i in range(j + 1):
                    hij = np.vdot(V[:, i], w)
                    H[i, j] += hij
                    w = w - hij * V[:, i]
            hnext = np.linalg.norm(w)
            H[j + 1, j] = hnext
            for i in range(j):
                hi, hi1 = H[i, j], H[i + 1, j]
                H[i, j] = cs[i] * hi + sn[i] * hi1
                H[i + 1, j] = -np.conj(sn[i]) * hi + cs[i] * hi1
            cs[j], sn[j] = _givens(H[j, j], H[j + 1, j])
            H[j, j] = cs[j] * H[j, j] + sn[j] * H[j + 1, j]
            H[j + 1, j] = 0.0
            g[j + 1] = -np.conj(sn[j]) * g[j]
            g[j] = cs[j] * g[j]
            total += 1
            j_done = j + 1
            est = abs(g[j + 1]) / bnorm
            history.append(est)
            if hnext <= tiny * max(beta, 1.0):
                breakdown = True
                break
            if est <= cfg.tol:
                accept = True
                break
            if total >= cfg.max_iter:
                break
            V[:, j + 1] = w / hnext

        y = _back_substitute(H[:j_done, :j_done], g[:j_done])
        if flexible:
            x = x + Zs[:, :j_done] @ y
        else:
            x = x + M_op(V[:, :j_done] @ y)
        r = b - A_op(x)
        relres = np.linalg.norm(r) / bnorm
        if accept or breakdown:
            history[-1] = relres
            if relres <= cfg.tol:
                status = "converged"
                break
            if breakdown:
                status = "breakdown"
                break

    wall = time.perf_counter() - t0
    report = SolverReport(
        converged=status == "converged",
        iterations=total,
        history=history if cfg.record_history else [],
        status=status,
        final_residual=float(relres),
        wall_time=wall,
        label=label,
    )
    return x, report


def _back_substitute(R, g):
    m = len(g)
    y = np.zeros(m, dtype=complex)
    for i in range(m - 1, -1, -1):
        y[i] = (g[i] - R[i, i + 1:] @ y[i + 1:]) / R[i, i]
    return y


def gmres(A, M, b, cfg: KrylovConfig | None = None, x0=None, label=""):
    """Right-preconditioned full (or restarted) GMRES; ``M`` must be a fixed linear operator.

    Convergence is declared on the true relative residual ``||b - A x|| / ||b||``.
    """
    cfg = cfg or KrylovConfig()
    return _krylov(A, M, b, cfg, x0, flexible=False, label=label)


def fgmres(A, M, b, cfg: KrylovConfig | None = None, x0=None, label=""):
    """Flexible GMRES: stores the preconditioned directions so ``M`` may vary per iteration."""
    cfg = cfg or KrylovConfig(method="fgmres")
    return _krylov(A, M, b, cfg, x0, flexible=True, label=label)


def solve(A, M, b, cfg: KrylovConfig, x0=None, label=""):
    fn = fgmres if cfg.method == "fgmres" else gmres
    return fn(A, M, b, cfg, x0=x0, label=label)


def write_history(report: SolverReport, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "relres"])
        for i, r in enumerate(report.history):
            w.writerow([i, f"{r:.6e}"])
