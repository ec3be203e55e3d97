"""Single solves and Cartesian sweeps over (value, N, nu, overlap, method, n_ppwl)."""
from __future__ import annotations

import dataclasses
import itertools
import math
from dataclasses import dataclass, field

import numpy as np

from ..assembly import AssemblyRecipe, assemble
from ..coarse import GENEO_VARIANTS, DAGGERS, TwoLevelPreconditioner, build_dtn_coarse, build_geneo_family, build_grid_coarse
from ..decomp import Decomposition, PartitionError, grow_overlap, partition_geometric, refine_partition
from ..eig import EigRequest
from ..krylov import ConfigError, KrylovConfig, SolverReport, solve
from ..onelevel import build_oras, build_ras
from .problems import Problem, ProblemSpec, build_problem

ONE_LEVEL = ("ras", "oras")
SPECTRAL = ("dtn",) + GENEO_VARIANTS
METHODS = ONE_LEVEL + ("grid",) + SPECTRAL
OVERLAPS = ("min", "coarse")
SANITY_FACTOR = 1.1


@dataclass(frozen=True)
class SolverSettings:
    """Everything needed to turn a problem into a preconditioned solve."""

    method: str = "oras"
    N: int = 4
    partition_mode: str = "strips"
    overlap: str = "min"
    nu: int | None = None
    eta_max: float | None = None
    c_abs: float = 1.0
    absorption_length: float | None = None  # None: longer side of the domain
    deflate_with_absorption: bool = False
    inner_tol: float = 0.1
    inner_max_iter: int = 200
    exact_coarse: bool = False
    dagger: str = "conjugate"
    combination: str = "deflation"
    krylov: KrylovConfig = field(default_factory=KrylovConfig)

    @property
    def grid_iterative(self):
        return self.method == "grid" and not self.exact_coarse

    def validate(self) -> "SolverSettings":
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; choose from {', '.join(METHODS)}")
        if self.overlap not in OVERLAPS:
            raise ConfigError(f"overlap must be one of {OVERLAPS}")
        if self.partition_mode not in ("strips", "grid"):
            raise ConfigError("partition mode must be 'strips' or 'grid'")
        if self.N < 1:
            raise ConfigError("N must be >= 1")
        if self.dagger not in DAGGERS:
            raise ConfigError(f"dagger must be one of {DAGGERS}")
        if self.combination not in ("deflation", "additive"):
            raise ConfigError("combination must be 'deflation' or 'additive'")
        if self.method in SPECTRAL and (self.nu is None) == (self.eta_max is None):
            raise ConfigError(f"{self.method} needs exactly one of nu / eta_max")
        if self.c_abs < 0:
            raise ConfigError("c_abs must be non-negative")
        if self.absorption_length is not None and self.absorption_length <= 0:
            raise ConfigError("absorption_length must be positive")
        if not 0 < self.inner_tol < 1:
            raise ConfigError("inner tolerance must lie in (0, 1)")
        if self.grid_iterative and self.krylov.method != "fgmres":
            raise ConfigError(
                "an inner-iterative grid coarse solve makes the preconditioner nonlinear; "
                "the outer solver must be fgmres"
            )
        return self


def default_krylov_method(method, exact_coarse=False):
    return "fgmres" if method == "grid" and not exact_coarse else "gmres"


class Infeasible(Exception):
    """The cell cannot run by construction (rendered as a dash, not an error)."""


@dataclass
class CellResult:
    key: dict
    status: str  # converged | capped | skipped | error
    iterations: int | None = None
    inner_avg: float | None = None
    relres: float | None = None
    coarse_dim: int | None = None
    message: str = ""
    report: SolverReport | None = None
    tol: float = 1e-6
    dagger: str = "conjugate"

    @property
    def entry(self):
        return format_entry(self.status, self.iterations, self.inner_avg)

    @property
    def cell_id(self):
        k = self.key
        parts = [k["method"], k["overlap"], f"p{k['n_ppwl']:g}", f"{k['axis']}{k['value']:g}", f"N{k['N']}"]
        if k.get("nu") is not None:
            parts.append(f"nu{k['nu']}")
        return "_".join(parts)


def _half_up(x):
    return int(math.floor(x + 0.5))


def format_entry(status, iterations=None, inner_avg=None):
    """Table entry: ``"30"``, ``"30(8)"`` with average inner count, ``"×"`` when capped, ``"−"`` otherwise."""
    if status == "converged":
        return f"{iterations}({_half_up(inner_avg)})" if inner_avg is not None else str(iterations)
    if status == "capped":
        return "×"
    return "−"


def build_decomposition(problem: Problem, N, overlap="min", mode="strips"):
    """Partition the coarse mesh, lift it to the fine mesh and grow the overlap.

    Returns ``(fine decomposition, coarse decomposition)``; the coarse one always has one layer
    and serves the inner ORAS of the grid coarse solve.
    """
    if N > problem.coarse_mesh.n_triangles:
        raise Infeasible(f"N={N} exceeds the {problem.coarse_mesh.n_triangles} coarse elements")
    s = problem.spec.refine
    try:
        pc = partition_geometric(problem.coarse_mesh, N, mode=mode)
    except PartitionError as exc:
        raise Infeasible(str(exc)) from exc
    layers = 1 if overlap == "min" else s
    fine = grow_overlap(refine_partition(pc, s), problem.space, layers)
    coarse = grow_overlap(pc, problem.coarse_space, 1)
    return fine, coarse


def eig_request(settings: SolverSettings, kind):
    if settings.nu is not None:
        return EigRequest(nu=settings.nu, kind=kind)
    return EigRequest(eta_max=settings.eta_max, kind=kind)


def grid_absorption(problem: Problem, settings: SolverSettings) -> float:
    """``eps = c_abs * k_max / L``; with lengths scaled by ``L`` this is ``c_abs`` times the scaled wave number."""
    spec = problem.spec
    L = settings.absorption_length or max(spec.x_extent[1] - spec.x_extent[0], spec.y_extent[1] - spec.y_extent[0])
    return settings.c_abs * problem.metadata["k_max"] / L


def build_preconditioner(problem: Problem, settings: SolverSettings, decomp: Decomposition, coarse_decomp=None):
    """One- or two-level preconditioner for ``settings.method``; two-level methods use ORAS smoothing."""
    A, space, k = problem.A, problem.space, problem.k
    if settings.method == "ras":
        return build_ras(A, decomp)
    M1 = build_oras(space, decomp, k)
    if settings.method == "oras":
        return M1
    deflation_matrix = None
    if settings.method == "grid":
        eps = grid_absorption(problem, settings)
        if settings.deflate_with_absorption:
            full = assemble(space, AssemblyRecipe(eps=eps), k)
            deflation_matrix = full[: space.n, : space.n].tocsr()
        cs = build_grid_coarse(
            space,
            problem.coarse_space,
            k,
            eps=eps,
            coarse_decomposition=coarse_decomp,
            inner_tol=settings.inner_tol,
            inner_max_iter=settings.inner_max_iter,
            exact=settings.exact_coarse,
        )
        cs.dagger = settings.dagger
    else:
        if settings.nu is not None:
            if settings.method == "dtn":
                local_dim = min(len(sub.gamma) for sub in decomp)
            else:
                local_dim = min(sub.size for sub in decomp)
            if settings.nu > local_dim:
                raise Infeasible(f"nu={settings.nu} exceeds the local dimension {local_dim}")
        req = eig_request(settings, settings.method)
        if settings.method == "dtn":
            cs = build_dtn_coarse(decomp, A, k, req, dagger=settings.dagger)
        else:
            cs = build_geneo_family(decomp, settings.method, A, k, req, dagger=settings.dagger)
    return TwoLevelPreconditioner(M1, cs, A, mode=settings.combination, deflation_matrix=deflation_matrix)


def run_case(problem: Problem, settings: SolverSettings, key=None, decomposition=None) -> tuple:
    """Solve one cell; returns ``(CellResult, solution or None)``. Never raises for numerical failures."""
    key = dict(key or {})
    tol, dagger = settings.krylov.tol, settings.dagger
    try:
        settings.validate()
        fine, coarse = decomposition or build_decomposition(problem, settings.N, settings.overlap, settings.partition_mode)
        M = build_preconditioner(problem, settings, fine, coarse)
    except Infeasible as exc:
        return CellResult(key, "skipped", message=str(exc), tol=tol, dagger=dagger), None
    except ConfigError:
        raise
    except Exception as exc:  # noqa: BLE001 - a failing cell must not stop the sweep
        return CellResult(key, "error", message=f"{type(exc).__name__}: {exc}", tol=tol, dagger=dagger), None

    try:
        x, report = solve(problem.A, M, problem.f, settings.krylov, label=key.get("label", settings.method))
    except Exception as exc:  # noqa: BLE001
        return CellResult(key, "error", message=f"{type(exc).__name__}: {exc}", tol=tol, dagger=dagger), None

    coarse = getattr(M, "coarse", None)
    if coarse is not None and getattr(coarse.solver, "iterative", False):
        report.inner_total = int(sum(coarse.solver.counts))
        report.inner_avg = coarse.solver.average
    bnorm = np.linalg.norm(problem.f)
    relres = float(np.linalg.norm(problem.f - problem.A @ x) / bnorm) if bnorm else 0.0

    if report.converged:
        status, message = "converged", ""
        if relres > SANITY_FACTOR * tol:
            status, message = "error", f"true residual {relres:.3e} above {SANITY_FACTOR} x tolerance"
    elif report.status == "max_iter":
        status, message = "capped", f"iteration cap {settings.krylov.max_iter} reached"
    else:
        status, message = "error", f"Krylov {report.status}"
    result = CellResult(
        key,
        status,
        iterations=report.iterations,
        inner_avg=report.inner_avg,
        relres=relres,
        coarse_dim=None if coarse is None else coarse.m,
        message=message,
        report=report,
        tol=tol,
        dagger=dagger,
    )
    return result, x


@dataclass(frozen=True)
class ExperimentGrid:
    """Cartesian product of sweep axes around a base problem.

    ``values`` replaces the base problem's frequency (or wave number, whichever the
    base sets). Spectral methods are crossed with ``nus``; other methods ignore it.
    """

    base: ProblemSpec
    values: tuple = ()
    N_values: tuple = (2, 4, 8)
    nus: tuple = (None,)
    overlaps: tuple = ("min",)
    methods: tuple = ("oras",)
    n_ppwl: tuple = (10,)
    max_iter: int = 500
    tol: float = 1e-6
    seed: int = 0
    krylov_method: str | None = None  # None picks fgmres exactly for inner-iterative grid cells
    settings: SolverSettings = field(default_factory=SolverSettings)

    def validate(self) -> "ExperimentGrid":
        """Reject the whole grid up front when any cell's settings are inconsistent."""
        for _, settings in self.cells():
            settings.validate()
        return self

    @property
    def axis(self):
        return "f" if self.base.frequency is not None else "k"

    def _values(self):
        if self.values:
            return tuple(self.values)
        return (self.base.frequency if self.base.frequency is not None else self.base.wave_number,)

    def problem_spec(self, value, n_ppwl) -> ProblemSpec:
        field_name = "frequency" if self.axis == "f" else "wave_number"
        return dataclasses.replace(self.base, n_ppwl=n_ppwl, **{field_name: value})

    def cells(self):
        """Enumerate ``(key, settings)`` in a fixed order."""
        for p, ov, method in itertools.product(self.n_ppwl, self.overlaps, self.methods):
            nu_list = self.nus if method in SPECTRAL else (None,)
            for nu, value, N in itertools.product(nu_list, self._values(), self.N_values):
                kmethod = self.krylov_method or default_krylov_method(method, self.settings.exact_coarse)
                krylov = KrylovConfig(method=kmethod, tol=self.tol, max_iter=self.max_iter,
                                      restart=self.settings.krylov.restart)
                settings = dataclasses.replace(
                    self.settings, method=method, N=N, overlap=ov, krylov=krylov,
                    nu=nu if method in SPECTRAL else None,
                    eta_max=self.settings.eta_max if method in SPECTRAL and nu is None else None,
                )
                key = {"method": method, "overlap": ov, "n_ppwl": p, "axis": self.axis,
                       "value": value, "N": N, "nu": nu if method in SPECTRAL else None}
                yield key, settings


def run_experiment(grid: ExperimentGrid, progress=None) -> list:
    """Run every cell of ``grid`` sequentially; one :class:`CellResult` per cell, in enumeration order.

    Problems and decompositions are shared between cells with the same inputs.
    """
    grid.validate()
    problems, decomps, rows = {}, {}, []
    for key, settings in grid.cells():
        pkey = (key["value"], key["n_ppwl"])
        try:
            if pkey not in problems:
                problems[pkey] = build_problem(grid.problem_spec(*pkey))
            problem = problems[pkey]
            dkey = pkey + (settings.N, settings.overlap)
            if dkey not in decomps:
                try:
                    decomps[dkey] = build_decomposition(problem, settings.N, settings.overlap, settings.partition_mode)
                except Infeasible as exc:
                    decomps[dkey] = exc
            d = decomps[dkey]
            if isinstance(d, Infeasible):
                row = CellResult(key, "skipped", message=str(d), tol=grid.tol, dagger=settings.dagger)
            else:
                row, _ = run_case(problem, settings, key, decomposition=d)
        except ConfigError:
            raise
        except Exception as exc:  # noqa: BLE001
            row = CellResult(key, "error", message=f"{type(exc).__name__}: {exc}", tol=grid.tol, dagger=settings.dagger)
        rows.append(row)
        if progress is not None:
            progress(row)
    return rows
