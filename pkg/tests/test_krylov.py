import csv

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, strategies as st

from helmdd.krylov import ConfigError, KrylovConfig, SolverReport, fgmres, gmres, solve, write_history


def system(seed, n=50, shift=8.0):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) + shift * np.eye(n)
    b = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    return A, b


def true_relres(A, x, b):
    return np.linalg.norm(b - A @ x) / np.linalg.norm(b)


def test_identity_one_iteration(rng):
    b = rng.standard_normal(10) + 0j
    x, rep = gmres(np.eye(10), None, b)
    assert rep.converged and rep.iterations == 1
    assert np.allclose(x, b)


def test_diagonal_four_iterations():
    A = np.diag([1.0, 2.0, 3.0, 4.0])
    b = np.ones(4)
    x, rep = gmres(A, None, b, KrylovConfig(tol=1e-12))
    assert rep.iterations == 4 and rep.converged
    assert np.allclose(x, [1, 1 / 2, 1 / 3, 1 / 4])


@pytest.mark.parametrize("seed", [0, 1])
def test_random_dense_solve(seed):
    A, b = system(seed)
    x, rep = gmres(A, None, b, KrylovConfig(tol=1e-10))
    assert rep.converged and rep.iterations <= 50
    assert np.allclose(x, np.linalg.solve(A, b), atol=1e-8)
    assert true_relres(A, x, b) <= 1e-10
    assert rep.final_residual == pytest.approx(true_relres(A, x, b), rel=1e-6)


def test_right_preconditioning_with_exact_inverse():
    A, b = system(3, n=30)
    Ainv = np.linalg.inv(A)
    x, rep = gmres(A, Ainv, b)
    assert rep.iterations == 1 and true_relres(A, x, b) <= 1e-6


def test_fgmres_equals_gmres_for_fixed_preconditioner():
    A, b = system(5, n=40, shift=3.0)
    M = np.diag(1 / np.diag(A))
    cfg = KrylovConfig(tol=1e-9)
    x1, r1 = gmres(A, M, b, cfg)
    x2, r2 = fgmres(A, M, b, KrylovConfig(method="fgmres", tol=1e-9))
    assert r1.iterations == r2.iterations
    assert np.allclose(r1.history, r2.history, rtol=1e-6, atol=1e-14)
    assert np.allclose(x1, x2, atol=1e-8)


def test_fgmres_with_varying_preconditioner():
    A, b = system(6, n=40)
    Ainv = np.linalg.inv(A)
    calls = [0]

    def M(v):
        calls[0] += 1
        return Ainv @ v * (1.0 + 0.1 * calls[0])  # a different scalar multiple each time

    x, rep = fgmres(A, M, b, KrylovConfig(method="fgmres", tol=1e-10))
    assert rep.converged and rep.iterations == 1
    assert true_relres(A, x, b) <= 1e-10


def test_zero_rhs():
    x, rep = gmres(np.eye(3), None, np.zeros(3))
    assert rep.converged and rep.iterations == 0 and not x.any()


def test_initial_guess_already_solution():
    A, b = system(2, n=10)
    x, rep = gmres(A, None, b, x0=np.linalg.solve(A, b))
    assert rep.iterations == 0 and rep.converged


def test_history_is_true_residual():
    A, b = system(7, n=40, shift=2.0)
    _, full = gmres(A, None, b, KrylovConfig(tol=1e-12))
    for m in (3, 9, 17):
        xm, rep = gmres(A, None, b, KrylovConfig(tol=1e-12, max_iter=m))
        assert rep.iterations == m and not rep.converged and rep.status == "max_iter"
        assert full.history[m] == pytest.approx(true_relres(A, xm, b), rel=1e-6)


def test_n_step_termination():
    A, b = system(8, n=12, shift=0.0)
    x, rep = gmres(A, None, b, KrylovConfig(tol=1e-9, max_iter=100))
    assert rep.converged and rep.iterations <= 12
    assert true_relres(A, x, b) <= 1e-9


def test_restart_still_converges():
    A, b = system(9, n=40, shift=12.0)
    x, rep = gmres(A, None, b, KrylovConfig(tol=1e-8, restart=5))
    assert rep.converged and true_relres(A, x, b) <= 1e-8


def test_sparse_and_callable_operators():
    A = sp.diags([np.arange(1, 21, dtype=float)], [0]).tocsr()
    b = np.ones(20)
    x1, _ = gmres(A, None, b, KrylovConfig(tol=1e-12))
    x2, _ = gmres(lambda v: A @ v, lambda v: v, b, KrylovConfig(tol=1e-12))
    assert np.allclose(x1, x2) and np.allclose(x1, 1 / np.arange(1, 21))


def test_solve_dispatch():
    A, b = system(4, n=20)
    _, r1 = solve(A, None, b, KrylovConfig(method="fgmres"))
    _, r2 = solve(A, None, b, KrylovConfig(method="gmres"))
    assert r1.iterations == r2.iterations


@pytest.mark.parametrize("kwargs", [
    {"method": "bicgstab"}, {"tol": 0.0}, {"tol": 1.5}, {"max_iter": 0}, {"restart": 0},
])
def test_config_errors(kwargs):
    with pytest.raises(ConfigError):
        KrylovConfig(**kwargs)


def test_report_cell_format():
    assert SolverReport(True, 30).cell() == "30"
    assert SolverReport(True, 30, inner_avg=14.5).cell() == "30(15)"
    assert SolverReport(False, 500).cell() == "×"


def test_write_history(tmp_path):
    A, b = system(1, n=15)
    _, rep = gmres(A, None, b)
    path = tmp_path / "h" / "run.csv"
    write_history(rep, path)
    rows = list(csv.reader(path.open()))
    assert rows[0] == ["iter", "relres"]
    assert len(rows) == rep.iterations + 2
    assert float(rows[1][1]) == pytest.approx(1.0)


@given(seed=st.integers(0, 10_000), n=st.integers(2, 25))
def test_history_monotone_and_true_final(seed, n):
    A, b = system(seed, n=n, shift=1.0)
    x, rep = gmres(A, None, b, KrylovConfig(tol=1e-8, max_iter=3 * n))
    h = np.array(rep.history)
    assert h[0] == pytest.approx(1.0)
    assert np.all(np.diff(h[:-1]) <= 1e-12)
    assert rep.converged
    assert true_relres(A, x, b) <= 1e-8
    assert rep.iterations <= n
