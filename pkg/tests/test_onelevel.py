import numpy as np
import pytest
from hypothesis import given, strategies as st

from helmdd.assembly import WaveNumberField
from helmdd.decomp import grow_overlap, partition_geometric
from helmdd.krylov import KrylovConfig, gmres
from helmdd.localops import local_assembled, local_dirichlet
from helmdd.mesh import build_p2_space, build_rect_mesh
from helmdd.onelevel import OneLevelPreconditioner, build_oras, build_ras, stationary_iterate

from conftest import reduced


def decomposition(space, N, layers=1, mode="strips"):
    return grow_overlap(partition_geometric(space.mesh, N, mode=mode), space, layers)


def dense_preconditioner(local_mats, D):
    """Explicit sum of R^T D A_loc^{-1} R."""
    n = D.n
    P = np.zeros((n, n), dtype=complex)
    for sub, Aloc in zip(D, local_mats):
        R = np.zeros((sub.size, n))
        R[np.arange(sub.size), sub.dofs] = 1
        P += R.T @ np.diag(sub.pou) @ np.linalg.inv(Aloc.toarray()) @ R
    return P


def test_single_subdomain_is_exact_inverse(robin_square, rng):
    space, k, A = robin_square
    D = decomposition(space, 1)
    b = rng.standard_normal(space.n) + 0j
    for P in (build_ras(A, D), build_oras(space, D, k)):
        x = P.apply(b)
        assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)
        x2, norms = stationary_iterate(P, A, b, iters=1)
        assert norms[-1] <= 1e-10 * norms[0]


@pytest.mark.parametrize("N,mode,layers", [(2, "strips", 1), (4, "grid", 2)])
def test_matches_dense_oracle(mixed_square, rng, N, mode, layers):
    space, k, A = mixed_square
    D = decomposition(space, N, layers, mode)
    r = rng.standard_normal(space.n) + 1j * rng.standard_normal(space.n)
    ras = dense_preconditioner([local_dirichlet(A, s) for s in D], D)
    oras = dense_preconditioner([local_assembled(space, s, "robin", k) for s in D], D)
    assert np.allclose(build_ras(A, D).apply(r), ras @ r, atol=1e-10)
    assert np.allclose(build_oras(space, D, k).apply(r), oras @ r, atol=1e-10)
    absorbing = dense_preconditioner([local_assembled(space, s, "robin", k, eps=2.0) for s in D], D)
    assert np.allclose(build_oras(space, D, k, eps=2.0).apply(r), absorbing @ r, atol=1e-10)


def test_block_application(robin_square, rng):
    space, k, _ = robin_square
    P = build_oras(space, decomposition(space, 3), k)
    R = rng.standard_normal((space.n, 3)) + 0j
    Z = P.as_linear_operator().matmat(R)
    for j in range(3):
        assert np.allclose(Z[:, j], P.apply(R[:, j]))
    assert P.shape == (space.n, space.n)


@given(a=st.complex_numbers(max_magnitude=10, allow_nan=False, allow_infinity=False),
       seed=st.integers(0, 1000))
def test_linearity(a, seed):
    mesh = build_rect_mesh((0, 1), (0, 1), 4, 4)
    space = build_p2_space(mesh)
    P = build_oras(space, decomposition(space, 2), WaveNumberField.constant(3.0))
    rng = np.random.default_rng(seed)
    x, y = (rng.standard_normal(space.n) + 1j * rng.standard_normal(space.n) for _ in range(2))
    assert np.allclose(P.apply(a * x + y), a * P.apply(x) + P.apply(y), atol=1e-9)


def test_stationary_oras_contracts_at_low_frequency(rng):
    mesh = build_rect_mesh((0, 1), (0, 1), 8, 8)
    space = build_p2_space(mesh)
    k = WaveNumberField.constant(1.0)
    A = reduced(space, k=k)
    P = build_oras(space, decomposition(space, 2, layers=2), k)
    b = rng.standard_normal(space.n) + 0j
    _, norms = stationary_iterate(P, A, b, iters=15)
    assert len(norms) == 16
    assert norms[-1] < 1e-3 * norms[0]


def test_stationary_iterate_validation(robin_square):
    space, k, A = robin_square
    P = build_oras(space, decomposition(space, 1), k)
    with pytest.raises(ValueError):
        stationary_iterate(P, A, np.ones(space.n), iters=0)


def test_preconditioning_reduces_iterations(robin_square, rng):
    space, k, A = robin_square
    b = rng.standard_normal(space.n) + 0j
    cfg = KrylovConfig(tol=1e-8, max_iter=400)
    _, plain = gmres(A, None, b, cfg)
    _, pre = gmres(A, build_oras(space, decomposition(space, 2), k), b, cfg)
    assert pre.converged and pre.iterations < plain.iterations / 3


def test_factor_count_checked(robin_square):
    space, _, _ = robin_square
    with pytest.raises(ValueError):
        OneLevelPreconditioner(decomposition(space, 2), [], "x")
