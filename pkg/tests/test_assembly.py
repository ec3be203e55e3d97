import math

import numpy as np
import pytest
import scipy.io
import scipy.sparse as sp
import sympy
from hypothesis import given
from hypothesis import strategies as st

from helmdd.assembly import (
    AssemblyError,
    AssemblyRecipe,
    WaveNumberField,
    assemble,
    assemble_boundary_rhs,
    assemble_interface_mass,
    assemble_mass,
    assemble_rhs,
    eliminate_dirichlet,
    export_matrix_market,
    gaussian_source,
    l2_error,
    reconstruct,
)
from helmdd.mesh import BoundaryTag, Mesh, build_p2_space, build_rect_mesh

LAPLACE = AssemblyRecipe(volume="laplace")


def reference_p2_stiffness():
    """Symbolic P2 stiffness on the reference triangle (0,0), (1,0), (0,1)."""
    x, y = sympy.symbols("x y")
    l0, l1, l2 = 1 - x - y, x, y
    phis = [l0 * (2 * l0 - 1), l1 * (2 * l1 - 1), l2 * (2 * l2 - 1), 4 * l0 * l1, 4 * l1 * l2, 4 * l2 * l0]
    K = np.zeros((6, 6))
    for i, a in enumerate(phis):
        for j, b in enumerate(phis):
            integrand = sympy.diff(a, x) * sympy.diff(b, x) + sympy.diff(a, y) * sympy.diff(b, y)
            K[i, j] = float(sympy.integrate(sympy.integrate(integrand, (y, 0, 1 - x)), (x, 0, 1)))
    return K


def reference_triangle_space():
    verts = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])
    mesh = Mesh(verts, np.array([[0, 1, 2]]), np.array([[0, 1], [1, 2], [2, 0]]), np.full(3, int(BoundaryTag.NEUMANN)))
    return build_p2_space(mesh)


def test_reference_element_stiffness_matches_symbolic():
    V = reference_triangle_space()
    A = assemble(V, LAPLACE).toarray().real
    # local order [v0, v1, v2, m01, m12, m20] mapped through the dof numbering
    idx = V.tri_dofs[0]
    assert np.allclose(A[np.ix_(idx, idx)], reference_p2_stiffness(), atol=1e-14)


def test_zero_wave_number_gives_laplace(robin_square):
    space, _, _ = robin_square
    A0 = assemble(space, AssemblyRecipe(robin=False), WaveNumberField.constant(0.0))
    L = assemble(space, LAPLACE)
    assert abs(A0 - L).max() <= 1e-14


def test_mass_part_sums_to_minus_k2_area():
    V = build_p2_space(build_rect_mesh((0, 2), (0, 1.5), 4, 3))
    k = 3.0
    H = assemble(V, AssemblyRecipe(robin=False), WaveNumberField.constant(k))
    L = assemble(V, LAPLACE)
    assert abs(L.sum()) < 1e-12  # constants are in the kernel of the stiffness
    assert np.isclose((H - L).sum(), -k * k * 3.0, rtol=1e-12)
    assert np.isclose(assemble_mass(V).sum(), 3.0, rtol=1e-12)


def test_complex_symmetric_not_hermitian(robin_square):
    space, k, _ = robin_square
    A = assemble(space, AssemblyRecipe(), k)
    assert abs(A - A.T).max() == 0
    assert abs(A - A.conj().T).max() > 0
    assert A.has_sorted_indices and A.has_canonical_format


@given(st.floats(0.1, 50.0))
def test_absorption_shifts_only_the_mass_term(eps):
    V = build_p2_space(build_rect_mesh((0, 1), (0, 1), 3, 3))
    k = WaveNumberField.constant(7.0)
    diff = assemble(V, AssemblyRecipe(eps=eps), k) - assemble(V, AssemblyRecipe(), k)
    M = assemble_mass(V)
    assert abs(abs(diff).max() - eps * abs(M).max()) <= 1e-14 * eps * abs(M).max() * 10
    assert abs(diff + 1j * eps * M).max() <= 1e-13 * eps


def test_negative_wave_number_rejected():
    V = build_p2_space(build_rect_mesh((0, 1), (0, 1), 1, 1))
    with pytest.raises(AssemblyError):
        assemble(V, AssemblyRecipe(), WaveNumberField(lambda xy: -np.ones(xy.shape[:-1])))
    with pytest.raises(AssemblyError):
        assemble(V, AssemblyRecipe(), None)
    with pytest.raises(AssemblyError):
        AssemblyRecipe(volume="maxwell")


def test_rhs_examples():
    V = build_p2_space(build_rect_mesh((0, 1), (0, 1), 4, 4))
    assert np.all(assemble_rhs(V, lambda xy: np.zeros(xy.shape[:-1])) == 0)
    assert np.isclose(assemble_rhs(V, lambda xy: np.ones(xy.shape[:-1])).sum(), 1.0, atol=1e-12)


def gaussian_mass_in_unit_square(center, sigma):
    """Analytic integral of a unit-mass Gaussian over [0, 1]^2 (erf product)."""
    return math.prod(
        0.5 * (math.erf((1 - c) / (sigma * math.sqrt(2))) + math.erf(c / (sigma * math.sqrt(2)))) for c in center
    )


@pytest.mark.parametrize("n", [4, 8, 16, 32])
@pytest.mark.parametrize("center", [(0.5, 0.5), (0.3, 0.8)])
def test_mollified_source_mass(n, center):
    mesh = build_rect_mesh((0, 1), (0, 1), n, n)
    V = build_p2_space(mesh)
    amp = 2.5 - 1.0j
    rhs = assemble_rhs(V, gaussian_source(center, amp, 2 * mesh.h))
    assert abs(rhs.sum() - amp * gaussian_mass_in_unit_square(center, 2 * mesh.h)) <= 1e-6 * abs(amp)


def test_eliminate_dirichlet_trivial_cases(mixed_square):
    V0 = build_p2_space(build_rect_mesh((0, 1), (0, 1), 2, 2))
    A = assemble(V0, LAPLACE)
    rhs = np.arange(V0.ndof, dtype=complex)
    A2, f2 = eliminate_dirichlet(A, rhs, np.zeros(0))
    assert abs(A2 - A).max() == 0 and np.array_equal(f2, rhs)

    space, k, _ = mixed_square
    Af = assemble(space, AssemblyRecipe(), k)
    rhs = np.random.default_rng(0).standard_normal(space.ndof) + 0j
    _, f = eliminate_dirichlet(Af, rhs, np.zeros(space.d))
    assert np.array_equal(f, rhs[: space.n])
    with pytest.raises(AssemblyError):
        eliminate_dirichlet(Af, rhs, np.zeros(space.d + 1), n=space.n)


def test_eliminate_dirichlet_chain():
    A = sp.csr_matrix(np.array([[2, -1, 0], [-1, 2, -1], [0, -1, 2]], dtype=complex))
    rhs = np.array([1, 2, 3], dtype=complex)
    Ar, f = eliminate_dirichlet(A, rhs, np.array([1.0]))
    assert np.allclose(Ar.toarray(), [[2, -1], [-1, 2]])
    assert np.allclose(f, [1, 2 - (-1) * 1])
    assert np.allclose(reconstruct([5, 6], [1]), [5, 6, 1])


def test_single_edge_interface_mass():
    L = 0.7
    mesh = build_rect_mesh((0, L), (0, 0.3), 1, 1)
    V = build_p2_space(mesh)
    e = int(np.flatnonzero(np.all(np.isclose(mesh.vertices[mesh.edges][:, :, 1], 0), axis=1))[0])
    dofs = V.edge_dofs[e]  # [a, mid, b]
    M = assemble_interface_mass(V, [e], dofs).toarray()
    expected = L / 30 * np.array([[4, 2, -1], [2, 16, 2], [-1, 2, 4]])
    assert np.allclose(M, expected, atol=1e-14)


def test_interface_mass_properties():
    mesh = build_rect_mesh((0, 1), (0, 1), 4, 4)
    V = build_p2_space(mesh)
    mid = mesh.vertices[mesh.edges].mean(axis=1)
    vertical = np.isclose(mesh.vertices[mesh.edges][:, 0, 0], mesh.vertices[mesh.edges][:, 1, 0])
    line = np.flatnonzero(vertical & np.isclose(mid[:, 0], 0.5))
    M = assemble_interface_mass(V, line)
    assert np.isclose(M.sum(), 1.0, rtol=1e-12)
    assert np.all(np.linalg.eigvalsh(M.toarray()) > 0)
    # two disjoint edges -> block diagonal
    e1, e2 = line[0], line[-1]
    d1, d2 = np.unique(V.edge_dofs[e1]), np.unique(V.edge_dofs[e2])
    Mb = assemble_interface_mass(V, [e1, e2], np.concatenate([d1, d2])).toarray()
    assert np.all(Mb[:3, 3:] == 0) and np.all(Mb[3:, :3] == 0)
    with pytest.raises(AssemblyError):
        assemble_interface_mass(V, [])


def plane_wave_error(n, k=6.0, d=(0.6, 0.8)):
    d = np.asarray(d)
    V = build_p2_space(build_rect_mesh((0, 1), (0, 1), n, n))
    K = WaveNumberField.constant(k)
    exact = lambda xy: np.exp(1j * k * (xy @ d))  # noqa: E731
    normals = np.array([[0, -1], [1, 0], [0, 1], [-1, 0]], dtype=float)

    def g(pts):
        gap = np.stack([pts[..., 1], 1 - pts[..., 0], 1 - pts[..., 1], pts[..., 0]])
        nrm = normals[np.argmin(np.abs(gap), axis=0)]
        return 1j * k * (1 + nrm @ d) * exact(pts)

    A = assemble(V, AssemblyRecipe(), K)
    u = sp.linalg.spsolve(A.tocsc(), assemble_boundary_rhs(V, g))
    return l2_error(V, u, exact)


def test_plane_wave_order_three():
    errs = [plane_wave_error(n) for n in (4, 8, 16, 32)]
    orders = np.log2(np.array(errs[:-1]) / np.array(errs[1:]))
    assert np.all(orders >= 2.7), orders


def test_matrix_market_export(tmp_path, mixed_square):
    _, _, A = mixed_square
    export_matrix_market(A, tmp_path / "A.mtx")
    B = scipy.io.mmread(str(tmp_path / "A.mtx"))
    assert abs(sp.csr_matrix(B) - A).max() < 1e-14 * abs(A).max()


def test_heterogeneous_robin_uses_local_k():
    V = build_p2_space(build_rect_mesh((0, 1), (0, 1), 2, 2))
    k = WaveNumberField(lambda xy: 1.0 + xy[..., 0])
    A = assemble(V, AssemblyRecipe(volume="helmholtz"), k)
    B = assemble(V, AssemblyRecipe(volume="helmholtz", robin=False), k)
    # imaginary boundary part = int_dOmega k ds = perimeter-integral of 1 + x = 1 + 2 + 1 + 1.5 + 1.5 = 5
    assert np.isclose((A - B).sum().imag, 1 + 2 + 1.5 + 1.5, rtol=1e-12)
