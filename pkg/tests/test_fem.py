from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.linalg
from scipy import integrate

from wgbands import fem
from wgbands.mesh import GeometryTee, build_cell_mesh, build_tee_mesh
from wgbands.numerics import smallest_eigenpairs

PI2 = math.pi ** 2
TEE = GeometryTee(1.6, 2.5, 2.0)


@pytest.fixture(scope="module")
def tee_p2():
    return build_tee_mesh(TEE, 0.15, 2)


def test_basis_partition_of_unity():
    pts = np.random.default_rng(0).random((20, 2)) * 0.5
    for order in (1, 2):
        V, G = fem.basis(order, pts)
        assert np.allclose(V.sum(axis=1), 1.0)
        assert np.allclose(G.sum(axis=1), 0.0)
    with pytest.raises(ValueError):
        fem.basis(3, pts)


def test_mass_and_stiffness_integrate_quadratics(tee_p2):
    K, M = fem.assemble_full(tee_p2)
    x, y = tee_p2.nodes.T
    one = np.ones(tee_p2.n_nodes)
    assert one @ (M @ one) == pytest.approx(TEE.area, rel=1e-12)
    assert np.abs(K @ one).max() < 1e-10
    # u = x y + y^2 is reproduced exactly by P2; the rule integrates u^2 exactly
    u = x * y + y * y
    grad2 = integrate.dblquad(lambda yy, xx: yy ** 2 + (xx + 2 * yy) ** 2, -2, 2, -0.5, 0.5)[0]
    grad2 += integrate.dblquad(lambda yy, xx: yy ** 2 + (xx + 2 * yy) ** 2, -0.8, 0.8, 0.5, 2.5)[0]
    mass = integrate.dblquad(lambda yy, xx: (xx * yy + yy * yy) ** 2, -2, 2, -0.5, 0.5)[0]
    mass += integrate.dblquad(lambda yy, xx: (xx * yy + yy * yy) ** 2, -0.8, 0.8, 0.5, 2.5)[0]
    assert u @ (K @ u) == pytest.approx(grad2, rel=1e-10)
    assert u @ (M @ u) == pytest.approx(mass, rel=1e-10)


def test_assemble_eliminates_dirichlet(tee_p2):
    ops = fem.assemble(tee_p2)
    fixed = tee_p2.tagged_nodes(("wall", "lid"))
    assert ops.n_dof == tee_p2.n_nodes - len(fixed)
    assert np.all(ops.index[fixed] == -1)
    u = np.arange(ops.n_dof, dtype=float)
    full = ops.expand(u)
    assert np.all(full[fixed] == 0)
    assert np.array_equal(ops.restrict(full), u)
    assert abs(ops.K - ops.K.T).max() < 1e-12


@pytest.mark.parametrize("order,tol", [(1, 5e-2), (2, 1e-5)])
def test_unit_square_dirichlet_eigenvalue(order, tol):
    sq = GeometryTee(with_stub=False, L=0.5)
    m = build_tee_mesh(sq, 0.05, order)
    ops = fem.assemble(m, dirichlet=("wall", "face_left", "face_right"))
    w = smallest_eigenpairs(ops.K, ops.M, 3).values
    assert w[0] == pytest.approx(2 * PI2, rel=tol)
    assert w[1] == pytest.approx(5 * PI2, rel=10 * tol)
    assert w[2] == pytest.approx(5 * PI2, rel=10 * tol)


def test_dense_and_sparse_agree_on_the_strip():
    sq = GeometryTee(with_stub=False, L=0.5)
    m = build_tee_mesh(sq, 0.1, 2)
    ops = fem.assemble(m, dirichlet=("wall",))
    dense = scipy.linalg.eigh(ops.K.toarray(), ops.M.toarray(), eigvals_only=True)[:4]
    sparse = smallest_eigenpairs(ops.K, ops.M, 4).values
    assert np.allclose(dense, sparse, rtol=1e-10)
    # Neumann faces: pi^2 + (k pi)^2 for k = 0, 1
    assert dense[0] == pytest.approx(PI2, rel=1e-4)
    assert dense[1] == pytest.approx(2 * PI2, rel=1e-4)


@pytest.mark.parametrize("eta", [0.0, 0.9, math.pi])
def test_quasi_periodic_interval(eta):
    ops, pairs = fem.assemble_interval(64, order=2)
    q = fem.apply_quasi_periodic(ops, pairs, eta)
    Kd, Md = q.K.toarray(), q.M.toarray()
    assert np.allclose(Kd, Kd.conj().T, atol=1e-12)
    w = scipy.linalg.eigh(Kd, Md, eigvals_only=True)[:4]
    exact = np.sort([(eta + 2 * math.pi * k) ** 2 for k in range(-3, 4)])[:4]
    assert np.allclose(w, exact, rtol=1e-5, atol=1e-9)


def test_quasi_periodic_strip_cell():
    # cell of length 1/eps = 2: pi^2 + ((eta + 2 pi k) / 2)^2
    m = build_cell_mesh(GeometryTee(with_stub=False, L=0.5), 0.5, 0.1, 2)
    eta = 1.1
    q = fem.apply_quasi_periodic(fem.assemble(m), m.periodic_pairs, eta)
    w = smallest_eigenpairs(q.K, q.M, 3).values
    exact = np.sort([PI2 + ((eta + 2 * math.pi * k) / 2) ** 2 for k in range(-2, 3)])[:3]
    assert np.allclose(w, exact, rtol=2e-4)
    # the expanded eigenvector satisfies the Floquet condition on the faces
    u = q.expand(smallest_eigenpairs(q.K, q.M, 1).vectors[:, 0])
    left, right = m.periodic_pairs.T
    assert np.allclose(u[left], np.exp(1j * eta) * u[right])


def test_quasi_periodic_map_rejects_bad_pairs():
    ops, _ = fem.assemble_interval(4)
    with pytest.raises(ValueError):
        fem.quasi_periodic_map(ops, np.array([[0, 4], [0, 3]]), 0.0)
    with pytest.raises(ValueError):
        fem.quasi_periodic_map(ops, np.zeros((0, 2), int), 0.0)


def test_robin_and_face_mode(tee_p2):
    B = fem.assemble_robin(tee_p2, "face_right", 2.0 - 1.0j)
    one = np.ones(tee_p2.n_nodes)
    assert one @ (B.B @ one) == pytest.approx(2.0 - 1.0j, rel=1e-12)
    v = fem.face_mode_vector(tee_p2, "face_left")
    assert v.sum() == pytest.approx(2 * math.sqrt(2) / math.pi, rel=1e-10)
    mode = fem.transverse_mode(tee_p2.nodes[:, 1])
    assert fem.trace_projection(mode, tee_p2, "face_left") == pytest.approx(1.0, rel=1e-4)
    with pytest.raises(ValueError):
        fem.assemble_incident_load(tee_p2, "lid", 2.0)
    assert fem.incident_coefficient(2.0) == pytest.approx(-2j / (2 - 1j))


def test_evaluate_and_line_projection(tee_p2):
    x, y = tee_p2.nodes.T
    u = x * y + 3 * y * y - x
    pts = np.array([[0.31, 0.12], [-1.7, -0.44], [0.5, 2.2]])
    exact = pts[:, 0] * pts[:, 1] + 3 * pts[:, 1] ** 2 - pts[:, 0]
    assert np.allclose(fem.evaluate(tee_p2, u, pts), exact, atol=1e-12)
    mode = fem.transverse_mode(y)
    assert fem.line_projection(tee_p2, mode, 1.3).real == pytest.approx(1.0, rel=1e-4)
    with pytest.raises(ValueError):
        fem.evaluate(tee_p2, u, np.array([[0.0, 5.0]]))


def test_boundary_flux_energy(tee_p2):
    x, y = tee_p2.nodes.T
    assert fem.boundary_flux_energy(tee_p2, x, "face_right") == pytest.approx(1.0, rel=1e-12)
    assert fem.boundary_flux_energy(tee_p2, 2 * y, "lid") == pytest.approx(4 * TEE.ell,
                                                                            rel=1e-12)
    assert fem.boundary_flux_energy(tee_p2, x, "lid") == pytest.approx(0.0, abs=1e-20)


def test_coo_roundtrip(tmp_path, tee_p2):
    ops = fem.assemble(tee_p2)
    path = tmp_path / "K.coo"
    fem.write_coo(ops.K, path)
    back = fem.read_coo(path)
    assert abs(back - ops.K).max() == 0.0
