from __future__ import annotations

import math

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp

from wgbands import numerics
from wgbands.numerics import SolverError, smallest_eigenpairs


def _laplacian_1d(n):
    h = 1.0 / (n + 1)
    K = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1]) / h
    M = sp.identity(n) * h
    return sp.csr_matrix(K), sp.csr_matrix(M)


@pytest.mark.parametrize("n", [50, 3000])
def test_eigenpairs_against_dense(n):
    K, M = _laplacian_1d(n)
    res = smallest_eigenpairs(K, M, 4)
    h = 1.0 / (n + 1)
    exact = (4 / h ** 2) * np.sin(np.arange(1, 5) * math.pi * h / 2) ** 2
    assert np.allclose(res.values, exact, rtol=1e-9)
    assert res.residuals.max() < 1e-8
    # M-orthonormal vectors
    G = res.vectors.conj().T @ (M @ res.vectors)
    assert np.allclose(G, np.eye(4), atol=1e-8)


def test_eigenpairs_with_shift():
    K, M = _laplacian_1d(40)
    w_all = scipy.linalg.eigh(K.toarray(), M.toarray(), eigvals_only=True)
    res = smallest_eigenpairs(K, M, 2, shift=0.5 * (w_all[4] + w_all[5]))
    assert np.allclose(res.values, w_all[5:7], rtol=1e-12)


def test_eigenpairs_rejects_bad_k():
    K, M = _laplacian_1d(10)
    with pytest.raises(ValueError):
        smallest_eigenpairs(K, M, 0)


def test_solve_linear_complex():
    rng = np.random.default_rng(0)
    A = sp.random(200, 200, density=0.05, random_state=1) + 10 * sp.identity(200)
    A = sp.csr_matrix(A + 1j * sp.identity(200))
    b = rng.standard_normal(200) + 1j * rng.standard_normal(200)
    x = numerics.solve_linear(A, b)
    assert np.linalg.norm(A @ x - b) <= 1e-10 * np.linalg.norm(b)


def test_solve_linear_singular_raises():
    A = sp.csr_matrix(np.zeros((3, 3)))
    with pytest.raises((SolverError, RuntimeError)):
        numerics.solve_linear(A, np.ones(3))


def test_find_root():
    r = numerics.find_root(lambda x: math.cos(x) - x, (0.0, 1.0))
    assert r == pytest.approx(0.7390851332151607, abs=1e-12)
    assert numerics.find_root(lambda x: x, (0.0, 1.0)) == 0.0
    with pytest.raises(ValueError):
        numerics.find_root(lambda x: x * x + 1, (-1.0, 1.0))
