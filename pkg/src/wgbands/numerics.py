"""Sparse direct solves, generalized Hermitian eigensolvers and scalar root finding."""

from __future__ import annotations

import gc
from dataclasses import dataclass
from typing import Callable

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.optimize import brentq

# below this size the pencil is diagonalized densely
DENSE_LIMIT = 2000
_SEED = 20240917


class SolverError(RuntimeError):
    """Raised when a factorization or an iterative eigensolve fails."""


@dataclass(frozen=True)
class EigenResult:
    """Eigenpairs of a Hermitian definite pencil ``K v = lambda M v``.

    ``values`` is ascending, ``vectors`` holds one M-orthonormal eigenvector
    per column and ``residuals`` is ``||K v - lambda M v|| / ||v||`` per pair.
    """

    values: np.ndarray
    vectors: np.ndarray
    residuals: np.ndarray


def _as_csc(A):
    if sp.issparse(A):
        return sp.csc_matrix(A)
    return sp.csc_matrix(np.asarray(A))


def factorize(A):
    """LU-factorize a square sparse matrix; returns an object with ``solve``."""
    A = _as_csc(A)
    if A.shape[0] != A.shape[1]:
        raise ValueError(f"matrix must be square, got {A.shape}")
    if not np.iscomplexobj(A.data):
        A = A.astype(float)
    try:
        return spla.splu(A, permc_spec="COLAMD")
    except RuntimeError as exc:  # SuperLU reports exact singularity this way
        raise SolverError(f"factorization failed: {exc}") from exc


def solve_linear(A, b, *, rtol: float = 1e-10) -> np.ndarray:
    """Solve ``A x = b`` by direct factorization.

    ``b`` may hold several right-hand sides as columns. The relative residual
    of every column is checked against ``rtol``.
    """
    A = _as_csc(A)
    b = np.asarray(b)
    dtype = np.result_type(A.dtype, b.dtype, float)
    lu = factorize(A.astype(dtype))
    x = lu.solve(b.astype(dtype))
    if not np.all(np.isfinite(x)):
        raise SolverError("singular matrix: non-finite solution")
    r = A @ x - b
    bnorm = np.linalg.norm(b, axis=0)
    rnorm = np.linalg.norm(r, axis=0)
    rel = rnorm / np.where(bnorm > 0, bnorm, 1.0)
    if np.any(rel > rtol):
        raise SolverError(
            f"singular to working precision: relative residual {np.max(rel):.3e}"
        )
    return x


def _residuals(K, M, values, vectors) -> np.ndarray:
    KV = K @ vectors
    MV = M @ vectors
    R = KV - MV * values[np.newaxis, :]
    return np.linalg.norm(R, axis=0) / np.linalg.norm(vectors, axis=0)


def smallest_eigenpairs(K, M, k: int, shift: float = 0.0, *, tol: float = 0.0,
                        maxiter: int | None = None) -> EigenResult:
    """Return the ``k`` eigenpairs of ``K v = lambda M v`` closest above ``shift``.

    Small pencils (``n <= DENSE_LIMIT``) are solved densely; larger ones use
    ARPACK in shift-invert mode with a deterministic start vector. Eigenvectors
    are M-orthonormal.
    """
    n = K.shape[0]
    if k < 1 or k > n:
        raise ValueError(f"k must be in [1, {n}], got {k}")
    complex_pencil = np.iscomplexobj(K.data if sp.issparse(K) else K) or \
        np.iscomplexobj(M.data if sp.issparse(M) else M)
    if n <= DENSE_LIMIT:
        Kd = K.toarray() if sp.issparse(K) else np.asarray(K)
        Md = M.toarray() if sp.issparse(M) else np.asarray(M)
        # symmetrize away round-off before the dense Hermitian solver
        Kd = 0.5 * (Kd + Kd.conj().T)
        Md = 0.5 * (Md + Md.conj().T)
        w, V = scipy.linalg.eigh(Kd, Md)
        keep = np.flatnonzero(w >= shift)[:k]
        if keep.size < k:
            keep = np.arange(min(k, n))
        w, V = w[keep], V[:, keep]
    else:
        rng = np.random.default_rng(_SEED)
        v0 = rng.standard_normal(n)
        if complex_pencil:
            v0 = v0 + 1j * rng.standard_normal(n)
        try:
            w, V = spla.eigsh(sp.csc_matrix(K), k=k, M=sp.csc_matrix(M), sigma=shift,
                              which="LM", v0=v0, tol=tol, maxiter=maxiter)
        except spla.ArpackNoConvergence as exc:
            res = _residuals(K, M, exc.eigenvalues, exc.eigenvectors)
            raise SolverError(
                f"eigensolver did not converge; achieved residuals {res}"
            ) from exc
        finally:
            # ARPACK's driver state forms a reference cycle holding the LU factors
            # of K - shift M; without a collection long sweeps run out of memory
            gc.collect()
        order = np.argsort(w)
        w, V = w[order], V[:, order]
        # ARPACK returns M-orthogonal vectors; renormalize against round-off
        norms = np.sqrt(np.real(np.einsum("ij,ij->j", V.conj(), M @ V)))
        V = V / norms
    return EigenResult(values=np.asarray(w, dtype=float), vectors=V,
                       residuals=_residuals(K, M, np.asarray(w, dtype=float), V))


def find_root(f: Callable[[float], float], bracket: tuple[float, float],
              tol: float = 1e-12) -> float:
    """Bracketed root of a real scalar function (Brent's method).

    Raises ``ValueError`` when ``f(a)`` and ``f(b)`` have the same strict sign.
    """
    a, b = float(bracket[0]), float(bracket[1])
    fa, fb = f(a), f(b)
    if fa == 0.0:
        return a
    if fb == 0.0:
        return b
    if np.sign(fa) == np.sign(fb):
        raise ValueError(f"invalid bracket ({a}, {b}): f has the same sign at both ends")
    return float(brentq(f, a, b, xtol=tol, rtol=4 * np.finfo(float).eps, maxiter=500))
