"""Lagrange P1/P2 finite elements on affine triangles.

Bilinear forms are assembled without complex conjugation: the Robin-truncated
Helmholtz operator is complex symmetric, and the quasi-periodic reduction
produces a Hermitian pencil explicitly through ``P^H K P``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .mesh import DIRICHLET_DEFAULT, LOCAL_EDGES, Mesh

SQRT2 = math.sqrt(2.0)

# Gauss-Legendre rule on [0, 1] used for every edge integral
_g, _w = np.polynomial.legendre.leggauss(4)
EDGE_S = 0.5 * (_g + 1.0)
EDGE_W = 0.5 * _w

# degree-4 rule on the reference triangle (Dunavant, 6 points)
_a, _b = 0.445948490915965, 0.091576213509771
_wa, _wb = 0.223381589678011, 0.109951743655322
TRI_PTS = np.array([[_a, _a], [1 - 2 * _a, _a], [_a, 1 - 2 * _a],
                    [_b, _b], [1 - 2 * _b, _b], [_b, 1 - 2 * _b]])
TRI_W = 0.5 * np.array([_wa, _wa, _wa, _wb, _wb, _wb])

_REF_VERTS = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]])


def transverse_mode(y):
    """Normalized first transverse mode ``sqrt(2) cos(pi y)`` of the unit strip."""
    return SQRT2 * np.cos(np.pi * np.asarray(y))


# ---------------------------------------------------------------------------
# reference basis

def basis(order: int, pts: np.ndarray):
    """Values ``(n, nb)`` and reference gradients ``(n, nb, 2)`` at ``pts``."""
    xi, et = pts[:, 0], pts[:, 1]
    l0, l1, l2 = 1.0 - xi - et, xi, et
    # gradients of the barycentric coordinates in reference space
    dl = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    lam = np.stack([l0, l1, l2], axis=1)
    if order == 1:
        G = np.broadcast_to(dl, (len(pts), 3, 2)).copy()
        return lam, G
    if order != 2:
        raise ValueError(f"element order must be 1 or 2, got {order}")
    n = len(pts)
    V = np.empty((n, 6))
    G = np.empty((n, 6, 2))
    for i in range(3):
        V[:, i] = lam[:, i] * (2 * lam[:, i] - 1)
        G[:, i] = (4 * lam[:, i] - 1)[:, None] * dl[i]
    for k, (i, j) in enumerate(LOCAL_EDGES):
        V[:, 3 + k] = 4 * lam[:, i] * lam[:, j]
        G[:, 3 + k] = 4 * (lam[:, i][:, None] * dl[j] + lam[:, j][:, None] * dl[i])
    return V, G


def edge_basis(order: int, s: np.ndarray) -> np.ndarray:
    """Basis along an edge ``a -> b`` at parameters ``s``; columns ``a, b[, mid]``."""
    if order == 1:
        return np.column_stack([1 - s, s])
    return np.column_stack([(1 - s) * (1 - 2 * s), s * (2 * s - 1), 4 * s * (1 - s)])


def _jacobians(mesh: Mesh):
    p = mesh.nodes[mesh.triangles[:, :3]]
    J = np.stack([p[:, 1] - p[:, 0], p[:, 2] - p[:, 0]], axis=2)  # (T, 2, 2) columns
    det = J[:, 0, 0] * J[:, 1, 1] - J[:, 0, 1] * J[:, 1, 0]
    inv = np.empty_like(J)
    inv[:, 0, 0] = J[:, 1, 1] / det
    inv[:, 1, 1] = J[:, 0, 0] / det
    inv[:, 0, 1] = -J[:, 0, 1] / det
    inv[:, 1, 0] = -J[:, 1, 0] / det
    return J, det, inv


def _check_order(mesh: Mesh, order: int | None) -> int:
    if order is None:
        return mesh.order
    nb = 3 if order == 1 else 6
    if order not in (1, 2) or mesh.triangles.shape[1] != nb:
        raise ValueError(f"mesh of order {mesh.order} cannot carry order-{order} elements")
    return order


# ---------------------------------------------------------------------------
# operators

@dataclass(frozen=True, eq=False)
class SparseOperatorPair:
    """Stiffness ``K`` and mass ``M`` on the free degrees of freedom.

    ``free`` lists the mesh nodes kept as unknowns; ``index`` maps a mesh node
    to its unknown number, or ``-1`` for eliminated (Dirichlet) nodes. After a
    quasi-periodic reduction ``P`` maps reduced unknowns back to ``free``.
    """

    K: sp.csr_matrix
    M: sp.csr_matrix
    n_dof: int
    constrained: bool
    free: np.ndarray
    index: np.ndarray
    P: sp.csr_matrix | None = None

    def expand(self, u: np.ndarray) -> np.ndarray:
        """Nodal vector on the whole mesh, zero on eliminated nodes."""
        u = np.asarray(u)
        if self.P is not None:
            u = self.P @ u
        out = np.zeros((len(self.index),) + u.shape[1:], dtype=u.dtype)
        out[self.free] = u
        return out

    def restrict(self, A_full):
        """Restrict a full-mesh matrix or vector to the free unknowns."""
        if sp.issparse(A_full):
            return sp.csr_matrix(A_full)[self.free][:, self.free]
        return np.asarray(A_full)[self.free]


@dataclass(frozen=True, eq=False)
class BoundaryOperator:
    B: sp.csr_matrix
    tag: str
    coefficient: complex


def _element_matrices(mesh: Mesh, order: int):
    V, G = basis(order, TRI_PTS)
    _, det, inv = _jacobians(mesh)
    # physical gradients: grad phi = J^{-T} grad_ref phi
    PG = np.einsum("qbr,trs->tqbs", G, inv)
    w = TRI_W[None, :] * np.abs(det)[:, None]  # (T, q)
    Ke = np.einsum("tq,tqis,tqjs->tij", w, PG, PG)
    Me = np.einsum("tq,qi,qj->tij", w, V, V)
    return Ke, Me


def _scatter(tri: np.ndarray, Ae: np.ndarray, n: int) -> sp.csr_matrix:
    nb = tri.shape[1]
    rows = np.repeat(tri, nb, axis=1).ravel()
    cols = np.tile(tri, (1, nb)).ravel()
    return sp.csr_matrix((Ae.ravel(), (rows, cols)), shape=(n, n))


def assemble_full(mesh: Mesh, order: int | None = None):
    """Stiffness and mass on every mesh node (no boundary conditions)."""
    order = _check_order(mesh, order)
    Ke, Me = _element_matrices(mesh, order)
    n = mesh.n_nodes
    return _scatter(mesh.triangles, Ke, n), _scatter(mesh.triangles, Me, n)


def assemble(mesh: Mesh, order: int | None = None,
             dirichlet=DIRICHLET_DEFAULT) -> SparseOperatorPair:
    """Galerkin stiffness and mass with the ``dirichlet`` tags eliminated."""
    K, M = assemble_full(mesh, order)
    fixed = mesh.tagged_nodes(tuple(dirichlet)) if dirichlet else np.zeros(0, int)
    mask = np.ones(mesh.n_nodes, dtype=bool)
    mask[fixed] = False
    free = np.flatnonzero(mask)
    index = -np.ones(mesh.n_nodes, dtype=np.int64)
    index[free] = np.arange(len(free))
    K = K[free][:, free].tocsr()
    M = M[free][:, free].tocsr()
    return SparseOperatorPair(K=K, M=M, n_dof=len(free), constrained=False,
                              free=free, index=index)


def _edge_geometry(mesh: Mesh, tag: str):
    idx = mesh.edges_with(tag)
    if idx.size == 0:
        raise ValueError(f"mesh has no edges tagged {tag!r}")
    E = mesh.edges[idx]
    a = mesh.nodes[E[:, 0]]
    b = mesh.nodes[E[:, 1]]
    length = np.linalg.norm(b - a, axis=1)
    # quadrature points (edges, q, 2)
    X = a[:, None, :] + EDGE_S[None, :, None] * (b - a)[:, None, :]
    return idx, E, length, X


def assemble_robin(mesh: Mesh, tag: str, coefficient: complex,
                   ops: SparseOperatorPair | None = None) -> BoundaryOperator:
    """``coefficient`` times the boundary mass matrix of face ``tag``."""
    _, E, length, _ = _edge_geometry(mesh, tag)
    phi = edge_basis(mesh.order, EDGE_S)
    Be = np.einsum("q,e,qi,qj->eij", EDGE_W, length, phi, phi)
    B = coefficient * _scatter(E, Be.astype(complex), mesh.n_nodes)
    if ops is not None:
        B = ops.restrict(B)
    return BoundaryOperator(B=sp.csr_matrix(B), tag=tag, coefficient=complex(coefficient))


def face_mode_vector(mesh: Mesh, tag: str, mode=transverse_mode) -> np.ndarray:
    """Vector ``(int_face mode(y) phi_i dy)_i`` over all mesh nodes."""
    _, E, length, X = _edge_geometry(mesh, tag)
    phi = edge_basis(mesh.order, EDGE_S)
    vals = mode(X[:, :, 1])  # (e, q)
    local = np.einsum("q,e,eq,qi->ei", EDGE_W, length, vals, phi)
    out = np.zeros(mesh.n_nodes)
    np.add.at(out, E.ravel(), local.ravel())
    return out


def incident_coefficient(L: float) -> complex:
    """``d_n w_in - w_in/(L-i)`` divided by the transverse mode, ``-2i/(L-i)``."""
    return -2j / (L - 1j)


def assemble_incident_load(mesh: Mesh, tag: str, L: float,
                           ops: SparseOperatorPair | None = None) -> np.ndarray:
    """Load of an incoming threshold wave entering through face ``tag``."""
    if tag not in ("face_left", "face_right"):
        raise ValueError(f"incident load needs a Floquet face tag, got {tag!r}")
    g = incident_coefficient(L) * face_mode_vector(mesh, tag).astype(complex)
    return g if ops is None else ops.restrict(g)


def trace_projection(u_full: np.ndarray, mesh: Mesh, tag: str) -> complex:
    """``int_face u(y) phi(y) dy`` for a nodal vector on the whole mesh."""
    return complex(face_mode_vector(mesh, tag) @ u_full)


# ---------------------------------------------------------------------------
# quasi-periodic reduction

def quasi_periodic_map(ops: SparseOperatorPair, pairs: np.ndarray, eta: float):
    """Reduction matrix ``P`` with ``u_free = P u_reduced``.

    Each left-face unknown is replaced by ``exp(i eta)`` times its partner on
    the right face. Pairs of eliminated (Dirichlet) nodes are skipped.
    """
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size == 0:
        raise ValueError("no periodic pairs")
    if len(np.unique(pairs[:, 0])) != len(pairs) or len(np.unique(pairs[:, 1])) != len(pairs):
        raise ValueError("periodic pairing is not a bijection")
    if np.intersect1d(pairs[:, 0], pairs[:, 1]).size:
        raise ValueError("a node is paired with itself across faces")
    li = ops.index[pairs[:, 0]]
    ri = ops.index[pairs[:, 1]]
    if np.any((li < 0) != (ri < 0)):
        raise ValueError("periodic pair mixes a free and an eliminated node")
    keep = li >= 0
    li, ri = li[keep], ri[keep]
    n = ops.n_dof
    is_left = np.zeros(n, dtype=bool)
    is_left[li] = True
    reduced = np.flatnonzero(~is_left)
    col = -np.ones(n, dtype=np.int64)
    col[reduced] = np.arange(len(reduced))
    rows = np.concatenate([reduced, li])
    cols = np.concatenate([col[reduced], col[ri]])
    vals = np.concatenate([np.ones(len(reduced), complex),
                           np.full(len(li), np.exp(1j * eta))])
    return sp.csr_matrix((vals, (rows, cols)), shape=(n, len(reduced)))


def apply_quasi_periodic(ops: SparseOperatorPair, pairs, eta: float) -> SparseOperatorPair:
    """Hermitian pencil ``(P^H K P, P^H M P)`` of the quasi-periodic problem."""
    P = quasi_periodic_map(ops, pairs, eta)
    PH = P.conj().T.tocsr()
    K = (PH @ ops.K @ P).tocsr()
    M = (PH @ ops.M @ P).tocsr()
    return SparseOperatorPair(K=K, M=M, n_dof=P.shape[1], constrained=True,
                              free=ops.free, index=ops.index, P=P)


# ---------------------------------------------------------------------------
# one-dimensional elements (interval analogue of the cell problem)

def assemble_interval(n_cells: int, order: int = 1, a: float = -0.5,
                      b: float = 0.5) -> tuple[SparseOperatorPair, np.ndarray]:
    """Stiffness and mass of ``-u''`` on ``[a, b]`` with no boundary conditions.

    Returns the operators and the single end pair ``[(left, right)]``.
    """
    if n_cells < 1:
        raise ValueError("need at least one cell")
    if order not in (1, 2):
        raise ValueError(f"element order must be 1 or 2, got {order}")
    h = (b - a) / n_cells
    if order == 1:
        Ke = np.array([[1.0, -1.0], [-1.0, 1.0]]) / h
        Me = np.array([[2.0, 1.0], [1.0, 2.0]]) * h / 6
        conn = np.column_stack([np.arange(n_cells), np.arange(1, n_cells + 1)])
        n = n_cells + 1
    else:
        Ke = np.array([[7.0, 1.0, -8.0], [1.0, 7.0, -8.0], [-8.0, -8.0, 16.0]]) / (3 * h)
        Me = np.array([[4.0, -1.0, 2.0], [-1.0, 4.0, 2.0], [2.0, 2.0, 16.0]]) * h / 30
        conn = np.column_stack([2 * np.arange(n_cells), 2 * np.arange(1, n_cells + 1),
                                2 * np.arange(n_cells) + 1])
        n = 2 * n_cells + 1
    K = _scatter(conn, np.broadcast_to(Ke, (n_cells,) + Ke.shape), n)
    M = _scatter(conn, np.broadcast_to(Me, (n_cells,) + Me.shape), n)
    free = np.arange(n)
    ops = SparseOperatorPair(K=K, M=M, n_dof=n, constrained=False, free=free, index=free)
    return ops, np.array([[0, n - 1]])


# ---------------------------------------------------------------------------
# evaluation of finite-element fields

def locate(mesh: Mesh, pts: np.ndarray, tol: float = 1e-12):
    """Containing triangle and reference coordinates of each point."""
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    _, _, inv = _jacobians(mesh)
    p0 = mesh.nodes[mesh.triangles[:, 0]]
    tri = -np.ones(len(pts), dtype=np.int64)
    ref = np.zeros((len(pts), 2))
    chunk = max(1, 2_000_000 // max(1, mesh.n_triangles))
    for s in range(0, len(pts), chunk):
        d = pts[s:s + chunk, None, :] - p0[None, :, :]  # (p, T, 2)
        r = np.einsum("trs,pts->ptr", inv, d)
        inside = (r[..., 0] >= -tol) & (r[..., 1] >= -tol) & (r.sum(-1) <= 1 + tol)
        hit = inside.any(axis=1)
        first = np.argmax(inside, axis=1)
        tri[s:s + chunk] = np.where(hit, first, -1)
        ref[s:s + chunk] = r[np.arange(len(first)), first]
    if np.any(tri < 0):
        raise ValueError("point outside the mesh")
    return tri, ref


def evaluate(mesh: Mesh, u_full: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Finite-element field ``u`` at arbitrary points of the mesh."""
    tri, ref = locate(mesh, pts)
    out = np.empty(len(tri), dtype=np.result_type(u_full, float))
    V, _ = basis(mesh.order, ref)
    out[:] = np.einsum("pi,pi->p", V, u_full[mesh.triangles[tri]])
    return out


def line_projection(mesh: Mesh, u_full: np.ndarray, x0: float, n_sub: int = 64,
                    mode=transverse_mode) -> complex:
    """``int_{-1/2}^{1/2} u(x0, y) mode(y) dy`` across the strip at ``x = x0``."""
    ys = np.linspace(-0.5, 0.5, n_sub + 1)
    Y = (ys[:-1, None] + EDGE_S[None, :] * np.diff(ys)[:, None]).ravel()
    W = (EDGE_W[None, :] * np.diff(ys)[:, None]).ravel()
    vals = evaluate(mesh, u_full, np.column_stack([np.full_like(Y, x0), Y]))
    return complex(np.sum(W * vals * mode(Y)))


def boundary_flux_energy(mesh: Mesh, u_full: np.ndarray, tag: str) -> float:
    """``int_face |d_n u|^2 ds`` from element gradients on the edges of ``tag``."""
    idx = mesh.edges_with(tag)
    if idx.size == 0:
        raise ValueError(f"mesh has no edges tagged {tag!r}")
    owner = mesh.edge_owner[idx]
    _, _, inv = _jacobians(mesh)
    total = 0.0
    for loc in range(3):
        sel = owner[:, 1] == loc
        if not np.any(sel):
            continue
        t = owner[sel, 0]
        i, j = LOCAL_EDGES[loc]
        ref = _REF_VERTS[i] + EDGE_S[:, None] * (_REF_VERTS[j] - _REF_VERTS[i])
        _, G = basis(mesh.order, ref)  # (q, nb, 2)
        PG = np.einsum("qbr,trs->tqbs", G, inv[t])
        grad = np.einsum("tqbs,tb->tqs", PG, u_full[mesh.triangles[t]])
        a = mesh.nodes[mesh.triangles[t, i]]
        b = mesh.nodes[mesh.triangles[t, j]]
        tang = b - a
        length = np.linalg.norm(tang, axis=1)
        # outward normal of a counter-clockwise triangle: tangent rotated clockwise
        nrm = np.column_stack([tang[:, 1], -tang[:, 0]]) / length[:, None]
        dn = np.einsum("tqs,ts->tq", grad, nrm)
        total += float(np.einsum("q,t,tq->", EDGE_W, length, np.abs(dn) ** 2))
    return total


def write_coo(A, path) -> None:
    """Export a sparse matrix as ``row col re im`` lines (0-based)."""
    C = sp.coo_matrix(A)
    data = C.data.astype(complex)
    with open(path, "w") as fh:
        fh.write(f"# {C.shape[0]} {C.shape[1]} {C.nnz}\n")
        for r, c, v in zip(C.row, C.col, data):
            fh.write(f"{r} {c} {float(v.real)!r} {float(v.imag)!r}\n")


def read_coo(path) -> sp.csr_matrix:
    with open(path) as fh:
        head = fh.readline().split()
        n, m = int(head[1]), int(head[2])
        rows, cols, vals = [], [], []
        for ln in fh:
            r, c, re, im = ln.split()
            rows.append(int(r))
            cols.append(int(c))
            vals.append(complex(float(re), float(im)))
    return sp.csr_matrix((np.array(vals), (rows, cols)), shape=(n, m))
