"""Structured triangular meshes of the strip, the T-junction and its Floquet cell.

Every geometry here is a union of axis-aligned rectangles: the strip
``(-L, L) x (-1/2, 1/2)`` and, optionally, the stub ``(-ell/2, ell/2) x [1/2, H)``.
Such a domain is covered by a tensor-product grid whose x breaks are
``-L, -ell/2, 0, ell/2, L`` and whose y breaks are ``-1/2, 1/2, H``. Each grid
segment is split into ``round(length / h)`` equal cells. Cells outside the domain
are dropped, and each remaining cell is cut into two right triangles. The diagonal
is mirrored across ``x = 0``, so the full mesh is exactly symmetric.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

TAGS = ("wall", "face_left", "face_right", "symmetry_plane", "lid")
DIRICHLET_DEFAULT = ("wall", "lid")

# local edges of a triangle (vertex pairs) in the order of the P2 midside nodes
LOCAL_EDGES = ((0, 1), (1, 2), (2, 0))


@dataclass(frozen=True)
class GeometryTee:
    """Strip of unit width with an optional rectangular stub on top.

    ``ell`` is the stub width, ``H`` the height of the stub lid above the strip
    axis and ``L`` the half-length at which the strip is truncated.
    """

    ell: float = 1.6
    H: float = 2.5
    L: float = 2.0
    with_stub: bool = True

    def __post_init__(self):
        if self.with_stub:
            if not 1.0 < self.ell < 2.0:
                raise ValueError(f"stub width must lie in (1, 2), got {self.ell}")
            if not self.H > 1.0:
                raise ValueError(f"stub height must exceed 1, got {self.H}")
            if not self.L > self.ell / 2:
                raise ValueError(f"L must exceed ell/2, got L={self.L}, ell={self.ell}")
        elif not self.L > 0:
            raise ValueError(f"L must be positive, got {self.L}")

    @property
    def area(self) -> float:
        a = 2.0 * self.L
        if self.with_stub:
            a += self.ell * (self.H - 0.5)
        return a

    def with_H(self, H: float) -> "GeometryTee":
        return GeometryTee(self.ell, H, self.L, self.with_stub)

    def with_L(self, L: float) -> "GeometryTee":
        return GeometryTee(self.ell, self.H, L, self.with_stub)


@dataclass(frozen=True, eq=False)
class Mesh:
    """Conforming triangulation with tagged boundary edges.

    Attributes
    ----------
    nodes : (N, 2) float array
    triangles : (T, 3) or (T, 6) int array
        Corner nodes counter-clockwise, then (order 2) the midside nodes of the
        local edges ``(0,1), (1,2), (2,0)``.
    edges : (E, 2) or (E, 3) int array
        Boundary edges, oriented as in their owning triangle, midside node last.
    edge_tags : (E,) str array
    edge_owner : (E, 2) int array
        Owning triangle and local edge number of every boundary edge.
    periodic_pairs : (P, 2) int array
        ``(left, right)`` node pairs with equal y on the two Floquet faces.
    """

    nodes: np.ndarray
    triangles: np.ndarray
    order: int
    edges: np.ndarray
    edge_tags: np.ndarray
    edge_owner: np.ndarray
    periodic_pairs: np.ndarray = field(default_factory=lambda: np.zeros((0, 2), int))

    def __post_init__(self):
        for name in ("nodes", "triangles", "edges", "edge_tags", "edge_owner",
                     "periodic_pairs"):
            getattr(self, name).setflags(write=False)

    @property
    def n_nodes(self) -> int:
        return self.nodes.shape[0]

    @property
    def n_triangles(self) -> int:
        return self.triangles.shape[0]

    @property
    def tags(self) -> set[str]:
        return set(self.edge_tags.tolist())

    def edges_with(self, tag: str) -> np.ndarray:
        """Indices of the boundary edges carrying ``tag``."""
        if tag not in TAGS:
            raise ValueError(f"unknown tag {tag!r}")
        return np.flatnonzero(self.edge_tags == tag)

    def tagged_nodes(self, tags) -> np.ndarray:
        if isinstance(tags, str):
            tags = (tags,)
        idx = np.flatnonzero(np.isin(self.edge_tags, list(tags)))
        return np.unique(self.edges[idx].ravel())

    def signed_areas(self) -> np.ndarray:
        p = self.nodes[self.triangles[:, :3]]
        d1 = p[:, 1] - p[:, 0]
        d2 = p[:, 2] - p[:, 0]
        return 0.5 * (d1[:, 0] * d2[:, 1] - d1[:, 1] * d2[:, 0])

    @property
    def area(self) -> float:
        return float(self.signed_areas().sum())

    def min_angle(self) -> float:
        """Smallest interior angle over all triangles, in degrees."""
        p = self.nodes[self.triangles[:, :3]]
        angles = []
        for k in range(3):
            a = p[:, (k + 1) % 3] - p[:, k]
            b = p[:, (k + 2) % 3] - p[:, k]
            cosang = np.einsum("ij,ij->i", a, b) / (np.linalg.norm(a, axis=1)
                                                    * np.linalg.norm(b, axis=1))
            angles.append(np.degrees(np.arccos(np.clip(cosang, -1, 1))))
        return float(np.min(angles))


# ---------------------------------------------------------------------------
# construction

def _segments(breaks, h, fixed=None):
    """Subdivide consecutive breaks into cells of size close to ``h``."""
    coords = [breaks[0]]
    for k in range(len(breaks) - 1):
        a, b = breaks[k], breaks[k + 1]
        n = fixed.get(k) if fixed else None
        if n is None:
            n = max(1, int(round((b - a) / h)))
        pts = np.linspace(a, b, n + 1)[1:]
        pts[-1] = b
        coords.extend(pts.tolist())
    return np.array(coords)


def _triangulate(xs, ys, active, order):
    """Triangulate the active cells of a tensor grid."""
    nx, ny = len(xs) - 1, len(ys) - 1
    gid = -np.ones((ny + 1, nx + 1), dtype=np.int64)
    used = np.zeros_like(gid, dtype=bool)
    jj, ii = np.nonzero(active)
    for dj, di in ((0, 0), (0, 1), (1, 0), (1, 1)):
        used[jj + dj, ii + di] = True
    gid[used] = np.arange(int(used.sum()))
    Y, X = np.meshgrid(ys, xs, indexing="ij")
    nodes = np.column_stack([X[used], Y[used]])

    a = gid[jj, ii]
    b = gid[jj, ii + 1]
    c = gid[jj + 1, ii + 1]
    d = gid[jj + 1, ii]
    right = 0.5 * (xs[ii] + xs[ii + 1]) > 0
    tri = np.empty((2 * len(a), 3), dtype=np.int64)
    # '/' diagonal for x > 0, its mirror image '\' for x < 0
    tri[0::2] = np.where(right[:, None], np.column_stack([a, b, c]),
                         np.column_stack([a, b, d]))
    tri[1::2] = np.where(right[:, None], np.column_stack([a, c, d]),
                         np.column_stack([b, c, d]))

    # all triangle edges, as sorted vertex pairs
    loc = np.array(LOCAL_EDGES)
    all_edges = tri[:, loc]  # (T, 3, 2)
    keys = np.sort(all_edges.reshape(-1, 2), axis=1)
    uniq, inverse, counts = np.unique(keys, axis=0, return_inverse=True,
                                      return_counts=True)
    inverse = inverse.reshape(-1)
    if order == 2:
        mids = 0.5 * (nodes[uniq[:, 0]] + nodes[uniq[:, 1]])
        mid_id = len(nodes) + np.arange(len(uniq))
        nodes = np.vstack([nodes, mids])
        tri = np.hstack([tri, mid_id[inverse].reshape(-1, 3)])
    boundary = np.flatnonzero(counts[inverse] == 1)
    owner = np.column_stack([boundary // 3, boundary % 3])
    bedges = all_edges.reshape(-1, 2)[boundary]
    if order == 2:
        bedges = np.column_stack([bedges, mid_id[inverse[boundary]]])
    return nodes, tri, bedges, owner


def _tag_edges(nodes, bedges, x_left, x_right, geom, half):
    p = nodes[bedges[:, 0]]
    q = nodes[bedges[:, 1]]
    mx = 0.5 * (p[:, 0] + q[:, 0])
    vertical = np.abs(p[:, 0] - q[:, 0]) < 1e-12
    scale = max(abs(x_left), abs(x_right), geom.H if geom.with_stub else 1.0)
    tol = 1e-12 * scale
    tags = np.full(len(bedges), "wall", dtype=object)
    tags[vertical & (np.abs(mx - x_left) < tol)] = "face_left"
    if half:
        tags[vertical & (np.abs(mx) < tol)] = "symmetry_plane"
    else:
        tags[vertical & (np.abs(mx - x_right) < tol)] = "face_right"
    if geom.with_stub:
        my = 0.5 * (p[:, 1] + q[:, 1])
        horizontal = np.abs(p[:, 1] - q[:, 1]) < 1e-12
        tags[horizontal & (np.abs(my - geom.H) < tol)] = "lid"
    return tags.astype(str)


def _build(geom: GeometryTee, h: float, order: int, x_left: float, x_right: float,
           half: bool, stub_cells: int | None, x_stations=()) -> Mesh:
    if order not in (1, 2):
        raise ValueError(f"element order must be 1 or 2, got {order}")
    if not h > 0:
        raise ValueError(f"mesh size must be positive, got {h}")
    xb = [x_left]
    if geom.with_stub:
        xb += [-geom.ell / 2, 0.0]
        if not half:
            xb += [geom.ell / 2]
    elif half:
        xb += [0.0]
    if not half:
        xb += [x_right]
    for s in x_stations:
        if xb[0] < s < xb[-1]:
            xb.append(float(s))
    xb = sorted(set(xb))
    yb = [-0.5, 0.5] + ([geom.H] if geom.with_stub else [])
    fixed = {1: stub_cells} if (geom.with_stub and stub_cells) else None
    xs = _segments(xb, h)
    ys = _segments(yb, h, fixed)
    xc = 0.5 * (xs[:-1] + xs[1:])
    yc = 0.5 * (ys[:-1] + ys[1:])
    in_strip = np.broadcast_to(yc[:, None] < 0.5, (len(yc), len(xc)))
    if geom.with_stub:
        active = in_strip | (np.abs(xc[None, :]) < geom.ell / 2)
    else:
        active = in_strip.copy()
    nodes, tri, bedges, owner = _triangulate(xs, ys, active, order)
    tags = _tag_edges(nodes, bedges, xb[0], xb[-1], geom, half)
    return Mesh(nodes=nodes, triangles=tri, order=order, edges=bedges,
                edge_tags=tags, edge_owner=owner)


def build_tee_mesh(geom: GeometryTee, h_target: float, order: int = 2, *,
                   stub_cells: int | None = None, x_stations=()) -> Mesh:
    """Mesh of the tee (or strip) truncated at ``x = -L`` and ``x = L``.

    ``stub_cells`` fixes the number of cell rows in the stub, so that a small
    change of ``H`` moves nodes smoothly instead of changing the topology.
    ``x_stations`` adds vertical grid lines (used for modal traces inside).
    """
    return _build(geom, h_target, order, -geom.L, geom.L, False, stub_cells, x_stations)


def build_half_mesh(geom: GeometryTee, h_target: float, order: int = 2, *,
                    stub_cells: int | None = None) -> Mesh:
    """Left half ``x < 0`` of the tee; the cut ``x = 0`` is tagged ``symmetry_plane``."""
    return _build(geom, h_target, order, -geom.L, 0.0, True, stub_cells)


def periodic_pairs(mesh: Mesh, tol: float = 1e-12) -> np.ndarray:
    """Pair the nodes of ``face_left`` and ``face_right`` by equal y."""
    left = mesh.tagged_nodes("face_left")
    right = mesh.tagged_nodes("face_right")
    if len(left) != len(right):
        raise ValueError("Floquet faces carry different node counts")
    left = left[np.argsort(mesh.nodes[left, 1], kind="stable")]
    right = right[np.argsort(mesh.nodes[right, 1], kind="stable")]
    if np.max(np.abs(mesh.nodes[left, 1] - mesh.nodes[right, 1]), initial=0.0) > tol:
        raise ValueError("Floquet faces are not meshed identically")
    return np.column_stack([left, right])


def build_cell_mesh(geom: GeometryTee, eps: float, h_target: float, order: int = 2, *,
                    stub_cells: int | None = None) -> Mesh:
    """Scaled periodicity cell: the tee truncated at ``|x| = 1/(2 eps)``."""
    if not 0.0 < eps < 1.0:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    half = 0.5 / eps
    if geom.with_stub and half <= geom.ell / 2:
        raise ValueError("the stub is wider than the periodicity cell")
    m = _build(geom.with_L(half), h_target, order, -half, half, False, stub_cells)
    return Mesh(nodes=m.nodes, triangles=m.triangles, order=m.order, edges=m.edges,
                edge_tags=m.edge_tags, edge_owner=m.edge_owner,
                periodic_pairs=periodic_pairs(m))


# ---------------------------------------------------------------------------
# plain-text exchange format
#
#   wgbands-mesh 1
#   order <k>
#   nodes <N>           then N lines "x y"
#   triangles <T>       then T lines of 3 or 6 node indices
#   edges <E>           then E lines "tag owner local n0 n1 [mid]"
#   periodic <P>        then P lines "left right"

def write_mesh(mesh: Mesh, path) -> None:
    with open(path, "w") as fh:
        fh.write("wgbands-mesh 1\n")
        fh.write(f"order {mesh.order}\n")
        fh.write(f"nodes {mesh.n_nodes}\n")
        for x, y in mesh.nodes:
            fh.write(f"{float(x)!r} {float(y)!r}\n")
        fh.write(f"triangles {mesh.n_triangles}\n")
        for t in mesh.triangles:
            fh.write(" ".join(map(str, t)) + "\n")
        fh.write(f"edges {len(mesh.edges)}\n")
        for tag, (own, loc), e in zip(mesh.edge_tags, mesh.edge_owner, mesh.edges):
            fh.write(f"{tag} {own} {loc} " + " ".join(map(str, e)) + "\n")
        fh.write(f"periodic {len(mesh.periodic_pairs)}\n")
        for a, b in mesh.periodic_pairs:
            fh.write(f"{a} {b}\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        lines = [ln.split() for ln in fh if ln.strip()]
    if lines[0] != ["wgbands-mesh", "1"]:
        raise ValueError("not a wgbands mesh file")
    order = int(lines[1][1])
    pos = 2

    def section(name):
        nonlocal pos
        if lines[pos][0] != name:
            raise ValueError(f"expected section {name!r}, found {lines[pos][0]!r}")
        n = int(lines[pos][1])
        rows = lines[pos + 1: pos + 1 + n]
        pos += n + 1
        return rows

    nodes = np.array([[float(v) for v in r] for r in section("nodes")])
    tri = np.array([[int(v) for v in r] for r in section("triangles")], dtype=np.int64)
    er = section("edges")
    tags = np.array([r[0] for r in er], dtype=str)
    owner = np.array([[int(r[1]), int(r[2])] for r in er], dtype=np.int64)
    edges = np.array([[int(v) for v in r[3:]] for r in er], dtype=np.int64)
    pr = section("periodic")
    pairs = np.array([[int(v) for v in r] for r in pr], dtype=np.int64).reshape(-1, 2)
    return Mesh(nodes=nodes, triangles=tri, order=order, edges=edges, edge_tags=tags,
                edge_owner=owner, periodic_pairs=pairs)


def mirror_x(mesh: Mesh) -> np.ndarray:
    """Node coordinates reflected across ``x = 0``."""
    return mesh.nodes * np.array([-1.0, 1.0])


def stub_rows(geom: GeometryTee, h: float) -> int:
    """Number of stub cell rows the default subdivision would use."""
    return max(1, int(round((geom.H - 0.5) / h)))


__all__ = [
    "GeometryTee", "Mesh", "TAGS", "DIRICHLET_DEFAULT", "build_tee_mesh",
    "build_half_mesh", "build_cell_mesh", "periodic_pairs", "write_mesh", "read_mesh",
    "mirror_x", "stub_rows",
]
