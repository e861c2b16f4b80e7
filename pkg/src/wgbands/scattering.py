"""Threshold scattering matrix of a waveguide junction and quantities derived from it.

At the threshold energy ``pi**2`` the strip carries two linearly growing waves
per end, ``w_in = (|x| + i) phi(y)`` and ``w_out = (|x| - i) phi(y)``. The
scattering solution ``v_+`` (incident from the right) behaves like
``w_in + s_pp w_out`` on the right and ``s_pm w_out`` on the left, and ``v_-``
symmetrically. The domain is truncated at ``|x| = L``, where the Robin condition
``d_n u = u / (L - i)`` is exact for ``w_out`` and transparent up to evanescent
modes.
"""

from __future__ import annotations

import cmath
import csv
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import fem
from .mesh import DIRICHLET_DEFAULT, GeometryTee, Mesh, build_half_mesh, build_tee_mesh
from .numerics import factorize

PI2 = math.pi ** 2
TOL_EIG = 1e-2
H_XTOL = 1e-6


class ScatteringAccuracyError(RuntimeError):
    """The computed matrix is too far from unitary for the mesh and truncation used."""


class ThresholdResonanceError(ValueError):
    """``-1`` is an eigenvalue of the scattering matrix (to the detection tolerance)."""


class TrackingError(RuntimeError):
    pass


def default_tol_S(h: float, L: float) -> float:
    """Accuracy budget for the scattering matrix at mesh size ``h`` and truncation ``L``."""
    return 5e-4 if (h <= 0.02 + 1e-12 and L >= 3.0 - 1e-12) else 5e-3


@dataclass(frozen=True)
class ThresholdScatteringMatrix:
    s_pp: complex
    s_pm: complex
    s_mp: complex
    s_mm: complex
    unitarity_residual: float
    symmetry_residual: float

    @classmethod
    def from_array(cls, S) -> "ThresholdScatteringMatrix":
        S = np.asarray(S, dtype=complex)
        return cls(S[0, 0], S[0, 1], S[1, 0], S[1, 1],
                   unitarity_residual=float(np.linalg.norm(S @ S.conj().T - np.eye(2), 2)),
                   symmetry_residual=float(abs(S[0, 1] - S[1, 0])))

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.s_pp, self.s_pm], [self.s_mp, self.s_mm]])

    @property
    def mirror_residual(self) -> float:
        """``|s_pp - s_mm|``, zero for a mirror-symmetric junction."""
        return abs(self.s_pp - self.s_mm)


@dataclass(frozen=True, eq=False)
class ScatteringSolution:
    """Matrix plus the full-mesh fields ``v_+`` and ``v_-`` it was read from."""

    S: ThresholdScatteringMatrix
    mesh: Mesh
    v_plus: np.ndarray
    v_minus: np.ndarray


@dataclass(frozen=True)
class HalfReflections:
    r_D: complex
    r_N: complex

    @property
    def reflection(self) -> complex:
        return 0.5 * (self.r_N + self.r_D)

    @property
    def transmission(self) -> complex:
        return 0.5 * (self.r_N - self.r_D)


@dataclass(frozen=True)
class PolarizationMatrix:
    matrix: np.ndarray  # real symmetric 2x2
    imag_residual: float
    asym_residual: float


# ---------------------------------------------------------------------------
# solves

def _robin_solve(mesh: Mesh, L: float, faces, dirichlet):
    """Solve the truncated threshold problem once per incident face in ``faces``."""
    ops = fem.assemble(mesh, dirichlet=dirichlet)
    coef = 1.0 / (L - 1j)
    A = (ops.K - PI2 * ops.M).astype(complex)
    for tag in faces:
        A = A - fem.assemble_robin(mesh, tag, coef, ops).B
    rhs = np.column_stack([fem.assemble_incident_load(mesh, tag, L, ops) for tag in faces])
    lu = factorize(A.tocsc())
    x = lu.solve(rhs)
    res = np.linalg.norm(A @ x - rhs, axis=0) / np.linalg.norm(rhs, axis=0)
    if not np.all(np.isfinite(x)) or np.any(res > 1e-8):
        raise ScatteringAccuracyError(f"linear solve failed, residual {np.max(res):.2e}")
    return [ops.expand(x[:, k]) for k in range(len(faces))]


def _reflection(c: complex, L: float) -> complex:
    return (c - (L + 1j)) / (L - 1j)


def _transmission(c: complex, L: float) -> complex:
    return c / (L - 1j)


def _check(S: ThresholdScatteringMatrix, tol_S: float) -> None:
    worst = max(S.unitarity_residual, S.symmetry_residual)
    if worst > 10 * tol_S:
        raise ScatteringAccuracyError(
            f"scattering matrix residual {worst:.2e} exceeds 10 x tol_S = {10 * tol_S:.1e}; "
            "refine the mesh or move the truncation further out")


def scattering_solution(geom: GeometryTee, h_target: float = 0.05, order: int = 2, *,
                        stub_cells: int | None = None, tol_S: float | None = None,
                        check: bool = True) -> ScatteringSolution:
    mesh = build_tee_mesh(geom, h_target, order, stub_cells=stub_cells)
    L = geom.L
    vp, vm = _robin_solve(mesh, L, ("face_right", "face_left"), DIRICHLET_DEFAULT)
    s_pp = _reflection(fem.trace_projection(vp, mesh, "face_right"), L)
    s_pm = _transmission(fem.trace_projection(vp, mesh, "face_left"), L)
    s_mp = _transmission(fem.trace_projection(vm, mesh, "face_right"), L)
    s_mm = _reflection(fem.trace_projection(vm, mesh, "face_left"), L)
    S = ThresholdScatteringMatrix.from_array([[s_pp, s_pm], [s_mp, s_mm]])
    if check:
        _check(S, default_tol_S(h_target, L) if tol_S is None else tol_S)
    return ScatteringSolution(S=S, mesh=mesh, v_plus=vp, v_minus=vm)


def threshold_scattering_matrix(geom: GeometryTee, h_target: float = 0.05,
                                order: int = 2, **kw) -> ThresholdScatteringMatrix:
    """The 2x2 threshold scattering matrix of the truncated junction."""
    return scattering_solution(geom, h_target, order, **kw).S


def half_domain_reflections(geom: GeometryTee, h_target: float = 0.05, order: int = 2, *,
                            tol_S: float | None = None, check: bool = True) -> HalfReflections:
    """Reflection coefficients of the left half with Dirichlet or Neumann on ``x = 0``."""
    if not geom.with_stub:
        raise ValueError("half-domain reflections need the symmetric tee")
    mesh = build_half_mesh(geom, h_target, order)
    L = geom.L
    (uD,) = _robin_solve(mesh, L, ("face_left",), DIRICHLET_DEFAULT + ("symmetry_plane",))
    (uN,) = _robin_solve(mesh, L, ("face_left",), DIRICHLET_DEFAULT)
    r = HalfReflections(r_D=_reflection(fem.trace_projection(uD, mesh, "face_left"), L),
                        r_N=_reflection(fem.trace_projection(uN, mesh, "face_left"), L))
    if check:
        tol = default_tol_S(h_target, L) if tol_S is None else tol_S
        dev = max(abs(abs(r.r_D) - 1), abs(abs(r.r_N) - 1))
        if dev > 10 * tol:
            raise ScatteringAccuracyError(f"half reflection modulus off by {dev:.2e}")
    return r


# ---------------------------------------------------------------------------
# spectral quantities of S

def _as_matrix(S) -> np.ndarray:
    if isinstance(S, ThresholdScatteringMatrix):
        return S.matrix
    return np.asarray(S, dtype=complex)


def eigen(S):
    """Eigenvalues and (unit) eigenvectors of the 2x2 matrix."""
    w, V = np.linalg.eig(_as_matrix(S))
    return w, V


def eigenphases(S):
    """Phases in ``[0, 2 pi)`` of the two eigenvalues (ascending) and the largest
    deviation of their moduli from 1."""
    w, _ = eigen(S)
    ph = np.sort(np.mod(np.angle(w), 2 * np.pi))
    return float(ph[0]), float(ph[1]), float(np.max(np.abs(np.abs(w) - 1)))


def classify_X_dagger(S, tol_eig: float = TOL_EIG) -> int:
    """Number of eigenvalues within ``tol_eig`` of ``-1``."""
    w, _ = eigen(S)
    return int(np.sum(np.abs(w + 1) <= tol_eig))


def _real_vector(v: np.ndarray) -> tuple[np.ndarray, float]:
    k = int(np.argmax(np.abs(v)))
    v = v * np.exp(-1j * np.angle(v[k]))
    v = v / np.linalg.norm(v)
    return v.real / np.linalg.norm(v.real), float(np.max(np.abs(v.imag)))


def theta_from_S(S, tol_eig: float = TOL_EIG) -> float:
    """Angle ``theta`` in ``[0, pi)`` of the real eigenvector ``(cos, sin)`` for the
    eigenvalue nearest ``-1``."""
    w, V = eigen(S)
    k = int(np.argmin(np.abs(w + 1)))
    if abs(w[k] + 1) > tol_eig:
        raise ThresholdResonanceError(
            f"no eigenvalue within {tol_eig} of -1 (nearest at distance {abs(w[k] + 1):.3e})")
    b, _ = _real_vector(V[:, k])
    return float(math.atan2(b[1], b[0]) % math.pi)


def eigenvector_imag_residual(S, k: int) -> float:
    _, V = eigen(S)
    return _real_vector(V[:, k])[1]


def polarization_matrix(S, tol_eig: float = TOL_EIG) -> PolarizationMatrix:
    """Cayley transform ``i (I + S)^{-1} (I - S)``, real symmetric for unitary symmetric S."""
    S = _as_matrix(S)
    w, _ = eigen(S)
    if np.min(np.abs(w + 1)) <= tol_eig:
        raise ThresholdResonanceError("I + S is singular: threshold resonance")
    I = np.eye(2)
    Mc = 1j * np.linalg.solve(I + S, I - S)
    return PolarizationMatrix(matrix=Mc.real.copy(),
                              imag_residual=float(np.max(np.abs(Mc.imag))),
                              asym_residual=float(abs(Mc[0, 1] - Mc[1, 0])))


# ---------------------------------------------------------------------------
# sweeps in the stub height

def _workers() -> int:
    try:
        return max(1, int(os.environ.get("WGBANDS_THREADS", "1")))
    except ValueError:
        return 1


def _wrap(a):
    """Map angles to ``(-pi, pi]``."""
    return np.pi - np.mod(np.pi - np.asarray(a), 2 * np.pi)


@dataclass(frozen=True)
class EigenphaseTrack:
    H_grid: np.ndarray
    phases: np.ndarray  # (2, n) unwrapped
    crossings: list = field(default_factory=list)
    unitarity_residuals: np.ndarray | None = None
    ambiguous: list = field(default_factory=list)

    def max_jump(self) -> float:
        return float(np.max(np.abs(np.diff(self.phases, axis=1)), initial=0.0))

    def rows(self):
        for i, H in enumerate(self.H_grid):
            res = float(self.unitarity_residuals[i]) if self.unitarity_residuals is not None \
                else float("nan")
            yield (float(H), float(self.phases[0, i]), float(self.phases[1, i]), res)


def _match(pred, prev_V, w, V, amb_tol=0.05):
    """Order ``(w, V)`` to continue two branches with predicted phases ``pred``.

    The assignment with the smaller total phase distance wins, unless the two
    candidates are within ``amb_tol`` of each other; eigenvector overlap with
    the previous sample decides those.
    """
    ph = np.angle(w)
    d_id = np.abs(_wrap(ph - pred)).sum()
    d_sw = np.abs(_wrap(ph[::-1] - pred)).sum()
    ambiguous = abs(d_id - d_sw) < amb_tol
    if ambiguous:
        ov_id = abs(np.vdot(prev_V[:, 0], V[:, 0])) + abs(np.vdot(prev_V[:, 1], V[:, 1]))
        ov_sw = abs(np.vdot(prev_V[:, 0], V[:, 1])) + abs(np.vdot(prev_V[:, 1], V[:, 0]))
        swap = ov_sw > ov_id
    else:
        swap = d_sw < d_id
    if swap:
        return w[::-1], V[:, ::-1], ambiguous
    return w, V, ambiguous


def _scatter_at(geom: GeometryTee, h, order, stub_cells):
    return threshold_scattering_matrix(geom, h, order, stub_cells=stub_cells, check=False)


def _link(grid, data):
    """Chain the eigenvalues at consecutive grid points into two branches."""
    w0, V0 = data[grid[0]][:2]
    order0 = np.argsort(np.mod(np.angle(w0), 2 * np.pi))
    ws, Vs = [w0[order0]], [V0[:, order0]]
    ambiguous = []
    for i in range(1, len(grid)):
        w, V = data[grid[i]][:2]
        pred = np.angle(ws[-1])
        if i >= 2:
            # linear extrapolation of the phase velocity
            ratio = (grid[i] - grid[i - 1]) / (grid[i - 1] - grid[i - 2])
            pred = pred + ratio * _wrap(np.angle(ws[-1]) - np.angle(ws[-2]))
        w, V, amb = _match(pred, Vs[-1], w, V)
        if amb:
            ambiguous.append(float(grid[i]))
        ws.append(w)
        Vs.append(V)
    return np.array(ws).T, ambiguous


def _unwrap(W):
    raw = np.angle(W)
    phases = np.empty_like(raw)
    phases[:, 0] = np.mod(raw[:, 0], 2 * np.pi)
    for i in range(1, W.shape[1]):
        phases[:, i] = phases[:, i - 1] + _wrap(raw[:, i] - raw[:, i - 1])
    return phases


def track_over_H(ell: float, H_range, n_samples: int = 50, *, h: float = 0.05,
                 order: int = 2, L: float = 2.0, refine: bool = True,
                 xtol: float = H_XTOL, max_step: float = np.pi / 4,
                 max_bisections: int = 6) -> EigenphaseTrack:
    """Follow both eigenvalue phases of the scattering matrix as the stub grows.

    The uniform grid is bisected wherever a phase moves by more than
    ``max_step`` between neighbours: near a resonance the rotating eigenvalue
    sweeps most of the circle within a short H interval.
    """
    H_lo, H_hi = map(float, H_range)
    if not (1.0 < H_lo < H_hi):
        raise ValueError(f"invalid H range {H_range}")
    if n_samples < 2:
        raise ValueError("need at least two samples")
    grid = np.linspace(H_lo, H_hi, n_samples)
    data: dict[float, tuple] = {}

    def compute(Hs):
        todo = [H for H in Hs if H not in data]
        with ThreadPoolExecutor(max_workers=_workers()) as ex:
            mats = list(ex.map(lambda H: _scatter_at(GeometryTee(ell, H, L), h, order, None),
                               todo))
        for H, m in zip(todo, mats):
            w, V = eigen(m)
            data[H] = (w, V, m.unitarity_residual)

    compute(grid.tolist())
    for level_ in range(max_bisections + 1):
        grid = np.array(sorted(data))
        W, ambiguous = _link(grid, data)
        phases = _unwrap(W)
        jumps = np.max(np.abs(np.diff(phases, axis=1)), axis=0)
        bad = np.flatnonzero(jumps > max_step)
        if bad.size == 0 or level_ == max_bisections:
            break
        compute([0.5 * (grid[i] + grid[i + 1]) for i in bad])

    crossings = []
    for b in range(2):
        level = np.floor((phases[b] - np.pi) / (2 * np.pi))
        for i in np.flatnonzero(np.diff(level) != 0):
            Ha, Hb = grid[i], grid[i + 1]
            if not refine:
                ta = phases[b, i] - np.pi - 2 * np.pi * max(level[i], level[i + 1])
                tb = phases[b, i + 1] - np.pi - 2 * np.pi * max(level[i], level[i + 1])
                crossings.append(float(Ha + (Hb - Ha) * ta / (ta - tb)))
                continue
            za, zb = W[b, i], W[b, i + 1]

            def g(H, za=za, zb=zb, Ha=Ha, Hb=Hb):
                if H == Ha:
                    z = za
                elif H == Hb:
                    z = zb
                else:
                    s = (H - Ha) / (Hb - Ha)
                    guess = za * cmath.exp(1j * s * _wrap(cmath.phase(zb) - cmath.phase(za)))
                    w, _ = eigen(_scatter_at(GeometryTee(ell, H, L), h, order, None))
                    z = w[int(np.argmin(np.abs(w - guess)))]
                return float(_wrap(cmath.phase(z) - math.pi))

            try:
                crossings.append(float(brentq(g, Ha, Hb, xtol=xtol)))
            except ValueError as exc:
                raise TrackingError(f"cannot bracket the crossing in [{Ha}, {Hb}]") from exc
    crossings.sort()
    res = np.array([data[H][2] for H in grid])
    return EigenphaseTrack(H_grid=grid, phases=phases, crossings=crossings,
                           unitarity_residuals=res, ambiguous=ambiguous)


def find_H_star(ell: float, H_range, n_samples: int = 50, **kw) -> list[float]:
    """Stub heights at which the scattering matrix has the eigenvalue ``-1``."""
    return track_over_H(ell, H_range, n_samples, **kw).crossings


# ---------------------------------------------------------------------------
# rotation of the eigenvalues under inflation of the lid

@dataclass(frozen=True)
class RotationRate:
    numeric_rate: float
    formula_rate: float
    relative_gap: float
    eigenvalue: complex
    theta: float


def rotation_rate_check(geom: GeometryTee, dH: float = 1e-3, h_target: float = 0.05,
                        order: int = 2, branch: str = "largest") -> RotationRate:
    """Compare ``d phase / dH`` of an eigenvalue of S with ``1/2 int_lid |d_n v|^2``.

    ``v = b_+ v_+ + b_- v_-`` is built from the real unit eigenvector ``b`` of
    the eigenvalue. The stub keeps a fixed number of cell rows so that the
    finite difference sees a smoothly deformed mesh. ``branch`` selects the
    eigenvalue with the ``"largest"`` predicted rate, or an index ``"0"``/``"1"``.
    """
    if not geom.with_stub:
        raise ValueError("rotation rate needs a lid")
    if not 0 < dH < 0.1:
        raise ValueError("dH must be small and positive")
    rows = max(1, int(round((geom.H - 0.5) / h_target)))
    sol = scattering_solution(geom, h_target, order, stub_cells=rows, check=False)
    w, V = eigen(sol.S)
    rates = []
    for k in range(2):
        b, _ = _real_vector(V[:, k])
        v = b[0] * sol.v_plus + b[1] * sol.v_minus
        rates.append(0.5 * fem.boundary_flux_energy(sol.mesh, v, "lid"))
    if branch == "largest":
        k = int(np.argmax(rates))
    else:
        k = int(branch)
    wp, _ = eigen(_scatter_at(geom.with_H(geom.H + dH), h_target, order, rows))
    wm, _ = eigen(_scatter_at(geom.with_H(geom.H - dH), h_target, order, rows))
    zp = wp[int(np.argmin(np.abs(wp - w[k])))]
    zm = wm[int(np.argmin(np.abs(wm - w[k])))]
    if abs(zp - w[k]) > 0.5 or abs(zm - w[k]) > 0.5:
        raise TrackingError("eigenvalue moved too far over the H step")
    numeric = float(_wrap(cmath.phase(zp) - cmath.phase(zm))) / (2 * dH)
    formula = float(rates[k])
    b, _ = _real_vector(V[:, k])
    return RotationRate(numeric_rate=numeric, formula_rate=formula,
                        relative_gap=abs(numeric - formula) / abs(formula),
                        eigenvalue=complex(w[k]),
                        theta=float(math.atan2(b[1], b[0]) % math.pi))


def write_track(track: EigenphaseTrack, path, delimiter: str = ",") -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        wr.writerow(["H", "phase1", "phase2", "unitarity_residual"])
        for H, p1, p2, r in track.rows():
            wr.writerow([f"{H:.12g}", f"{p1:.12g}", f"{p2:.12g}", f"{r:.6e}"])


def write_crossings(crossings, path, delimiter: str = ",") -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        wr.writerow(["index", "H_star"])
        for i, H in enumerate(crossings, 1):
            wr.writerow([i, f"{H:.9f}"])
