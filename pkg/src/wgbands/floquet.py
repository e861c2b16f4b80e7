"""Floquet-Bloch bands of the thin periodic waveguide and trapped modes of the junction.

The periodicity cell of width ``eps`` is rescaled by ``1/eps``: it becomes the
junction truncated at ``|x| = 1/(2 eps)`` with quasi-periodic faces, and a
scaled eigenvalue ``lambda`` corresponds to the physical ``Lambda = lambda / eps**2``.
"""

from __future__ import annotations

import csv
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from . import fem
from .mesh import GeometryTee, build_cell_mesh, build_tee_mesh
from .numerics import SolverError, smallest_eigenpairs
from .reduced_model import BandInterval

PI2 = math.pi ** 2
DEGENERATE_TOL = 1e-10
# gaps narrower than this fraction of the threshold are discretization splittings
GAP_REL_TOL = 1e-6


def default_eta_grid(n: int = 64) -> np.ndarray:
    """``n`` uniform points on ``[0, 2 pi]`` with ``0`` and ``pi`` always included."""
    return np.unique(np.concatenate([np.linspace(0.0, 2 * np.pi, n), [0.0, np.pi]]))


@dataclass(frozen=True, eq=False)
class BandDiagram:
    """Dispersion curves ``Lambda_p(eta)`` in physical units.

    ``curves[p - 1, j]`` is the p-th eigenvalue at ``eta_grid[j]``.
    """

    eps: float
    eta_grid: np.ndarray
    curves: np.ndarray
    threshold: float
    bands: list = field(default_factory=list)
    gaps: list = field(default_factory=list)

    @property
    def p_max(self) -> int:
        return self.curves.shape[0]

    def below(self) -> list[BandInterval]:
        return [b for b in self.bands if b.upper < self.threshold]

    def above(self) -> list[BandInterval]:
        return [b for b in self.bands if b.upper >= self.threshold]

    @property
    def n_below(self) -> int:
        return len(self.below())

    def write_csv(self, path, delimiter: str = ",") -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
            w.writerow(["eta"] + [f"Lambda_{p}" for p in range(1, self.p_max + 1)])
            for j, eta in enumerate(self.eta_grid):
                w.writerow([f"{eta:.12g}"] + [f"{v:.12g}" for v in self.curves[:, j]])

    def summary(self) -> dict:
        return {
            "eps": self.eps,
            "threshold": self.threshold,
            "bands": [{"p": b.m, "lower": b.lower, "upper": b.upper,
                       "degenerate": b.degenerate,
                       "below_threshold": b.upper < self.threshold} for b in self.bands],
            "gaps": [{"lower": a, "upper": b} for a, b in self.gaps],
        }

    def write_json(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(self.summary(), fh, indent=2, sort_keys=True)
            fh.write("\n")


def extract_bands(curves: np.ndarray, merge_tol: float = 0.0):
    """Per-curve ``[min, max]`` and the open gaps between the merged band closures."""
    curves = np.atleast_2d(np.asarray(curves, dtype=float))
    lo = curves.min(axis=1)
    hi = curves.max(axis=1)
    bands = [BandInterval(m=p + 1, lower=float(a), upper=float(b),
                          degenerate=bool(b - a < DEGENERATE_TOL))
             for p, (a, b) in enumerate(zip(lo, hi))]
    order = np.argsort(lo, kind="stable")
    gaps = []
    reach = hi[order[0]]
    for k in order[1:]:
        if lo[k] > reach + merge_tol:
            gaps.append((float(reach), float(lo[k])))
        reach = max(reach, hi[k])
    return bands, gaps


def _workers() -> int:
    try:
        return max(1, int(os.environ.get("WGBANDS_THREADS", "1")))
    except ValueError:
        return 1


def _refine_extrema(eta: np.ndarray, vals: np.ndarray) -> list[float]:
    """Midpoints around the interior extrema of each curve on the current grid."""
    new = set()
    for row in vals:
        for i in (int(np.argmin(row)), int(np.argmax(row))):
            if 0 < i < len(eta) - 1:
                new.add(0.5 * (eta[i - 1] + eta[i]))
                new.add(0.5 * (eta[i] + eta[i + 1]))
    return sorted(new)


def band_diagram(geom: GeometryTee, eps: float, eta_grid=None, p_max: int = 6, *,
                 h: float = 0.05, order: int = 2, use_symmetry: bool = True,
                 refine_levels: int = 0, gap_rel_tol: float = GAP_REL_TOL) -> BandDiagram:
    """Lowest ``p_max`` quasi-periodic eigenvalues of the cell over an eta grid.

    With ``use_symmetry`` only ``eta <= pi`` is solved and the rest is filled
    in by ``Lambda_p(2 pi - eta) = Lambda_p(eta)`` (the reduced pencils are
    complex conjugates of each other).
    """
    if not 0.0 < eps <= 0.2:
        raise ValueError(f"eps must lie in (0, 0.2], got {eps}")
    if p_max < 1:
        raise ValueError("p_max must be >= 1")
    eta = default_eta_grid() if eta_grid is None else np.asarray(eta_grid, dtype=float)
    if eta.size == 0 or np.any(eta < 0) or np.any(eta > 2 * np.pi + 1e-12):
        raise ValueError("eta grid must be a nonempty subset of [0, 2 pi]")
    eta = np.unique(eta)
    mesh = build_cell_mesh(geom, eps, h, order)
    ops = fem.assemble(mesh)
    cache: dict[float, np.ndarray] = {}

    def solve(e: float) -> np.ndarray:
        q = fem.apply_quasi_periodic(ops, mesh.periodic_pairs, e)
        try:
            r = smallest_eigenpairs(q.K, q.M, p_max, shift=0.0)
        except SolverError as exc:
            raise SolverError(f"eigensolver failed at eta = {e:.6f}: {exc}") from exc
        return r.values / eps ** 2

    def fill(points) -> None:
        todo = []
        for e in points:
            key = min(e, 2 * np.pi - e) if use_symmetry else e
            if key not in cache and key not in todo:
                todo.append(key)
        with ThreadPoolExecutor(max_workers=_workers()) as ex:
            for key, vals in zip(todo, ex.map(solve, todo)):
                cache[key] = vals

    def assemble_curves(points):
        cols = [cache[min(e, 2 * np.pi - e) if use_symmetry else e] for e in points]
        return np.array(cols).T

    fill(eta)
    for _ in range(refine_levels):
        extra = _refine_extrema(eta, assemble_curves(eta))
        if not extra:
            break
        fill(extra)
        eta = np.unique(np.concatenate([eta, extra]))
    curves = assemble_curves(eta)
    threshold = PI2 / eps ** 2
    bands, gaps = extract_bands(curves, merge_tol=gap_rel_tol * threshold)
    return BandDiagram(eps=eps, eta_grid=eta, curves=curves, threshold=threshold,
                       bands=bands, gaps=gaps)


def spectrum_vs_H(ell: float, H_grid, eps: float, p_max: int = 6, *, L: float = 2.0,
                  **kw) -> list[tuple[float, BandDiagram]]:
    """One band diagram per stub height."""
    out = []
    for H in H_grid:
        out.append((float(H), band_diagram(GeometryTee(ell, float(H), L), eps, p_max=p_max,
                                           **kw)))
    return out


# ---------------------------------------------------------------------------
# trapped modes below the threshold

@dataclass(frozen=True)
class TrappedSpectrum:
    mus: np.ndarray
    K_coeffs: np.ndarray  # (N, 2): K_plus, K_minus
    N_bullet: int
    fitted_betas: np.ndarray  # (N, 2): decay rates fitted on the right and the left
    near_threshold: list = field(default_factory=list)


def _fit_sinh(c0: float, c1: float, x0: float, x1: float, L: float, beta_guess: float):
    """Fit ``A sinh(beta (L - x))`` through ``(x0, c0)`` and ``(x1, c1)``."""
    ratio = c1 / c0
    if not 0 < ratio < 1:
        return float("nan"), float("nan")

    def g(b):
        return math.sinh(b * (L - x1)) / math.sinh(b * (L - x0)) - ratio

    lo, hi = 1e-3 * beta_guess, 10 * beta_guess
    try:
        beta = brentq(g, lo, hi, xtol=1e-14)
    except ValueError:
        return float("nan"), float("nan")
    return beta, c0 / math.sinh(beta * (L - x0))


def trapped_modes(geom: GeometryTee, h_target: float = 0.05, order: int = 2,
                  L_trap: float = 4.0, stations=(1.5, 2.5), k: int = 8) -> TrappedSpectrum:
    """Eigenvalues below ``pi**2`` of the junction and their far-field amplitudes.

    The tee is truncated at ``|x| = L_trap`` with Dirichlet ends. A trapped mode
    then behaves like ``K e^{-beta |x|} phi(y)`` corrected by its reflection at
    the end, that is ``2 K e^{-beta L} sinh(beta (L - |x|)) phi(y)``; the transverse
    projections at two stations fix both the amplitude and the decay rate.
    """
    if L_trap < 3:
        raise ValueError("L_trap must be at least 3")
    x0, x1 = map(float, stations)
    if not (geom.ell / 2 < x0 < x1 < L_trap):
        raise ValueError("stations must lie between the stub and the truncation")
    g = geom.with_L(L_trap)
    mesh = build_tee_mesh(g, h_target, order, x_stations=(-x1, -x0, x0, x1))
    ops = fem.assemble(mesh, dirichlet=("wall", "lid", "face_left", "face_right"))
    r = smallest_eigenpairs(ops.K, ops.M, min(k, ops.n_dof), shift=0.0)
    keep = r.values < PI2
    mus = r.values[keep]
    near = [float(m) for m in r.values if abs(m - PI2) < 1e-3]
    Ks, betas = [], []
    for j in np.flatnonzero(keep):
        u = ops.expand(r.vectors[:, j].real)
        beta0 = math.sqrt(PI2 - r.values[j])
        row_K, row_b = [], []
        for sgn in (1.0, -1.0):
            c0 = fem.line_projection(mesh, u, sgn * x0).real
            c1 = fem.line_projection(mesh, u, sgn * x1).real
            s = 1.0 if c0 >= 0 else -1.0
            beta, A = _fit_sinh(s * c0, s * c1, x0, x1, L_trap, beta0)
            row_b.append(beta)
            # amplitude for the exact decay rate, so K does not inherit the fit noise
            A0 = c0 / math.sinh(beta0 * (L_trap - x0))
            row_K.append(0.5 * A0 * math.exp(beta0 * L_trap))
        Ks.append(row_K)
        betas.append(row_b)
    return TrappedSpectrum(mus=mus, K_coeffs=np.array(Ks).reshape(-1, 2),
                           N_bullet=int(keep.sum()),
                           fitted_betas=np.array(betas).reshape(-1, 2),
                           near_threshold=near)


# ---------------------------------------------------------------------------
# comparison with the reduced model

@dataclass(frozen=True)
class ModelDeviation:
    m: int
    p: int
    dev_lower: float
    dev_upper: float

    def normalized(self, eps: float) -> float:
        return max(self.dev_lower, self.dev_upper) / eps


@dataclass(frozen=True)
class DeviationReport:
    eps: float
    deviations: list
    count_mismatch: int

    @property
    def max_deviation(self) -> float:
        return max((max(d.dev_lower, d.dev_upper) for d in self.deviations), default=0.0)

    @property
    def max_normalized(self) -> float:
        return self.max_deviation / self.eps


def compare_with_model(diagram: BandDiagram, model_bands, first_p: int | None = None
                       ) -> DeviationReport:
    """Endpoint deviations ``|a - (pi^2/eps^2 + c)|`` of the above-threshold bands.

    Model band ``m`` is paired with FEM curve ``first_p + m - 1``; by default
    ``first_p`` is the first curve not lying below the threshold.
    """
    if first_p is None:
        first_p = diagram.n_below + 1
    out = []
    mismatch = 0
    for mb in model_bands:
        p = first_p + mb.m - 1
        if p > diagram.p_max:
            mismatch += 1
            continue
        fb = diagram.bands[p - 1]
        out.append(ModelDeviation(m=mb.m, p=p,
                                  dev_lower=abs(fb.lower - (diagram.threshold + mb.lower)),
                                  dev_upper=abs(fb.upper - (diagram.threshold + mb.upper))))
    return DeviationReport(eps=diagram.eps, deviations=out, count_mismatch=mismatch)
