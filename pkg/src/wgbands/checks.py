"""Acceptance checks shared by the ``validate`` command and the test-suite.

Each check returns a :class:`CheckResult` carrying the measured numbers, so a
failure can be reported without rerunning anything.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import fem, floquet, reduced_model as rm, scattering
from .mesh import GeometryTee, build_tee_mesh
from .numerics import smallest_eigenpairs

PI2 = math.pi ** 2

H_STAR_REFERENCE = (1.764, 3.047, 4.329, 5.612)
H_STAR_PERIOD = 1.281
# pi - theta is not exactly representable: the level |sin 2 theta| moves by an ulp
SYMMETRY_TOL = 1e-12
STRIP_S = np.array([[0.0, -1.0], [-1.0, 0.0]])


@dataclass
class CheckResult:
    number: int
    name: str
    passed: bool
    detail: str
    measured: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"[{'PASS' if self.passed else 'FAIL'}] criterion {self.number}: " \
               f"{self.name} -- {self.detail}"


# ---------------------------------------------------------------------------
# 1. resonant stub heights

def check_h_star(h: float = 0.02, L: float = 2.0, n_samples: int = 50,
                 tol: float = 0.02, track=None) -> CheckResult:
    if track is None:
        track = scattering.track_over_H(1.6, (1.5, 6.0), n_samples, h=h, L=L)
    c = np.array(track.crossings)
    ok_count = len(c) == len(H_STAR_REFERENCE)
    dev = np.abs(c - H_STAR_REFERENCE).max() if ok_count else float("inf")
    spacing = np.diff(c) if len(c) > 1 else np.array([])
    sdev = np.abs(spacing - H_STAR_PERIOD).max() if spacing.size else float("inf")
    passed = bool(ok_count and dev <= tol and sdev <= tol)
    return CheckResult(1, "resonant heights H*", passed,
                       f"crossings {np.round(c, 4).tolist()}, max deviation {dev:.4f}, "
                       f"spacing deviation {sdev:.4f} (tol {tol})",
                       {"crossings": c.tolist(), "max_dev": float(dev),
                        "spacing_dev": float(sdev), "track": track})


# ---------------------------------------------------------------------------
# 2. strip oracle

def check_strip(levels=((0.05, 2.0, 5e-3), (0.02, 3.0, 5e-4))) -> CheckResult:
    devs = []
    for h, L, tol in levels:
        S = scattering.threshold_scattering_matrix(GeometryTee(with_stub=False, L=L), h, 2)
        devs.append((h, L, tol, float(np.abs(S.matrix - STRIP_S).max())))
    passed = all(d <= tol for _, _, tol, d in devs)
    txt = ", ".join(f"h={h} L={L}: {d:.2e} (tol {tol})" for h, L, tol, d in devs)
    return CheckResult(2, "strip scattering matrix", passed, txt, {"levels": devs})


# ---------------------------------------------------------------------------
# 3. unitarity, symmetry, Cayley transform and half/full identities

def random_tees(n: int = 10, seed: int = 7, L: float = 2.0) -> list[GeometryTee]:
    rng = np.random.default_rng(seed)
    return [GeometryTee(ell=float(rng.uniform(1.1, 1.9)), H=float(rng.uniform(1.3, 4.0)), L=L)
            for _ in range(n)]


def check_unitarity_suite(n: int = 10, h: float = 0.05, L: float = 2.0,
                          seed: int = 7) -> CheckResult:
    tol = scattering.default_tol_S(h, L)
    worst = {"unitarity": 0.0, "symmetry": 0.0, "cayley_imag": 0.0, "half_full": 0.0}
    n_resonant = 0
    for g in random_tees(n, seed, L):
        S = scattering.threshold_scattering_matrix(g, h, 2, check=False)
        worst["unitarity"] = max(worst["unitarity"], S.unitarity_residual)
        worst["symmetry"] = max(worst["symmetry"], S.symmetry_residual)
        if scattering.classify_X_dagger(S) == 0:
            P = scattering.polarization_matrix(S)
            worst["cayley_imag"] = max(worst["cayley_imag"], P.imag_residual)
        else:
            n_resonant += 1
        r = scattering.half_domain_reflections(g, h, 2, check=False)
        worst["half_full"] = max(worst["half_full"], abs(r.reflection - S.s_pp),
                                 abs(r.transmission - S.s_pm))
    passed = (worst["unitarity"] <= tol and worst["symmetry"] <= tol
              and worst["cayley_imag"] <= 10 * tol and worst["half_full"] <= 2 * tol)
    txt = (f"{n} tees, tol_S={tol:g}: unitarity {worst['unitarity']:.1e}, symmetry "
           f"{worst['symmetry']:.1e}, Cayley imag {worst['cayley_imag']:.1e}, "
           f"half/full {worst['half_full']:.1e}, resonant {n_resonant}")
    return CheckResult(3, "unitarity/symmetry/Cayley", passed, txt, dict(worst))


# ---------------------------------------------------------------------------
# 4. reduced-model analytics

def _tan_oracle_roots(rho: float, T: float, count: int) -> list[float]:
    """Positive roots ``nu = t**2`` of ``t cos t = (T rho / 2) sin t`` by mpmath."""
    import mpmath

    mpmath.mp.dps = 40
    a = mpmath.mpf(T) * rho / 2

    def F(t):
        return t * mpmath.cos(t) - a * mpmath.sin(t)

    roots = []
    k = 0
    while len(roots) < count:
        lo = mpmath.mpf(k) * mpmath.pi + mpmath.mpf("1e-20")
        hi = (k + 1) * mpmath.pi - mpmath.mpf("1e-20")
        if F(lo) * F(hi) < 0:
            roots.append(float(mpmath.findroot(F, (lo, hi), solver="anderson") ** 2))
        k += 1
    return roots


def check_reduced_model() -> CheckResult:
    fails = []
    # symmetry of the band sets under theta -> pi - theta and pi/2 - theta
    sym = 0.0
    for theta in np.linspace(0.05, 3.1, 23):
        for rho in (-3.0, 0.0, 0.7, 2.5):
            p = rm.ModelParams(float(theta), 2.0, rho)
            q = rm.ModelParams(float(math.pi - theta), 2.0, rho)
            r = rm.ModelParams(float((math.pi / 2 - theta) % math.pi), 2.0, rho)
            for m in (1, 2, 3):
                b0, b1, b2 = (rm.band_interval(m, x) for x in (p, q, r))
                sym = max(sym, abs(b0.lower - b1.lower), abs(b0.upper - b1.upper),
                          abs(b0.lower - b2.lower), abs(b0.upper - b2.upper))
    # bit-identical bands whenever the level |sin 2 theta| is the same number
    exact = all(rm.band_interval(m, rm.ModelParams.from_sin2theta(sg * 0.7, 2.0, rho))
                == rm.band_interval(m, rm.ModelParams.from_sin2theta(0.7, 2.0, rho))
                for sg in (1.0, -1.0) for rho in (-3.0, 0.0, 2.5) for m in (1, 2, 3))
    # mirrored angles agree up to the rounding of the mirrored angle itself
    if sym > SYMMETRY_TOL or not exact:
        fails.append(f"symmetry {sym:.1e}")
    # Kirchhoff tiling
    bands = rm.band_intervals(8, rm.ModelParams(math.pi / 4, 2.0, 0.0))
    tile = max(max(abs(bands[m - 1].upper - m * m * PI2), abs(bands[m].lower - m * m * PI2))
               for m in range(1, 8))
    if tile > 1e-10:
        fails.append(f"tiling {tile:.1e}")
    # breathing asymptotics
    b = rm.band_interval(1, rm.ModelParams.from_sin2theta(0.7, 2.0, 30.0))
    centre = 0.5 * (b.lower + b.upper)
    rel = abs(centre / (-(2.0 ** 2) * 30.0 ** 2 / 4) - 1)
    if rel > 0.05 or b.width > 1e-6:
        fails.append(f"rho=30 centre rel {rel:.3f} width {b.width:.1e}")
    # eta = pi/2 against the tangent-relation oracle
    odev = 0.0
    for rho in (-2.0, -0.5, 0.3, 1.0, 1.5):
        p = rm.ModelParams.from_sin2theta(0.7, 2.0, rho)
        ours = [v for v in rm.solve_nu_all(6, math.pi / 2, p) if v > 1e-9]
        ref = _tan_oracle_roots(rho, 2.0, len(ours))
        odev = max(odev, max(abs(a - b_) for a, b_ in zip(ours, ref)))
    if odev > 1e-8:
        fails.append(f"tan oracle {odev:.1e}")
    detail = (f"symmetry {sym:.1e}, tiling {tile:.1e}, rho=30 centre rel {rel:.4f} width "
              f"{b.width:.1e}, tan-oracle {odev:.1e}")
    return CheckResult(4, "reduced-model analytics", not fails, detail,
                       {"symmetry": sym, "tiling": tile, "asym_rel": rel,
                        "asym_width": b.width, "oracle": odev})


# ---------------------------------------------------------------------------
# 5. Floquet bands of the periodic tee

def _gap_above(diagram, first_p: int) -> float:
    lo = diagram.bands[first_p].lower
    hi = diagram.bands[first_p - 1].upper
    return lo - hi


def first_order_gap(M, eps: float, m: int = 1) -> float:
    """Gap between the above-threshold bands ``m`` and ``m + 1`` predicted by the
    first-order correction ``eps * nu_tilde`` of the non-resonant case."""
    lo_next, _ = rm.case_i_band_endpoints(M, m + 1)
    _, hi = rm.case_i_band_endpoints(M, m)
    return (2 * m + 1) * PI2 + eps * (lo_next - hi)


def check_floquet(eps_list=(0.1, 0.05), h: float = 0.05, N_bullet: int = 2,
                  flat_tol: float = 1e-4, gap_tol: float = 0.15,
                  eta_grid=None) -> CheckResult:
    g = GeometryTee(1.6, 2.5, 2.0)
    # reported next to the measured gap; the pass/fail rule uses 3 pi^2 only
    M = scattering.polarization_matrix(scattering.threshold_scattering_matrix(g, h, 2)).matrix
    rows = []
    passed = True
    for eps in eps_list:
        d = floquet.band_diagram(g, eps, eta_grid, p_max=N_bullet + 3, h=h)
        below = d.below()
        rel_w = max((b.width / b.upper for b in below), default=float("inf"))
        gap = _gap_above(d, N_bullet + 1)
        gap_rel = abs(gap / (3 * PI2) - 1)
        ok = len(below) == N_bullet and rel_w <= flat_tol and gap_rel <= gap_tol
        passed &= ok
        rows.append({"eps": eps, "n_below": len(below), "rel_width": rel_w, "gap": gap,
                     "gap_rel": gap_rel, "gap_first_order": first_order_gap(M, eps),
                     "diagram": d})
    txt = "; ".join(f"eps={r['eps']}: below {r['n_below']}, rel width {r['rel_width']:.1e}, "
                    f"gap {r['gap']:.2f} vs 3pi^2={3 * PI2:.2f} ({100 * r['gap_rel']:.1f}%), "
                    f"first-order estimate {r['gap_first_order']:.2f}"
                    for r in rows)
    return CheckResult(5, "Floquet bands vs reference", passed, txt, {"rows": rows})


# ---------------------------------------------------------------------------
# 6. breathing of the bands under inflation of the stub

H_LADDER = (2.5, 2.9, 3.047, 3.2, 3.5)


def check_breathing(eps: float = 0.05, h: float = 0.05, H_grid=H_LADDER,
                    H_star: float = 3.047, N_bullet: int = 2, eta_grid=None,
                    mono_tol: float = 1e-8) -> CheckResult:
    runs = floquet.spectrum_vs_H(1.6, H_grid, eps, p_max=N_bullet + 3, h=h, eta_grid=eta_grid)
    Hs = np.array([H for H, _ in runs])
    # (a) the bands that sit just above the threshold at the reference height
    widths = np.array([[d.bands[p - 1].width for p in (N_bullet + 1, N_bullet + 2)]
                       for _, d in runs])
    k_star = int(np.argmin(np.abs(Hs - H_star)))
    a_ok = bool(np.all(np.argmax(widths, axis=0) == k_star))
    # (b) one more band below the threshold past the resonance
    n_below = np.array([d.n_below for _, d in runs])
    b_ok = bool(np.all(n_below[Hs < H_star] == N_bullet)
                and np.all(n_below[Hs > H_star] == N_bullet + 1))
    # (c) eigenvalues do not increase when the stub grows
    C = np.array([d.curves for _, d in runs])
    inc = np.diff(C, axis=0) / C[:-1]
    worst = float(inc.max())
    c_ok = worst <= mono_tol
    txt = (f"widths {np.round(widths, 3).tolist()} max at H={Hs[np.argmax(widths, axis=0)]}, "
           f"below counts {n_below.tolist()}, worst relative increase {worst:.1e}")
    return CheckResult(6, "breathing under inflation", a_ok and b_ok and c_ok, txt,
                       {"widths": widths, "n_below": n_below, "worst_increase": worst,
                        "a": a_ok, "b": b_ok, "c": c_ok, "runs": runs})


# ---------------------------------------------------------------------------
# 7. rotation of the eigenvalue under inflation

def check_rotation(h: float = 0.02, dH: float = 1e-3, gap_tol: float = 0.1,
                   track=None) -> CheckResult:
    if track is None:
        track = scattering.track_over_H(1.6, (1.5, 6.0), 50, h=h)
    rates = np.diff(track.phases, axis=1) / np.diff(track.H_grid)
    min_rate = float(rates.min())
    rr = scattering.rotation_rate_check(GeometryTee(1.6, 2.5, 2.0), dH, h, 2)
    passed = min_rate > 0 and rr.numeric_rate > 0 and rr.relative_gap <= gap_tol
    txt = (f"min d(phase)/dH on track {min_rate:.2e}; at H=2.5 numeric {rr.numeric_rate:.5f} "
           f"vs lid integral {rr.formula_rate:.5f} (gap {100 * rr.relative_gap:.2f}%)")
    return CheckResult(7, "rotation rate", passed, txt,
                       {"min_rate": min_rate, "rate": rr, "branch_min": rates.min(axis=1)})


# ---------------------------------------------------------------------------
# 8. gap-opening 2x2 model

def check_gap_model(n: int = 1000, seed: int = 11) -> CheckResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(n):
        k = int(rng.integers(0, 4))
        c = rm.PerturbationCoeffs(m_Omega=float(rng.normal()), M_Omega=float(rng.normal()),
                                  Lambda0=(2 * k + 1) ** 2 * PI2)
        t = float(rng.normal() * 3)
        lm, lp, gap = rm.gap_matrix_eigen(t, c)
        ev = np.linalg.eigvalsh(rm.gap_matrix(t, c))
        scale = max(1.0, np.abs(ev).max())
        worst = max(worst, abs(lm - ev[0]) / scale, abs(lp - ev[1]) / scale,
                    abs(gap - (ev[1] - ev[0])) / scale)
    # gap vanishes exactly on t = 0, m + M = 0 and nowhere nearby
    c0 = rm.PerturbationCoeffs(m_Omega=0.3, M_Omega=-0.3, Lambda0=PI2)
    zero_ok = rm.gap_matrix_eigen(0.0, c0)[2] == 0.0
    nonzero_ok = all(rm.gap_matrix_eigen(t, rm.PerturbationCoeffs(0.3, -0.3 + d, PI2))[2] > 0
                     for t, d in ((1e-6, 0.0), (0.0, 1e-6), (0.5, 0.2)))
    passed = worst <= 1e-12 and zero_ok and nonzero_ok
    txt = f"{n} draws, worst relative mismatch {worst:.1e}; zero-gap criterion " \
          f"{'ok' if zero_ok and nonzero_ok else 'violated'}"
    return CheckResult(8, "gap-opening model", passed, txt, {"worst": worst})


# ---------------------------------------------------------------------------
# 9. convergence rates

def _rate(hs, errs) -> float:
    return float(np.polyfit(np.log(hs), np.log(errs), 1)[0])


def convergence_ladder():
    """Errors and fitted rates for the unit square and the 1D quasi-periodic model."""
    out = {}
    sq = GeometryTee(with_stub=False, L=0.5)
    for order in (1, 2):
        hs = (0.25, 0.125, 0.0625)
        errs = []
        for h in hs:
            m = build_tee_mesh(sq, h, order)
            ops = fem.assemble(m, dirichlet=("wall", "face_left", "face_right"))
            errs.append(abs(smallest_eigenpairs(ops.K, ops.M, 1).values[0] - 2 * PI2))
        out[("square", order)] = (hs, errs, _rate(hs, errs))
        ns = (8, 16, 32)
        errs = []
        eta = 1.0
        for n in ns:
            ops, pairs = fem.assemble_interval(n, order)
            q = fem.apply_quasi_periodic(ops, pairs, eta)
            vals = smallest_eigenpairs(q.K, q.M, 2).values
            exact = sorted([eta ** 2, (eta - 2 * math.pi) ** 2])
            errs.append(max(abs(vals[0] - exact[0]), abs(vals[1] - exact[1])))
        hs1 = tuple(1.0 / n for n in ns)
        out[("interval", order)] = (hs1, errs, _rate(hs1, errs))
    return out


def check_convergence(rel: float = 0.2) -> CheckResult:
    lad = convergence_ladder()
    fails = []
    parts = []
    for (kind, order), (_, _, rate) in lad.items():
        nominal = 2 * order
        parts.append(f"{kind} P{order}: {rate:.2f}")
        if abs(rate - nominal) > rel * nominal:
            fails.append(kind)
    return CheckResult(9, "convergence rates", not fails,
                       ", ".join(parts) + f" (nominal 2/4, +-{int(100 * rel)}%)",
                       {"ladder": lad})


ALL_CHECKS = {
    1: check_h_star, 2: check_strip, 3: check_unitarity_suite, 4: check_reduced_model,
    5: check_floquet, 6: check_breathing, 7: check_rotation, 8: check_gap_model,
    9: check_convergence,
}
