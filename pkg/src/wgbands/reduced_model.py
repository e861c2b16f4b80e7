"""One-dimensional reduced models for the bands above (and just below) the threshold.

The thin periodic waveguide is approximated, after the shift by ``pi**2 / eps**2``,
by a quantum-graph-like problem on the interval ``(-1/2, 1/2)`` with quasi-periodic
ends and transmission conditions at the origin. The eigenvalues ``nu`` of that
problem solve the dispersion relation

    sin(2 theta) cos(eta) = cos(sqrt(nu)) - (T rho / 2) sin(sqrt(nu)) / sqrt(nu),

whose right-hand side is an entire function of ``nu`` (hyperbolic for ``nu < 0``).
Everything here is a pure function of its inputs.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .numerics import find_root

PI2 = math.pi ** 2

ROOT_TOL = 1e-12
DEGENERATE_TOL = 1e-10
# |F| below this at a critical point of f counts as a tangential (double) root
TANGENCY_TOL = 1e-11
_SERIES_CUT = 1e-4
_DSERIES_CUT = 1e-2
_SCALE_CUT = 30.0


@dataclass(frozen=True)
class ModelParams:
    """Parameters ``(theta, T, rho)`` of the breathing dispersion relation."""

    theta: float
    T: float
    rho: float = 0.0
    # sin(2 theta) as supplied by the caller, kept to avoid an asin/sin round trip
    level: float | None = field(default=None, compare=False, repr=False)

    def __post_init__(self):
        if not (0.0 <= self.theta < math.pi):
            raise ValueError(f"theta must lie in [0, pi), got {self.theta}")
        if not self.T > 0:
            raise ValueError(f"T must be positive, got {self.T}")
        if not math.isfinite(self.rho):
            raise ValueError("rho must be finite")

    @classmethod
    def from_sin2theta(cls, sin2theta: float, T: float, rho: float = 0.0) -> "ModelParams":
        if not -1.0 <= sin2theta <= 1.0:
            raise ValueError(f"sin(2 theta) must lie in [-1, 1], got {sin2theta}")
        theta = 0.5 * math.asin(sin2theta)
        if theta < 0:
            theta += math.pi
        return cls(theta=theta, T=T, rho=rho, level=float(sin2theta))

    @property
    def sin2theta(self) -> float:
        if self.level is not None:
            return self.level
        return math.sin(2.0 * self.theta)

    @property
    def coupling(self) -> float:
        """The product ``T rho / 2`` multiplying ``sin(sqrt(nu))/sqrt(nu)``."""
        return 0.5 * self.T * self.rho

    def with_rho(self, rho: float) -> "ModelParams":
        return ModelParams(self.theta, self.T, rho, level=self.level)


@dataclass(frozen=True)
class BandInterval:
    m: int
    lower: float
    upper: float
    degenerate: bool

    @property
    def width(self) -> float:
        return self.upper - self.lower


@dataclass(frozen=True)
class PerturbationCoeffs:
    """Polarization constants of a Kirchhoff-type near field.

    ``C_Omega`` is carried along but no formula consumes it.
    """

    m_Omega: float
    M_Omega: float
    Lambda0: float
    C_Omega: float = 0.0

    def __post_init__(self):
        if not self.Lambda0 > 0:
            raise ValueError(f"Lambda0 must be positive, got {self.Lambda0}")


@dataclass(frozen=True)
class QuadraticLaw:
    """Asymptotic law ``c ~ coefficient * rho**2``."""

    coefficient: float


# ---------------------------------------------------------------------------
# entire functions cos(sqrt(nu)) and sin(sqrt(nu))/sqrt(nu)

def _cos_sinc(nu, scaled: bool = False):
    """``cos(sqrt(nu))`` and ``sin(sqrt(nu))/sqrt(nu)``, plus a positive weight.

    With ``scaled`` the hyperbolic values for ``sqrt(-nu) > _SCALE_CUT`` are
    multiplied by ``exp(-sqrt(-nu))`` (returned as the weight) so that very
    negative ``nu`` do not overflow. Signs and zeros are unchanged.
    """
    nu = np.asarray(nu, dtype=float)
    C = np.empty_like(nu)
    S = np.empty_like(nu)
    w = np.ones_like(nu)
    small = np.abs(nu) < _SERIES_CUT
    pos = (nu > 0) & ~small
    neg = (nu < 0) & ~small
    t = np.sqrt(nu[pos])
    C[pos] = np.cos(t)
    S[pos] = np.sin(t) / t
    s = np.sqrt(-nu[neg])
    if scaled:
        big = s > _SCALE_CUT
        sc = np.minimum(s, _SCALE_CUT)
        Cn, Sn, wn = np.cosh(sc), np.sinh(sc) / s, np.ones_like(s)
        e2 = np.exp(-2.0 * s[big])
        Cn[big] = 0.5 * (1.0 + e2)
        Sn[big] = 0.5 * (1.0 - e2) / s[big]
        wn[big] = np.exp(-s[big])
        C[neg], S[neg], w[neg] = Cn, Sn, wn
    else:
        C[neg] = np.cosh(s)
        S[neg] = np.sinh(s) / s
    z = nu[small]
    C[small] = 1.0 - z / 2.0 + z * z / 24.0
    S[small] = 1.0 - z / 6.0 + z * z / 120.0
    return C, S, w


def _dsinc(nu, C, S):
    """Derivative of ``sin(sqrt(nu))/sqrt(nu)`` with respect to ``nu``."""
    nu = np.asarray(nu, dtype=float)
    out = np.empty_like(nu)
    small = np.abs(nu) < _DSERIES_CUT
    big = ~small
    out[big] = (C[big] - S[big]) / (2.0 * nu[big])
    z = nu[small]
    out[small] = -1.0 / 6.0 + z / 60.0 - z * z / 1680.0 + z ** 3 / 90720.0
    return out


def _f(nu, a):
    C, S, _ = _cos_sinc(nu)
    return C - a * S


def _df(nu, a):
    C, S, _ = _cos_sinc(nu)
    return -0.5 * S - a * _dsinc(nu, C, S)


def _g(nu, a, c):
    """``(f(nu) - c)`` times a positive weight; safe for very negative ``nu``."""
    C, S, w = _cos_sinc(nu, scaled=True)
    return C - a * S - c * w


def _dg(nu, a):
    """``f'(nu)`` times the same positive weight (same sign and zeros)."""
    C, S, _ = _cos_sinc(nu, scaled=True)
    return -0.5 * S - a * _dsinc(nu, C, S)


def dispersion_function(nu, params: ModelParams):
    """Right-hand side ``f(nu)`` of the dispersion relation (vectorized over ``nu``)."""
    out = _f(nu, params.coupling)
    return float(out) if np.ndim(out) == 0 else out


def dispersion_derivative(nu, params: ModelParams):
    out = _df(nu, params.coupling)
    return float(out) if np.ndim(out) == 0 else out


# ---------------------------------------------------------------------------
# root location

def nu_floor(params: ModelParams) -> float:
    """Lower end of the root search.

    For ``rho > 0`` the hyperbolic branch crosses ``|f| <= 1`` near
    ``sqrt(-nu) ~ T rho / 2``; below ``-(T rho/2 + 2)**2`` one has ``f > 1``.
    Otherwise ``f >= 1`` on ``nu <= 0`` with equality only at the origin, so a
    floor just below zero brackets a root sitting exactly at ``nu = 0``.
    """
    a = params.coupling
    if params.rho > 0:
        return -(a + 2.0) ** 2 - 1.0
    return -1.0


def _scan_grid(floor: float, t_ceil: float) -> np.ndarray:
    s_max = math.sqrt(-floor)
    n_neg = max(8, int(math.ceil(s_max / 0.05)))
    s = np.linspace(s_max, 0.0, n_neg + 1)[:-1]
    n_pos = max(8, int(math.ceil(t_ceil / (math.pi / 32))))
    t = np.linspace(0.0, t_ceil, n_pos + 1)
    return np.concatenate([-(s ** 2), t ** 2])


def _critical_points(grid: np.ndarray, a: float) -> list[float]:
    g = _dg(grid, a)
    crit = []
    for i in range(len(grid) - 1):
        if g[i] == 0.0:
            crit.append(float(grid[i]))
        elif g[i] * g[i + 1] < 0:
            crit.append(find_root(lambda x: float(_dg(x, a)), (grid[i], grid[i + 1]),
                                  tol=ROOT_TOL))
    return crit


def _roots_between(a: float, c: float, floor: float, t_ceil: float) -> list[float]:
    """Real roots of ``f(nu) = c`` on ``[floor, t_ceil**2]`` with multiplicity."""
    grid = _scan_grid(floor, t_ceil)
    crit = _critical_points(grid, a)
    nodes = [floor] + crit + [float(grid[-1])]
    F = [float(_g(x, a, c)) for x in nodes]
    tol = TANGENCY_TOL
    is_zero = [abs(v) <= tol for v in F]
    roots: list[float] = []
    for j, x in enumerate(nodes):
        if is_zero[j] and 0 < j < len(nodes) - 1:
            # critical point touching the level: double root
            roots.extend([x, x])
        elif is_zero[j]:
            roots.append(x)
    for j in range(len(nodes) - 1):
        if is_zero[j] or is_zero[j + 1]:
            continue
        if F[j] * F[j + 1] < 0:
            roots.append(find_root(lambda x: float(_g(x, a, c)),
                                   (nodes[j], nodes[j + 1]), tol=ROOT_TOL))
    roots.sort()
    return roots


def roots_below(level: float, params: ModelParams, count: int) -> list[float]:
    """The ``count`` smallest roots of ``f(nu) = level``, with multiplicity."""
    a = params.coupling
    floor = nu_floor(params)
    t_ceil = (count + 2) * math.pi + abs(a) ** 0.5
    for _ in range(30):
        roots = _roots_between(a, level, floor, t_ceil)
        # a root exactly at the ceiling may be a truncated double root
        if len(roots) > count and roots[count - 1] < t_ceil ** 2 - 1.0:
            return roots[:count]
        t_ceil *= 2.0
    raise RuntimeError(f"could not bracket {count} roots of f = {level}")


def solve_nu(m: int, eta: float, params: ModelParams) -> float:
    """The ``m``-th smallest eigenvalue ``nu_m(eta)`` of the reduced model."""
    if m < 1:
        raise ValueError(f"band index must be >= 1, got {m}")
    level = params.sin2theta * math.cos(eta)
    return roots_below(level, params, m)[m - 1]


def solve_nu_all(m_max: int, eta: float, params: ModelParams) -> np.ndarray:
    """``nu_1(eta) <= ... <= nu_{m_max}(eta)`` in one scan."""
    level = params.sin2theta * math.cos(eta)
    return np.array(roots_below(level, params, m_max))


def band_interval(m: int, params: ModelParams) -> BandInterval:
    """Range of ``nu_m(eta)`` over ``eta``.

    ``cos(eta)`` only enters through the level ``sin(2 theta) cos(eta)``, so the
    extreme values are attained at ``eta`` in ``{0, pi}``.
    """
    if m < 1:
        raise ValueError(f"band index must be >= 1, got {m}")
    s = abs(params.sin2theta)
    a_ = roots_below(s, params, m)[m - 1]
    b_ = roots_below(-s, params, m)[m - 1]
    lo, hi = min(a_, b_), max(a_, b_)
    return BandInterval(m=m, lower=lo, upper=hi, degenerate=(hi - lo) < DEGENERATE_TOL)


def band_intervals(m_max: int, params: ModelParams) -> list[BandInterval]:
    s = abs(params.sin2theta)
    ra = roots_below(s, params, m_max)
    rb = roots_below(-s, params, m_max)
    out = []
    for m in range(1, m_max + 1):
        lo, hi = sorted((ra[m - 1], rb[m - 1]))
        out.append(BandInterval(m=m, lower=lo, upper=hi,
                                degenerate=(hi - lo) < DEGENERATE_TOL))
    return out


# ---------------------------------------------------------------------------
# breathing sweep

@dataclass(frozen=True)
class BreathingTable:
    """Band endpoints ``c_{m-}, c_{m+}`` over a grid of inflation parameters."""

    rho: np.ndarray
    lower: np.ndarray  # (n_rho, m_max)
    upper: np.ndarray

    @property
    def m_max(self) -> int:
        return self.lower.shape[1]

    @property
    def negative(self) -> np.ndarray:
        """Bands reaching below zero (the band diving below the threshold)."""
        return self.lower < 0

    @property
    def degenerate(self) -> np.ndarray:
        return (self.upper - self.lower) < DEGENERATE_TOL

    def band(self, i: int, m: int) -> BandInterval:
        return BandInterval(m=m, lower=float(self.lower[i, m - 1]),
                            upper=float(self.upper[i, m - 1]),
                            degenerate=bool(self.degenerate[i, m - 1]))

    def rows(self) -> Iterable[tuple]:
        for i, r in enumerate(self.rho):
            for m in range(1, self.m_max + 1):
                yield (float(r), m, float(self.lower[i, m - 1]),
                       float(self.upper[i, m - 1]), int(self.degenerate[i, m - 1]))

    def write_csv(self, path, delimiter: str = ",") -> None:
        write_band_table(path, self.rows(), delimiter=delimiter)


def breathing_sweep(params_base: ModelParams, rho_grid: Sequence[float],
                    m_max: int) -> BreathingTable:
    rho = np.asarray(list(rho_grid), dtype=float)
    if rho.size == 0:
        raise ValueError("rho grid is empty")
    if not np.all(np.isfinite(rho)):
        raise ValueError("rho grid must be finite")
    if m_max < 1:
        raise ValueError("m_max must be >= 1")
    lower = np.empty((rho.size, m_max))
    upper = np.empty((rho.size, m_max))
    for i, r in enumerate(rho):
        for b in band_intervals(m_max, params_base.with_rho(float(r))):
            lower[i, b.m - 1] = b.lower
            upper[i, b.m - 1] = b.upper
    return BreathingTable(rho=rho, lower=lower, upper=upper)


def write_band_table(path, rows, delimiter: str = ",") -> None:
    """Write ``(rho, m, c_minus, c_plus, degenerate)`` rows as delimited text."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, delimiter=delimiter, lineterminator="\n")
        w.writerow(["rho", "m", "c_minus", "c_plus", "degenerate"])
        for rho, m, lo, hi, deg in rows:
            w.writerow([f"{rho:.12g}", m, f"{lo:.15g}", f"{hi:.15g}", int(deg)])


def read_band_table(path, delimiter: str = ",") -> list[tuple]:
    with open(path, newline="") as fh:
        r = csv.reader(fh, delimiter=delimiter)
        next(r)
        return [(float(a), int(b), float(c), float(d), int(e)) for a, b, c, d, e in r]


def asymptotic_band_limits(m: int, params: ModelParams, direction: str):
    """Limits of ``c_{m+-}`` as ``rho -> -inf`` or ``rho -> +inf``.

    Returns a float, except for the first band at ``+inf`` which is unbounded
    below; that case returns ``QuadraticLaw(-T**2/4)``.
    """
    if m < 1:
        raise ValueError("band index must be >= 1")
    if direction in ("-inf", "-", "minus"):
        return m * m * PI2
    if direction in ("+inf", "+", "plus"):
        if m == 1:
            return QuadraticLaw(-params.T ** 2 / 4.0)
        return (m - 1) ** 2 * PI2
    raise ValueError(f"direction must be '+inf' or '-inf', got {direction!r}")


# ---------------------------------------------------------------------------
# limiting cases and perturbative corrections

CASES = ("dirichlet", "neumann", "kirchhoff", "anti_kirchhoff")


def case_bands_exact(case: str, eta: float, k: int) -> float:
    """Exact order-zero eigenvalue for the named transmission condition.

    ``dirichlet``: ``k**2 pi**2``, ``k >= 1``; ``neumann``: ``k**2 pi**2``,
    ``k >= 0``; ``kirchhoff``: ``(eta + 2 pi k)**2``; ``anti_kirchhoff``:
    ``(eta + pi (2k+1))**2``, ``k`` any integer for the last two.
    """
    if int(k) != k:
        raise ValueError(f"k must be an integer, got {k}")
    k = int(k)
    if case == "dirichlet":
        if k < 1:
            raise ValueError("dirichlet case needs k >= 1")
        return k * k * PI2
    if case == "neumann":
        if k < 0:
            raise ValueError("neumann case needs k >= 0")
        return k * k * PI2
    if case == "kirchhoff":
        return (eta + 2.0 * math.pi * k) ** 2
    if case == "anti_kirchhoff":
        return (eta + math.pi * (2 * k + 1)) ** 2
    raise ValueError(f"unknown case {case!r}; expected one of {CASES}")


def _check_symmetric(M, tol: float = 1e-10) -> np.ndarray:
    M = np.asarray(M)
    if M.shape != (2, 2):
        raise ValueError("polarization matrix must be 2x2")
    if np.iscomplexobj(M):
        if np.max(np.abs(M.imag)) > tol:
            raise ValueError("polarization matrix must be real")
        M = M.real
    if abs(M[0, 1] - M[1, 0]) > tol * max(1.0, np.max(np.abs(M))):
        raise ValueError("polarization matrix must be symmetric")
    return M.astype(float)


def case_i_nu_tilde(M, m: int, eta: float) -> float:
    """First-order correction for the non-resonant case.

    ``nu_tilde(eta) = -2 m**2 pi**2 (M_pp + 2 cos(eta) M_pm + M_mm)``.
    """
    M = _check_symmetric(M)
    return -2.0 * m * m * PI2 * (M[0, 0] + 2.0 * math.cos(eta) * M[0, 1] + M[1, 1])


def case_i_band_endpoints(M, m: int) -> tuple[float, float]:
    lo_hi = sorted((case_i_nu_tilde(M, m, 0.0), case_i_nu_tilde(M, m, math.pi)))
    return lo_hi[0], lo_hi[1]


def first_order_shift(nu: float, coeffs: PerturbationCoeffs) -> float:
    """Shift ``2 nu (m_Omega - M_Omega)`` of a simple Kirchhoff eigenvalue."""
    return 2.0 * nu * (coeffs.m_Omega - coeffs.M_Omega)


def _check_double_point(Lambda0: float) -> int:
    q = math.sqrt(Lambda0) / math.pi
    k2 = round(q)
    if k2 % 2 != 1 or abs(q - k2) > 1e-9 * max(1.0, q):
        raise ValueError(f"Lambda0 must equal (2k+1)^2 pi^2, got {Lambda0}")
    return (k2 - 1) // 2


def gap_matrix(t: float, coeffs: PerturbationCoeffs) -> np.ndarray:
    """The 2x2 matrix whose eigenvalues split the crossing at ``eta = pi``."""
    L0, Mo, mo = coeffs.Lambda0, coeffs.M_Omega, coeffs.m_Omega
    r = math.sqrt(L0)
    return 2.0 * np.array([
        [t * r + L0 * (Mo - mo), L0 * (Mo + mo)],
        [L0 * (Mo + mo), -t * r + L0 * (Mo - mo)],
    ])


def gap_matrix_eigen(t: float, coeffs: PerturbationCoeffs) -> tuple[float, float, float]:
    """Closed-form eigenvalues ``(lambda_minus, lambda_plus)`` and their gap."""
    _check_double_point(coeffs.Lambda0)
    L0, Mo, mo = coeffs.Lambda0, coeffs.M_Omega, coeffs.m_Omega
    centre = 2.0 * L0 * (Mo - mo)
    half = 2.0 * L0 * math.sqrt(t * t / L0 + (Mo + mo) ** 2)
    return centre - half, centre + half, 2.0 * half


def below_threshold_band(mu_p: float, K_plus: float, K_minus: float,
                         eps: float) -> tuple[float, float]:
    """Leading-order endpoints of a band generated by a trapped mode ``mu_p``."""
    if not 0.0 < mu_p < PI2:
        raise ValueError(f"mu_p must lie in (0, pi^2), got {mu_p}")
    if not eps > 0:
        raise ValueError("eps must be positive")
    beta = math.sqrt(PI2 - mu_p)
    centre = mu_p / eps ** 2
    half = math.exp(-beta / eps) * 4.0 * beta * abs(K_plus * K_minus) / eps ** 2
    return centre - half, centre + half
