"""Command-line front end.

Every command writes ``<command>-<hash>.csv``, ``.svg`` and ``.json`` into the
output directory, where ``<hash>`` is derived from the effective configuration,
so reruns with the same settings overwrite the same files with the same bytes.

Ranges are written ``a:b:step`` (inclusive of ``b`` up to rounding) or ``a:b``
(50 samples); a comma list or a single number is also accepted. Settings can
be read from a ``key = value`` file given with ``--config``; command-line flags
take precedence. ``WGBANDS_THREADS`` sets the number of worker threads.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import re
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import checks, floquet, plots, reduced_model as rm, scattering
from .mesh import GeometryTee

COMMANDS = ("dispersion", "breathing", "scattering", "track-H", "floquet-bands",
            "spectrum-vs-H", "gap-model", "validate")


class UsageError(ValueError):
    pass


def parse_range(text: str, default_samples: int = 50) -> np.ndarray:
    """Parse ``a:b:step``, ``a:b``, ``a,b,c`` or ``a`` into an array of floats."""
    text = str(text).strip()
    try:
        if ":" in text:
            parts = [float(p) for p in text.split(":")]
            if len(parts) == 2:
                a, b = parts
                if not b > a:
                    raise UsageError(f"empty range {text!r}")
                return np.linspace(a, b, default_samples)
            if len(parts) == 3:
                a, b, step = parts
                if not step > 0 or not b >= a:
                    raise UsageError(f"empty range {text!r}")
                n = int(math.floor((b - a) / step + 1e-9)) + 1
                return np.round(a + step * np.arange(n), 12)
            raise UsageError(f"bad range {text!r}")
        if text == "":
            raise UsageError("empty range")
        vals = np.array([float(p) for p in text.split(",") if p.strip()])
    except ValueError as exc:
        if isinstance(exc, UsageError):
            raise
        raise UsageError(f"bad range {text!r}") from exc
    if vals.size == 0:
        raise UsageError(f"empty range {text!r}")
    return vals


def read_config(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; keys use ``-`` or ``_``."""
    out = {}
    for k, line in enumerate(Path(path).read_text().splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{k}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key.replace("-", "_")] = value
    return out


@dataclass
class RunConfig:
    command: str
    ell: float = 1.6
    H: str = "2.5"
    L: float = 2.0
    eps: float = 0.1
    theta: float | None = None
    sin2theta: float | None = None
    T: float = 2.0
    rho: str = "0"
    eta: str = "0:6.283185307179586"
    m_max: int = 4
    h: float = 0.05
    order: int = 2
    samples: int = 50
    p_max: int = 6
    strip: bool = False
    m_omega: float = 0.0
    M_omega: float = 0.1
    k: int = 0
    t: str = "-3:3"
    criteria: str = "4,8,9"
    quick: bool = False
    out: str = "."
    seed: int = 7
    plot: bool = True
    extras: dict = field(default_factory=dict)

    def digest(self) -> str:
        d = asdict(self)
        for key in ("out", "plot", "extras"):
            d.pop(key)
        blob = json.dumps(d, sort_keys=True, default=str).encode()
        return hashlib.sha256(blob).hexdigest()[:10]

    def stem(self) -> Path:
        return Path(self.out) / f"{self.command}-{self.digest()}"

    def params(self) -> rm.ModelParams:
        if self.sin2theta is not None:
            return rm.ModelParams.from_sin2theta(self.sin2theta, self.T, 0.0)
        theta = math.pi / 4 if self.theta is None else self.theta
        return rm.ModelParams(theta % math.pi, self.T, 0.0)

    def geometry(self, H: float) -> GeometryTee:
        return GeometryTee(self.ell, H, self.L, with_stub=not self.strip)


def validate_config(cfg: RunConfig) -> None:
    """Reject settings that violate the preconditions of the called routines."""
    if cfg.command not in COMMANDS:
        raise UsageError(f"unknown command {cfg.command!r}")
    if cfg.order not in (1, 2):
        raise UsageError("--order must be 1 or 2")
    if not cfg.h > 0:
        raise UsageError("--h must be positive")
    if not cfg.T > 0:
        raise UsageError("--T must be positive")
    if cfg.sin2theta is not None and not -1 <= cfg.sin2theta <= 1:
        raise UsageError("--sin2theta must lie in [-1, 1]")
    if cfg.m_max < 1 or cfg.p_max < 1 or cfg.samples < 2:
        raise UsageError("--m-max and --p-max must be >= 1, --samples >= 2")
    if cfg.command in ("scattering", "track-H", "floquet-bands", "spectrum-vs-H"):
        for H in parse_range(cfg.H):
            try:
                cfg.geometry(float(H))
            except ValueError as exc:
                raise UsageError(str(exc)) from exc
    if cfg.command in ("floquet-bands", "spectrum-vs-H") and not 0 < cfg.eps <= 0.2:
        raise UsageError("--eps must lie in (0, 0.2]")


# ---------------------------------------------------------------------------
# output helpers

def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return v


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")


def _json_default(o):
    if isinstance(o, complex):
        return [o.real, o.imag]
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, (np.complexfloating,)):
        return [float(o.real), float(o.imag)]
    raise TypeError(f"cannot serialize {type(o)}")


def _cfloat(z) -> list[float]:
    return [round(float(np.real(z)), 12), round(float(np.imag(z)), 12)]


# ---------------------------------------------------------------------------
# commands

def cmd_dispersion(cfg: RunConfig) -> dict:
    eta = parse_range(cfg.eta)
    rhos = parse_range(cfg.rho)
    p = cfg.params().with_rho(float(rhos[0]))
    nus = np.array([rm.solve_nu_all(cfg.m_max, float(e), p) for e in eta]).T
    stem = cfg.stem()
    _write_csv(stem.with_suffix(".csv"), ["eta"] + [f"nu_{m}" for m in range(1, cfg.m_max + 1)],
               [[e, *nus[:, j]] for j, e in enumerate(eta)])
    bands = rm.band_intervals(cfg.m_max, p)
    summary = {"sin2theta": p.sin2theta, "T": p.T, "rho": p.rho,
               "bands": [{"m": b.m, "lower": b.lower, "upper": b.upper,
                          "degenerate": b.degenerate} for b in bands]}
    if cfg.plot:
        plots.dispersion_plot(eta, nus, stem.with_suffix(".svg"),
                              f"sin2theta={p.sin2theta:.3g}, rho={p.rho:g}")
    return summary


def cmd_breathing(cfg: RunConfig) -> dict:
    rhos = parse_range(cfg.rho)
    table = rm.breathing_sweep(cfg.params(), rhos, cfg.m_max)
    stem = cfg.stem()
    table.write_csv(stem.with_suffix(".csv"))
    neg = table.negative
    first = {}
    for m in range(1, cfg.m_max + 1):
        idx = np.flatnonzero(neg[:, m - 1])
        first[str(m)] = float(table.rho[idx[0]]) if idx.size else None
    summary = {"sin2theta": cfg.params().sin2theta, "T": cfg.T, "m_max": cfg.m_max,
               "n_rho": int(len(rhos)), "first_rho_with_negative_lower": first}
    if cfg.plot:
        plots.breathing_plot(table, stem.with_suffix(".svg"),
                             f"T={cfg.T:g}, sin2theta={cfg.params().sin2theta:.3g}")
    return summary


def cmd_scattering(cfg: RunConfig) -> dict:
    H = float(parse_range(cfg.H)[0])
    g = cfg.geometry(H)
    S = scattering.threshold_scattering_matrix(g, cfg.h, cfg.order)
    w, _ = scattering.eigen(S)
    p1, p2, mod_dev = scattering.eigenphases(S)
    n_dag = scattering.classify_X_dagger(S)
    summary = {
        "geometry": {"ell": g.ell, "H": g.H, "L": g.L, "with_stub": g.with_stub},
        "S": [[_cfloat(S.s_pp), _cfloat(S.s_pm)], [_cfloat(S.s_mp), _cfloat(S.s_mm)]],
        "unitarity_residual": S.unitarity_residual,
        "symmetry_residual": S.symmetry_residual,
        "phases": [p1, p2], "modulus_deviation": mod_dev, "dim_X_dagger": n_dag,
    }
    if n_dag:
        summary["theta"] = scattering.theta_from_S(S)
    else:
        P = scattering.polarization_matrix(S)
        summary["polarization_matrix"] = P.matrix.round(12).tolist()
        summary["polarization_imag_residual"] = P.imag_residual
    stem = cfg.stem()
    _write_csv(stem.with_suffix(".csv"), ["row", "col", "re", "im"],
               [[i, j, float(np.real(v)), float(np.imag(v))]
                for i, row in enumerate(S.matrix) for j, v in enumerate(row)])
    if cfg.plot:
        plots.scattering_plot(w, stem.with_suffix(".svg"), f"H={H:g}, ell={g.ell:g}")
    return summary


def cmd_track(cfg: RunConfig) -> dict:
    Hs = parse_range(cfg.H)
    if len(Hs) < 2:
        raise UsageError("track-H needs a range of H values")
    tr = scattering.track_over_H(cfg.ell, (Hs[0], Hs[-1]), cfg.samples, h=cfg.h,
                                 order=cfg.order, L=cfg.L)
    stem = cfg.stem()
    scattering.write_track(tr, stem.with_suffix(".csv"))
    scattering.write_crossings(tr.crossings, Path(str(stem) + "-crossings.csv"))
    if cfg.plot:
        plots.track_plot(tr, stem.with_suffix(".svg"), f"ell={cfg.ell:g}")
    return {"ell": cfg.ell, "H_range": [float(Hs[0]), float(Hs[-1])],
            "crossings": [round(c, 9) for c in tr.crossings],
            "spacings": [round(d, 9) for d in np.diff(tr.crossings).tolist()],
            "samples_after_refinement": int(len(tr.H_grid)),
            "max_unitarity_residual": float(tr.unitarity_residuals.max())}


def cmd_floquet(cfg: RunConfig) -> dict:
    H = float(parse_range(cfg.H)[0])
    d = floquet.band_diagram(cfg.geometry(H), cfg.eps, None, cfg.p_max, h=cfg.h,
                             order=cfg.order)
    stem = cfg.stem()
    d.write_csv(stem.with_suffix(".csv"))
    if cfg.plot:
        plots.band_diagram_plot(d, stem.with_suffix(".svg"), f"H={H:g}, eps={cfg.eps:g}")
    return d.summary()


def cmd_spectrum_vs_H(cfg: RunConfig) -> dict:
    Hs = parse_range(cfg.H)
    runs = floquet.spectrum_vs_H(cfg.ell, Hs, cfg.eps, cfg.p_max, L=cfg.L, h=cfg.h,
                                 order=cfg.order)
    stem = cfg.stem()
    rows = [[H, b.m, b.lower, b.upper, b.upper < d.threshold] for H, d in runs for b in d.bands]
    _write_csv(stem.with_suffix(".csv"), ["H", "p", "lower", "upper", "below_threshold"], rows)
    if cfg.plot:
        plots.spectrum_vs_H_plot(runs, stem.with_suffix(".svg"), f"eps={cfg.eps:g}")
    return {"eps": cfg.eps, "threshold": runs[0][1].threshold,
            "per_H": [{"H": H, "n_below": d.n_below,
                       "widths": [b.width for b in d.bands]} for H, d in runs]}


def cmd_gap_model(cfg: RunConfig) -> dict:
    ts = parse_range(cfg.t)
    c = rm.PerturbationCoeffs(m_Omega=cfg.m_omega, M_Omega=cfg.M_omega,
                              Lambda0=(2 * cfg.k + 1) ** 2 * math.pi ** 2)
    vals = np.array([rm.gap_matrix_eigen(float(t), c) for t in ts])
    stem = cfg.stem()
    _write_csv(stem.with_suffix(".csv"), ["t", "lambda_minus", "lambda_plus", "gap"],
               [[t, *v] for t, v in zip(ts, vals)])
    if cfg.plot:
        plots.gap_model_plot(ts, vals[:, 0], vals[:, 1], stem.with_suffix(".svg"),
                             f"m={cfg.m_omega:g}, M={cfg.M_omega:g}, k={cfg.k}")
    return {"Lambda0": c.Lambda0, "min_gap": float(vals[:, 2].min()),
            "gap_at_t0": rm.gap_matrix_eigen(0.0, c)[2]}


QUICK = {
    1: {"h": 0.05}, 2: {}, 3: {"n": 4}, 5: {"eps_list": (0.1,)},
    6: {"eps": 0.1}, 7: {"h": 0.05},
}


def cmd_validate(cfg: RunConfig) -> dict:
    wanted = sorted({int(c) for c in cfg.criteria.split(",") if c.strip()})
    bad = [c for c in wanted if c not in checks.ALL_CHECKS]
    if bad:
        raise UsageError(f"unknown criteria {bad}")
    results = []
    for c in wanted:
        kw = dict(QUICK.get(c, {})) if cfg.quick else {}
        if c == 3:
            kw["seed"] = cfg.seed
        try:
            r = checks.ALL_CHECKS[c](**kw)
        except Exception as exc:  # report and continue with the other criteria
            r = checks.CheckResult(c, f"criterion {c}", False, f"error: {exc}")
        print(r.line(), flush=True)
        results.append(r)
    stem = cfg.stem()
    _write_csv(stem.with_suffix(".csv"), ["criterion", "name", "passed", "detail"],
               [[r.number, r.name, r.passed, r.detail] for r in results])
    failed = [r for r in results if not r.passed]
    return {"results": [{"criterion": r.number, "name": r.name, "passed": r.passed,
                         "detail": r.detail} for r in results],
            "n_failed": len(failed)}


DISPATCH = {
    "dispersion": cmd_dispersion, "breathing": cmd_breathing, "scattering": cmd_scattering,
    "track-H": cmd_track, "floquet-bands": cmd_floquet, "spectrum-vs-H": cmd_spectrum_vs_H,
    "gap-model": cmd_gap_model, "validate": cmd_validate,
}


def run(cfg: RunConfig) -> int:
    """Execute one command; returns the process exit status."""
    validate_config(cfg)
    Path(cfg.out).mkdir(parents=True, exist_ok=True)
    summary = DISPATCH[cfg.command](cfg)
    summary = {"command": cfg.command, "config": {k: v for k, v in asdict(cfg).items()
                                                   if k not in ("out", "extras")},
               "result": summary}
    _write_json(cfg.stem().with_suffix(".json"), summary)
    if cfg.command == "validate":
        failed = summary["result"]["n_failed"]
        for r in summary["result"]["results"]:
            if not r["passed"]:
                print(f"validation failed: criterion {r['criterion']} ({r['name']}): "
                      f"{r['detail']}", file=sys.stderr)
        return 1 if failed else 0
    print(cfg.stem().with_suffix(".json"))
    return 0


# ---------------------------------------------------------------------------
# argument parsing

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="wgbands", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="key = value settings file")
        p.add_argument("--out", help="output directory")
        p.add_argument("--seed", type=int)
        p.add_argument("--no-plot", dest="plot", action="store_false", default=None)

    def model(p):
        p.add_argument("--theta", type=float)
        p.add_argument("--sin2theta", type=float)
        p.add_argument("--T", type=float)
        p.add_argument("--rho")
        p.add_argument("--m-max", type=int)

    def geometry(p, eps=False):
        p.add_argument("--ell", type=float)
        p.add_argument("--H")
        p.add_argument("--L", type=float)
        p.add_argument("--h", type=float)
        p.add_argument("--order", type=int)
        p.add_argument("--strip", action="store_true", default=None)
        if eps:
            p.add_argument("--eps", type=float)
            p.add_argument("--p-max", type=int)

    p = sub.add_parser("dispersion", help="reduced-model curves nu_m(eta)")
    model(p)
    p.add_argument("--eta")
    common(p)
    p = sub.add_parser("breathing", help="band endpoints against rho")
    model(p)
    common(p)
    p = sub.add_parser("scattering", help="threshold scattering matrix of one junction")
    geometry(p)
    common(p)
    p = sub.add_parser("track-H", help="eigenphase track and resonant heights")
    geometry(p)
    p.add_argument("--samples", type=int)
    common(p)
    p = sub.add_parser("floquet-bands", help="band diagram of the periodic waveguide")
    geometry(p, eps=True)
    common(p)
    p = sub.add_parser("spectrum-vs-H", help="bands for a list of stub heights")
    geometry(p, eps=True)
    common(p)
    p = sub.add_parser("gap-model", help="2x2 gap-opening model against detuning t")
    p.add_argument("--m-omega", type=float)
    p.add_argument("--M-omega", dest="M_omega", type=float)
    p.add_argument("--k", type=int)
    p.add_argument("--t")
    common(p)
    p = sub.add_parser("validate", help="run acceptance checks")
    p.add_argument("--criteria", help="comma list of criterion numbers, or 'all'")
    p.add_argument("--quick", action="store_true", default=None)
    common(p)
    return parser


_NEG_VALUE = re.compile(r"^-[\d.]")


def _join_negative_values(argv: list[str]) -> list[str]:
    """Turn ``--rho -10:10`` into ``--rho=-10:10`` so argparse keeps the value."""
    out = []
    i = 0
    while i < len(argv):
        a = argv[i]
        if a.startswith("--") and "=" not in a and i + 1 < len(argv) \
                and _NEG_VALUE.match(argv[i + 1]):
            out.append(f"{a}={argv[i + 1]}")
            i += 2
            continue
        out.append(a)
        i += 1
    return out


_FIELD_TYPES = {"ell": float, "L": float, "eps": float, "theta": float, "sin2theta": float,
                "T": float, "m_max": int, "h": float, "order": int, "samples": int,
                "p_max": int, "m_omega": float, "M_omega": float, "k": int, "seed": int,
                "strip": lambda s: str(s).lower() in ("1", "true", "yes"),
                "quick": lambda s: str(s).lower() in ("1", "true", "yes"),
                "plot": lambda s: str(s).lower() in ("1", "true", "yes")}


def config_from_args(argv=None) -> RunConfig:
    parser = build_parser()
    argv = _join_negative_values(list(sys.argv[1:] if argv is None else argv))
    ns = parser.parse_args(argv)
    values = {}
    if ns.config:
        for key, raw in read_config(ns.config).items():
            if key not in RunConfig.__dataclass_fields__ or key in ("command", "extras"):
                raise UsageError(f"unknown config key {key!r}")
            conv = _FIELD_TYPES.get(key, str)
            try:
                values[key] = conv(raw)
            except ValueError as exc:
                raise UsageError(f"bad value for {key}: {raw!r}") from exc
    for key, val in vars(ns).items():
        if key in ("config", "command") or val is None:
            continue
        values[key] = val
    if values.get("criteria") == "all":
        values["criteria"] = ",".join(str(c) for c in sorted(checks.ALL_CHECKS))
    defaults = {"track-H": {"H": "1.5:6"}, "spectrum-vs-H": {"H": "2.5,2.9,3.047,3.2,3.5",
                                                             "eps": 0.05}}
    merged = {**defaults.get(ns.command, {}), **values}
    return RunConfig(command=ns.command, **merged)


def main(argv=None) -> int:
    try:
        cfg = config_from_args(argv)
        return run(cfg)
    except UsageError as exc:
        print(f"wgbands: usage error: {exc}", file=sys.stderr)
        return 2
    except (ValueError, RuntimeError) as exc:
        print(f"wgbands: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
