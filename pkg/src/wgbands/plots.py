"""Static SVG figures for the command-line reports.

Figures are rendered with matplotlib's non-interactive backend. The SVG date
stamp is dropped and the id salt fixed, so identical data give identical files.
"""

from __future__ import annotations

import math

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

PI2 = math.pi ** 2
_STYLE = {"svg.hashsalt": "wgbands", "svg.fonttype": "none", "font.size": 9}


def _save(fig, path) -> None:
    with plt.rc_context(_STYLE):
        fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def _figure(figsize=(6.0, 4.0)):
    with plt.rc_context(_STYLE):
        return plt.subplots(figsize=figsize, layout="constrained")


def dispersion_plot(eta, nus, path, title: str = "") -> None:
    """Curves ``nu_m(eta)`` of the reduced model."""
    fig, ax = _figure()
    for m, row in enumerate(np.atleast_2d(nus), 1):
        ax.plot(eta, row, lw=1.2, label=f"m={m}")
    ax.set_xlabel(r"$\eta$")
    ax.set_ylabel(r"$\nu_m(\eta)$")
    ax.set_xlim(eta[0], eta[-1])
    if title:
        ax.set_title(title)
    ax.legend(loc="upper left", fontsize=7, ncol=2)
    _save(fig, path)


def breathing_plot(table, path, title: str = "") -> None:
    """Band endpoints against the inflation parameter, dived bands highlighted."""
    fig, ax = _figure()
    for m in range(table.m_max):
        lo, hi = table.lower[:, m], table.upper[:, m]
        dived = bool(np.any(lo < 0))
        ax.fill_between(table.rho, lo, hi, color="m" if dived else "tab:blue", alpha=0.45,
                        lw=0)
        ax.plot(table.rho, lo, color="k", lw=0.5)
        ax.plot(table.rho, hi, color="k", lw=0.5)
    ax.axhline(0.0, color="0.4", lw=0.6, ls="--")
    ax.set_xlabel(r"$\rho$")
    ax.set_ylabel(r"$\nu$")
    ax.set_xlim(table.rho[0], table.rho[-1])
    if title:
        ax.set_title(title)
    _save(fig, path)


def track_plot(track, path, title: str = "") -> None:
    """Phases of the two eigenvalues of the scattering matrix against H."""
    fig, ax = _figure()
    for b, style in zip(range(2), ("-", "--")):
        ph = np.mod(track.phases[b], 2 * np.pi)
        # break the line where the phase wraps
        ph = np.where(np.abs(np.diff(ph, prepend=ph[0])) > np.pi, np.nan, ph)
        ax.plot(track.H_grid, ph, style, lw=1.2, label=f"eigenvalue {b + 1}")
    ax.axhline(np.pi, color="0.5", lw=0.6)
    for H in track.crossings:
        ax.axvline(H, color="r", lw=0.6, ls=":")
    ax.set_xlabel("H")
    ax.set_ylabel("phase")
    ax.set_ylim(0, 2 * np.pi)
    ax.set_xlim(track.H_grid[0], track.H_grid[-1])
    ax.legend(loc="upper right", fontsize=7)
    if title:
        ax.set_title(title)
    _save(fig, path)


def scattering_plot(eigenvalues, path, title: str = "") -> None:
    """Eigenvalues of the scattering matrix on the unit circle."""
    fig, ax = _figure((4.0, 4.0))
    t = np.linspace(0, 2 * np.pi, 361)
    ax.plot(np.cos(t), np.sin(t), color="0.6", lw=0.8)
    w = np.asarray(eigenvalues)
    ax.plot(w.real, w.imag, "o", color="tab:red")
    ax.plot([-1], [0], "x", color="k")
    ax.set_aspect("equal")
    ax.set_xlim(-1.2, 1.2)
    ax.set_ylim(-1.2, 1.2)
    if title:
        ax.set_title(title)
    _save(fig, path)


def band_diagram_plot(diagram, path, title: str = "") -> None:
    """Dispersion curves with the threshold and the below-threshold curves marked."""
    fig, ax = _figure()
    for p in range(diagram.p_max):
        below = diagram.bands[p].upper < diagram.threshold
        ax.plot(diagram.eta_grid, diagram.curves[p], color="m" if below else "tab:blue",
                lw=1.2)
    ax.axhline(diagram.threshold, color="k", lw=0.6, ls="--")
    for a, b in diagram.gaps:
        ax.axhspan(a, b, color="0.9", lw=0)
    ax.set_xlabel(r"$\eta$")
    ax.set_ylabel(r"$\Lambda_p(\eta)$")
    ax.set_xlim(0, 2 * np.pi)
    if title:
        ax.set_title(title)
    _save(fig, path)


def spectrum_vs_H_plot(runs, path, title: str = "") -> None:
    """Band intervals drawn as vertical bars for each stub height."""
    fig, ax = _figure()
    Hs = [H for H, _ in runs]
    dx = 0.3 * (min(np.diff(Hs)) if len(Hs) > 1 else 1.0)
    for H, d in runs:
        for b in d.bands:
            color = "m" if b.upper < d.threshold else "tab:blue"
            ax.fill_between([H - dx / 2, H + dx / 2], b.lower, max(b.upper, b.lower + 1e-9),
                            color=color, lw=0.8, edgecolor=color)
    thr = runs[0][1].threshold
    ax.axhline(thr, color="k", lw=0.6, ls="--")
    ax.set_xlabel("H")
    ax.set_ylabel(r"$\Lambda$")
    if title:
        ax.set_title(title)
    _save(fig, path)


def gap_model_plot(t, lam_minus, lam_plus, path, title: str = "") -> None:
    fig, ax = _figure()
    ax.plot(t, lam_minus, lw=1.2, label=r"$\Lambda'_-$")
    ax.plot(t, lam_plus, lw=1.2, label=r"$\Lambda'_+$")
    ax.set_xlabel("t")
    ax.set_ylabel("eigenvalue")
    ax.legend(fontsize=7)
    if title:
        ax.set_title(title)
    _save(fig, path)
