from __future__ import annotations

import math

import numpy as np
import pytest

from wgbands import floquet, reduced_model as rm
from wgbands.mesh import GeometryTee

PI2 = math.pi ** 2
STRIP = GeometryTee(with_stub=False, L=1.0)


def test_default_eta_grid():
    g = floquet.default_eta_grid(10)
    assert g[0] == 0.0 and g[-1] == pytest.approx(2 * math.pi)
    assert np.any(g == math.pi)
    assert np.all(np.diff(g) > 0)


def test_extract_bands_and_gaps():
    curves = np.array([[1.0, 2.0, 1.5], [3.0, 3.5, 4.0], [3.9, 5.0, 4.5]])
    bands, gaps = floquet.extract_bands(curves)
    assert [(b.lower, b.upper) for b in bands] == [(1.0, 2.0), (3.0, 4.0), (3.9, 5.0)]
    assert gaps == [(2.0, 3.0)]
    # a tiny split is merged away
    bands, gaps = floquet.extract_bands(np.array([[1.0, 2.0], [2.0 + 1e-9, 3.0]]),
                                        merge_tol=1e-6)
    assert gaps == []


def test_strip_cell_matches_free_dispersion():
    eps = 0.2
    eta = np.array([0.0, 0.7, math.pi, 2 * math.pi - 0.7])
    d = floquet.band_diagram(STRIP, eps, eta, p_max=3, h=0.1)
    for j, e in enumerate(d.eta_grid):
        exact = np.sort([PI2 / eps ** 2 + (e + 2 * math.pi * k) ** 2 for k in range(-3, 4)])[:3]
        assert np.allclose(d.curves[:, j], exact, rtol=1e-4)
    # Lambda(eta) = Lambda(2 pi - eta)
    assert np.allclose(d.curves[:, 1], d.curves[:, 3], rtol=1e-12)
    assert d.threshold == pytest.approx(PI2 / eps ** 2)
    assert d.n_below == 0


def test_symmetry_shortcut_agrees_with_full_solve():
    eta = np.array([0.4, 2 * math.pi - 0.4, 2.0])
    a = floquet.band_diagram(STRIP, 0.2, eta, p_max=2, h=0.15, use_symmetry=True)
    b = floquet.band_diagram(STRIP, 0.2, eta, p_max=2, h=0.15, use_symmetry=False)
    assert np.allclose(a.curves, b.curves, rtol=1e-9)


def test_band_diagram_validation():
    with pytest.raises(ValueError):
        floquet.band_diagram(STRIP, 0.5)
    with pytest.raises(ValueError):
        floquet.band_diagram(STRIP, 0.1, eta_grid=[-1.0])
    with pytest.raises(ValueError):
        floquet.band_diagram(STRIP, 0.1, p_max=0)


@pytest.fixture(scope="module")
def tee_diagram():
    eta = np.linspace(0, math.pi, 9)
    return floquet.band_diagram(GeometryTee(1.6, 2.5, 2.0), 0.2, eta, p_max=4, h=0.1)


def test_tee_has_two_bands_below_threshold(tee_diagram):
    d = tee_diagram
    assert d.n_below == 2
    for b in d.below():
        assert b.width / b.upper < 1e-3
    assert len(d.above()) == 2
    assert len(d.gaps) >= 2


def test_diagram_export(tmp_path, tee_diagram):
    tee_diagram.write_csv(tmp_path / "d.csv")
    tee_diagram.write_json(tmp_path / "d.json")
    lines = (tmp_path / "d.csv").read_text().splitlines()
    assert lines[0] == "eta,Lambda_1,Lambda_2,Lambda_3,Lambda_4"
    assert len(lines) == 10
    s = tee_diagram.summary()
    assert s["bands"][0]["below_threshold"] is True


def test_compare_with_model(tee_diagram):
    model = rm.band_intervals(2, rm.ModelParams.from_sin2theta(0.0, 1.0))
    rep = floquet.compare_with_model(tee_diagram, model)
    assert [d.p for d in rep.deviations] == [3, 4]
    assert rep.count_mismatch == 0
    assert rep.max_normalized == pytest.approx(rep.max_deviation / 0.2)
    rep2 = floquet.compare_with_model(tee_diagram, rm.band_intervals(4, rm.ModelParams(0.0, 1.0)))
    assert rep2.count_mismatch == 2


def test_trapped_modes():
    t = floquet.trapped_modes(GeometryTee(1.6, 2.5, 2.0), 0.1, 2)
    assert t.N_bullet == 2
    assert t.mus == pytest.approx([4.5906, 7.4314], abs=5e-3)
    beta = np.sqrt(PI2 - t.mus)
    assert np.allclose(t.fitted_betas, beta[:, None], rtol=1e-3)
    # mirror-symmetric junction: |K_+| = |K_-|
    assert np.allclose(np.abs(t.K_coeffs[:, 0]), np.abs(t.K_coeffs[:, 1]), rtol=1e-3)
    with pytest.raises(ValueError):
        floquet.trapped_modes(GeometryTee(1.6, 2.5, 2.0), 0.1, 2, L_trap=2.0)


def test_below_threshold_band_prediction_is_flat():
    lo, hi = rm.below_threshold_band(4.5906, -1.225, -1.225, 0.1)
    assert (hi - lo) / hi < 1e-4
