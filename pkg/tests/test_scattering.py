from __future__ import annotations

import cmath
import math

import numpy as np
import pytest

from wgbands import scattering as sc
from wgbands.mesh import GeometryTee

TEE = GeometryTee(1.6, 2.5, 2.0)
STRIP = GeometryTee(with_stub=False, L=2.0)


@pytest.fixture(scope="module")
def tee_solution():
    return sc.scattering_solution(TEE, 0.05, 2)


def _unitary_symmetric(phi1, phi2, theta):
    """``S = R diag(e^{i phi}) R^T`` with a rotation by ``theta``."""
    R = np.array([[math.cos(theta), -math.sin(theta)], [math.sin(theta), math.cos(theta)]])
    return R @ np.diag([cmath.exp(1j * phi1), cmath.exp(1j * phi2)]) @ R.T


def test_strip_is_pure_transmission():
    S = sc.threshold_scattering_matrix(STRIP, 0.05, 2).matrix
    assert np.max(np.abs(S - np.array([[0, -1], [-1, 0]]))) <= 5e-3


def test_tee_matrix_is_unitary_symmetric_and_mirror_symmetric(tee_solution):
    S = tee_solution.S
    tol = sc.default_tol_S(0.05, 2.0)
    assert S.unitarity_residual <= tol
    assert S.symmetry_residual <= tol
    assert S.mirror_residual <= tol


def test_half_domain_identities(tee_solution):
    r = sc.half_domain_reflections(TEE, 0.05, 2)
    S = tee_solution.S
    assert abs(S.s_pp - r.reflection) <= 2 * sc.default_tol_S(0.05, 2.0)
    assert abs(S.s_pm - r.transmission) <= 2 * sc.default_tol_S(0.05, 2.0)
    assert abs(abs(r.r_D) - 1) < 1e-3 and abs(abs(r.r_N) - 1) < 1e-3
    with pytest.raises(ValueError):
        sc.half_domain_reflections(STRIP, 0.05, 2)


def test_polarization_matrix_is_real_symmetric(tee_solution):
    P = sc.polarization_matrix(tee_solution.S)
    assert P.imag_residual <= 10 * sc.default_tol_S(0.05, 2.0)
    assert P.asym_residual <= 1e-3
    assert P.matrix[0, 0] == pytest.approx(P.matrix[1, 1], abs=1e-3)


def test_spectral_helpers_on_synthetic_matrices():
    S = _unitary_symmetric(math.pi, 1.0, 0.3)
    assert sc.classify_X_dagger(S) == 1
    assert sc.theta_from_S(S) == pytest.approx(0.3, abs=1e-12)
    p1, p2, dev = sc.eigenphases(S)
    assert (p1, p2) == pytest.approx((1.0, math.pi))
    assert dev < 1e-14
    with pytest.raises(sc.ThresholdResonanceError):
        sc.polarization_matrix(S)
    S2 = _unitary_symmetric(0.5, 2.0, 1.1)
    assert sc.classify_X_dagger(S2) == 0
    with pytest.raises(sc.ThresholdResonanceError):
        sc.theta_from_S(S2)
    P = sc.polarization_matrix(S2)
    # Cayley transform of e^{i phi} is tan(phi/2)
    ev = np.sort(np.linalg.eigvalsh(P.matrix))
    assert ev == pytest.approx(np.sort([math.tan(0.25), math.tan(1.0)]), rel=1e-12)
    assert sc.classify_X_dagger(-np.eye(2)) == 2


def test_from_array_residuals():
    S = sc.ThresholdScatteringMatrix.from_array([[0, 1.01], [1, 0]])
    assert S.symmetry_residual == pytest.approx(0.01)
    assert S.unitarity_residual > 0.01


def test_default_tolerance():
    assert sc.default_tol_S(0.05, 2.0) == 5e-3
    assert sc.default_tol_S(0.02, 3.0) == 5e-4
    assert sc.default_tol_S(0.02, 2.0) == 5e-3


def test_accuracy_error_on_coarse_mesh():
    with pytest.raises(sc.ScatteringAccuracyError):
        sc.threshold_scattering_matrix(TEE, 0.5, 1, tol_S=1e-8)


def test_wrap_range():
    a = sc._wrap(np.array([-4.0, -math.pi, 0.0, math.pi, 4.0]))
    assert np.all(a > -math.pi - 1e-15) and np.all(a <= math.pi + 1e-15)
    assert a[3] == pytest.approx(math.pi)


def test_match_follows_prediction():
    w = np.exp(1j * np.array([2.0, 0.5]))
    V = np.eye(2, dtype=complex)
    w2, V2, amb = sc._match(np.array([0.5, 2.0]), V, w, V)
    assert np.angle(w2) == pytest.approx([0.5, 2.0])
    assert not amb


def test_track_finds_resonance_near_3():
    tr = sc.track_over_H(1.6, (2.8, 3.3), 6, h=0.1)
    assert len(tr.crossings) == 1
    assert tr.crossings[0] == pytest.approx(3.047, abs=0.03)
    assert tr.max_jump() < math.pi / 2
    # one eigenvalue turns counter-clockwise at a visible rate
    rates = np.diff(tr.phases, axis=1) / np.diff(tr.H_grid)
    assert rates.max(axis=1).max() > 0.1


def test_track_rejects_bad_range():
    with pytest.raises(ValueError):
        sc.track_over_H(1.6, (3.0, 2.0), 5, h=0.1)


def test_rotation_rate_matches_lid_integral():
    rr = sc.rotation_rate_check(TEE, 1e-3, 0.05, 2)
    assert rr.numeric_rate > 0
    assert rr.relative_gap < 0.02
    with pytest.raises(ValueError):
        sc.rotation_rate_check(STRIP)


def test_track_files(tmp_path):
    tr = sc.EigenphaseTrack(np.array([1.0, 2.0]), np.array([[0.1, 0.2], [3.0, 3.5]]),
                            [1.5], np.array([1e-8, 2e-8]))
    sc.write_track(tr, tmp_path / "t.csv")
    sc.write_crossings(tr.crossings, tmp_path / "c.csv")
    lines = (tmp_path / "t.csv").read_text().splitlines()
    assert lines[0] == "H,phase1,phase2,unitarity_residual"
    assert lines[1].startswith("1,0.1,3,")
    assert (tmp_path / "c.csv").read_text().splitlines()[1] == "1,1.500000000"


@pytest.mark.slow
def test_wider_stub_resonates_more_often():
    # over [1.5, 6] both widths give four crossings; the spacing and a longer range
    # separate them
    narrow = sc.track_over_H(1.6, (1.5, 10.0), 60, h=0.05)
    wide = sc.track_over_H(1.9, (1.5, 10.0), 60, h=0.05)
    assert len(wide.crossings) > len(narrow.crossings)
    assert np.mean(np.diff(wide.crossings)) < np.mean(np.diff(narrow.crossings))
