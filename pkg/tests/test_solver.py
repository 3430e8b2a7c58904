from __future__ import annotations

import cmath
import math
from dataclasses import replace

import numpy as np
import pytest

from helmlab.cavity import RectCavity
from helmlab.errors import AssumptionViolation, InsufficientData, NoRoot
from helmlab.solver import (
    ModeTruncation,
    ResonanceResult,
    ResonatorGeometry,
    SweepRecord,
    _newton,
    assemble,
    det_log,
    find_resonance,
    fit_width_law,
    reduced_matrix,
    richardson,
    root_function,
)

K16 = ModeTruncation(k_neck=16, k_levels=1)


def test_geometry_validation():
    cav = RectCavity(1.0, 1.0)
    with pytest.raises(ValueError):
        ResonatorGeometry(cav, 1.0, 0.6)
    with pytest.raises(ValueError):
        ResonatorGeometry(cav, 0.2, 0.3)
    with pytest.raises(ValueError):
        ModeTruncation(k_neck=3)
    g = ResonatorGeometry(cav, 1.0, 0.3)
    assert g.lambda0 == pytest.approx(2 * math.pi**2)
    assert g.scaled(2.0).lambda0 == pytest.approx(g.lambda0 / 4)


def test_parity_decoupling(unit_geometry):
    sys_ = assemble(17.0 - 0.01j, unit_geometry, ModeTruncation(k_neck=8, k_levels=1))
    k = np.arange(1, 9)
    kk = np.concatenate([k, k])
    cross = (kk[:, None] + kk[None, :]) % 2 == 1
    assert np.abs(sys_.matrix[cross]).max() < 1e-12 * np.abs(sys_.matrix).max()


def test_scaled_entries_bounded(unit_geometry):
    # column scaling leaves only decaying exponentials in the matrix
    sys_ = assemble(19.0, unit_geometry.with_eps(0.05), K16)
    assert np.all(np.abs(sys_.decay) <= 1.0)
    assert np.all(np.isfinite(sys_.matrix))


def test_manufactured_exterior_rows(unit_geometry):
    sys_ = assemble(17.2 - 0.002j, unit_geometry, K16)
    _, R = reduced_matrix(sys_)
    rng = np.random.default_rng(5)
    a_minus = rng.normal(size=16) + 1j * rng.normal(size=16)
    A_plus = R @ (sys_.decay * a_minus)
    x = np.concatenate([A_plus, a_minus])
    bottom = sys_.matrix[16:] @ x
    assert np.linalg.norm(bottom) <= 1e-10 * np.linalg.norm(sys_.matrix[16:]) * np.linalg.norm(x)


def test_det_conjugation_symmetry(unit_geometry):
    # Expected to fail: the exterior block uses the outgoing continuation,
    # which is complex on the real axis, so the determinant has no
    # Schwarz reflection symmetry. See test_cavity_block_conjugation_symmetry.
    rho = 17.3 - 0.4j
    d1 = det_log(rho, unit_geometry, K16)
    d2 = det_log(rho.conjugate(), unit_geometry, K16)
    assert d1.log_mag == pytest.approx(d2.log_mag, rel=1e-12)
    assert abs(cmath.exp(1j * d1.phase) - cmath.exp(-1j * d2.phase)) < 1e-10


def test_cavity_block_conjugation_symmetry(unit_geometry):
    rho = 17.3 - 0.4j
    a = assemble(rho, unit_geometry, K16)
    b = assemble(rho.conjugate(), unit_geometry, K16)
    assert np.abs(a.lam_cavity - b.lam_cavity.conj()).max() < 1e-12 * np.abs(a.lam_cavity).max()
    assert np.abs(a.lam_exterior - b.lam_exterior.conj()).max() > 1e-3 * np.abs(a.lam_exterior).max()


def test_real_part_sign_change_and_winding(unit_geometry):
    res = find_resonance(unit_geometry, K16)
    root = res.diagnostics["stage1_root"]
    f = lambda x: root_function(x, unit_geometry, K16)
    assert f(root - 1e-3).real * f(root + 1e-3).real < 0
    # argument principle on a small circle around the complex root
    centre, radius = res.rho, 0.05
    pts = centre + radius * np.exp(2j * np.pi * np.arange(97) / 96)
    vals = np.array([f(z) for z in pts])
    steps = np.angle(vals[1:] / vals[:-1])
    assert np.abs(steps).max() < 1.0
    assert steps.sum() / (2 * math.pi) == pytest.approx(1.0, abs=1e-9)


def test_newton_and_flux_agree_at_moderate_eps(resonance_03):
    d = resonance_03.diagnostics
    assert resonance_03.estimator == "Newton"
    assert resonance_03.im_sign == -1
    assert abs(resonance_03.im_log - d["flux_im_log"]) <= math.log(2)


def test_newton_and_flux_agree_at_quarter_half_width(unit_geometry):
    geom = unit_geometry.with_eps(0.125)
    res = find_resonance(geom, K16)
    assert res.estimator == "Flux"
    rho, _, _ = _newton(geom, K16, res.rho)
    assert rho.imag < 0
    assert abs(math.log(-rho.imag) - res.im_log) < math.log(1.25)


def test_flux_width_below_double_range():
    geom = ResonatorGeometry(RectCavity(1.0, 1.0), 1.0, math.pi / 200)
    res = find_resonance(geom, K16)
    assert res.estimator == "Flux" and res.im_sign == -1
    assert math.isfinite(res.im_log) and res.im_log < -200
    # the linear-scale imaginary part would be about 1e-92, far below Re rho's rounding
    assert abs(res.rho.imag) < 1e-80 * res.rho_re


def test_width_decreases_with_length(unit_geometry):
    short = find_resonance(unit_geometry, K16)
    long_ = find_resonance(replace(unit_geometry, L=1.2), K16)
    assert long_.im_log < short.im_log


def test_scaling_covariance(unit_geometry, resonance_03):
    s = 2.0
    res = find_resonance(unit_geometry.scaled(s), ModeTruncation())
    assert res.rho_re == pytest.approx(resonance_03.rho_re / s**2, rel=1e-8)
    assert res.im_log - resonance_03.im_log == pytest.approx(-2 * math.log(s), abs=1e-6)


def test_errors(unit_geometry):
    with pytest.raises(NoRoot):
        find_resonance(unit_geometry, K16, window=(5.0, 6.0))
    with pytest.raises(AssumptionViolation):
        find_resonance(replace(unit_geometry, mode=(1, 2)), K16)


def test_coefficients_reconstruct(resonance_03):
    c = resonance_03.coefficients
    assert c.residual < 1e-8
    # A_minus = a_minus e^{-theta L/eps} and A_plus = a_plus e^{+theta L/eps}
    for k in (0, 2, 4):
        ratio_minus = c.A_minus[k] / c.a_minus[k]
        ratio_plus = c.A_plus[k] / c.a_plus[k]
        assert (ratio_minus * ratio_plus).log_mag == pytest.approx(0.0, abs=1e-9)
    assert all(c.A_minus[k].is_zero or c.A_minus[k].log_mag < -30 for k in (1, 3))


def test_richardson_exact_on_model():
    K = np.array([32.0, 64.0, 128.0])
    vals = 3.0 + 2.0 * K ** (-4 / 3) - 5.0 * K**-2.0
    lim, err = richardson(vals)
    assert lim == pytest.approx(3.0, abs=1e-13)


def _synthetic(eps_values, L=1.0, c=0.7):
    out = []
    for e in eps_values:
        im_log = -math.pi * L / e + 4.5 * math.log(e) + c
        out.append(SweepRecord(e, ResonanceResult(0.0, -1, im_log, "Flux", 0.0), s_norm=-e * im_log / (math.pi * L)))
    return out


def test_fit_synthetic_width_law():
    wide = fit_width_law(_synthetic(np.linspace(0.1, 0.3, 6)), 1.0)
    narrow = fit_width_law(_synthetic(np.linspace(0.01, 0.03, 6)), 1.0)
    assert abs(narrow.normalized_slope - 1) < abs(wide.normalized_slope - 1)
    assert abs(narrow.normalized_slope - 1) < 0.05
    with pytest.raises(InsufficientData):
        fit_width_law(_synthetic([0.1, 0.2, 0.3]), 1.0)


def test_sweep_trends(default_sweep):
    records, _ = default_sweep
    assert all(r.ok for r in records)
    re = [r.result.rho_re for r in records]
    assert all(a < b for a, b in zip(re[:-1], re[1:]))  # Re rho climbs toward lambda0 as eps shrinks
    assert re[-1] < 2 * math.pi**2
    assert all(r.result.im_sign == -1 for r in records)


def a1_prefactor_trend(records):
    """Local slopes of log|A_1-| + pi L/(2 eps) in 1/eps, widest neck first, and the
    same quantity with a (4.5 + 0.2) log(eps) lower-bound profile removed."""
    eps = np.array([r.eps for r in records])
    y = np.array([r.a1_minus_log + math.pi / (2 * r.eps) for r in records])
    slopes = np.diff(y) / np.diff(1 / eps)
    return slopes, y - 4.7 * np.log(eps)


def test_sweep_prefactor_is_subexponential(default_sweep):
    records, _ = default_sweep
    slopes, shifted = a1_prefactor_trend(records)
    # an exponential residue would leave a constant slope; here it fades toward 0
    assert np.all(np.diff(np.abs(slopes)) < 0)
    assert abs(slopes[-1]) < 0.25 * math.pi / 2
    # never falls faster than the eps^(4.5 + delta) lower-bound profile
    assert np.all(np.diff(shifted) > 0)


def test_width_law_normalized_slope(default_sweep):
    records, _ = default_sweep
    fit = fit_width_law(records, 1.0)
    assert 0.8 <= fit.normalized_slope <= 1.2


def test_dropping_wide_necks_moves_slope_toward_limit(default_sweep):
    records, _ = default_sweep
    full = fit_width_law(records, 1.0)
    narrow = fit_width_law(records[2:], 1.0)
    assert abs(narrow.normalized_slope - 1) < abs(full.normalized_slope - 1)
