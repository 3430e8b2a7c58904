from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from helmlab.errors import DegenerateInput
from helmlab.exterior import exterior_dtn, exterior_field, radiated_flux, transforms, transforms_real
from helmlab.specfun import LogComplex


def _h(k, eta):
    a = k * math.pi / 2
    s = np.sinc((a - eta) / math.pi)
    t = np.sinc((a + eta) / math.pi)
    return s + t if k % 2 else s - t


def _entry_by_quad(k, l, rho, eps):
    """Independent real-axis evaluation for real rho (symbol branch point at kappa)."""
    kap = eps * math.sqrt(rho)
    f = lambda e: _h(k, e) * _h(l, e)
    prop, _ = quad(lambda e: math.sqrt(kap * kap - e * e) * f(e), 0, kap, limit=200, epsabs=1e-14)
    x_end = 4000.0
    pts = np.arange(kap, x_end, 20.0)
    ev = 0.0
    for lo, hi in zip(pts, np.append(pts[1:], x_end)):
        ev += quad(lambda e: math.sqrt(e * e - kap * kap) * f(e), lo, hi, limit=200, epsabs=1e-15)[0]
    # h_k h_l ~ amp_k amp_l trig^2 / eta^4 beyond the cut; trig^2 averages 1/2
    a_k, a_l = k * math.pi / 2, l * math.pi / 2
    amp = lambda k, a: 2 * a * (math.sin(a) if k % 2 else -math.cos(a))
    ev += amp(k, a_k) * amp(l, a_l) / 2 / (2 * x_end**2)
    return (1j * prop - ev) / (math.pi * eps)


@pytest.mark.parametrize("rho,eps", [(17.0, 0.3), (19.3, 0.125)])
def test_entries_against_direct_quadrature(rho, eps):
    lam = exterior_dtn(rho, eps, 5).matrix
    for k, l in ((1, 1), (1, 3), (2, 2), (3, 5), (4, 2)):
        ref = _entry_by_quad(k, l, rho, eps)
        assert abs(lam[k - 1, l - 1] - ref) < 1e-8 * max(1.0, abs(ref))


def test_transform_fast_path_matches_definition():
    eta = np.linspace(0.0, 200.0, 4001)
    assert np.abs(transforms_real(20, eta) - transforms(20, eta).real).max() < 1e-12


@pytest.mark.parametrize("rho", [17.0, 18.5 - 0.3j, 19.7 - 1e-6j])
def test_symmetry(rho):
    lam = exterior_dtn(rho, 0.25, 24).matrix
    assert np.abs(lam - lam.T).max() < 1e-10 * np.abs(lam).max()


@settings(max_examples=30, deadline=None)
@given(
    st.floats(5.0, 40.0),
    st.lists(st.floats(-1, 1), min_size=16, max_size=16),
    st.lists(st.floats(-1, 1), min_size=16, max_size=16),
)
def test_radiation_positivity(rho, re, im):
    g = np.array(re) + 1j * np.array(im)
    if not np.any(g):
        return
    dtn = exterior_dtn(rho, 0.3, 16)
    p = np.imag(np.conj(g) @ dtn.matrix @ g)
    assert p >= -1e-12 * np.abs(dtn.matrix).max() * np.vdot(g, g).real
    sign, log_p = radiated_flux(dtn, g)
    if p > 0:
        assert sign == 1 and log_p == pytest.approx(math.log(p), rel=1e-10)


def test_branch_continuity_from_below():
    rho = 18.0
    on = exterior_dtn(rho, 0.3, 12).matrix
    below = exterior_dtn(rho - 1e-9j, 0.3, 12).matrix
    assert np.abs(on - below).max() < 1e-8 * np.abs(on).max()


def test_stable_under_count_and_panel_doubling():
    rho = 17.1 - 1e-3j
    small = exterior_dtn(rho, 0.3, 16)
    big = exterior_dtn(rho, 0.3, 32, check=True)
    assert big.error_estimate < 1e-9
    assert np.abs(big.matrix[:16, :16] - small.matrix).max() < 1e-8 * np.abs(small.matrix).max()


def test_flux_accepts_log_scaled_trace():
    dtn = exterior_dtn(17.0, 0.3, 6)
    g = np.array([1.0, 0.2j, -0.3, 0.0, 0.1, 0.05j])
    s1, l1 = radiated_flux(dtn, g)
    tiny = [LogComplex.from_complex(c) * LogComplex(-2000.0) for c in g]
    s2, l2 = radiated_flux(dtn, tiny)
    assert s1 == s2 and l2 == pytest.approx(l1 - 4000.0, rel=1e-13)
    with pytest.raises(DegenerateInput):
        radiated_flux(dtn, np.zeros(6))
    with pytest.raises(DegenerateInput):
        radiated_flux(dtn, [LogComplex(-math.inf)] * 6)


def test_exterior_field_solves_helmholtz():
    rho, eps = 17.0, 0.3
    coeffs = np.array([1.0, 0.3, -0.2])
    h = 2e-3
    x0, y0 = 1.0, 0.4
    pts_x = np.array([x0, x0 + h, x0 - h, x0, x0])
    pts_y = np.array([y0, y0, y0, y0 + h, y0 - h])
    u = exterior_field(rho, eps, coeffs, pts_x, pts_y)
    lap = (u[1] + u[2] + u[3] + u[4] - 4 * u[0]) / h**2
    assert abs(lap + rho * u[0]) < 1e-4 * abs(rho * u[0])


def test_exterior_field_outgoing_decay():
    rho, eps = 17.0, 0.3
    coeffs = np.array([1.0])
    r = np.array([10.0, 40.0])
    u = exterior_field(rho, eps, coeffs, r, np.zeros(2))
    # cylindrical spreading: |u| sqrt(r) roughly constant on the axis
    ratio = abs(u[1]) * math.sqrt(40) / (abs(u[0]) * math.sqrt(10))
    assert 0.8 < ratio < 1.25
