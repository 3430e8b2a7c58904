from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helmlab.cavity import (
    CavityEigenpair,
    RectCavity,
    assumption_h,
    cavity_dtn,
    default_m_count,
    eigen_list,
    neck_cavity_overlaps,
    pole_factor,
)
from helmlab.errors import PoleProximity
from helmlab.modes import DuctModeSet

UNIT = RectCavity(1.0, 1.0)
LAM0 = 2 * math.pi**2


def test_eigen_list_sorted_and_degenerate_flags():
    pairs = eigen_list(UNIT, 6)
    lams = [p.lam for p in pairs]
    assert lams == sorted(lams)
    assert pairs[0].lam == pytest.approx(LAM0)
    assert not pairs[0].degenerate
    assert pairs[1].degenerate and pairs[2].degenerate  # (1,2) and (2,1) on the square


def test_eigenfunction_normalised():
    x, w = np.polynomial.legendre.leggauss(60)
    cav = RectCavity(1.3, 0.7)
    pair = CavityEigenpair(2, 3, cav.eigenvalue(2, 3), 2 / math.sqrt(cav.a * cav.b))
    X = -cav.a / 2 + cav.a / 2 * x
    Y = cav.b / 2 * x
    u = pair(cav, X[:, None], Y[None, :])
    assert np.sum(w[:, None] * w[None, :] * u**2) * cav.a * cav.b / 4 == pytest.approx(1.0, rel=1e-12)


def test_assumption_h():
    ok, diag = assumption_h(UNIT, eigen_list(UNIT, 1)[0])
    assert ok and diag["simple"] and diag["nonvanishing_at_junction"]
    # (1,2) is degenerate on the square and vanishes on the axis y = 0
    bad = CavityEigenpair(1, 2, UNIT.eigenvalue(1, 2), 2.0)
    ok, diag = assumption_h(UNIT, bad)
    assert not ok and not diag["simple"] and not diag["nonvanishing_at_junction"]


@settings(max_examples=40, deadline=None)
@given(st.floats(0.3, 3.0), st.floats(0.3, 3.0), st.floats(0.2, 5.0), st.integers(1, 4), st.integers(1, 4))
def test_assumption_h_scale_invariant(a, b, s, m, n):
    cav = RectCavity(a, b)
    pair = CavityEigenpair(m, n, cav.eigenvalue(m, n), 1.0)
    scaled = cav.scaled(s)
    spair = CavityEigenpair(m, n, scaled.eigenvalue(m, n), 1.0)
    assert assumption_h(cav, pair)[0] == assumption_h(scaled, spair)[0]


def test_overlaps_against_quadrature():
    eps = 0.3
    neck = DuctModeSet(eps, 8)
    P = neck_cavity_overlaps(UNIT, neck, 40)
    x, w = np.polynomial.legendre.leggauss(400)
    y = eps * x
    for k in (1, 2, 5, 8):
        for m in (1, 2, 7, 40):
            chi = math.sqrt(2.0) * np.sin(m * np.pi * (y + 0.5))
            ref = np.sum(w * eps * neck.profile(k, y) * chi)
            assert P[k - 1, m - 1] == pytest.approx(ref, abs=1e-13)


def test_dtn_symmetric_and_parity_decoupled():
    neck = DuctModeSet(0.3, 12)
    lam = cavity_dtn(UNIT, 0.87 * LAM0, neck)
    assert np.abs(lam - lam.T).max() < 1e-12 * np.abs(lam).max()
    k = np.arange(1, 13)
    cross = (k[:, None] + k[None, :]) % 2 == 1
    assert np.abs(lam[cross]).max() < 1e-12 * np.abs(lam).max()


def test_dtn_converges_in_m_count():
    eps = 0.3
    neck = DuctModeSet(eps, 32)
    m = default_m_count(UNIT, 2 * LAM0, eps, 32)
    lo = cavity_dtn(UNIT, 0.87 * LAM0, neck, m)
    hi = cavity_dtn(UNIT, 0.87 * LAM0, neck, 2 * m)
    assert np.linalg.norm(hi - lo) / np.linalg.norm(hi) < 1e-6


@pytest.mark.parametrize("mn", [(1, 1), (2, 1), (1, 3)])
def test_simple_pole_with_positive_residue(mn):
    neck = DuctModeSet(0.2, 4)
    lam = UNIT.eigenvalue(*mn)
    res = []
    for d in (1e-5, -1e-5, 2e-5, -2e-5):
        res.append(d * cavity_dtn(UNIT, lam + d, neck, 400)[0, 0].real)
    res = np.array(res)
    assert np.all(res > 0)
    # Laurent fit: the residue is the same from both sides to O(d)
    assert np.ptp(res) < 1e-3 * abs(res).max()


def test_pole_proximity_raises():
    with pytest.raises(PoleProximity):
        cavity_dtn(UNIT, LAM0, DuctModeSet(0.2, 4), 100)


def test_pole_factor_cancels_pole():
    neck = DuctModeSet(0.2, 4)
    vals = [pole_factor(UNIT, LAM0 + d, 2 * LAM0) * cavity_dtn(UNIT, LAM0 + d, neck, 400)[0, 0] for d in (1e-4, -1e-4)]
    assert abs(vals[0] - vals[1]) < 1e-2 * abs(vals[0])
