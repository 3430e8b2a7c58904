"""Rectangular model cavity: exact Dirichlet eigenpairs and the cavity-side DtN matrix.

The cavity occupies ``[-a, 0] x [-b/2, b/2]``; the neck enters through the
aperture ``{0} x (-eps, eps)`` centred on the right wall.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import PoleProximity
from .modes import DuctModeSet
from .specfun import principal_sqrt


@dataclass(frozen=True)
class RectCavity:
    a: float
    b: float

    def __post_init__(self) -> None:
        if self.a <= 0 or self.b <= 0:
            raise ValueError("cavity sides must be positive")

    def eigenvalue(self, m: int, n: int) -> float:
        return math.pi**2 * (m * m / self.a**2 + n * n / self.b**2)

    def scaled(self, s: float) -> "RectCavity":
        return RectCavity(self.a * s, self.b * s)


@dataclass(frozen=True)
class CavityEigenpair:
    m: int
    n: int
    lam: float
    norm: float
    degenerate: bool = False

    def __call__(self, cavity: RectCavity, x, y):
        """Eigenfunction value; (m, n) index x and y respectively."""
        x = np.asarray(x, dtype=float)
        y = np.asarray(y, dtype=float)
        return (
            self.norm
            * np.sin(self.m * np.pi * (x + cavity.a) / cavity.a)
            * np.sin(self.n * np.pi * (y + cavity.b / 2) / cavity.b)
        )


def eigen_list(cavity: RectCavity, count: int, cluster_tol: float = 1e-12) -> list[CavityEigenpair]:
    """First ``count`` eigenpairs in ascending order; tied eigenvalues are flagged."""
    if count < 1:
        raise ValueError("count must be >= 1")
    span = count + 2
    cands = sorted(
        (cavity.eigenvalue(m, n), m, n) for m in range(1, span + 1) for n in range(1, span + 1)
    )
    lams = np.array([c[0] for c in cands])
    norm = 2.0 / math.sqrt(cavity.a * cavity.b)
    out = []
    for i, (lam, m, n) in enumerate(cands[:count]):
        close = np.abs(lams - lam) <= cluster_tol * lam
        out.append(CavityEigenpair(m, n, lam, norm, degenerate=int(close.sum()) > 1))
    return out


def assumption_h(cavity: RectCavity, pair: CavityEigenpair, tol: float = 1e-9) -> tuple[bool, dict]:
    """Check simplicity of lambda_0 and non-vanishing of u_0 at the junction (0, 0)."""
    lam = cavity.eigenvalue(pair.m, pair.n)
    span = int(math.ceil(math.sqrt(lam) * max(cavity.a, cavity.b) / math.pi)) + 2
    neighbours = [
        (m, n)
        for m in range(1, span + 1)
        for n in range(1, span + 1)
        if (m, n) != (pair.m, pair.n) and abs(cavity.eigenvalue(m, n) - lam) <= tol * lam
    ]
    simple = not neighbours
    # y-factor sin(n pi (y + b/2)/b) at y = 0 equals sin(n pi / 2)
    junction_value = math.sin(pair.n * math.pi / 2)
    nonvanishing = abs(junction_value) > 0.5
    diag = {
        "lambda0": lam,
        "simple": simple,
        "degenerate_with": neighbours,
        "junction_factor": junction_value if nonvanishing else 0.0,
        "nonvanishing_at_junction": nonvanishing,
    }
    return simple and nonvanishing, diag


def default_m_count(cavity: RectCavity, rho_max: float, eps: float, k_neck: int = 0) -> int:
    """Propagating cavity modes plus an evanescent tail long enough to resolve the aperture.

    The overlaps with neck mode k peak near m = k b / (2 eps), so the tail is
    sized to reach well past the last retained neck mode.
    """
    m_prop = int(math.ceil(2 * math.sqrt(max(rho_max, 0.0)) * cavity.b / math.pi)) + 1
    resolve = max(200 * cavity.b / eps, 12 * k_neck * cavity.b / (2 * eps))
    return m_prop + max(30, int(math.ceil(resolve)))


def _interval_cos_integral(q: np.ndarray, phase: np.ndarray, half: float) -> np.ndarray:
    """int_{-half}^{half} cos(q y + phase) dy, stable as q -> 0."""
    return 2 * half * np.cos(phase) * np.sinc(q * half / np.pi)


def neck_cavity_overlaps(cavity: RectCavity, neck: DuctModeSet, m_count: int) -> np.ndarray:
    """P[k, m] = <psi_k, chi_m> over the aperture, chi_m the width-b cavity modes."""
    eps = neck.half_width
    k = neck.indices[:, None].astype(float)
    m = np.arange(1, m_count + 1)[None, :].astype(float)
    p1 = k * np.pi / (2 * eps)
    f1 = np.where(k % 2 == 1, np.pi / 2, 0.0)
    p2 = m * np.pi / cavity.b
    f2 = m * np.pi / 2
    val = 0.5 * (
        _interval_cos_integral(p1 - p2, f1 - f2, eps) - _interval_cos_integral(p1 + p2, f1 + f2, eps)
    )
    return val * math.sqrt(2.0 / cavity.b) / math.sqrt(eps)


def _gamma_cot(q: np.ndarray, a: float, pole_tol: float = 1e-12) -> np.ndarray:
    """gamma cot(gamma a) with gamma^2 = q; even in gamma and stable for |Im gamma a| large."""
    g = principal_sqrt(q)
    w = g * a
    flip = w.imag < 0
    w = np.where(flip, -w, w)
    g = np.where(flip, -g, g)
    e = np.exp(2j * w)  # |e| <= 1
    # |sin w| = |e - 1| exp(Im w) / 2
    small = (w.imag < 30) & (np.abs(e - 1) * np.exp(np.minimum(w.imag, 30)) / 2 < pole_tol)
    if np.any(small):
        raise PoleProximity("rho within pole tolerance of a cavity eigenvalue")
    return g * 1j * (e + 1) / (e - 1)


def _truncated_dtn(cavity: RectCavity, rho: complex, neck: DuctModeSet, m_count: int) -> np.ndarray:
    P = neck_cavity_overlaps(cavity, neck, m_count)
    m = np.arange(1, m_count + 1)
    q = complex(rho) - (m * np.pi / cavity.b) ** 2
    gc = _gamma_cot(q.astype(complex), cavity.a)
    return (P * gc) @ P.T


def cavity_dtn(
    cavity: RectCavity,
    rho: complex,
    neck: DuctModeSet,
    m_count: int | None = None,
    extrapolate: bool = True,
) -> np.ndarray:
    """Cavity Dirichlet-to-Neumann matrix on the aperture in the neck-mode basis.

    ``Lam[k, l] = sum_m gamma_m cot(gamma_m a) <psi_k, chi_m> <chi_m, psi_l>`` maps
    the aperture trace to the x-derivative at x = 0 (pointing out of the cavity).

    The series converges like ``1/M^2`` in the cut-off M, so by default the sums
    at M and 2M are combined by one Richardson step.
    """
    if m_count is None:
        m_count = default_m_count(cavity, complex(rho).real, neck.half_width)
    if not extrapolate:
        return _truncated_dtn(cavity, rho, neck, m_count)
    coarse = _truncated_dtn(cavity, rho, neck, m_count)
    fine = _truncated_dtn(cavity, rho, neck, 2 * m_count)
    return fine + (fine - coarse) / 3


def pole_factor(cavity: RectCavity, rho: complex, rho_max: float) -> complex:
    """prod_m sin(gamma_m a)/gamma_m over the propagating cavity modes.

    Multiplying the matching determinant by this entire function cancels the
    poles contributed by cavity eigenvalues below ``rho_max``.
    """
    m_prop = int(math.floor(math.sqrt(max(rho_max, 0.0)) * cavity.b / math.pi))
    out = 1.0 + 0j
    for m in range(1, m_prop + 1):
        q = complex(rho) - (m * math.pi / cavity.b) ** 2
        g = principal_sqrt(q)
        out *= np.sinc(g * cavity.a / np.pi) * cavity.a
    return complex(out)
