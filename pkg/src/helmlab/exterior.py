"""Exterior half-plane Dirichlet-to-Neumann map on the neck aperture.

The exterior is ``x > L`` with a Dirichlet wall on ``x = L`` outside the
aperture ``|y| < eps``.  Fields radiate with the outgoing convention
``exp(+i sqrt(rho) r)``, so resonances sit at ``Im rho < 0``.

Working variable: ``eta = eps * xi`` (xi the Fourier dual of y) and
``kappa = eps * sqrt(rho)``.  In the neck-mode basis

    Lam[k, l] = 1 / (pi eps) * int_0^inf m(eta) h_k(eta) h_l(eta) d eta

for equal parity and 0 otherwise, with ``m(eta) = i sqrt(kappa^2 - eta^2)``
continued along the outgoing branch and
``h_k(eta) = sinc(alpha_k - eta) +/- sinc(alpha_k + eta)`` (+ for cosine
modes, - for sine modes) the cosine/sine transforms of the unit-width profiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateInput, NoConvergence
from .modes import alpha
from .specfun import LogComplex, principal_sqrt

_GL_ORDER = 24
_GL_X, _GL_W = np.polynomial.legendre.leggauss(_GL_ORDER)


def _sinc(z):
    z = np.asarray(z)
    small = np.abs(z) < 1e-6
    safe = np.where(small, 1.0, z)
    return np.where(small, 1 - z * z / 6, np.sin(safe) / safe)


def transforms(count: int, eta) -> np.ndarray:
    """h_k(eta) for k = 1..count as a (count, len(eta)) array; eta may be complex."""
    a = alpha(np.arange(1, count + 1))[:, None]
    sign = np.where(np.arange(1, count + 1) % 2 == 1, 1.0, -1.0)[:, None]
    eta = np.asarray(eta)[None, :]
    return _sinc(a - eta) + sign * _sinc(a + eta)


def transforms_real(count: int, eta: np.ndarray) -> np.ndarray:
    """Fast h_k for real eta: 2 alpha_k s_k trig(eta) / (alpha_k^2 - eta^2)."""
    k = np.arange(1, count + 1)
    a = alpha(k)
    odd = k % 2 == 1
    amp = np.where(odd, 2 * a * np.sin(a), -2 * a * np.cos(a))
    trig = np.where(odd[:, None], np.cos(eta)[None, :], np.sin(eta)[None, :])
    denom = a[:, None] ** 2 - eta[None, :] ** 2
    near = np.abs(denom) < 1e-2 * a[:, None]
    out = amp[:, None] * trig / np.where(near, 1.0, denom)
    if np.any(near):
        kk, jj = np.nonzero(near)
        exact = transforms(count, eta[jj])[kk, np.arange(kk.size)]
        out[kk, jj] = exact.real
    return out


def _panels(lo: float, hi: float, width: float):
    n = max(1, int(math.ceil((hi - lo) / width)))
    edges = np.linspace(lo, hi, n + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = (mid[:, None] + half[:, None] * _GL_X[None, :]).ravel()
    w = (half[:, None] * _GL_W[None, :]).ravel()
    return x, w


def _nodes(kappa: complex, x_cut: float, panel_width: float):
    """Contour nodes, weights (d eta included) and symbol values m(eta)."""
    kr = max(kappa.real, 1e-3)
    x0 = 2 * kr + 2.0
    # A: eta = kappa sin(phi), phi in [0, pi/2]; sqrt(kappa^2 - eta^2) = kappa cos(phi)
    phi, wp = _panels(0.0, math.pi / 2, math.pi / 8)
    eta_a = kappa * np.sin(phi)
    w_a = wp * kappa * np.cos(phi)
    m_a = 1j * kappa * np.cos(phi)
    # B: eta = kappa + (x0 - kappa) u^2, u in [0, 1]
    u, wu = _panels(0.0, 1.0, 0.125)
    span = x0 - kappa
    eta_b = kappa + span * u * u
    w_b = wu * 2 * u * span
    m_b = -u * principal_sqrt(span * (eta_b + kappa))
    # C: real axis [x0, x_cut]
    eta_c, w_c = _panels(x0, x_cut, panel_width)
    m_c = -principal_sqrt(eta_c.astype(complex) ** 2 - kappa**2)
    return (
        np.concatenate([eta_a, eta_b, eta_c]),
        np.concatenate([w_a, w_b, w_c]),
        np.concatenate([m_a, m_b, m_c]),
    )


def _tail(count: int, kappa: complex, x_cut: float) -> np.ndarray:
    """Analytic tail of the eta-integral beyond x_cut (x_cut a multiple of pi)."""
    k = np.arange(1, count + 1)
    a = alpha(k)
    odd = k % 2 == 1
    s = np.where(odd, np.sin(a), -np.cos(a))
    amp = 2 * a * s
    A = a[:, None] ** 2 + a[None, :] ** 2 - kappa**2 / 2
    tau = np.where(odd[:, None] & odd[None, :], 1.0, -1.0)
    X = x_cut
    bracket = 0.5 * (1 / (2 * X**2) + A / (4 * X**4)) + tau * 3 / (8 * X**4)
    return -np.outer(amp, amp) * bracket


def _real_count(x_cut: float, panel_width: float, kappa: complex) -> int:
    x0 = 2 * max(kappa.real, 1e-3) + 2.0
    return max(1, int(math.ceil((x_cut - x0) / panel_width))) * _GL_ORDER


@dataclass(frozen=True)
class ExteriorDtN:
    rho: complex
    eps: float
    matrix: np.ndarray
    branch: str = "outgoing"
    error_estimate: float = 0.0

    @property
    def count(self) -> int:
        return self.matrix.shape[0]


def _raw_dtn(rho: complex, eps: float, count: int, panel_width: float, x_cut: float) -> np.ndarray:
    kappa = complex(eps * principal_sqrt(complex(rho)))
    eta, w, m = _nodes(kappa, x_cut, panel_width)
    n_c = _real_count(x_cut, panel_width, kappa)
    h_cplx = transforms(count, eta[:-n_c])
    h_real = transforms_real(count, eta[-n_c:].real)
    lam = (h_cplx * (w[:-n_c] * m[:-n_c])) @ h_cplx.T
    lam = lam + (h_real * (w[-n_c:] * m[-n_c:])) @ h_real.T + _tail(count, kappa, x_cut)
    k = np.arange(1, count + 1)
    same = (k[:, None] % 2) == (k[None, :] % 2)
    return np.where(same, lam, 0.0) / (math.pi * eps)


def exterior_dtn(
    rho: complex,
    eps: float,
    count: int,
    tol: float = 1e-9,
    x_cut: float | None = None,
    check: bool = False,
) -> ExteriorDtN:
    """Outgoing exterior DtN matrix in the neck-mode basis.

    With ``check=True`` the matrix is recomputed with halved panels and a
    NoConvergence is raised if the two differ by more than ``tol`` relative.
    """
    if eps <= 0 or count < 1:
        raise ValueError("need eps > 0 and count >= 1")
    if x_cut is None:
        x_cut = math.pi * math.ceil(max(300.0, 20 * alpha(count)) / math.pi)
    lam = _raw_dtn(rho, eps, count, 2 * math.pi, x_cut)
    err = 0.0
    if check:
        fine = _raw_dtn(rho, eps, count, math.pi, x_cut)
        err = float(np.abs(fine - lam).max() / max(np.abs(fine).max(), 1e-300))
        if err > tol:
            raise NoConvergence(f"exterior DtN quadrature error {err:.2e} > {tol:.2e}")
        lam = fine
    return ExteriorDtN(complex(rho), float(eps), lam, "outgoing", err)


def radiated_flux(dtn: ExteriorDtN, g, log_scale: float = 0.0) -> tuple[float, float]:
    """Im <Lam g, g> scaled by exp(2 log_scale), returned as (sign, log-magnitude).

    ``g`` is either a complex vector or a sequence of LogComplex entries; in
    the latter case the common scale is factored out before forming the
    quadratic form so that exponentially small traces do not underflow.
    """
    if len(g) and isinstance(g[0], LogComplex):
        finite = [c.log_mag for c in g if not c.is_zero]
        if not finite:
            raise DegenerateInput("aperture trace is identically zero")
        shift = max(finite)
        vec = np.array([0j if c.is_zero else LogComplex(c.log_mag - shift, c.phase).to_complex() for c in g])
        log_scale = log_scale + shift
    else:
        vec = np.asarray(g, dtype=complex)
    if vec.shape != (dtn.count,):
        raise ValueError("trace length does not match the DtN size")
    if not np.any(vec):
        raise DegenerateInput("aperture trace is identically zero")
    p = float(np.imag(np.conj(vec) @ (dtn.matrix @ vec)))
    if p == 0.0:
        return 0.0, -math.inf
    return math.copysign(1.0, p), math.log(abs(p)) + 2 * log_scale


def exterior_field(rho: float, eps: float, coeffs, x, y, wall: float = 0.0, eta_max: float | None = None):
    """Radiated field at points (x, y), x > wall, from aperture coefficients ``coeffs``.

    Only real ``rho`` is supported.  The trace on the aperture is
    ``sum_k coeffs[k] psi_k(y)``.
    """
    rho = float(rho)
    if rho <= 0:
        raise ValueError("exterior_field needs real rho > 0")
    coeffs = np.asarray(coeffs, dtype=complex)
    count = coeffs.size
    x = np.atleast_1d(np.asarray(x, dtype=float))
    y = np.atleast_1d(np.asarray(y, dtype=float))
    d = x - wall
    if np.any(d <= 0):
        raise ValueError("points must lie strictly beyond the wall")
    kappa = eps * math.sqrt(rho)
    if eta_max is None:
        eta_max = kappa + 50.0 * eps / float(d.min()) + 4 * alpha(count)
    # propagating band, eta = kappa sin(phi)
    phi, wp = _panels(0.0, math.pi / 2, math.pi / 64)
    eta_p = kappa * np.sin(phi)
    w_p = wp * kappa * np.cos(phi)
    vert_p = 1j * kappa * np.cos(phi)
    # evanescent band, eta = kappa + u^2
    u, wu = _panels(0.0, math.sqrt(eta_max - kappa), 0.05)
    eta_e = kappa + u * u
    w_e = wu * 2 * u
    vert_p_e = -u * np.sqrt(2 * kappa + u * u)
    eta = np.concatenate([eta_p, eta_e])
    w = np.concatenate([w_p, w_e])
    vert = np.concatenate([vert_p, vert_p_e])  # i * sqrt(kappa^2 - eta^2), outgoing
    h = transforms(count, eta)
    k = np.arange(1, count + 1)
    odd = (k % 2 == 1)[:, None]
    out = np.empty(x.shape, dtype=complex)
    for i in range(x.size):
        arg = eta * y[i] / eps
        trig = np.where(odd, np.cos(arg)[None, :], np.sin(arg)[None, :])
        spec = coeffs @ (h * trig)
        out[i] = np.sum(w * spec * np.exp(vert * d[i] / eps))
    return out / (math.pi * math.sqrt(eps))
