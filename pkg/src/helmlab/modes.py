"""Transverse Dirichlet modes of the neck and reference ducts and their overlaps.

Index convention (starting at 1): odd index -> cosine profile, even index ->
sine profile, with ``alpha_k = k pi / 2`` so that the k-th profile on a duct
of half-width ``w`` is ``cos(alpha_k y / w) / sqrt(w)`` or
``sin(alpha_k y / w) / sqrt(w)``.
"""

from __future__ import annotations

import math
from functools import lru_cache
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .specfun import principal_sqrt

# below this distance from the removable point of nu_j we use a Taylor expansion
NU_TAYLOR_RADIUS = 1e-6


def alpha(k):
    return np.asarray(k) * (np.pi / 2) if np.ndim(k) else k * math.pi / 2


def _check_index(k: int) -> None:
    if int(k) != k or k < 1:
        raise ValueError(f"mode indices start at 1, got {k!r}")


def duct_profile(k: int, half_width: float, y):
    """Normalised Dirichlet profile psi_k on (-half_width, half_width)."""
    _check_index(k)
    arg = alpha(k) * np.asarray(y, dtype=float) / half_width
    trig = np.cos(arg) if k % 2 else np.sin(arg)
    return trig / math.sqrt(half_width)


@dataclass(frozen=True)
class DuctModeSet:
    half_width: float
    count: int

    def __post_init__(self) -> None:
        if self.half_width <= 0:
            raise ValueError("half_width must be positive")
        if self.count < 1:
            raise ValueError("count must be >= 1")

    @property
    def indices(self) -> np.ndarray:
        return np.arange(1, self.count + 1)

    @property
    def alphas(self) -> np.ndarray:
        return alpha(self.indices)

    def parity(self, k: int) -> str:
        _check_index(k)
        return "cos" if k % 2 else "sin"

    def profile(self, k: int, y):
        return duct_profile(k, self.half_width, y)

    def profiles(self, y) -> np.ndarray:
        """All profiles stacked as a (count, len(y)) array."""
        y = np.asarray(y, dtype=float)
        return np.stack([self.profile(k, y) for k in self.indices])

    def gram(self, n_nodes: int = 400) -> np.ndarray:
        """Gram matrix by Gauss-Legendre quadrature on (-w, w)."""
        x, w = np.polynomial.legendre.leggauss(n_nodes)
        y = x * self.half_width
        p = self.profiles(y)
        return (p * (w * self.half_width)) @ p.T


def theta(k: int, rho: complex, eps: float) -> complex:
    """Neck propagation exponent sqrt(alpha_k^2 - eps^2 rho), principal branch."""
    _check_index(k)
    if eps <= 0:
        raise ValueError("eps must be positive")
    return principal_sqrt(alpha(k) ** 2 - eps**2 * complex(rho))


def thetas(count: int, rho: complex, eps: float) -> np.ndarray:
    a = alpha(np.arange(1, count + 1))
    return principal_sqrt(a**2 - eps**2 * complex(rho))


def beta(j: int, rho: complex, eps1: float) -> complex:
    """Reference-duct exponent alpha_j^2 / eps1^2 - rho."""
    _check_index(j)
    if eps1 <= 0:
        raise ValueError("eps1 must be positive")
    return alpha(j) ** 2 / eps1**2 - complex(rho)


def check_reference_width(eps1: float, lambda0: float, dim: int = 2) -> None:
    """Require (dim-1) pi^2 / (4 eps1^2) > lambda0 so that every beta_j has Re sqrt > 0."""
    if (dim - 1) * math.pi**2 / (4 * eps1**2) <= lambda0:
        raise ValueError(
            f"eps1={eps1} too wide: (n-1) pi^2/(4 eps1^2) must exceed lambda0={lambda0}"
        )


def _check_widths(eps: float, eps1: float) -> float:
    if not 0 < eps < eps1:
        raise ValueError(f"need 0 < eps < eps1, got eps={eps}, eps1={eps1}")
    return eps / eps1


def overlap_mu(k: int, eps: float, eps1: float) -> float:
    """mu_k = int_{-eps}^{eps} psi_k phi_1 dy in closed form."""
    _check_index(k)
    r = _check_widths(eps, eps1)
    if k % 2 == 0:
        return 0.0
    sign = -1.0 if ((k - 1) // 2) % 2 else 1.0
    return sign * 4 * k * math.sqrt(r) * math.cos(math.pi * r / 2) / (math.pi * (k * k - r * r))


def overlap_nu(j: int, eps: float, eps1: float) -> float:
    """nu_j = int_{-eps}^{eps} phi_j psi_1 dy in closed form.

    With ``d = r j - 1`` (r = eps/eps1) the closed form is
    ``4 sqrt(r) sin(d pi/2) / (pi d (d + 2))``, a 0/0 at d = 0. It is evaluated
    as ``2 sqrt(r) sinc(d/2) / (d + 2)``, which has no cancellation; inside
    ``|d| < NU_TAYLOR_RADIUS`` the two-term expansion ``sqrt(r) (1 - d/2)`` is used.
    """
    _check_index(j)
    r = _check_widths(eps, eps1)
    if j % 2 == 0:
        return 0.0
    d = r * j - 1.0
    if abs(d) < NU_TAYLOR_RADIUS:
        return math.sqrt(r) * (1.0 - d / 2)
    return float(2 * math.sqrt(r) * np.sinc(d / 2) / (d + 2))


@lru_cache(maxsize=8)
def _gauss_legendre(n: int) -> tuple[np.ndarray, np.ndarray]:
    return np.polynomial.legendre.leggauss(n)


def overlap_by_quadrature(k: int, w_k: float, j: int, w_j: float, n_nodes: int = 2000) -> float:
    """int over the narrower duct of psi_k(width w_k) * psi_j(width w_j); independent check."""
    lo = min(w_k, w_j)
    x, w = _gauss_legendre(n_nodes)
    y = x * lo
    return float(np.sum(w * lo * duct_profile(k, w_k, y) * duct_profile(j, w_j, y)))


@dataclass(frozen=True)
class MultiIndex:
    components: tuple[int, ...]

    def __post_init__(self) -> None:
        comps = tuple(int(c) for c in self.components)
        if not comps or any(c < 1 for c in comps):
            raise ValueError("multi-index components must be >= 1")
        object.__setattr__(self, "components", comps)

    @property
    def dim(self) -> int:
        """Ambient dimension n (components are n-1 transverse indices)."""
        return len(self.components) + 1

    @property
    def norm(self) -> float:
        return math.sqrt(sum(c * c for c in self.components))


def tensor_overlap(indices: MultiIndex | Sequence[int], eps: float, eps1: float, kind: str = "mu") -> float:
    """Product of one-dimensional overlaps over the transverse directions."""
    if not isinstance(indices, MultiIndex):
        indices = MultiIndex(tuple(indices))
    if not 2 <= indices.dim <= 13:
        raise ValueError("tensor overlaps are defined for 2 <= n <= 13")
    one_d = {"mu": overlap_mu, "nu": overlap_nu}[kind]
    out = 1.0
    for c in indices.components:
        out *= one_d(c, eps, eps1)
    return out
