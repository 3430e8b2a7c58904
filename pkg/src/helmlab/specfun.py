"""Complex special functions and quadrature used throughout helmlab.

The outgoing Hankel functions are evaluated in two regimes: the ascending
series for small arguments and a direct numerical evaluation of the
Sommerfeld-type contour integral

    H_k(z) = 1/(i pi) * int_{-inf}^{+inf + i pi} exp(z sinh t - k t) dt

otherwise. The contour version runs entirely in log scale so that very large
orders (where |H_k| overflows a double) stay representable.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.special import sici

from .errors import ContourFailure, LossOfPrecision, NoConvergence

EULER_GAMMA = 0.5772156649015329
# exp(709.78) is the largest finite double
OVERFLOW_LOG = 709.0
_EPS = np.finfo(float).eps


def wrap_phase(phase: float) -> float:
    """Wrap an angle to the half-open interval (-pi, pi]."""
    if not math.isfinite(phase):
        raise ValueError(f"non-finite phase {phase!r}")
    wrapped = phase - 2.0 * math.pi * math.ceil((phase - math.pi) / (2.0 * math.pi))
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True)
class LogComplex:
    """A complex number stored as ``exp(log_mag) * exp(i * phase)``.

    ``log_mag = -inf`` encodes zero. Products and quotients never touch the
    linear scale, so values like ``exp(-1e4)`` survive intact.
    """

    log_mag: float
    phase: float = 0.0

    def __post_init__(self) -> None:
        if math.isnan(self.log_mag) or self.log_mag == math.inf:
            raise ValueError(f"invalid log magnitude {self.log_mag!r}")
        object.__setattr__(self, "phase", wrap_phase(float(self.phase)))

    @classmethod
    def from_complex(cls, z: complex) -> "LogComplex":
        z = complex(z)
        if z == 0:
            return cls(-math.inf, 0.0)
        if not cmath.isfinite(z):
            raise ValueError(f"cannot take log of {z!r}")
        return cls(math.log(abs(z)), cmath.phase(z))

    @classmethod
    def exp(cls, w: complex) -> "LogComplex":
        """Represent ``exp(w)`` without evaluating it."""
        w = complex(w)
        return cls(w.real, w.imag)

    @property
    def is_zero(self) -> bool:
        return self.log_mag == -math.inf

    def to_complex(self) -> complex:
        if self.log_mag > OVERFLOW_LOG:
            raise OverflowError(f"log magnitude {self.log_mag:.3f} exceeds double range")
        if self.is_zero:
            return 0j
        return cmath.rect(math.exp(self.log_mag), self.phase)

    def __mul__(self, other: "LogComplex | complex | float") -> "LogComplex":
        if not isinstance(other, LogComplex):
            other = LogComplex.from_complex(other)
        return LogComplex(self.log_mag + other.log_mag, self.phase + other.phase)

    __rmul__ = __mul__

    def __truediv__(self, other: "LogComplex | complex | float") -> "LogComplex":
        if not isinstance(other, LogComplex):
            other = LogComplex.from_complex(other)
        if other.is_zero:
            raise ZeroDivisionError("LogComplex division by zero")
        return LogComplex(self.log_mag - other.log_mag, self.phase - other.phase)

    def __pow__(self, n: int) -> "LogComplex":
        return LogComplex(self.log_mag * n, self.phase * n)

    def __add__(self, other: "LogComplex") -> "LogComplex":
        if self.is_zero:
            return other
        if other.is_zero:
            return self
        big, small = (self, other) if self.log_mag >= other.log_mag else (other, self)
        rel = cmath.rect(math.exp(small.log_mag - big.log_mag), small.phase - big.phase)
        total = 1.0 + rel
        if total == 0:
            return LogComplex(-math.inf)
        return LogComplex(big.log_mag + math.log(abs(total)), big.phase + cmath.phase(total))

    def conj(self) -> "LogComplex":
        return LogComplex(self.log_mag, -self.phase)

    def __repr__(self) -> str:
        return f"LogComplex(log_mag={self.log_mag:.12g}, phase={self.phase:.12g})"


def principal_sqrt(z):
    """Principal square root: ``Re w >= 0``, and ``Im w >= 0`` on the cut.

    Accepts scalars or numpy arrays. A negative real input with a signed
    ``-0.0`` imaginary part is mapped to the upper lip of the cut.
    """
    if np.ndim(z) == 0:
        z = complex(z)
        if z.imag == 0.0:
            z = complex(z.real, 0.0)
        return cmath.sqrt(z)
    z = np.asarray(z, dtype=complex)
    z = np.where(z.imag == 0.0, z.real + 0j, z)
    return np.sqrt(z)


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerances and budgets for :func:`integrate`.

    ``semi_infinite_decay_hint`` > 0 declares an exponential decay rate and
    fixes the truncation point of an infinite tail; 0 declares algebraic
    decay, in which case partial integrals over growing cut-offs are
    extrapolated in the reciprocal cut-off. ``period`` (if given) aligns
    panels and cut-offs with the integrand's oscillation period.
    """

    abs_tol: float = 1e-12
    rel_tol: float = 1e-12
    max_subdivisions: int = 2000
    semi_infinite_decay_hint: float = 0.0
    period: float | None = None

    def __post_init__(self) -> None:
        if self.abs_tol <= 0 or self.rel_tol <= 0:
            raise ValueError("quadrature tolerances must be positive")
        if self.max_subdivisions < 1:
            raise ValueError("max_subdivisions must be >= 1")
        if self.semi_infinite_decay_hint < 0:
            raise ValueError("decay hint must be non-negative")
        if self.period is not None and self.period <= 0:
            raise ValueError("period must be positive")


_TS_TMAX = 3.15
_TS_MAX_LEVEL = 7


def _ts_rule(level: int) -> tuple[np.ndarray, np.ndarray]:
    """Tanh-sinh abscissae as distances from the right endpoint of [-1, 1].

    Returns (t >= 0 offsets ``d = 1 - x``, weights) for the nodes of the
    given level that are new relative to the previous level (level 0 holds
    all nodes with step 1).
    """
    h = 2.0 ** (-level)
    if level == 0:
        t = np.arange(0.0, _TS_TMAX + 1e-12, h)
    else:
        t = np.arange(h, _TS_TMAX + 1e-12, 2 * h)
    u = 0.5 * np.pi * np.sinh(t)
    d = 2.0 / (np.exp(2.0 * u) + 1.0)
    w = 0.5 * np.pi * np.cosh(t) / np.cosh(u) ** 2
    return t, np.stack([d, w])


_TS_CACHE = {lvl: _ts_rule(lvl) for lvl in range(_TS_MAX_LEVEL + 1)}


def _ts_level_sums(f, lo: np.ndarray, hi: np.ndarray, level: int) -> np.ndarray:
    """Partial tanh-sinh sums (without the step factor) of the new nodes of ``level``
    on every panel ``[lo_i, hi_i]`` at once."""
    t, (d, w) = _TS_CACHE[level]
    half = 0.5 * (hi - lo)
    keep = d > 0
    d, w, t = d[keep], w[keep], t[keep]
    right = hi[:, None] - half[:, None] * d[None, :]
    left = lo[:, None] + half[:, None] * d[None, :]
    vals_r = np.asarray(f(right), dtype=complex)
    # the t = 0 node is the midpoint; count it once
    if level == 0:
        vals_l = np.asarray(f(left[:, 1:]), dtype=complex)
        s = vals_r @ w + vals_l @ w[1:]
    else:
        vals_l = np.asarray(f(left), dtype=complex)
        s = (vals_r + vals_l) @ w
    return s * half


def _ts_panels(f, lo: np.ndarray, hi: np.ndarray, tol_fn) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Run tanh-sinh to convergence on each panel; returns (values, errors, converged mask)."""
    acc = _ts_level_sums(f, lo, hi, 0)
    prev = acc * 1.0
    err = np.full(lo.shape, np.inf)
    done = np.zeros(lo.shape, dtype=bool)
    vals = prev.copy()
    for level in range(1, _TS_MAX_LEVEL + 1):
        idx = np.nonzero(~done)[0]
        if idx.size == 0:
            break
        acc[idx] += _ts_level_sums(f, lo[idx], hi[idx], level)
        est = acc[idx] * 2.0 ** (-level)
        e = np.abs(est - prev[idx])
        prev[idx] = est
        vals[idx] = est
        err[idx] = e
        if level >= 3:
            ok = e <= tol_fn(est)
            done[idx[ok]] = True
    return vals, err, done


def _integrate_finite(f, edges: np.ndarray, spec: QuadratureSpec) -> tuple[complex, float]:
    lo, hi = edges[:-1].astype(float), edges[1:].astype(float)
    total = 0j
    total_err = 0.0
    budget = spec.max_subdivisions + lo.size
    # rough global scale for the absolute criterion on each panel
    n_panels = lo.size
    while lo.size:
        per_abs = spec.abs_tol / max(n_panels, 1)

        def tol_fn(v, per_abs=per_abs):
            return np.maximum(per_abs, spec.rel_tol * np.abs(v))

        vals, errs, done = _ts_panels(f, lo, hi, tol_fn)
        total += vals[done].sum()
        total_err += errs[done].sum()
        bad = ~done
        if not bad.any():
            break
        budget -= int(bad.sum())
        if budget <= 0:
            raise NoConvergence("tanh-sinh subdivision budget exhausted")
        mid = 0.5 * (lo[bad] + hi[bad])
        lo = np.concatenate([lo[bad], mid])
        hi = np.concatenate([mid, hi[bad]])
        n_panels += int(bad.sum())
    return complex(total), float(total_err)


def integrate(
    f: Callable[[np.ndarray], np.ndarray],
    domain: tuple[float, float],
    spec: QuadratureSpec | None = None,
    breakpoints: Sequence[float] = (),
) -> tuple[complex, float]:
    """Integrate a vectorised ``f`` over a finite interval or ``[a, inf)``.

    Finite pieces use adaptive tanh-sinh (robust to log and inverse square
    root endpoint singularities). Returns ``(value, error_estimate)`` and
    raises :class:`NoConvergence` when the tolerance cannot be met.
    """
    spec = spec or QuadratureSpec()
    a, b = float(domain[0]), float(domain[1])
    if math.isinf(a):
        raise ValueError("left endpoint must be finite")
    if b < a:
        value, err = integrate(f, (b, a), spec, breakpoints)
        return -value, err
    if not math.isinf(b):
        pts = sorted({a, b, *[p for p in breakpoints if a < p < b]})
        if spec.period:
            n = max(1, int(math.ceil((b - a) / spec.period)))
            pts = sorted(set(pts) | set(np.linspace(a, b, n + 1).tolist()))
        value, err = _integrate_finite(f, np.array(pts), spec)
        if err > max(spec.abs_tol, spec.rel_tol * abs(value)) * 10:
            raise NoConvergence(f"error estimate {err:.3e} above tolerance")
        return value, err
    if spec.semi_infinite_decay_hint > 0:
        cut = a + math.log(1.0 / spec.abs_tol) / spec.semi_infinite_decay_hint
        return integrate(f, (a, cut), spec, breakpoints)
    return _integrate_algebraic_tail(f, a, spec, breakpoints)


def _integrate_algebraic_tail(f, a: float, spec: QuadratureSpec, breakpoints) -> tuple[complex, float]:
    period = spec.period or 1.0
    base = max([a + period] + [p + period for p in breakpoints if p > a])
    # first cut-off beyond every breakpoint, aligned to whole periods
    n0 = int(math.ceil((base - a) / period))
    n0 = max(n0, 8)
    levels = 12
    cutoffs = [a + period * n0 * 2**i for i in range(levels)]
    panel_spec = QuadratureSpec(
        abs_tol=spec.abs_tol * 1e-2, rel_tol=spec.rel_tol, max_subdivisions=spec.max_subdivisions
    )
    head, head_err = integrate(f, (a, cutoffs[0]), panel_spec, breakpoints)
    partial = [head]
    err_acc = head_err
    for lo_c, hi_c in zip(cutoffs[:-1], cutoffs[1:]):
        n = int(round((hi_c - lo_c) / period))
        edges = lo_c + period * np.arange(n + 1)
        v, e = _integrate_finite(f, edges, panel_spec)
        partial.append(partial[-1] + v)
        err_acc += e
    # Neville extrapolation of I(N) to 1/N -> 0
    h = np.array([1.0 / c for c in cutoffs])
    table = np.array(partial, dtype=complex)
    best, best_err = table[-1], abs(table[-1] - table[-2])
    for order in range(1, 7):
        table = (h[: len(table) - 1] * table[1:] - h[order : order + len(table) - 1] * table[:-1]) / (
            h[: len(table) - 1] - h[order : order + len(table) - 1]
        )
        if table.size < 2:
            break
        diff = abs(table[-1] - table[-2])
        if diff < best_err:
            best, best_err = table[-1], diff
    err = float(best_err + err_acc)
    if err > max(spec.abs_tol, spec.rel_tol * abs(best)) * 10:
        raise NoConvergence(f"tail extrapolation error {err:.3e} above tolerance")
    return complex(best), err


def si(x: float) -> float:
    """Sine integral Si(x) = int_0^x sin(t)/t dt for x >= 0."""
    if x < 0:
        raise ValueError("si is defined here for x >= 0")
    return float(sici(x)[0])


# ---------------------------------------------------------------------------
# Hankel functions
# ---------------------------------------------------------------------------

SERIES_RADIUS = 8.0


def _bessel_jy_series(k: int, z: complex) -> tuple[complex, complex, float]:
    """Ascending series for J_k and Y_k; also returns an absolute error estimate."""
    half = z / 2.0
    q = -(half * half)
    log_half = cmath.log(half)
    # J_k
    term = cmath.exp(k * log_half - math.lgamma(k + 1))
    j_sum = 0j
    j_max = 0.0
    psi_sum = 0j
    psi_max = 0.0
    psi_a = -EULER_GAMMA
    psi_b = -EULER_GAMMA + sum(1.0 / i for i in range(1, k + 1))
    for j in range(0, 400):
        j_sum += term
        j_max = max(j_max, abs(term))
        contrib = (psi_a + psi_b) * term
        psi_sum += contrib
        psi_max = max(psi_max, abs(contrib))
        nxt = term * q / ((j + 1) * (j + 1 + k))
        psi_a += 1.0 / (j + 1)
        psi_b += 1.0 / (j + 1 + k)
        term = nxt
        if abs(term) < 1e-18 * abs(j_sum) and j > abs(z):
            break
    y_fin = 0j
    y_fin_max = 0.0
    for j in range(k):
        t = cmath.exp(math.lgamma(k - j) - math.lgamma(j + 1) + (2 * j - k) * log_half)
        y_fin += t
        y_fin_max = max(y_fin_max, abs(t))
    y = -y_fin / math.pi + (2.0 / math.pi) * log_half * j_sum - psi_sum / math.pi
    err = 4 * _EPS * (j_max * (1 + abs(log_half)) + psi_max + y_fin_max)
    return j_sum, y, err


def bessel_j_integral(k: int, z: complex) -> complex:
    """J_k(z) from Bessel's integral by the periodic trapezoid rule."""
    n = int(2 * (abs(z) + abs(k)) + 8 * abs(complex(z).imag) + 64)
    theta = (np.arange(n) + 0.5) * (2 * np.pi / n)
    vals = np.cos(k * theta - z * np.sin(theta))
    return complex(vals.mean())


_GL_X, _GL_W = np.polynomial.legendre.leggauss(20)


def _gl_composite(fun, lo: float, hi: float, n: int) -> complex:
    edges = np.linspace(lo, hi, n + 1)
    half = 0.5 * np.diff(edges)
    mid = 0.5 * (edges[1:] + edges[:-1])
    x = mid[:, None] + half[:, None] * _GL_X[None, :]
    return complex((fun(x) @ _GL_W * half).sum())


def _converged_gl(fun, lo: float, hi: float, n_start: int, tol: float) -> complex:
    if hi <= lo:
        return 0j
    n = max(2, n_start)
    prev = _gl_composite(fun, lo, hi, n)
    while n < 2**17:
        n *= 2
        cur = _gl_composite(fun, lo, hi, n)
        if abs(cur - prev) <= tol:
            return cur
        prev = cur
    raise ContourFailure(f"contour segment [{lo:.3g}, {hi:.3g}] did not converge")


def _hankel_contour(k: int, z: complex, return_scale: bool = False):
    z = complex(z)
    if z.real <= 0:
        raise ValueError("contour representation requires Re z > 0")
    zr, zi = z.real, z.imag
    # peak of Re(z sinh t - k t) on t <= 0
    t_star = -math.acosh(k / zr) if k > zr else 0.0
    m1 = zr * math.sinh(t_star) - k * t_star
    scale = max(m1, abs(zi), 0.0)
    drop = 48.0

    def re_phi(t):
        return zr * math.sinh(t) - k * t

    step = 1.0
    t_low = t_star - step
    while re_phi(t_low) > scale - drop:
        step *= 1.5
        t_low = t_star - step

    def seg1(t):
        return np.exp(z * np.sinh(t) - k * t - scale)

    def seg2(th):
        return np.exp(1j * (z * np.sin(th) - k * th) - scale)

    def seg3(s):
        return np.exp(-z * np.sinh(s) - k * s - scale)

    tol = 1e-15
    width = abs(k) + abs(z)
    n1 = int(abs(t_low) * (abs(zi) * math.cosh(t_low) + 4 * math.sqrt(k + 1) + 4)) + 4
    s1 = _converged_gl(seg1, t_low, 0.0, n1, tol)
    s2 = 0j
    if scale - abs(zi) < drop:
        s2 = _converged_gl(seg2, 0.0, math.pi, int(width / 3) + 4, tol)
    s3 = 0j
    if scale < drop:
        s_hi = 1.0
        while zr * math.sinh(s_hi) + k * s_hi < drop - scale:
            s_hi *= 1.5
        s3 = _converged_gl(seg3, 0.0, s_hi, int(s_hi * (abs(zi) * math.cosh(s_hi) + 4)) + 4, tol)
    total = s1 / (1j * math.pi) + s2 / math.pi + (-1) ** k * s3 / (1j * math.pi)
    if total == 0 or not cmath.isfinite(total):
        raise ContourFailure(f"degenerate contour sum for k={k}, z={z}")
    out = LogComplex(math.log(abs(total)) + scale, cmath.phase(total))
    return (out, scale) if return_scale else out


# nats of cancellation tolerated in the contour sum before switching to recurrence
_CANCEL_LIMIT = 12.0


def _contour_with_loss(k: int, z: complex) -> tuple[LogComplex, float]:
    val, scale = _hankel_contour(k, z, return_scale=True)
    return val, scale - val.log_mag


def _forward_recurrence(k0: int, h0: LogComplex, h1: LogComplex, k: int, z: complex) -> LogComplex:
    """H_{j+1} = (2j/z) H_j - H_{j-1} from j = k0 + 1; stable since H dominates J for j > |z|."""
    ref = h1.log_mag
    a = (h0 / LogComplex(ref)).to_complex()
    b = (h1 / LogComplex(ref)).to_complex()
    for j in range(k0 + 1, k):
        a, b = b, (2 * j / z) * b - a
        m = abs(b)
        if m > 1e100:
            a, b = a / m, b / m
            ref += math.log(m)
    return LogComplex(ref) * LogComplex.from_complex(b)


def hankel1_log(k: int, z: complex) -> LogComplex:
    """Outgoing Hankel function H_k^{(1)}(z) in log scale (Re z > 0, k >= 0).

    The real-axis contour integral is used directly unless its terms cancel
    by more than ``_CANCEL_LIMIT`` nats (large order with a sizeable Im z);
    then the value is recurred upward from the highest order whose contour
    sum is clean.
    """
    if k < 0:
        raise ValueError("use the reflection H_{-k} = (-1)^k H_k for negative orders")
    k, z = int(k), complex(z)
    val, loss = _contour_with_loss(k, z)
    if loss <= _CANCEL_LIMIT or k < 2:
        return val
    k0 = min(k - 1, int(abs(z)))
    while k0 > 0:
        h0, l0 = _contour_with_loss(k0, z)
        h1, l1 = _contour_with_loss(k0 + 1, z)
        if max(l0, l1) <= _CANCEL_LIMIT:
            break
        k0 -= 1
    else:
        h0, _ = _contour_with_loss(0, z)
        h1, _ = _contour_with_loss(1, z)
    return _forward_recurrence(k0, h0, h1, k, z)


def hankel1(k: int, z: complex, rel_tol: float = 1e-8) -> complex:
    """Outgoing Hankel function H_k^{(1)}(z) = J_k(z) + i Y_k(z) for Re z > 0.

    Raises ``OverflowError`` when the value is not representable in double
    precision (use :func:`hankel1_log`) and :class:`LossOfPrecision` if the
    ascending series cancels beyond ``rel_tol``.
    """
    if k < 0:
        raise ValueError("use the reflection H_{-k} = (-1)^k H_k for negative orders")
    z = complex(z)
    if z.real <= 0:
        raise ValueError("hankel1 requires Re z > 0")
    if abs(z) <= SERIES_RADIUS:
        # Y_k ~ (k-1)!/pi (2/|z|)^k dominates for large k
        log_size = math.lgamma(k) + k * math.log(2 / abs(z)) if k > 0 else 0.0
        if log_size > OVERFLOW_LOG - 5:
            raise OverflowError(f"H_{k}({z}) overflows; use hankel1_log")
        j, y, err = _bessel_jy_series(k, z)
        h = j + 1j * y
        if err > rel_tol * abs(h):
            raise LossOfPrecision(f"series cancellation for k={k}, z={z}: err {err:.2e}")
        return h
    h = hankel1_log(k, z).to_complex()
    if z.imag == 0.0:
        h = complex(bessel_j_integral(k, z).real, h.imag)
    return h


def hankel_leading_term(k: int, z: complex) -> LogComplex:
    """Large-order leading term -i sqrt(2/pi) k^(k-1/2) (2/(e z))^k in log scale."""
    if k < 1:
        raise ValueError("leading term needs k >= 1")
    log_z = cmath.log(complex(z))
    w = 0.5 * math.log(2 / math.pi) + (k - 0.5) * math.log(k) + k * (math.log(2.0) - 1.0 - log_z)
    return LogComplex.exp(w) * LogComplex(0.0, -math.pi / 2)


def hankel_large_argument(k: int, t: complex) -> complex:
    """Leading large-argument form sqrt(2/(pi t)) exp(i(t - k pi/2 - pi/4))."""
    t = complex(t)
    return cmath.sqrt(2 / (math.pi * t)) * cmath.exp(1j * (t - k * math.pi / 2 - math.pi / 4))
