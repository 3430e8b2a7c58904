"""Cavity-neck-exterior mode matching and resonance extraction.

The neck field is ``sum_k (a_plus_k e^{theta_k x/eps} + a_minus_k e^{-theta_k x/eps}) psi_k(y)``
for ``0 < x < L``.  Unknowns are stored as ``(A_plus, a_minus)`` with
``A_plus = a_plus e^{theta L/eps}``, which keeps every matrix entry bounded:
the only exponentials left in the system are ``E_k = e^{-theta_k L/eps}`` with
``|E_k| <= 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .cavity import (
    CavityEigenpair,
    RectCavity,
    assumption_h,
    cavity_dtn,
    default_m_count,
    neck_cavity_overlaps,
    pole_factor,
)
from .errors import (
    AssumptionViolation,
    EstimatorDisagreement,
    HelmlabError,
    InsufficientData,
    NoConvergence,
    NoRoot,
)
from .exterior import exterior_dtn, radiated_flux
from .modes import DuctModeSet, thetas
from .specfun import LogComplex, principal_sqrt

MACHINE_EPS = float(np.finfo(float).eps)
HANDOVER = 1e3 * MACHINE_EPS
DEFAULT_EPS_LIST = (0.35, 0.30, 0.25, 0.20, 0.16, 0.125)


@dataclass(frozen=True)
class ResonatorGeometry:
    cavity: RectCavity
    L: float
    eps: float
    mode: tuple[int, int] = (1, 1)

    def __post_init__(self) -> None:
        if self.L <= 0 or self.eps <= 0:
            raise ValueError("L and eps must be positive")
        if self.eps >= self.cavity.b / 2:
            raise ValueError("neck must be narrower than the cavity wall")
        if self.eps >= self.L:
            raise ValueError("neck half-width must be below its length")

    @property
    def lambda0(self) -> float:
        return self.cavity.eigenvalue(*self.mode)

    def with_eps(self, eps: float) -> "ResonatorGeometry":
        return replace(self, eps=eps)

    def scaled(self, s: float) -> "ResonatorGeometry":
        return ResonatorGeometry(self.cavity.scaled(s), self.L * s, self.eps * s, self.mode)


@dataclass(frozen=True)
class ModeTruncation:
    k_neck: int = 32
    m_cavity: int | None = None
    exterior_tol: float = 1e-9
    k_levels: int = 3

    def __post_init__(self) -> None:
        if self.k_neck < 4:
            raise ValueError("k_neck must be >= 4")
        if self.k_levels < 1:
            raise ValueError("k_levels must be >= 1")
        if self.m_cavity is not None and self.m_cavity < 1:
            raise ValueError("m_cavity must be positive")

    def doubled(self, geom: "ResonatorGeometry") -> "ModeTruncation":
        m = self.m_cavity or default_m_count(geom.cavity, 2 * geom.lambda0, geom.eps, self.k_neck * 2 ** (self.k_levels - 1))
        return replace(self, k_neck=2 * self.k_neck, m_cavity=2 * m)


@dataclass
class MatchingSystem:
    rho: complex
    matrix: np.ndarray  # 2K x 2K acting on (A_plus, a_minus)
    theta: np.ndarray
    decay: np.ndarray  # E_k = exp(-theta_k L / eps)
    log_scale: np.ndarray  # column k of A_plus was scaled by exp(-theta_k L/eps)
    lam_cavity: np.ndarray
    lam_exterior: np.ndarray
    eps: float

    @property
    def k(self) -> int:
        return self.theta.size


def _m_count(geom: ResonatorGeometry, trunc: ModeTruncation) -> int:
    if trunc.m_cavity is not None:
        return trunc.m_cavity
    return default_m_count(geom.cavity, 2 * geom.lambda0, geom.eps, trunc.k_neck)


def assemble(rho: complex, geom: ResonatorGeometry, trunc: ModeTruncation) -> MatchingSystem:
    """Scaled matching matrix for the neck unknowns (A_plus, a_minus).

    Rows 0..K-1: derivative continuity with the cavity at x = 0.
    Rows K..2K-1: derivative continuity with the exterior at x = L.
    """
    rho = complex(rho)
    K, eps, L = trunc.k_neck, geom.eps, geom.L
    neck = DuctModeSet(eps, K)
    th = thetas(K, rho, eps)
    E = np.exp(-th * L / eps)
    D = np.diag(th / eps)
    lc = cavity_dtn(geom.cavity, rho, neck, _m_count(geom, trunc))
    le = exterior_dtn(rho, eps, K, tol=trunc.exterior_tol).matrix
    top = np.hstack([(D - lc) * E[None, :], -(D + lc)])
    bottom = np.hstack([D - le, -(D + le) * E[None, :]])
    return MatchingSystem(rho, np.vstack([top, bottom]), th, E, -th.real * L / eps, lc, le, eps)


def reduced_matrix(system: MatchingSystem) -> tuple[np.ndarray, np.ndarray]:
    """Eliminate A_plus: returns (N, R) with A_plus = R E a_minus and N a_minus = 0."""
    D = np.diag(system.theta / system.eps)
    E = system.decay
    le, lc = system.lam_exterior, system.lam_cavity
    R = np.linalg.solve(D - le, D + le)
    N = (D + lc) - (D - lc) @ (E[:, None] * R * E[None, :])
    return N, R


def det_log(rho: complex, geom: ResonatorGeometry, trunc: ModeTruncation) -> LogComplex:
    """Determinant of the scaled matching matrix as a LogComplex."""
    sign, logabs = np.linalg.slogdet(assemble(rho, geom, trunc).matrix)
    if sign == 0:
        return LogComplex(-math.inf, 0.0)
    return LogComplex(float(logabs), float(np.angle(sign)))


def root_function(rho: complex, geom: ResonatorGeometry, trunc: ModeTruncation) -> complex:
    """Scaled determinant times the factor that cancels the cavity poles below 2 lambda0.

    Analytic in rho near lambda0; its zero there is the resonance.
    """
    d = det_log(rho, geom, trunc)
    pf = pole_factor(geom.cavity, rho, 2 * geom.lambda0)
    # the determinant grows like prod (alpha_k / eps)^2; divide that out to keep it O(1)
    a = np.arange(1, trunc.k_neck + 1) * math.pi / 2
    norm = LogComplex(-2 * float(np.sum(np.log(a / geom.eps))))
    return (d * norm * LogComplex.from_complex(pf)).to_complex()


@dataclass(frozen=True)
class NeckCoefficients:
    a_plus: tuple[LogComplex, ...]
    a_minus: tuple[LogComplex, ...]
    A_plus: tuple[LogComplex, ...]
    A_minus: tuple[LogComplex, ...]
    residual: float

    def log_tail(self, start: int = 2) -> float:
        """log of sum_{k >= start} k |A_minus_k|^2."""
        terms = [
            math.log(k) + 2 * c.log_mag
            for k, c in enumerate(self.A_minus, start=1)
            if k >= start and not c.is_zero
        ]
        if not terms:
            return -math.inf
        top = max(terms)
        return top + math.log(sum(math.exp(t - top) for t in terms))

    def log_plus_sum(self) -> float:
        terms = [math.log(k) + 2 * c.log_mag for k, c in enumerate(self.A_plus, start=1) if not c.is_zero]
        if not terms:
            return -math.inf
        top = max(terms)
        return top + math.log(sum(math.exp(t - top) for t in terms))


@dataclass
class ResonanceResult:
    rho_re: float
    im_sign: int
    im_log: float
    estimator: str
    residual: float
    diagnostics: dict = field(default_factory=dict)
    coefficients: NeckCoefficients | None = None

    @property
    def rho(self) -> complex:
        """Plain complex value; the imaginary part underflows to 0 for tiny widths."""
        im = self.im_sign * math.exp(self.im_log) if self.im_log > -745 else 0.0
        return complex(self.rho_re, im)

    @property
    def log10_width(self) -> float:
        return self.im_log / math.log(10)


# ---------------------------------------------------------------- norms


def _neck_mass(A_plus: np.ndarray, a_minus: np.ndarray, theta: np.ndarray, E: np.ndarray, eps: float, L: float) -> float:
    """int_0^L int |u|^2 over the neck; the profiles are orthonormal."""
    tr = theta.real
    ti = theta.imag
    # (1 - |E|^2) / (2 Re theta / eps), with the Re theta -> 0 limit L
    x = 2 * tr * L / eps
    fac = np.where(x > 1e-8, -np.expm1(-x) / np.where(x > 1e-8, x, 1.0), 1.0 - x / 2) * L
    plus = np.abs(A_plus) ** 2 * fac
    minus = np.abs(a_minus) ** 2 * fac
    c = 2 * ti / eps
    cross_int = L * np.exp(1j * c * L / 2) * np.sinc(c * L / (2 * np.pi))
    cross = 2 * np.real(A_plus * E * np.conj(a_minus) * cross_int)
    return float(np.sum(plus + minus + cross))


def _cavity_mass(trace_modes: np.ndarray, rho: complex, cavity: RectCavity) -> float:
    """int over the cavity of |u|^2 given the x=0 trace in the cavity y-modes."""
    m = np.arange(1, trace_modes.size + 1)
    g = principal_sqrt(complex(rho) - (m * np.pi / cavity.b) ** 2)
    gr, gi = np.abs(g.real), np.abs(g.imag)
    a = cavity.a
    big = gi * a > 300
    gi_s = np.where(big, 1.0, gi)
    # int_0^a |sin(g s)|^2 ds and |sin(g a)|^2
    sh = np.where(gi_s * a < 1e-12, a, np.sinh(2 * gi_s * a) / (2 * np.where(gi_s > 0, gi_s, 1.0)))
    sn = np.where(gr * a < 1e-12, a, np.sin(2 * gr * a) / (2 * np.where(gr > 0, gr, 1.0)))
    num = 0.5 * (sh - sn)
    den = np.sinh(gi_s * a) ** 2 + np.sin(gr * a) ** 2
    ratio = np.where(big, 1.0 / (2 * np.where(big, gi, 1.0)), num / np.where(den > 0, den, 1.0))
    return float(np.sum(np.abs(trace_modes) ** 2 * ratio))


def _quasimode(system: MatchingSystem) -> tuple[np.ndarray, np.ndarray, float]:
    """Smallest right singular vector of the reduced system: (A_plus, a_minus, sigma_rel)."""
    N, R = reduced_matrix(system)
    _, s, vh = np.linalg.svd(N)
    v = np.conj(vh[-1])
    # fix the global phase so the dominant entry is real positive
    j = int(np.argmax(np.abs(v)))
    v = v * np.exp(-1j * np.angle(v[j]))
    A_plus = R @ (system.decay * v)
    return A_plus, v, float(s[-1] / s[0])


def neck_coefficients(rho: complex, geom: ResonatorGeometry, trunc: ModeTruncation) -> NeckCoefficients:
    """Neck amplitudes of the (quasi)mode at rho, normalised to unit mass over cavity and neck."""
    system = assemble(rho, geom, trunc)
    A_plus, a_minus, _ = _quasimode(system)
    eps, L = geom.eps, geom.L
    mass = _mass(system, A_plus, a_minus, geom, trunc)
    scale = 1.0 / math.sqrt(mass)
    A_plus, a_minus = A_plus * scale, a_minus * scale
    x = np.concatenate([A_plus, a_minus])
    res = float(np.linalg.norm(system.matrix @ x) / np.linalg.norm(system.matrix, 2) / np.linalg.norm(x))
    lc = lambda z: LogComplex.from_complex(z)
    logE = [LogComplex.exp(-t * L / eps) for t in system.theta]
    return NeckCoefficients(
        a_plus=tuple(lc(p) * e for p, e in zip(A_plus, logE)),
        a_minus=tuple(lc(m) for m in a_minus),
        A_plus=tuple(lc(p) for p in A_plus),
        A_minus=tuple(lc(m) * e for m, e in zip(a_minus, logE)),
        residual=res,
    )


def _mass(system, A_plus, a_minus, geom, trunc) -> float:
    neck = DuctModeSet(geom.eps, trunc.k_neck)
    trace0 = system.decay * A_plus + a_minus
    P = neck_cavity_overlaps(geom.cavity, neck, _m_count(geom, trunc))
    cav = _cavity_mass(P.T @ trace0, system.rho, geom.cavity)
    return cav + _neck_mass(A_plus, a_minus, system.theta, system.decay, geom.eps, geom.L)


# ---------------------------------------------------------------- estimators


def flux_width(geom: ResonatorGeometry, trunc: ModeTruncation, rho_re: float) -> tuple[int, float]:
    """Width from the radiated power of the real-frequency quasimode, in log scale.

    The aperture trace at x = L carries the factor E_1 = exp(-theta_1 L/eps);
    it is factored out analytically so that widths far below the double range
    remain finite in log form.
    """
    rho_re = float(rho_re)
    system = assemble(rho_re, geom, trunc)
    N, R = reduced_matrix(system)
    _, _, vh = np.linalg.svd(N)
    v = np.conj(vh[-1])
    th = system.theta
    rel = np.exp(-(th - th[0]) * geom.L / geom.eps)
    g_hat = (R + np.eye(th.size)) @ (rel * v)
    log_e1 = -th[0].real * geom.L / geom.eps
    dtn = exterior_dtn(rho_re, geom.eps, trunc.k_neck, tol=trunc.exterior_tol)
    sign, log_p = radiated_flux(dtn, g_hat, log_scale=log_e1)
    A_plus = R @ (system.decay * v)
    mass = _mass(system, A_plus, v, geom, trunc)
    if sign == 0:
        return 0, -math.inf
    return -int(sign), log_p - math.log(mass)


def _real_roots(fn, lo: float, hi: float, n: int = 160) -> list[float]:
    xs = np.linspace(lo, hi, n + 1)
    nudge = 1e-3 * (hi - lo) / n
    vals = []
    for i, x in enumerate(xs):
        # a grid point sitting on a cavity pole is moved slightly instead of dropped
        for shift in (0.0, nudge, -nudge):
            try:
                vals.append(fn(x + shift))
                xs[i] = x + shift
                break
            except HelmlabError:
                continue
        else:
            vals.append(math.nan)
    roots = []
    for x0, x1, f0, f1 in zip(xs[:-1], xs[1:], vals[:-1], vals[1:]):
        if math.isfinite(f0) and math.isfinite(f1) and f0 * f1 < 0:
            roots.append(brentq(fn, x0, x1, xtol=1e-14, rtol=4 * MACHINE_EPS, maxiter=200))
    return roots


def _newton(geom, trunc, rho0: complex, max_iter: int = 40) -> tuple[complex, float, int]:
    f = lambda z: root_function(z, geom, trunc)
    rho = complex(rho0)
    step_h = 1e-5 * abs(rho)
    for it in range(1, max_iter + 1):
        f0 = f(rho)
        df = (f(rho + step_h) - f(rho - step_h)) / (2 * step_h)
        if df == 0:
            raise NoConvergence("vanishing derivative in Newton")
        step = f0 / df
        rho -= step
        if abs(step) <= 4 * MACHINE_EPS * abs(rho):
            break
    else:
        raise NoConvergence("Newton did not converge")
    return rho, abs(f(rho) / df) / abs(rho), it


def _local_root(fn, x0: float, step: float) -> float:
    """Real root of fn near x0, expanding a symmetric bracket geometrically."""
    f0 = fn(x0)
    for _ in range(40):
        lo, hi = x0 - step, x0 + step
        flo, fhi = fn(lo), fn(hi)
        if flo * f0 <= 0:
            return brentq(fn, lo, x0, xtol=1e-14, rtol=4 * MACHINE_EPS, maxiter=200)
        if fhi * f0 <= 0:
            return brentq(fn, x0, hi, xtol=1e-14, rtol=4 * MACHINE_EPS, maxiter=200)
        step *= 2
    raise NoRoot(f"no sign change of Re f near {x0}")


def _solve_level(geom, trunc, rho_re0: float, both: bool) -> ResonanceResult:
    """Width at one truncation level, starting from the real root rho_re0."""
    sign_f, log_f = flux_width(geom, trunc, rho_re0)
    diagnostics = {"stage1_root": rho_re0, "flux_im_log": log_f, "flux_im_sign": sign_f, "k_neck": trunc.k_neck}
    if sign_f != 0 and log_f > math.log(HANDOVER * abs(rho_re0)) - 2:
        start = rho_re0 + 1j * sign_f * math.exp(log_f)
        rho, res, its = _newton(geom, trunc, start)
        diagnostics.update(newton_iterations=its, newton_rho=rho)
        if abs(rho.imag) >= HANDOVER * abs(rho):
            im_sign = -1 if rho.imag < 0 else (1 if rho.imag > 0 else 0)
            out = ResonanceResult(rho.real, im_sign, math.log(abs(rho.imag)), "Newton", res, diagnostics)
            if both and abs(out.im_log - log_f) > math.log(2):
                raise EstimatorDisagreement(
                    f"Newton im_log {out.im_log:.4f} vs flux {log_f:.4f} at eps={geom.eps}"
                )
            return out
    _, _, srel = _quasimode(assemble(rho_re0, geom, trunc))
    return ResonanceResult(rho_re0, sign_f, log_f, "Flux", srel, diagnostics)


# error expansion in the neck truncation K: c1 K^(-4/3) + c2 K^(-2) + ...
# (the 4/3 comes from the r^(2/3) field singularity at the aperture corners)
TRUNCATION_EXPONENTS = (4.0 / 3.0, 2.0)


def richardson(values: Sequence[float], exponents: Sequence[float] = TRUNCATION_EXPONENTS) -> tuple[float, float]:
    """Extrapolate values at K, 2K, 4K, ... to K -> infinity; returns (limit, error estimate)."""
    vals = list(values)
    if len(vals) == 1:
        return vals[0], math.nan
    err = math.nan
    for p in exponents:
        if len(vals) < 2:
            break
        q = 2.0**-p
        nxt = [b + (b - a) * q / (1 - q) for a, b in zip(vals[:-1], vals[1:])]
        err = abs(nxt[-1] - vals[-1])
        vals = nxt
    return vals[-1], err


def find_resonance(
    geom: ResonatorGeometry,
    trunc: ModeTruncation,
    window: tuple[float, float] | None = None,
    guess: float | None = None,
    both: bool = True,
) -> ResonanceResult:
    """Locate the resonance near lambda0.

    Stage one brackets the real root of Re f on ``window`` (default
    ``[0.7 lambda0, 1.02 lambda0]``) and keeps the one nearest ``guess``.
    Stage two resolves the width by complex Newton when it is above the
    handover level ``1e3 * machine epsilon * |rho|``, else by the flux formula;
    with ``both`` the two are required to agree within a factor 2.

    With ``trunc.k_levels > 1`` the solve is repeated at K, 2K, 4K, ... neck
    modes and Re rho and log|Im rho| are Richardson-extrapolated in K.
    """
    lam0 = geom.lambda0
    ok, diag = assumption_h(geom.cavity, _pair(geom))
    if not ok:
        raise AssumptionViolation(f"target eigenpair fails the simplicity/junction test: {diag}")
    lo, hi = window or (0.7 * lam0, 1.02 * lam0)
    target = lam0 if guess is None else guess
    levels = [replace(trunc, k_neck=trunc.k_neck * 2**i, k_levels=1) for i in range(trunc.k_levels)]

    fn = lambda x: root_function(x, geom, levels[0]).real
    roots = _real_roots(fn, lo, hi)
    if not roots:
        raise NoRoot(f"no real root of the matching determinant in [{lo}, {hi}]")
    root = min(roots, key=lambda r: abs(r - target))
    results = [_solve_level(geom, levels[0], root, both)]
    step = 1e-3 * lam0
    for lev in levels[1:]:
        root = _local_root(lambda x, t=lev: root_function(x, geom, t).real, results[-1].diagnostics["stage1_root"], step)
        step = max(abs(root - results[-1].diagnostics["stage1_root"]), 1e-9 * lam0)
        results.append(_solve_level(geom, lev, root, both))

    finest = results[-1]
    rho_re, re_err = richardson([r.rho_re for r in results])
    im_log, im_err = richardson([r.im_log for r in results])
    diagnostics = dict(finest.diagnostics)
    diagnostics.update(
        real_roots=roots,
        levels=[(lv.k_neck, r.rho_re, r.im_log, r.estimator) for lv, r in zip(levels, results)],
        rho_re_extrapolation_error=re_err,
        im_log_extrapolation_error=im_err,
        m_cavity=_m_count(geom, trunc),
    )
    estimators = {r.estimator for r in results}
    estimator = finest.estimator if len(estimators) == 1 else "Newton+Flux"
    result = ResonanceResult(float(rho_re), finest.im_sign, float(im_log), estimator, finest.residual, diagnostics)
    # Newton levels carry the complex root; in the flux regime Im rho is below rounding of Re rho
    rho_c = finest.diagnostics.get("newton_rho", finest.rho_re) if finest.estimator == "Newton" else finest.rho_re
    result.coefficients = neck_coefficients(rho_c, geom, levels[-1])
    return result


def _pair(geom: ResonatorGeometry) -> CavityEigenpair:
    m, n = geom.mode
    norm = 2.0 / math.sqrt(geom.cavity.a * geom.cavity.b)
    return CavityEigenpair(m, n, geom.cavity.eigenvalue(m, n), norm)


# ---------------------------------------------------------------- sweeps


@dataclass
class SweepRecord:
    eps: float
    result: ResonanceResult | None
    s_norm: float = math.nan
    a1_minus_log: float = math.nan
    tail_log: float = math.nan
    plus_log: float = math.nan
    error: str | None = None

    @property
    def ok(self) -> bool:
        return self.result is not None


def sweep(
    template: ResonatorGeometry,
    eps_list: Sequence[float] = DEFAULT_EPS_LIST,
    trunc: ModeTruncation | None = None,
) -> list[SweepRecord]:
    """Resonances along a list of neck widths, continuing the real part from point to point.

    A failing point is recorded with its error message and the sweep goes on.
    """
    trunc = trunc or ModeTruncation()
    out = []
    guess = None
    for eps in eps_list:
        try:
            geom = template.with_eps(float(eps))
            res = find_resonance(geom, trunc, guess=guess)
        except (HelmlabError, ValueError) as exc:
            out.append(SweepRecord(float(eps), None, error=f"{type(exc).__name__}: {exc}"))
            continue
        guess = res.rho_re
        coeffs = res.coefficients
        out.append(
            SweepRecord(
                float(eps),
                res,
                s_norm=-eps * res.im_log / (math.pi * template.L),
                a1_minus_log=coeffs.A_minus[0].log_mag,
                tail_log=coeffs.log_tail(2),
                plus_log=coeffs.log_plus_sum(),
            )
        )
    return out


@dataclass(frozen=True)
class WidthLawFit:
    slope: float
    intercept: float
    normalized_slope: float
    deviations: tuple[float, ...]


def fit_width_law(records: Sequence[SweepRecord], L: float) -> WidthLawFit:
    """Least-squares fit of log|Im rho| against 1/eps; the slope is compared with -pi L."""
    good = [r for r in records if r.ok and math.isfinite(r.result.im_log)]
    if len(good) < 4:
        raise InsufficientData(f"need at least 4 converged sweep points, have {len(good)}")
    x = np.array([1.0 / r.eps for r in good])
    y = np.array([r.result.im_log for r in good])
    slope, intercept = np.polyfit(x, y, 1)
    dev = y - (slope * x + intercept)
    return WidthLawFit(float(slope), float(intercept), float(slope / (-math.pi * L)), tuple(float(d) for d in dev))


def bracket_constant(records: Sequence[SweepRecord], L: float, delta: float = 0.2) -> float:
    """Smallest C with C^-1 e^{-(1+delta) pi L/eps} <= |Im rho| <= C e^{-(1-delta) pi L/eps} at every point."""
    logs = []
    for r in records:
        if not r.ok:
            continue
        e = r.eps
        logs.append(r.result.im_log + (1 - delta) * math.pi * L / e)
        logs.append(-(1 + delta) * math.pi * L / e - r.result.im_log)
    if not logs:
        raise InsufficientData("no converged sweep points")
    return math.exp(max(0.0, max(logs)))
