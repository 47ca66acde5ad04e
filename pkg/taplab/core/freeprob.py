"""Free additive convolution of an atomic measure with a semicircle.

For μ = Σ w_i δ_{x_i} and t > 0, H_t(z) = z + t G_μ(z) maps the domain
Ω_{μ,t} conformally onto the upper half-plane, and its inverse is the
subordination function ω_{μ,t}. Everything here is built on it:

1. ``subordinate`` inverts H_t, on the real axis outside the bulk by
   bracketed root finding and in the upper half-plane by damped Newton
2. Edges come from the shock equation Σ w_i/(x_i − ω)² = 1/t
3. Densities and the logarithmic potential are read off ω
"""

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import brentq, minimize_scalar

from taplab.exceptions import DomainError, SubordinationError

logger = logging.getLogger(__name__)

POLE_TOL = 1e-12
DEDUP_TOL = 1e-12
ROOT_TOL = 1e-13


@dataclass(frozen=True)
class SpectralMeasure:
    """Atomic probability measure on ℝ with deduplicated atoms."""

    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        x = np.atleast_1d(np.asarray(self.atoms, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if x.shape != w.shape or x.size == 0:
            raise DomainError("atoms and weights must be non-empty and of equal length")
        if np.any(w < 0) or not np.all(np.isfinite(x)):
            raise DomainError("weights must be non-negative and atoms finite")
        order = np.argsort(x, kind="stable")
        x, w = x[order], w[order]
        keep_x, keep_w = [x[0]], [w[0]]
        for xi, wi in zip(x[1:], w[1:], strict=True):
            if xi - keep_x[-1] <= DEDUP_TOL:
                keep_w[-1] += wi
            else:
                keep_x.append(xi)
                keep_w.append(wi)
        xa, wa = np.array(keep_x), np.array(keep_w)
        mask = wa > 0
        if not mask.any():
            raise DomainError("measure has no mass")
        xa, wa = xa[mask], wa[mask] / wa[mask].sum()
        xa.flags.writeable = False
        wa.flags.writeable = False
        object.__setattr__(self, "atoms", xa)
        object.__setattr__(self, "weights", wa)

    @classmethod
    def delta(cls, a: float = 0.0) -> "SpectralMeasure":
        return cls(np.array([a]), np.array([1.0]))

    @classmethod
    def empirical(cls, samples: ArrayLike) -> "SpectralMeasure":
        x = np.asarray(samples, dtype=float).ravel()
        return cls(x, np.full(x.size, 1.0 / x.size))

    @property
    def lo(self) -> float:
        return float(self.atoms[0])

    @property
    def hi(self) -> float:
        return float(self.atoms[-1])

    def is_symmetric(self, tol: float = 1e-12) -> bool:
        return bool(np.allclose(self.atoms, -self.atoms[::-1], atol=tol)
                    and np.allclose(self.weights, self.weights[::-1], atol=tol))


def _as_measure(mu: "SpectralMeasure | ArrayLike") -> SpectralMeasure:
    return mu if isinstance(mu, SpectralMeasure) else SpectralMeasure.empirical(mu)


def _check_t(t: float) -> None:
    if not t > 0:
        raise DomainError(f"semicircle variance must be positive, got t={t}")


# ─── Stieltjes transform ──────────────────────────────────


def stieltjes(mu: SpectralMeasure, z: complex) -> complex:
    """G_μ(z) = Σ w_i/(z − x_i)."""
    d = complex(z) - mu.atoms
    if np.min(np.abs(d)) <= POLE_TOL:
        raise SubordinationError(f"z={z} sits on an atom of μ")
    if abs(complex(z).imag) <= POLE_TOL and mu.lo <= complex(z).real <= mu.hi:
        raise SubordinationError(f"z={z} lies in the convex hull of the support")
    return complex(np.sum(mu.weights / d))


def _g(mu: SpectralMeasure, z: complex) -> complex:
    return complex(np.sum(mu.weights / (z - mu.atoms)))


def _dg(mu: SpectralMeasure, z: complex) -> complex:
    return complex(-np.sum(mu.weights / (z - mu.atoms) ** 2))


def _s2(mu: SpectralMeasure, u: float) -> float:
    return float(np.sum(mu.weights / (mu.atoms - u) ** 2))


def h_map(mu: SpectralMeasure, t: float, z: complex) -> complex:
    """H_t(z) = z + t G_μ(z)."""
    return complex(z) + t * _g(mu, complex(z))


# ─── Edges ────────────────────────────────────────────────


def shock_points(mu: SpectralMeasure, t: float) -> tuple[float, float]:
    """Real ω_l < min μ and ω_r > max μ solving Σ w_i/(x_i − ω)² = 1/t."""
    _check_t(t)
    a, b = mu.lo, mu.hi
    # Σ w/(x−u)² is monotone outside [a, b] and ≤ 1/t at distance √t
    near_a = a - 1e-12 * max(1.0, abs(a))
    near_b = b + 1e-12 * max(1.0, abs(b))

    def lhs(u: float) -> float:
        return _s2(mu, u) - 1.0 / t

    left = brentq(lhs, a - math.sqrt(t), near_a, xtol=ROOT_TOL)
    right = brentq(lhs, near_b, b + math.sqrt(t), xtol=ROOT_TOL)
    return float(left), float(right)


def edges(mu: SpectralMeasure, t: float) -> tuple[float, float]:
    """(ℓ, r): the extreme points of the support of μ⊞σ_t."""
    wl, wr = shock_points(mu, t)
    return h_map(mu, t, wl).real, h_map(mu, t, wr).real


def v_boundary(mu: SpectralMeasure, t: float, u: float) -> float:
    """v_t(u) = inf{v ≥ 0 : Σ w_i/((x_i−u)² + v²) ≤ 1/t}, the lower edge of Ω_{μ,t} above u."""
    d2 = (mu.atoms - u) ** 2
    if d2.min() > POLE_TOL ** 2 and float(np.sum(mu.weights / d2)) <= 1.0 / t:
        return 0.0

    def excess(v: float) -> float:
        return float(np.sum(mu.weights / (d2 + v * v))) - 1.0 / t

    return float(brentq(excess, 1e-150, math.sqrt(t), xtol=ROOT_TOL))


def v_profile(mu: SpectralMeasure, t: float, us: Sequence[float]) -> np.ndarray:
    """v_t on a grid of real points; zero exactly where u lies in the closure of Ω ∩ ℝ."""
    _check_t(t)
    return np.array([v_boundary(mu, t, float(u)) for u in us])


# ─── Subordination ────────────────────────────────────────


@dataclass
class SubordinationResult:
    omega: complex
    edge_left: float
    edge_right: float
    domain_check: float
    t: float
    residual: float

    @property
    def is_real(self) -> bool:
        return self.omega.imag == 0.0


def _gaps(mu: SpectralMeasure, t: float) -> list[tuple[float, float]]:
    """Real intervals between atoms where the shock function drops below 1/t."""
    out = []
    for a, b in zip(mu.atoms[:-1], mu.atoms[1:], strict=True):
        res = minimize_scalar(lambda u: _s2(mu, u), bounds=(a, b), method="bounded",
                              options={"xatol": 1e-14 * max(1.0, abs(b - a))})
        u0 = float(res.x)
        if _s2(mu, u0) >= 1.0 / t:
            continue
        lo = brentq(lambda u: _s2(mu, u) - 1.0 / t, a + 1e-12 * max(1.0, abs(a)), u0,
                    xtol=ROOT_TOL)
        hi = brentq(lambda u: _s2(mu, u) - 1.0 / t, u0, b - 1e-12 * max(1.0, abs(b)),
                    xtol=ROOT_TOL)
        out.append((float(lo), float(hi)))
    return out


def _real_branch(mu: SpectralMeasure, t: float, x: float, lo: float, hi: float) -> float:
    """H_t is increasing on an admissible interval; bracket the root there."""
    def fn(u: float) -> float:
        return u + t * _g(mu, u).real - x

    return float(brentq(fn, lo, hi, xtol=ROOT_TOL, rtol=4 * np.finfo(float).eps))


def _complex_newton(mu: SpectralMeasure, t: float, x: complex, max_iter: int = 200) -> complex:
    z = complex(x.real, max(x.imag, 0.0) + math.sqrt(t))
    for _ in range(max_iter):
        r = z + t * _g(mu, z) - x
        if abs(r) < 1e-14 * (1.0 + abs(x)):
            return z
        step = r / (1.0 + t * _dg(mu, z))
        lam = 1.0
        while lam > 1e-8:
            cand = z - lam * step
            if cand.imag > 0 and abs(cand + t * _g(mu, cand) - x) < abs(r):
                z = cand
                break
            lam *= 0.5
        else:
            break
    r = abs(z + t * _g(mu, z) - x)
    if r > 1e-10 * (1.0 + abs(x)):
        raise SubordinationError(f"complex Newton did not converge at x={x} (|residual|={r:.3e})")
    return z


@dataclass(frozen=True)
class _Geometry:
    """Shock points, edges and real gaps of μ⊞σ_t, shared across queries."""

    wl: float
    wr: float
    ell: float
    r: float
    gaps: tuple[tuple[float, float, float, float], ...]


def _geometry(mu: SpectralMeasure, t: float) -> _Geometry:
    _check_t(t)
    wl, wr = shock_points(mu, t)
    gaps = tuple((lo, hi, h_map(mu, t, lo).real, h_map(mu, t, hi).real)
                 for lo, hi in _gaps(mu, t))
    return _Geometry(wl, wr, h_map(mu, t, wl).real, h_map(mu, t, wr).real, gaps)


def subordinate(mu: "SpectralMeasure | ArrayLike", t: float, x: complex | float,
                geometry: _Geometry | None = None) -> SubordinationResult:
    """ω_{μ,t}(x): the root of H_t(ω) = x in the closure of Ω_{μ,t}.

    Real queries outside the bulk have a real ω; inside the bulk (and for
    complex queries) ω lies in the open upper half-plane.
    """
    mu = _as_measure(mu)
    geo = geometry or _geometry(mu, t)
    wl, wr, ell, r = geo.wl, geo.wr, geo.ell, geo.r
    xc = complex(x)
    omega: complex | None = None
    if xc.imag == 0.0:
        xr = xc.real
        if xr <= ell:
            omega = complex(wl if xr == ell else _real_branch(mu, t, xr, xr - 1e-12, wl), 0.0)
        elif xr >= r:
            omega = complex(wr if xr == r else _real_branch(mu, t, xr, wr, xr + 1e-12), 0.0)
        else:
            for lo, hi, h_lo, h_hi in geo.gaps:
                if h_lo <= xr <= h_hi:
                    omega = complex(_real_branch(mu, t, xr, lo, hi), 0.0)
                    break
    elif xc.imag < 0:
        raise DomainError("query must lie in the closed upper half-plane")
    if omega is None:
        omega = _complex_newton(mu, t, xc)

    if omega.imag == 0.0:
        check = max(0.0, _s2(mu, omega.real) - 1.0 / t)
        if check > 1e-10:
            us = np.linspace(mu.lo - 3 * math.sqrt(t), mu.hi + 3 * math.sqrt(t), 41)
            raise SubordinationError(
                f"real root at ω={omega.real} violates Σw/(x−ω)² ≤ 1/t",
                profile=list(zip(us.tolist(), v_profile(mu, t, us).tolist(), strict=True)))
    else:
        check = max(0.0, -omega.imag)
    res = SubordinationResult(omega=omega, edge_left=ell, edge_right=r, domain_check=check,
                              t=t, residual=abs(h_map(mu, t, omega) - xc))
    logger.debug("ω(%s) = %s (check %.2e)", x, omega, check)
    return res


# ─── Derived quantities ───────────────────────────────────


def log_potential(mu: "SpectralMeasure | ArrayLike", t: float, x: float) -> float:
    """∫ log|λ − x| d(μ⊞σ_t)(λ) through the Hopf–Lax form at ω = ω_{μ,t}(x)."""
    mu = _as_measure(mu)
    om = subordinate(mu, t, float(x)).omega
    return float(np.sum(mu.weights * np.log(np.abs(mu.atoms - om)))
                 + ((om.real - x) ** 2 - om.imag ** 2) / (2.0 * t))


def log_potential_minimax(mu: "SpectralMeasure | ArrayLike", t: float, x: float,
                          points: int = 2001) -> float:
    """The inf-sup form of the log potential, evaluated directly for x ≤ ℓ(μ⊞σ_t).

    For each real u ≤ min μ the inner sup over admissible v is attained at the
    lower edge v_t(u) of Ω_{μ,t}; the outer inf is taken on a grid and refined.
    """
    mu = _as_measure(mu)
    _check_t(t)
    ell, _ = edges(mu, t)
    if x > ell + 1e-12:
        raise DomainError(f"minimax form holds only for x ≤ ℓ = {ell}")

    def inner(u: float) -> float:
        v = v_boundary(mu, t, u)
        z = complex(u, v)
        return float(np.sum(mu.weights * np.log(np.abs(mu.atoms - z)))
                     + ((x - u) ** 2 - v * v) / (2.0 * t))

    span = abs(x - mu.lo) + 4.0 * math.sqrt(t) + 1.0
    us = np.linspace(mu.lo - span, mu.lo, points)
    vals = np.array([inner(float(u)) for u in us])
    j = int(np.argmin(vals))
    lo, hi = us[max(j - 1, 0)], us[min(j + 1, points - 1)]
    res = minimize_scalar(inner, bounds=(lo, hi), method="bounded",
                          options={"xatol": 1e-13})
    return float(min(res.fun, vals[j]))


def freeconv_density(mu: "SpectralMeasure | ArrayLike", t: float, grid: ArrayLike) -> np.ndarray:
    """Density of μ⊞σ_t: −Im G_μ(ω(x))/π, zero outside the bulk."""
    mu = _as_measure(mu)
    xs = np.atleast_1d(np.asarray(grid, dtype=float))
    geo = _geometry(mu, t)
    out = np.zeros(xs.size)
    for j, x in enumerate(xs):
        if not geo.ell < x < geo.r:
            continue
        om = subordinate(mu, t, float(x), geo).omega
        if om.imag > 0:
            out[j] = -_g(mu, om).imag / math.pi
    return out


def freeconv_stieltjes(mu: "SpectralMeasure | ArrayLike", t: float, z: complex) -> complex:
    """G_{μ⊞σ_t}(z) = G_μ(ω(z)) for z in the upper half-plane."""
    mu = _as_measure(mu)
    return _g(mu, subordinate(mu, t, complex(z)).omega)
