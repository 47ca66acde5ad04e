"""Backward Parisi PDE for atomic order parameters.

For an atomic ζ the PDE

    ∂tΦ + ½ξ''(t)(∂xxΦ + ζ([0,t])(∂xΦ)²) = 0,   Φ(1,x) = log(2cosh x)

is solved exactly plateau by plateau. On a plateau [a,b] where ζ([0,t]) = m̄
is constant, the Hopf–Cole transform gives

    Φ(a,x) = (1/m̄) log E[exp(m̄ Φ(b, x + σZ))],   σ² = ξ'(b) − ξ'(a),

and Φ(a,x) = E[Φ(b, x + σZ)] when m̄ = 0. Strategy:

1. Gaussian expectations use Gauss–Hermite quadrature in log-sum-exp form
2. The first three x-derivatives are propagated alongside Φ through the
   tilted measure π_k ∝ w_k exp(m̄ Φ(b, x + σ√2 y_k)), so no derivative is
   ever taken numerically
3. Between grid points, Φ, ∂xΦ and ∂xxΦ are cubic Hermite interpolants built
   from the value/derivative pairs; beyond ±L they follow the slope-one
   asymptote (linear in Φ, constant in the derivatives)
4. The terminal layer is always evaluated in closed form
"""

import logging
import math
from collections.abc import Callable, Iterable
from dataclasses import dataclass, field, replace

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.typing import ArrayLike
from scipy.interpolate import CubicHermiteSpline
from scipy.special import logsumexp

from taplab.config import get_settings
from taplab.core.measures import AtomicMeasure, layer_times
from taplab.core.mixture import Mixture
from taplab.exceptions import BoundaryError, DomainError, GridError

logger = logging.getLogger(__name__)

TIME_TOL = 1e-12
NEWTON_TOL = 1e-12


@dataclass(frozen=True)
class GridSpec:
    """Uniform spatial grid on [−L, L] and the per-layer quadrature order."""

    half_width: float | None = None
    points: int = 4001
    quad_nodes: int = 64

    def __post_init__(self) -> None:
        if self.points < 257 or self.points % 2 == 0:
            raise DomainError(f"grid points must be odd and >= 257, got {self.points}")
        if self.quad_nodes < 32:
            raise DomainError(f"quad_nodes must be >= 32, got {self.quad_nodes}")
        if self.half_width is not None and self.half_width <= 0:
            raise DomainError(f"half_width must be positive, got {self.half_width}")

    @classmethod
    def from_settings(cls) -> "GridSpec":
        s = get_settings()
        return cls(half_width=s.grid_half_width, points=s.grid_points, quad_nodes=s.quad_nodes)

    def resolve(self, mixture: Mixture) -> "GridSpec":
        """Fill in the default half width 10 + 6·sqrt(ξ'(1))."""
        if self.half_width is not None:
            return self
        return replace(self, half_width=10.0 + 6.0 * math.sqrt(float(mixture.d1(1.0))))

    def axis(self) -> np.ndarray:
        if self.half_width is None:
            raise DomainError("grid half width is unresolved; call resolve() first")
        return np.linspace(-self.half_width, self.half_width, self.points)

    @property
    def step(self) -> float:
        return 2.0 * float(self.half_width or 0.0) / (self.points - 1)


# ─── Layer evaluators ─────────────────────────────────────


def log2cosh(x: ArrayLike) -> np.ndarray:
    ax = np.abs(np.asarray(x, dtype=float))
    return ax + np.log1p(np.exp(-2.0 * ax))


def sech2(x: ArrayLike) -> np.ndarray:
    e = np.exp(-2.0 * np.abs(np.asarray(x, dtype=float)))
    return 4.0 * e / (1.0 + e) ** 2


class _Terminal:
    """Closed-form Φ(1,·) = log 2cosh and its derivatives."""

    exact = True

    def values(self, p: np.ndarray) -> tuple[np.ndarray, ...]:
        th = np.tanh(p)
        s2 = sech2(p)
        return log2cosh(p), th, s2, -2.0 * th * s2

    def d1_slope(self, p: np.ndarray) -> np.ndarray:
        return sech2(p)


class _Interpolated:
    """Hermite interpolants of one stored layer with slope-one extension."""

    exact = False

    def __init__(self, x: np.ndarray, phi: np.ndarray, d1: np.ndarray, d2: np.ndarray,
                 d3: np.ndarray):
        self.x = x
        self.lo, self.hi = float(x[0]), float(x[-1])
        self.d1_edges = (float(d1[0]), float(d1[-1]))
        self.s0 = CubicHermiteSpline(x, phi, d1, extrapolate=False)
        self.s1 = CubicHermiteSpline(x, d1, d2, extrapolate=False)
        self.s2 = CubicHermiteSpline(x, d2, d3, extrapolate=False)
        self.s1_slope = self.s1.derivative()
        self.d3 = d3

    def _clip(self, p: np.ndarray) -> np.ndarray:
        return np.clip(p, self.lo, self.hi)

    def phi(self, p: np.ndarray) -> np.ndarray:
        c = self._clip(p)
        slope = np.where(p > self.hi, self.d1_edges[1], self.d1_edges[0])
        return self.s0(c) + slope * (p - c)

    def d1(self, p: np.ndarray) -> np.ndarray:
        return self.s1(self._clip(p))

    def d2(self, p: np.ndarray) -> np.ndarray:
        return self.s2(self._clip(p))

    def d3_(self, p: np.ndarray) -> np.ndarray:
        return np.interp(p, self.x, self.d3)

    def values(self, p: np.ndarray) -> tuple[np.ndarray, ...]:
        return self.phi(p), self.d1(p), self.d2(p), self.d3_(p)

    def d1_slope(self, p: np.ndarray) -> np.ndarray:
        return self.s1_slope(self._clip(p))


def _layer_step(
    upper: "_Terminal | _Interpolated",
    x: np.ndarray,
    sigma: float,
    mbar: float,
    nodes: np.ndarray,
    log_w: np.ndarray,
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Map Φ(b,·) and its derivatives to Φ(a,·) on the grid."""
    pts = x[:, None] + sigma * nodes[None, :]
    g0, g1, g2, g3 = upper.values(pts)
    if mbar <= 0.0:
        w = np.exp(log_w)[None, :]
        return (w * g0).sum(1), (w * g1).sum(1), (w * g2).sum(1), (w * g3).sum(1)

    logits = mbar * g0 + log_w[None, :]
    lse = logsumexp(logits, axis=1)
    pi = np.exp(logits - lse[:, None])
    e1 = (pi * g1).sum(1)
    c1 = g1 - e1[:, None]
    e2 = (pi * g2).sum(1)
    var1 = (pi * c1 * c1).sum(1)
    cov12 = (pi * c1 * (g2 - e2[:, None])).sum(1)
    kappa3 = (pi * c1 ** 3).sum(1)
    phi = lse / mbar
    d1 = e1
    d2 = e2 + mbar * var1
    d3 = (pi * g3).sum(1) + 3.0 * mbar * cov12 + mbar * mbar * kappa3
    return phi, d1, d2, d3


def _tail_weight(sigma: float, mbar: float, nodes: np.ndarray, log_w: np.ndarray,
                 upper: "_Terminal | _Interpolated", half_width: float) -> float:
    """Quadrature weight at x = 0 landing beyond the grid."""
    pts = sigma * nodes
    outside = np.abs(pts) > half_width
    if not np.any(outside):
        return 0.0
    logits = log_w + (mbar * upper.values(pts)[0] if mbar > 0 else 0.0)
    pi = np.exp(logits - logsumexp(logits))
    return float(pi[outside].sum())


# ─── Solution ─────────────────────────────────────────────


@dataclass(eq=False)
class ParisiSolution:
    """Φ_ζ(t,·), ∂xΦ, ∂xxΦ, ∂xxxΦ stored on the grid at every layer boundary."""

    measure: AtomicMeasure
    mixture: Mixture
    grid: GridSpec
    layer_times: np.ndarray
    x: np.ndarray
    phi_values: np.ndarray
    d1_values: np.ndarray
    d2_values: np.ndarray
    d3_values: np.ndarray
    diagnostics: dict = field(default_factory=dict)
    _cache: dict = field(default_factory=dict, repr=False)

    # ─── Lookup ────────────────────────────────────────────

    def index(self, t: float) -> int:
        hit = np.flatnonzero(np.abs(self.layer_times - t) < TIME_TOL)
        if hit.size == 0:
            raise BoundaryError(
                f"t={t} is not a stored boundary; re-solve with it as a split point "
                f"(stored: {', '.join(f'{s:.6g}' for s in self.layer_times)})"
            )
        return int(hit[0])

    def has_time(self, t: float) -> bool:
        return bool(np.any(np.abs(self.layer_times - t) < TIME_TOL))

    def _evaluator(self, i: int) -> "_Terminal | _Interpolated":
        if i == len(self.layer_times) - 1:
            return _Terminal()
        if i not in self._cache:
            self._cache[i] = _Interpolated(self.x, self.phi_values[i], self.d1_values[i],
                                           self.d2_values[i], self.d3_values[i])
        return self._cache[i]

    def mass(self, t: float) -> float:
        """ζ([0,t])."""
        return float(self.measure.cdf(t))

    @staticmethod
    def _out(v: np.ndarray, like: ArrayLike) -> np.ndarray | float:
        return float(v) if np.ndim(like) == 0 else v

    # ─── Φ and its x-derivatives ───────────────────────────

    def phi(self, t: float, x: ArrayLike) -> np.ndarray | float:
        p = np.asarray(x, dtype=float)
        ev = self._evaluator(self.index(t))
        return self._out(ev.values(p)[0] if ev.exact else ev.phi(p), x)

    def dx_phi(self, t: float, x: ArrayLike) -> np.ndarray | float:
        p = np.asarray(x, dtype=float)
        ev = self._evaluator(self.index(t))
        return self._out(ev.values(p)[1] if ev.exact else ev.d1(p), x)

    def dxx_phi(self, t: float, x: ArrayLike) -> np.ndarray | float:
        p = np.asarray(x, dtype=float)
        ev = self._evaluator(self.index(t))
        return self._out(ev.values(p)[2] if ev.exact else ev.d2(p), x)

    def dxxx_phi(self, t: float, x: ArrayLike) -> np.ndarray | float:
        p = np.asarray(x, dtype=float)
        ev = self._evaluator(self.index(t))
        return self._out(ev.values(p)[3] if ev.exact else ev.d3_(p), x)

    def bracket(self, t: float) -> tuple[int, float]:
        """Boundary index i and weight λ with t between t_i and t_{i+1}, linear in ξ'."""
        times = self.layer_times
        if t <= times[0] + TIME_TOL:
            return 0, 0.0
        if t >= times[-1] - TIME_TOL:
            return len(times) - 2, 1.0
        i = int(np.searchsorted(times, t, side="right") - 1)
        lo, hi = float(self.mixture.d1(times[i])), float(self.mixture.d1(times[i + 1]))
        lam = (float(self.mixture.d1(t)) - lo) / (hi - lo) if hi > lo else 0.0
        return i, lam

    def _between(self, fn: Callable[[float, ArrayLike], ArrayLike], t: float,
                 x: ArrayLike) -> np.ndarray | float:
        if self.has_time(t):
            return fn(t, x)  # type: ignore[return-value]
        i, lam = self.bracket(t)
        p = np.asarray(x, dtype=float)
        lo = np.asarray(fn(float(self.layer_times[i]), p))
        hi = np.asarray(fn(float(self.layer_times[i + 1]), p))
        return self._out((1.0 - lam) * lo + lam * hi, x)

    def dx_phi_between(self, t: float, x: ArrayLike) -> np.ndarray | float:
        """∂xΦ at an arbitrary time, interpolated linearly in ξ' between boundaries."""
        return self._between(self.dx_phi, t, x)

    def dxx_phi_between(self, t: float, x: ArrayLike) -> np.ndarray | float:
        return self._between(self.dxx_phi, t, x)

    # ─── Legendre transform h = Φ*(q,·) ────────────────────

    def inverse_dx(self, t: float, m: ArrayLike) -> np.ndarray | float:
        """(∂xΦ(t,·))^{-1}(m) by safeguarded Newton inside grid brackets."""
        mv = np.atleast_1d(np.asarray(m, dtype=float))
        if np.any(np.abs(mv) >= 1.0):
            raise DomainError("magnetization must satisfy |m| < 1 (the derivative of h diverges)")
        i = self.index(t)
        ev = self._evaluator(i)
        if ev.exact:
            return self._out(np.arctanh(mv), m)

        xs, vals = self.x, self.d1_values[i]
        if np.any(mv <= vals[0]) or np.any(mv >= vals[-1]):
            raise GridError(
                f"magnetization beyond the grid range [{vals[0]:.15f}, {vals[-1]:.15f}]",
                required_half_width=2.0 * float(self.grid.half_width or 0.0),
            )
        j = np.searchsorted(vals, mv, side="left")
        lo, hi = xs[j - 1].copy(), xs[j].copy()
        flo, fhi = vals[j - 1], vals[j]
        xk = lo + (mv - flo) / np.where(fhi > flo, fhi - flo, 1.0) * (hi - lo)
        for _ in range(100):
            res = ev.d1(xk) - mv
            if np.all(np.abs(res) < NEWTON_TOL):
                break
            lo = np.where(res < 0, xk, lo)
            hi = np.where(res > 0, xk, hi)
            slope = ev.d1_slope(xk)
            with np.errstate(divide="ignore", invalid="ignore"):
                step = xk - res / slope
            bad = ~np.isfinite(step) | (step <= lo) | (step >= hi)
            xk = np.where(bad, 0.5 * (lo + hi), step)
        else:
            logger.warning("inverse_dx stopped at max |residual| %.3e", np.max(np.abs(res)))
        return self._out(xk, m)

    def legendre_h(self, q: float, m: ArrayLike) -> tuple[np.ndarray | float, ...]:
        """(h, ∂m h, ∂mm h) at magnetization m, with h(q,m) = sup_x (xm − Φ(q,x))."""
        x = self.inverse_dx(q, m)
        xa = np.asarray(x)
        h = xa * np.asarray(m, dtype=float) - np.asarray(self.phi(q, xa))
        ddh = 1.0 / np.asarray(self.dxx_phi(q, xa))
        return self._out(h, m), x, self._out(ddh, m)

    def dq_h(self, q: float, m: ArrayLike) -> np.ndarray | float:
        """Right q-derivative (ξ''(q)/2)(∂xxΦ(q,x(m)) + ζ([0,q]) m²)."""
        mv = np.asarray(m, dtype=float)
        x = np.asarray(self.inverse_dx(q, mv))
        val = 0.5 * float(self.mixture.d2(q)) * (np.asarray(self.dxx_phi(q, x))
                                                 + self.mass(q) * mv * mv)
        return self._out(val, m)


# ─── Solver ───────────────────────────────────────────────


def solve(
    z: AtomicMeasure,
    m: Mixture,
    g: GridSpec | None = None,
    splits: Iterable[float] = (),
    strict: bool = True,
) -> ParisiSolution:
    """Solve the Parisi PDE for ζ = z by exact layer composition."""
    grid = (g or GridSpec.from_settings()).resolve(m)
    half_width = float(grid.half_width or 0.0)
    tol = get_settings().grid_tail_tol
    x = grid.axis()
    y, w = hermgauss(grid.quad_nodes)
    nodes = math.sqrt(2.0) * y
    log_w = np.log(w / math.sqrt(math.pi))

    times = layer_times(z, splits)
    k = len(times)
    shape = (k, x.size)
    phi, d1, d2, d3 = (np.empty(shape) for _ in range(4))
    phi[-1], d1[-1], d2[-1], d3[-1] = _Terminal().values(x)

    upper: _Terminal | _Interpolated = _Terminal()
    worst = 0.0
    for i in range(k - 2, -1, -1):
        a, b = float(times[i]), float(times[i + 1])
        mbar = float(z.cdf(a))
        sig2 = float(m.d1(b)) - float(m.d1(a))
        if sig2 <= 0.0:
            phi[i], d1[i], d2[i], d3[i] = phi[i + 1], d1[i + 1], d2[i + 1], d3[i + 1]
        else:
            sigma = math.sqrt(sig2)
            if not upper.exact:
                tail = _tail_weight(sigma, mbar, nodes, log_w, upper, half_width)
                worst = max(worst, tail)
                if tail > tol:
                    required = mbar * sig2 + 6.4 * sigma
                    msg = (f"grid too narrow on layer [{a:.6g}, {b:.6g}]: weight {tail:.3e} "
                           f"beyond L={half_width:.4g}; need L ≳ {required:.4g}")
                    if strict:
                        raise GridError(msg, required_half_width=required)
                    logger.warning(msg)
            phi[i], d1[i], d2[i], d3[i] = _layer_step(upper, x, sigma, mbar, nodes, log_w)
            logger.debug("layer [%.6g, %.6g] mass=%.6g sigma=%.6g", a, b, mbar, sigma)
        upper = _Interpolated(x, phi[i], d1[i], d2[i], d3[i])

    sol = ParisiSolution(
        measure=z, mixture=m, grid=grid, layer_times=times, x=x,
        phi_values=phi, d1_values=d1, d2_values=d2, d3_values=d3,
        diagnostics={"extension_weight": worst, "half_width": half_width,
                     "points": grid.points, "quad_nodes": grid.quad_nodes},
    )
    return sol


def dx_phi(sol: ParisiSolution, t: float, x: ArrayLike) -> np.ndarray | float:
    return sol.dx_phi(t, x)


def legendre_h(sol: ParisiSolution, q: float, mval: ArrayLike) -> tuple[np.ndarray | float, ...]:
    return sol.legendre_h(q, mval)


def dq_h(sol: ParisiSolution, q: float, mval: ArrayLike) -> np.ndarray | float:
    return sol.dq_h(q, mval)
