"""Optimal-control diffusion driven by a solved Parisi PDE.

    dX_t = ζ([0,t]) ξ''(t) ∂xΦ(t,X_t) dt + sqrt(ξ''(t)) dB_t,   X_0 = 0

Two ways of getting at the law of X:

1. ``KernelLaws`` pushes densities across each plateau with the exact
   transition kernel
       K(x,y) ∝ exp(−(y−x)²/(2σ²) + m̄(Φ(b,y) − Φ(a,x))),
   which is the default for every expectation that has a closed target.
2. ``simulate`` draws Monte Carlo paths, either exactly per plateau
   (inverse CDF of the kernel row on the grid) or by Euler–Maruyama in the
   ξ' clock with the drift interpolated between re-solved split times.

Paths are simulated in fixed-size chunks, each with its own SeedSequence
child, so results do not depend on how the work is scheduled. Antithetic
partners are interleaved (paths 2k and 2k+1) and standard errors are taken
over pair means.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.hermite import hermgauss
from numpy.typing import ArrayLike

from taplab.config import get_settings
from taplab.core.measures import EmpiricalMu
from taplab.core.parisi_pde import ParisiSolution, solve
from taplab.exceptions import DomainError, GridError

logger = logging.getLogger(__name__)

NORMALIZATION_TOL = 1e-6
EULER_SPLIT = 0.01
ROW_BATCH = 512
KERNEL_NODES = 24
MAX_ATOMS = 200_000


def _transition(sol: ParisiSolution, a: float, b: float) -> tuple[float, float]:
    """(σ, m̄) of the plateau [a,b]."""
    sig2 = float(sol.mixture.d1(b)) - float(sol.mixture.d1(a))
    return math.sqrt(max(sig2, 0.0)), sol.mass(a)


# ─── Exact plateau kernels ────────────────────────────────


class KernelLaws:
    """Laws of X_t at the layer boundaries at or after ``start_time``.

    The law at ``start_time`` is atomic (``points``/``weights``); later laws are
    densities on the solver grid, subsampled by ``stride``. A step narrower than
    three grid spacings is kept as Gauss–Hermite atoms of the kernel instead.
    """

    def __init__(
        self,
        sol: ParisiSolution,
        start_time: float = 0.0,
        points: ArrayLike = (0.0,),
        weights: ArrayLike | None = None,
        stride: int = 1,
    ):
        self.sol = sol
        self.x = sol.x[::stride]
        self.dx = float(self.x[1] - self.x[0])
        self.trap = np.full(self.x.size, self.dx)
        self.trap[[0, -1]] = 0.5 * self.dx
        i0 = sol.index(start_time)
        self.times = sol.layer_times[i0:]
        pts = np.atleast_1d(np.asarray(points, dtype=float))
        w = (np.full(pts.size, 1.0 / pts.size) if weights is None
             else np.atleast_1d(np.asarray(weights, dtype=float)))
        self._laws: list[tuple[str, np.ndarray, np.ndarray]] = [("atoms", pts, w / w.sum())]
        self._propagate()

    def _propagate(self) -> None:
        # Laws are pushed from the last stored law on the current plateau of ζ, so
        # layers finer than the grid accumulate into one resolvable Gaussian step.
        anchor_i = 0
        for i, (a, b) in enumerate(zip(self.times[:-1], self.times[1:], strict=True)):
            a, b = float(a), float(b)
            t0 = float(self.times[anchor_i])
            if self.sol.mass(t0) != self.sol.mass(a):
                anchor_i, t0 = i, a
            kind, pts, w = self._laws[anchor_i]
            sigma, mbar = _transition(self.sol, t0, b)
            if sigma == 0.0:
                self._laws.append(self._laws[-1])
                continue
            src_x, src_w = (pts, w) if kind == "atoms" else (self.x, w * self.trap)
            keep = src_w > 1e-300 if kind == "atoms" else src_w > 1e-18 * src_w.max()
            if sigma < 3.0 * self.dx:
                self._laws.append(self._expand(t0, b, sigma, mbar, src_x[keep], src_w[keep]))
                continue
            dens = self._push(t0, b, sigma, mbar, src_x[keep], src_w[keep])
            mass = float(np.sum(dens * self.trap))
            if abs(mass - 1.0) > NORMALIZATION_TOL:
                raise GridError(
                    f"transition [{t0:.6g}, {b:.6g}] lost mass {1.0 - mass:.3e} beyond the grid",
                    required_half_width=mbar * sigma * sigma + 6.4 * sigma
                    + float(np.max(np.abs(src_x[keep]))),
                )
            self._laws.append(("density", self.x, dens / mass))
            anchor_i = i + 1

    def _expand(self, a: float, b: float, sigma: float, mbar: float, src_x: np.ndarray,
                src_w: np.ndarray) -> tuple[str, np.ndarray, np.ndarray]:
        """Kernel law of a step too narrow for the grid, as Gauss–Hermite atoms per source."""
        if src_x.size * KERNEL_NODES > MAX_ATOMS:
            src_x, src_w = self._deposit(src_x, src_w)
        y, h = hermgauss(KERNEL_NODES)
        ys = src_x[:, None] + math.sqrt(2.0) * sigma * y[None, :]
        phi_b = np.asarray(self.sol.phi(b, ys.ravel())).reshape(ys.shape)
        log_k = mbar * (phi_b - np.asarray(self.sol.phi(a, src_x))[:, None])
        k = h[None, :] * np.exp(log_k - log_k.max(axis=1, keepdims=True))
        k /= k.sum(axis=1, keepdims=True)
        return "atoms", ys.ravel(), (src_w[:, None] * k).ravel() / src_w.sum()

    def _deposit(self, src_x: np.ndarray, src_w: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Linear (cloud-in-cell) deposit of atoms onto the grid nodes."""
        pos = np.clip((src_x - self.x[0]) / self.dx, 0.0, self.x.size - 1.0)
        lo = np.minimum(np.floor(pos).astype(int), self.x.size - 2)
        frac = pos - lo
        w = np.zeros(self.x.size)
        np.add.at(w, lo, src_w * (1.0 - frac))
        np.add.at(w, lo + 1, src_w * frac)
        keep = w > 0.0
        logger.debug("deposited %d atoms onto %d grid nodes", src_x.size, int(keep.sum()))
        return self.x[keep], w[keep]

    def _push(self, a: float, b: float, sigma: float, mbar: float, src_x: np.ndarray,
              src_w: np.ndarray) -> np.ndarray:
        phi_b = np.asarray(self.sol.phi(b, self.x))
        phi_a = np.asarray(self.sol.phi(a, src_x))
        norm = 1.0 / math.sqrt(2.0 * math.pi * sigma * sigma)
        out = np.zeros(self.x.size)
        for lo in range(0, src_x.size, ROW_BATCH):
            xs = src_x[lo:lo + ROW_BATCH, None]
            log_k = (-(self.x[None, :] - xs) ** 2 / (2.0 * sigma * sigma)
                     + mbar * (phi_b[None, :] - phi_a[lo:lo + ROW_BATCH, None]))
            out += src_w[lo:lo + ROW_BATCH] @ np.exp(log_k)
        return out * norm

    def _law(self, t: float) -> tuple[str, np.ndarray, np.ndarray]:
        hit = np.flatnonzero(np.abs(self.times - t) < 1e-12)
        if hit.size == 0:
            raise DomainError(f"t={t} is not a boundary at or after the start time")
        return self._laws[int(hit[0])]

    def expect(self, t: float, fn: Callable[[np.ndarray], np.ndarray]) -> float:
        """E[fn(X_t)]."""
        kind, pts, w = self._law(t)
        if kind == "atoms":
            return float(np.sum(w * fn(pts)))
        return float(np.sum(self.trap * w * fn(pts)))

    def density(self, t: float) -> np.ndarray:
        kind, _, w = self._law(t)
        if kind == "atoms":
            raise DomainError(f"law at t={t} is atomic")
        return w

    def cdf(self, t: float, values: ArrayLike) -> np.ndarray:
        """P(X_t ≤ v) from the grid density (trapezoid, linear between nodes)."""
        dens = self.density(t)
        cum = np.concatenate([[0.0], np.cumsum(0.5 * (dens[1:] + dens[:-1]) * self.dx)])
        return np.interp(np.asarray(values, dtype=float), self.x, cum / cum[-1])

    def m2(self, t: float) -> float:
        """E[(∂xΦ(t,X_t))²]."""
        return self.expect(t, lambda v: np.asarray(self.sol.dx_phi(t, v)) ** 2)

    def phi_mean(self, t: float) -> float:
        return self.expect(t, lambda v: np.asarray(self.sol.phi(t, v)))


def conditional_expectation(
    sol: ParisiSolution,
    s: float,
    x: float,
    t: float,
    fn: Callable[[np.ndarray], np.ndarray],
    stride: int = 1,
) -> float:
    """E[fn(X_t) | X_s = x] by plateau-kernel quadrature."""
    return KernelLaws(sol, s, [x], stride=stride).expect(t, fn)


# ─── Monte Carlo ensembles ────────────────────────────────


@dataclass(eq=False)
class ACEnsemble:
    """Samples of X at the layer boundaries of the solution they were drawn from."""

    times: np.ndarray
    samples: np.ndarray  # (len(times), paths)
    paths: int
    seed: int
    scheme: str
    antithetic: bool
    dt: float | None = None
    start_time: float = 0.0
    ito_residual: np.ndarray | None = None
    info: dict = field(default_factory=dict)

    @property
    def boundary_samples(self) -> dict[float, np.ndarray]:
        return {float(t): self.samples[i] for i, t in enumerate(self.times)}

    def at(self, t: float) -> np.ndarray:
        hit = np.flatnonzero(np.abs(self.times - t) < 1e-12)
        if hit.size == 0:
            raise DomainError(f"no samples stored at t={t}")
        return self.samples[int(hit[0])]

    def mean_se(self, values: np.ndarray) -> tuple[float, float]:
        return mean_se(values, self.antithetic)


def mean_se(values: np.ndarray, antithetic: bool = False) -> tuple[float, float]:
    """Sample mean and its standard error, over antithetic pair means when paired."""
    v = np.asarray(values, dtype=float)
    if antithetic and v.size % 2 == 0:
        v = v.reshape(-1, 2).mean(axis=1)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(v.size))


def _normals(rng: np.random.Generator, size: int, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return rng.standard_normal(size)
    half = rng.standard_normal(size // 2)
    out = np.empty(size)
    out[0::2], out[1::2] = half, -half
    return out


def _uniforms(rng: np.random.Generator, size: int, antithetic: bool) -> np.ndarray:
    if not antithetic:
        return rng.random(size)
    half = rng.random(size // 2)
    out = np.empty(size)
    out[0::2], out[1::2] = half, 1.0 - half
    return out


def _sample_rows(sol: ParisiSolution, a: float, b: float, sigma: float, mbar: float,
                 x0: np.ndarray, u: np.ndarray) -> np.ndarray:
    """Inverse-CDF draws of X_b given X_a = x0 from the exact kernel rows."""
    grid = sol.x
    dx = grid[1] - grid[0]
    phi_b = np.asarray(sol.phi(b, grid))
    out = np.empty_like(x0)
    for lo in range(0, x0.size, ROW_BATCH):
        xs = x0[lo:lo + ROW_BATCH, None]
        log_k = -(grid[None, :] - xs) ** 2 / (2.0 * sigma * sigma) + mbar * phi_b[None, :]
        log_k -= log_k.max(axis=1, keepdims=True)
        dens = np.exp(log_k)
        if np.any(dens[:, [0, -1]] > 1e-12):
            raise GridError(
                f"kernel row on [{a:.6g}, {b:.6g}] does not decay inside the grid",
                required_half_width=float(np.max(np.abs(xs))) + mbar * sigma * sigma
                + 6.4 * sigma,
            )
        cum = np.concatenate([np.zeros((dens.shape[0], 1)),
                              np.cumsum(0.5 * (dens[:, 1:] + dens[:, :-1]) * dx, axis=1)], axis=1)
        cum /= cum[:, -1:]
        target = u[lo:lo + ROW_BATCH, None]
        idx = np.clip((cum < target).sum(axis=1), 1, grid.size - 1)
        rows = np.arange(idx.size)
        c0, c1 = cum[rows, idx - 1], cum[rows, idx]
        frac = np.where(c1 > c0, (target[:, 0] - c0) / np.where(c1 > c0, c1 - c0, 1.0), 0.5)
        out[lo:lo + ROW_BATCH] = grid[idx - 1] + frac * dx
    return out


def _plateau_exact(sol: ParisiSolution, times: np.ndarray, x0: np.ndarray,
                   rng: np.random.Generator, antithetic: bool) -> np.ndarray:
    out = np.empty((times.size, x0.size))
    out[0] = x0
    dx = sol.x[1] - sol.x[0]
    for i, (a, b) in enumerate(zip(times[:-1], times[1:], strict=True)):
        a, b = float(a), float(b)
        sigma, mbar = _transition(sol, a, b)
        prev = out[i]
        if sigma == 0.0:
            out[i + 1] = prev
        elif sigma < 3.0 * dx:
            drift = mbar * sigma * sigma * np.asarray(sol.dx_phi(a, prev))
            out[i + 1] = prev + drift + sigma * _normals(rng, prev.size, antithetic)
        else:
            u = _uniforms(rng, prev.size, antithetic)
            out[i + 1] = _sample_rows(sol, a, b, sigma, mbar, prev, u)
    return out


def _euler_clock(sol: ParisiSolution, start: float, dt: float) -> tuple[ParisiSolution,
                                                                         np.ndarray]:
    """Re-solve with split points every EULER_SPLIT and build the step times."""
    splits = np.concatenate([np.arange(start, 1.0, EULER_SPLIT), sol.layer_times])
    fine = solve(sol.measure, sol.mixture, sol.grid, splits=splits[(splits > 0) & (splits < 1)])
    steps = np.concatenate([np.arange(start, 1.0, dt), fine.layer_times])
    steps = np.unique(np.round(steps[steps >= start - 1e-15], 14))
    return fine, steps


def _euler(sol: ParisiSolution, fine: ParisiSolution, steps: np.ndarray, times: np.ndarray,
           x0: np.ndarray, rng: np.random.Generator, antithetic: bool) -> tuple[np.ndarray,
                                                                                 np.ndarray]:
    out = np.empty((times.size, x0.size))
    x = x0.copy()
    phi_start = np.asarray(sol.phi(float(times[0]), x0))
    integral = np.zeros_like(x)
    record = {round(float(t), 12): i for i, t in enumerate(times)}
    out[0] = x
    for t0, t1 in zip(steps[:-1], steps[1:], strict=True):
        t0, t1 = float(t0), float(t1)
        dvar = float(sol.mixture.d1(t1)) - float(sol.mixture.d1(t0))
        u = np.asarray(fine.dx_phi_between(t0, x))
        uxx = np.asarray(fine.dxx_phi_between(t0, x))
        mbar = float(sol.measure.cdf(t0 + 1e-12))
        db = math.sqrt(max(dvar, 0.0)) * _normals(rng, x.size, antithetic)
        integral += 0.5 * mbar * dvar * u * u + u * db + 0.5 * uxx * (db * db - dvar)
        x = x + mbar * dvar * u + db
        key = round(t1, 12)
        if key in record:
            out[record[key]] = x
    residual = np.asarray(sol.phi(1.0, x)) - phi_start - integral
    return out, residual


def _run(
    sol: ParisiSolution,
    x_start: Callable[[np.random.Generator, int], np.ndarray],
    start_time: float,
    scheme: str,
    paths: int | None,
    seed: int | None,
    dt: float | None,
    antithetic: bool | None,
) -> ACEnsemble:
    s = get_settings()
    paths = paths or s.mc_paths
    seed = s.mc_seed if seed is None else seed
    antithetic = s.mc_antithetic if antithetic is None else antithetic
    if scheme not in ("plateau_exact", "euler"):
        raise DomainError(f"Unknown scheme '{scheme}'. Available: plateau_exact, euler")
    if antithetic and paths % 2:
        paths += 1
        logger.info("rounded paths up to %d for antithetic pairing", paths)
    chunk = max(2, s.mc_chunk_size - s.mc_chunk_size % 2)
    i0 = sol.index(start_time)
    times = sol.layer_times[i0:]

    fine = steps = None
    if scheme == "euler":
        dt = dt or s.mc_dt
        if dt > 1e-3:
            raise DomainError(f"euler requires dt <= 1e-3, got {dt}")
        fine, steps = _euler_clock(sol, start_time, dt)

    n_chunks = -(-paths // chunk)
    children = np.random.SeedSequence(seed).spawn(n_chunks)
    blocks, residuals = [], []
    for c, child in enumerate(children):
        size = min(chunk, paths - c * chunk)
        rng = np.random.default_rng(child)
        x0 = x_start(rng, size)
        if scheme == "plateau_exact":
            blocks.append(_plateau_exact(sol, times, x0, rng, antithetic))
        else:
            block, res = _euler(sol, fine, steps, times, x0, rng, antithetic)  # type: ignore
            blocks.append(block)
            residuals.append(res)
        logger.debug("chunk %d/%d done (%d paths)", c + 1, n_chunks, size)

    ens = ACEnsemble(
        times=times, samples=np.concatenate(blocks, axis=1), paths=paths, seed=seed,
        scheme=scheme, antithetic=antithetic, dt=dt if scheme == "euler" else None,
        start_time=start_time,
        ito_residual=np.concatenate(residuals) if residuals else None,
    )
    logger.info("simulated %d paths (%s) over %d boundaries", paths, scheme, times.size)
    return ens


def simulate(
    sol: ParisiSolution,
    scheme: str = "plateau_exact",
    paths: int | None = None,
    seed: int | None = None,
    dt: float | None = None,
    antithetic: bool | None = None,
) -> ACEnsemble:
    """Monte Carlo paths of X from X_0 = 0, recorded at every layer boundary."""
    return _run(sol, lambda rng, k: np.zeros(k), 0.0, scheme, paths, seed, dt, antithetic)


def law_match_start(
    sol: ParisiSolution,
    mu: EmpiricalMu,
    paths: int | None = None,
    seed: int | None = None,
    scheme: str = "plateau_exact",
    dt: float | None = None,
) -> ACEnsemble:
    """Paths on [q_μ,1] started at X_q = (∂xΦ(q,·))^{-1}(m_i), m_i uniform over μ."""
    q = mu.q
    starts = np.asarray(sol.inverse_dx(q, mu.points))

    def draw(rng: np.random.Generator, k: int) -> np.ndarray:
        return starts[rng.integers(0, starts.size, size=k)]

    return _run(sol, draw, q, scheme, paths, seed, dt, antithetic=False)


def ito_residual_rms(ens: ACEnsemble) -> float:
    """RMS over paths of the discretized Y_1 − Y_0.

    The sums carry the ½∂xxΦ(ΔB² − Δξ') correction, so the residual is first order in dt.
    """
    if ens.ito_residual is None:
        raise DomainError("Itô residuals are only recorded by the euler scheme")
    return float(np.sqrt(np.mean(ens.ito_residual ** 2)))


# ─── Moment estimators ────────────────────────────────────


@dataclass(frozen=True)
class MomentEstimate:
    name: str
    s: float | None
    t: float
    estimate: float
    se: float


@dataclass
class MomentTable:
    rows: list[MomentEstimate]

    def get(self, name: str, t: float, s: float | None = None) -> MomentEstimate:
        for r in self.rows:
            if r.name == name and abs(r.t - t) < 1e-12 and (
                    s is None and r.s is None or s is not None and r.s is not None
                    and abs(r.s - s) < 1e-12):
                return r
        raise KeyError(f"no moment '{name}' at s={s}, t={t}")


def moments(e: ACEnsemble, sol: ParisiSolution) -> MomentTable:
    """E[M_t], E[M_t²], E[X_tM_t], E[Φ(t,X_t)] per boundary and the pairwise increments."""
    rows: list[MomentEstimate] = []
    xs = {float(t): e.at(float(t)) for t in e.times}
    ms = {t: np.asarray(sol.dx_phi(t, x)) for t, x in xs.items()}
    for t in xs:
        for name, vals in (("M", ms[t]), ("M2", ms[t] ** 2), ("XM", xs[t] * ms[t]),
                           ("Phi", np.asarray(sol.phi(t, xs[t])))):
            rows.append(MomentEstimate(name, None, t, *e.mean_se(vals)))
    ts = sorted(xs)
    for i, s in enumerate(ts):
        for t in ts[i + 1:]:
            dx_, dm = xs[t] - xs[s], ms[t] - ms[s]
            for name, vals in (("dX_M", dx_ * ms[s]), ("dM_X", dm * xs[s]), ("dM_dX", dm * dx_)):
                rows.append(MomentEstimate(name, s, t, *e.mean_se(vals)))
    return MomentTable(rows)


# ─── Closed-form targets ──────────────────────────────────


def target_delta_x_m(sol: ParisiSolution, s: float, t: float, laws: KernelLaws) -> float:
    """E[(X_t−X_s)M_s] = E[M_s²] ∫_s^t ζ([0,u]) ξ''(u) du."""
    drift = sol.measure.cdf_integral(s, t, primitive=lambda v: float(sol.mixture.d1(v)))
    return laws.m2(s) * drift


def target_xm(sol: ParisiSolution, t: float, laws: KernelLaws) -> float:
    """E[X_tM_t] = ξ'(t) − ∫ ξ'(min(t,u)) E[M_u²] ζ(du)."""
    total = float(sol.mixture.d1(t))
    for loc, w in zip(sol.measure.locations, sol.measure.weights, strict=True):
        total -= w * float(sol.mixture.d1(min(t, float(loc)))) * laws.m2(float(loc))
    return total


def ks_distance(samples: np.ndarray, laws: KernelLaws, t: float) -> float:
    """Kolmogorov–Smirnov distance between samples and the kernel law at t."""
    xs = np.sort(np.asarray(samples, dtype=float))
    n = xs.size
    f = laws.cdf(t, xs)
    upper = np.arange(1, n + 1) / n - f
    lower = f - np.arange(0, n) / n
    return float(max(upper.max(), lower.max()))


def e_m2_profile(sol: ParisiSolution, s_grid: Sequence[float], start_time: float = 0.0,
                 points: ArrayLike = (0.0,), stride: int = 4) -> tuple[ParisiSolution, KernelLaws]:
    """Re-solve with ``s_grid`` as split points and return kernel laws on the refined layers."""
    splits = [s for s in s_grid if 0.0 < s < 1.0]
    fine = solve(sol.measure, sol.mixture, sol.grid, splits=list(sol.layer_times) + splits)
    return fine, KernelLaws(fine, start_time, points, stride=stride)
