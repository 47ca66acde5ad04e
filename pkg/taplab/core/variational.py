"""Optimization over prefix measures and the complexity curves built on it.

Ordered atom locations and masses are handled by unconstrained coordinates:

1. An increasing sequence in (lo, hi) is a chain of sigmoid sticks,
   v_k = v_{k−1} + (hi − v_{k−1}) σ(θ_k)
2. Tail weights are stick-broken (or softmax, for reparameterization checks)
3. The Parisi functional is minimized by Nelder–Mead in these coordinates;
   a callback stops the simplex after a configurable number of iterations
   without improvement and the best point so far is returned, flagged.
   Seeded restarts pick the best simplex run, which BFGS then polishes

Stationary points of the complexity functional are found by damped Newton
on the residual system, with a finite-difference Jacobian and a bracketed
fallback for a single prefix atom.
"""

import logging
import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import CubicSpline
from scipy.optimize import OptimizeResult, brentq, minimize, minimize_scalar
from scipy.special import expit, logit, softmax

from taplab.config import get_settings
from taplab.core.ac_sde import KernelLaws
from taplab.core.functionals import (
    OptimalityReport,
    optimality_report,
    parisi_value,
    tap_value,
    txi2_integral,
)
from taplab.core.measures import AtomicMeasure, EmpiricalMu, PrefixSpec
from taplab.core.mixture import Mixture
from taplab.core.parisi_pde import GridSpec, solve
from taplab.exceptions import ConvergenceError, DomainError, TapLabError

logger = logging.getLogger(__name__)

PENALTY = 1e6
EDGE = 1e-9


# ─── Coordinates ──────────────────────────────────────────


def _to_increasing(theta: np.ndarray, lo: float, hi: float = 1.0) -> np.ndarray:
    out = np.empty(theta.size)
    prev = lo
    for k, th in enumerate(theta):
        prev = prev + (hi - prev) * float(expit(th))
        out[k] = prev
    return out


def _from_increasing(values: Sequence[float], lo: float, hi: float = 1.0) -> np.ndarray:
    out = np.empty(len(values))
    prev = lo
    for k, v in enumerate(values):
        frac = np.clip((v - prev) / (hi - prev), EDGE, 1.0 - EDGE)
        out[k] = float(logit(frac))
        prev = v
    return out


def _to_simplex(theta: np.ndarray, param: str) -> np.ndarray:
    if param == "softmax":
        return softmax(np.concatenate([theta, [0.0]]))
    w = np.empty(theta.size + 1)
    left = 1.0
    for k, th in enumerate(theta):
        w[k] = left * float(expit(th))
        left -= w[k]
    w[-1] = left
    return w


def _from_simplex(w: Sequence[float], param: str) -> np.ndarray:
    w = np.clip(np.asarray(w, dtype=float), EDGE, None)
    w = w / w.sum()
    if param == "softmax":
        return np.log(w[:-1] / w[-1])
    out = np.empty(w.size - 1)
    left = 1.0
    for k in range(w.size - 1):
        out[k] = float(logit(np.clip(w[k] / left, EDGE, 1.0 - EDGE)))
        left -= w[k]
    return out


@dataclass
class _Layout:
    """Which prefix components are free and how they map to a coordinate vector."""

    n: int
    tail_atoms: int
    u_fixed: tuple[float, ...] | None
    q_fixed: tuple[float, ...] | None
    u_top: float | None
    weights_param: str

    def __post_init__(self) -> None:
        if self.n < 1 or self.tail_atoms < 1:
            raise DomainError("need n >= 1 and tail_atoms >= 1")
        if self.u_fixed is not None and len(self.u_fixed) != self.n:
            raise DomainError(f"expected {self.n} fixed u values")
        if self.q_fixed is not None and len(self.q_fixed) != self.n:
            raise DomainError(f"expected {self.n} fixed q values")
        if self.weights_param not in ("stick", "softmax"):
            raise DomainError(f"Unknown weights parameterization '{self.weights_param}'")

    @property
    def n_u(self) -> int:
        if self.u_fixed is not None:
            return 0
        return self.n - 1 if self.u_top is not None else self.n

    @property
    def n_q(self) -> int:
        return 0 if self.q_fixed is not None else self.n

    @property
    def dim(self) -> int:
        return self.n_u + self.n_q + 2 * (self.tail_atoms - 1)

    def decode(self, theta: np.ndarray) -> PrefixSpec:
        i = 0
        if self.u_fixed is not None:
            u = np.asarray(self.u_fixed)
        elif self.u_top is not None:
            u = np.append(_to_increasing(theta[:self.n_u], 0.0, self.u_top), self.u_top)
        else:
            u = _to_increasing(theta[:self.n_u], 0.0)
        i += self.n_u
        q = (np.asarray(self.q_fixed) if self.q_fixed is not None
             else _to_increasing(theta[i:i + self.n_q], 0.0))
        i += self.n_q
        k = self.tail_atoms - 1
        locs = np.concatenate([[q[-1]], _to_increasing(theta[i:i + k], float(q[-1]))])
        weights = _to_simplex(theta[i + k:i + 2 * k], self.weights_param)
        return PrefixSpec(tuple(u.tolist()), tuple(q.tolist()), AtomicMeasure(locs, weights))

    def encode(self, spec: PrefixSpec) -> np.ndarray:
        parts = []
        if self.u_fixed is None:
            if self.u_top is not None:
                parts.append(_from_increasing(spec.u[:-1], 0.0, self.u_top))
            else:
                parts.append(_from_increasing(spec.u, 0.0))
        if self.q_fixed is None:
            parts.append(_from_increasing(spec.q, 0.0))
        k = self.tail_atoms - 1
        locs = list(spec.tail.locations[1:k + 1])
        weights = list(spec.tail.weights[:k + 1])
        while len(locs) < k:
            locs.append(locs[-1] + 0.5 * (1.0 - locs[-1]) if locs else
                        spec.q[-1] + 0.5 * (1.0 - spec.q[-1]))
        while len(weights) < k + 1:
            weights.append(1e-3)
        parts.append(_from_increasing(locs, spec.q[-1]))
        parts.append(_from_simplex(weights, self.weights_param))
        return np.concatenate(parts) if parts else np.empty(0)

    def default_start(self) -> PrefixSpec:
        n = self.n
        u = (self.u_fixed if self.u_fixed is not None else
             tuple(np.linspace(0.0, self.u_top, n + 1)[1:]) if self.u_top is not None else
             tuple((np.arange(1, n + 1) / (n + 1)).tolist()))
        q = (self.q_fixed if self.q_fixed is not None else
             tuple((0.9 * np.arange(1, n + 1) / (n + 1)).tolist()))
        k = self.tail_atoms
        locs = np.linspace(q[-1], q[-1] + 0.8 * (1.0 - q[-1]), k)
        return PrefixSpec(u, q, AtomicMeasure(locs, np.full(k, 1.0 / k)))


# ─── Prefix minimization ──────────────────────────────────


@dataclass
class PrefixResult:
    spec: PrefixSpec
    value: float
    converged: bool
    iterations: int
    evaluations: int
    info: dict = field(default_factory=dict)

    @property
    def measure(self) -> AtomicMeasure:
        return self.spec.assemble()


def _nelder_mead(
    objective: Callable[[np.ndarray], float],
    x0: np.ndarray,
    stall: int,
    max_iter: int,
) -> tuple[np.ndarray, float, bool, int, int]:
    """Nelder–Mead with a stall guard; returns (x, f, converged, iterations, evaluations)."""
    if x0.size == 0:
        return x0, objective(x0), True, 0, 1
    state = {"best": math.inf, "since": 0, "iter": 0, "stalled": False}

    def callback(intermediate_result: OptimizeResult) -> None:
        state["iter"] += 1
        if intermediate_result.fun < state["best"] - 1e-14:
            state["best"], state["since"] = intermediate_result.fun, 0
        else:
            state["since"] += 1
            if state["since"] >= stall:
                state["stalled"] = True
                raise StopIteration

    res = minimize(objective, x0, method="Nelder-Mead", callback=callback,
                   options={"xatol": 1e-9, "fatol": 1e-13, "maxiter": max_iter,
                            "adaptive": x0.size > 3})
    converged = bool(res.success) and not state["stalled"]
    if not converged:
        logger.warning("simplex stopped without convergence: %s", res.message)
    return np.asarray(res.x), float(res.fun), converged, int(res.nit), int(res.nfev)


def _polish(objective: Callable[[np.ndarray], float], x: np.ndarray,
            value: float) -> tuple[np.ndarray, float, int]:
    """Quasi-Newton refinement of a simplex point; kept only when it lowers the value."""
    res = minimize(objective, x, method="BFGS", options={"gtol": 1e-10, "maxiter": 50})
    if np.isfinite(res.fun) and res.fun < value:
        return np.asarray(res.x), float(res.fun), int(res.nfev)
    return x, value, int(res.nfev)


def _first_order_info(spec: PrefixSpec, m: Mixture, value: float,
                      grid: GridSpec | None) -> dict:
    try:
        report = optimality_report(spec.assemble(), m, value, n=spec.n, grid=grid)
    except TapLabError as exc:
        logger.warning("no first-order residuals for the prefix minimum: %s", exc)
        return {"first_order": None, "first_order_max": math.nan, "support_gap": math.nan}
    return {"first_order": report.first_order.tolist(),
            "first_order_max": float(np.max(np.abs(report.first_order))),
            "support_gap": report.support_gap}


def minimize_parisi_prefix(
    m: Mixture,
    n: int = 1,
    u: Sequence[float] | None = None,
    q: Sequence[float] | None = None,
    tail_atoms: int = 1,
    grid: GridSpec | None = None,
    u_top: float | None = None,
    initial: PrefixSpec | None = None,
    seed: int | None = None,
    weights_param: str = "stick",
) -> PrefixResult:
    """Minimize 𝒫 over Prefix_{n+1}(u;q) with a tail of at most ``tail_atoms`` atoms.

    ``u``/``q`` given means held fixed; ``u_top`` fixes only u_n. With ``seed``
    the tail coordinates start from a random point. The simplex is restarted
    from ``multistart`` seeded perturbations of the start, the best run is
    polished by BFGS, and its first-order residuals go into ``info``.
    """
    s = get_settings()
    layout = _Layout(n, tail_atoms, tuple(u) if u is not None else None,
                     tuple(q) if q is not None else None, u_top, weights_param)

    def objective(theta: np.ndarray) -> float:
        try:
            spec = layout.decode(theta)
            return parisi_value(spec.assemble(), m, grid)
        except TapLabError:
            return PENALTY

    start = initial if initial is not None else layout.default_start()
    x0 = layout.encode(start)
    rng = np.random.default_rng(s.mc_seed if seed is None else seed)
    if seed is not None and tail_atoms > 1:
        k = 2 * (tail_atoms - 1)
        x0[-k:] = rng.normal(scale=1.5, size=k)
    starts = [x0]
    if x0.size:
        starts += [x0 + rng.normal(scale=0.5, size=x0.size)
                   for _ in range(max(s.multistart, 1) - 1)]

    best: tuple[np.ndarray, float, bool] | None = None
    start_values, nit_total, nfev_total = [], 0, 0
    for x_start in starts:
        x, value, converged, nit, nfev = _nelder_mead(objective, x_start,
                                                      s.simplex_stall_iterations,
                                                      s.simplex_max_iterations)
        start_values.append(value)
        nit_total += nit
        nfev_total += nfev
        if best is None or value < best[1]:
            best = (x, value, converged)
    x, value, converged = best  # type: ignore[misc]
    gain = 0.0
    if x.size:
        polished, polished_value, nfev = _polish(objective, x, value)
        nfev_total += nfev
        gain = value - polished_value
        x, value = polished, polished_value

    spec = layout.decode(x)
    info = {"starts": len(starts), "start_values": start_values, "polish_gain": gain}
    info.update(_first_order_info(spec, m, value, grid))
    logger.info("prefix minimum %.10f (n=%d, tail=%d, converged=%s, %d evals, %d starts)",
                value, n, tail_atoms, converged, nfev_total, len(starts))
    return PrefixResult(spec, value, converged, nit_total, nfev_total, info)


def tap_min(
    mu: EmpiricalMu,
    m: Mixture,
    atoms: int = 2,
    grid: GridSpec | None = None,
) -> tuple[AtomicMeasure, float, bool]:
    """TAP(μ) = inf over atomic ζ on [q_μ,1] with an atom at q_μ plus ``atoms``−1 above."""
    q = mu.q
    k = atoms - 1

    def decode(theta: np.ndarray) -> AtomicMeasure:
        locs = np.concatenate([[q], _to_increasing(theta[:k], q)])
        return AtomicMeasure(locs, _to_simplex(theta[k:], "stick"))

    def objective(theta: np.ndarray) -> float:
        try:
            return tap_value(mu, decode(theta), m, grid)
        except TapLabError:
            return PENALTY

    x0 = np.concatenate([_from_increasing(np.linspace(q, 1.0, k + 2)[1:-1], q),
                         _from_simplex(np.full(atoms, 1.0 / atoms), "stick")])
    s = get_settings()
    x, value, converged, _, _ = _nelder_mead(objective, x0, s.simplex_stall_iterations,
                                             s.simplex_max_iterations)
    return decode(x), value, converged


# ─── Stationarity of the complexity functional ────────────


def breakpoint_mass(
    m: Mixture,
    q: float,
    grid: GridSpec | None = None,
    tail: AtomicMeasure | None = None,
) -> float:
    """u ∈ (0,1) with E[M_q²] = q for ζ = uδ_0 + (1−u)·tail (tail δ_q by default)."""
    tail = tail or AtomicMeasure.delta(q)

    def residual(u: float) -> float:
        z = PrefixSpec((u,), (q,), tail).assemble()
        return KernelLaws(solve(z, m, grid)).m2(q) - q

    lo, hi = 1e-6, 1.0 - 1e-6
    r_lo, r_hi = residual(lo), residual(hi)
    if r_lo * r_hi > 0:
        raise ConvergenceError(
            f"E[M_q²] − q does not change sign in u at q={q}", trace=[r_lo, r_hi])
    return float(brentq(residual, lo, hi, xtol=1e-12, rtol=1e-12))


@dataclass
class StationaryResult:
    u: tuple[float, ...]
    q: tuple[float, ...]
    spec: PrefixSpec | None
    value: float
    parisi: float
    converged: bool
    residuals: np.ndarray
    trace: list[float] = field(default_factory=list)
    alternatives: list["StationaryResult"] = field(default_factory=list)
    f: float = 0.0

    @property
    def closed_form(self) -> float:
        """u_n(Φ_ζ(0,0) − ½∫tξ''ζ − f), recomputed from the stored Parisi value."""
        return self.u[-1] * (self.parisi - self.f)


def _stationary_residuals(m: Mixture, f: float, u: np.ndarray, q: np.ndarray,
                          grid: GridSpec | None) -> np.ndarray:
    z = PrefixSpec(tuple(u), tuple(q)).assemble()
    sol = solve(z, m, grid)
    laws = KernelLaws(sol)
    full = txi2_integral(z, m, 0.0, 1.0)
    parisi = parisi_value(z, m, sol=sol)
    stat = [laws.m2(float(qk)) - qk for qk in q]
    levels = [parisi] * (len(q) - 1) + [f]
    energy = [-laws.phi_mean(float(qk)) + 0.5 * full + 0.5 * txi2_integral(z, m, 0.0, float(qk))
              + lvl for qk, lvl in zip(q, levels, strict=True)]
    return np.array(stat + energy)


def _valid(u: np.ndarray, q: np.ndarray) -> bool:
    return bool(np.all(u > 0) and np.all(u < 1) and np.all(np.diff(u) > 0)
                and np.all(q > 0) and np.all(q < 1) and np.all(np.diff(q) > 0))


def _newton(m: Mixture, f: float, u0: np.ndarray, q0: np.ndarray, grid: GridSpec | None,
            tol: float, max_iter: int) -> tuple[np.ndarray, np.ndarray, np.ndarray, list[float]]:
    n = u0.size
    v = np.concatenate([u0, q0])

    def res(vec: np.ndarray) -> np.ndarray:
        return _stationary_residuals(m, f, vec[:n], vec[n:], grid)

    r = res(v)
    trace = [float(np.max(np.abs(r)))]
    h = 1e-5
    for _ in range(max_iter):
        if trace[-1] < tol:
            break
        jac = np.empty((2 * n, 2 * n))
        for j in range(2 * n):
            e = np.zeros(2 * n)
            e[j] = h
            jac[:, j] = (res(v + e) - res(v - e)) / (2 * h)
        try:
            step = np.linalg.solve(jac, -r)
        except np.linalg.LinAlgError:
            break
        lam = 1.0
        while lam > 1e-4:
            cand = v + lam * step
            if _valid(cand[:n], cand[n:]):
                try:
                    r_new = res(cand)
                except TapLabError:
                    r_new = None
                if r_new is not None and np.max(np.abs(r_new)) < trace[-1]:
                    v, r = cand, r_new
                    break
            lam *= 0.5
        else:
            break
        trace.append(float(np.max(np.abs(r))))
        logger.debug("newton step: max residual %.3e (damping %.3g)", trace[-1], lam)
    return v[:n], v[n:], r, trace


def _bisection_single(m: Mixture, f: float, bracket: tuple[float, float],
                      grid: GridSpec | None) -> tuple[float, float]:
    """n = 1 fallback: u from the breaking-point condition, q by bracketing the energy residual."""
    def energy(q: float) -> float:
        u = breakpoint_mass(m, q, grid)
        return float(_stationary_residuals(m, f, np.array([u]), np.array([q]), grid)[1])

    q = brentq(energy, *bracket, xtol=1e-12)
    return breakpoint_mass(m, q, grid), float(q)


def _starts(n: int, count: int, bracket: tuple[float, float], m: Mixture,
            grid: GridSpec | None) -> list[tuple[np.ndarray, np.ndarray]]:
    starts = []
    for j in range(count):
        frac = (j + 0.5) / count
        if n == 1:
            q0 = bracket[0] + frac * (bracket[1] - bracket[0])
            try:
                u0 = breakpoint_mass(m, q0, grid)
            except ConvergenceError:
                u0 = 0.5
            starts.append((np.array([u0]), np.array([q0])))
        else:
            q_top = bracket[0] + frac * (bracket[1] - bracket[0])
            q0 = q_top * np.arange(1, n + 1) / n
            u0 = (0.25 + 0.5 * frac) * np.arange(1, n + 1) / n
            starts.append((u0, q0))
    return starts


def stationary_uq(
    m: Mixture,
    f: float,
    n: int = 1,
    bracket: tuple[float, float] = (0.05, 0.95),
    grid: GridSpec | None = None,
    multistart: int | None = None,
) -> StationaryResult:
    """Critical points of (u,q) ↦ u_n(P^{(n)}(u;q) − f), with δ_{q_n} tails.

    All distinct converged points of a deterministic multistart are kept in
    ``alternatives``; the one with the smallest residual is returned first.
    """
    s = get_settings()
    count = multistart or s.multistart
    tol = s.newton_tol
    accept = 1e-3 * s.residual_tol
    found: list[StationaryResult] = []
    traces: list[float] = []
    for u0, q0 in _starts(n, count, bracket, m, grid):
        try:
            u, q, r, trace = _newton(m, f, u0, q0, grid, tol, s.newton_max_iterations)
        except TapLabError as exc:
            logger.debug("start (%s, %s) failed: %s", u0, q0, exc)
            continue
        traces.extend(trace)
        if trace[-1] < accept:
            found.append(_result(m, f, u, q, r, trace, grid))

    if not found and n == 1:
        try:
            u1, q1 = _bisection_single(m, f, bracket, grid)
            r = _stationary_residuals(m, f, np.array([u1]), np.array([q1]), grid)
            found.append(_result(m, f, np.array([u1]), np.array([q1]), r, traces, grid))
        except (ValueError, TapLabError) as exc:
            logger.warning("bisection fallback failed: %s", exc)

    if not found:
        logger.warning("no stationary point found for f=%.6g (n=%d)", f, n)
        return StationaryResult(u=(), q=(), spec=None, value=math.nan, parisi=math.nan,
                                converged=False, residuals=np.array([]), trace=traces, f=f)

    unique: list[StationaryResult] = []
    for cand in sorted(found, key=lambda c: float(np.max(np.abs(c.residuals)))):
        if all(np.max(np.abs(np.subtract(cand.q, o.q))) > 1e-6 for o in unique):
            unique.append(cand)
    best = unique[0]
    best.alternatives = unique[1:]
    if best.alternatives:
        logger.info("stationary_uq found %d distinct points", len(unique))
    return best


def _result(m: Mixture, f: float, u: np.ndarray, q: np.ndarray, r: np.ndarray,
            trace: list[float], grid: GridSpec | None) -> StationaryResult:
    spec = PrefixSpec(tuple(u.tolist()), tuple(q.tolist()))
    parisi = parisi_value(spec.assemble(), m, grid)
    return StationaryResult(u=spec.u, q=spec.q, spec=spec, value=spec.u[-1] * (parisi - f),
                            parisi=parisi, converged=True, residuals=r, trace=list(trace),
                            f=f)


def stationary_report(
    res: StationaryResult, m: Mixture, grid: GridSpec | None = None
) -> OptimalityReport:
    """Optimality report at a stationary point."""
    if res.spec is None:
        raise DomainError("no stationary point to report on")
    return optimality_report(res.spec.assemble(), m, res.f, n=len(res.q), grid=grid)


# ─── Complexity curves ────────────────────────────────────


@dataclass
class ComplexityCurve:
    """Tabulated (θ, Λ(θ)) or (f, −Λ*(f)) with per-point minimizers and diagnostics."""

    kind: str
    axis: np.ndarray
    values: np.ndarray
    minimizers: list[PrefixSpec | None]
    converged: list[bool]
    residuals: list[float]
    argmin: list[float] | None = None
    extrapolated: list[bool] | None = None
    domain_closed: bool = False

    def __post_init__(self) -> None:
        self.axis = np.asarray(self.axis, dtype=float)
        self.values = np.asarray(self.values, dtype=float)
        if np.any(np.diff(self.axis) <= 0):
            raise DomainError("curve axis must be strictly increasing")

    def to_rows(self) -> list[dict]:
        rows = []
        for j, a in enumerate(self.axis):
            spec = self.minimizers[j]
            row = {
                "axis": float(a),
                "value": float(self.values[j]),
                "converged": bool(self.converged[j]),
                "residual_max": float(self.residuals[j]),
                "spec": spec.serialize() if spec is not None else "",
            }
            if self.argmin is not None:
                row["argmin"] = self.argmin[j]
            if self.extrapolated is not None:
                row["extrapolated"] = self.extrapolated[j]
            rows.append(row)
        return rows


def lambda_curve(
    m: Mixture,
    thetas: Sequence[float],
    variant: str = "annealed",
    atoms: int = 2,
    grid: GridSpec | None = None,
) -> ComplexityCurve:
    """Λ(θ) = θ inf_{ζ({0})=θ} 𝒫(ζ), or the quenched Λ̃ with ζ([0, sup supp)) = θ.

    ``atoms`` counts the atoms of ζ, including the one at 0.
    """
    if variant not in ("annealed", "quenched"):
        raise DomainError(f"Unknown variant '{variant}'. Available: annealed, quenched")
    if atoms < 2:
        raise DomainError("need at least two atoms")
    values, specs, conv, resid = [], [], [], []
    for theta in thetas:
        if not 0.0 < theta <= 1.0:
            raise DomainError(f"theta={theta} not in (0,1]")
        if theta >= 1.0 - 1e-12:
            if variant == "quenched":
                raise DomainError("the quenched constraint is degenerate at theta=1")
            val = parisi_value(AtomicMeasure.delta(0.0), m, grid)
            values.append(val)
            specs.append(None)
            conv.append(True)
            resid.append(0.0)
            continue
        if variant == "annealed":
            res = minimize_parisi_prefix(m, n=1, u=[theta], tail_atoms=atoms - 1, grid=grid)
        else:
            res = minimize_parisi_prefix(m, n=atoms - 1, u_top=theta, grid=grid)
        values.append(theta * res.value)
        specs.append(res.spec)
        conv.append(res.converged)
        resid.append(0.0 if res.converged else math.inf)
        logger.info("%s Λ(%.4f) = %.10f", variant, theta, theta * res.value)
    return ComplexityCurve(kind=f"lambda_{variant}", axis=np.asarray(thetas),
                           values=np.asarray(values), minimizers=specs, converged=conv,
                           residuals=resid, domain_closed=True)


def legendre_transform(
    curve: ComplexityCurve,
    fs: Sequence[float],
    min_points: int = 20,
) -> ComplexityCurve:
    """−Λ*(f) = inf_θ (Λ(θ) − θf) by grid minimization and spline refinement.

    A minimizer on the boundary of an open-ended axis whose objective keeps
    decreasing outward is reported as −∞ and flagged; on a closed domain the
    boundary value is kept and only flagged.
    """
    theta, lam = curve.axis, curve.values
    if theta.size < min_points:
        raise DomainError(f"curve needs at least {min_points} points, has {theta.size}")
    spline = CubicSpline(theta, lam)
    values, argmins, flags = [], [], []
    for f in fs:
        obj = lam - theta * f
        j = int(np.argmin(obj))
        scale = 1e-12 * (1.0 + float(np.max(np.abs(obj))))
        if float(np.ptp(obj)) <= scale:
            values.append(float(obj.min()))
            argmins.append(math.nan)
            flags.append(False)
            continue
        if j in (0, theta.size - 1):
            flags.append(True)
            argmins.append(float(theta[j]))
            if curve.domain_closed:
                values.append(float(obj[j]))
            else:
                values.append(-math.inf)
            logger.warning("Legendre point f=%.6g lies outside the duality range", f)
            continue
        res = minimize_scalar(lambda t, f=f: float(spline(t)) - t * f,
                              bounds=(theta[j - 1], theta[j + 1]), method="bounded",
                              options={"xatol": 1e-12})
        best = min(float(res.fun), float(obj[j]))
        values.append(best)
        argmins.append(float(res.x) if res.fun <= obj[j] else float(theta[j]))
        flags.append(False)
    n = len(values)
    return ComplexityCurve(kind="legendre", axis=np.asarray(fs, dtype=float),
                           values=np.asarray(values), minimizers=[None] * n,
                           converged=[not fl for fl in flags], residuals=[0.0] * n,
                           argmin=argmins, extrapolated=flags)
