"""Verification suite: closed-form oracles, exact identities and Monte Carlo checks.

Every check returns rows (module, check, value, target, tolerance, pass).
Checks are run in registry order with seeds derived from the run seed, so
two runs with the same configuration produce the same table. A check that
raises a ConvergenceError marks the suite as not converged; any other
library error fails the check.
"""

import logging
import math
from collections.abc import Callable

import numpy as np
from scipy.integrate import quad

from taplab.config import get_settings
from taplab.core.ac_sde import (
    KernelLaws,
    ito_residual_rms,
    ks_distance,
    moments,
    simulate,
    target_delta_x_m,
    target_xm,
)
from taplab.core.field_mc import (
    covariance_check,
    det_asymp_check,
    euler_residual,
    hessian_blocks_check,
    sample_field,
    tanh_witness,
)
from taplab.core.freeprob import SpectralMeasure, edges, h_map, log_potential, subordinate
from taplab.core.functionals import (
    parisi_value,
    solve_projected,
    tap_gradient,
    tap_value,
    txi2_integral,
    xxphi_representation,
)
from taplab.core.gaussian_geometry import (
    GammaBlocks,
    constrained_quadratic,
    constrained_quadratic_closed,
    conditional_logdensity,
    det_factorization_sides,
    dual_bound,
    gamma_logdet,
    hier_forms,
    law_matched_witness,
    synthetic_hier_witness,
    telescoping_sides,
)
from taplab.core.measures import AtomicMeasure, EmpiricalMu, PrefixSpec
from taplab.core.mixture import Mixture
from taplab.core.parisi_pde import GridSpec, ParisiSolution, solve
from taplab.core.variational import (
    ComplexityCurve,
    breakpoint_mass,
    lambda_curve,
    legendre_transform,
    minimize_parisi_prefix,
    stationary_report,
    stationary_uq,
)
from taplab.exceptions import ConvergenceError, TapLabError
from taplab.schemas import RunConfig
from taplab.services.tasks import BaseTask, TaskResult

logger = logging.getLogger(__name__)

Check = Callable[[GridSpec, int], list[dict]]

DET_CLOSED_TOL = 1e-6
DET_GOE_TOL = 0.02


def _row(module: str, check: str, value: float, target: float, tol: float,
         passed: bool | None = None) -> dict:
    ok = abs(value - target) <= tol if passed is None else passed
    return {"module": module, "check": check, "value": float(value), "target": float(target),
            "tolerance": float(tol), "pass": bool(ok)}


def _rel_gap(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.max(np.abs(a - b)) / max(1.0, float(np.max(np.abs(b)))))


def _random_prefix(rng: np.random.Generator, n: int) -> PrefixSpec:
    u = np.sort(rng.uniform(0.1, 0.9, size=n))
    q = np.sort(rng.uniform(0.1, 0.9, size=n))
    return PrefixSpec(tuple(u.tolist()), tuple(q.tolist()))


# ─── Structure ───────────────────────────────────────────


def check_structure(grid: GridSpec, seed: int) -> list[dict]:
    m = Mixture.from_pairs([(2, 0.4), (4, 0.3), (6, 0.2)])
    qs = np.linspace(0.05, 0.95, 19)
    gap = float(np.max(np.abs(np.asarray(m.discriminant(qs))
                              - np.asarray(m.discriminant_pairwise(qs)))))
    rows = [_row("mixture", "discriminant_pairwise", gap, 0.0, 1e-12)]

    prefix = _random_prefix(np.random.default_rng(seed), 4)
    z = prefix.assemble()
    d = prefix.deltas()
    masses = np.array([z.mass_at(q) for q in prefix.q[:-1]])
    worst = max(float(np.max(np.abs(masses + d[:-1]))),
                abs(float(z.cdf_left(prefix.q[-1])) - d[-1]))
    rows.append(_row("measures", "prefix_deltas_vs_cdf", worst, 0.0, 1e-12))
    return rows


# ─── Parisi functional ───────────────────────────────────


def check_replica_symmetric(grid: GridSpec, seed: int) -> list[dict]:
    rows = []
    for beta in (0.25, 0.5, 1.0):
        value = parisi_value(AtomicMeasure.delta(0.0), Mixture.sk(beta), grid)
        rows.append(_row("parisi_pde", f"rs_oracle_beta={beta}", value,
                         math.log(2.0) + beta * beta / 2.0, 1e-8))
    return rows


def check_split_invariance(grid: GridSpec, seed: int) -> list[dict]:
    m = Mixture.from_pairs([(2, 0.5), (4, 0.3)])
    z = AtomicMeasure([0.0, 0.4, 0.7], [0.3, 0.4, 0.3])
    coarse = solve(z, m, grid)
    fine = solve(z, m, grid, splits=[0.2, 0.55, 0.9])
    return [_row("parisi_pde", "split_invariance", float(fine.phi(0.0, 0.0)),
                 float(coarse.phi(0.0, 0.0)), 1e-9)]


def check_parisi_equals_tap(grid: GridSpec, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    m = Mixture.from_pairs([(2, 0.6), (4, 0.2)])
    origin = EmpiricalMu(np.zeros(1))
    worst = 0.0
    for _ in range(20):
        z = _random_prefix(rng, 2).assemble()
        worst = max(worst, abs(parisi_value(z, m, grid) - tap_value(origin, z, m, grid)))
    return [_row("functionals", "parisi_equals_tap_at_origin", worst, 0.0, 1e-9)]


def _layer_average(sol: ParisiSolution, u: float, q: float, x: float) -> float:
    """(1/u) log E[exp(uΦ(q, x + Z))] with Z ~ N(0, ξ'(q)), by adaptive quadrature."""
    sd = math.sqrt(float(sol.mixture.d1(q)))
    shift = float(sol.phi(q, x))

    def integrand(y: float) -> float:
        tilt = u * (float(sol.phi(q, x + sd * y)) - shift)
        return math.exp(tilt - 0.5 * y * y) / math.sqrt(2.0 * math.pi)

    total = quad(integrand, -12.0, 12.0, epsabs=1e-14, epsrel=1e-12, limit=200)[0]
    return shift + math.log(total) / u


def check_layer_identity(grid: GridSpec, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    m = Mixture.from_pairs([(2, 0.6), (4, 0.2)])
    worst = 0.0
    for _ in range(10):
        u, q = (float(v) for v in rng.uniform(0.1, 0.9, size=2))
        tail = AtomicMeasure([q, 0.5 * (q + 1.0)], [0.5, 0.5])
        sol = solve(PrefixSpec((u,), (q,), tail).assemble(), m, grid)
        for x in (-0.9, 0.0, 0.6):
            worst = max(worst, abs(_layer_average(sol, u, q, x) - float(sol.phi(0.0, x))))
    return [_row("parisi_pde", "prefix2_layer_identity", worst, 0.0, 1e-6)]


def check_xxphi(grid: GridSpec, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    m = Mixture.sk(0.8)
    worst = 0.0
    for _ in range(4):
        prefix = _random_prefix(rng, 2)
        sol = solve(prefix.assemble(), m, grid)
        q = prefix.q[0]
        for x in rng.uniform(-2.0, 2.0, size=5):
            rep = xxphi_representation(sol, q, float(x))
            worst = max(worst, abs(rep - float(sol.dxx_phi(q, float(x)))))
    return [_row("functionals", "xxphi_representation", worst, 0.0, 1e-4)]


def check_tap_gradient(grid: GridSpec, seed: int) -> list[dict]:
    m = Mixture.from_pairs([(2, 0.5), (4, 0.5)])
    z = AtomicMeasure([0.0, 0.5], [0.5, 0.5])
    rng = np.random.default_rng(seed)
    mu = EmpiricalMu(rng.uniform(-0.8, 0.8, size=10))
    grad = np.asarray(tap_gradient(mu, z, m, grid=grid))
    h = 1e-4
    worst = 0.0
    for i in range(mu.n):
        up = tap_value(mu.with_point(i, mu.points[i] + h), z, m, grid)
        down = tap_value(mu.with_point(i, mu.points[i] - h), z, m, grid)
        # per-site scale: N·∂_i TAP is O(1)
        worst = max(worst, mu.n * abs((up - down) / (2 * h) - grad[i]))
    return [_row("functionals", "tap_gradient_vs_fd", worst, 0.0, 1e-4)]


# ─── Stochastic representation ───────────────────────────


def check_sde_moments(grid: GridSpec, seed: int) -> list[dict]:
    s = get_settings()
    m = Mixture.sk(0.9)
    z = AtomicMeasure([0.0, 0.3, 0.6], [0.3, 0.4, 0.3])
    sol = solve(z, m, grid)
    ens = simulate(sol, paths=s.mc_paths, seed=seed)
    laws = KernelLaws(sol)
    table = moments(ens, sol)
    rows = []
    for t in (0.3, 0.6):
        est = table.get("M2", t)
        rows.append(_row("ac_sde", f"m2@{t}", est.estimate, laws.m2(t),
                         s.se_multiplier * est.se))
        flat = table.get("M", t)
        rows.append(_row("ac_sde", f"martingale_mean@{t}", flat.estimate, 0.0,
                         s.se_multiplier * flat.se))
        xm = table.get("XM", t)
        rows.append(_row("ac_sde", f"xm@{t}", xm.estimate, target_xm(sol, t, laws),
                         s.se_multiplier * xm.se))
    flat = table.get("M", 1.0)
    rows.append(_row("ac_sde", "martingale_mean@1.0", flat.estimate, 0.0,
                     s.se_multiplier * flat.se))
    gap = table.get("dX_M", 0.6, s=0.3)
    rows.append(_row("ac_sde", "dx_m@0.3,0.6", gap.estimate,
                     target_delta_x_m(sol, 0.3, 0.6, laws), s.se_multiplier * gap.se))
    for a, b in ((0.3, 0.6), (0.3, 1.0), (0.6, 1.0)):
        cross = table.get("dM_X", b, s=a)
        rows.append(_row("ac_sde", f"dm_x@{a},{b}", cross.estimate, 0.0,
                         s.se_multiplier * cross.se))
    rows.append(_row("ac_sde", "ks_distance@0.6", ks_distance(ens.at(0.6), laws, 0.6), 0.0, 0.01))
    return rows


def check_ito_order(grid: GridSpec, seed: int) -> list[dict]:
    sol = solve(AtomicMeasure([0.0, 0.3, 0.6], [0.3, 0.4, 0.3]), Mixture.sk(0.9), grid)
    paths = min(get_settings().mc_paths, 2000)
    rms = [ito_residual_rms(simulate(sol, scheme="euler", paths=paths, seed=seed, dt=dt))
           for dt in (1e-3, 5e-4)]
    return [_row("ac_sde", "ito_residual_halving", rms[1] / rms[0], 0.5, 0.1)]


# ─── Complexity curves ───────────────────────────────────


def check_lambda_endpoint(grid: GridSpec, seed: int) -> list[dict]:
    m = Mixture.from_pairs([(2, 0.5), (4, 0.25)])
    curve = lambda_curve(m, [1.0], grid=grid)
    return [_row("variational", "lambda_endpoint", float(curve.values[0]),
                 math.log(2.0) + float(m(1.0)) / 2.0, 1e-6)]


def check_legendre_tangency(grid: GridSpec, seed: int) -> list[dict]:
    a = 0.8
    theta = np.linspace(0.05, 1.0, 40)
    curve = ComplexityCurve("synthetic", theta, a * theta ** 2, [None] * theta.size,
                            [True] * theta.size, [0.0] * theta.size)
    fs = [0.3, 0.6, 0.9, 1.2, 1.5]
    conj = legendre_transform(curve, fs)
    worst = max(abs(v + f * f / (4 * a)) for v, f in zip(conj.values, fs, strict=True))
    return [_row("variational", "legendre_tangency", worst, 0.0, 1e-8)]


def check_stationary(grid: GridSpec, seed: int) -> list[dict]:
    m = Mixture.sk(1.0)
    q_star = 0.3
    u_star = breakpoint_mass(m, q_star, grid)
    z_star = PrefixSpec((u_star,), (q_star,)).assemble()
    phi_mean = KernelLaws(solve(z_star, m, grid)).phi_mean(q_star)
    # the energy level that makes (u*, q*) stationary
    f = (phi_mean - 0.5 * txi2_integral(z_star, m, 0.0, 1.0)
         - 0.5 * txi2_integral(z_star, m, 0.0, q_star))
    res = stationary_uq(m, f, n=1, bracket=(q_star - 0.15, q_star + 0.15), grid=grid)
    if not res.converged or res.spec is None:
        raise ConvergenceError(f"no stationary point at f={f:.6g}", trace=res.trace)
    found = min(abs(c.q[0] - q_star) for c in (res, *res.alternatives))
    z = res.spec.assemble()
    closed = res.u[-1] * (float(solve(z, m, grid).phi(0.0, 0.0))
                          - 0.5 * txi2_integral(z, m, 0.0, 1.0) - f)
    at_level = res.u[-1] * (parisi_value(z, m, grid) - res.parisi)
    report = stationary_report(res, m, grid)
    residual = max(abs(report.energy), *np.abs(report.prefix_stationarity))
    return [
        _row("variational", "stationary_point_recovered", found, 0.0, 1e-4),
        _row("variational", "complexity_closed_form", res.value, closed, 1e-6),
        _row("variational", "complexity_at_parisi_level", at_level, 0.0, 0.0),
        _row("variational", "stationary_optimality", residual, 0.0, 1e-3),
    ]


# ─── Free probability ────────────────────────────────────


def check_freeprob(grid: GridSpec, seed: int) -> list[dict]:
    rows = []
    t = 1.7
    ell, _ = edges(SpectralMeasure.delta(0.0), t)
    rows.append(_row("freeprob", "semicircle_left_edge", ell, -2.0 * math.sqrt(t), 1e-10))

    def integrand(x: float) -> float:
        return math.sqrt(max(4.0 - x * x, 0.0)) / (2.0 * math.pi) * math.log(abs(x))

    oracle = quad(integrand, -2.0, 0.0)[0] + quad(integrand, 0.0, 2.0)[0]
    rows.append(_row("freeprob", "semicircle_log_potential",
                     log_potential(SpectralMeasure.delta(0.0), 1.0, 0.0), oracle, 1e-6))

    rng = np.random.default_rng(seed)
    mu = SpectralMeasure(np.array([-1.0, 0.2, 1.5]), np.array([0.3, 0.5, 0.2]))
    worst = 0.0
    for _ in range(100):
        zq = complex(rng.uniform(-4.0, 4.0), rng.uniform(0.05, 2.0))
        om = subordinate(mu, 0.6, zq).omega
        worst = max(worst, abs(h_map(mu, 0.6, om) - zq))
    rows.append(_row("freeprob", "subordination_residual", worst, 0.0, 1e-10))
    return rows


# ─── Gaussian geometry ───────────────────────────────────


def check_gamma(grid: GridSpec, seed: int) -> list[dict]:
    rng = np.random.default_rng(seed)
    m = Mixture.from_pairs([(2, 0.7), (4, 0.4)])
    vec = rng.uniform(-0.9, 0.9, size=30)
    g = GammaBlocks.at(m, vec)
    dense = g.dense()
    rows = [
        _row("gaussian_geometry", "logdet_closed_vs_dense", gamma_logdet(g),
             float(np.linalg.slogdet(dense)[1]), 1e-9),
        _row("gaussian_geometry", "block_inverse_vs_dense",
             _rel_gap(g.inverse_blocks(), np.linalg.inv(dense)), 0.0, 1e-9),
    ]
    y = rng.standard_normal(30)
    value, _ = constrained_quadratic(g.a0, y, vec, 1.3)
    rows.append(_row("gaussian_geometry", "constrained_quadratic_closed", value,
                     constrained_quadratic_closed(g.a0, y, vec, 1.3), 1e-9))

    zv = rng.standard_normal(dense.shape[0])
    exact, at_optimum = dual_bound(g, zv, np.linalg.solve(dense, zv))
    scale = max(1.0, abs(exact))
    rows.append(_row("gaussian_geometry", "dual_bound_vs_dense", exact,
                     -float(zv @ np.linalg.solve(dense, zv)), 1e-9 * scale))
    rows.append(_row("gaussian_geometry", "dual_bound_optimal", at_optimum, exact, 1e-9 * scale))
    slack = min(dual_bound(g, zv, rng.standard_normal(zv.size))[1] - exact for _ in range(20))
    rows.append(_row("gaussian_geometry", "dual_bound_weak", slack, 0.0, 0.0,
                     passed=slack >= -1e-9 * scale))
    return rows


def check_hierarchy(grid: GridSpec, seed: int) -> list[dict]:
    m = Mixture.from_pairs([(2, 0.6), (4, 0.3)])
    rng = np.random.default_rng(seed)
    rows = []
    for n in (2, 4, 6):
        prefix = _random_prefix(rng, n)
        lhs, rhs = telescoping_sides(prefix, m)
        rows.append(_row("gaussian_geometry", f"telescoping_n={n}", lhs, rhs, 1e-12))
        dense, prod = det_factorization_sides(prefix.q, m)
        rows.append(_row("gaussian_geometry", f"det_factorization_n={n}", dense, prod,
                         1e-8 * max(1.0, abs(prod))))
        h = synthetic_hier_witness(prefix, m, size=40, seed=seed + n)
        rows.append(_row("gaussian_geometry", f"hierarchy_forms_n={n}",
                         hier_forms(h, m).max_residual, 0.0, 1e-9))
        full, pathway = conditional_logdensity(h, m)
        rows.append(_row("gaussian_geometry", f"conditional_logdensity_n={n}", pathway, full,
                         1e-8))
    return rows


def check_witness_trend(grid: GridSpec, seed: int) -> list[dict]:
    q = 0.5
    sol = solve(AtomicMeasure.delta(0.0), Mixture.sk(0.8), grid, splits=[q])
    target = KernelLaws(sol).m2(q)
    gaps = []
    rows = []
    for n in (50, 200, 800):
        gap = abs(law_matched_witness(sol, q, n).q - target)
        gaps.append(gap)
        rows.append(_row("gaussian_geometry", f"witness_overlap_N={n}", gap, 0.0, 5e-3))
    rows.append(_row("gaussian_geometry", "witness_trend", gaps[-1] - gaps[0], 0.0, 0.0,
                     passed=gaps[-1] <= gaps[0]))
    return rows


# ─── Field Monte Carlo ───────────────────────────────────


def check_field(grid: GridSpec, seed: int) -> list[dict]:
    s = get_settings()
    m = Mixture.from_pairs([(2, 0.5), (4, 0.5)])
    m1 = tanh_witness(8, 0.5).points
    m2 = np.roll(m1, 1) * 0.9
    rows = []
    for report in (covariance_check(m, m1, m2, samples=s.mc_paths, seed=seed),
                   hessian_blocks_check(m, m1, samples=s.mc_paths, seed=seed + 1)):
        for r in report.rows:
            rows.append(_row("field_mc", f"{report.name}:{r.quantity}", r.estimate, r.target,
                             s.se_multiplier * r.se, r.passed))
    fs = sample_field(Mixture.pure(4), 8, seed=seed + 2)
    rows.append(_row("field_mc", "euler_identity", euler_residual(fs, m1), 0.0, 1e-10))
    return rows


def check_determinant(grid: GridSpec, seed: int) -> list[dict]:
    m = Mixture.from_pairs([(2, 1.0), (4, 1.0)])
    opt = minimize_parisi_prefix(m, n=1, tail_atoms=2, grid=grid, seed=seed)
    if not opt.converged:
        raise ConvergenceError("prefix optimizer for the determinant check did not converge",
                               trace=opt.info["start_values"])
    z = opt.measure
    mu = law_matched_witness(solve(z, m, grid), opt.spec.q[0], 500)
    sol = solve_projected(mu, z, m, grid)
    report = det_asymp_check(sol, mu, samples=50, seed=seed, closed_tol=DET_CLOSED_TOL,
                             goe_tol=DET_GOE_TOL)
    tolerances = {"closed_vs_free": DET_CLOSED_TOL, "goe_vs_free": DET_GOE_TOL,
                  "stieltjes_residual": 1e-8}
    return [_row("field_mc", f"det:{r.quantity}", r.estimate, r.target,
                 tolerances.get(r.quantity, 0.0), r.passed) for r in report.rows]


CHECKS: list[Check] = [
    check_structure,
    check_replica_symmetric,
    check_split_invariance,
    check_layer_identity,
    check_parisi_equals_tap,
    check_xxphi,
    check_tap_gradient,
    check_sde_moments,
    check_ito_order,
    check_lambda_endpoint,
    check_legendre_tangency,
    check_stationary,
    check_freeprob,
    check_gamma,
    check_hierarchy,
    check_witness_trend,
    check_field,
    check_determinant,
]


def run_suite(grid: GridSpec, seed: int, checks: list[Check] | None = None
              ) -> tuple[list[dict], bool]:
    """All rows plus whether every check ran to convergence."""
    rows: list[dict] = []
    converged = True
    for offset, check in enumerate(checks or CHECKS):
        name = check.__name__.removeprefix("check_")
        try:
            rows.extend(check(grid, seed + 1000 * offset))
        except ConvergenceError as exc:
            converged = False
            logger.error("Check %s did not converge: %s", name, exc)
            rows.append(_row("suite", name, math.nan, math.nan, 0.0, False))
        except TapLabError as exc:
            logger.error("Check %s failed: %s", name, exc)
            rows.append(_row("suite", name, math.nan, math.nan, 0.0, False))
        logger.info("Check %s done", name)
    return rows, converged


class VerifySuiteTask(BaseTask):
    name = "verify-suite"

    def run(self, config: RunConfig) -> TaskResult:
        rows, converged = run_suite(config.grid.to_grid(), config.seed())
        failed = [f"{r['module']}:{r['check']}" for r in rows if not r["pass"]]
        if failed:
            logger.warning("%d checks failed: %s", len(failed), ", ".join(failed))
        return TaskResult(self.name, rows, converged=converged, passed=not failed,
                          info={"checks": len(rows), "failed": failed})
