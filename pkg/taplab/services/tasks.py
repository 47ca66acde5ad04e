"""Named computations driven by a RunConfig.

Each task implements the BaseTask interface and returns a TaskResult whose
rows become one CSV artifact. To add a task:
1. Implement a class inheriting from BaseTask in this module (or a sibling)
2. Add its name to ``TaskName`` in ``taplab.schemas``
3. Register it in the TASKS dict below
"""

import logging
from abc import ABC, abstractmethod
from dataclasses import asdict, dataclass, field

import numpy as np

from taplab.config import get_settings
from taplab.core.ac_sde import KernelLaws, ito_residual_rms, moments, simulate, target_xm
from taplab.core.field_mc import (
    CheckReport,
    covariance_check,
    det_asymp_check,
    euler_residual,
    hessian_blocks_check,
    sample_field,
    tanh_witness,
)
from taplab.core.freeprob import (
    SpectralMeasure,
    edges,
    freeconv_density,
    log_potential,
    subordinate,
)
from taplab.core.functionals import (
    curvature_defect,
    defect,
    parisi_value,
    solve_projected,
    tap_correction,
    tap_gradient,
    tap_value,
)
from taplab.core.measures import AtomicMeasure, EmpiricalMu
from taplab.core.mixture import Mixture
from taplab.core.parisi_pde import GridSpec, solve
from taplab.core.variational import (
    lambda_curve,
    legendre_transform,
    minimize_parisi_prefix,
    stationary_report,
    stationary_uq,
    tap_min,
)
from taplab.exceptions import ConfigError
from taplab.schemas import LambdaVariant, RunConfig

logger = logging.getLogger(__name__)

GOE_SIZE = 500
GOE_SAMPLES = 50


@dataclass
class TaskResult:
    task: str
    rows: list[dict]
    converged: bool = True
    passed: bool = True
    info: dict = field(default_factory=dict)


class BaseTask(ABC):
    """Base class for all runnable tasks."""

    name: str = ""

    @abstractmethod
    def run(self, config: RunConfig) -> TaskResult:
        ...

    @staticmethod
    def setup(config: RunConfig) -> tuple[Mixture, GridSpec, AtomicMeasure, EmpiricalMu | None]:
        return (config.xi.to_mixture(), config.grid.to_grid(),
                config.measure.to_measure(), config.measure.to_mu())

    @staticmethod
    def require_mu(config: RunConfig) -> EmpiricalMu:
        mu = config.measure.to_mu()
        if mu is None:
            raise ConfigError(f"task '{config.task.name}' needs a magnetization vector",
                              field_path="measure.magnetizations")
        return mu


def _thetas(config: RunConfig) -> list[float]:
    if config.task.thetas:
        return config.task.thetas
    # The quenched constraint degenerates at θ = 1.
    top = 1.0 if config.task.variant == LambdaVariant.ANNEALED else 0.95
    return np.linspace(0.05, top, 20).tolist()


def quantity_rows(values: dict[str, float]) -> list[dict]:
    return [{"quantity": k, "value": v} for k, v in values.items()]


def check_rows(report: CheckReport) -> list[dict]:
    return [{"check": report.name, **row} for row in report.to_rows()]


# ─── Parisi functional ───────────────────────────────────


class ParisiSolveTask(BaseTask):
    name = "parisi-solve"

    def run(self, config: RunConfig) -> TaskResult:
        m, grid, z, _ = self.setup(config)
        sol = solve(z, m, grid)
        laws = KernelLaws(sol)
        values = {
            "parisi_value": parisi_value(z, m, sol=sol),
            "phi_0_0": float(sol.phi(0.0, 0.0)),
            "tap_correction_0": tap_correction(z, m, 0.0),
            "extension_weight": float(sol.diagnostics["extension_weight"]),
        }
        for t in z.locations.tolist():
            values[f"m2@{t:.6g}"] = laws.m2(float(t))
        logger.info("Parisi value %.10f for %s", values["parisi_value"], m)
        return TaskResult(self.name, quantity_rows(values), info={"mixture": m.to_pairs()})


class TapEvalTask(BaseTask):
    name = "tap-eval"

    def run(self, config: RunConfig) -> TaskResult:
        m, grid, z, _ = self.setup(config)
        mu = self.require_mu(config)
        sol = solve_projected(mu, z, m, grid)
        values = {
            "q": mu.q,
            "tap_value": tap_value(mu, z, m, sol=sol),
            "defect": defect(mu, z, m, grid=grid),
            "curvature_defect": curvature_defect(sol, mu),
        }
        converged = True
        if config.task.atoms >= 2:
            _, best, converged = tap_min(mu, m, atoms=config.task.atoms, grid=grid)
            values["tap_min"] = best
        grad = np.asarray(tap_gradient(mu, z, m, sol=sol))
        values.update({f"grad_{i}": float(g) for i, g in enumerate(grad)})
        return TaskResult(self.name, quantity_rows(values), converged=converged)


class OptimizePrefixTask(BaseTask):
    name = "optimize-prefix"

    def run(self, config: RunConfig) -> TaskResult:
        m, grid, _, _ = self.setup(config)
        res = minimize_parisi_prefix(m, n=config.task.levels, tail_atoms=config.task.atoms,
                                     grid=grid)
        row = {
            "value": res.value,
            "u": list(res.spec.u),
            "q": list(res.spec.q),
            "tail": res.spec.tail.to_pairs(),
            "iterations": res.iterations,
            "evaluations": res.evaluations,
            "starts": res.info["starts"],
            "first_order_max": res.info["first_order_max"],
            "support_gap": res.info["support_gap"],
            "converged": res.converged,
        }
        return TaskResult(self.name, [row], converged=res.converged, info=res.info)


# ─── Complexity functional ───────────────────────────────


class StationaryTask(BaseTask):
    name = "stationary-uq"

    def run(self, config: RunConfig) -> TaskResult:
        m, grid, _, _ = self.setup(config)
        f = config.task.f
        if f is None:
            raise ConfigError("task 'stationary-uq' needs a free-energy level",
                              field_path="task.f")
        res = stationary_uq(m, f, n=config.task.levels, bracket=config.task.bracket, grid=grid)
        rows = []
        for rank, cand in enumerate([res, *res.alternatives]):
            rows.append({
                "rank": rank,
                "f": f,
                "u": list(cand.u),
                "q": list(cand.q),
                "value": cand.value,
                "closed_form": cand.closed_form if cand.converged else float("nan"),
                "parisi": cand.parisi,
                "residual_max": float(np.max(np.abs(cand.residuals))) if cand.converged
                else float("nan"),
                "converged": cand.converged,
            })
        info: dict = {"trace": [float(v) for v in res.trace]}
        passed = True
        if res.converged:
            report = stationary_report(res, m, grid)
            info["optimality_max_residual"] = report.max_residual
            passed = report.max_residual < get_settings().residual_tol
        return TaskResult(self.name, rows, converged=res.converged, passed=passed, info=info)


class LambdaCurveTask(BaseTask):
    name = "lambda-curve"

    def run(self, config: RunConfig) -> TaskResult:
        m, grid, _, _ = self.setup(config)
        thetas = _thetas(config)
        curve = lambda_curve(m, thetas, variant=config.task.variant.value,
                             atoms=config.task.atoms, grid=grid)
        return TaskResult(self.name, curve.to_rows(), converged=all(curve.converged))


class LegendreTask(BaseTask):
    name = "legendre"

    def run(self, config: RunConfig) -> TaskResult:
        m, grid, _, _ = self.setup(config)
        if not config.task.fs:
            raise ConfigError("task 'legendre' needs slopes", field_path="task.fs")
        thetas = _thetas(config)
        curve = lambda_curve(m, thetas, variant=config.task.variant.value,
                             atoms=config.task.atoms, grid=grid)
        conj = legendre_transform(curve, sorted(config.task.fs))
        rows = [{"kind": curve.kind, **r} for r in curve.to_rows()]
        rows += [{"kind": conj.kind, **r} for r in conj.to_rows()]
        return TaskResult(self.name, rows, converged=all(curve.converged))


# ─── Stochastic representation ───────────────────────────


class SdeSimTask(BaseTask):
    name = "sde-sim"

    def run(self, config: RunConfig) -> TaskResult:
        m, grid, z, _ = self.setup(config)
        sol = solve(z, m, grid, splits=config.task.times)
        ens = simulate(sol, scheme=config.task.scheme, paths=config.mc.paths,
                       seed=config.seed(), dt=config.mc.dt, antithetic=config.mc.antithetic)
        laws = KernelLaws(sol)
        targets = {"M2": laws.m2, "XM": lambda t: target_xm(sol, t, laws)}
        rows = []
        for est in moments(ens, sol).rows:
            row = asdict(est)
            fn = targets.get(est.name) if est.s is None else None
            row["target"] = fn(est.t) if fn is not None else None
            rows.append(row)
        info: dict = {"paths": ens.paths, "scheme": ens.scheme}
        if ens.ito_residual is not None:
            info["ito_residual_rms"] = ito_residual_rms(ens)
        return TaskResult(self.name, rows, info=info)


# ─── Free probability and random matrices ────────────────


class FreeconvTask(BaseTask):
    name = "freeconv"

    def run(self, config: RunConfig) -> TaskResult:
        pairs = np.asarray(config.task.spectrum, dtype=float)
        mu = SpectralMeasure(pairs[:, 0], pairs[:, 1])
        t = config.task.t
        ell, r = edges(mu, t)
        xs = config.task.xs or np.linspace(ell - 1.0, r + 1.0, 41).tolist()
        density = freeconv_density(mu, t, xs)
        rows = []
        for x, dens in zip(xs, density, strict=True):
            om = subordinate(mu, t, float(x)).omega
            rows.append({"x": float(x), "density": float(dens),
                         "log_potential": log_potential(mu, t, float(x)),
                         "omega_re": om.real, "omega_im": om.imag})
        return TaskResult(self.name, rows, info={"edge_left": ell, "edge_right": r})


class RmtVerifyTask(BaseTask):
    name = "rmt-verify"

    def run(self, config: RunConfig) -> TaskResult:
        m, grid, _, _ = self.setup(config)
        s = get_settings()
        seed = config.seed()
        size = config.mc.size or 8
        samples = config.mc.samples or s.mc_paths
        q = config.task.q
        m1 = tanh_witness(size, q).points
        m2 = np.roll(m1, 1) * 0.9

        reports = [
            covariance_check(m, m1, m2, samples=samples, seed=seed),
            hessian_blocks_check(m, m1, samples=samples, seed=seed + 1),
        ]
        mu = config.measure.to_mu() or tanh_witness(GOE_SIZE, q)
        sol = solve_projected(mu, AtomicMeasure.delta(0.0), m, grid)
        reports.append(det_asymp_check(sol, mu, samples=GOE_SAMPLES, seed=seed + 2))

        rows = [r for rep in reports for r in check_rows(rep)]
        if m.is_pure():
            fs = sample_field(m, size, seed=seed + 3)
            resid = euler_residual(fs, m1)
            rows.append({"check": "euler", "quantity": "euler_residual", "estimate": resid,
                         "se": 0.0, "target": 0.0, "pass": abs(resid) < 1e-10})
        passed = all(bool(r["pass"]) for r in rows)
        logger.info("rmt-verify: %d checks, passed=%s", len(rows), passed)
        return TaskResult(self.name, rows, passed=passed)


# ─── Task Registry ───────────────────────────────────────

TASKS: dict[str, BaseTask | None] = {
    "parisi-solve": ParisiSolveTask(),
    "tap-eval": TapEvalTask(),
    "optimize-prefix": OptimizePrefixTask(),
    "stationary-uq": StationaryTask(),
    "lambda-curve": LambdaCurveTask(),
    "legendre": LegendreTask(),
    "sde-sim": SdeSimTask(),
    "freeconv": FreeconvTask(),
    "rmt-verify": RmtVerifyTask(),
    "verify-suite": None,  # lazy-loaded below
}


def get_task(name: str) -> BaseTask:
    """Get the task registered under ``name``."""
    if name not in TASKS:
        raise ValueError(f"Unknown task '{name}'. Available: {', '.join(TASKS.keys())}")

    # Lazy-load to avoid circular imports
    if TASKS[name] is None and name == "verify-suite":
        from taplab.services.verification import VerifySuiteTask
        TASKS[name] = VerifySuiteTask()

    return TASKS[name]  # type: ignore[return-value]
