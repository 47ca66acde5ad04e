"""Parisi and TAP functionals over atomic order parameters.

Every ∫ tξ''(t) ζ([0,t]) dt is evaluated exactly per plateau through the
antiderivative tξ'(t) − ξ(t). Laws of X_t come from the plateau kernels in
``taplab.core.ac_sde``; Monte Carlo only enters through ``defect_mc``.
"""

import logging
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike
from scipy.integrate import quad

from taplab.core.ac_sde import KernelLaws, e_m2_profile, law_match_start
from taplab.core.measures import AtomicMeasure, EmpiricalMu, PrefixSpec, dist, project_at
from taplab.core.mixture import Mixture
from taplab.core.parisi_pde import GridSpec, ParisiSolution, solve
from taplab.exceptions import DomainError

logger = logging.getLogger(__name__)


def txi2_integral(z: AtomicMeasure, m: Mixture, a: float, b: float) -> float:
    """∫_a^b t ξ''(t) ζ([0,t]) dt."""
    return z.cdf_integral(a, b, primitive=lambda t: float(t * m.d1(t) - m(t)))


def tap_correction(z: AtomicMeasure, m: Mixture, q: float) -> float:
    """U_ζ(q) = ½ ∫_q^1 t ξ''(t) ζ([0,t]) dt."""
    return 0.5 * txi2_integral(z, m, q, 1.0)


def parisi_value(
    z: AtomicMeasure,
    m: Mixture,
    grid: GridSpec | None = None,
    sol: ParisiSolution | None = None,
) -> float:
    """𝒫(ζ) = Φ_ζ(0,0) − ½ ∫_0^1 t ξ''(t) ζ([0,t]) dt."""
    sol = sol or solve(z, m, grid)
    return float(sol.phi(0.0, 0.0)) - 0.5 * txi2_integral(z, m, 0.0, 1.0)


def solve_projected(mu: EmpiricalMu, z: AtomicMeasure, m: Mixture,
                    grid: GridSpec | None = None) -> ParisiSolution:
    """Solution for π_qζ with q = q_μ."""
    return solve(project_at(z, mu.q), m, grid, splits=[mu.q])


def tap_value(
    mu: EmpiricalMu,
    z: AtomicMeasure,
    m: Mixture,
    grid: GridSpec | None = None,
    sol: ParisiSolution | None = None,
) -> float:
    """TAP(μ,ζ) = −∫ h_ζ(q_μ,m) dμ − U_ζ(q_μ), with ζ projected onto [q_μ,1]."""
    q = mu.q
    sol = sol or solve_projected(mu, z, m, grid)
    h = np.asarray(sol.legendre_h(q, mu.points)[0])
    return float(-h.mean() - tap_correction(sol.measure, m, q))


def k_field(sol: ParisiSolution, q: float, mval: ArrayLike) -> np.ndarray | float:
    """k_ζ(q,m) = ∂m h_ζ(q,m) + m ξ''(q) ∫_q^1 ζ([0,t]) dt."""
    dh = np.asarray(sol.legendre_h(q, mval)[1])
    out = dh + np.asarray(mval) * float(sol.mixture.d2(q)) * sol.measure.cdf_integral(q, 1.0)
    return float(out) if np.ndim(mval) == 0 else out


def curvature_defect(sol: ParisiSolution, mu: EmpiricalMu) -> float:
    """∫_q^1 ζ([0,t]) dt − mean_i ∂xxΦ(q, x_i), equal to the defect Δ_ζ^μ."""
    q = mu.q
    xs = np.asarray(sol.inverse_dx(q, mu.points))
    return sol.measure.cdf_integral(q, 1.0) - float(np.mean(sol.dxx_phi(q, xs)))


def defect(
    mu: EmpiricalMu,
    z: AtomicMeasure,
    m: Mixture,
    estimator: str = "quadrature",
    grid: GridSpec | None = None,
    paths: int | None = None,
    seed: int | None = None,
) -> float:
    """Δ_ζ^μ = ∫_{[q,1]} (E[u(t,X_t)²] − t) ζ(dt) with X law-matched to μ at q."""
    if estimator == "mc":
        return defect_mc(mu, z, m, grid, paths, seed)[0]
    sol = solve_projected(mu, z, m, grid)
    if estimator == "curvature":
        return curvature_defect(sol, mu)
    if estimator != "quadrature":
        raise DomainError(f"Unknown estimator '{estimator}'. Available: quadrature, mc, curvature")
    q = mu.q
    laws = KernelLaws(sol, q, sol.inverse_dx(q, mu.points))
    return float(sum(w * (laws.m2(t) - t)
                     for t, w in zip(sol.measure.locations, sol.measure.weights, strict=True)))


def defect_mc(
    mu: EmpiricalMu,
    z: AtomicMeasure,
    m: Mixture,
    grid: GridSpec | None = None,
    paths: int | None = None,
    seed: int | None = None,
) -> tuple[float, float]:
    """Monte Carlo defect estimate and its standard error."""
    sol = solve_projected(mu, z, m, grid)
    ens = law_match_start(sol, mu, paths=paths, seed=seed)
    per_path = np.zeros(ens.paths)
    for t, w in zip(sol.measure.locations, sol.measure.weights, strict=True):
        per_path += w * (np.asarray(sol.dx_phi(float(t), ens.at(float(t)))) ** 2 - t)
    return ens.mean_se(per_path)


def tap_gradient(
    mu: EmpiricalMu,
    z: AtomicMeasure,
    m: Mixture,
    i: int | None = None,
    grid: GridSpec | None = None,
    sol: ParisiSolution | None = None,
) -> np.ndarray | float:
    """∂_i TAP(μ_N,ζ) = −(1/N)[k_ζ(q,m_i) − m_i ξ''(q) Δ_ζ^μ]."""
    q = mu.q
    sol = sol or solve_projected(mu, z, m, grid)
    delta = curvature_defect(sol, mu)
    k = np.asarray(k_field(sol, q, mu.points))
    grad = -(k - mu.points * float(m.d2(q)) * delta) / mu.n
    return float(grad[i]) if i is not None else grad


# ─── H-profile and optimality ─────────────────────────────


@dataclass
class HProfile:
    """H(s) = ½ ∫_s^1 ξ''(r)(E[u(r,X_r)²] − r) dr sampled on s, constant below q."""

    s: np.ndarray
    values: np.ndarray
    q: float = 0.0

    def at(self, s: ArrayLike) -> np.ndarray | float:
        s_arr = np.maximum(np.asarray(s, dtype=float), self.q)
        out = np.interp(s_arr, self.s, self.values)
        return float(out) if np.ndim(s) == 0 else out

    @property
    def argmin(self) -> float:
        return float(self.s[int(np.argmin(self.values))])


def _h_from_laws(sol: ParisiSolution, laws: KernelLaws, q: float,
                 s_grid: Sequence[float]) -> HProfile:
    times = laws.times
    integrand = np.array([0.5 * float(sol.mixture.d2(t)) * (laws.m2(float(t)) - t) for t in times])
    seg = 0.5 * (integrand[1:] + integrand[:-1]) * np.diff(times)
    tail = np.concatenate([np.cumsum(seg[::-1])[::-1], [0.0]])
    s = np.asarray(sorted({float(v) for v in s_grid if q - 1e-12 <= v <= 1.0} | {q, 1.0}))
    return HProfile(s=s, values=np.interp(s, times, tail), q=q)


def _profile_grid(s_grid: Sequence[float] | None, q: float, points: int) -> list[float]:
    base = np.linspace(q, 1.0, points).tolist()
    return sorted(set(base) | set(s_grid or []))


def h_profile(
    mu: EmpiricalMu,
    z: AtomicMeasure,
    m: Mixture,
    s_grid: Sequence[float] | None = None,
    grid: GridSpec | None = None,
    resolution: int = 101,
) -> HProfile:
    """H_ζ^μ on [q_μ,1], with X started from the law-matching condition at q_μ."""
    q = mu.q
    sol = solve_projected(mu, z, m, grid)
    fine_grid = _profile_grid(s_grid, q, resolution)
    fine, laws = e_m2_profile(sol, fine_grid, start_time=q,
                              points=sol.inverse_dx(q, mu.points))
    return _h_from_laws(fine, laws, q, fine_grid)


def parisi_h_profile(sol: ParisiSolution, s_grid: Sequence[float] | None = None,
                     resolution: int = 101) -> HProfile:
    """H_ζ on [0,1] for the process started at X_0 = 0."""
    fine_grid = _profile_grid(s_grid, 0.0, resolution)
    fine, laws = e_m2_profile(sol, fine_grid)
    return _h_from_laws(fine, laws, 0.0, fine_grid)


@dataclass
class OptimalityReport:
    """Residuals of the first- and second-order conditions for a prefix measure."""

    support: np.ndarray
    first_order: np.ndarray
    second_order: np.ndarray
    energy: float
    prefix_stationarity: np.ndarray
    prefix_energy: np.ndarray
    support_gap: float
    h_profile: HProfile
    parisi: float
    info: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        parts = [abs(self.energy), self.support_gap,
                 *np.abs(self.prefix_stationarity), *np.abs(self.prefix_energy)]
        return float(max(parts))


def optimality_report(
    z: AtomicMeasure,
    m: Mixture,
    f: float,
    n: int = 1,
    grid: GridSpec | None = None,
    resolution: int = 101,
) -> OptimalityReport:
    """Energy, breaking-point, support and second-order residuals at level f."""
    prefix = PrefixSpec.from_measure(z, n)
    q = prefix.q[-1]
    sol = solve(z, m, grid)
    laws = KernelLaws(sol)
    parisi = parisi_value(z, m, sol=sol)
    full = txi2_integral(z, m, 0.0, 1.0)

    energy = (-laws.phi_mean(q) + txi2_integral(z, m, 0.0, q)
              + 0.5 * txi2_integral(z, m, q, 1.0) + f)
    stat = np.array([laws.m2(qk) - qk for qk in prefix.q])
    pre_energy = np.array([
        -laws.phi_mean(qk) + 0.5 * full + 0.5 * txi2_integral(z, m, 0.0, qk) + parisi
        for qk in prefix.q[:-1]
    ])

    support = z.locations.copy()
    first = np.array([laws.m2(float(s)) - s for s in support])
    second = np.empty(support.size)
    for j, s in enumerate(support.tolist()):
        curv2 = laws.expect(s, lambda v, s=s: np.asarray(sol.dxx_phi(s, v)) ** 2)
        second[j] = float(m.d2(s)) * curv2 - 1.0

    profile = parisi_h_profile(sol, list(support), resolution)
    upper = profile.s >= q - 1e-12
    h_min = float(profile.values[upper].min())
    top = support[support >= q - 1e-12]
    gap = float(max(profile.at(float(s)) for s in top) - h_min)

    report = OptimalityReport(
        support=support, first_order=first, second_order=second, energy=float(energy),
        prefix_stationarity=stat, prefix_energy=pre_energy, support_gap=gap,
        h_profile=profile, parisi=parisi, info={"f": f, "n": n},
    )
    logger.debug("optimality report: max residual %.3e", report.max_residual)
    return report


# ─── Further identities ───────────────────────────────────


def xxphi_representation(sol: ParisiSolution, q: float, x: float, stride: int = 1) -> float:
    """1 − ζ([0,q)) u(q,x)² − Σ_{t_k ≥ q} w_k E[u(t_k,X_{t_k})² | X_q = x]."""
    laws = KernelLaws(sol, q, [x], stride=stride)
    u = float(sol.dx_phi(q, x))
    total = 1.0 - float(sol.measure.cdf_left(q)) * u * u
    for t, w in sol.measure.atoms_in(q - 1e-12, 1.0):
        total -= w * laws.m2(t)
    return total


def change_of_variables_sides(sol: ParisiSolution, q: float, u: float) -> tuple[float, float]:
    """Both sides of the change of variables y = ∂m h(q,m):

        ∫ ∂mm h · e^{uΦ(q,∂m h) − (∂m h)²/(2ξ'(q))} dm = ∫ e^{uΦ(q,y) − y²/(2ξ'(q))} dy
    """
    v = float(sol.mixture.d1(q))
    half_width = float(sol.grid.half_width or 0.0)
    y_max = min(u * v + 10.0 * np.sqrt(v), 0.9 * half_width)

    def rhs_integrand(y: float) -> float:
        return float(np.exp(u * sol.phi(q, y) - y * y / (2.0 * v)))

    def lhs_integrand(mv: float) -> float:
        _, x, ddh = sol.legendre_h(q, mv)
        return float(ddh) * rhs_integrand(float(x))

    m_max = float(sol.dx_phi(q, y_max))
    rhs = quad(rhs_integrand, -y_max, y_max, epsabs=0.0, epsrel=1e-11, limit=400)[0]
    lhs = quad(lhs_integrand, -m_max, m_max, epsabs=0.0, epsrel=1e-11, limit=400)[0]
    return lhs, rhs


def f_tap(hamiltonian: float, mu: EmpiricalMu, z: AtomicMeasure, m: Mixture,
          grid: GridSpec | None = None) -> float:
    """F_TAP,ζ(m) = H(m) − Σ_i h(q_m,m_i) − N U_ζ(q_m) = H(m) + N·TAP(μ,ζ)."""
    return hamiltonian + mu.n * tap_value(mu, z, m, grid)


@dataclass(frozen=True)
class Susy1Residuals:
    overlap: float
    field: float
    measure: float | None


def susy1_residuals(
    mu: EmpiricalMu,
    z: AtomicMeasure,
    m: Mixture,
    q: float,
    zeta_m: AtomicMeasure | None = None,
    grid: GridSpec | None = None,
) -> Susy1Residuals:
    """|q_m − q|, |⟨∂m h,m⟩/N − ξ'(q)∫_0^1 ζ|, and dist(ζ_m, π_qζ) when ζ_m is given."""
    sol = solve_projected(mu, z, m, grid)
    dh = np.asarray(sol.legendre_h(mu.q, mu.points)[1])
    field_res = float(np.mean(dh * mu.points)) - float(m.d1(q)) * z.cdf_integral(0.0, 1.0)
    meas = dist(zeta_m, project_at(z, q)) if zeta_m is not None else None
    return Susy1Residuals(abs(mu.q - q), abs(field_res), meas)
