"""Covariance geometry of the pair (∇F_TAP(m), F_TAP(m)).

For a state m with frozen overlap q the covariance is

    Γ = [[A, b], [bᵀ, c]],   A = ξ'(q) I + (ξ''(q)/N) m mᵀ,   b = ξ'(q) m,   c = N ξ(q),

so every operation is a rank-one update of a scalar matrix. Dense forms are
built only for small N, as oracles. The hierarchical part works with a
skeleton of nested states m^(1), …, m^(n) and the quadratic forms that come
out of conditioning level n on levels < n.
"""

import logging
import math
from collections.abc import Callable
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike
from scipy.linalg import cho_factor, cho_solve

from taplab.core.ac_sde import KernelLaws
from taplab.core.functionals import curvature_defect, k_field, tap_correction
from taplab.core.measures import AtomicMeasure, EmpiricalMu, PrefixSpec
from taplab.core.mixture import Mixture
from taplab.core.parisi_pde import ParisiSolution
from taplab.exceptions import DegeneracyError, DomainError

logger = logging.getLogger(__name__)

DENSE_LIMIT = 64
LOG_2PI = math.log(2.0 * math.pi)


# ─── Single state ─────────────────────────────────────────


@dataclass(frozen=True)
class GammaBlocks:
    """Γ for one state, stored as (ξ'(q), ξ''(q)/N, m, Nξ(q))."""

    mixture: Mixture
    m: np.ndarray
    q: float

    @classmethod
    def at(cls, mixture: Mixture, m: ArrayLike, q: float | None = None) -> "GammaBlocks":
        vec = np.asarray(m, dtype=float).ravel()
        qq = float(np.dot(vec, vec) / vec.size) if q is None else float(q)
        if not 0.0 < qq < 1.0:
            raise DomainError(f"overlap q={qq} not in (0,1)")
        return cls(mixture, vec, qq)

    @property
    def n(self) -> int:
        return int(self.m.size)

    @property
    def a0(self) -> float:
        return float(self.mixture.d1(self.q))

    @property
    def a1(self) -> float:
        return float(self.mixture.d2(self.q)) / self.n

    @property
    def c(self) -> float:
        return self.n * float(self.mixture(self.q))

    @property
    def norm2(self) -> float:
        return float(np.dot(self.m, self.m))

    def a_solve(self, v: np.ndarray) -> np.ndarray:
        """A⁻¹v by Sherman–Morrison."""
        a0, a1 = self.a0, self.a1
        return (v - a1 * self.m * np.dot(self.m, v) / (a0 + a1 * self.norm2)) / a0

    def schur(self) -> float:
        """S = c − bᵀA⁻¹b."""
        b = self.a0 * self.m
        return self.c - float(np.dot(b, self.a_solve(b)))

    def matvec(self, w: np.ndarray) -> np.ndarray:
        x, v = w[:-1], w[-1]
        top = self.a0 * x + self.a1 * self.m * np.dot(self.m, x) + self.a0 * self.m * v
        return np.append(top, self.a0 * np.dot(self.m, x) + self.c * v)

    def solve(self, z: np.ndarray) -> np.ndarray:
        """Γ⁻¹z through the block-inverse formula."""
        s = self._checked_schur()
        zx, zs = z[:-1], float(z[-1])
        ainv_b = self.a_solve(self.a0 * self.m)
        ainv_zx = self.a_solve(zx)
        scalar = (zs - float(np.dot(self.a0 * self.m, ainv_zx))) / s
        return np.append(ainv_zx - ainv_b * scalar, scalar)

    def dense(self) -> np.ndarray:
        if self.n > DENSE_LIMIT:
            raise DomainError(f"dense Γ only for N ≤ {DENSE_LIMIT}")
        out = np.empty((self.n + 1, self.n + 1))
        out[:-1, :-1] = self.a0 * np.eye(self.n) + self.a1 * np.outer(self.m, self.m)
        out[:-1, -1] = out[-1, :-1] = self.a0 * self.m
        out[-1, -1] = self.c
        return out

    def inverse_blocks(self) -> np.ndarray:
        """Γ⁻¹ assembled block by block (A⁻¹ + A⁻¹bbᵀA⁻¹/S, −A⁻¹b/S, 1/S)."""
        if self.n > DENSE_LIMIT:
            raise DomainError(f"dense Γ⁻¹ only for N ≤ {DENSE_LIMIT}")
        s = self._checked_schur()
        a0, a1 = self.a0, self.a1
        ainv = (np.eye(self.n) - a1 * np.outer(self.m, self.m) / (a0 + a1 * self.norm2)) / a0
        ainv_b = ainv @ (a0 * self.m)
        out = np.empty((self.n + 1, self.n + 1))
        out[:-1, :-1] = ainv + np.outer(ainv_b, ainv_b) / s
        out[:-1, -1] = out[-1, :-1] = -ainv_b / s
        out[-1, -1] = 1.0 / s
        return out

    def _checked_schur(self) -> float:
        s = self.schur()
        if s <= 1e-12 * max(1.0, self.c):
            raise DegeneracyError(
                f"Schur complement S={s:.3e} ≤ 0: the discriminant D(q) vanishes at q={self.q}")
        return s


def gamma_logdet(g: GammaBlocks, block: str = "full") -> float:
    """log det Γ (``block="full"``) or log det A (``block="A"``) in closed form."""
    a0, a1 = g.a0, g.a1
    logdet_a = (g.n - 1) * math.log(a0) + math.log(a0 + a1 * g.norm2)
    if block == "A":
        return logdet_a
    if block != "full":
        raise DomainError(f"Unknown block '{block}'. Available: full, A")
    return logdet_a + math.log(g._checked_schur())


def gamma_logdet_frozen(m: Mixture, n: int, q: float) -> float:
    """(N−1) log ξ' + log(ξ'+qξ'') + log(N D(q)/(ξ'+qξ'')) for ‖m‖² = Nq."""
    d1, d2 = float(m.d1(q)), float(m.d2(q))
    disc = float(m.discriminant(q))
    if disc <= 0:
        raise DegeneracyError(f"D(q)={disc:.3e} ≤ 0 at q={q}: pure mixture or q outside (0,1)")
    return (n - 1) * math.log(d1) + math.log(d1 + q * d2) + math.log(n * disc / (d1 + q * d2))


def dual_bound(g: GammaBlocks, z: ArrayLike, w: ArrayLike) -> tuple[float, float]:
    """(−⟨z,Γ⁻¹z⟩, ⟨w,Γw⟩ − 2⟨w,z⟩); the first never exceeds the second."""
    zv, wv = np.asarray(z, dtype=float), np.asarray(w, dtype=float)
    exact = -float(np.dot(zv, g.solve(zv)))
    bound = float(np.dot(wv, g.matvec(wv))) - 2.0 * float(np.dot(wv, zv))
    return exact, bound


def gaussian_logdensity(g: GammaBlocks, z: ArrayLike) -> float:
    """log φ of a centred N(0,Γ) at z."""
    zv = np.asarray(z, dtype=float)
    return -0.5 * float(np.dot(zv, g.solve(zv))) - 0.5 * ((g.n + 1) * LOG_2PI + gamma_logdet(g))


def constrained_quadratic(a0: float, y: ArrayLike, m: ArrayLike, target: float
                          ) -> tuple[float, np.ndarray]:
    """min over ⟨x,m⟩ = target of a0‖x‖² − 2⟨y,x⟩, by its Lagrange system."""
    yv, mv = np.asarray(y, dtype=float), np.asarray(m, dtype=float)
    n = yv.size
    kkt = np.zeros((n + 1, n + 1))
    kkt[:n, :n] = 2.0 * a0 * np.eye(n)
    kkt[:n, n] = kkt[n, :n] = mv
    x = np.linalg.solve(kkt, np.append(2.0 * yv, target))[:n]
    return a0 * float(np.dot(x, x)) - 2.0 * float(np.dot(yv, x)), x


def constrained_quadratic_closed(a0: float, y: ArrayLike, m: ArrayLike, target: float) -> float:
    """−‖y‖²/a0 + a0 (⟨y,m⟩/a0 − target)²/‖m‖²."""
    yv, mv = np.asarray(y, dtype=float), np.asarray(m, dtype=float)
    mm = float(np.dot(mv, mv))
    return -float(np.dot(yv, yv)) / a0 + a0 * (float(np.dot(yv, mv)) / a0 - target) ** 2 / mm


# ─── SUSY log-densities ───────────────────────────────────


@dataclass
class SusyTerms:
    """Per-spin pieces of the SUSY log-density."""

    quadratic: float
    curvature: float
    gradient: float
    entropy: float
    tilt: float
    penalty: float

    @property
    def lower(self) -> float:
        return self.quadratic + self.curvature + self.gradient + self.entropy + self.tilt


def _susy_terms(sol: ParisiSolution, mu: EmpiricalMu, u: float, q: float, f: float) -> SusyTerms:
    mix, z = sol.mixture, sol.measure
    mvec = mu.points
    n = mu.n
    h, dh, _ = (np.asarray(v) for v in sol.legendre_h(q, mvec))
    d1 = float(mix.d1(q))
    tail = z.cdf_integral(q, 1.0)
    full = z.cdf_integral(0.0, 1.0)
    resid = dh - u * d1 * mvec
    return SusyTerms(
        quadratic=0.5 * float(mix(q)) * u * u,
        curvature=-0.5 * float(mix.d2(q)) * tail * tail,
        gradient=-float(np.dot(resid, resid)) / (2.0 * n * d1),
        entropy=-0.5 * math.log(2.0 * math.pi * d1),
        tilt=-u * (float(h.mean()) + tap_correction(z, mix, q) + f),
        penalty=(float(np.dot(dh, mvec)) / n - d1 * full) ** 2,
    )


def susy_logdensity_mixed(sol: ParisiSolution, mu: EmpiricalMu, u: float, q: float,
                          f: float) -> float:
    """Per-spin SUSY log-density of (∇F_TAP, F_TAP) at (0, Nf) for a mixed ξ."""
    if sol.mixture.is_pure():
        raise DomainError("susy_logdensity_mixed needs a genuine mixture")
    return _susy_terms(sol, mu, u, q, f).lower


def susy_upper_bound(sol: ParisiSolution, mu: EmpiricalMu, u: float, q: float, f: float) -> float:
    """The same with the positive constraint penalty (⟨∂m h,m⟩/N − ξ'(q)∫ζ)²/(2ξ'(q)q) added."""
    t = _susy_terms(sol, mu, u, q, f)
    return t.lower + t.penalty / (2.0 * float(sol.mixture.d1(q)) * q)


def constraint_penalty(sol: ParisiSolution, mu: EmpiricalMu, q: float) -> float:
    return _susy_terms(sol, mu, 0.0, q, 0.0).penalty


def susy_logdensity_pure(sol: ParisiSolution, mu: EmpiricalMu, u: float, q: float, f: float,
                         p: int) -> float:
    """Per-spin tilted gradient log-density for ξ = β²t^p, with the (p−1)/p penalty."""
    if sol.mixture.pure_degree != p:
        raise DomainError(f"expected a pure {p}-spin mixture, got {sol.mixture}")
    t = _susy_terms(sol, mu, u, q, f)
    return t.lower + (p - 1) / p * t.penalty / (2.0 * float(sol.mixture.d1(q)) * q)


def pure_inverse(m: Mixture, mvec: ArrayLike) -> np.ndarray:
    """G⁻¹ = I/ξ'(q) − (p−1)/(p ξ'(q) q) · mmᵀ/N for a pure p-spin."""
    p = m.pure_degree
    if p is None:
        raise DomainError("pure_inverse needs a pure mixture")
    v = np.asarray(mvec, dtype=float)
    n = v.size
    q = float(np.dot(v, v) / n)
    d1 = float(m.d1(q))
    return np.eye(n) / d1 - (p - 1) / (p * d1 * q) * np.outer(v, v) / n


def tap_entropy_gradient(sol: ParisiSolution, mu: EmpiricalMu) -> np.ndarray:
    """∇S(m) for S(m) = Σ h_ζ(q_m, m_i) + N U_ζ(q_m); ``sol`` solves ζ projected at q_m."""
    q = mu.q
    k = np.asarray(k_field(sol, q, mu.points))
    return k - mu.points * float(sol.mixture.d2(q)) * curvature_defect(sol, mu)


def tap_entropy(sol: ParisiSolution, mu: EmpiricalMu) -> float:
    q = mu.q
    h = np.asarray(sol.legendre_h(q, mu.points)[0])
    return float(h.sum()) + mu.n * tap_correction(sol.measure, sol.mixture, q)


def remainder_ex(sol: ParisiSolution, mu: EmpiricalMu, p: int) -> float:
    """R^ex(m) = (1/p)⟨m, ∇S(m)⟩ − S(m)."""
    grad = tap_entropy_gradient(sol, mu)
    return float(np.dot(mu.points, grad)) / p - tap_entropy(sol, mu)


def exact_logdensity(sol: ParisiSolution, mu: EmpiricalMu, f: float) -> float:
    """Per-spin exact Gaussian log-density of (∇F_TAP(m), F_TAP(m)) at (0, Nf)."""
    g = GammaBlocks.at(sol.mixture, mu.points)
    z = np.append(tap_entropy_gradient(sol, mu), mu.n * f + tap_entropy(sol, mu))
    return gaussian_logdensity(g, z) / mu.n


def law_matched_witness(sol: ParisiSolution, q: float, n: int) -> EmpiricalMu:
    """N magnetizations at the quantiles of ∂xΦ(q, X_q), X started at 0."""
    laws = KernelLaws(sol)
    cum = laws.cdf(q, laws.x)
    probs = (np.arange(n) + 0.5) / n
    xs = np.interp(probs, cum, laws.x)
    mvals = np.asarray(sol.dx_phi(q, xs), dtype=float)
    return EmpiricalMu(np.clip(mvals, -1.0 + 1e-12, 1.0 - 1e-12))


# ─── Hierarchies ──────────────────────────────────────────


@dataclass
class HierData:
    """Nested states m^(1..n), gradient values g^(k) standing for ∂m h(q_k, m^(k)),
    entropy sums s_k standing for Σ_i h(q_k, m_i^(k)), and levels f_k."""

    prefix: PrefixSpec
    states: np.ndarray
    grads: np.ndarray
    sums: np.ndarray
    levels: np.ndarray

    @property
    def n(self) -> int:
        return self.prefix.n

    @property
    def size(self) -> int:
        return int(self.states.shape[1])

    @property
    def q(self) -> np.ndarray:
        return np.asarray(self.prefix.q)

    def check(self, tol: float = 1e-10) -> float:
        """Largest violation of the norm and hierarchical-orthogonality constraints."""
        gram = self.states @ self.states.T / self.size
        qmin = np.minimum.outer(self.q, self.q)
        return float(np.max(np.abs(gram - qmin)))


def nested_states(q: ArrayLike, size: int, rng: np.random.Generator) -> np.ndarray:
    """m^(k) = m^(k−1) + √(N(q_k − q_{k−1})) e_k with orthonormal e_k."""
    qs = np.asarray(q, dtype=float)
    basis, _ = np.linalg.qr(rng.standard_normal((size, qs.size)))
    incr = np.sqrt(size * np.diff(np.concatenate([[0.0], qs])))
    return np.cumsum(basis.T * incr[:, None], axis=0)


def _tail_integrals(z: AtomicMeasure, q: np.ndarray) -> np.ndarray:
    return np.array([z.cdf_integral(float(qk), 1.0) for qk in q])


def _xi_matrix(fn: Callable[[np.ndarray], ArrayLike], q: np.ndarray) -> np.ndarray:
    return np.asarray(fn(np.minimum.outer(q, q)), dtype=float)


def synthetic_hier_witness(
    prefix: PrefixSpec,
    m: Mixture,
    size: int,
    seed: int = 0,
) -> HierData:
    """A hierarchy satisfying the compression identities and the level conditions exactly.

    Gradient values are random vectors corrected inside span{m^(j)} by a Gram
    solve; entropy sums are random and the levels f_k are read off the
    scalar conditions.
    """
    rng = np.random.default_rng(seed)
    z = prefix.assemble()
    q = np.asarray(prefix.q)
    n = q.size
    delta = prefix.deltas()
    states = nested_states(q, size, rng)
    tails = _tail_integrals(z, q)
    d1q = _xi_matrix(m.d1, q)
    qmin = np.minimum.outer(q, q)
    # ⟨g^(i), m^(j)⟩ = N ξ'(q_ij) ∫_{q_j}^1 ζ + N Σ_k ξ'(q_ik) Δ_k q_kj
    targets = size * (d1q * tails[None, :] + (d1q * delta[None, :]) @ qmin)
    gram = states @ states.T
    grads = np.empty((n, size))
    for i in range(n):
        r = rng.standard_normal(size)
        coef = np.linalg.solve(gram, targets[i] - states @ r)
        grads[i] = r + coef @ states
    sums = size * rng.normal(scale=0.3, size=n)
    data = HierData(prefix, states, grads, sums, np.zeros(n))
    ladder = hier_ladder(data, m)
    xq = _xi_matrix(m, q)
    levels = np.empty(n)
    for k in range(n):
        levels[k] = (float(m.d1(q[k])) * float(np.dot(ladder.x[k], states[k]))
                     + size * float(xq[k] @ delta) - sums[k]
                     - size * tap_correction(z, m, float(q[k]))) / size
    data.levels = levels
    return data


@dataclass
class Ladder:
    y: np.ndarray
    z: np.ndarray
    x: np.ndarray


def hier_ladder(h: HierData, m: Mixture, delta: np.ndarray | None = None,
                upto: int | None = None) -> Ladder:
    """y^(i) = g^(i) − Σ_j ξ'(q_ij)Δ_j m^(j), z^(k) = (y^(k) − y^(k−1))/(ξ'(q_k) − ξ'(q_{k−1})),
    x^(k) = z^(k) − z^(k+1), on the first ``upto`` levels."""
    k = upto or h.n
    q = h.q[:k]
    d = h.prefix.deltas() if delta is None else delta
    if d.size != k:
        d = np.append(d[:k - 1], d[k - 1:].sum())
    d1q = _xi_matrix(m.d1, q)
    y = h.grads[:k] - d1q @ (d[:, None] * h.states[:k])
    inc = np.diff(np.concatenate([[0.0], np.asarray(m.d1(q), dtype=float)]))
    dy = np.diff(np.vstack([np.zeros(h.size), y]), axis=0)
    zz = dy / inc[:, None]
    x = zz - np.vstack([zz[1:], np.zeros(h.size)])
    return Ladder(y, zz, x)


@dataclass
class HierReport:
    compression: np.ndarray
    telescoping: tuple[float, float]
    det_factorization: tuple[float, float]
    membership: float
    orthogonality: float
    info: dict = field(default_factory=dict)

    @property
    def max_residual(self) -> float:
        return max(float(np.max(np.abs(self.compression))),
                   abs(self.telescoping[0] - self.telescoping[1]),
                   abs(self.det_factorization[0] - self.det_factorization[1]),
                   self.membership)


def telescoping_sides(prefix: PrefixSpec, m: Mixture) -> tuple[float, float]:
    """(Σ ξ(q_ij)Δ_iΔ_j, Σ (ξ(q_i) − ξ(q_{i−1})) ζ([0,q_i))²)."""
    q = np.asarray(prefix.q)
    d = prefix.deltas()
    lhs = float(d @ _xi_matrix(m, q) @ d)
    z = prefix.assemble()
    xi = np.asarray(m(np.concatenate([[0.0], q])), dtype=float)
    below = np.asarray(z.cdf_left(q), dtype=float)
    return lhs, float(np.sum(np.diff(xi) * below ** 2))


def det_factorization_sides(q: ArrayLike, m: Mixture) -> tuple[float, float]:
    """(det ξ'(Q) by dense LU, Π (ξ'(q_i) − ξ'(q_{i−1})))."""
    qs = np.asarray(q, dtype=float)
    dense = float(np.linalg.det(_xi_matrix(m.d1, qs)))
    d1 = np.asarray(m.d1(np.concatenate([[0.0], qs])), dtype=float)
    return dense, float(np.prod(np.diff(d1)))


def hier_forms(h: HierData, m: Mixture, z: AtomicMeasure | None = None) -> HierReport:
    """Compression identities, telescoping sum, det ξ'(Q) and the constraint set membership."""
    z = z or h.prefix.assemble()
    q = h.q
    n, size = h.n, h.size
    d = h.prefix.deltas()
    d1q = _xi_matrix(m.d1, q)
    tails = _tail_integrals(z, q)
    zvec = -(d1q @ (d[:, None] * h.states))
    inner = (zvec + h.grads) @ h.states.T
    compression = (inner - size * d1q * tails[None, :]) / size

    ladder = hier_ladder(h, m)
    got = ladder.x @ h.states.T
    want = size * np.diag(tails)
    membership = float(np.max(np.abs(got - want))) / size
    report = HierReport(
        compression=compression,
        telescoping=telescoping_sides(h.prefix, m),
        det_factorization=det_factorization_sides(q, m),
        membership=membership,
        orthogonality=h.check(),
        info={"n": n, "N": size},
    )
    logger.debug("hierarchy forms: max residual %.3e", report.max_residual)
    return report


# ─── Skeleton densities ───────────────────────────────────


def skeleton_covariance(m: Mixture, states: np.ndarray) -> np.ndarray:
    """Cov of (∇H(m^(1)), H(m^(1)), …, ∇H(m^(n)), H(m^(n)))."""
    n, size = states.shape
    block = size + 1
    out = np.empty((n * block, n * block))
    for i in range(n):
        for j in range(n):
            r = float(np.dot(states[i], states[j])) / size
            d1, d2 = float(m.d1(r)), float(m.d2(r))
            sub = np.empty((block, block))
            sub[:size, :size] = d1 * np.eye(size) + d2 * np.outer(states[j], states[i]) / size
            sub[:size, size] = d1 * states[j]
            sub[size, :size] = d1 * states[i]
            sub[size, size] = size * float(m(r))
            out[i * block:(i + 1) * block, j * block:(j + 1) * block] = sub
    return out


def skeleton_mean_gap(h: HierData, m: Mixture, z: AtomicMeasure | None = None) -> np.ndarray:
    """a_n: per level (k_ζ(q_k, m^(k)), N f_k + s_k + N U_ζ(q_k))."""
    z = z or h.prefix.assemble()
    parts = []
    for k in range(h.n):
        qk = float(h.q[k])
        grad = h.grads[k] + h.states[k] * float(m.d2(qk)) * z.cdf_integral(qk, 1.0)
        scalar = h.size * h.levels[k] + h.sums[k] + h.size * tap_correction(z, m, qk)
        parts.append(np.append(grad, scalar))
    return np.concatenate(parts)


def _gauss_logpdf(cov: np.ndarray, a: np.ndarray) -> float:
    factor = cho_factor(cov)
    quad = float(np.dot(a, cho_solve(factor, a)))
    logdet = 2.0 * float(np.sum(np.log(np.diag(factor[0]))))
    return -0.5 * quad - 0.5 * (a.size * LOG_2PI + logdet)


def conditional_logdensity(h: HierData, m: Mixture) -> tuple[float, float]:
    """log φ_{Skel_n | Skel_{n−1}} at (0, Nf) two ways: dense Gaussian conditioning,
    and the level quadratic forms at the dual points of levels n and n−1 with dense
    log-determinants."""
    if h.n < 2:
        raise DomainError("conditioning needs at least two levels")
    z = h.prefix.assemble()
    cov = skeleton_covariance(m, h.states)
    a = skeleton_mean_gap(h, m, z)
    cut = (h.n - 1) * (h.size + 1)
    c11, c12, c22 = cov[:cut, :cut], cov[:cut, cut:], cov[cut:, cut:]
    f11 = cho_factor(c11)
    mean = c12.T @ cho_solve(f11, a[:cut])
    schur = c22 - c12.T @ cho_solve(f11, c12)
    dense = _gauss_logpdf(schur, a[cut:] - mean)

    def level_quadratic(k: int) -> float:
        """⟨a_k, (Γ'_k)⁻¹ a_k⟩ = ⟨a_k, w_k⟩ at the dual point w_k = (x^(i), Δ_i)_{i≤k}."""
        d = h.prefix.deltas()
        dk = np.append(d[:k - 1], d[k - 1:].sum())
        ladder = hier_ladder(h, m, dk, upto=k)
        w = np.concatenate([np.append(ladder.x[i], dk[i]) for i in range(k)])
        return float(np.dot(a[:k * (h.size + 1)], w))

    def logdet(c: np.ndarray) -> float:
        sign, val = np.linalg.slogdet(c)
        if sign <= 0:
            raise DegeneracyError("skeleton covariance is not positive definite")
        return float(val)

    pathway = (-0.5 * level_quadratic(h.n) + 0.5 * level_quadratic(h.n - 1)
               - 0.5 * (logdet(cov) - logdet(c11)) - 0.5 * (h.size + 1) * LOG_2PI)
    return dense, pathway


def optimal_dual_point(h: HierData, m: Mixture) -> tuple[np.ndarray, float]:
    """w = (x^(1), Δ_1, …, x^(n), Δ_n) and the residual ‖Γ'_n w − a_n‖_∞ / N."""
    ladder = hier_ladder(h, m)
    d = h.prefix.deltas()
    w = np.concatenate([np.append(ladder.x[k], d[k]) for k in range(h.n)])
    cov = skeleton_covariance(m, h.states)
    a = skeleton_mean_gap(h, m)
    return w, float(np.max(np.abs(cov @ w - a))) / h.size
