"""Small-N Monte Carlo over the mixed p-spin field.

Every quantity checked here (H, ∇H, ∇²H at fixed points) is a linear map
of the coupling tensors, so the batch checks work as follows:

1. Build, per degree p, the feature matrix F_p whose columns are the
   linear functionals m^{⊗p}, ∂(m^{⊗p}), ∂²(m^{⊗p}) flattened over N^p
2. Draw standard normal couplings in row blocks and accumulate c_p·Z·F_p
3. Reduce per-sample products to (estimate, standard error) rows

``FieldSample`` keeps one full set of tensors and evaluates by direct
contraction; it is the single-draw path used by the Euler identity checks.
The deformed GOE experiments compare sampled log-determinants with the
free-convolution oracles of ``taplab.core.freeprob``.
"""

import logging
import math
from collections.abc import Iterator
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike
from scipy.optimize import brentq
from scipy.stats import norm

from taplab.config import get_settings
from taplab.core.freeprob import SpectralMeasure, log_potential, stieltjes
from taplab.core.gaussian_geometry import tap_entropy, tap_entropy_gradient
from taplab.core.measures import EmpiricalMu
from taplab.core.mixture import Mixture
from taplab.core.parisi_pde import ParisiSolution
from taplab.exceptions import DomainError, FieldBudgetError, SubordinationError

logger = logging.getLogger(__name__)

MAX_SITES = 64
MAX_GOE = 2000
DRAW_BLOCK = 4_000_000
SPECTRUM_FLOOR = 1e-3


# ─── Reports ──────────────────────────────────────────────


@dataclass(frozen=True)
class CheckRow:
    quantity: str
    estimate: float
    se: float
    target: float
    passed: bool

    def to_dict(self) -> dict:
        return {
            "quantity": self.quantity,
            "estimate": self.estimate,
            "se": self.se,
            "target": self.target,
            "pass": self.passed,
        }


@dataclass
class CheckReport:
    name: str
    rows: list[CheckRow] = field(default_factory=list)
    info: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def row(self, quantity: str) -> CheckRow:
        for r in self.rows:
            if r.quantity == quantity:
                return r
        raise KeyError(quantity)

    def to_rows(self) -> list[dict]:
        return [r.to_dict() for r in self.rows]


def _mc_row(quantity: str, products: np.ndarray, target: float, multiplier: float) -> CheckRow:
    v = np.asarray(products, dtype=float)
    est = float(v.mean())
    se = float(v.std(ddof=1) / math.sqrt(v.size))
    return CheckRow(quantity, est, se, float(target), abs(est - target) <= multiplier * se)


# ─── Coupling tensors ─────────────────────────────────────


def _check_size(mixture: Mixture, n: int) -> None:
    if not 2 <= n <= MAX_SITES:
        raise DomainError(f"N={n} outside [2, {MAX_SITES}]")
    budget = get_settings().max_tensor_entries
    for p in mixture.degrees:
        if n**p > budget:
            raise FieldBudgetError(
                f"degree {p} at N={n} needs {n**p} coupling entries; budget is {budget}"
            )


def _scale(beta2: float, n: int, p: int) -> float:
    return math.sqrt(beta2) * n ** (-(p - 1) / 2)


@dataclass(frozen=True, eq=False)
class FieldSample:
    """One draw of H(m) = Σ_p β_p N^{-(p-1)/2} Σ J_{i₁..i_p} m_{i₁}…m_{i_p}.

    ``couplings[p]`` already carries the factor β_p N^{-(p-1)/2}.
    """

    mixture: Mixture
    n: int
    couplings: dict[int, np.ndarray]

    def _vector(self, m: ArrayLike) -> np.ndarray:
        v = np.asarray(m, dtype=float).ravel()
        if v.size != self.n:
            raise DomainError(f"state has {v.size} entries, field has N={self.n}")
        return v

    def hamiltonian(self, m: ArrayLike) -> float:
        v = self._vector(m)
        total = 0.0
        for j in self.couplings.values():
            out = j
            for _ in range(j.ndim):
                out = out @ v
            total += float(out)
        return total

    def gradient(self, m: ArrayLike) -> np.ndarray:
        v = self._vector(m)
        grad = np.zeros(self.n)
        for j in self.couplings.values():
            for k in range(j.ndim):
                out = np.moveaxis(j, k, 0)
                for _ in range(j.ndim - 1):
                    out = out @ v
                grad += out
        return grad

    def hessian(self, m: ArrayLike) -> np.ndarray:
        v = self._vector(m)
        hess = np.zeros((self.n, self.n))
        for j in self.couplings.values():
            p = j.ndim
            for k1 in range(p):
                for k2 in range(p):
                    if k1 == k2:
                        continue
                    out = np.moveaxis(j, (k1, k2), (0, 1))
                    for _ in range(p - 2):
                        out = out @ v
                    hess += out
        return hess


def sample_field(mixture: Mixture, n: int, seed: int | None = None) -> FieldSample:
    _check_size(mixture, n)
    rng = np.random.default_rng(seed)
    couplings = {
        p: _scale(beta2, n, p) * rng.standard_normal((n,) * p)
        for p, beta2 in mixture.active
    }
    return FieldSample(mixture, n, couplings)


def euler_residual(fs: FieldSample, m: ArrayLike) -> float:
    """H(m) − (1/p)⟨m, ∇H(m)⟩ for a pure p-spin draw."""
    p = fs.mixture.pure_degree
    if p is None:
        raise DomainError("Euler identity needs a pure mixture")
    v = np.asarray(m, dtype=float)
    return fs.hamiltonian(v) - float(np.dot(v, fs.gradient(v))) / p


def tap_euler_residual(fs: FieldSample, sol: ParisiSolution, mu: EmpiricalMu) -> float:
    """F_TAP(m) − (1/p)⟨m, ∇F_TAP(m)⟩ − R^ex(m), with F_TAP = H − S."""
    p = fs.mixture.pure_degree
    if p is None:
        raise DomainError("Euler identity needs a pure mixture")
    v = mu.points
    s = tap_entropy(sol, mu)
    ds = tap_entropy_gradient(sol, mu)
    f_val = fs.hamiltonian(v) - s
    df = fs.gradient(v) - ds
    remainder = float(np.dot(v, ds)) / p - s
    return f_val - float(np.dot(v, df)) / p - remainder


# ─── Batch features ───────────────────────────────────────


def _outer_features(v: np.ndarray, p: int, slots: tuple[int, ...]) -> np.ndarray:
    """Flattened m^{⊗p} with e_a at the tensor positions in ``slots``."""
    n = v.size
    eye = np.eye(n)
    t = np.ones(())
    index_axes: list[int] = []
    free_axes: dict[int, int] = {}
    for j in range(p):
        if j in slots:
            t = np.multiply.outer(t, eye)
            index_axes.append(t.ndim - 2)
            free_axes[j] = t.ndim - 1
        else:
            t = np.multiply.outer(t, v)
            index_axes.append(t.ndim - 1)
    t = np.transpose(t, index_axes + [free_axes[s] for s in slots])
    return t.reshape((n**p,) + (n,) * len(slots))


def _features(v: np.ndarray, p: int, order: int) -> np.ndarray:
    n = v.size
    if order == 0:
        return _outer_features(v, p, ()).reshape(n**p, 1)
    if order == 1:
        grad = np.zeros((n**p, n))
        for k in range(p):
            grad += _outer_features(v, p, (k,))
        return grad
    out = np.zeros((n**p, n, n))
    for k1 in range(p):
        for k2 in range(p):
            if k1 != k2:
                out += _outer_features(v, p, (k1, k2))
    return out.reshape(n**p, n * n)


def _draw(mixture: Mixture, n: int, blocks: list[tuple[ArrayLike, int]], samples: int,
          seed: int | None) -> np.ndarray:
    """Samples × columns of the requested (point, derivative order) blocks."""
    _check_size(mixture, n)
    rng = np.random.default_rng(seed)
    pts = [np.asarray(v, dtype=float).ravel() for v, _ in blocks]
    width = sum(n**order for _, order in blocks)
    out = np.zeros((samples, width))
    for p, beta2 in mixture.active:
        feats = np.hstack([_features(v, p, order)
                           for v, (_, order) in zip(pts, blocks, strict=True)])
        scale = _scale(beta2, n, p)
        rows = max(1, DRAW_BLOCK // feats.shape[0])
        for start in range(0, samples, rows):
            stop = min(samples, start + rows)
            z = rng.standard_normal((stop - start, feats.shape[0]))
            out[start:stop] += scale * (z @ feats)
        logger.debug("Drew degree %d contributions (%d features)", p, feats.shape[0])
    return out


# ─── Covariance structure ─────────────────────────────────


def covariance_check(
    mixture: Mixture,
    m1: ArrayLike,
    m2: ArrayLike,
    samples: int | None = None,
    seed: int | None = None,
    multiplier: float | None = None,
) -> CheckReport:
    """Empirical H–H, ∇H–H and ∇H–∇H covariances against Nξ(R), ξ'(R)m', ξ'(R)δ + ξ''(R)m'm/N."""
    settings = get_settings()
    samples = samples or settings.mc_paths
    k = settings.se_multiplier if multiplier is None else multiplier
    a = np.asarray(m1, dtype=float).ravel()
    b = np.asarray(m2, dtype=float).ravel()
    n = a.size
    if b.size != n:
        raise DomainError("states must have the same dimension")
    r = float(a @ b) / n
    q = float(a @ a) / n

    draws = _draw(mixture, n, [(a, 0), (b, 0), (a, 1), (b, 1)], samples, seed)
    h1, h2 = draws[:, 0], draws[:, 1]
    g1, g2 = draws[:, 2:2 + n], draws[:, 2 + n:]

    rows = [
        _mc_row("cov_H_H", h1 * h2, n * float(mixture(r)), k),
        _mc_row("var_H", h1 * h1, n * float(mixture(q)), k),
        _mc_row("cov_mgradH_H", (g1 @ a) * h1, float(mixture.d1(q)) * n * q, k),
    ]
    rows += [
        _mc_row(f"cov_d{i}H_H", g1[:, i] * h1, float(mixture.d1(q)) * a[i], k)
        for i in range(n)
    ]
    rows.append(_mc_row("cov_gradH_H_cross", g1[:, 0] * h2, float(mixture.d1(r)) * b[0], k))
    rows.append(_mc_row(
        "cov_grad_grad_trace", np.sum(g1 * g2, axis=1),
        n * float(mixture.d1(r)) + float(mixture.d2(r)) * r, k,
    ))
    rows.append(_mc_row(
        "cov_d0H_d1H", g1[:, 0] * g2[:, 1], float(mixture.d2(r)) * b[0] * a[1] / n, k,
    ))
    report = CheckReport("covariance", rows, {"n": n, "samples": samples, "overlap": r})
    rel = abs(report.row("cov_H_H").estimate - rows[0].target) / max(abs(rows[0].target), 1e-300)
    report.info["cov_H_H_relative_error"] = rel
    logger.info("Covariance check N=%d samples=%d passed=%s", n, samples, report.passed)
    return report


def hessian_blocks_check(
    mixture: Mixture,
    m: ArrayLike,
    samples: int | None = None,
    seed: int | None = None,
    multiplier: float | None = None,
) -> CheckReport:
    """Law of the Hessian in the basis (m/√(Nq), basis of m⊥) given (H, ∇H)."""
    settings = get_settings()
    samples = samples or settings.mc_paths
    k = settings.se_multiplier if multiplier is None else multiplier
    v = np.asarray(m, dtype=float).ravel()
    n = v.size
    q = float(v @ v) / n
    if q <= 0.0:
        raise DomainError("Hessian block law needs q > 0")
    if n < 3:
        raise DomainError("Hessian block law needs N >= 3")

    # Orthonormal basis with e1 = m/|m|.
    basis, _ = np.linalg.qr(np.column_stack([v, np.eye(n)]))
    basis[:, 0] = v / math.sqrt(n * q)

    draws = _draw(mixture, n, [(v, 0), (v, 1), (v, 2)], samples, seed)
    h = draws[:, 0]
    x = draws[:, 1:1 + n] @ basis
    hess = draws[:, 1 + n:].reshape(samples, n, n)
    rot = np.einsum("ai,sab,bj->sij", basis, hess, basis)
    a_entry = rot[:, 0, 0]
    b_block = rot[:, 1:, 0]
    c_block = rot[:, 1:, 1:]
    x_par, x_perp = x[:, 0], x[:, 1:]

    d1, d2 = float(mixture.d1(q)), float(mixture.d2(q))
    d3, d4 = float(mixture.xi(q, 3)), float(mixture.xi(q, 4))
    sigma_x = np.array([[n * float(mixture(q)), d1 * math.sqrt(n * q)],
                        [d1 * math.sqrt(n * q), d1 + q * d2]])
    sigma_ax = np.array([d2 * q, (d3 * q + 2.0 * d2) * math.sqrt(q / n)])
    var_a = (2.0 * d2 + 4.0 * d3 * q + d4 * q * q) / n
    coef_a = np.linalg.solve(sigma_x, sigma_ax)
    a_resid = a_entry - np.column_stack([h, x_par]) @ coef_a
    slope_b = d2 / d1 * math.sqrt(q / n)
    b_resid = b_block - slope_b * x_perp
    var_b = (d2 + q * d3 - d2 * d2 * q / d1) / n

    iu = np.triu_indices(n - 1, 1)
    rows = [
        _mc_row("var_C_offdiag", np.mean(c_block[:, iu[0], iu[1]] ** 2, axis=1), d2 / n, k),
        _mc_row("var_C_diag", np.mean(np.diagonal(c_block, axis1=1, axis2=2) ** 2, axis=1),
                2.0 * d2 / n, k),
        _mc_row("cov_C00_C11", c_block[:, 0, 0] * c_block[:, 1, 1], 0.0, k),
        _mc_row("cov_C00_H", c_block[:, 0, 0] * h, 0.0, k),
        _mc_row("cov_C01_H", c_block[:, 0, 1] * h, 0.0, k),
        _mc_row("cov_C00_xpar", c_block[:, 0, 0] * x_par, 0.0, k),
        _mc_row("cov_C01_xperp", c_block[:, 0, 1] * x_perp[:, 0], 0.0, k),
        _mc_row("var_xpar", x_par * x_par, d1 + q * d2, k),
        _mc_row("cov_A_H", a_entry * h, d2 * q, k),
        _mc_row("cov_A_xpar", a_entry * x_par, sigma_ax[1], k),
        _mc_row("var_A", a_entry * a_entry, var_a, k),
        _mc_row("cov_Aresid_H", a_resid * h, 0.0, k),
        _mc_row("cov_Aresid_xpar", a_resid * x_par, 0.0, k),
        _mc_row("var_A_given_X", a_resid * a_resid, var_a - float(sigma_ax @ coef_a), k),
        _mc_row("cov_B_xperp", np.mean(b_block * x_perp, axis=1), d2 * math.sqrt(q / n), k),
        _mc_row("cov_Bresid_xperp", np.mean(b_resid * x_perp, axis=1), 0.0, k),
        _mc_row("var_B_given_X", np.mean(b_resid * b_resid, axis=1), var_b, k),
        _mc_row("cov_A_B_given_X", a_resid * b_resid[:, 0], 0.0, k),
        _mc_row("cov_B_C", b_resid[:, 0] * c_block[:, 0, 1], 0.0, k),
    ]
    report = CheckReport("hessian_blocks", rows, {"n": n, "samples": samples, "q": q})
    logger.info("Hessian block check N=%d q=%.4f passed=%s", n, q, report.passed)
    return report


# ─── Deformed GOE ─────────────────────────────────────────


@dataclass(frozen=True, eq=False)
class DeformedGOE:
    """√t·GOE_N/√N + diag(D); GOE has off-diagonal variance 1 and diagonal variance 2."""

    n: int
    t: float
    diagonal: np.ndarray
    seed: int | None = None

    def __post_init__(self) -> None:
        if not 1 <= self.n <= MAX_GOE:
            raise DomainError(f"N={self.n} outside [1, {MAX_GOE}]")
        if self.t < 0:
            raise DomainError(f"variance t={self.t} must be >= 0")
        d = np.broadcast_to(np.asarray(self.diagonal, dtype=float), (self.n,)).copy()
        object.__setattr__(self, "diagonal", d)

    @classmethod
    def from_tap(cls, sol: ParisiSolution, mu: EmpiricalMu,
                 seed: int | None = None) -> "DeformedGOE":
        """Diagonal T_ζ(m_i) = ∂mm h(q,m_i) + ξ''(q)∫_q^1 ζ, variance ξ''(q)."""
        q = mu.q
        t = float(sol.mixture.d2(q))
        return cls(mu.n, t, tap_hessian_diagonal(sol, mu), seed)

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        g = rng.standard_normal((self.n, self.n))
        goe = (g + g.T) / math.sqrt(2.0)
        return math.sqrt(self.t / self.n) * goe + np.diag(self.diagonal)


@dataclass
class LogdetEstimate:
    mean: float
    se: float
    values: np.ndarray
    min_abs_eigs: np.ndarray
    resampled: int = 0

    def __iter__(self) -> Iterator[float]:
        return iter((self.mean, self.se))


def tap_hessian_diagonal(sol: ParisiSolution, mu: EmpiricalMu) -> np.ndarray:
    q = mu.q
    ddh = np.asarray(sol.legendre_h(q, mu.points)[2], dtype=float)
    return ddh + float(sol.mixture.d2(q)) * sol.measure.cdf_integral(q, 1.0)


def goe_logdet(d: DeformedGOE, samples: int) -> LogdetEstimate:
    """Mean of (1/N) log|det| over samples, from the symmetric spectrum."""
    if samples < 2:
        raise DomainError("goe_logdet needs at least 2 samples")
    rng = np.random.default_rng(d.seed)
    values = np.empty(samples)
    floors = np.empty(samples)
    resampled = 0
    i = 0
    while i < samples:
        eigs = np.linalg.eigvalsh(d.sample(rng))
        absval = np.abs(eigs)
        if np.any(absval == 0.0):
            resampled += 1
            continue
        values[i] = float(np.mean(np.log(absval)))
        floors[i] = float(absval.min())
        i += 1
    if resampled:
        logger.warning("Resampled %d exactly singular deformed GOE draws", resampled)
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(samples))
    return LogdetEstimate(mean, se, values, floors, resampled)


# ─── Determinant asymptotics ──────────────────────────────


def tanh_witness(n: int, q: float) -> EmpiricalMu:
    """m_i = tanh(s·z_i) at standard normal quantiles z_i, with s chosen so that q_m = q."""
    if not 0.0 < q < 1.0:
        raise DomainError(f"overlap q={q} not in (0,1)")
    z = norm.ppf((np.arange(n) + 0.5) / n)
    scale = brentq(lambda s: float(np.mean(np.tanh(s * z) ** 2)) - q, 1e-8, 1e3)
    return EmpiricalMu(np.tanh(scale * z))


def det_asymp_check(
    sol: ParisiSolution,
    mu: EmpiricalMu,
    samples: int = 0,
    seed: int | None = None,
    closed_tol: float = 1e-6,
    goe_tol: float = 0.02,
) -> CheckReport:
    """Closed form vs free convolution vs deformed GOE for the TAP Hessian determinant.

    ``sol`` solves ζ projected onto [q_μ, 1]. The three per-spin values are
    (1/N)Σ log ∂mm h + ½ξ''(q)(∫_q^1 ζ)², ∫ log|x| d(T_ζ#μ ⊞ σ_{ξ''(q)}) and
    the sampled (1/N) log|det|. Rows that need the free-convolution value are
    marked failed when 0 lies in its support.
    """
    q = mu.q
    t = float(sol.mixture.d2(q))
    tail = sol.measure.cdf_integral(q, 1.0)
    ddh = np.asarray(sol.legendre_h(q, mu.points)[2], dtype=float)
    omega = t * tail
    diag = ddh + omega
    closed = float(np.mean(np.log(ddh))) + 0.5 * t * tail * tail
    pushed = SpectralMeasure.empirical(diag)

    membership = t * float(np.mean(ddh ** -2.0))
    residual = abs(omega + t * stieltjes(pushed, omega).real)
    rows = [
        CheckRow("second_order", membership, 0.0, 1.0, membership <= 1.0 + 1e-12),
        CheckRow("stieltjes_residual", residual, 0.0, 0.0, residual < 1e-8),
    ]
    try:
        free = log_potential(pushed, t, 0.0)
    except SubordinationError as exc:
        logger.warning("Free-convolution log-potential unavailable: %s", exc)
        free = math.nan
    rows.append(CheckRow("closed_vs_free", closed, 0.0, free, abs(closed - free) <= closed_tol))

    info: dict = {"q": q, "t": t, "omega": omega, "closed": closed, "free": free}
    if samples:
        est = goe_logdet(DeformedGOE(mu.n, t, diag, seed), samples)
        rows.append(CheckRow("goe_vs_free", est.mean, est.se, free,
                             abs(est.mean - free) <= goe_tol))
        frac = float(np.mean(est.min_abs_eigs > SPECTRUM_FLOOR))
        rows.append(CheckRow("spectrum_gap_fraction", frac, 0.0, 0.99, frac >= 0.99))
        info["resampled"] = est.resampled
    report = CheckReport("det_asymp", rows, info)
    if membership > 1.0:
        logger.warning("Second-order condition fails: ξ''(q)·mean(∂mm h⁻²)=%.4f > 1", membership)
    logger.info("Determinant check q=%.4f closed=%.8f free=%.8f", q, closed, free)
    return report
