"""Mixed p-spin covariance structure.

The structure function ξ(t) = Σ_p β_p² t^p fixes the covariance of the
Hamiltonian, E[H(m)H(m')] = N·ξ(⟨m,m'⟩/N). Every other module reads ξ and
its derivatives from here, so all evaluations are exact polynomial
arithmetic:

1. Coefficients are stored as sorted (p, β_p²) pairs with even p ≥ 2
2. Derivatives use falling factorials p!/(p-k)!, never finite differences
3. The discriminant D(q) is available in both its defining and pairwise form
"""

import logging
import math
from collections.abc import Iterable
from dataclasses import dataclass

import numpy as np
from numpy.typing import ArrayLike

from taplab.exceptions import DomainError

logger = logging.getLogger(__name__)

MAX_ORDER = 4


@dataclass(frozen=True)
class Mixture:
    """Covariance structure ξ(t) = Σ β_p² t^p over even degrees p ≥ 2."""

    coeffs: tuple[tuple[int, float], ...]

    def __post_init__(self) -> None:
        merged: dict[int, float] = {}
        for p, beta2 in self.coeffs:
            if int(p) != p or p < 2 or p % 2 != 0:
                raise DomainError(f"Degree p={p} rejected: only even p >= 2 are allowed")
            if beta2 < 0 or not math.isfinite(beta2):
                raise DomainError(f"Coefficient beta_{p}^2={beta2} must be finite and >= 0")
            merged[int(p)] = merged.get(int(p), 0.0) + float(beta2)
        if not any(v > 0 for v in merged.values()):
            raise DomainError("Mixture needs at least one positive coefficient")
        object.__setattr__(self, "coeffs", tuple(sorted(merged.items())))

    # ─── Constructors ──────────────────────────────────────

    @classmethod
    def from_pairs(cls, pairs: Iterable[Iterable[float]]) -> "Mixture":
        return cls(tuple((int(p), float(b)) for p, b in pairs))

    @classmethod
    def sk(cls, beta: float) -> "Mixture":
        """Sherrington–Kirkpatrick model, ξ(t) = β² t²."""
        return cls(((2, beta * beta),))

    @classmethod
    def pure(cls, p: int, beta2: float = 1.0) -> "Mixture":
        return cls(((p, beta2),))

    def to_pairs(self) -> list[list[float]]:
        return [[p, b] for p, b in self.coeffs]

    # ─── Evaluation ────────────────────────────────────────

    @property
    def degrees(self) -> tuple[int, ...]:
        return tuple(p for p, _ in self.coeffs)

    @property
    def max_degree(self) -> int:
        return max(self.degrees)

    def xi(self, t: ArrayLike, order: int = 0) -> np.ndarray | float:
        """d^order ξ / dt^order at t, exact from the coefficients."""
        if order not in range(MAX_ORDER + 1):
            raise DomainError(f"Derivative order {order} not in 0..{MAX_ORDER}")
        arr = np.asarray(t, dtype=float)
        if np.any(np.abs(arr) > 1.0 + 1e-15):
            raise DomainError("xi is defined on [-1, 1]")
        out = np.zeros_like(arr)
        for p, beta2 in self.coeffs:
            if beta2 == 0.0 or p < order:
                continue
            out = out + beta2 * math.perm(p, order) * arr ** (p - order)
        return float(out) if out.ndim == 0 else out

    def __call__(self, t: ArrayLike) -> np.ndarray | float:
        return self.xi(t, 0)

    def d1(self, t: ArrayLike) -> np.ndarray | float:
        return self.xi(t, 1)

    def d2(self, t: ArrayLike) -> np.ndarray | float:
        return self.xi(t, 2)

    def int_t_xi2(self, a: float, b: float) -> float:
        """∫_a^b t ξ''(t) dt, via the antiderivative tξ'(t) − ξ(t)."""
        def prim(t: float) -> float:
            return float(t * self.xi(t, 1) - self.xi(t, 0))
        return prim(b) - prim(a)

    # ─── Structure ─────────────────────────────────────────

    def discriminant(self, q: ArrayLike) -> np.ndarray | float:
        """D(q) = ξ(q)(ξ'(q) + qξ''(q)) − qξ'(q)²."""
        q = np.asarray(q, dtype=float)
        x0, x1, x2 = self.xi(q, 0), self.xi(q, 1), self.xi(q, 2)
        return x0 * (x1 + q * x2) - q * x1 * x1

    def discriminant_pairwise(self, q: ArrayLike) -> np.ndarray | float:
        """½ Σ_{a,b} β_a² β_b² (a−b)² q^{a+b−1}, the same D(q) written as a sum of squares."""
        q = np.asarray(q, dtype=float)
        total = np.zeros_like(q)
        for a, ba in self.coeffs:
            for b, bb in self.coeffs:
                if a != b:
                    total = total + 0.5 * ba * bb * (a - b) ** 2 * q ** (a + b - 1)
        return float(total) if total.ndim == 0 else total

    @property
    def active(self) -> tuple[tuple[int, float], ...]:
        return tuple((p, b) for p, b in self.coeffs if b > 0)

    def is_pure(self) -> bool:
        return len(self.active) == 1

    @property
    def pure_degree(self) -> int | None:
        return self.active[0][0] if self.is_pure() else None

    def __str__(self) -> str:
        return " + ".join(f"{b:g}·t^{p}" for p, b in self.active)


def xi_eval(m: Mixture, t: ArrayLike, order: int = 0) -> np.ndarray | float:
    return m.xi(t, order)


def mix_discriminant(m: Mixture, q: float) -> float:
    if not 0.0 < q < 1.0:
        raise DomainError(f"Discriminant is evaluated on (0,1), got q={q}")
    return float(m.discriminant(q))


def is_pure(m: Mixture) -> tuple[bool, int | None]:
    """Whether exactly one coefficient is positive, and its degree."""
    return m.is_pure(), m.pure_degree
