"""Finitely-atomic probability measures on [0,1].

Order parameters ζ are stored as sorted atoms with weights. Locations closer
than MERGE_TOL are merged and weights below WEIGHT_FLOOR are dropped (with the
remaining mass renormalized), so plateaus of the Parisi layer decomposition
never have zero length.
"""

import json
import logging
from collections.abc import Callable, Iterable, Sequence
from dataclasses import dataclass, field

import numpy as np
from numpy.typing import ArrayLike

from taplab.exceptions import DomainError, MeasureError

logger = logging.getLogger(__name__)

MERGE_TOL = 1e-12
WEIGHT_FLOOR = 1e-14
MASS_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class AtomicMeasure:
    """Probability measure Σ w_i δ_{t_i} on [0,1]."""

    locations: np.ndarray
    weights: np.ndarray

    def __post_init__(self) -> None:
        locs = np.atleast_1d(np.asarray(self.locations, dtype=float))
        w = np.atleast_1d(np.asarray(self.weights, dtype=float))
        if locs.shape != w.shape or locs.ndim != 1 or locs.size == 0:
            raise MeasureError("locations and weights must be non-empty 1-d arrays of equal size")
        if np.any(locs < -MERGE_TOL) or np.any(locs > 1 + MERGE_TOL):
            raise MeasureError("atom locations must lie in [0, 1]")
        if np.any(w < 0) or not np.all(np.isfinite(w)):
            raise MeasureError("weights must be finite and nonnegative")
        if abs(w.sum() - 1.0) > MASS_TOL:
            raise MeasureError(f"weights sum to {w.sum():.12g}, expected 1")

        order = np.argsort(locs, kind="stable")
        locs, w = np.clip(locs[order], 0.0, 1.0), w[order]

        merged_l: list[float] = []
        merged_w: list[float] = []
        for t, wi in zip(locs, w, strict=True):
            if merged_l and t - merged_l[-1] < MERGE_TOL:
                merged_w[-1] += wi
            else:
                merged_l.append(float(t))
                merged_w.append(float(wi))
        locs, w = np.array(merged_l), np.array(merged_w)
        keep = w >= WEIGHT_FLOOR
        if not np.any(keep):
            raise MeasureError("all weights are below the floor")
        locs, w = locs[keep], w[keep] / w[keep].sum()

        locs.setflags(write=False)
        w.setflags(write=False)
        object.__setattr__(self, "locations", locs)
        object.__setattr__(self, "weights", w)

    # ─── Constructors ──────────────────────────────────────

    @classmethod
    def delta(cls, t: float) -> "AtomicMeasure":
        return cls(np.array([t]), np.array([1.0]))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "AtomicMeasure":
        arr = np.asarray(list(pairs), dtype=float).reshape(-1, 2)
        return cls(arr[:, 0], arr[:, 1])

    def to_pairs(self) -> list[list[float]]:
        return [[float(t), float(w)] for t, w in zip(self.locations, self.weights, strict=True)]

    def mixture(self, other: "AtomicMeasure", weight: float) -> "AtomicMeasure":
        """(1 − weight)·self + weight·other."""
        if not 0.0 <= weight <= 1.0:
            raise DomainError(f"mixture weight {weight} not in [0,1]")
        return AtomicMeasure(
            np.concatenate([self.locations, other.locations]),
            np.concatenate([(1 - weight) * self.weights, weight * other.weights]),
        )

    # ─── Queries ───────────────────────────────────────────

    @property
    def size(self) -> int:
        return int(self.locations.size)

    @property
    def support_min(self) -> float:
        return float(self.locations[0])

    @property
    def support_max(self) -> float:
        return float(self.locations[-1])

    def cdf(self, t: ArrayLike) -> np.ndarray | float:
        """ζ([0,t]), right-continuous."""
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        idx = np.searchsorted(self.locations, np.asarray(t, dtype=float), side="right")
        out = np.minimum(cum[idx], 1.0)
        return float(out) if np.ndim(out) == 0 else out

    def cdf_left(self, t: ArrayLike) -> np.ndarray | float:
        """ζ([0,t))."""
        cum = np.concatenate([[0.0], np.cumsum(self.weights)])
        idx = np.searchsorted(self.locations, np.asarray(t, dtype=float), side="left")
        out = np.minimum(cum[idx], 1.0)
        return float(out) if np.ndim(out) == 0 else out

    def mass_at(self, t: float) -> float:
        hit = np.abs(self.locations - t) < MERGE_TOL
        return float(self.weights[hit].sum())

    def atoms_in(self, a: float, b: float, closed_right: bool = True) -> list[tuple[float, float]]:
        """Atoms with a ≤ t ≤ b (or t < b)."""
        hi = self.locations <= b if closed_right else self.locations < b
        sel = (self.locations >= a) & hi
        return list(zip(self.locations[sel].tolist(), self.weights[sel].tolist(), strict=True))

    def breakpoints(self, a: float = 0.0, b: float = 1.0) -> np.ndarray:
        """Sorted {a, b} ∪ atoms strictly inside (a, b)."""
        inner = self.locations[(self.locations > a) & (self.locations < b)]
        return np.concatenate([[a], inner, [b]])

    def cdf_integral(
        self,
        a: float,
        b: float,
        primitive: Callable[[float], float] | None = None,
    ) -> float:
        """∫_a^b g(t) ζ([0,t]) dt with g = primitive', exact per plateau.

        Without a primitive this is ∫_a^b ζ([0,t]) dt.
        """
        if b <= a:
            return 0.0
        prim = primitive if primitive is not None else (lambda t: t)
        pts = self.breakpoints(a, b)
        total = 0.0
        for lo, hi in zip(pts[:-1], pts[1:], strict=True):
            total += float(self.cdf(lo)) * (prim(float(hi)) - prim(float(lo)))
        return total

    def plateaus(self, extra: Iterable[float] = ()) -> list[tuple[float, float, float]]:
        """(a, b, ζ([0,a])) for consecutive layer boundaries on [0,1]."""
        times = layer_times(self, extra)
        return [(float(a), float(b), float(self.cdf(a))) for a, b in zip(times[:-1], times[1:],
                                                                           strict=True)]

    def allclose(self, other: "AtomicMeasure", tol: float = 1e-12) -> bool:
        return (
            self.size == other.size
            and np.allclose(self.locations, other.locations, atol=tol, rtol=0)
            and np.allclose(self.weights, other.weights, atol=tol, rtol=0)
        )

    def __repr__(self) -> str:
        atoms = ", ".join(f"({t:.6g}, {w:.6g})" for t, w in self.to_pairs())
        return f"AtomicMeasure([{atoms}])"


def layer_times(z: AtomicMeasure, extra: Iterable[float] = ()) -> np.ndarray:
    """Plateau boundaries: {0, 1} ∪ atoms ∪ extra split points, merged at MERGE_TOL."""
    raw = np.sort(np.concatenate([[0.0, 1.0], z.locations, np.asarray(list(extra), dtype=float)]))
    if np.any(raw < 0) or np.any(raw > 1):
        raise DomainError("split points must lie in [0,1]")
    out = [raw[0]]
    for t in raw[1:]:
        if t - out[-1] >= MERGE_TOL:
            out.append(t)
    return np.array(out)


def dist(a: AtomicMeasure, b: AtomicMeasure) -> float:
    """∫_0^1 |ζ_a([0,t]) − ζ_b([0,t])| dt, exact over the merged breakpoints."""
    pts = np.unique(np.concatenate([[0.0, 1.0], a.locations, b.locations]))
    left = pts[:-1]
    gaps = np.abs(np.asarray(a.cdf(left)) - np.asarray(b.cdf(left)))
    return float(np.sum(gaps * np.diff(pts)))


def project_at(z: AtomicMeasure, q: float) -> AtomicMeasure:
    """ζ|_(q,1] + ζ([0,q]) δ_q."""
    if not 0.0 <= q <= 1.0:
        raise DomainError(f"projection point {q} not in [0,1]")
    above = z.locations > q + MERGE_TOL
    locs = np.concatenate([[q], z.locations[above]])
    w = np.concatenate([[float(z.cdf(q + MERGE_TOL))], z.weights[above]])
    return AtomicMeasure(locs, w)


# ─── Prefix measures ──────────────────────────────────────


@dataclass(frozen=True, eq=False)
class PrefixSpec:
    """(n+1)-atom prefix: atoms 0 < q_1 < … < q_n with ζ([0,q_{i−1}]) = u_i, plus a tail.

    ``tail`` is a probability measure on [q_n, 1]; it is scaled by 1 − u_n in
    the assembled measure and must carry an atom at q_n.
    """

    u: tuple[float, ...]
    q: tuple[float, ...]
    tail: AtomicMeasure = field(default=None)  # type: ignore[assignment]

    def __post_init__(self) -> None:
        u = tuple(float(x) for x in self.u)
        q = tuple(float(x) for x in self.q)
        if len(u) != len(q) or not u:
            raise MeasureError("u and q must be non-empty and of equal length")
        if any(not 0.0 < x < 1.0 for x in u) or any(b <= a for a, b in zip(u, u[1:])):
            raise MeasureError(f"u must be strictly increasing in (0,1), got {u}")
        if any(not 0.0 < x < 1.0 for x in q) or any(b <= a for a, b in zip(q, q[1:])):
            raise MeasureError(f"q must be strictly increasing in (0,1), got {q}")
        tail = self.tail if self.tail is not None else AtomicMeasure.delta(q[-1])
        if tail.support_min < q[-1] - MERGE_TOL:
            raise MeasureError(f"tail has mass below q_n={q[-1]}")
        if tail.mass_at(q[-1]) <= 0.0:
            raise MeasureError(f"tail must carry an atom at q_n={q[-1]}")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "q", q)
        object.__setattr__(self, "tail", tail)

    @property
    def n(self) -> int:
        return len(self.q)

    def assemble(self) -> AtomicMeasure:
        return assemble_prefix(self)

    def deltas(self) -> np.ndarray:
        """Δ_k = −ζ({q_k}) for k < n and Δ_n = ζ([0,q_n)) = u_n."""
        u = np.asarray(self.u)
        out = np.empty(self.n)
        out[:-1] = -(u[1:] - u[:-1])
        out[-1] = u[-1]
        return out

    @classmethod
    def from_measure(cls, z: AtomicMeasure, n: int) -> "PrefixSpec":
        """Read the first n+1 atoms of z as a prefix, the rest as its tail."""
        if z.size < n + 1 or z.support_min > MERGE_TOL:
            raise MeasureError(f"measure has no {n}-prefix starting at 0")
        cum = np.cumsum(z.weights)
        u = tuple(cum[:n].tolist())
        q = tuple(z.locations[1:n + 1].tolist())
        tail_w = z.weights[n:] / z.weights[n:].sum()
        return cls(u, q, AtomicMeasure(z.locations[n:], tail_w))

    def to_dict(self) -> dict:
        return {"u": list(self.u), "q": list(self.q), "tail": self.tail.to_pairs()}

    @classmethod
    def from_dict(cls, data: dict) -> "PrefixSpec":
        tail = data.get("tail")
        return cls(tuple(data["u"]), tuple(data["q"]),
                   AtomicMeasure.from_pairs(tail) if tail else None)  # type: ignore[arg-type]

    def serialize(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))


def assemble_prefix(spec: PrefixSpec) -> AtomicMeasure:
    u = np.asarray(spec.u)
    locs = np.concatenate([[0.0], np.asarray(spec.q[:-1]), spec.tail.locations])
    w = np.concatenate([[u[0]], np.diff(u), (1.0 - u[-1]) * spec.tail.weights])
    if np.any(w < 0) or abs(w.sum() - 1.0) > MASS_TOL:
        raise MeasureError("prefix weight bookkeeping is infeasible")
    return AtomicMeasure(locs, w)


# ─── Empirical magnetization laws ─────────────────────────


@dataclass(frozen=True, eq=False)
class EmpiricalMu:
    """Empirical law (1/N) Σ δ_{m_i} of a magnetization vector."""

    points: np.ndarray

    def __post_init__(self) -> None:
        pts = np.atleast_1d(np.asarray(self.points, dtype=float))
        if pts.ndim != 1 or pts.size == 0:
            raise DomainError("magnetization vector must be a non-empty 1-d array")
        if np.any(np.abs(pts) >= 1.0):
            raise DomainError("magnetizations must satisfy |m_i| < 1")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self) -> int:
        return int(self.points.size)

    @property
    def q(self) -> float:
        return float(np.mean(self.points ** 2))

    def with_point(self, i: int, value: float) -> "EmpiricalMu":
        pts = self.points.copy()
        pts[i] = value
        return EmpiricalMu(pts)
