"""Gibbs-weighted consensus points of empirical measures and trajectories."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .weights import AtomList

__all__ = [
    "WeightedEmpiricalMeasure",
    "NoMassError",
    "SnapshotMissError",
    "consensus_point",
    "weighted_consensus",
    "ConsensusAccumulator",
    "merge_accumulators",
    "nearest_index",
    "consensus_over_flow",
]


class NoMassError(ValueError):
    """Raised when a consensus is requested from a measure with zero total mass."""


class SnapshotMissError(LookupError):
    """Raised when a flow atom has no stored state close enough to it."""


@dataclass(frozen=True)
class WeightedEmpiricalMeasure:
    """Finitely many atoms in R^d with nonnegative masses summing to one."""

    points: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        mass = np.asarray(self.masses, dtype=float).reshape(-1)
        if pts.ndim != 2 or pts.shape[0] == 0 or pts.shape[0] != mass.size:
            raise ValueError("points must be (n, d) with n >= 1 matching masses")
        if not np.all(np.isfinite(pts)):
            raise ValueError("points must be finite")
        if np.any(mass < 0) or abs(mass.sum() - 1.0) > 1e-12:
            raise ValueError("masses must be nonnegative and sum to 1")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "masses", mass)

    @classmethod
    def uniform(cls, points) -> "WeightedEmpiricalMeasure":
        pts = np.asarray(points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        n = pts.shape[0]
        return cls(pts, np.full(n, 1.0 / n))

    @classmethod
    def dirac(cls, x) -> "WeightedEmpiricalMeasure":
        return cls(np.atleast_2d(np.asarray(x, dtype=float)), np.ones(1))

    def __len__(self):
        return self.points.shape[0]

    @property
    def dim(self) -> int:
        return self.points.shape[1]

    def mean(self) -> np.ndarray:
        return self.masses @ self.points

    def second_moment(self) -> float:
        return float(self.masses @ np.sum(self.points**2, axis=1))

    def is_uniform(self) -> bool:
        return bool(np.all(self.masses == self.masses[0]))

    def merged(self) -> "WeightedEmpiricalMeasure":
        """Merge atoms at bitwise-identical points, summing their masses."""
        uniq, inv = np.unique(self.points, axis=0, return_inverse=True)
        if uniq.shape[0] == self.points.shape[0]:
            return self
        mass = np.bincount(inv.reshape(-1), weights=self.masses, minlength=uniq.shape[0])
        return WeightedEmpiricalMeasure(uniq, mass / mass.sum())

    def thinned(self, max_atoms: int) -> "WeightedEmpiricalMeasure":
        """Evenly spaced sub-selection of at most ``max_atoms`` atoms (uniform measures only)."""
        n = len(self)
        if n <= max_atoms:
            return self
        if not self.is_uniform():
            raise ValueError("thinning is only defined for uniform measures")
        idx = np.floor((np.arange(max_atoms) + 0.5) * n / max_atoms).astype(int)
        return WeightedEmpiricalMeasure.uniform(self.points[idx])


def weighted_consensus(points, masses, f_values, alpha: float) -> np.ndarray:
    """Array-level consensus: ``sum w_i x_i e^{-a f_i} / sum w_i e^{-a f_i}``.

    Exponents are shifted by their maximum, and the result is written as the
    heaviest atom plus a weighted mean of offsets from it; a measure whose
    atoms all coincide therefore returns that point bit for bit.
    """
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    w0 = np.asarray(masses, dtype=float).reshape(-1)
    f = np.asarray(f_values, dtype=float).reshape(-1)
    if pts.shape[0] == 0:
        raise NoMassError("empty measure")
    if not (pts.shape[0] == w0.size == f.size):
        raise ValueError("points, masses and f_values must have the same length")
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    keep = w0 > 0
    if not np.any(keep):
        raise NoMassError("all masses are zero")
    if not np.all(np.isfinite(f[keep])):
        raise ValueError("f_values must be finite")
    pts, w0, f = pts[keep], w0[keep], f[keep]
    logw = np.log(w0) - alpha * f
    top = int(np.argmax(logw))
    w = np.exp(logw - logw[top])
    p = w / w.sum()
    ref = pts[top]
    return ref + p @ (pts - ref)


def consensus_point(mu: WeightedEmpiricalMeasure, f_values, alpha: float) -> np.ndarray:
    """Consensus point of ``mu`` given ``f`` evaluated at its atoms."""
    return weighted_consensus(mu.points, mu.masses, f_values, alpha)


class ConsensusAccumulator:
    """Streaming consensus over a growing weighted set of states.

    Holds ``scaled_num = sum w_i x_i exp(-a f_i - M)`` and
    ``scaled_den = sum w_i exp(-a f_i - M)`` where ``M`` is the largest
    ``-a f_i`` inserted so far with positive weight.
    """

    __slots__ = ("alpha", "dim", "max_exponent", "scaled_num", "scaled_den", "total_weight")

    def __init__(self, alpha: float, dim: int):
        if not alpha > 0:
            raise ValueError(f"alpha must be positive, got {alpha}")
        self.alpha = float(alpha)
        self.dim = int(dim)
        self.max_exponent = -math.inf
        self.scaled_num = np.zeros(self.dim)
        self.scaled_den = 0.0
        self.total_weight = 0.0

    def insert(self, x, f_x: float, weight: float) -> "ConsensusAccumulator":
        x = np.asarray(x, dtype=float).reshape(self.dim)
        f_x = float(f_x)
        if not (np.all(np.isfinite(x)) and math.isfinite(f_x)):
            raise ValueError("inserted state and value must be finite")
        if weight < 0:
            raise ValueError("weight must be nonnegative")
        if weight == 0:
            return self
        e = -self.alpha * f_x
        if e > self.max_exponent:
            if self.scaled_den > 0:
                scale = math.exp(self.max_exponent - e)
                self.scaled_num = self.scaled_num * scale
                self.scaled_den *= scale
            self.max_exponent = e
        g = weight * math.exp(e - self.max_exponent)
        self.scaled_num = self.scaled_num + g * x
        self.scaled_den += g
        self.total_weight += weight
        return self

    def read(self) -> np.ndarray:
        if not self.scaled_den > 0:
            raise NoMassError("accumulator holds no mass")
        return self.scaled_num / self.scaled_den

    def copy(self) -> "ConsensusAccumulator":
        out = ConsensusAccumulator(self.alpha, self.dim)
        out.max_exponent = self.max_exponent
        out.scaled_num = self.scaled_num.copy()
        out.scaled_den = self.scaled_den
        out.total_weight = self.total_weight
        return out


def merge_accumulators(accs: Sequence[ConsensusAccumulator],
                       masses: Optional[Sequence[float]] = None) -> ConsensusAccumulator:
    """Combine accumulators as the mixture ``sum_j mass_j * (their normalised measures)``.

    Equal masses (the default) with equal total weights reduce to summing the
    re-based numerators and denominators.
    """
    live = [(j, a) for j, a in enumerate(accs) if a.scaled_den > 0]
    if not live:
        raise NoMassError("no accumulator holds mass")
    alpha, dim = accs[0].alpha, accs[0].dim
    if any(a.alpha != alpha or a.dim != dim for a in accs):
        raise ValueError("accumulators disagree on alpha or dim")
    mass = np.ones(len(accs)) if masses is None else np.asarray(masses, dtype=float)
    top = max(a.max_exponent for _, a in live)
    j0, a0 = live[0]
    ref = mass[j0] / a0.total_weight
    out = ConsensusAccumulator(alpha, dim)
    out.max_exponent = top
    num = np.zeros(dim)
    den = 0.0
    tw = 0.0
    for j, a in live:
        rel = (mass[j] / a.total_weight) / ref
        scale = math.exp(a.max_exponent - top) * rel
        num = num + a.scaled_num * scale
        den += a.scaled_den * scale
        tw += a.total_weight * rel
    out.scaled_num, out.scaled_den, out.total_weight = num, den, tw
    return out


def nearest_index(grid, targets) -> np.ndarray:
    """Index of the nearest grid value to each target; ties go to the earlier one."""
    grid = np.asarray(grid, dtype=float)
    targets = np.asarray(targets, dtype=float)
    hi = np.clip(np.searchsorted(grid, targets, side="left"), 1, max(len(grid) - 1, 1))
    if len(grid) == 1:
        return np.zeros(targets.shape, dtype=int)
    lo = hi - 1
    take_lo = (targets - grid[lo]) <= (grid[hi] - targets)
    return np.where(take_lo, lo, hi)


def consensus_over_flow(snapshot_s, states, f_values, flow_atoms: AtomList, alpha: float,
                        tolerance: Optional[float] = None) -> np.ndarray:
    """Consensus of ``int delta_{Y_{st}} pi_t(ds)`` from stored snapshots.

    Parameters
    ----------
    snapshot_s : array, shape (n,)
        Increasing time fractions ``s = r / t`` at which states were stored.
    states : array, shape (n, d) or (n, N, d)
        Stored states; with a particle axis each atom's mass is split evenly
        over the ``N`` particles.
    f_values : array, shape (n,) or (n, N)
        Objective values of ``states``.
    flow_atoms : AtomList
        Representation of ``pi_t``.
    tolerance : float, optional
        Largest allowed distance between an atom and its snapshot.
    """
    grid = np.asarray(snapshot_s, dtype=float)
    if grid.size == 0:
        raise SnapshotMissError("no snapshots stored")
    idx = nearest_index(grid, flow_atoms.locations)
    if tolerance is not None:
        miss = np.abs(grid[idx] - flow_atoms.locations) > tolerance
        if np.any(miss):
            raise SnapshotMissError(f"no snapshot near s={flow_atoms.locations[miss][0]}")
    mass = np.bincount(idx, weights=flow_atoms.masses, minlength=grid.size)
    used = np.nonzero(mass)[0]
    x = np.asarray(states, dtype=float)[used]
    f = np.asarray(f_values, dtype=float)[used]
    w = mass[used]
    if x.ndim == 3:
        n_part = x.shape[1]
        w = np.repeat(w / n_part, n_part)
        x = x.reshape(-1, x.shape[-1])
        f = f.reshape(-1)
    return weighted_consensus(x, w, f, alpha)
