"""Flows of probability measures on [0, 1] used to reweight past states.

Three families are provided: the Dirac mass at 1 (current state only), the
Lebesgue measure (plain occupation measure) and the sampled-with-delay
measure built from a sampling period ``tau`` and a delay ``theta``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Optional, Sequence

import numpy as np

__all__ = [
    "FlowKind",
    "WeightFlow",
    "AtomList",
    "atoms_at",
    "ClassReport",
    "class_diagnostic",
    "sampled_delay_count",
]


class FlowKind(str, Enum):
    DiracAtOne = "DiracAtOne"
    Lebesgue = "Lebesgue"
    SampledDelay = "SampledDelay"


@dataclass(frozen=True)
class WeightFlow:
    """A flow ``t -> pi_t`` of probability measures on [0, 1].

    ``resolution`` is the number of midpoint atoms used whenever a Lebesgue
    flow has to be represented explicitly.
    """

    kind: FlowKind = FlowKind.Lebesgue
    tau: Optional[float] = None
    theta: float = 0.0
    resolution: int = 10_000

    def __post_init__(self):
        object.__setattr__(self, "kind", FlowKind(self.kind))
        if self.kind is FlowKind.SampledDelay:
            if self.tau is None or not self.tau > 0:
                raise ValueError(f"SampledDelay needs tau > 0, got {self.tau}")
            if not self.theta >= 0:
                raise ValueError(f"SampledDelay needs theta >= 0, got {self.theta}")
        if int(self.resolution) < 1:
            raise ValueError("resolution must be >= 1")

    @classmethod
    def dirac(cls) -> "WeightFlow":
        return cls(FlowKind.DiracAtOne)

    @classmethod
    def lebesgue(cls, resolution: int = 10_000) -> "WeightFlow":
        return cls(FlowKind.Lebesgue, resolution=resolution)

    @classmethod
    def sampled_delay(cls, tau: float, theta: float) -> "WeightFlow":
        return cls(FlowKind.SampledDelay, tau=float(tau), theta=float(theta))

    def as_dict(self) -> dict:
        out = {"kind": self.kind.value}
        if self.kind is FlowKind.SampledDelay:
            out.update(tau=self.tau, theta=self.theta)
        if self.kind is FlowKind.Lebesgue:
            out["resolution"] = int(self.resolution)
        return out

    @classmethod
    def from_dict(cls, d: dict) -> "WeightFlow":
        d = dict(d)
        kind = FlowKind(d.pop("kind"))
        return cls(kind, **d)


@dataclass(frozen=True)
class AtomList:
    locations: np.ndarray
    masses: np.ndarray

    def __post_init__(self):
        loc = np.asarray(self.locations, dtype=float).reshape(-1)
        mass = np.asarray(self.masses, dtype=float).reshape(-1)
        if loc.shape != mass.shape or loc.size == 0:
            raise ValueError("locations and masses must be nonempty and of equal length")
        if np.any(mass < 0) or abs(mass.sum() - 1.0) > 1e-12:
            raise ValueError("masses must be nonnegative and sum to 1")
        if np.any(loc < 0) or np.any(loc > 1):
            raise ValueError("atom locations must lie in [0, 1]")
        object.__setattr__(self, "locations", loc)
        object.__setattr__(self, "masses", mass)

    def __len__(self):
        return self.locations.size


def sampled_delay_count(t: float, tau: float) -> int:
    """``ceil(t / tau)``, guarded against round-off just above an integer."""
    q = t / tau
    return max(1, math.ceil(q - 1e-9 * max(1.0, q)))


def atoms_at(flow: WeightFlow, t: float, lebesgue_resolution: Optional[int] = None) -> AtomList:
    """Discrete representation of ``pi_t``.

    Sampled-with-delay atoms sit at ``max((k tau - theta) / t, 0)`` for
    ``k = 0 .. n_t - 1`` with ``n_t = ceil(t / tau)``, each carrying ``1 / n_t``;
    atoms at bitwise-equal locations are merged.
    """
    if not t > 0:
        raise ValueError(f"t must be positive, got {t}")
    if flow.kind is FlowKind.DiracAtOne:
        return AtomList(np.ones(1), np.ones(1))
    if flow.kind is FlowKind.Lebesgue:
        res = int(flow.resolution if lebesgue_resolution is None else lebesgue_resolution)
        if res < 1:
            raise ValueError("lebesgue_resolution must be >= 1")
        loc = (np.arange(res) + 0.5) / res
        return AtomList(loc, np.full(res, 1.0 / res))

    n = sampled_delay_count(t, flow.tau)
    k = np.arange(n)
    loc = np.clip((k * flow.tau - flow.theta) / t, 0.0, 1.0)
    uniq, counts = np.unique(loc, return_counts=True)
    return AtomList(uniq, counts / n)


@dataclass
class ClassReport:
    eps: float
    times: np.ndarray
    moment: np.ndarray  # int s^-eps
    truncated: np.ndarray  # int t^eps ^ s^-eps
    pair: np.ndarray  # double integral of t^eps ^ |s1 - s2|^-eps
    a_over_b: float
    pi1_plausible: bool
    pi2_plausible: bool

    def as_dict(self) -> dict:
        return {
            "eps": self.eps,
            "times": self.times.tolist(),
            "moment": self.moment.tolist(),
            "truncated": self.truncated.tolist(),
            "pair": self.pair.tolist(),
            "a_over_b": self.a_over_b,
            "pi1_plausible": self.pi1_plausible,
            "pi2_plausible": self.pi2_plausible,
        }


def _kernel(gap, cap, eps):
    out = np.full(gap.shape, cap)
    pos = gap > 0
    out[pos] = np.minimum(cap, gap[pos] ** (-eps))
    return out


def _pair_integral(loc, mass, cap, eps):
    n = loc.size
    if n > 1:
        h = np.diff(loc)
        uniform = np.allclose(h, h[0], rtol=1e-9, atol=0) and np.allclose(mass, mass[0], rtol=1e-12, atol=0)
    else:
        uniform = True
    if uniform:
        # Toeplitz structure: gap k*h appears 2(n - k) times off the diagonal
        h0 = loc[1] - loc[0] if n > 1 else 0.0
        k = np.arange(1, n)
        total = n * cap + 2.0 * np.sum((n - k) * _kernel(k * h0, cap, eps))
        return float(total * mass[0] ** 2)
    total = 0.0
    for start in range(0, n, 2048):
        block = loc[start:start + 2048, None]
        w = mass[start:start + 2048, None] * mass[None, :]
        total += float(np.sum(w * _kernel(np.abs(block - loc[None, :]), cap, eps)))
    return total


def class_diagnostic(flow: WeightFlow, eps: float, frak_a: float, frak_b: float,
                     t_grid: Sequence[float], lebesgue_resolution: Optional[int] = None) -> ClassReport:
    """Trajectories of the integrals that define the two weight classes.

    The flags are heuristics over a finite horizon. The first class is
    flagged when the last-quarter maximum of ``int s^-eps`` stays below
    ``a / b``; the second when the last-quarter maxima of the two truncated
    integrals stay within twice their median over the grid. An atom at 0
    (or a coincident pair) is charged ``t^eps``.
    """
    if not (0 < eps <= 1):
        raise ValueError(f"eps must lie in (0, 1], got {eps}")
    times = np.asarray(t_grid, dtype=float)
    if times.size == 0 or np.any(times <= 0) or np.any(np.diff(times) <= 0):
        raise ValueError("t_grid must be a nonempty increasing list of positive times")

    q1, q2, q3 = [], [], []
    for t in times:
        atoms = atoms_at(flow, t, lebesgue_resolution)
        cap = t**eps
        s, m = atoms.locations, atoms.masses
        raw = np.full(s.shape, cap)
        raw[s > 0] = s[s > 0] ** (-eps)
        q1.append(float(m @ raw))
        q2.append(float(m @ _kernel(s, cap, eps)))
        q3.append(_pair_integral(s, m, cap, eps))
    q1, q2, q3 = map(np.asarray, (q1, q2, q3))

    tail = slice(int(0.75 * len(times)), None) if len(times) > 1 else slice(None)
    a_over_b = math.inf if frak_b == 0 else frak_a / frak_b
    pi1 = bool(frak_b == 0 or q1[tail].max() < a_over_b)
    pi2 = bool(q2[tail].max() <= 2 * np.median(q2) and q3[tail].max() <= 2 * np.median(q3))
    return ClassReport(float(eps), times, q1, q2, q3, float(a_over_b), pi1, pi2)
