"""Objective functions with growth metadata and a small benchmark catalog.

Every objective is vectorised over leading axes: ``obj(x)`` accepts an array
of shape ``(..., dim)`` and returns an array of shape ``(...)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ._random import stream

__all__ = [
    "GrowthMetadata",
    "Objective",
    "GrowthCheckReport",
    "check_growth",
    "quadratic",
    "rastrigin",
    "ackley",
    "benchmark_catalog",
    "make_objective",
    "OBJECTIVE_NAMES",
]


@dataclass(frozen=True)
class GrowthMetadata:
    """Constants of the local-Lipschitz and two-sided power growth bounds.

    ``|f(x) - f(y)| <= L_f (1 + |x| + |y|)^s |x - y|`` and
    ``c1 (|x|^ell - 1) <= f(x) - min f <= c2 (|x|^ell + 1)``.
    """

    L_f: float
    s: float
    c1: float
    c2: float
    ell: float

    def __post_init__(self):
        for name in ("L_f", "c1", "c2", "ell"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive, got {getattr(self, name)}")
        if not self.s >= 0:
            raise ValueError(f"s must be nonnegative, got {self.s}")


@dataclass(frozen=True)
class Objective:
    """A function ``R^d -> R`` plus what is known about its minimum."""

    name: str
    func: Callable[[np.ndarray], np.ndarray]
    dim: int
    known_minimizer: Optional[np.ndarray] = None
    known_min_value: Optional[float] = None
    growth: Optional[GrowthMetadata] = None
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if int(self.dim) < 1:
            raise ValueError(f"dim must be a positive integer, got {self.dim}")
        if self.known_minimizer is not None:
            xstar = np.asarray(self.known_minimizer, dtype=float)
            if xstar.shape != (self.dim,):
                raise ValueError("known_minimizer has the wrong shape")
            object.__setattr__(self, "known_minimizer", xstar)

    def __call__(self, x) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        if x.shape[-1] != self.dim:
            raise ValueError(f"expected trailing dimension {self.dim}, got shape {x.shape}")
        return self.func(x)

    evaluate = __call__


def _quadratic_growth(shift: np.ndarray) -> Optional[GrowthMetadata]:
    # the lower bound at x = shift forces |shift| < 1; no constants exist otherwise
    v2 = float(shift @ shift)
    if v2 >= 1.0:
        return None
    L_f = max(1.0, 2.0 * np.sqrt(v2))
    if v2 == 0.0:
        return GrowthMetadata(L_f=L_f, s=1.0, c1=1.0, c2=1.0, ell=2.0)
    return GrowthMetadata(L_f=L_f, s=1.0, c1=1.0 - v2, c2=2.0, ell=2.0)


def quadratic(dim: int = 2, shift=None) -> Objective:
    """Shifted quadratic ``f(x) = |x - v|^2``; minimum 0 at ``v``."""
    v = np.zeros(dim) if shift is None else np.asarray(shift, dtype=float)
    if v.shape != (dim,):
        raise ValueError(f"shift must have length {dim}")

    def f(x):
        return np.sum((x - v) ** 2, axis=-1)

    return Objective(
        name="quadratic",
        func=f,
        dim=dim,
        known_minimizer=v.copy(),
        known_min_value=0.0,
        growth=_quadratic_growth(v),
        params={"shift": v.tolist()},
    )


def rastrigin(dim: int = 2) -> Objective:
    """Rastrigin function, global minimum 0 at the origin."""

    def f(x):
        return 10.0 * dim + np.sum(x**2 - 10.0 * np.cos(2.0 * np.pi * x), axis=-1)

    # |grad f| <= 2|x| + 20 pi sqrt(d); f - min in [|x|^2, |x|^2 + 20 d]
    growth = GrowthMetadata(
        L_f=max(2.0, 20.0 * np.pi * np.sqrt(dim)), s=1.0, c1=1.0, c2=20.0 * dim, ell=2.0
    )
    return Objective(
        name="rastrigin",
        func=f,
        dim=dim,
        known_minimizer=np.zeros(dim),
        known_min_value=0.0,
        growth=growth,
    )


def ackley(dim: int = 2) -> Objective:
    """Ackley function, global minimum 0 at the origin.

    Ackley is bounded above, so no power lower bound holds on all of R^d and
    ``growth`` is left unset.
    """

    def f(x):
        r = np.sqrt(np.mean(x**2, axis=-1))
        c = np.mean(np.cos(2.0 * np.pi * x), axis=-1)
        return -20.0 * np.exp(-0.2 * r) - np.exp(c) + 20.0 + np.e

    return Objective(
        name="ackley",
        func=f,
        dim=dim,
        known_minimizer=np.zeros(dim),
        known_min_value=0.0,
        growth=None,
    )


_FACTORIES = {"quadratic": quadratic, "rastrigin": rastrigin, "ackley": ackley}
OBJECTIVE_NAMES = tuple(_FACTORIES)


def make_objective(name: str, dim: int, **params) -> Objective:
    """Build a catalog objective by name, e.g. ``make_objective("quadratic", 2, shift=[1, 1])``."""
    try:
        factory = _FACTORIES[name]
    except KeyError:
        raise ValueError(f"unknown objective {name!r}; choose from {sorted(_FACTORIES)}") from None
    return factory(dim, **params)


def benchmark_catalog(dim: int = 2, shift=None) -> list[Objective]:
    return [quadratic(dim, shift), rastrigin(dim), ackley(dim)]


@dataclass
class GrowthCheckReport:
    samples: int
    radius: float
    lipschitz_violations: int
    lower_violations: int
    upper_violations: int
    worst_lipschitz_ratio: float
    worst_lower_ratio: float
    worst_upper_ratio: float

    @property
    def passed(self) -> bool:
        return self.lipschitz_violations == 0 and self.lower_violations == 0 and self.upper_violations == 0

    def as_dict(self) -> dict:
        out = dict(self.__dict__)
        out["passed"] = self.passed
        return out


def _uniform_ball(rng, n, dim, radius):
    z = rng.standard_normal((n, dim))
    norms = np.linalg.norm(z, axis=1, keepdims=True)
    norms[norms == 0.0] = 1.0
    r = radius * rng.random((n, 1)) ** (1.0 / dim)
    return z / norms * r


def _ratio(lhs, rhs):
    # lhs <= rhs is the bound; ratio > 1 flags a violation
    out = np.zeros_like(lhs)
    pos = rhs > 0
    out[pos] = lhs[pos] / rhs[pos]
    out[~pos & (lhs > rhs)] = np.inf
    return out


def check_growth(obj: Objective, samples: int, radius: float, rng_seed: int = 0,
                 rtol: float = 1e-12) -> GrowthCheckReport:
    """Sample the growth bounds of ``obj`` on a ball and count violations.

    Only the ball of the given radius is probed; passing says nothing about
    the bounds outside it.
    """
    if obj.growth is None:
        raise ValueError(f"objective {obj.name!r} has no growth metadata")
    if obj.known_min_value is None:
        raise ValueError("check_growth needs known_min_value for the lower bound")
    if not radius > 0:
        raise ValueError("radius must be positive")
    g = obj.growth
    fmin = float(obj.known_min_value)
    samples = int(samples)
    if samples <= 0:
        return GrowthCheckReport(max(samples, 0), radius, 0, 0, 0, 0.0, 0.0, 0.0)

    rng = stream(rng_seed, 7)
    x = _uniform_ball(rng, samples, obj.dim, radius)
    y = _uniform_ball(rng, samples, obj.dim, radius)
    fx, fy = obj(x), obj(y)
    nx, ny = np.linalg.norm(x, axis=1), np.linalg.norm(y, axis=1)

    lip_lhs = np.abs(fx - fy)
    lip_rhs = g.L_f * (1.0 + nx + ny) ** g.s * np.linalg.norm(x - y, axis=1)
    gap = fx - fmin
    low_lhs = g.c1 * (nx**g.ell - 1.0)
    up_rhs = g.c2 * (nx**g.ell + 1.0)

    def violated(lhs, rhs):
        return lhs > rhs + rtol * (1.0 + np.abs(rhs))

    lip_r, low_r, up_r = _ratio(lip_lhs, lip_rhs), _ratio(low_lhs, gap), _ratio(gap, up_rhs)
    return GrowthCheckReport(
        samples=samples,
        radius=float(radius),
        lipschitz_violations=int(np.count_nonzero(violated(lip_lhs, lip_rhs))),
        lower_violations=int(np.count_nonzero(violated(low_lhs, gap))),
        upper_violations=int(np.count_nonzero(violated(gap, up_rhs))),
        worst_lipschitz_ratio=float(lip_r.max()),
        worst_lower_ratio=float(low_r.max()),
        worst_upper_ratio=float(up_r.max()),
    )
