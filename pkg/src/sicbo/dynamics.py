"""Euler-Maruyama integrators for the CBO family.

Every variant shares one time loop. They differ only in the consensus point
fed to the step:

* ``StandardCBO_N`` / ``RescaledCBO_N``: consensus of the current particle
  cloud.
* ``SelfInteracting`` / ``MultiSelfInteracting`` with the Lebesgue flow: the
  occupation measure of the past, accumulated in streaming form with weight
  ``dt`` per step (left-endpoint rectangles).
* ``SelfInteractingWeighted`` / ``MeanFieldWeighted_N`` and multi runs with
  other flows: ``int delta_{Y_{st}} pi_t(ds)`` read from stored snapshots.
* ``MarkovianReference``: a frozen consensus ``m_star``.

At ``t = 0`` the occupation-type variants use the consensus of the initial
states (for one particle, the initial point itself).
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Optional, Sequence

import numpy as np

from ._random import INIT, NoiseStream, stream
from .consensus import ConsensusAccumulator, merge_accumulators, nearest_index, weighted_consensus
from .objective import Objective
from .weights import FlowKind, WeightFlow, atoms_at

__all__ = [
    "Variant",
    "InitSpec",
    "SimulationConfig",
    "ConfigError",
    "BlowUpError",
    "Trajectory",
    "anisotropic_diffusion",
    "step_rescaled",
    "step_standard",
    "run_particle_system",
    "run_self_interacting",
    "run_multi_self_interacting",
    "run_markovian_reference",
    "simulate",
    "MAX_SNAPSHOTS",
]

MAX_SNAPSHOTS = 100_000


class Variant(str, Enum):
    StandardCBO_N = "StandardCBO_N"
    RescaledCBO_N = "RescaledCBO_N"
    SelfInteracting = "SelfInteracting"
    SelfInteractingWeighted = "SelfInteractingWeighted"
    MeanFieldWeighted_N = "MeanFieldWeighted_N"
    MarkovianReference = "MarkovianReference"
    MultiSelfInteracting = "MultiSelfInteracting"


PARTICLE_VARIANTS = (Variant.StandardCBO_N, Variant.RescaledCBO_N, Variant.MeanFieldWeighted_N)
SINGLE_VARIANTS = (Variant.SelfInteracting, Variant.SelfInteractingWeighted)


class ConfigError(ValueError):
    def __init__(self, problems: Sequence[str]):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class BlowUpError(RuntimeError):
    """A state became non-finite; ``step`` is the index of the offending step."""

    def __init__(self, step: int, time: float, trajectory: Optional["Trajectory"] = None):
        self.step = step
        self.time = time
        self.trajectory = trajectory
        super().__init__(f"non-finite state at step {step} (t={time:g})")


@dataclass(frozen=True)
class InitSpec:
    """Initial condition: a point, an explicit cloud, or a seeded random cloud."""

    kind: str = "point"
    point: Optional[tuple] = None
    points: Optional[tuple] = None
    low: float = -1.0
    high: float = 1.0
    mean: Optional[tuple] = None
    std: float = 1.0

    def __post_init__(self):
        if self.kind not in ("point", "cloud", "uniform", "normal"):
            raise ValueError(f"unknown init kind {self.kind!r}")
        if self.point is not None:
            object.__setattr__(self, "point", tuple(float(v) for v in self.point))
        if self.points is not None:
            object.__setattr__(self, "points", tuple(tuple(float(v) for v in p) for p in self.points))
        if self.mean is not None:
            object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))

    @classmethod
    def at(cls, x) -> "InitSpec":
        return cls("point", point=tuple(np.asarray(x, dtype=float).ravel()))

    @classmethod
    def cloud(cls, pts) -> "InitSpec":
        return cls("cloud", points=tuple(map(tuple, np.asarray(pts, dtype=float))))

    def resolve(self, n: int, dim: int, seed: int) -> np.ndarray:
        if self.kind == "point":
            x = np.zeros(dim) if self.point is None else np.asarray(self.point)
            if x.shape != (dim,):
                raise ValueError(f"initial point must have length {dim}")
            return np.tile(x, (n, 1))
        if self.kind == "cloud":
            x = np.asarray(self.points, dtype=float)
            if x.shape != (n, dim):
                raise ValueError(f"initial cloud must have shape ({n}, {dim}), got {x.shape}")
            return x.copy()
        rng = stream(seed, INIT)
        if self.kind == "uniform":
            return rng.uniform(self.low, self.high, size=(n, dim))
        mean = np.zeros(dim) if self.mean is None else np.asarray(self.mean)
        return mean + self.std * rng.standard_normal((n, dim))

    def as_dict(self) -> dict:
        if self.kind == "point":
            return {"kind": "point", "point": list(self.point) if self.point else None}
        if self.kind == "cloud":
            return {"kind": "cloud", "points": [list(p) for p in self.points]}
        if self.kind == "uniform":
            return {"kind": "uniform", "low": self.low, "high": self.high}
        return {"kind": "normal", "mean": list(self.mean) if self.mean else None, "std": self.std}

    @classmethod
    def from_dict(cls, d) -> "InitSpec":
        if isinstance(d, (list, tuple)):
            return cls.at(d)
        return cls(**d)


@dataclass(frozen=True)
class SimulationConfig:
    """All parameters of one simulation run."""

    lam: float = 1.0
    sigma: float = 0.2
    kappa: float = 0.1
    alpha: float = 100.0
    dim: int = 2
    dt: float = 0.01
    t_final: float = 1.0
    n_particles: int = 1
    seed: int = 0
    variant: Variant = Variant.SelfInteracting
    weight_flow: Optional[WeightFlow] = None
    init: InitSpec = field(default_factory=InitSpec)
    snapshot_stride: Optional[int] = None

    def __post_init__(self):
        object.__setattr__(self, "variant", Variant(self.variant))
        if isinstance(self.weight_flow, dict):
            object.__setattr__(self, "weight_flow", WeightFlow.from_dict(self.weight_flow))
        if isinstance(self.init, (dict, list, tuple)):
            object.__setattr__(self, "init", InitSpec.from_dict(self.init))

    @property
    def n_steps(self) -> int:
        return max(1, int(round(self.t_final / self.dt)))

    @property
    def lambda_gt_8sigma2(self) -> bool:
        return self.lam > 8.0 * self.sigma**2

    def stride(self) -> int:
        if self.snapshot_stride is not None:
            return int(self.snapshot_stride)
        k = self.n_steps
        return 1 if k + 1 <= MAX_SNAPSHOTS else math.ceil((k + 1) / (MAX_SNAPSHOTS - 1))

    def problems(self) -> list[str]:
        """Hard violations; an empty list means the config can be run."""
        out = []
        if not self.lam > 0:
            out.append(f"lam must be positive (got {self.lam})")
        if not self.sigma >= 0:
            out.append(f"sigma must be nonnegative (got {self.sigma})")
        if not self.alpha > 0:
            out.append(f"alpha must be positive (got {self.alpha})")
        if not 0 <= self.kappa <= 1:
            out.append(f"kappa must lie in [0, 1] (got {self.kappa})")
        if int(self.dim) < 1:
            out.append(f"dim must be >= 1 (got {self.dim})")
        if not self.dt > 0:
            out.append(f"dt must be positive (got {self.dt})")
        elif not self.t_final >= self.dt * (1 - 1e-12):
            out.append(f"t_final must be >= dt (got {self.t_final})")
        if int(self.n_particles) < 1:
            out.append(f"n_particles must be >= 1 (got {self.n_particles})")
        if self.snapshot_stride is not None and int(self.snapshot_stride) < 1:
            out.append("snapshot_stride must be >= 1")
        v = self.variant
        if v in SINGLE_VARIANTS:
            if self.n_particles != 1:
                out.append(f"{v.value} is a single-particle variant")
            if self.init.kind != "point":
                out.append(f"{v.value} needs a deterministic initial point")
        if v is Variant.SelfInteracting and self.weight_flow is not None \
                and self.weight_flow.kind is not FlowKind.Lebesgue:
            out.append("SelfInteracting uses the Lebesgue flow; use SelfInteractingWeighted")
        if v in (Variant.SelfInteractingWeighted, Variant.MeanFieldWeighted_N) and self.weight_flow is None:
            out.append(f"{v.value} needs a weight_flow")
        return out

    def check(self) -> "SimulationConfig":
        probs = self.problems()
        if probs:
            raise ConfigError(probs)
        return self

    def replace(self, **changes) -> "SimulationConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return {
            "lam": self.lam,
            "sigma": self.sigma,
            "kappa": self.kappa,
            "alpha": self.alpha,
            "dim": self.dim,
            "dt": self.dt,
            "t_final": self.t_final,
            "n_particles": self.n_particles,
            "seed": self.seed,
            "variant": self.variant.value,
            "weight_flow": None if self.weight_flow is None else self.weight_flow.as_dict(),
            "init": self.init.as_dict(),
            "snapshot_stride": self.snapshot_stride,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SimulationConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        extra = set(d) - known
        if extra:
            raise ConfigError([f"unknown config field {k!r}" for k in sorted(extra)])
        return cls(**d)


@dataclass
class Trajectory:
    """Retained states of a run.

    ``states`` has shape ``(n_retained, n_particles, dim)``; ``consensus[j]``
    is the consensus point used for the step leaving ``times[j]`` (for the
    final time, the consensus that would have been used next).
    """

    times: np.ndarray
    steps: np.ndarray
    states: np.ndarray
    consensus: np.ndarray
    dt: float
    snapshot_stride: int
    variant: Variant
    metadata: dict = field(default_factory=dict)

    @property
    def n_particles(self) -> int:
        return self.states.shape[1]

    @property
    def dim(self) -> int:
        return self.states.shape[2]

    @property
    def final_states(self) -> np.ndarray:
        return self.states[-1]

    def path(self, particle: int = 0) -> np.ndarray:
        return self.states[:, particle, :]


def anisotropic_diffusion(x) -> np.ndarray:
    """``D(x) = diag(|x_1|, ..., |x_d|)``."""
    return np.diag(np.abs(np.asarray(x, dtype=float)))


def _finite_or_raise(x, step, dt):
    if not np.all(np.isfinite(x)):
        raise BlowUpError(step, step * dt)


def step_rescaled(x, m, cfg, noise, floor: bool = True) -> np.ndarray:
    """One Euler-Maruyama step of the rescaled dynamics.

    ``x - lam (x - kappa m) dt + sigma (1/alpha + |x - kappa m|) sqrt(dt) z``,
    componentwise. ``floor=False`` drops the ``1/alpha`` term. ``x`` may carry
    a leading particle axis.
    """
    u = x - cfg.kappa * m
    amp = np.abs(u) + 1.0 / cfg.alpha if floor else np.abs(u)
    with np.errstate(over="ignore", invalid="ignore"):
        out = x - cfg.lam * u * cfg.dt + cfg.sigma * amp * math.sqrt(cfg.dt) * noise
    if not np.all(np.isfinite(out)):
        raise BlowUpError(-1, math.nan)
    return out


def step_standard(x, m, cfg, noise) -> np.ndarray:
    """One Euler-Maruyama step of standard CBO: ``x - lam (x - m) dt + sigma |x - m| sqrt(dt) z``."""
    u = x - m
    with np.errstate(over="ignore", invalid="ignore"):
        out = x - cfg.lam * u * cfg.dt + cfg.sigma * np.abs(u) * math.sqrt(cfg.dt) * noise
    if not np.all(np.isfinite(out)):
        raise BlowUpError(-1, math.nan)
    return out


def _retained_steps(n_steps: int, stride: int) -> np.ndarray:
    steps = np.arange(0, n_steps + 1, stride)
    if steps[-1] != n_steps:
        steps = np.append(steps, n_steps)
    return steps


def _integrate(cfg: SimulationConfig, objective: Objective, mode: str, standard: bool = False,
               m_star=None, flow: Optional[WeightFlow] = None, noise=None) -> Trajectory:
    cfg.check()
    if objective.dim != cfg.dim:
        raise ConfigError([f"objective dim {objective.dim} != config dim {cfg.dim}"])
    n, d, dt, alpha = int(cfg.n_particles), int(cfg.dim), float(cfg.dt), float(cfg.alpha)
    K = cfg.n_steps
    stride = cfg.stride()
    ret = _retained_steps(K, stride)
    states = np.empty((ret.size, n, d))
    fvals = np.empty((ret.size, n))
    cons = np.empty((ret.size, d))
    stored = 0

    x = cfg.init.resolve(n, d, cfg.seed)
    noise = NoiseStream(cfg.seed, n, d) if noise is None else noise
    equal = np.full(n, 1.0 / n)
    accs = [ConsensusAccumulator(alpha, d) for _ in range(n)] if mode == "occupation" else None
    if mode == "frozen":
        m_star = np.asarray(m_star, dtype=float).reshape(d)
        if not np.all(np.isfinite(m_star)):
            raise ValueError("m_star must be finite")
    lebesgue_res = flow.resolution if flow is not None else None
    stepper = step_standard if standard else step_rescaled
    fx = objective(x)

    def partial(k):
        return Trajectory(ret[:stored] * dt, ret[:stored].copy(), states[:stored].copy(),
                          cons[:stored].copy(), dt, stride, cfg.variant, {"aborted_at_step": k})

    for k in range(K + 1):
        if mode == "current":
            m = weighted_consensus(x, equal, fx, alpha)
        elif mode == "frozen":
            m = m_star
        elif k == 0:
            m = weighted_consensus(x, equal, fx, alpha)
        elif mode == "occupation":
            m = merge_accumulators(accs).read()
        else:
            m = _flow_consensus(flow, k, dt, lebesgue_res, ret[:stored], states[:stored],
                                fvals[:stored], x, fx, alpha)

        if stored < ret.size and ret[stored] == k:
            states[stored], fvals[stored], cons[stored] = x, fx, m
            stored += 1
        if k == K:
            break
        if accs is not None:
            for i in range(n):
                accs[i].insert(x[i], fx[i], dt)
        try:
            x = stepper(x, m, cfg, noise.next())
        except BlowUpError:
            raise BlowUpError(k + 1, (k + 1) * dt, partial(k + 1)) from None
        with np.errstate(over="ignore", invalid="ignore"):
            fx = objective(x)
        if not np.all(np.isfinite(fx)):
            raise BlowUpError(k + 1, (k + 1) * dt, partial(k + 1))

    meta = {
        "consensus_source": mode,
        "lambda_gt_8sigma2": cfg.lambda_gt_8sigma2,
    }
    if cfg.variant is Variant.MeanFieldWeighted_N:
        meta["mean_field_proxy"] = "law at time st replaced by the N-particle empirical snapshot"
    if flow is not None:
        meta["weight_flow"] = flow.as_dict()
    return Trajectory(ret * dt, ret, states, cons, dt, stride, cfg.variant, meta)


def _flow_consensus(flow, k, dt, res, ret_steps, snap, snap_f, x, fx, alpha):
    t = k * dt
    if flow.kind is FlowKind.DiracAtOne:
        n = x.shape[0]
        return weighted_consensus(x, np.full(n, 1.0 / n), fx, alpha)
    atoms = atoms_at(flow, t, res)
    # nearest grid step to s * t, ties to the earlier step
    grid_step = np.clip(np.ceil(atoms.locations * k - 0.5), 0, k).astype(int)
    current = grid_step == k
    idx = nearest_index(ret_steps, grid_step[~current]) if np.any(~current) else np.empty(0, int)
    mass = np.bincount(idx, weights=atoms.masses[~current], minlength=len(ret_steps))
    used = np.nonzero(mass)[0]
    n = x.shape[0]
    pts = [snap[used].reshape(-1, x.shape[1])]
    fs = [snap_f[used].reshape(-1)]
    ws = [np.repeat(mass[used] / n, n)]
    m_now = atoms.masses[current].sum()
    if m_now > 0:
        pts.append(x)
        fs.append(fx)
        ws.append(np.full(n, m_now / n))
    return weighted_consensus(np.concatenate(pts), np.concatenate(ws), np.concatenate(fs), alpha)


def run_particle_system(cfg: SimulationConfig, objective: Objective, noise=None) -> Trajectory:
    """N interacting particles driven by the consensus of their (weighted) empirical law."""
    if cfg.variant not in PARTICLE_VARIANTS:
        raise ConfigError([f"run_particle_system does not handle {cfg.variant.value}"])
    if cfg.variant is Variant.StandardCBO_N:
        return _integrate(cfg, objective, "current", standard=True, noise=noise)
    if cfg.variant is Variant.RescaledCBO_N:
        return _integrate(cfg, objective, "current", noise=noise)
    return _integrate(cfg, objective, "flow", flow=cfg.weight_flow, noise=noise)


def run_self_interacting(cfg: SimulationConfig, objective: Objective, noise=None) -> Trajectory:
    """One particle driven by the consensus of its own (weighted) occupation measure."""
    if cfg.variant not in SINGLE_VARIANTS:
        raise ConfigError([f"run_self_interacting does not handle {cfg.variant.value}"])
    if cfg.variant is Variant.SelfInteracting:
        return _integrate(cfg, objective, "occupation", noise=noise)
    return _integrate(cfg, objective, "flow", flow=cfg.weight_flow, noise=noise)


def run_multi_self_interacting(cfg: SimulationConfig, objective: Objective, noise=None) -> Trajectory:
    """N self-interacting particles sharing the consensus of their averaged occupation measures."""
    if cfg.variant is not Variant.MultiSelfInteracting:
        raise ConfigError([f"run_multi_self_interacting does not handle {cfg.variant.value}"])
    flow = cfg.weight_flow
    if flow is None or flow.kind is FlowKind.Lebesgue:
        return _integrate(cfg, objective, "occupation", noise=noise)
    return _integrate(cfg, objective, "flow", flow=flow, noise=noise)


def run_markovian_reference(cfg: SimulationConfig, objective: Objective, m_star, noise=None) -> Trajectory:
    """The rescaled dynamics with the consensus frozen at ``m_star``.

    With ``n_particles > 1`` the particles are independent copies.
    """
    return _integrate(cfg, objective, "frozen", m_star=m_star, noise=noise)


def simulate(cfg: SimulationConfig, objective: Objective, m_star=None, noise=None) -> Trajectory:
    v = cfg.variant
    if v in PARTICLE_VARIANTS:
        return run_particle_system(cfg, objective, noise)
    if v in SINGLE_VARIANTS:
        return run_self_interacting(cfg, objective, noise)
    if v is Variant.MultiSelfInteracting:
        return run_multi_self_interacting(cfg, objective, noise)
    if m_star is None:
        raise ConfigError(["MarkovianReference needs m_star"])
    return run_markovian_reference(cfg, objective, m_star, noise)
