"""Experiment spec files.

A spec is a YAML (or JSON) mapping::

    name: quad-si
    objective: quadratic
    objective_params: {shift: [1.0, 1.0]}
    config:
      lam: 1.0
      sigma: 0.2
      kappa: 0.1
      alpha: 100.0
      dim: 2
      dt: 0.01
      t_final: 200.0
      variant: SelfInteracting
      init: [5.0, 5.0]
    replicas: 20
    sweep:
      - {path: alpha, values: [1.0, 10.0, 100.0]}

Every omitted key takes the default below, and the fully resolved spec is
echoed into the run manifest.
"""

from __future__ import annotations

import copy
import dataclasses
import itertools
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

import numpy as np
import yaml

from ..dynamics import ConfigError, SimulationConfig
from ..objective import OBJECTIVE_NAMES, Objective, make_objective

__all__ = ["ExperimentSpec", "SpecError", "load_spec", "default_probe_grid"]


class SpecError(ValueError):
    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


def default_probe_grid(dt: float, t_final: float, n: int = 16) -> list[float]:
    """``n`` log-spaced probe times from ``10 dt`` to ``t_final``."""
    lo = 10.0 * dt
    if lo >= t_final:
        return [float(t_final)]
    grid = np.geomspace(lo, t_final, n)
    grid[-1] = t_final
    return [float(t) for t in grid]


def _set_path(tree: dict, path: str, value) -> None:
    keys = path.split(".")
    node = tree
    for k in keys[:-1]:
        if not isinstance(node.get(k), dict):
            raise SpecError([f"sweep path {path!r}: {k!r} is not a nested mapping"])
        node = node[k]
    leaf = keys[-1]
    if leaf not in node:
        raise SpecError([f"sweep path {path!r} does not name a config field"])
    old = node[leaf]
    if old is not None and not _compatible(old, value):
        raise SpecError([f"sweep value {value!r} does not fit {path!r} (currently {old!r})"])
    node[leaf] = value


def _compatible(old, new) -> bool:
    num = (int, float)
    if isinstance(old, bool) or isinstance(new, bool):
        return isinstance(old, bool) and isinstance(new, bool)
    if isinstance(old, num):
        return isinstance(new, num)
    if isinstance(old, (list, tuple)):
        return isinstance(new, (list, tuple)) and len(new) == len(old)
    return isinstance(new, type(old))


@dataclass(frozen=True)
class ExperimentSpec:
    name: str
    config: SimulationConfig
    objective: str = "quadratic"
    objective_params: dict = field(default_factory=dict)
    replicas: int = 1
    probe_times: Optional[tuple] = None
    sweep: tuple = ()
    outputs_dir: str = "results"
    burn_in_fraction: float = 0.5
    max_atoms: int = 256
    reference_t_final: Optional[float] = None
    laplace_alphas: tuple = (1.0, 10.0, 100.0, 1000.0)
    lm_pairs: int = 200
    R: Optional[float] = None
    eps1: float = 1.0
    eps2: float = 1.0
    write_trajectories: bool = True

    def __post_init__(self):
        if isinstance(self.config, dict):
            try:
                object.__setattr__(self, "config", SimulationConfig.from_dict(self.config))
            except (ConfigError, TypeError, ValueError) as exc:
                raise SpecError([f"config: {exc}"]) from None
        sweep = tuple((str(s["path"]), tuple(s["values"])) if isinstance(s, dict)
                      else (str(s[0]), tuple(s[1])) for s in self.sweep)
        object.__setattr__(self, "sweep", sweep)
        object.__setattr__(self, "objective_params", dict(self.objective_params or {}))
        object.__setattr__(self, "laplace_alphas", tuple(float(a) for a in self.laplace_alphas))
        if self.probe_times is not None:
            object.__setattr__(self, "probe_times", tuple(float(t) for t in self.probe_times))
        probs = self.problems()
        if probs:
            raise SpecError(probs)

    def problems(self) -> list[str]:
        out = []
        if not self.name or any(c in self.name for c in "/\\"):
            out.append("name must be a nonempty string without path separators")
        if self.objective not in OBJECTIVE_NAMES:
            out.append(f"objective must be one of {sorted(OBJECTIVE_NAMES)}")
        if int(self.replicas) < 1:
            out.append(f"replicas must be >= 1 (got {self.replicas})")
        if not 0 <= self.burn_in_fraction < 1:
            out.append("burn_in_fraction must lie in [0, 1)")
        if int(self.max_atoms) < 1:
            out.append("max_atoms must be >= 1")
        if self.probe_times is not None:
            pt = np.asarray(self.probe_times)
            if pt.size == 0 or np.any(pt <= 0) or np.any(np.diff(pt) <= 0):
                out.append("probe_times must be positive and increasing")
            elif pt[-1] > self.config.t_final * (1 + 1e-12):
                out.append("probe_times must not exceed t_final")
        if self.R is not None and not self.R > 0:
            out.append("R must be positive")
        out += [f"config: {p}" for p in self.config.problems()]
        if not out:
            try:
                self.points()
            except SpecError as exc:
                out += exc.problems
        return out

    def make_objective(self) -> Objective:
        return make_objective(self.objective, self.config.dim, **self.objective_params)

    def probe_grid(self, cfg: Optional[SimulationConfig] = None) -> list[float]:
        cfg = self.config if cfg is None else cfg
        if self.probe_times is not None:
            return list(self.probe_times)
        return default_probe_grid(cfg.dt, cfg.t_final)

    def points(self) -> list[tuple[dict, SimulationConfig]]:
        """The sweep as ``(overrides, config)`` pairs; one pair when there is no sweep."""
        if not self.sweep:
            return [({}, self.config)]
        base = self.config.as_dict()
        out = []
        for combo in itertools.product(*(vals for _, vals in self.sweep)):
            tree = copy.deepcopy(base)
            label = {}
            for (path, _), value in zip(self.sweep, combo):
                _set_path(tree, path, value)
                label[path] = value
            try:
                cfg = SimulationConfig.from_dict(tree)
            except (ConfigError, TypeError, ValueError) as exc:
                raise SpecError([f"sweep point {label}: {exc}"]) from None
            probs = cfg.problems()
            if probs:
                raise SpecError([f"sweep point {label}: {p}" for p in probs])
            out.append((label, cfg))
        return out

    def radius(self, cfg: Optional[SimulationConfig] = None) -> float:
        """Sampling radius for constant estimation: ``R`` or 10x the initial second moment."""
        if self.R is not None:
            return float(self.R)
        cfg = self.config if cfg is None else cfg
        x0 = cfg.init.resolve(cfg.n_particles, cfg.dim, cfg.seed)
        m2 = float(np.mean(np.sum(x0**2, axis=1)))
        return 10.0 * m2 if m2 > 0 else 10.0

    def replace(self, **changes) -> "ExperimentSpec":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "objective": self.objective,
            "objective_params": _plain(self.objective_params),
            "config": self.config.as_dict(),
            "replicas": int(self.replicas),
            "probe_times": None if self.probe_times is None else list(self.probe_times),
            "sweep": [{"path": p, "values": _plain(list(v))} for p, v in self.sweep],
            "outputs_dir": str(self.outputs_dir),
            "burn_in_fraction": self.burn_in_fraction,
            "max_atoms": int(self.max_atoms),
            "reference_t_final": self.reference_t_final,
            "laplace_alphas": list(self.laplace_alphas),
            "lm_pairs": int(self.lm_pairs),
            "R": self.R,
            "eps1": self.eps1,
            "eps2": self.eps2,
            "write_trajectories": bool(self.write_trajectories),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentSpec":
        if not isinstance(d, dict):
            raise SpecError(["spec must be a mapping"])
        known = {f.name for f in dataclasses.fields(cls)}
        extra = sorted(set(d) - known)
        if extra:
            raise SpecError([f"unknown spec field {k!r}" for k in extra])
        if "name" not in d or "config" not in d:
            raise SpecError(["spec needs 'name' and 'config'"])
        return cls(**d)


def _plain(v: Any):
    if isinstance(v, dict):
        return {k: _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    if isinstance(v, float) and not math.isfinite(v):
        return str(v)
    return v


def load_spec(path) -> ExperimentSpec:
    text = Path(path).read_text(encoding="utf-8")
    data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    return ExperimentSpec.from_dict(data)
