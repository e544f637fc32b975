"""Diagnostics: invariant-measure estimates, dissipativity constants and
inequalities, Lipschitz/growth constants of the consensus map, the Laplace
check and power-law decay fits.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.special import logsumexp

from ._random import stream
from .consensus import WeightedEmpiricalMeasure, consensus_point
from .dynamics import Trajectory
from .objective import Objective
from .transport import w2_exact, w2_sliced

__all__ = [
    "estimate_invariant_measure",
    "occupation_measure",
    "pooled_invariant_measure",
    "DissipativityConstants",
    "dissipativity_constants",
    "InequalityReport",
    "verify_dissipativity_inequalities",
    "LmC1Estimate",
    "estimate_lm_c1",
    "LaplaceReport",
    "laplace_diagnostic",
    "DecayFit",
    "fit_decay",
    "DecayCurve",
    "decay_curve",
    "fixed_point_residual",
    "random_measure",
]


# -- empirical measures from trajectories -----------------------------------

def _pooled(states: np.ndarray) -> np.ndarray:
    return states.reshape(-1, states.shape[-1])


def estimate_invariant_measure(traj: Trajectory, burn_in_fraction: float = 0.0,
                               min_snapshots: int = 100, max_atoms: Optional[int] = None,
                               merge: bool = True) -> WeightedEmpiricalMeasure:
    """Equal-mass measure over the retained states after a burn-in.

    Particles are pooled with the time samples. ``max_atoms`` thins the pool
    by even sub-selection before coincident atoms are merged.
    """
    if not 0 <= burn_in_fraction < 1:
        raise ValueError("burn_in_fraction must lie in [0, 1)")
    n = traj.states.shape[0]
    start = int(math.ceil(burn_in_fraction * n))
    if start >= n:
        start = n - 1
    kept = traj.states[start:]
    if kept.shape[0] < min_snapshots:
        raise ValueError(f"only {kept.shape[0]} snapshots after burn-in, need {min_snapshots}")
    mu = WeightedEmpiricalMeasure.uniform(_pooled(kept))
    if max_atoms is not None:
        mu = mu.thinned(max_atoms)
    return mu.merged() if merge else mu


def pooled_invariant_measure(trajs: Sequence[Trajectory], burn_in_fraction: float = 0.0,
                             min_snapshots: int = 1,
                             max_atoms: Optional[int] = None) -> WeightedEmpiricalMeasure:
    """Post-burn-in states of several replicas pooled into one equal-mass measure."""
    if not trajs:
        raise ValueError("no trajectories to pool")
    parts = [estimate_invariant_measure(tr, burn_in_fraction, min_snapshots, merge=False).points
             for tr in trajs]
    mu = WeightedEmpiricalMeasure.uniform(np.concatenate(parts))
    return mu if max_atoms is None else mu.thinned(max_atoms)


def occupation_measure(traj: Trajectory, t: Optional[float] = None, t_start: float = 0.0,
                       max_atoms: Optional[int] = None) -> WeightedEmpiricalMeasure:
    """Uniform occupation measure of the retained states with ``t_start <= r < t``.

    Particles are pooled, giving ``(1/N) sum_i E_t[X^i]``. With ``t=None``
    the whole run up to (not including) the final time is used.
    """
    steps = traj.steps
    k_end = steps[-1] if t is None else int(round(t / traj.dt))
    k_start = int(round(t_start / traj.dt))
    sel = (steps < k_end) & (steps >= k_start)
    if not np.any(sel):
        sel = steps == steps[0]
    mu = WeightedEmpiricalMeasure.uniform(_pooled(traj.states[sel]))
    return mu if max_atoms is None else mu.thinned(max_atoms)


def fixed_point_residual(mu: WeightedEmpiricalMeasure, objective: Objective, alpha: float,
                         kappa: float) -> float:
    """``|mean(mu) - kappa * m_alpha(mu)|``, zero at a stationary law of the rescaled dynamics."""
    m = consensus_point(mu, objective(mu.points), alpha)
    return float(np.linalg.norm(mu.mean() - kappa * m))


# -- dissipativity -----------------------------------------------------------

@dataclass
class DissipativityConstants:
    frak_a: float
    frak_b: float
    frak_c: float
    K: float
    delta: float
    L_m: float
    C_1: float
    lambda_gt_8sigma2: bool
    regime_ok: bool

    def as_dict(self) -> dict:
        return asdict(self)


def dissipativity_constants(cfg, L_m: float, C_1: float, delta: float = 1.0) -> DissipativityConstants:
    """Constants of the two drift/diffusion inequalities for the rescaled dynamics.

    ``cfg`` only needs ``lam, sigma, kappa, alpha, dim``.
    """
    lam, s2, k = cfg.lam, cfg.sigma**2, cfg.kappa
    a = 2 * lam - lam * k - 2 * s2
    b = (lam + 2 * s2 * k) * k * L_m**2
    c = (2 * lam - lam * k) - 2 * s2 * (1 + delta) * (1 + k)
    K = max(2 * s2 * cfg.dim / cfg.alpha**2,
            lam * k * C_1**2 + 2 * s2 * (1 + delta) * (1 + k) * k * C_1**2)
    return DissipativityConstants(
        frak_a=a, frak_b=b, frak_c=c, K=K, delta=delta, L_m=L_m, C_1=C_1,
        lambda_gt_8sigma2=bool(lam > 8 * s2),
        regime_ok=bool(a > 2 * b and c > 0),
    )


def random_measure(rng, dim: int, n_atoms: int, moment_cap: float) -> WeightedEmpiricalMeasure:
    """Uniform cloud with random centre and spread and second moment below ``moment_cap``."""
    centre = rng.standard_normal(dim) * 10 ** rng.uniform(-2, 0.5)
    spread = 10 ** rng.uniform(-3, 0.5)
    pts = centre + spread * rng.standard_normal((n_atoms, dim))
    target = moment_cap * rng.uniform(1e-3, 1.0)
    m2 = float(np.mean(np.sum(pts**2, axis=1)))
    if m2 > target:
        pts *= math.sqrt(target / m2)
    return WeightedEmpiricalMeasure.uniform(pts)


def _measure_pair(rng, dim, max_atoms, R, nu_factor):
    n = int(rng.integers(1, max_atoms + 1))
    mu = random_measure(rng, dim, n, R)
    if rng.random() < 0.5:
        nu = random_measure(rng, dim, n, nu_factor * R)
    else:
        # small perturbations probe the local Lipschitz behaviour
        eps = 10 ** rng.uniform(-4, 0)
        nu = WeightedEmpiricalMeasure.uniform(mu.points + eps * rng.standard_normal(mu.points.shape))
    return mu, nu


def _random_point(rng, dim, R):
    return rng.standard_normal(dim) * 10 ** rng.uniform(-2, 0.5) * math.sqrt(R) / 2


@dataclass
class LmC1Estimate:
    L_m: float
    C_1: float
    L_m_half: float
    C_1_half: float
    n_pairs: int
    stable: bool

    def __iter__(self):
        return iter((self.L_m, self.C_1))


def estimate_lm_c1(objective: Objective, alpha: float, R: float, n_pairs: int, rng_seed: int = 0,
                   max_atoms: int = 64, nu_factor: float = 4.0) -> LmC1Estimate:
    """Sampled lower estimates of the consensus Lipschitz constant and growth factor.

    ``2 * n_pairs`` random pairs ``(mu, nu)`` are drawn with ``mu`` of second
    moment at most ``R``. ``L_m`` is the largest ``|m(mu) - m(nu)| / W2``
    (pairs with ``W2 < 1e-8`` skipped) and ``C_1`` the largest
    ``|m(nu)| / nu(|x|^2)^(1/2)``, both over all pairs; the ``*_half`` values
    use the first ``n_pairs`` only, and ``stable`` says they agree within 20%.
    """
    if not R > 0:
        raise ValueError("R must be positive")
    rng = stream(rng_seed, 21)
    lip = np.zeros(2 * n_pairs)
    grow = np.zeros(2 * n_pairs)
    for i in range(2 * n_pairs):
        mu, nu = _measure_pair(rng, objective.dim, max_atoms, R, nu_factor)
        m_mu = consensus_point(mu, objective(mu.points), alpha)
        m_nu = consensus_point(nu, objective(nu.points), alpha)
        w = w2_exact(mu, nu)
        if w >= 1e-8:
            lip[i] = np.linalg.norm(m_mu - m_nu) / w
        r = []
        for meas, m in ((mu, m_mu), (nu, m_nu)):
            q = meas.second_moment()
            if q > 1e-300:
                r.append(np.linalg.norm(m) / math.sqrt(q))
        grow[i] = max(r) if r else 0.0
    L_half, C_half = float(lip[:n_pairs].max(initial=0)), float(grow[:n_pairs].max(initial=0))
    L_full, C_full = float(lip.max(initial=0)), float(grow.max(initial=0))

    def close(u, v):
        return v == 0 or abs(u - v) <= 0.2 * max(u, v)

    return LmC1Estimate(L_full, C_full, L_half, C_half, int(n_pairs),
                        bool(close(L_half, L_full) and close(C_half, C_full)))


@dataclass
class InequalityReport:
    n_samples: int
    violations_pair: int
    violations_growth: int
    worst_margin_pair: float
    worst_margin_growth: float

    @property
    def violations(self) -> int:
        return self.violations_pair + self.violations_growth

    @property
    def passed(self) -> bool:
        return self.violations == 0

    def as_dict(self) -> dict:
        out = asdict(self)
        out["violations"] = self.violations
        out["passed"] = self.passed
        return out


def _drift(cfg, x, m):
    return -cfg.lam * (x - cfg.kappa * m)


def _diffusion_diag(cfg, x, m):
    return cfg.sigma * (1.0 / cfg.alpha + np.abs(x - cfg.kappa * m))


def pair_inequality_sides(cfg, consts, x, y, m_mu, m_nu, w2sq):
    """Both sides of ``2<b(x,mu)-b(y,nu), x-y> + |s(x,mu)-s(y,nu)|^2 <= -a|x-y|^2 + b W2^2``."""
    lhs = 2 * (_drift(cfg, x, m_mu) - _drift(cfg, y, m_nu)) @ (x - y) \
        + np.sum((_diffusion_diag(cfg, x, m_mu) - _diffusion_diag(cfg, y, m_nu)) ** 2)
    rhs = -consts.frak_a * float((x - y) @ (x - y)) + consts.frak_b * w2sq
    return float(lhs), float(rhs)


def growth_inequality_sides(cfg, consts, x, m_nu, nu_moment):
    """Both sides of ``2<b(x,nu),x> + (1+delta)|s(x,nu)|^2 <= -c|x|^2 + K(1 + delta + nu(|.|^2))``."""
    d = consts.delta
    lhs = 2 * _drift(cfg, x, m_nu) @ x + (1 + d) * np.sum(_diffusion_diag(cfg, x, m_nu) ** 2)
    rhs = -consts.frak_c * float(x @ x) + consts.K * (1 + d + nu_moment)
    return float(lhs), float(rhs)


def verify_dissipativity_inequalities(cfg, objective: Objective, consts: DissipativityConstants,
                                      n_samples: int, rng_seed: int = 0, R: float = 10.0,
                                      max_atoms: int = 64, nu_factor: float = 4.0,
                                      rtol: float = 1e-12) -> InequalityReport:
    """Evaluate both inequalities on random ``(x, y, mu, nu)`` and count violations."""
    rng = stream(rng_seed, 22)
    v1 = v2 = 0
    w1 = w2m = -math.inf
    for _ in range(n_samples):
        mu, nu = _measure_pair(rng, objective.dim, max_atoms, R, nu_factor)
        x = _random_point(rng, objective.dim, R)
        y = _random_point(rng, objective.dim, R)
        m_mu = consensus_point(mu, objective(mu.points), cfg.alpha)
        m_nu = consensus_point(nu, objective(nu.points), cfg.alpha)
        w2sq = w2_exact(mu, nu) ** 2
        lhs, rhs = pair_inequality_sides(cfg, consts, x, y, m_mu, m_nu, w2sq)
        w1 = max(w1, lhs - rhs)
        v1 += lhs > rhs + rtol * (1 + abs(rhs))
        lhs, rhs = growth_inequality_sides(cfg, consts, x, m_nu, nu.second_moment())
        w2m = max(w2m, lhs - rhs)
        v2 += lhs > rhs + rtol * (1 + abs(rhs))
    return InequalityReport(int(n_samples), int(v1), int(v2), float(w1), float(w2m))


# -- Laplace principle ------------------------------------------------------

@dataclass
class LaplaceReport:
    alphas: list
    log_mass: list  # -(1/alpha) log int exp(-alpha f) dmu
    residual: list  # log_mass - f(x*)
    eta_mean: list
    f_at_eta_mean: list
    min_atom_f: float
    monotone: bool

    def as_dict(self) -> dict:
        return asdict(self)


def laplace_diagnostic(mu: WeightedEmpiricalMeasure, objective: Objective,
                       alphas: Sequence[float]) -> LaplaceReport:
    """``-(1/alpha) log int exp(-alpha f) dmu`` and the tilted-measure mean for each alpha."""
    if len(mu) == 0:
        raise ValueError("empty measure")
    if objective.known_min_value is None:
        raise ValueError("laplace_diagnostic needs known_min_value")
    f = objective(mu.points)
    fstar = float(objective.known_min_value)
    keep = mu.masses > 0
    logw = np.log(mu.masses[keep])
    ell, res, means, fmeans = [], [], [], []
    for a in alphas:
        val = -float(logsumexp(logw - a * f[keep])) / a
        ell.append(val)
        res.append(val - fstar)
        m = consensus_point(mu, f, a)
        means.append(m.tolist())
        fmeans.append(float(objective(m)))
    fmin = float(f[keep].min())
    gaps = np.abs(np.asarray(ell) - fmin)
    monotone = bool(np.all(np.diff(gaps) <= 1e-12 * (1 + gaps[:-1])))
    return LaplaceReport(list(map(float, alphas)), ell, res, means, fmeans, fmin, monotone)


# -- decay fits -------------------------------------------------------------

@dataclass
class DecayFit:
    times: list
    values: list
    fitted_exponent: float
    fit_r2: float
    theory_exponent: float
    reference_exponent: float

    def as_dict(self) -> dict:
        return asdict(self)


def fit_decay(curve, eps1: float, eps2: float, dim: int, delta: float = 1.0) -> DecayFit:
    """Least-squares log-log slope over the last half of ``curve``.

    ``theory_exponent`` is ``min(eps1, eps2 / (3 (dim + 2)))``;
    ``reference_exponent`` is ``gamma * eps2`` with
    ``gamma = delta / ((dim + 2)(delta + 2))``.
    """
    pts = np.asarray(curve, dtype=float)
    if pts.ndim != 2 or pts.shape[0] < 8:
        raise ValueError("need at least 8 (t, value) points")
    t, v = pts[:, 0], pts[:, 1]
    if np.any(v <= 0):
        raise ValueError("values must be positive")
    if np.any(np.diff(t) <= 0):
        raise ValueError("times must increase")
    lt, lv = np.log(t[len(t) // 2:]), np.log(v[len(v) // 2:])
    slope, icept = np.polyfit(lt, lv, 1)
    ss_tot = float(np.sum((lv - lv.mean()) ** 2))
    ss_res = float(np.sum((lv - (slope * lt + icept)) ** 2))
    r2 = 1.0 if ss_tot <= 1e-30 else 1.0 - ss_res / ss_tot
    gamma = delta / ((dim + 2) * (delta + 2))
    return DecayFit(t.tolist(), v.tolist(), float(slope), float(r2),
                    float(min(eps1, eps2 / (3 * (dim + 2)))), float(gamma * eps2))


@dataclass
class DecayCurve:
    times: np.ndarray
    mean: np.ndarray
    stderr: np.ndarray
    n_replicas: int
    method: str = "exact"

    def rows(self):
        return [(float(t), float(m), float(s), self.n_replicas)
                for t, m, s in zip(self.times, self.mean, self.stderr)]


def decay_curve(trajectories: Sequence[Trajectory], reference: WeightedEmpiricalMeasure,
                probe_times: Sequence[float], max_atoms: int = 256,
                method: str = "exact") -> DecayCurve:
    """Replica average of ``W2^2(E_t, reference)`` at each probe time.

    Occupation measures are thinned to ``max_atoms``. When both measures are
    uniform, the larger one is thinned evenly to the size of the smaller so
    the exact distance goes through the assignment solver. ``method="sliced"``
    swaps in the sliced surrogate for measures beyond the exact budget.
    """
    if method not in ("exact", "sliced"):
        raise ValueError("method must be 'exact' or 'sliced'")
    dist = w2_exact if method == "exact" else w2_sliced
    probe = np.asarray(probe_times, dtype=float)
    vals = np.empty((len(trajectories), probe.size))
    for r, tr in enumerate(trajectories):
        for j, t in enumerate(probe):
            occ = occupation_measure(tr, t, max_atoms=max_atoms)
            ref = reference
            if occ.is_uniform() and ref.is_uniform():
                k = min(len(occ), len(ref))
                occ, ref = occ.thinned(k), ref.thinned(k)
            vals[r, j] = dist(occ, ref) ** 2
    n = len(trajectories)
    err = vals.std(axis=0, ddof=1) / math.sqrt(n) if n > 1 else np.zeros(probe.size)
    return DecayCurve(probe, vals.mean(axis=0), err, n, method)
