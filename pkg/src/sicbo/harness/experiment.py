"""Replica fan-out, sweeps, variant comparison and config validation.

Output layout of :func:`run_experiment` under ``<outputs_dir>/<name>/``::

    manifest.json
    summary.json
    point_000/replica_000.csv     trajectory (step, t, consensus, states)
    point_000/replica_000.json    resolved config of that replica
    point_000/decay_curve.csv     t, mean, stderr, n_replicas

The invariant measure has no closed form, so decay curves are measured
against a separate long reference run; every report says so.
"""

from __future__ import annotations

import platform
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .. import __version__
from .._random import REPLICA, derive_seed
from ..consensus import consensus_point
from ..dynamics import BlowUpError, SimulationConfig, Trajectory, Variant, simulate
from ..metrics import (
    DecayCurve,
    decay_curve,
    dissipativity_constants,
    estimate_lm_c1,
    fit_decay,
    fixed_point_residual,
    laplace_diagnostic,
    pooled_invariant_measure,
)
from ..objective import Objective, make_objective
from ..transport import EXACT_BUDGET, w2_exact, w2_sliced
from .config import ExperimentSpec, SpecError
from .io import read_json, write_csv, write_json, write_trajectory

__all__ = [
    "RunManifest",
    "PointResult",
    "ComparisonReport",
    "ValidationReport",
    "run_experiment",
    "compare_variants",
    "validate",
    "load_manifest",
    "rerun_from_manifest",
    "REFERENCE",
]

REFERENCE = 3

_SHARED = ("lam", "sigma", "kappa", "alpha", "dim")


def _reference_note(seed: int, t_final: float, burn_in: float) -> str:
    return (f"invariant measure proxied by a reference run (seed {seed}, t_final {t_final}) "
            f"after burn-in fraction {burn_in}")


def _one_run(cfg: SimulationConfig, obj: Objective):
    m_star = obj.known_minimizer if cfg.variant is Variant.MarkovianReference else None
    try:
        return simulate(cfg, obj, m_star=m_star), None
    except BlowUpError as exc:
        return exc.trajectory, {"seed": cfg.seed, "step": exc.step, "time": exc.time, "error": str(exc)}


def _run_many(cfgs, obj, threads: int):
    if threads <= 1 or len(cfgs) == 1:
        return [_one_run(c, obj) for c in cfgs]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        # map keeps submission order, so the reduce below is order independent
        return list(pool.map(lambda c: _one_run(c, obj), cfgs))


def replica_configs(cfg: SimulationConfig, replicas: int) -> list[SimulationConfig]:
    return [cfg.replace(seed=derive_seed(cfg.seed, REPLICA, r)) for r in range(replicas)]


def reference_config(cfg: SimulationConfig, t_final: Optional[float]) -> SimulationConfig:
    return cfg.replace(seed=derive_seed(cfg.seed, REFERENCE),
                       t_final=cfg.t_final if t_final is None else float(t_final))


def _curve_method(max_atoms: int) -> str:
    return "exact" if 2 * max_atoms <= EXACT_BUDGET else "sliced"


def _regime(cfg: SimulationConfig, obj: Objective, R: float, n_pairs: int) -> dict:
    est = estimate_lm_c1(obj, cfg.alpha, R, n_pairs, rng_seed=cfg.seed)
    c = dissipativity_constants(cfg, est.L_m, est.C_1)
    return {
        "lambda_gt_8sigma2": bool(cfg.lambda_gt_8sigma2),
        "a_gt_2b": bool(c.frak_a > 2 * c.frak_b),
        "c_positive": bool(c.frak_c > 0),
        "L_m_hat": est.L_m,
        "C_1_hat": est.C_1,
        "estimate_stable": est.stable,
        "R": R,
        "n_pairs": n_pairs,
    }


@dataclass
class PointResult:
    index: int
    overrides: dict
    config: SimulationConfig
    replica_seeds: list
    reference_seed: int
    trajectories: list
    aborts: list
    regime: dict
    summary: dict
    curve: Optional[DecayCurve] = None
    mu_star: object = None


@dataclass
class RunManifest:
    spec: ExperimentSpec
    points: list
    version: str
    wall_clock_seconds: float
    out_dir: Optional[Path] = None

    @property
    def aborted(self) -> bool:
        return any(p.aborts for p in self.points)

    def as_dict(self) -> dict:
        return {
            "spec": self.spec.as_dict(),
            "version": self.version,
            "python": platform.python_version(),
            "numpy": np.__version__,
            "wall_clock_seconds": self.wall_clock_seconds,
            "points": [
                {
                    "index": p.index,
                    "overrides": p.overrides,
                    "config": p.config.as_dict(),
                    "replica_seeds": p.replica_seeds,
                    "reference_seed": p.reference_seed,
                    "regime": p.regime,
                    "aborts": p.aborts,
                }
                for p in self.points
            ],
        }


def _summarize(spec, cfg, obj, trajs, curve, mu_star, ref_note) -> dict:
    out = {"n_ok_replicas": len(trajs), "reference": ref_note}
    if not trajs:
        return out
    final_m = np.array([tr.consensus[-1] for tr in trajs])
    final_x = np.array([tr.final_states.mean(axis=0) for tr in trajs])
    out["final_consensus"] = final_m.mean(axis=0).tolist()
    out["mean_state"] = final_x.mean(axis=0).tolist()
    if len(trajs) > 1:
        out["mean_state_stderr"] = (final_x.std(axis=0, ddof=1) / np.sqrt(len(trajs))).tolist()
    out["invariant_measure_mean"] = mu_star.mean().tolist()
    out["consensus_of_invariant_measure"] = consensus_point(mu_star, obj(mu_star.points), cfg.alpha).tolist()
    out["fixed_point_residual"] = fixed_point_residual(mu_star, obj, cfg.alpha, cfg.kappa)
    if obj.known_min_value is not None:
        lap = laplace_diagnostic(mu_star, obj, spec.laplace_alphas)
        out["laplace"] = {
            "alpha": lap.alphas,
            "log_mass": lap.log_mass,
            "residual": lap.residual,
            "f_at_eta_mean": lap.f_at_eta_mean,
            "monotone": lap.monotone,
        }
    if curve is not None:
        out["decay_curve_method"] = curve.method if curve.method == "exact" else "sliced W2 (surrogate)"
        pos = np.all(curve.mean > 0)
        if curve.times.size >= 8 and pos:
            fit = fit_decay(np.column_stack([curve.times, curve.mean]), spec.eps1, spec.eps2, cfg.dim)
            out["decay_fit"] = {
                "fitted_exponent": fit.fitted_exponent,
                "fit_r2": fit.fit_r2,
                "theory_exponent": fit.theory_exponent,
                "reference_exponent": fit.reference_exponent,
            }
    return out


def run_experiment(spec: ExperimentSpec, threads: int = 1, write: bool = True) -> RunManifest:
    """Run every (sweep point, replica) pair and write the result files.

    A replica that blows up is recorded in the manifest with its partial
    trajectory; its siblings still run and are aggregated.
    """
    t0 = time.perf_counter()
    obj = spec.make_objective()
    out_dir = Path(spec.outputs_dir) / spec.name
    points = []
    for index, (overrides, cfg) in enumerate(spec.points()):
        cfgs = replica_configs(cfg, int(spec.replicas))
        ref_cfg = reference_config(cfg, spec.reference_t_final)
        runs = _run_many(cfgs + [ref_cfg], obj, threads)
        *rep_runs, (ref_traj, ref_abort) = runs
        aborts = [dict(a, replica=r) for r, (_, a) in enumerate(rep_runs) if a is not None]
        ok = [tr for tr, a in rep_runs if a is None]
        if ref_abort is not None:
            aborts.append(dict(ref_abort, replica="reference"))

        curve = mu_star = None
        ref_note = _reference_note(ref_cfg.seed, ref_cfg.t_final, spec.burn_in_fraction)
        if ok:
            mu_star = pooled_invariant_measure(ok, spec.burn_in_fraction)
        if ok and ref_abort is None:
            reference = pooled_invariant_measure([ref_traj], spec.burn_in_fraction,
                                                 max_atoms=spec.max_atoms)
            curve = decay_curve(ok, reference, spec.probe_grid(cfg), spec.max_atoms,
                                _curve_method(spec.max_atoms))
        summary = _summarize(spec, cfg, obj, ok, curve, mu_star, ref_note) if ok else \
            {"n_ok_replicas": 0, "reference": ref_note}
        summary["overrides"] = overrides
        regime = _regime(cfg, obj, spec.radius(cfg), int(spec.lm_pairs))
        points.append(PointResult(index, overrides, cfg, [c.seed for c in cfgs], ref_cfg.seed,
                                  ok, aborts, regime, summary, curve, mu_star))

        if write:
            pdir = out_dir / f"point_{index:03d}"
            for r, ((tr, a), c) in enumerate(zip(rep_runs, cfgs)):
                if spec.write_trajectories and tr is not None:
                    write_trajectory(pdir / f"replica_{r:03d}.csv", tr)
                write_json(pdir / f"replica_{r:03d}.json",
                           {"config": c.as_dict(), "objective": spec.objective,
                            "objective_params": spec.objective_params, "abort": a,
                            "version": __version__})
            if curve is not None:
                write_csv(pdir / "decay_curve.csv", ["t", "mean", "stderr", "n_replicas"], curve.rows())

    manifest = RunManifest(spec, points, __version__, time.perf_counter() - t0,
                           out_dir if write else None)
    if write:
        write_json(out_dir / "manifest.json", manifest.as_dict())
        write_json(out_dir / "summary.json", {"name": spec.name, "points": [p.summary for p in points]})
    return manifest


def load_manifest(path) -> ExperimentSpec:
    """The spec echoed in a manifest file (accepts the file or its directory)."""
    path = Path(path)
    if path.is_dir():
        path = path / "manifest.json"
    return ExperimentSpec.from_dict(read_json(path)["spec"])


def rerun_from_manifest(path, threads: int = 1, outputs_dir: Optional[str] = None) -> RunManifest:
    spec = load_manifest(path)
    if outputs_dir is not None:
        spec = spec.replace(outputs_dir=str(outputs_dir))
    return run_experiment(spec, threads=threads)


# -- comparison --------------------------------------------------------------

@dataclass
class ComparisonReport:
    names: tuple
    times: list
    curves: tuple
    fits: tuple
    terminal_w2: float
    terminal_w2_method: str
    reference: str
    aborts: tuple
    trajectories: tuple = field(default=((), ()), repr=False)

    def as_dict(self) -> dict:
        def fit_dict(f):
            return None if f is None else {
                "fitted_exponent": f.fitted_exponent,
                "fit_r2": f.fit_r2,
                "theory_exponent": f.theory_exponent,
                "reference_exponent": f.reference_exponent,
            }
        return {
            "names": list(self.names),
            "times": self.times,
            "curves": [None if c is None else {"mean": c.mean.tolist(), "stderr": c.stderr.tolist(),
                                               "n_replicas": c.n_replicas, "method": c.method}
                       for c in self.curves],
            "fits": [fit_dict(f) for f in self.fits],
            "terminal_w2": self.terminal_w2,
            "terminal_w2_method": self.terminal_w2_method,
            "reference": self.reference,
            "aborts": list(self.aborts),
        }


def _mismatch(a: ExperimentSpec, b: ExperimentSpec) -> list[str]:
    out = [f"{k}: {getattr(a.config, k)} != {getattr(b.config, k)}"
           for k in _SHARED if getattr(a.config, k) != getattr(b.config, k)]
    if a.objective != b.objective or a.objective_params != b.objective_params:
        out.append(f"objective: {a.objective} {a.objective_params} != {b.objective} {b.objective_params}")
    if a.sweep or b.sweep:
        out.append("compare_variants takes specs without sweeps")
    return out


def compare_variants(spec_a: ExperimentSpec, spec_b: ExperimentSpec, threads: int = 1,
                     out_dir=None) -> ComparisonReport:
    """Run two specs against a common invariant-measure reference built from ``spec_a``.

    Reports both replica-averaged ``W2^2(E_t, mu*)`` curves with their decay
    fits, and the W2 between the pooled terminal occupation measures.
    """
    probs = _mismatch(spec_a, spec_b)
    if probs:
        raise SpecError(["parameter mismatch: " + p for p in probs])
    obj = spec_a.make_objective()
    cfg_a, cfg_b = spec_a.config, spec_b.config
    ref_cfg = reference_config(cfg_a, spec_a.reference_t_final)
    cfgs_a = replica_configs(cfg_a, int(spec_a.replicas))
    cfgs_b = replica_configs(cfg_b, int(spec_b.replicas))
    runs = _run_many(cfgs_a + cfgs_b + [ref_cfg], obj, threads)
    runs_a, runs_b, (ref_traj, ref_abort) = runs[:len(cfgs_a)], runs[len(cfgs_a):-1], runs[-1]
    if ref_abort is not None:
        raise BlowUpError(ref_abort["step"], ref_abort["time"], ref_traj)
    ok_a = [t for t, a in runs_a if a is None]
    ok_b = [t for t, a in runs_b if a is None]
    aborts = tuple([dict(a, spec=spec_a.name) for _, a in runs_a if a is not None]
                   + [dict(a, spec=spec_b.name) for _, a in runs_b if a is not None])

    max_atoms = min(spec_a.max_atoms, spec_b.max_atoms)
    method = _curve_method(max_atoms)
    reference = pooled_invariant_measure([ref_traj], spec_a.burn_in_fraction, max_atoms=max_atoms)
    t_end = min(cfg_a.t_final, cfg_b.t_final)
    times = [t for t in spec_a.probe_grid(cfg_a) if t <= t_end * (1 + 1e-12)]

    curves, fits = [], []
    for ok, spec in ((ok_a, spec_a), (ok_b, spec_b)):
        if not ok:
            curves.append(None)
            fits.append(None)
            continue
        c = decay_curve(ok, reference, times, max_atoms, method)
        curves.append(c)
        good = len(times) >= 8 and np.all(c.mean > 0)
        fits.append(fit_decay(np.column_stack([c.times, c.mean]), spec.eps1, spec.eps2, cfg_a.dim)
                    if good else None)

    if ok_a and ok_b:
        ta = pooled_invariant_measure(ok_a, spec_a.burn_in_fraction, max_atoms=max_atoms)
        tb = pooled_invariant_measure(ok_b, spec_b.burn_in_fraction, max_atoms=max_atoms)
        term = w2_exact(ta, tb) if method == "exact" else w2_sliced(ta, tb)
    else:
        term = float("nan")
    report = ComparisonReport(
        (spec_a.name, spec_b.name), times, tuple(curves), tuple(fits), float(term),
        method if method == "exact" else "sliced W2 (surrogate)",
        _reference_note(ref_cfg.seed, ref_cfg.t_final, spec_a.burn_in_fraction), aborts,
        (tuple(ok_a), tuple(ok_b)),
    )
    if out_dir is not None:
        out_dir = Path(out_dir)
        write_json(out_dir / "comparison.json", report.as_dict())
        for tag, c in zip("ab", curves):
            if c is not None:
                write_csv(out_dir / f"decay_curve_{tag}.csv", ["t", "mean", "stderr", "n_replicas"], c.rows())
    return report


# -- validation --------------------------------------------------------------

@dataclass
class ValidationReport:
    problems: list
    warnings: list
    lambda_gt_8sigma2: bool
    constants: Optional[object]
    constants_source: str

    @property
    def ok(self) -> bool:
        return not self.problems

    def as_dict(self) -> dict:
        return {
            "ok": self.ok,
            "problems": self.problems,
            "warnings": self.warnings,
            "lambda_gt_8sigma2": self.lambda_gt_8sigma2,
            "constants": None if self.constants is None else self.constants.as_dict(),
            "constants_source": self.constants_source,
        }


def validate(cfg: SimulationConfig, objective: Optional[Objective] = None, L_m: Optional[float] = None,
             C_1: Optional[float] = None, R: float = 10.0, n_pairs: int = 200,
             delta: float = 1.0) -> ValidationReport:
    """Report-only check of a config against the regime the theory covers.

    Hard problems are nonpositive parameters (and anything that stops the
    integrator); the rest are warnings.
    """
    problems = list(cfg.problems())
    if cfg.sigma <= 0:
        problems.append(f"sigma must be positive (got {cfg.sigma})")
    if not 0 < cfg.kappa < 1:
        problems.append(f"kappa must lie in (0, 1) (got {cfg.kappa})")
    warnings = []
    big = cfg.lambda_gt_8sigma2
    if not big:
        warnings.append(f"lambda <= 8 sigma^2 ({cfg.lam} <= {8 * cfg.sigma**2:.6g}): outside the regime")
    if cfg.kappa > 0.1:
        warnings.append(f"kappa = {cfg.kappa} is not << 1")
    if cfg.dt * cfg.lam >= 0.5:
        warnings.append(f"dt * lambda = {cfg.dt * cfg.lam:.6g} >= 0.5: explicit step may be unstable")

    consts, source = None, "none"
    if not problems:
        if L_m is None or C_1 is None:
            obj = objective if objective is not None else make_objective("quadratic", cfg.dim)
            est = estimate_lm_c1(obj, cfg.alpha, R, n_pairs, rng_seed=cfg.seed)
            L_m = est.L_m if L_m is None else L_m
            C_1 = est.C_1 if C_1 is None else C_1
            source = f"estimated on {obj.name} (R={R}, {n_pairs} pairs)"
        else:
            source = "supplied"
        consts = dissipativity_constants(cfg, L_m, C_1, delta)
        if not consts.frak_a > 2 * consts.frak_b:
            warnings.append(f"a = {consts.frak_a:.6g} <= 2b = {2 * consts.frak_b:.6g}")
        if not consts.frak_c > 0:
            warnings.append(f"c = {consts.frak_c:.6g} <= 0")
    return ValidationReport(problems, warnings, bool(big), consts, source)
