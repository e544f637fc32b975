import math

import numpy as np
import pytest

from sicbo.consensus import WeightedEmpiricalMeasure as M
from sicbo.dynamics import InitSpec, SimulationConfig, Trajectory, Variant, simulate
from sicbo.metrics import (
    decay_curve,
    dissipativity_constants,
    estimate_invariant_measure,
    estimate_lm_c1,
    fit_decay,
    fixed_point_residual,
    growth_inequality_sides,
    laplace_diagnostic,
    occupation_measure,
    pair_inequality_sides,
    pooled_invariant_measure,
    verify_dissipativity_inequalities,
)
from sicbo.objective import Objective, quadratic


def traj(states, dt=0.1):
    states = np.asarray(states, dtype=float)
    n = states.shape[0]
    return Trajectory(np.arange(n) * dt, np.arange(n), states, states[:, 0, :], dt, 1,
                      Variant.SelfInteracting)


def cfg(**kw):
    base = dict(lam=1.0, sigma=0.3, kappa=0.05, alpha=100.0, dim=2)
    base.update(kw)
    return SimulationConfig(**base)


# -- invariant measure -------------------------------------------------------

def test_constant_trajectory_gives_one_atom():
    mu = estimate_invariant_measure(traj(np.ones((150, 1, 2))), 0.3)
    assert len(mu) == 1 and mu.masses[0] == 1.0
    np.testing.assert_array_equal(mu.points[0], [1.0, 1.0])


def test_two_snapshots_get_half_each():
    mu = estimate_invariant_measure(traj([[[0.0, 0.0]], [[1.0, 2.0]]]), 0.0, min_snapshots=1)
    np.testing.assert_allclose(mu.masses, [0.5, 0.5])


def test_too_few_snapshots():
    with pytest.raises(ValueError):
        estimate_invariant_measure(traj(np.zeros((120, 1, 1))), 0.5)
    with pytest.raises(ValueError):
        estimate_invariant_measure(traj(np.zeros((120, 1, 1))), 1.0)


def test_markovian_reference_concentrates_at_target():
    m_star = np.array([1.0, -2.0])
    c = SimulationConfig(lam=1.0, sigma=0.1, kappa=0.1, alpha=100.0, dim=2, dt=0.01, t_final=30.0,
                         n_particles=100, variant=Variant.MarkovianReference, seed=2,
                         init=InitSpec.at([0.0, 0.0]))
    tr = simulate(c, quadratic(2), m_star=m_star)
    mu = estimate_invariant_measure(tr, 0.5)
    per_particle = tr.states[tr.states.shape[0] // 2:].mean(axis=0)
    se = per_particle.std(axis=0, ddof=1) / math.sqrt(c.n_particles)
    assert np.all(np.abs(mu.mean() - c.kappa * m_star) <= 3 * se)


def test_occupation_measure_window():
    tr = traj(np.arange(10.0).reshape(10, 1, 1), dt=1.0)
    occ = occupation_measure(tr, 4.0)
    assert occ.points[:, 0].tolist() == [0.0, 1.0, 2.0, 3.0]
    assert len(occupation_measure(tr, 4.0, max_atoms=2)) == 2
    pooled = pooled_invariant_measure([tr, tr], 0.5)
    assert len(pooled) == 10


def test_fixed_point_residual_zero_at_target():
    obj = quadratic(2, [1, 1])
    mu = M.dirac([0.1, 0.1])
    # a single atom has consensus equal to itself, so the residual is |x - kappa x|
    assert math.isclose(fixed_point_residual(mu, obj, 100.0, 0.1), 0.9 * math.hypot(0.1, 0.1))
    assert fixed_point_residual(mu, obj, 100.0, 1.0) == 0.0


# -- dissipativity ---------------------------------------------------------------

def test_constants_worked_example():
    c = dissipativity_constants(cfg(), 1.0, 1.0, delta=1.0)
    assert math.isclose(c.frak_a, 1.77, rel_tol=1e-12)
    assert math.isclose(c.frak_b, 0.05045, rel_tol=1e-12)
    assert math.isclose(c.frak_c, 1.572, rel_tol=1e-12)
    assert c.regime_ok and c.lambda_gt_8sigma2


def test_kappa_zero_kills_b():
    c = dissipativity_constants(cfg(kappa=0.0), 3.0, 2.0)
    assert c.frak_b == 0.0
    assert math.isclose(c.frak_a, 2 - 2 * 0.09)


def test_boundary_regime_flag():
    s = 0.25
    c = dissipativity_constants(cfg(lam=8 * s**2, sigma=s), 1.0, 1.0)
    assert not c.lambda_gt_8sigma2


def test_identical_arguments_give_zero_sides():
    c = cfg()
    consts = dissipativity_constants(c, 2.0, 1.0)
    x = np.array([0.3, -1.2])
    m = np.array([1.0, 0.5])
    assert pair_inequality_sides(c, consts, x, x, m, m, 0.0) == (0.0, -0.0)


def test_growth_side_at_origin():
    c = cfg()
    consts = dissipativity_constants(c, 2.0, 1.0)
    lhs, rhs = growth_inequality_sides(c, consts, np.zeros(2), np.zeros(2), 0.0)
    assert math.isclose(lhs, 2 * c.sigma**2 * 2 / c.alpha**2, rel_tol=1e-12)
    assert lhs <= rhs


def test_inequalities_hold_on_samples():
    obj = quadratic(2, [1, 1])
    c = cfg(alpha=1.0)
    est = estimate_lm_c1(obj, 1.0, 10.0, 500, rng_seed=4)
    rep = verify_dissipativity_inequalities(c, obj, dissipativity_constants(c, est.L_m, est.C_1), 500,
                                            rng_seed=5)
    assert rep.passed and rep.violations == 0


def test_broken_constants_are_caught():
    obj = quadratic(2, [1, 1])
    c = cfg(alpha=1.0, kappa=0.5)
    rep = verify_dissipativity_inequalities(c, obj, dissipativity_constants(c, 1e-3, 1e-3), 300, rng_seed=1)
    assert rep.violations > 0


def test_lipschitz_of_plain_mean():
    const = Objective("const", lambda x: np.zeros(x.shape[:-1]), 2)
    est = estimate_lm_c1(const, 5.0, 10.0, 300, rng_seed=0)
    assert est.L_m <= 1 + 1e-9
    assert est.C_1 >= 1 - 1e-12


def test_c1_stable_on_quadratic():
    est = estimate_lm_c1(quadratic(2), 1.0, 10.0, 1000, rng_seed=3)
    assert math.isfinite(est.C_1) and est.stable
    assert est.C_1 >= 1 - 1e-12
    with pytest.raises(ValueError):
        estimate_lm_c1(quadratic(2), 1.0, 0.0, 10)


# -- Laplace -----------------------------------------------------------------

def test_laplace_at_minimizer():
    obj = quadratic(2, [1, 1])
    rep = laplace_diagnostic(M.dirac([1.0, 1.0]), obj, [1, 10, 1e3])
    assert rep.log_mass == [0.0, 0.0, 0.0]
    assert rep.residual == [0.0, 0.0, 0.0]


def test_laplace_two_atoms_closed_form():
    obj = Objective("line", lambda x: x[..., 0], 1, np.zeros(1), 0.0)
    mu = M.uniform([[0.0], [1.0]])
    rep = laplace_diagnostic(mu, obj, [1.0, 10.0, 100.0])
    want = (math.log(2) - math.log1p(math.exp(-10))) / 10
    assert math.isclose(rep.log_mass[1], want, rel_tol=1e-12)
    assert rep.monotone
    assert rep.log_mass[2] < rep.log_mass[1] < rep.log_mass[0]


def test_laplace_large_alpha_mean_is_best_atom():
    rng = np.random.default_rng(0)
    obj = quadratic(3)
    pts = rng.normal(size=(30, 3))
    rep = laplace_diagnostic(M.uniform(pts), obj, [1e6])
    np.testing.assert_allclose(rep.eta_mean[0], pts[np.argmin(obj(pts))], atol=1e-9)


def test_laplace_lower_bound():
    rng = np.random.default_rng(1)
    obj = quadratic(2, [0.5, -0.5])
    for _ in range(50):
        pts = rng.normal(scale=2, size=(int(rng.integers(1, 40)), 2))
        w = rng.random(len(pts)) + 1e-3
        mu = M(pts, w / w.sum())
        rep = laplace_diagnostic(mu, obj, [0.1, 1, 10, 100, 1000])
        assert all(v >= rep.min_atom_f - 1e-12 for v in rep.log_mass)
        assert rep.monotone


def test_laplace_errors():
    with pytest.raises(ValueError):
        laplace_diagnostic(M.dirac([0.0]), Objective("f", lambda x: x[..., 0], 1), [1.0])


# -- decay fits ----------------------------------------------------------------

def test_exact_power_law():
    t = np.geomspace(1, 1000, 16)
    fit = fit_decay(np.c_[t, t**-0.5], 1.0, 1.0, 2)
    assert abs(fit.fitted_exponent + 0.5) < 1e-9
    assert math.isclose(fit.fit_r2, 1.0, abs_tol=1e-12)


def test_constant_curve():
    t = np.geomspace(1, 1000, 10)
    fit = fit_decay(np.c_[t, np.full(10, 3.0)], 1.0, 1.0, 2)
    assert abs(fit.fitted_exponent) < 1e-12


def test_reference_exponent_in_one_d():
    t = np.arange(1.0, 9.0)
    fit = fit_decay(np.c_[t, 1 / t], 0.7, 1.0, 1)
    assert math.isclose(fit.reference_exponent, 1 / 9, rel_tol=1e-12)
    assert math.isclose(fit.theory_exponent, 1 / 9, rel_tol=1e-12)


def test_fit_errors():
    t = np.arange(1.0, 9.0)
    with pytest.raises(ValueError):
        fit_decay(np.c_[t, -t], 1, 1, 1)
    with pytest.raises(ValueError):
        fit_decay(np.c_[t[:5], t[:5]], 1, 1, 1)
    with pytest.raises(ValueError):
        fit_decay(np.c_[t[::-1], t], 1, 1, 1)


def test_decay_curve_of_self_reference_vanishes_at_the_end():
    tr = traj(np.arange(40.0).reshape(40, 1, 1), dt=1.0)
    ref = occupation_measure(tr, 40.0)
    curve = decay_curve([tr, tr], ref, [10.0, 20.0, 40.0], max_atoms=64)
    assert curve.mean[-1] == 0.0 and np.all(np.diff(curve.mean) < 0)
    assert curve.rows()[0][3] == 2
    sl = decay_curve([tr], ref, [10.0, 40.0], max_atoms=64, method="sliced")
    assert sl.method == "sliced"
