import itertools
import math

import numpy as np
import pytest

from sicbo.consensus import WeightedEmpiricalMeasure as M
from sicbo.transport import BudgetExceeded, w2_exact, w2_sliced, w2_squared_1d


def brute_w2(x, y):
    n = len(x)
    best = min(sum(np.sum((x[i] - y[p[i]]) ** 2) for i in range(n)) for p in itertools.permutations(range(n)))
    return math.sqrt(best / n)


def test_identical_is_zero():
    mu = M([[0.0, 1.0], [2.0, 2.0]], [0.3, 0.7])
    assert w2_exact(mu, mu) == 0.0
    assert w2_sliced(mu, mu) == 0.0


def test_two_points():
    x, y = np.array([1.0, 2.0, 3.0]), np.array([-1.0, 0.5, 7.0])
    assert math.isclose(w2_exact(M.dirac(x), M.dirac(y)), np.linalg.norm(x - y), rel_tol=1e-14)


@pytest.mark.parametrize("seed", range(20))
def test_three_points_match_brute_force(seed):
    rng = np.random.default_rng(seed)
    x, y = rng.normal(size=(3, 2)), rng.normal(size=(3, 2))
    assert math.isclose(w2_exact(M.uniform(x), M.uniform(y)), brute_w2(x, y), rel_tol=1e-12)


def test_one_d_matches_assignment():
    rng = np.random.default_rng(4)
    for _ in range(100):
        n = int(rng.integers(1, 40))
        x, y = rng.normal(size=n), rng.normal(size=n) * 3
        one_d = w2_squared_1d(x, np.full(n, 1 / n), y, np.full(n, 1 / n))
        two_d = w2_exact(M.uniform(np.c_[x, np.zeros(n)]), M.uniform(np.c_[y, np.zeros(n)])) ** 2
        assert abs(one_d - two_d) <= 1e-10 * max(1.0, two_d)


def test_unequal_weights_use_linear_program():
    mu = M([[0.0, 0.0], [1.0, 0.0]], [0.25, 0.75])
    nu = M([[0.0, 0.0]], [1.0])
    assert math.isclose(w2_exact(mu, nu), math.sqrt(0.75), rel_tol=1e-9)
    # 1-D oracle for a weighted instance lifted to the plane
    rng = np.random.default_rng(1)
    a, b = rng.random(5), rng.random(7)
    a, b = a / a.sum(), b / b.sum()
    x, y = rng.normal(size=5), rng.normal(size=7)
    want = w2_squared_1d(x, a, y, b)
    got = w2_exact(M(np.c_[x, np.zeros(5)], a), M(np.c_[y, np.zeros(7)], b)) ** 2
    assert math.isclose(got, want, rel_tol=1e-8, abs_tol=1e-12)


def test_budget():
    big = M.uniform(np.zeros((300, 2)))
    with pytest.raises(BudgetExceeded):
        w2_exact(big, big)
    line = M.uniform(np.arange(5000.0))
    assert w2_exact(line, line) == 0.0


def test_dimension_mismatch():
    with pytest.raises(ValueError):
        w2_exact(M.dirac([0.0]), M.dirac([0.0, 0.0]))
    with pytest.raises(ValueError):
        w2_sliced(M.dirac([0.0]), M.dirac([0.0]), n_projections=0)


def test_sliced_in_one_d_equals_exact():
    rng = np.random.default_rng(2)
    mu, nu = M.uniform(rng.normal(size=9)), M.uniform(rng.normal(size=13) + 1)
    for seed in range(5):
        assert math.isclose(w2_sliced(mu, nu, 16, seed), w2_exact(mu, nu), rel_tol=1e-12)


def test_sliced_never_exceeds_exact():
    rng = np.random.default_rng(3)
    for i in range(100):
        mu, nu = M.uniform(rng.normal(size=(2, 2))), M.uniform(rng.normal(size=(2, 2)))
        assert w2_sliced(mu, nu, 256, rng_seed=i) <= w2_exact(mu, nu) * (1 + 1e-9)


def test_sliced_between_diracs_is_scaled_by_root_dim():
    # E[<u, e>^2] = 1/d over the sphere, so two Diracs give |x - y| / sqrt(d)
    rng = np.random.default_rng(8)
    for d in (2, 3, 5):
        x, y = rng.normal(size=d), rng.normal(size=d)
        sl = w2_sliced(M.dirac(x), M.dirac(y), 4096, rng_seed=d)
        assert abs(sl * math.sqrt(d) / np.linalg.norm(x - y) - 1) < 0.06


def test_sliced_is_deterministic():
    rng = np.random.default_rng(0)
    mu, nu = M.uniform(rng.normal(size=(20, 3))), M.uniform(rng.normal(size=(15, 3)))
    assert w2_sliced(mu, nu, 64, 7) == w2_sliced(mu, nu, 64, 7)


def test_zero_iff_same_up_to_permutation_and_merge():
    x = np.array([[0.0, 1.0], [2.0, 3.0], [0.0, 1.0]])
    mu = M.uniform(x)
    nu = M.uniform(x[[2, 1, 0]])
    assert w2_exact(mu, nu) == 0.0
    assert w2_exact(mu, mu.merged()) < 1e-7
    assert w2_exact(mu, M.uniform(x + 1e-3)) > 0
