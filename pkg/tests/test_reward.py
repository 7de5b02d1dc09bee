import itertools

import numpy as np
import pytest

from applan.floorplan import Deployment, FloorPlan
from applan.propagation import RadioConfig, compute_radio_map, coverage_fraction
from applan.reward import (
    ExactRewardProvider,
    RewardConfig,
    SmoothRewardProvider,
    boltzmann_weight,
    exact_reward,
    smooth_reward,
    symmetrized_log_terms,
    symmetrized_reward_stats,
)


@pytest.fixture
def rcfg():
    return RewardConfig(
        radio=RadioConfig(), xi_db=8.0, t_min_bps=20e6, d_min_m=2.0,
        penalty_weight=10.0, sigmoid_temp=2.0,
    )


@pytest.fixture
def vacuous():
    """Thresholds that never bind, so the reward reduces to coverage."""
    return RewardConfig(
        radio=RadioConfig(), xi_db=np.inf, t_min_bps=0.0, d_min_m=0.0,
    )


def random_deployment(rng, n, lo=1.5, hi=8.5):
    return np.column_stack(
        [rng.uniform(lo, hi, n), rng.uniform(lo, hi, n), np.full(n, 1.5)]
    )


def test_exact_reward_full_coverage_is_one(open_room, vacuous):
    vac = RewardConfig(radio=RadioConfig(pathloss_threshold_db=200.0),
                       xi_db=np.inf, t_min_bps=0.0)
    assert exact_reward(open_room, Deployment.from_points([[5, 5, 1.5]]), vac) == 1.0


def test_exact_reward_zero_coverage_nonpositive(open_room):
    cfg = RewardConfig(radio=RadioConfig(pathloss_threshold_db=41.0),
                       xi_db=np.inf, t_min_bps=0.0, d_min_m=4.0, penalty_weight=10.0)
    dep = Deployment.from_points([[-30.0, -30.0, 1.5], [-30.5, -30.0, 1.5]])
    assert exact_reward(open_room, dep, cfg) <= 0.0


def test_exact_reward_equals_coverage_when_vacuous(open_room, vacuous):
    fp = FloorPlan(grid=np.zeros((12, 12), dtype=int))
    dep = Deployment.from_points([[3.0, 3.0, 1.5]])
    cov = coverage_fraction(compute_radio_map(fp, dep, vacuous.radio))
    assert exact_reward(fp, dep, vacuous) == pytest.approx(cov, abs=1e-12)


def test_smooth_gradient_matches_finite_differences(open_room, rcfg):
    rng = np.random.default_rng(0)
    h = 1e-4
    worst = 0.0
    for _ in range(20):
        n = int(rng.integers(1, 4))
        p = random_deployment(rng, n)
        _, grad = smooth_reward(open_room, p, rcfg)
        for i in range(n):
            for c in range(2):
                up = p.copy(); up[i, c] += h
                dn = p.copy(); dn[i, c] -= h
                fd = (
                    smooth_reward(open_room, up, rcfg)[0]
                    - smooth_reward(open_room, dn, rcfg)[0]
                ) / (2 * h)
                rel = abs(grad[i, c] - fd) / max(abs(grad[i, c]), abs(fd), 1e-6)
                worst = max(worst, rel)
    assert worst < 1e-4


def test_smooth_permutation_equivariance(open_room, rcfg):
    rng = np.random.default_rng(5)
    p = random_deployment(rng, 3)
    v0, g0 = smooth_reward(open_room, p, rcfg)
    for perm in itertools.permutations(range(3)):
        v1, g1 = smooth_reward(open_room, p[list(perm)], rcfg)
        assert v1 == v0
        assert np.array_equal(g1, g0[list(perm)])


def test_exact_permutation_invariance(open_room, rcfg):
    rng = np.random.default_rng(6)
    p = random_deployment(rng, 4)
    base = exact_reward(open_room, p, rcfg)
    for perm in itertools.permutations(range(4)):
        assert exact_reward(open_room, p[list(perm)], rcfg) == base


def test_far_ap_gradient_dominated_by_boundary_pull(open_room):
    radio = RadioConfig(pathloss_threshold_db=60.0)
    cfg = RewardConfig(radio=radio, xi_db=np.inf, t_min_bps=0.0,
                       penalty_weight=10.0)
    p = np.array([[200.0, 200.0, 1.5]])  # far outside any coverage influence
    no_pen = RewardConfig(radio=radio, xi_db=np.inf, t_min_bps=0.0,
                          penalty_weight=0.0)
    _, g_cov = smooth_reward(open_room, p, no_pen)
    assert np.abs(g_cov).max() < 1e-8
    _, g_full = smooth_reward(open_room, p, cfg)
    # boundary pull points back toward the room corner
    assert g_full[0, 0] < 0 and g_full[0, 1] < 0


def test_smooth_converges_to_exact_as_tau_shrinks(open_room):
    # margins to every threshold far exceed 10 * tau for all three taus
    dep = Deployment.from_points([[5.0, 5.0, 1.5]])
    exact_val = None
    previous_gap = None
    for tau in (1.0, 0.1, 0.01):
        cfg = RewardConfig(radio=RadioConfig(pathloss_threshold_db=75.0),
                           xi_db=np.inf, t_min_bps=0.0, sigmoid_temp=tau)
        if exact_val is None:
            exact_val = exact_reward(open_room, dep, cfg)
        val, _ = smooth_reward(open_room, dep, cfg)
        gap = abs(val - exact_val)
        if previous_gap is not None:
            assert gap <= previous_gap
        previous_gap = gap
    assert previous_gap < 1e-3


def test_boltzmann_weight_values():
    assert boltzmann_weight(0.0, 1.0) == 1.0
    assert boltzmann_weight(np.log(2.0), 1.0) == pytest.approx(2.0, rel=1e-12)
    assert boltzmann_weight(0.5, 2.0) == pytest.approx(np.e, rel=1e-12)
    with pytest.raises(ValueError):
        boltzmann_weight(1.0, 0.0)


def test_symmetrized_stats_single_ap_noop(open_room, rcfg):
    provider = SmoothRewardProvider(rcfg)
    samples = np.array([[[3.0, 3.0, 1.5]], [[6.0, 4.0, 1.5]]])
    w_sum, g_sum = symmetrized_reward_stats(provider, open_room, samples, beta=1.0)
    vals = provider.value_batch(open_room, samples)
    assert w_sum == pytest.approx(np.exp(vals).sum(), rel=1e-12)
    _, grads = provider.value_and_gradient_batch(open_room, samples)
    expected = np.einsum("s,snc->nc", np.exp(vals), grads)
    assert np.allclose(g_sum, expected, rtol=1e-12)


def test_symmetrized_stats_two_aps_doubles(open_room, rcfg):
    provider = SmoothRewardProvider(rcfg)
    sample = np.array([[[3.0, 3.0, 1.5], [6.0, 4.0, 1.5]]])
    w_sym, g_sym = symmetrized_reward_stats(provider, open_room, sample, beta=1.0)
    val = provider.value(open_room, sample[0])
    assert w_sym == pytest.approx(2.0 * np.exp(val), rel=1e-12)
    grad = provider.gradient(open_room, sample[0])
    assert np.allclose(g_sym, 2.0 * np.exp(val) * grad, rtol=1e-12)


def test_symmetrized_full_vs_budget_identical_for_three_aps(open_room, rcfg):
    provider = SmoothRewardProvider(rcfg)
    sample = np.array(
        [[[3.0, 3.0, 1.5], [6.0, 4.0, 1.5], [2.0, 7.0, 1.5]]]
    )
    w_full, g_full = symmetrized_reward_stats(provider, open_room, sample, beta=1.0,
                                              perm_budget=720)
    w_budget, g_budget = symmetrized_reward_stats(provider, open_room, sample,
                                                  beta=1.0, perm_budget=6)
    assert w_full == w_budget
    assert np.array_equal(g_full, g_budget)


def test_symmetrized_log_terms_shapes(open_room, rcfg):
    provider = ExactRewardProvider(rcfg)
    samples = np.stack([random_deployment(np.random.default_rng(i), 2) for i in range(3)])
    log_w, grads = symmetrized_log_terms(provider, open_room, samples, beta=2.0,
                                         want_grad=True)
    assert log_w.shape == (6,)          # 3 samples x 2 permutations
    assert grads.shape == (6, 2, 3)
    vals = provider.value_batch(open_room, samples)
    assert np.allclose(sorted(log_w[:3]), sorted(2.0 * vals))


def test_perm_budget_validation(open_room, rcfg):
    provider = SmoothRewardProvider(rcfg)
    with pytest.raises(ValueError):
        symmetrized_reward_stats(provider, open_room,
                                 np.zeros((1, 1, 3)), beta=1.0, perm_budget=0)


def test_reward_config_validation():
    with pytest.raises(ValueError):
        RewardConfig(beta=0.0)
    with pytest.raises(ValueError):
        RewardConfig(penalty_weight=-1.0)
    with pytest.raises(ValueError):
        RewardConfig(sigmoid_temp=0.0)
