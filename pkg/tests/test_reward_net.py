import numpy as np
import pytest

from applan.floorplan import generate_synthetic
from applan.propagation import RadioConfig
from applan.reward_net import (
    CoverageRegressor,
    LearnedRewardProvider,
    TrainConfig,
    dataset_mse,
    forward,
    generate_dataset,
    load_model,
    normalize_coords,
    position_gradient,
    save_model,
    train,
)


@pytest.fixture
def net():
    return CoverageRegressor(coord_dim=2, seed=1)


@pytest.fixture
def sets():
    rng = np.random.default_rng(7)
    return rng.uniform(-1, 1, (3, 2)), rng.uniform(-1, 1, (32, 2))


def test_output_in_open_unit_interval(net, sets):
    ap, ind = sets
    for seed in range(5):
        rng = np.random.default_rng(seed)
        out = forward(net, rng.uniform(-1, 1, (4, 2)), ind)
        assert 0.0 < out < 1.0


def test_forward_permutation_invariant_bitwise(net, sets):
    ap, ind = sets
    base = forward(net, ap, ind)
    rng = np.random.default_rng(0)
    for _ in range(10):
        assert forward(net, ap[rng.permutation(3)], ind[rng.permutation(32)]) == base


def test_zero_weights_give_half(net, sets):
    ap, ind = sets
    for k in net.params:
        net.params[k] = np.zeros_like(net.params[k])
    assert forward(net, ap, ind) == 0.5


def test_position_gradient_matches_finite_differences():
    h = 1e-5
    worst = 0.0
    for seed in (3, 4, 5, 6, 7, 8, 9, 10, 11, 12):
        net = CoverageRegressor(coord_dim=2, seed=seed)
        rng = np.random.default_rng(seed + 100)
        ap = rng.uniform(-0.9, 0.9, (2, 2))
        ind = rng.uniform(-1, 1, (24, 2))
        grad = position_gradient(net, ap, ind)
        for i in range(2):
            for c in range(2):
                up = ap.copy(); up[i, c] += h
                dn = ap.copy(); dn[i, c] -= h
                fd = (forward(net, up, ind) - forward(net, dn, ind)) / (2 * h)
                rel = abs(grad[i, c] - fd) / max(abs(grad[i, c]), abs(fd), 1e-8)
                worst = max(worst, rel)
    assert worst < 1e-4


def test_weight_gradients_match_finite_differences(net, sets):
    ap, ind = sets
    h = 1e-5
    _, cache = net._forward(ap, ind, train=False)
    grads, _ = net._backward(cache, 1.0)
    rng = np.random.default_rng(0)
    worst = 0.0
    for name in ("ap_W0", "ap_b1", "in_W1", "in_W2", "hd_W0", "hd_W2", "hd_W3", "hd_b0"):
        p = net.params[name]
        for flat in rng.integers(0, p.size, size=6):
            orig = p.flat[flat]
            p.flat[flat] = orig + h
            up = forward(net, ap, ind)
            p.flat[flat] = orig - h
            dn = forward(net, ap, ind)
            p.flat[flat] = orig
            fd = (up - dn) / (2 * h)
            an = grads[name].flat[flat]
            if max(abs(an), abs(fd)) < 1e-12:
                continue
            worst = max(worst, abs(an - fd) / max(abs(an), abs(fd), 1e-8))
    assert worst < 1e-4


def test_gradient_rows_permute_with_input(net, sets):
    ap, ind = sets
    g = position_gradient(net, ap, ind)
    perm = [2, 0, 1]
    g2 = position_gradient(net, ap[perm], ind)
    assert np.array_equal(g2, g[perm])


def test_zero_first_layer_blocks_position_gradient(net, sets):
    ap, ind = sets
    net.params["ap_W0"] = np.zeros_like(net.params["ap_W0"])
    assert np.all(position_gradient(net, ap, ind) == 0.0)


def test_generate_dataset_deterministic_and_bounded():
    fp = generate_synthetic(1, 10, 10, seed=2)
    a = generate_dataset([fp], 30, seed=1)
    b = generate_dataset([fp], 30, seed=1)
    assert len(a) == 30
    assert all(0.0 <= r.target <= 1.0 for r in a.records)
    for ra, rb in zip(a.records, b.records):
        assert np.array_equal(ra.positions, rb.positions)
        assert ra.target == rb.target


def test_generate_dataset_records_full_coverage_when_generous():
    fp = generate_synthetic(1, 8, 8, seed=2)
    radio = RadioConfig(pathloss_threshold_db=200.0)
    ds = generate_dataset([fp], 5, seed=3, radio=radio)
    assert all(r.target == 1.0 for r in ds.records)


def test_train_memorizes_single_record():
    fp = generate_synthetic(1, 8, 8, seed=4)
    ds = generate_dataset([fp], 5, seed=5)
    ds.records = ds.records[:2] * 5  # tiny memorization set
    net = CoverageRegressor(seed=42)
    net, curves = train(net, ds, TrainConfig(epochs=200, lr=3e-3, val_split=0.2, seed=42))
    assert curves[-1][1] < 1e-3


def test_train_deterministic():
    fp = generate_synthetic(1, 8, 8, seed=4)
    ds = generate_dataset([fp], 16, seed=5)
    n1, c1 = train(CoverageRegressor(seed=42), ds, TrainConfig(epochs=3, seed=42))
    n2, c2 = train(CoverageRegressor(seed=42), ds, TrainConfig(epochs=3, seed=42))
    assert c1 == c2
    assert all(np.array_equal(n1.params[k], n2.params[k]) for k in n1.params)


def test_zero_learning_rate_freezes_loss():
    fp = generate_synthetic(1, 8, 8, seed=4)
    ds = generate_dataset([fp], 16, seed=5)
    _, curves = train(CoverageRegressor(seed=42), ds, TrainConfig(epochs=4, lr=0.0, seed=42))
    losses = [c[1] for c in curves]
    assert all(l == losses[0] for l in losses)


def test_model_roundtrip(tmp_path, net, sets):
    ap, ind = sets
    path = tmp_path / "model.json"
    save_model(net, path)
    back = load_model(path)
    assert forward(back, ap, ind) == forward(net, ap, ind)


def test_learned_provider_gradient_matches_fd():
    fp = generate_synthetic(1, 10, 10, seed=2)
    net = CoverageRegressor(seed=3)
    provider = LearnedRewardProvider(net, fp, seed=0)
    p = np.array([[4.0, 5.0, 1.5], [7.0, 3.0, 1.5]])
    grad = provider.gradient(fp, p)
    h = 1e-4
    for i in range(2):
        for c in range(2):
            up = p.copy(); up[i, c] += h
            dn = p.copy(); dn[i, c] -= h
            fd = (provider.value(fp, up) - provider.value(fp, dn)) / (2 * h)
            assert abs(grad[i, c] - fd) <= 1e-4 * max(abs(fd), 1e-3)
    assert np.all(grad[:, 2] == 0.0)


def test_normalize_coords_range():
    fp = generate_synthetic(1, 10, 8, seed=2)
    pts = np.array([[0.0, 0.0, 0.0], [10.0, 8.0, 3.0], [5.0, 4.0, 1.5]])
    out = normalize_coords(fp, pts, 2)
    assert np.allclose(out[0], [-1, -1])
    assert np.allclose(out[1], [1, 1])
    assert np.allclose(out[2], [0, 0])


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(lr=-1.0)
    with pytest.raises(ValueError):
        TrainConfig(val_split=1.5)
    with pytest.raises(ValueError):
        train(CoverageRegressor(), __import__("applan.reward_net", fromlist=["CoverageDataset"]).CoverageDataset(), TrainConfig())
