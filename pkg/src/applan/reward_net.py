"""Trainable permutation-invariant coverage regressor.

Two coordinate-set encoders (per-AP and per-indoor-point MLPs, mean pooled)
feed a small prediction head ending in a sigmoid. Forward, backward, and the
Adam optimizer are implemented from scratch on numpy so the input gradient
needed for reward-guided sampling is available in closed form.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .floorplan import Deployment, FloorPlan
from .propagation import RadioConfig, compute_radio_map, coverage_fraction

__all__ = [
    "CoverageRegressor",
    "TrainConfig",
    "CoverageDataset",
    "CoverageRecord",
    "forward",
    "position_gradient",
    "train",
    "generate_dataset",
    "save_model",
    "load_model",
    "normalize_coords",
    "LearnedRewardProvider",
]

AP_DIMS = (32, 64, 128)
INDOOR_DIMS = (16, 32, 64)
HEAD_DIMS = (256, 128, 64)
DROPOUT_P = 0.2


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-5
    epochs: int = 100
    batch_size: int = 16
    val_split: float = 0.4
    seed: int = 42

    def __post_init__(self):
        if self.lr < 0:
            raise ValueError("lr must be >= 0")
        if not 0 < self.val_split < 1:
            raise ValueError("val_split must be in (0, 1)")


def _kaiming_uniform(rng: np.random.Generator, fan_out: int, fan_in: int) -> np.ndarray:
    bound = np.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=(fan_out, fan_in))


class CoverageRegressor:
    """Predicts the covered fraction of a floor plan from AP and indoor-point
    coordinate sets, both normalized to [-1, 1]. Exactly invariant to row
    order in either set: rows are canonically sorted before pooling."""

    def __init__(self, coord_dim: int = 2, seed: int = 42):
        if coord_dim not in (2, 3):
            raise ValueError("coord_dim must be 2 or 3")
        self.coord_dim = coord_dim
        self.seed = seed
        rng = np.random.default_rng(seed)
        self.params: dict[str, np.ndarray] = {}
        dims = (coord_dim,) + AP_DIMS
        for i in range(3):
            self.params[f"ap_W{i}"] = _kaiming_uniform(rng, dims[i + 1], dims[i])
            self.params[f"ap_b{i}"] = np.zeros(dims[i + 1])
        dims = (coord_dim,) + INDOOR_DIMS
        for i in range(3):
            self.params[f"in_W{i}"] = _kaiming_uniform(rng, dims[i + 1], dims[i])
            self.params[f"in_b{i}"] = np.zeros(dims[i + 1])
        dims = (AP_DIMS[-1] + INDOOR_DIMS[-1],) + HEAD_DIMS + (1,)
        for i in range(4):
            self.params[f"hd_W{i}"] = _kaiming_uniform(rng, dims[i + 1], dims[i])
            self.params[f"hd_b{i}"] = np.zeros(dims[i + 1])

    # -- forward -----------------------------------------------------------

    def _forward(self, ap_x: np.ndarray, in_x: np.ndarray, train: bool = False,
                 dropout_rng: np.random.Generator | None = None):
        """Returns (output scalar, cache). Rows of both sets are sorted so the
        mean-pool reductions run in a canonical order."""
        p = self.params
        ap_x = np.asarray(ap_x, dtype=float)
        in_x = np.asarray(in_x, dtype=float)
        if ap_x.ndim != 2 or ap_x.shape[1] != self.coord_dim:
            raise ValueError(f"AP coordinates must be (N, {self.coord_dim})")
        if in_x.ndim != 2 or in_x.shape[1] != self.coord_dim:
            raise ValueError(f"indoor samples must be (K, {self.coord_dim})")
        ap_order = np.lexsort(tuple(ap_x[:, c] for c in reversed(range(self.coord_dim))))
        in_order = np.lexsort(tuple(in_x[:, c] for c in reversed(range(self.coord_dim))))
        a0 = ap_x[ap_order]
        i0 = in_x[in_order]

        cache = {"ap_order": ap_order, "in_order": in_order, "a0": a0, "i0": i0,
                 "train": train}
        h = a0
        for i in range(3):
            z = h @ p[f"ap_W{i}"].T + p[f"ap_b{i}"]
            h_next = np.maximum(z, 0.0)
            cache[f"ap_z{i}"], cache[f"ap_h{i}"] = z, h
            h = h_next
        cache["ap_out"] = h
        f_ap = h.mean(axis=0)

        h = i0
        for i in range(3):
            z = h @ p[f"in_W{i}"].T + p[f"in_b{i}"]
            cache[f"in_z{i}"], cache[f"in_h{i}"] = z, h
            h = np.maximum(z, 0.0) if i < 2 else z
        cache["in_out"] = h
        f_in = h.mean(axis=0)

        z = np.concatenate([f_ap, f_in])
        cache["z"] = z
        h = z
        for i in range(4):
            pre = h @ p[f"hd_W{i}"].T + p[f"hd_b{i}"]
            cache[f"hd_pre{i}"], cache[f"hd_in{i}"] = pre, h
            if i < 3:
                h = np.maximum(pre, 0.0)
                if i < 2:
                    if train:
                        mask = (dropout_rng.random(h.shape) >= DROPOUT_P) / (1.0 - DROPOUT_P)
                    else:
                        mask = np.ones_like(h)
                    cache[f"hd_mask{i}"] = mask
                    h = h * mask
            else:
                h = pre
        out = 1.0 / (1.0 + np.exp(-h[0]))
        cache["out"] = out
        return float(out), cache

    def _backward(self, cache, dout: float, want_input_grad: bool = False,
                  want_param_grad: bool = True):
        """Backpropagate d(loss)/d(output); returns (param grads, AP input grad)."""
        p = self.params
        grads = {k: np.zeros_like(v) for k, v in p.items()} if want_param_grad else None
        out = cache["out"]
        dpre = np.array([dout * out * (1.0 - out)])

        dh = dpre
        for i in reversed(range(4)):
            pre, hin = cache[f"hd_pre{i}"], cache[f"hd_in{i}"]
            if i < 3:
                if i < 2:
                    dh = dh * cache[f"hd_mask{i}"]
                dh = dh * (pre > 0)
            if want_param_grad:
                grads[f"hd_W{i}"] += np.outer(dh, hin)
                grads[f"hd_b{i}"] += dh
            dh = dh @ p[f"hd_W{i}"]
        dz = dh
        df_ap = dz[: AP_DIMS[-1]]
        df_in = dz[AP_DIMS[-1]:]

        n_ap = cache["ap_out"].shape[0]
        dh = np.repeat(df_ap[None, :] / n_ap, n_ap, axis=0)
        for i in reversed(range(3)):
            dh = dh * (cache[f"ap_z{i}"] > 0)
            if want_param_grad:
                grads[f"ap_W{i}"] += dh.T @ cache[f"ap_h{i}"]
                grads[f"ap_b{i}"] += dh.sum(axis=0)
            dh = dh @ p[f"ap_W{i}"]
        d_ap_sorted = dh

        n_in = cache["in_out"].shape[0]
        dh = np.repeat(df_in[None, :] / n_in, n_in, axis=0)
        for i in reversed(range(3)):
            if i < 2:
                dh = dh * (cache[f"in_z{i}"] > 0)
            if want_param_grad:
                grads[f"in_W{i}"] += dh.T @ cache[f"in_h{i}"]
                grads[f"in_b{i}"] += dh.sum(axis=0)
            dh = dh @ p[f"in_W{i}"]

        ap_grad = None
        if want_input_grad:
            ap_grad = np.empty_like(d_ap_sorted)
            ap_grad[cache["ap_order"]] = d_ap_sorted
        return grads, ap_grad


def forward(net: CoverageRegressor, ap_coords: np.ndarray, indoor_samples: np.ndarray) -> float:
    """Predicted coverage in (0, 1); inference mode, dropout off."""
    value, _ = net._forward(ap_coords, indoor_samples, train=False)
    return value


def position_gradient(net: CoverageRegressor, ap_coords: np.ndarray,
                      indoor_samples: np.ndarray) -> np.ndarray:
    """Exact d(output)/d(AP coordinates), shape (N, coord_dim)."""
    _, cache = net._forward(ap_coords, indoor_samples, train=False)
    _, ap_grad = net._backward(cache, 1.0, want_input_grad=True, want_param_grad=False)
    return ap_grad


# -- dataset ----------------------------------------------------------------

@dataclass
class CoverageRecord:
    floorplan: str
    positions: np.ndarray      # world (N, 3)
    ap_norm: np.ndarray        # (N, coord_dim)
    indoor_norm: np.ndarray    # (K, coord_dim)
    target: float


@dataclass
class CoverageDataset:
    records: list = field(default_factory=list)
    coord_dim: int = 2

    def __len__(self):
        return len(self.records)


def normalize_coords(fp: FloorPlan, xyz: np.ndarray, coord_dim: int = 2) -> np.ndarray:
    """Affine map of world coordinates into [-1, 1] per floor plan bounds."""
    x_min, x_max, y_min, y_max = fp.bounds
    z_lo, z_hi = fp.z_bounds
    lo = np.array([x_min, y_min, z_lo])
    hi = np.array([x_max, y_max, z_hi])
    arr = np.asarray(xyz, dtype=float)
    out = 2.0 * (arr - lo) / (hi - lo) - 1.0
    return out[:, :coord_dim]


def sample_feasible_positions(fp: FloorPlan, n: int, rng: np.random.Generator) -> np.ndarray:
    """Uniform draws over the free area: random free cell, uniform offset inside."""
    centers = fp.free_cell_centers()
    if len(centers) == 0:
        raise ValueError("floorplan has no feasible cells")
    idx = rng.integers(0, len(centers), size=n)
    jitter = rng.uniform(-0.5, 0.5, size=(n, 2)) * fp.cell_size_m * 0.98
    xy = centers[idx] + jitter
    return np.column_stack([xy, np.full(n, fp.z_eval)])


def generate_dataset(floorplans, n_records: int, seed: int,
                     radio: RadioConfig | None = None, coord_dim: int = 2,
                     n_ap_range: tuple[int, int] = (1, 4),
                     indoor_samples: int = 256) -> CoverageDataset:
    """Label uniformly sampled feasible deployments with verifier coverage.

    Each floor plan gets one fixed indoor sample set reused by all of its
    records. Deterministic per seed.
    """
    if n_records < 1:
        raise ValueError("n_records must be >= 1")
    radio = radio or RadioConfig()
    rng = np.random.default_rng(seed)
    indoor_sets = {}
    for fp in floorplans:
        centers = fp.free_cell_centers()
        take = rng.integers(0, len(centers), size=indoor_samples)
        pts = np.column_stack([centers[take], np.full(indoor_samples, fp.z_eval)])
        indoor_sets[fp.name] = normalize_coords(fp, pts, coord_dim)
    dataset = CoverageDataset(coord_dim=coord_dim)
    for _ in range(n_records):
        fp = floorplans[int(rng.integers(0, len(floorplans)))]
        n = int(rng.integers(n_ap_range[0], n_ap_range[1] + 1))
        positions = sample_feasible_positions(fp, n, rng)
        cov = coverage_fraction(compute_radio_map(fp, Deployment(positions), radio))
        dataset.records.append(
            CoverageRecord(
                floorplan=fp.name,
                positions=positions,
                ap_norm=normalize_coords(fp, positions, coord_dim),
                indoor_norm=indoor_sets[fp.name],
                target=cov,
            )
        )
    return dataset


# -- training ----------------------------------------------------------------

class _Adam:
    def __init__(self, params, lr, weight_decay, beta1=0.9, beta2=0.999, eps=1e-8):
        self.lr = lr
        self.wd = weight_decay
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            self.m[k] = self.beta1 * self.m[k] + (1.0 - self.beta1) * g
            self.v[k] = self.beta2 * self.v[k] + (1.0 - self.beta2) * g**2
            update = (self.m[k] / b1c) / (np.sqrt(self.v[k] / b2c) + self.eps)
            # decoupled weight decay, applied outside the adaptive step
            params[k] -= self.lr * (update + self.wd * params[k])


def dataset_mse(net: CoverageRegressor, records) -> float:
    if not records:
        return float("nan")
    errs = [
        (forward(net, r.ap_norm, r.indoor_norm) - r.target) ** 2 for r in records
    ]
    return float(np.mean(errs))


def train(net: CoverageRegressor, dataset: CoverageDataset, cfg: TrainConfig):
    """Adam-on-MSE training loop; returns (net, per-epoch loss curves).

    Deterministic for a fixed config seed: the split, the shuffles, and the
    dropout masks all derive from it.
    """
    if len(dataset) == 0:
        raise ValueError("dataset is empty")
    rng = np.random.default_rng(cfg.seed)
    order = rng.permutation(len(dataset))
    n_val = int(round(cfg.val_split * len(dataset)))
    val_records = [dataset.records[i] for i in order[:n_val]]
    train_records = [dataset.records[i] for i in order[n_val:]]
    if not train_records:
        raise ValueError("dataset too small for the requested validation split")

    optimizer = _Adam(net.params, cfg.lr, cfg.weight_decay)
    dropout_rng = np.random.default_rng(rng.integers(2**63))
    curves = []
    for epoch in range(cfg.epochs):
        perm = rng.permutation(len(train_records))
        for start in range(0, len(perm), cfg.batch_size):
            batch = [train_records[i] for i in perm[start : start + cfg.batch_size]]
            grads = {k: np.zeros_like(v) for k, v in net.params.items()}
            for rec in batch:
                out, cache = net._forward(
                    rec.ap_norm, rec.indoor_norm, train=True, dropout_rng=dropout_rng
                )
                dloss = 2.0 * (out - rec.target) / len(batch)
                g, _ = net._backward(cache, dloss)
                for k in grads:
                    grads[k] += g[k]
            if cfg.lr > 0:
                optimizer.step(net.params, grads)
        curves.append(
            (epoch, dataset_mse(net, train_records), dataset_mse(net, val_records))
        )
    return net, curves


# -- persistence --------------------------------------------------------------

def save_model(net: CoverageRegressor, path) -> None:
    doc = {
        "version": 1,
        "coord_dim": net.coord_dim,
        "seed": net.seed,
        "params": {k: v.tolist() for k, v in net.params.items()},
    }
    with open(path, "w") as fh:
        json.dump(doc, fh)


def load_model(path) -> CoverageRegressor:
    with open(path) as fh:
        doc = json.load(fh)
    net = CoverageRegressor(coord_dim=int(doc["coord_dim"]), seed=int(doc["seed"]))
    for k, v in doc["params"].items():
        arr = np.asarray(v, dtype=float)
        if net.params[k].shape != arr.shape:
            raise ValueError(f"model file parameter {k} has wrong shape")
        net.params[k] = arr
    return net


# -- reward provider over the learned net -------------------------------------

class LearnedRewardProvider:
    """RewardProvider view of a trained net, bound to one floor plan.

    Values are predicted coverage; gradients are the exact input gradients
    chained through the [-1, 1] normalization. The z column is zero in 2D.
    """

    permutation_invariant = True

    def __init__(self, net: CoverageRegressor, fp: FloorPlan,
                 indoor_norm: np.ndarray | None = None, indoor_samples: int = 256,
                 seed: int = 0):
        self.net = net
        self.fp = fp
        if indoor_norm is None:
            rng = np.random.default_rng(seed)
            centers = fp.free_cell_centers()
            take = rng.integers(0, len(centers), size=indoor_samples)
            pts = np.column_stack([centers[take], np.full(indoor_samples, fp.z_eval)])
            indoor_norm = normalize_coords(fp, pts, net.coord_dim)
        self.indoor_norm = indoor_norm
        x_min, x_max, y_min, y_max = fp.bounds
        z_lo, z_hi = fp.z_bounds
        self._span = np.array([x_max - x_min, y_max - y_min, z_hi - z_lo])

    def value(self, fp: FloorPlan, deployment) -> float:
        arr = deployment.as_array() if isinstance(deployment, Deployment) else np.asarray(deployment, float)
        return forward(self.net, normalize_coords(self.fp, arr, self.net.coord_dim), self.indoor_norm)

    def gradient(self, fp: FloorPlan, deployment) -> np.ndarray:
        arr = deployment.as_array() if isinstance(deployment, Deployment) else np.asarray(deployment, float)
        g_norm = position_gradient(
            self.net, normalize_coords(self.fp, arr, self.net.coord_dim), self.indoor_norm
        )
        out = np.zeros((len(arr), 3))
        dim = self.net.coord_dim
        out[:, :dim] = g_norm * (2.0 / self._span[:dim])
        return out

    def value_batch(self, fp: FloorPlan, stack) -> np.ndarray:
        arr = np.asarray(stack, dtype=float)
        if arr.ndim == 2:
            arr = arr[None]
        return np.array([self.value(fp, row) for row in arr])

    def value_and_gradient_batch(self, fp: FloorPlan, stack):
        arr = np.asarray(stack, dtype=float)
        if arr.ndim == 2:
            arr = arr[None]
        values = np.array([self.value(fp, row) for row in arr])
        grads = np.stack([self.gradient(fp, row) for row in arr])
        return values, grads
