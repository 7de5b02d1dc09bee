"""Gibbs-target reward layer.

Two reward routes over the same link physics: the exact indicator reward used
for scoring and weighting, and a smooth logistic surrogate with a closed-form
gradient used wherever samplers need derivatives. Both are exactly
permutation invariant: deployments are put in a canonical row order before
any reduction, so reorderings run identical arithmetic.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .floorplan import CellKind, Deployment, FloorPlan, indoor_cells
from .metrics import TaskSpec
from .propagation import D0_M, LN10, RadioConfig, crossing_loss

__all__ = [
    "RewardConfig",
    "ExactRewardProvider",
    "SmoothRewardProvider",
    "exact_reward",
    "smooth_reward",
    "boltzmann_weight",
    "symmetrized_log_terms",
    "symmetrized_reward_stats",
    "permutation_set",
]


@dataclass
class RewardConfig:
    """Reward shape knobs plus the thresholds the indicators compare against."""

    radio: RadioConfig = field(default_factory=RadioConfig)
    beta: float = 1.0
    penalty_weight: float = 10.0
    sigmoid_temp: float = 2.0
    xi_db: float = 10.0
    t_min_bps: float = 1e6
    d_min_m: float = 0.0
    z_eval: float | None = None

    def __post_init__(self):
        if self.beta <= 0:
            raise ValueError("beta must be positive")
        if self.penalty_weight < 0:
            raise ValueError("penalty weight must be >= 0")
        if self.sigmoid_temp <= 0:
            raise ValueError("sigmoid temperature must be positive")

    @classmethod
    def from_task(cls, task: TaskSpec, radio: RadioConfig | None = None, **kw) -> "RewardConfig":
        return cls(
            radio=radio or RadioConfig(),
            xi_db=task.xi_db,
            t_min_bps=task.t_min_bps,
            d_min_m=task.d_min_m,
            **kw,
        )


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _as_batch(deployments) -> np.ndarray:
    arr = np.asarray(
        deployments.as_array() if isinstance(deployments, Deployment) else deployments,
        dtype=float,
    )
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError("expected (N, 3) or (B, N, 3) AP coordinates")
    return arr


def _canonical_sort(batch: np.ndarray):
    """Sort each deployment's rows lexicographically; return sorted batch and
    the inverse index map that restores input order."""
    b, n, _ = batch.shape
    sorted_batch = np.empty_like(batch)
    inverse = np.empty((b, n), dtype=np.int64)
    for i in range(b):
        order = np.lexsort((batch[i, :, 2], batch[i, :, 1], batch[i, :, 0]))
        sorted_batch[i] = batch[i, order]
        inverse[i] = np.argsort(order)
    return sorted_batch, inverse


def _link_fields(fp: FloorPlan, batch: np.ndarray, cfg: RewardConfig, want_grad: bool):
    """Pathloss (B, N, M) and, optionally, its position gradient (B, N, M, 3)
    for every AP-to-cell link. Wall crossings are piecewise constant in the
    AP position, so only the distance term carries gradient."""
    cells = indoor_cells(fp, cfg.z_eval)
    m = len(cells)
    if m == 0:
        raise ValueError("floorplan has no indoor cells")
    b, n, _ = batch.shape
    flat = batch.reshape(b * n, 3)
    diff = flat[:, None, :] - cells[None, :, :]
    d = np.sqrt((diff**2).sum(axis=2))
    d_eff = np.maximum(d, D0_M)
    radio = cfg.radio
    walls = crossing_loss(fp, flat[:, :2], cells[:, :2])
    pl = radio.reference_loss_db + 10.0 * radio.pathloss_exponent * np.log10(d_eff / D0_M) + walls
    grad = None
    if want_grad:
        coef = np.where(d > D0_M, 10.0 * radio.pathloss_exponent / (LN10 * d_eff**2), 0.0)
        grad = (coef[:, :, None] * diff).reshape(b, n, m, 3)
    return pl.reshape(b, n, m), grad, cells


def _geometry_penalty(fp: FloorPlan, batch: np.ndarray, cfg: RewardConfig,
                      want_grad: bool):
    """Separation and boundary penalties (already smooth) and their gradient."""
    b, n, _ = batch.shape
    values = np.zeros(b)
    grads = np.zeros_like(batch) if want_grad else None
    d_min = cfg.d_min_m

    if d_min > 0 and n > 1:
        diff = batch[:, :, None, :] - batch[:, None, :, :]
        dist = np.sqrt((diff**2).sum(axis=3))
        iu = np.triu_indices(n, k=1)
        hin = np.maximum(0.0, (d_min - dist) / d_min)
        scale = 2.0 / (n * (n - 1))
        values += scale * (hin[:, iu[0], iu[1]] ** 2).sum(axis=1)
        if want_grad:
            # coincident points get a zero subgradient, which also covers the diagonal
            safe = np.where(dist > 1e-12, dist, 1.0)
            coef = np.where(dist > 1e-12, -2.0 * hin / (d_min * safe), 0.0)
            pair_grad = coef[:, :, :, None] * diff
            grads += scale * pair_grad.sum(axis=2)

    # boundary: squared distance to the nearest feasible point, zero inside
    centers = fp.free_cell_centers()
    z_lo, z_hi = fp.z_bounds
    x_min, x_max, y_min, y_max = fp.bounds
    flat = batch.reshape(b * n, 3)
    ox, oy = fp.origin
    cs = fp.cell_size_m
    cols = np.floor((flat[:, 0] - ox) / cs).astype(np.int64)
    rows = np.floor((flat[:, 1] - oy) / cs).astype(np.int64)
    h, w = fp.grid.shape
    inside = (
        (flat[:, 0] >= x_min) & (flat[:, 0] <= x_max)
        & (flat[:, 1] >= y_min) & (flat[:, 1] <= y_max)
        & (flat[:, 2] >= z_lo) & (flat[:, 2] <= z_hi)
        & (cols >= 0) & (cols < w) & (rows >= 0) & (rows < h)
    )
    free = np.zeros(len(flat), dtype=bool)
    ok = inside.nonzero()[0]
    if len(ok):
        free[ok] = fp.grid[rows[ok], cols[ok]] == CellKind.FreeSpace
    feasible = inside & free
    e_b = np.zeros(len(flat))
    if not feasible.all():
        bad = (~feasible).nonzero()[0]
        pts = flat[bad]
        d2 = (
            (pts[:, 0:1] - centers[None, :, 0]) ** 2
            + (pts[:, 1:2] - centers[None, :, 1]) ** 2
        )
        nearest = np.argmin(d2, axis=1)
        proj = np.column_stack(
            [centers[nearest], np.clip(pts[:, 2], z_lo, z_hi)]
        )
        delta = pts - proj
        e_b[bad] = (delta**2).sum(axis=1)
        if want_grad:
            g = grads.reshape(b * n, 3)
            g[bad] += (2.0 / n) * delta
    values += e_b.reshape(b, n).sum(axis=1) / n
    return values, grads


def _exact_value_batch(fp: FloorPlan, batch: np.ndarray, cfg: RewardConfig) -> np.ndarray:
    """Mean joint indicator (covered, interference ok, throughput ok) minus
    the weighted geometry penalties, per deployment."""
    sorted_batch, _ = _canonical_sort(batch)
    pl, _, _ = _link_fields(fp, sorted_batch, cfg, want_grad=False)
    radio = cfg.radio
    best_pl = pl.min(axis=1)
    covered = best_pl <= radio.pathloss_threshold_db
    s = 10.0 ** ((radio.eirp_dbm - pl) / 10.0)
    idx = pl.argmin(axis=1)
    serving = np.take_along_axis(s, idx[:, None, :], axis=1)[:, 0, :]
    interference = s.sum(axis=1) - serving
    noise = radio.noise_power_mw
    with np.errstate(over="ignore"):
        xi_lin = noise * np.float64(10.0) ** np.float64(cfg.xi_db / 10.0)
    ok_i = interference <= xi_lin
    sinr = serving / (interference + noise)
    throughput = radio.bandwidth_hz * np.log2(1.0 + sinr)
    ok_t = throughput >= cfg.t_min_bps
    value = (covered & ok_i & ok_t).mean(axis=1)
    pen, _ = _geometry_penalty(fp, sorted_batch, cfg, want_grad=False)
    return value - cfg.penalty_weight * pen


def _smooth_value_grad_batch(fp: FloorPlan, batch: np.ndarray, cfg: RewardConfig,
                             want_grad: bool = True):
    """Smooth surrogate value and closed-form gradient for a (B, N, 3) batch.

    Every indicator becomes a logistic with shared temperature tau: coverage
    through a softmin of per-AP pathloss, interference and throughput through
    a softmax-weighted serving power. As tau shrinks the value approaches the
    exact reward away from the thresholds.
    """
    sorted_batch, inverse = _canonical_sort(batch)
    pl, dpl, _ = _link_fields(fp, sorted_batch, cfg, want_grad=want_grad)
    radio = cfg.radio
    tau = cfg.sigmoid_temp
    b, n, m = pl.shape

    a = -pl / tau
    a_max = a.max(axis=1, keepdims=True)
    ex = np.exp(a - a_max)
    ex_sum = ex.sum(axis=1, keepdims=True)
    wgt = ex / ex_sum                      # softmin weights (B, N, M)
    pl_soft = -tau * (np.log(ex_sum[:, 0, :]) + a_max[:, 0, :])

    u = (radio.pathloss_threshold_db - pl_soft) / tau
    cover = _sigmoid(u)

    s = 10.0 ** ((radio.eirp_dbm - pl) / 10.0)
    s_tot = s.sum(axis=1)
    s_serv = (wgt * s).sum(axis=1)
    interf = s_tot - s_serv
    noise = radio.noise_power_mw
    eps_i = noise * 1e-15
    i_rel_db = 10.0 * np.log10((interf + eps_i) / noise)
    v = (cfg.xi_db - i_rel_db) / tau
    intf_ok = _sigmoid(v)

    sinr = s_serv / (interf + noise)
    t_mbps = radio.bandwidth_hz * np.log2(1.0 + sinr) / 1e6
    t_min_mbps = cfg.t_min_bps / 1e6
    q = (t_mbps - t_min_mbps) / tau
    thr_ok = _sigmoid(q)

    prod = cover * intf_ok * thr_ok
    value = prod.mean(axis=1)
    pen, pen_grad = _geometry_penalty(fp, sorted_batch, cfg, want_grad=want_grad)
    value = value - cfg.penalty_weight * pen
    if not want_grad:
        return value, None

    sig_u = cover * (1.0 - cover)
    sig_v = intf_ok * (1.0 - intf_ok)
    sig_q = thr_ok * (1.0 - thr_ok)

    dcover = -(sig_u / tau)[:, None, :] * wgt
    ds_tot = -(LN10 / 10.0) * s
    ds_serv = -wgt * (s - s_serv[:, None, :]) / tau - (LN10 / 10.0) * wgt * s
    di = ds_tot - ds_serv
    didb = 10.0 / (LN10 * (interf + eps_i))
    dintf = (sig_v * (-1.0 / tau) * didb)[:, None, :] * di
    denom = interf + noise
    dsinr = (ds_serv * denom[:, None, :] - s_serv[:, None, :] * di) / (denom**2)[:, None, :]
    dt_mbps = (radio.bandwidth_hz / 1e6 / np.log(2.0) / (1.0 + sinr))[:, None, :] * dsinr
    dthr = (sig_q / tau)[:, None, :] * dt_mbps

    dprod = (
        dcover * (intf_ok * thr_ok)[:, None, :]
        + dintf * (cover * thr_ok)[:, None, :]
        + dthr * (cover * intf_ok)[:, None, :]
    )
    grad_sorted = np.einsum("bnm,bnmc->bnc", dprod, dpl) / m
    grad_sorted -= cfg.penalty_weight * pen_grad

    grad = np.take_along_axis(grad_sorted, inverse[:, :, None], axis=1)
    return value, grad


# -- spec operations ---------------------------------------------------------

def exact_reward(fp: FloorPlan, deployment, cfg: RewardConfig) -> float:
    """Fraction of indoor cells meeting coverage, interference, and
    throughput jointly, minus weighted geometry penalties."""
    return float(_exact_value_batch(fp, _as_batch(deployment), cfg)[0])


def smooth_reward(fp: FloorPlan, deployment, cfg: RewardConfig):
    """(value, gradient) of the differentiable surrogate; gradient is (N, 3)."""
    value, grad = _smooth_value_grad_batch(fp, _as_batch(deployment), cfg)
    return float(value[0]), grad[0]


def boltzmann_weight(r_value: float, beta: float) -> float:
    if beta <= 0:
        raise ValueError("beta must be positive")
    return float(np.exp(beta * r_value))


class SmoothRewardProvider:
    """RewardProvider backed by the analytic surrogate."""

    permutation_invariant = True  # canonical row sort makes this exact

    def __init__(self, cfg: RewardConfig):
        self.cfg = cfg

    def value(self, fp: FloorPlan, deployment) -> float:
        v, _ = _smooth_value_grad_batch(fp, _as_batch(deployment), self.cfg, want_grad=False)
        return float(v[0])

    def gradient(self, fp: FloorPlan, deployment) -> np.ndarray:
        _, g = _smooth_value_grad_batch(fp, _as_batch(deployment), self.cfg)
        return g[0]

    def value_batch(self, fp: FloorPlan, stack: np.ndarray) -> np.ndarray:
        v, _ = _smooth_value_grad_batch(fp, _as_batch(stack), self.cfg, want_grad=False)
        return v

    def value_and_gradient_batch(self, fp: FloorPlan, stack: np.ndarray):
        return _smooth_value_grad_batch(fp, _as_batch(stack), self.cfg)


class ExactRewardProvider:
    """RewardProvider with exact values. The exact reward is piecewise
    constant, so its reported gradient is the smooth surrogate's at the
    configured temperature."""

    permutation_invariant = True

    def __init__(self, cfg: RewardConfig):
        self.cfg = cfg

    def value(self, fp: FloorPlan, deployment) -> float:
        return float(_exact_value_batch(fp, _as_batch(deployment), self.cfg)[0])

    def gradient(self, fp: FloorPlan, deployment) -> np.ndarray:
        _, g = _smooth_value_grad_batch(fp, _as_batch(deployment), self.cfg)
        return g[0]

    def value_batch(self, fp: FloorPlan, stack: np.ndarray) -> np.ndarray:
        return _exact_value_batch(fp, _as_batch(stack), self.cfg)

    def value_and_gradient_batch(self, fp: FloorPlan, stack: np.ndarray):
        batch = _as_batch(stack)
        values = _exact_value_batch(fp, batch, self.cfg)
        _, grads = _smooth_value_grad_batch(fp, batch, self.cfg)
        return values, grads


# -- permutation symmetrization ----------------------------------------------

def permutation_set(n: int, budget: int, rng: np.random.Generator | None = None):
    """All N! orderings for small N, otherwise ``budget`` sampled uniformly."""
    if budget < 1:
        raise ValueError("perm_budget must be >= 1")
    if n <= 5:
        return [np.array(p, dtype=np.int64) for p in itertools.permutations(range(n))]
    rng = rng or np.random.default_rng(0)
    return [rng.permutation(n) for _ in range(budget)]


def symmetrized_log_terms(provider, fp, samples, beta, perm_budget=24,
                          rng=None, want_grad=False):
    """Per (sample, permutation) log Boltzmann weights beta*r and, optionally,
    reward gradients restored to canonical row order.

    Returns (log_w (S*P,), grads (S*P, N, 3) or None). Used by the samplers in
    log domain; the normalizing constant is never needed because every
    consumer takes ratios.
    """
    stack = _as_batch(np.asarray(samples, dtype=float))
    s, n, _ = stack.shape
    perms = permutation_set(n, perm_budget, rng)
    permuted = np.concatenate([stack[:, p, :] for p in perms], axis=0)

    batch_fn = getattr(provider, "value_and_gradient_batch", None)
    if want_grad and batch_fn is not None:
        values, grads = batch_fn(fp, permuted)
    elif not want_grad and hasattr(provider, "value_batch"):
        values = provider.value_batch(fp, permuted)
        grads = None
    else:
        values = np.array([provider.value(fp, row) for row in permuted])
        grads = (
            np.stack([np.asarray(provider.gradient(fp, row)) for row in permuted])
            if want_grad
            else None
        )
    log_w = beta * np.asarray(values, dtype=float)
    if grads is None:
        return log_w, None
    # row i of the gradient at pi(P) belongs to AP pi[i] of the original order
    restored = np.empty_like(grads)
    for k, p in enumerate(perms):
        blockslice = slice(k * s, (k + 1) * s)
        restored[blockslice][:, p, :] = grads[blockslice]
    return log_w, restored


def symmetrized_reward_stats(provider, fp, samples, beta, perm_budget=24, rng=None):
    """(sum of Boltzmann weights, sum of Boltzmann-weighted gradients) over
    all samples and permutations: Sum e^{beta r} and Sum grad e^{beta r}."""
    log_w, grads = symmetrized_log_terms(
        provider, fp, samples, beta, perm_budget, rng, want_grad=True
    )
    w = np.exp(log_w)
    weight_sum = float(w.sum())
    grad_sum = beta * np.einsum("s,snc->nc", w, grads)
    return weight_sum, grad_sum
