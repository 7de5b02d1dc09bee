"""Generative planners over the Gibbs reward target.

Three samplers share one normalized coordinate frame: sequential Monte Carlo
with Gaussian random-walk proposals, SMC with Langevin proposals, and reverse
variance-exploding diffusion guided by a Monte Carlo estimate of the
reward-induced score. A projected gradient-ascent baseline rounds out the
set. All of them are pure functions of their inputs and seed.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .floorplan import Deployment, FloorPlan, Position, project_to_feasible
from .metrics import TaskSpec
from .reward import permutation_set

__all__ = [
    "NoiseSchedule",
    "geometric_schedule",
    "CoordinateMap",
    "coordinate_map",
    "ess",
    "SamplerConfig",
    "ParticleEnsemble",
    "PlanResult",
    "ScoreUnderflowError",
    "estimate_score",
    "score_from_samples",
    "smc_gaussian",
    "smc_langevin",
    "diffusion_sample",
    "gradient_ascent",
    "trace_to_csv",
    "trajectories_to_csv",
]

NORM_CLIP = 3.0  # initial N(0, I) draws and diffusion states live in this box


def _logsumexp(a: np.ndarray, axis=None):
    m = np.max(a, axis=axis, keepdims=True)
    out = m + np.log(np.sum(np.exp(a - m), axis=axis, keepdims=True))
    return out if axis is None else np.squeeze(out, axis=axis)


@dataclass
class NoiseSchedule:
    """Strictly increasing noise scales sigma_1..sigma_T for the VE process."""

    sigmas: np.ndarray

    def __post_init__(self):
        s = np.asarray(self.sigmas, dtype=float)
        if s.ndim != 1 or len(s) < 1:
            raise ValueError("schedule needs at least one sigma")
        if np.any(s <= 0) or np.any(np.diff(s) <= 0):
            raise ValueError("sigmas must be positive and strictly increasing")
        self.sigmas = s

    def __len__(self):
        return len(self.sigmas)

    def variance_steps(self) -> np.ndarray:
        """Delta_t = sigma_t^2 - sigma_{t-1}^2 with sigma_0 = 0."""
        var = self.sigmas**2
        return np.diff(np.concatenate([[0.0], var]))


def geometric_schedule(steps: int = 100, sigma_min: float = 1e-3,
                       sigma_max: float = 2.0) -> NoiseSchedule:
    """Log-linear interpolation from sigma_min up to sigma_max."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    if steps == 1:
        return NoiseSchedule(np.array([sigma_max]))
    return NoiseSchedule(np.geomspace(sigma_min, sigma_max, steps))


@dataclass
class CoordinateMap:
    """Affine bijection between the floor plan bounding box and [-1, 1]^dim."""

    center: np.ndarray
    half_extent: np.ndarray
    z_eval: float

    def to_normalized(self, world: np.ndarray) -> np.ndarray:
        arr = np.asarray(world, dtype=float)
        dim = len(self.center)
        return (arr[..., :dim] - self.center) / self.half_extent

    def to_world(self, normalized: np.ndarray) -> np.ndarray:
        u = np.asarray(normalized, dtype=float)
        dim = len(self.center)
        world = self.center + u * self.half_extent
        if dim == 2:
            z = np.full(world.shape[:-1] + (1,), self.z_eval)
            world = np.concatenate([world, z], axis=-1)
        return world

    @property
    def dim(self) -> int:
        return len(self.center)


def coordinate_map(fp: FloorPlan, coord_dim: int = 2) -> CoordinateMap:
    x_min, x_max, y_min, y_max = fp.bounds
    z_lo, z_hi = fp.z_bounds
    if x_max - x_min <= 0 or y_max - y_min <= 0 or z_hi - z_lo <= 0:
        raise ValueError("floorplan has zero extent")
    if coord_dim == 2:
        center = np.array([(x_min + x_max) / 2, (y_min + y_max) / 2])
        half = np.array([(x_max - x_min) / 2, (y_max - y_min) / 2])
    elif coord_dim == 3:
        center = np.array([(x_min + x_max) / 2, (y_min + y_max) / 2, (z_lo + z_hi) / 2])
        half = np.array([(x_max - x_min) / 2, (y_max - y_min) / 2, (z_hi - z_lo) / 2])
    else:
        raise ValueError("coord_dim must be 2 or 3")
    return CoordinateMap(center=center, half_extent=half, z_eval=fp.z_eval)


def ess(log_weights: np.ndarray) -> float:
    """Effective sample size 1 / sum(w^2) of normalized weights, in [1, K]."""
    lw = np.asarray(log_weights, dtype=float)
    lw = lw - _logsumexp(lw)
    return float(np.exp(-_logsumexp(2.0 * lw)))


@dataclass
class SamplerConfig:
    particles: int = 10
    mc_samples: int = 10
    steps: int = 100
    beta: float = 1.0
    proposal_std: float = 0.1
    langevin_step: float = 0.01
    ess_threshold: Optional[float] = None  # defaults to particles / 2
    perm_budget: int = 24
    seed: int = 0
    coord_dim: int = 2
    n_aps: int = 1
    sigma_min: float = 1e-3
    sigma_max: float = 2.0
    weight_update: str = "incremental"  # or "cumulative", the literal rule
    ga_step: float = 0.05
    clip: float = NORM_CLIP
    drift_cap: float = 3.0  # per-step drift norm limit, in units of sqrt(Delta_t)
    record_history: bool = True

    def __post_init__(self):
        for name in ("particles", "mc_samples", "steps", "perm_budget", "n_aps"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.beta <= 0 or self.proposal_std < 0 or self.langevin_step < 0:
            raise ValueError("beta must be positive; step sizes non-negative")
        if self.ess_threshold is not None and self.ess_threshold > self.particles:
            raise ValueError("ess_threshold cannot exceed the particle count")
        if self.weight_update not in ("incremental", "cumulative"):
            raise ValueError("weight_update must be 'incremental' or 'cumulative'")

    @property
    def resample_below(self) -> float:
        return self.particles / 2 if self.ess_threshold is None else self.ess_threshold


@dataclass
class ParticleEnsemble:
    """K candidate deployments in normalized coordinates plus log weights."""

    particles: np.ndarray       # (K, N, dim)
    log_weights: np.ndarray     # (K,)
    iteration: int = 0

    def __post_init__(self):
        self.log_weights = self.log_weights - _logsumexp(self.log_weights)

    @property
    def weights(self) -> np.ndarray:
        return np.exp(self.log_weights)

    def weighted_mean(self) -> np.ndarray:
        return np.einsum("k,knd->nd", self.weights, self.particles)


@dataclass
class TraceRow:
    iteration: int
    best_reward: float
    mean_reward: float
    ess: float


@dataclass
class PlanResult:
    best: Deployment
    best_reward: float
    mean_deployment: Deployment
    ensemble: ParticleEnsemble
    trace: list
    runtime_s: float
    iterations: int
    early_stopped: bool = False
    history: Optional[list] = None


class ScoreUnderflowError(RuntimeError):
    def __init__(self, max_log_weight: float):
        super().__init__(
            f"score underflow: largest stabilized log weight is {max_log_weight!r}"
        )
        self.max_log_weight = max_log_weight


# -- normalized objective ------------------------------------------------------

class _Objective:
    """World-coordinate reward provider viewed from normalized coordinates.

    Gradients are chained through the affine map; the z slot is pinned to the
    evaluation height when sampling in 2D.
    """

    def __init__(self, provider, fp: FloorPlan, cmap: CoordinateMap, beta: float,
                 perm_budget: int):
        self.provider = provider
        self.fp = fp
        self.cmap = cmap
        self.beta = beta
        self.perm_budget = perm_budget
        self.invariant = bool(getattr(provider, "permutation_invariant", False))

    def value_batch(self, u: np.ndarray) -> np.ndarray:
        world = self.cmap.to_world(u)
        if hasattr(self.provider, "value_batch"):
            return np.asarray(self.provider.value_batch(self.fp, world), dtype=float)
        return np.array([self.provider.value(self.fp, row) for row in world])

    def value(self, u: np.ndarray) -> float:
        return float(self.value_batch(u[None])[0])

    def value_and_gradient_batch(self, u: np.ndarray):
        world = self.cmap.to_world(u)
        if hasattr(self.provider, "value_and_gradient_batch"):
            values, grads = self.provider.value_and_gradient_batch(self.fp, world)
        else:
            values = np.array([self.provider.value(self.fp, row) for row in world])
            grads = np.stack(
                [np.asarray(self.provider.gradient(self.fp, row)) for row in world]
            )
        dim = self.cmap.dim
        grads = np.asarray(grads, dtype=float)[..., :dim] * self.half_scale
        return np.asarray(values, dtype=float), grads

    def gradient(self, u: np.ndarray) -> np.ndarray:
        _, g = self.value_and_gradient_batch(u[None])
        return g[0]

    @property
    def half_scale(self) -> np.ndarray:
        return self.cmap.half_extent

    def log_alpha_batch(self, u: np.ndarray) -> np.ndarray:
        """Log of the permutation-symmetrized Boltzmann factor per particle:
        log mean_pi exp(beta r(pi(P))). For an exactly invariant provider all
        terms coincide, so this equals beta r directly."""
        if self.invariant:
            return self.beta * self.value_batch(u)
        n = u.shape[1]
        perms = permutation_set(n, self.perm_budget)
        vals = np.stack([self.value_batch(u[:, p, :]) for p in perms])
        return _logsumexp(self.beta * vals, axis=0) - np.log(len(perms))


def _wrap_objective(provider, fp, cfg: SamplerConfig):
    # toy objectives expose value/gradient without a floor plan argument
    if fp is None:
        return _bare_objective(provider, cfg)
    cmap = coordinate_map(fp, cfg.coord_dim)
    return _Objective(provider, fp, cmap, cfg.beta, cfg.perm_budget)


class _bare_objective:
    """Adapter for objectives already living in sampling coordinates."""

    def __init__(self, provider, cfg: SamplerConfig):
        self.provider = provider
        self.beta = cfg.beta
        self.perm_budget = cfg.perm_budget
        self.invariant = bool(getattr(provider, "permutation_invariant", False))
        self.cmap = None

    def value_batch(self, u):
        if hasattr(self.provider, "value_batch"):
            return np.asarray(self.provider.value_batch(u), dtype=float)
        return np.array([self.provider.value(row) for row in u])

    def value(self, u):
        return float(self.value_batch(u[None])[0])

    def value_and_gradient_batch(self, u):
        if hasattr(self.provider, "value_and_gradient_batch"):
            values, grads = self.provider.value_and_gradient_batch(u)
            return np.asarray(values, float), np.asarray(grads, float)
        values = np.array([self.provider.value(row) for row in u])
        grads = np.stack([np.asarray(self.provider.gradient(row)) for row in u])
        return values, grads

    def gradient(self, u):
        _, g = self.value_and_gradient_batch(u[None])
        return g[0]

    def log_alpha_batch(self, u):
        if self.invariant:
            return self.beta * self.value_batch(u)
        n = u.shape[1]
        perms = permutation_set(n, self.perm_budget)
        vals = np.stack([self.value_batch(u[:, p, :]) for p in perms])
        return _logsumexp(self.beta * vals, axis=0) - np.log(len(perms))


# -- score estimation ----------------------------------------------------------

def score_from_samples(objective, samples: np.ndarray, beta: float,
                       perm_budget: int = 24) -> np.ndarray:
    """Self-normalized score estimate from pre-drawn clean samples.

    Implements sum_j sum_pi grad e^{beta r(pi(y_j))} over the matching weight
    sum, stabilized by a max shift so the ratio never sees raw exponentials.
    Gradients of permuted inputs are restored to canonical row order.
    """
    samples = np.asarray(samples, dtype=float)
    n = samples.shape[1]
    if getattr(objective, "invariant", False):
        perms = [np.arange(n)]
    else:
        perms = permutation_set(n, perm_budget)
    stacked = np.concatenate([samples[:, p, :] for p in perms], axis=0)
    values, grads = objective.value_and_gradient_batch(stacked)
    restored = np.empty_like(grads)
    s = len(samples)
    for k, p in enumerate(perms):
        blk = slice(k * s, (k + 1) * s)
        restored[blk][:, p, :] = grads[blk]
    log_w = beta * values
    m = float(np.max(log_w))
    if not np.isfinite(m):
        raise ScoreUnderflowError(m)
    w = np.exp(log_w - m)
    denom = w.sum()
    return beta * np.einsum("s,snd->nd", w, restored) / denom


def estimate_score(objective, p_t: np.ndarray, sigma_t: float, cfg: SamplerConfig,
                   rng: np.random.Generator | None = None) -> np.ndarray:
    """Monte Carlo estimate of grad log p_t at one noisy configuration.

    Draws cfg.mc_samples points from N(p_t, sigma_t^2 I) and returns the
    permutation-symmetrized self-normalized ratio of reward-weighted
    gradients. The Gibbs normalizing constant cancels in the ratio.
    """
    rng = rng or np.random.default_rng(cfg.seed)
    p_t = np.asarray(p_t, dtype=float)
    eps = rng.standard_normal((cfg.mc_samples,) + p_t.shape)
    samples = p_t[None] + sigma_t * eps
    return score_from_samples(objective, samples, cfg.beta, cfg.perm_budget)


# -- shared bookkeeping ---------------------------------------------------------

class _RunState:
    """Best-so-far tracking, trace, optional history, and early stopping."""

    def __init__(self, objective, fp, task: Optional[TaskSpec], cfg: SamplerConfig,
                 exact_provider=None):
        self.objective = objective
        self.fp = fp
        self.task = task
        self.cfg = cfg
        self.exact_provider = exact_provider
        self.trace: list[TraceRow] = []
        self.history = [] if cfg.record_history else None
        self.best_value = -np.inf
        self.best_world: Optional[np.ndarray] = None
        self.stop = False

    def _repair(self, world: np.ndarray) -> np.ndarray:
        if self.fp is None:
            return world
        out = world.copy()
        for i, row in enumerate(world):
            out[i] = project_to_feasible(self.fp, Position(*row))
        return out

    def observe(self, iteration: int, particles: np.ndarray, values: np.ndarray,
                log_weights: np.ndarray) -> None:
        cand = int(np.argmax(values))
        if self.objective.cmap is not None:
            # one verifier check per iteration: the sampler's preferred
            # particle is repaired and scored exactly
            world = self._repair(self.objective.cmap.to_world(particles[cand]))
            if self.exact_provider is not None:
                score = float(self.exact_provider.value(self.fp, world))
            else:
                score = float(self.objective.value_batch(
                    self.objective.cmap.to_normalized(world)[None])[0])
        else:
            world = particles[cand]
            score = float(values[cand])
        if score > self.best_value:
            self.best_value = score
            self.best_world = world
        self.trace.append(
            TraceRow(iteration, self.best_value, float(values.mean()), ess(log_weights))
        )
        if self.history is not None:
            self.history.append(
                ParticleEnsemble(particles.copy(), log_weights.copy(), iteration)
            )
        if self.task is not None and self.best_value >= self.task.coverage_target:
            self.stop = True

    def scan_ensemble(self, particles: np.ndarray) -> None:
        """Exact-score every particle of a final ensemble; the reported plan
        is the best particle under the exact reward."""
        if self.objective.cmap is None or self.exact_provider is None:
            return
        worlds = np.stack(
            [self._repair(self.objective.cmap.to_world(p)) for p in particles]
        )
        scores = np.asarray(self.exact_provider.value_batch(self.fp, worlds))
        cand = int(np.argmax(scores))
        if scores[cand] > self.best_value:
            self.best_value = float(scores[cand])
            self.best_world = worlds[cand]

    def finish(self, particles, log_weights, iteration, t0) -> PlanResult:
        ensemble = ParticleEnsemble(particles, log_weights, iteration)
        if self.objective.cmap is not None:
            mean_world = self.objective.cmap.to_world(ensemble.weighted_mean())
        else:
            mean_world = ensemble.weighted_mean()
            if mean_world.shape[-1] == 2:
                mean_world = np.concatenate(
                    [mean_world, np.zeros(mean_world.shape[:-1] + (1,))], axis=-1
                )
        best_world = self.best_world
        if best_world is None:
            best_world = mean_world
        if best_world.shape[-1] == 2:
            best_world = np.concatenate(
                [best_world, np.zeros(best_world.shape[:-1] + (1,))], axis=-1
            )
        return PlanResult(
            best=Deployment(np.atleast_2d(best_world)),
            best_reward=self.best_value,
            mean_deployment=Deployment(np.atleast_2d(mean_world)),
            ensemble=ensemble,
            trace=self.trace,
            runtime_s=time.perf_counter() - t0,
            iterations=iteration,
            early_stopped=self.stop,
            history=self.history,
        )


# -- SMC samplers ---------------------------------------------------------------

def _langevin_log_kernel(x_from, x_to, drift_from, eta):
    """log N(x_to; x_from + eta * drift_from, 2 eta I) up to the shared constant."""
    resid = x_to - x_from - eta * drift_from
    return -np.sum(resid**2, axis=(1, 2)) / (4.0 * eta)


def _run_smc(fp, provider, cfg: SamplerConfig, task, kernel: str, exact_provider):
    objective = _wrap_objective(provider, fp, cfg)
    n = task.n_aps if task is not None else cfg.n_aps
    dim = cfg.coord_dim
    k = cfg.particles
    rng = np.random.default_rng(cfg.seed)
    t0 = time.perf_counter()

    u = rng.standard_normal((k, n, dim))
    log_w = np.full(k, -np.log(k))
    log_alpha_prev = objective.log_alpha_batch(u)
    grad_prev = None
    if kernel == "langevin":
        _, grad_prev = objective.value_and_gradient_batch(u)

    state = _RunState(objective, fp, task, cfg, exact_provider)
    state.observe(0, u, log_alpha_prev / cfg.beta, log_w)
    iteration = 0
    for iteration in range(1, cfg.steps + 1):
        if state.stop:
            iteration -= 1
            break
        noise = rng.standard_normal((k, n, dim))
        if kernel == "gaussian":
            v = u + cfg.proposal_std * noise
        else:
            v = u + cfg.langevin_step * grad_prev + np.sqrt(2.0 * cfg.langevin_step) * noise

        log_alpha_new = objective.log_alpha_batch(v)
        if cfg.weight_update == "cumulative":
            # the literal rule: multiply by the full Boltzmann factor each step
            log_w = log_w + log_alpha_new
            grad_new = None
            if kernel == "langevin":
                _, grad_new = objective.value_and_gradient_batch(v)
        else:
            # incremental ratio keeps the Gibbs measure invariant under the kernel
            incr = log_alpha_new - log_alpha_prev
            if kernel == "langevin":
                if cfg.langevin_step > 0:
                    _, grad_new = objective.value_and_gradient_batch(v)
                    incr = incr + _langevin_log_kernel(v, u, grad_new, cfg.langevin_step)
                    incr = incr - _langevin_log_kernel(u, v, grad_prev, cfg.langevin_step)
                else:
                    grad_new = grad_prev
            else:
                grad_new = None
            log_w = log_w + incr
        log_w = log_w - _logsumexp(log_w)

        if ess(log_w) < cfg.resample_below:
            picks = rng.choice(k, size=k, p=np.exp(log_w))
            v = v[picks]
            log_alpha_new = log_alpha_new[picks]
            if grad_new is not None:
                grad_new = grad_new[picks]
            log_w = np.full(k, -np.log(k))

        u = v
        log_alpha_prev = log_alpha_new
        if kernel == "langevin":
            grad_prev = grad_new
        state.observe(iteration, u, log_alpha_prev / cfg.beta, log_w)

    return state.finish(u, log_w, iteration, t0)


def smc_gaussian(fp, provider, cfg: SamplerConfig, task: Optional[TaskSpec] = None,
                 exact_provider=None) -> PlanResult:
    """Weighted sampling with Gaussian random-walk proposals and adaptive
    multinomial resampling below ESS = K/2."""
    return _run_smc(fp, provider, cfg, task, "gaussian", exact_provider)


def smc_langevin(fp, provider, cfg: SamplerConfig, task: Optional[TaskSpec] = None,
                 exact_provider=None) -> PlanResult:
    """Weighted sampling whose proposals follow the reward gradient with
    injected noise sqrt(2 eta)."""
    return _run_smc(fp, provider, cfg, task, "langevin", exact_provider)


# -- reverse VE diffusion --------------------------------------------------------

def diffusion_sample(fp, provider, cfg: SamplerConfig, task: Optional[TaskSpec] = None,
                     exact_provider=None, schedule: Optional[NoiseSchedule] = None) -> PlanResult:
    """Reverse variance-exploding SDE with Monte Carlo score estimates.

    Per reverse step the state moves by Delta_t times the estimated score plus
    sqrt(Delta_t) noise, with Delta_t the per-step variance increment. States
    are kept inside the [-3, 3] normalized box; feasibility projection happens
    only at readout.
    """
    objective = _wrap_objective(provider, fp, cfg)
    n = task.n_aps if task is not None else cfg.n_aps
    dim = cfg.coord_dim
    k = cfg.particles
    sched = schedule or geometric_schedule(cfg.steps, cfg.sigma_min, cfg.sigma_max)
    deltas = sched.variance_steps()
    t_total = len(sched)

    seeds = np.random.SeedSequence(cfg.seed).spawn(k + 1)
    init_rng = np.random.default_rng(seeds[0])
    particle_rngs = [np.random.default_rng(s) for s in seeds[1:]]
    t0 = time.perf_counter()

    u = np.clip(init_rng.standard_normal((k, n, dim)), -cfg.clip, cfg.clip)
    log_w = np.full(k, -np.log(k))
    state = _RunState(objective, fp, task, cfg, exact_provider)
    state.observe(0, u, objective.value_batch(u), log_w)

    done = 0
    for step_idx, t in enumerate(range(t_total, 0, -1)):
        if state.stop:
            break
        sigma_t = sched.sigmas[t - 1]
        delta = deltas[t - 1]
        new_u = np.empty_like(u)
        root_delta = np.sqrt(delta)
        for i in range(k):
            score = estimate_score(objective, u[i], sigma_t, cfg, particle_rngs[i])
            noise = particle_rngs[i].standard_normal((n, dim))
            drift = delta * score
            # keep the reverse step commensurate with its noise scale; huge
            # penalty gradients otherwise catapult particles across the box
            norm = float(np.sqrt((drift**2).sum()))
            cap = cfg.drift_cap * root_delta
            if np.isfinite(cap) and norm > cap > 0:
                drift *= cap / norm
            new_u[i] = u[i] + drift + root_delta * noise
        u = np.clip(new_u, -cfg.clip, cfg.clip)
        done = step_idx + 1
        state.observe(done, u, objective.value_batch(u), log_w)

    state.scan_ensemble(u)
    return state.finish(u, log_w, done, t0)


# -- gradient baseline ------------------------------------------------------------

def gradient_ascent(fp, provider, cfg: SamplerConfig, task: Optional[TaskSpec] = None,
                    exact_provider=None) -> PlanResult:
    """Projected gradient ascent from a single seeded initialization.

    Fixed base step with backtracking halving whenever the reward would
    decrease; iterates are projected onto the bounding box each step. Stops on
    a vanishing gradient, an exhausted backtrack, or the step limit.
    """
    objective = _wrap_objective(provider, fp, cfg)
    n = task.n_aps if task is not None else cfg.n_aps
    dim = cfg.coord_dim
    rng = np.random.default_rng(cfg.seed)
    t0 = time.perf_counter()

    u = np.clip(rng.standard_normal((1, n, dim)), -cfg.clip, cfg.clip)
    u = np.clip(u, -1.0, 1.0)
    log_w = np.zeros(1)
    state = _RunState(objective, fp, task, cfg, exact_provider)
    value = objective.value(u[0])
    state.observe(0, u, np.array([value]), log_w)

    iteration = 0
    for iteration in range(1, cfg.steps + 1):
        if state.stop:
            iteration -= 1
            break
        grad = objective.gradient(u[0])
        if np.linalg.norm(grad) < 1e-6:
            iteration -= 1
            break
        alpha = cfg.ga_step
        improved = False
        for _ in range(30):
            cand = np.clip(u[0] + alpha * grad, -1.0, 1.0)
            cand_value = objective.value(cand)
            if cand_value > value:
                u = cand[None]
                value = cand_value
                improved = True
                break
            alpha *= 0.5
        if not improved:
            iteration -= 1
            break
        state.observe(iteration, u, np.array([value]), log_w)

    return state.finish(u, log_w, iteration, t0)


# -- exports -----------------------------------------------------------------------

def trace_to_csv(result: PlanResult, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "best_reward", "mean_reward", "ess"])
        for row in result.trace:
            writer.writerow(
                [row.iteration, f"{row.best_reward:.6f}", f"{row.mean_reward:.6f}",
                 f"{row.ess:.4f}"]
            )


def trajectories_to_csv(result: PlanResult, cmap: Optional[CoordinateMap], path) -> None:
    import csv

    if result.history is None:
        raise ValueError("run was configured without history recording")
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "particle", "ap_index", "x", "y"])
        for ensemble in result.history:
            pts = ensemble.particles
            world = cmap.to_world(pts) if cmap is not None else pts
            for ki in range(world.shape[0]):
                for ai in range(world.shape[1]):
                    writer.writerow(
                        [ensemble.iteration, ki, ai,
                         f"{world[ki, ai, 0]:.4f}", f"{world[ki, ai, 1]:.4f}"]
                    )
