"""Evaluation metrics: interference occupancy, throughput quality, and the
physics-consistency residuals, plus the single-trial evaluator."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .floorplan import Deployment, FloorPlan, Position, project_to_feasible
from .propagation import RadioConfig, RadioMap, compute_radio_map, coverage_fraction

__all__ = [
    "TaskSpec",
    "EvalResult",
    "ior",
    "tqs",
    "physics_residuals",
    "evaluate",
    "EVAL_CSV_HEADER",
]


@dataclass
class TaskSpec:
    """One planning task: floor plan, AP count, and constraint thresholds."""

    floorplan: str
    n_aps: int
    coverage_target: float = 1.0
    xi_db: float = 10.0          # interference limit, dB over the noise floor
    t_min_bps: float = 1e6
    d_min_m: float = 1.0
    max_runtime_s: Optional[float] = None
    name: str = ""

    def __post_init__(self):
        if self.n_aps < 1:
            raise ValueError("n_aps must be >= 1")
        if not 0 < self.coverage_target <= 1:
            raise ValueError("coverage_target must be in (0, 1]")
        if self.d_min_m < 0:
            raise ValueError("d_min_m must be >= 0")
        if not self.name:
            self.name = f"{self.floorplan}-n{self.n_aps}"


@dataclass
class EvalResult:
    runtime_s: float
    coverage: float
    ior: float
    tqs: float
    success: bool
    e_i: float
    e_t: float
    e_d: float
    e_b: float
    e_phy: float


EVAL_CSV_HEADER = [
    "method", "task", "seed", "runtime_s", "coverage", "ior", "tqs",
    "success", "e_I", "e_T", "e_d", "e_b", "e_phy",
]


def ior(radio_map: RadioMap, xi_db: float) -> float:
    """Mean positive exceedance of interference over xi, in dB over noise.

    Zero iff every cell complies.
    """
    if radio_map.n_cells == 0:
        raise ValueError("radio map has no indoor cells")
    rel = radio_map.interference_rel_db()
    return float(np.maximum(rel - xi_db, 0.0).mean())


def tqs(radio_map: RadioMap, t_min_bps: float) -> float:
    """Median throughput times the fraction of cells meeting the minimum.

    Even cell counts use the midpoint median. Same units as the map's
    throughput field.
    """
    if radio_map.n_cells == 0:
        raise ValueError("radio map has no indoor cells")
    t = radio_map.throughput_bps
    return float(np.median(t) * np.mean(t >= t_min_bps))


def pairwise_separation_residual(positions: np.ndarray, d_min: float) -> float:
    """Averaged squared relative violation of the minimum separation."""
    n = len(positions)
    if n < 2 or d_min <= 0:
        return 0.0
    total = 0.0
    for i in range(n - 1):
        d = np.sqrt(((positions[i + 1:] - positions[i]) ** 2).sum(axis=1))
        total += (np.maximum(0.0, (d_min - d) / d_min) ** 2).sum()
    return float(2.0 * total / (n * (n - 1)))


def boundary_residual(fp: FloorPlan, positions: np.ndarray) -> float:
    """Mean squared distance from each AP to its nearest feasible point."""
    total = 0.0
    for row in positions:
        p = Position(*row)
        proj = project_to_feasible(fp, p)
        total += float(((np.asarray(p) - np.asarray(proj)) ** 2).sum())
    return total / len(positions)


def physics_residuals(fp: FloorPlan, deployment: Deployment, radio_map: RadioMap,
                      task: TaskSpec, lambdas=(1.0, 1.0, 1.0, 1.0)):
    """(e_I, e_T, e_d, e_b, e_phy) constraint-consistency residuals.

    Interference and throughput violations are squared relative exceedances
    averaged over cells; separation is averaged over AP pairs; boundary is the
    mean squared projection distance. e_phy is their weighted sum.
    """
    rel = radio_map.interference_rel_db()
    if task.xi_db > 0:
        over = np.maximum(0.0, (rel - task.xi_db) / task.xi_db)
        e_i = float((over**2).mean())
    else:
        e_i = float((np.maximum(0.0, rel) ** 2).mean())
    if task.t_min_bps > 0:
        short = np.maximum(0.0, (task.t_min_bps - radio_map.throughput_bps) / task.t_min_bps)
        e_t = float((short**2).mean())
    else:
        e_t = 0.0
    positions = deployment.as_array()
    e_d = pairwise_separation_residual(positions, task.d_min_m)
    e_b = boundary_residual(fp, positions)
    lam_i, lam_t, lam_d, lam_b = lambdas
    e_phy = lam_i * e_i + lam_t * e_t + lam_d * e_d + lam_b * e_b
    return e_i, e_t, e_d, e_b, e_phy


def evaluate(fp: FloorPlan, deployment: Deployment, task: TaskSpec,
             cfg: RadioConfig, runtime_s: float = 0.0) -> EvalResult:
    """Run the verifier once and aggregate every reported metric.

    Success means the coverage target is reached and the hard geometric
    constraints (separation and boundary) hold exactly.
    """
    radio_map = compute_radio_map(fp, deployment, cfg)
    cov = coverage_fraction(radio_map)
    e_i, e_t, e_d, e_b, e_phy = physics_residuals(fp, deployment, radio_map, task)
    return EvalResult(
        runtime_s=runtime_s,
        coverage=cov,
        ior=ior(radio_map, task.xi_db),
        tqs=tqs(radio_map, task.t_min_bps) / 1e6,
        success=bool(cov >= task.coverage_target and e_d == 0.0 and e_b == 0.0),
        e_i=e_i,
        e_t=e_t,
        e_d=e_d,
        e_b=e_b,
        e_phy=e_phy,
    )
