"""Deterministic multi-wall propagation verifier.

Log-distance pathloss plus a fixed dB penalty per obstacle cell crossed by
the direct 2D path, evaluated on the floor plan's FreeSpace cell lattice.
This stands in for a ray tracer: it keeps the fragmented, non-convex reward
landscape of real buildings at negligible cost.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .floorplan import Deployment, FloorPlan, Position, indoor_cells

__all__ = [
    "RadioConfig",
    "RadioMap",
    "pathloss_db",
    "pathloss_matrix",
    "compute_radio_map",
    "coverage_fraction",
    "radio_map_to_csv",
    "write_pgm",
]

LN10 = float(np.log(10.0))
D0_M = 1.0  # reference distance of the log-distance model


@dataclass
class RadioConfig:
    """Link-budget parameters shared by every AP."""

    carrier_hz: float = 2.4e9
    bandwidth_hz: float = 20e6
    tx_power_dbm: float = 20.0
    antenna_gain_dbi: float = 3.0
    pathloss_exponent: float = 3.0
    reference_loss_db: float = 40.0
    noise_psd_dbm_per_hz: float = -174.0
    noise_figure_db: float = 7.0
    pathloss_threshold_db: float = 90.0
    interference_threshold_db: float = 10.0  # dB over the noise floor; tasks override
    throughput_min_bps: float = 1e6  # tasks override

    def __post_init__(self):
        if self.bandwidth_hz <= 0:
            raise ValueError("bandwidth must be positive")
        if self.pathloss_exponent < 2:
            raise ValueError("pathloss exponent must be >= 2")
        if self.pathloss_threshold_db <= self.reference_loss_db:
            raise ValueError("coverage threshold must exceed the reference loss")

    @property
    def noise_power_dbm(self) -> float:
        return (
            self.noise_psd_dbm_per_hz
            + 10.0 * np.log10(self.bandwidth_hz)
            + self.noise_figure_db
        )

    @property
    def noise_power_mw(self) -> float:
        return 10.0 ** (self.noise_power_dbm / 10.0)

    @property
    def eirp_dbm(self) -> float:
        # omni antennas on both ends, so the gain counts twice
        return self.tx_power_dbm + 2.0 * self.antenna_gain_dbi


# -- grid traversal ---------------------------------------------------------

try:
    from numba import config as _numba_config
    from numba import njit, prange

    # the portable threading layer avoids TBB version checks at runtime
    _numba_config.THREADING_LAYER = "workqueue"
    _HAVE_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAVE_NUMBA = False


if _HAVE_NUMBA:

    @njit(cache=True, fastmath=False)
    def _segment_loss_jit(ax, ay, bx, by, loss_grid, h, w):
        """Sum of per-cell losses over every cell whose interior the open
        segment (a, b) crosses, in grid units. Crossing parameters of the two
        line families are merged in increasing order; each strictly positive
        interval's midpoint identifies its cell."""
        dx = bx - ax
        dy = by - ay
        inv_dx = 1.0 / dx if dx != 0.0 else 0.0
        inv_dy = 1.0 / dy if dy != 0.0 else 0.0
        if dx > 0.0:
            x_line = np.floor(ax) + 1.0
            x_step = 1.0
        else:
            x_line = np.ceil(ax) - 1.0
            x_step = -1.0
        if dy > 0.0:
            y_line = np.floor(ay) + 1.0
            y_step = 1.0
        else:
            y_line = np.ceil(ay) - 1.0
            y_step = -1.0
        tx = (x_line - ax) * inv_dx if dx != 0.0 else 2.0
        ty = (y_line - ay) * inv_dy if dy != 0.0 else 2.0
        if tx <= 0.0:
            tx = 2.0
        if ty <= 0.0:
            ty = 2.0

        total = 0.0
        t_prev = 0.0
        while True:
            t_next = tx if tx < ty else ty
            if t_next > 1.0:
                t_next = 1.0
            if t_next - t_prev > 1e-12:
                t_mid = 0.5 * (t_prev + t_next)
                col = int(np.floor(ax + t_mid * dx))
                row = int(np.floor(ay + t_mid * dy))
                if 0 <= col < w and 0 <= row < h:
                    total += loss_grid[row, col]
            if t_next >= 1.0:
                break
            t_prev = t_next
            if tx < ty:
                x_line += x_step
                tx = (x_line - ax) * inv_dx
            else:
                y_line += y_step
                ty = (y_line - ay) * inv_dy
        return total

    @njit(cache=True, parallel=True)
    def _crossing_loss_jit(aps, targets, loss_grid, h, w):
        a_n = aps.shape[0]
        m_n = targets.shape[0]
        out = np.empty((a_n, m_n))
        for i in prange(a_n):
            ax = aps[i, 0]
            ay = aps[i, 1]
            for j in range(m_n):
                out[i, j] = _segment_loss_jit(
                    ax, ay, targets[j, 0], targets[j, 1], loss_grid, h, w
                )
        return out


def crossing_loss(fp: FloorPlan, aps_xy: np.ndarray, targets_xy: np.ndarray,
                  chunk: int = 64) -> np.ndarray:
    """Total obstacle attenuation along each AP-to-target 2D segment.

    aps_xy (A, 2) and targets_xy (M, 2) in world meters; returns (A, M) dB.
    A cell contributes once iff the open segment intersects its interior:
    the segment is cut at every grid line crossing and each strictly positive
    interval's midpoint identifies the cell it lies in.
    """
    if _HAVE_NUMBA:
        h, w = fp.grid.shape
        loss_grid = fp.loss_per_cell()
        if not loss_grid.any():
            return np.zeros((len(aps_xy), len(targets_xy)))
        ox, oy = fp.origin
        cs = fp.cell_size_m
        a = (np.ascontiguousarray(aps_xy, dtype=np.float64) - (ox, oy)) / cs
        t = (np.ascontiguousarray(targets_xy, dtype=np.float64) - (ox, oy)) / cs
        return _crossing_loss_jit(a, t, loss_grid, h, w)
    return _crossing_loss_numpy(fp, aps_xy, targets_xy, chunk)


def _crossing_loss_numpy(fp: FloorPlan, aps_xy: np.ndarray, targets_xy: np.ndarray,
                         chunk: int = 64) -> np.ndarray:
    """Vectorized fallback with the same interval-midpoint semantics."""
    h, w = fp.grid.shape
    loss_grid = fp.loss_per_cell()
    if not loss_grid.any():
        return np.zeros((len(aps_xy), len(targets_xy)))
    ox, oy = fp.origin
    cs = fp.cell_size_m
    # grid-unit coordinates: lines sit at integers 0..W and 0..H; the whole
    # traversal runs in float32, which resolves cell membership to ~1e-6 cells
    a = ((np.asarray(aps_xy, dtype=float) - (ox, oy)) / cs).astype(np.float32)
    t = ((np.asarray(targets_xy, dtype=float) - (ox, oy)) / cs).astype(np.float32)
    lines_x = np.arange(w + 1, dtype=np.float32)
    lines_y = np.arange(h + 1, dtype=np.float32)
    loss32 = loss_grid.astype(np.float32)

    out = np.empty((len(a), len(t)))
    m = len(t)
    tx = t[:, 0]
    ty = t[:, 1]
    for lo in range(0, len(a), chunk):
        hi = min(lo + chunk, len(a))
        ax = a[lo:hi, 0][:, None, None]  # (B, 1, 1)
        ay = a[lo:hi, 1][:, None, None]
        dx = tx[None, :, None] - ax      # (B, M, 1)
        dy = ty[None, :, None] - ay
        with np.errstate(divide="ignore", invalid="ignore"):
            tsx = (lines_x[None, None, :] - ax) / dx
            tsy = (lines_y[None, None, :] - ay) / dy
        ts = np.concatenate([tsx, tsy], axis=2)
        # parameters outside the open segment never cut it; park them at 1
        bad = ~((ts > 1e-7) & (ts < 1.0 - 1e-7))
        ts[bad] = 1.0
        ts.sort(axis=2)
        b = hi - lo
        bounds = np.empty((b, m, ts.shape[2] + 2), dtype=np.float32)
        bounds[:, :, 0] = 0.0
        bounds[:, :, -1] = 1.0
        bounds[:, :, 1:-1] = ts
        mids = 0.5 * (bounds[:, :, 1:] + bounds[:, :, :-1])
        lens = bounds[:, :, 1:] - bounds[:, :, :-1]
        px = ax + mids * dx
        py = ay + mids * dy
        inside = (px >= 0.0) & (px < w) & (py >= 0.0) & (py < h) & (lens > 1e-7)
        cols = np.clip(np.floor(px), 0, w - 1).astype(np.int32)
        rows = np.clip(np.floor(py), 0, h - 1).astype(np.int32)
        cell_loss = loss32[rows, cols]
        cell_loss *= inside
        out[lo:hi] = cell_loss.sum(axis=2, dtype=np.float64)
    return out


def pathloss_matrix(fp: FloorPlan, aps: np.ndarray, targets: np.ndarray,
                    cfg: RadioConfig) -> np.ndarray:
    """(N, M) pathloss in dB between AP rows (N, 3) and target rows (M, 3)."""
    aps = np.asarray(aps, dtype=float)
    targets = np.asarray(targets, dtype=float)
    diff = aps[:, None, :] - targets[None, :, :]
    d = np.sqrt((diff**2).sum(axis=2))
    d_eff = np.maximum(d, D0_M)
    walls = crossing_loss(fp, aps[:, :2], targets[:, :2])
    return cfg.reference_loss_db + 10.0 * cfg.pathloss_exponent * np.log10(d_eff / D0_M) + walls


def pathloss_db(fp: FloorPlan, ap: Position, r: Position, cfg: RadioConfig) -> float:
    """Pathloss between two points; exactly symmetric in its endpoints.

    Endpoints are put in a canonical order before traversal so both argument
    orders run the same arithmetic.
    """
    a = tuple(map(float, ap))
    b = tuple(map(float, r))
    first, second = (a, b) if a <= b else (b, a)
    return float(
        pathloss_matrix(fp, np.array([first]), np.array([second]), cfg)[0, 0]
    )


# -- radio map --------------------------------------------------------------

@dataclass
class RadioMap:
    """Per-cell link fields for one deployment on one floor plan.

    Arrays are aligned with ``cell_xyz`` rows; ``pathloss`` rows follow the
    input AP order. Scalar fields are computed from a canonical AP ordering so
    they are bit-identical under any permutation of the deployment.
    """

    cell_xyz: np.ndarray          # (M, 3)
    cell_rowcol: np.ndarray       # (M, 2) grid indices of each evaluation cell
    pathloss: np.ndarray          # (N, M) dB
    serving_ap: np.ndarray        # (M,) input-order index of the serving AP
    serving_power_dbm: np.ndarray
    interference_mw: np.ndarray
    sinr: np.ndarray              # linear
    throughput_bps: np.ndarray
    covered: np.ndarray           # bool
    eta_db: float
    noise_mw: float
    bandwidth_hz: float
    grid_shape: tuple[int, int]

    @property
    def n_cells(self) -> int:
        return len(self.cell_xyz)

    def interference_dbm(self, floor_dbm: float = -200.0) -> np.ndarray:
        with np.errstate(divide="ignore"):
            vals = 10.0 * np.log10(self.interference_mw)
        return np.maximum(vals, floor_dbm)

    def interference_rel_db(self) -> np.ndarray:
        """Interference in dB over the noise floor; -inf where exactly zero."""
        with np.errstate(divide="ignore"):
            return 10.0 * np.log10(self.interference_mw / self.noise_mw)

    def field_grid(self, values: np.ndarray, fill=np.nan) -> np.ndarray:
        """Scatter a per-cell vector back onto the full (H, W) grid."""
        out = np.full(self.grid_shape, fill, dtype=float)
        out[self.cell_rowcol[:, 0], self.cell_rowcol[:, 1]] = values
        return out


def compute_radio_map(fp: FloorPlan, deployment: Deployment, cfg: RadioConfig,
                      z_eval: float | None = None) -> RadioMap:
    """Evaluate pathloss, serving power, interference, SINR and throughput on
    every FreeSpace cell. Deterministic; all APs share one channel."""
    aps = deployment.as_array() if isinstance(deployment, Deployment) else np.asarray(deployment, float)
    if aps.ndim != 2 or aps.shape[0] < 1:
        raise ValueError("empty deployment")
    cells = indoor_cells(fp, z_eval)
    if len(cells) == 0:
        raise ValueError("floorplan has no indoor cells")

    # canonical AP order makes every reduction independent of input order
    order = np.lexsort((aps[:, 2], aps[:, 1], aps[:, 0]))
    sorted_aps = aps[order]
    pl = pathloss_matrix(fp, sorted_aps, cells, cfg)

    best = np.argmin(pl, axis=0)
    m = np.arange(pl.shape[1])
    best_pl = pl[best, m]
    rx_dbm = cfg.eirp_dbm - pl
    rx_mw = 10.0 ** (rx_dbm / 10.0)
    serving_mw = rx_mw[best, m]
    interference = rx_mw.sum(axis=0) - serving_mw
    noise = cfg.noise_power_mw
    sinr = serving_mw / (interference + noise)
    throughput = cfg.bandwidth_hz * np.log2(1.0 + sinr)
    covered = best_pl <= cfg.pathloss_threshold_db

    inv = np.argsort(order)
    rows, cols = np.nonzero(fp.grid == 0)
    return RadioMap(
        cell_xyz=cells,
        cell_rowcol=np.column_stack([rows, cols]),
        pathloss=pl[inv],
        serving_ap=order[best],
        serving_power_dbm=cfg.eirp_dbm - best_pl,
        interference_mw=interference,
        sinr=sinr,
        throughput_bps=throughput,
        covered=covered,
        eta_db=cfg.pathloss_threshold_db,
        noise_mw=noise,
        bandwidth_hz=cfg.bandwidth_hz,
        grid_shape=fp.grid.shape,
    )


def coverage_fraction(radio_map: RadioMap) -> float:
    if radio_map.n_cells == 0:
        raise ValueError("radio map has no indoor cells")
    return float(radio_map.covered.mean())


# -- exports ----------------------------------------------------------------

def radio_map_to_csv(radio_map: RadioMap, path) -> None:
    best_pl = np.min(radio_map.pathloss, axis=0)
    with np.errstate(divide="ignore"):
        sinr_db = 10.0 * np.log10(radio_map.sinr)
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["cell_x", "cell_y", "pathloss_best_db", "interference_dbm",
             "sinr_db", "throughput_mbps", "covered"]
        )
        idbm = radio_map.interference_dbm()
        for i in range(radio_map.n_cells):
            writer.writerow(
                [
                    f"{radio_map.cell_xyz[i, 0]:.3f}",
                    f"{radio_map.cell_xyz[i, 1]:.3f}",
                    f"{best_pl[i]:.4f}",
                    f"{idbm[i]:.4f}",
                    f"{max(sinr_db[i], -200.0):.4f}",
                    f"{radio_map.throughput_bps[i] / 1e6:.4f}",
                    int(radio_map.covered[i]),
                ]
            )


def write_pgm(field: np.ndarray, path) -> None:
    """8-bit grayscale PGM of a 2D field; NaN renders black."""
    arr = np.asarray(field, dtype=float)
    finite = np.isfinite(arr)
    lo = arr[finite].min() if finite.any() else 0.0
    hi = arr[finite].max() if finite.any() else 1.0
    span = hi - lo if hi > lo else 1.0
    gray = np.zeros(arr.shape, dtype=np.uint8)
    gray[finite] = np.round(255.0 * (arr[finite] - lo) / span).astype(np.uint8)
    h, w = gray.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode())
        fh.write(gray.tobytes())
