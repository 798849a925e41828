"""Training sets for k query sizes, labelled from the noisy grid under the uniformity assumption."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
import pandas as pd

from .collect import Grid, NoisyHistogram
from .geo import RangeQuery, query_arrays

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SizeLadder:
    l: float
    u: float
    k: int
    sizes: tuple[float, ...]

    def nearest_indices(self, r) -> np.ndarray:
        """Index of argmin |r - R[i]|; ties go to the smaller size."""
        r = np.asarray(r, dtype=np.float64).reshape(-1)
        sizes = np.asarray(self.sizes)
        # argmin keeps the first minimum and sizes are increasing
        return np.argmin(np.abs(r[:, None] - sizes[None, :]), axis=1)

    def nearest(self, r: float) -> float:
        return self.sizes[int(self.nearest_indices([r])[0])]


def size_ladder(l: float, u: float, k: int) -> SizeLadder:
    if not 0 < l <= u:
        raise ValueError(f"size ladder needs 0 < l <= u, got l={l}, u={u}")
    if k < 1:
        raise ValueError(f"size ladder needs k >= 1, got {k}")
    step = (u - l) / k
    return SizeLadder(l=l, u=u, k=k, sizes=tuple(l + step * (i + 0.5) for i in range(k)))


def overlap_area(q1: RangeQuery, q2: RangeQuery) -> float:
    ox = min(q1.c.x + q1.r, q2.c.x + q2.r) - max(q1.c.x, q2.c.x)
    oy = min(q1.c.y + q1.r, q2.c.y + q2.r) - max(q1.c.y, q2.c.y)
    return max(ox, 0.0) * max(oy, 0.0)


def coverage(starts, r, grid: Grid) -> np.ndarray:
    """Fraction of each grid cell covered along one axis.

    Row i holds, for the interval [starts[i], starts[i] + r[i]), the overlap length with
    every cell interval divided by rho. Squares factor into an x and a y term, so the
    overlap fraction of a square with a cell is the product of two such entries.
    """
    starts = np.asarray(starts, dtype=np.float64).reshape(-1)
    r = np.broadcast_to(np.asarray(r, dtype=np.float64), starts.shape)
    lo = grid.starts()
    hi = lo + grid.rho
    length = np.minimum(starts[:, None] + r[:, None], hi[None, :]) - np.maximum(starts[:, None], lo[None, :])
    return np.clip(length, 0.0, None) / grid.rho


def grid_estimates(answers: np.ndarray, grid: Grid, cx, cy, r) -> np.ndarray:
    """Uniformity-assumption estimate for arbitrary squares, before clamping."""
    cov_x = coverage(cx, r, grid)
    cov_y = coverage(cy, r, grid)
    return np.einsum("qb,ba,qa->q", cov_y, answers, cov_x)


@dataclass(frozen=True, eq=False)
class AugmentedSet:
    """Labels Y_A^r for every grid corner, stacked as (k, m, m) with rows indexed by y."""
    grid: Grid
    ladder: SizeLadder
    labels: np.ndarray

    def queries(self, index: int) -> list[RangeQuery]:
        cx, cy = self.grid.corner_arrays()
        r = self.ladder.sizes[index]
        return [RangeQuery.at(float(x), float(y), r) for x, y in zip(cx, cy)]

    def samples(self, index: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        cx, cy = self.grid.corner_arrays()
        return cx, cy, self.labels[index].reshape(-1)

    def to_frame(self, index: int, weights: Optional["WorkloadWeights"] = None) -> pd.DataFrame:
        cx, cy, labels = self.samples(index)
        w = weights.weights[index].reshape(-1) if weights is not None else np.ones_like(labels)
        return pd.DataFrame(
            {"cx": cx, "cy": cy, "r": self.ladder.sizes[index], "label": labels, "weight": w}
        )

    def write_csv(self, directory: str | Path, weights: Optional["WorkloadWeights"] = None) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        paths = []
        for i, r in enumerate(self.ladder.sizes):
            path = directory / f"augmented_r{r:g}.csv"
            self.to_frame(i, weights).to_csv(path, index=False)
            paths.append(path)
        return paths


def augment(h: NoisyHistogram, ladder: SizeLadder) -> AugmentedSet:
    grid = h.grid
    starts = grid.starts()
    labels = np.empty((ladder.k, grid.cells_per_side, grid.cells_per_side))
    for i, r in enumerate(ladder.sizes):
        cov = coverage(starts, r, grid)
        labels[i] = cov @ h.answers @ cov.T
    logger.info(f"Augmented {grid.size} corners at {ladder.k} sizes {[round(s, 3) for s in ladder.sizes]}")
    labels.setflags(write=False)
    return AugmentedSet(grid=grid, ladder=ladder, labels=labels)


@dataclass(frozen=True, eq=False)
class WorkloadWeights:
    """w_(c,r): workload queries with positive-area overlap, stacked as (k, m, m)."""
    sizes: tuple[float, ...]
    weights: np.ndarray

    def weight(self, index: int, corner_index: int) -> int:
        return int(self.weights[index].reshape(-1)[corner_index])


def _index_span(size: float, rho: float, m: int, q_lo: np.ndarray, q_r: np.ndarray):
    """Range [first, last] of training indices i whose interval [i*rho, i*rho+size)
    overlaps [q_lo, q_lo+q_r) with positive length."""
    q_hi = q_lo + q_r
    # first i with i*rho + size > q_lo
    first = np.floor((q_lo - size) / rho).astype(np.int64) + 1
    first += (first * rho + size <= q_lo).astype(np.int64)
    first -= ((first - 1) * rho + size > q_lo).astype(np.int64)
    # last i with i*rho < q_hi
    last = np.ceil(q_hi / rho).astype(np.int64) - 1
    last -= (last * rho >= q_hi).astype(np.int64)
    last += ((last + 1) * rho < q_hi).astype(np.int64)
    return np.clip(first, 0, m), np.clip(last, -1, m - 1)


def workload_weights(aug: AugmentedSet, workload) -> WorkloadWeights:
    """Count, for every training query, the workload queries it overlaps.

    Training corners sit on the grid, so the corners hit by one workload query form an
    index rectangle; rectangles are accumulated in a difference array.
    """
    qx, qy, qr = query_arrays(workload)
    grid = aug.grid
    m = grid.cells_per_side
    out = np.zeros((aug.ladder.k, m, m), dtype=np.int64)
    if qx.size == 0:
        return WorkloadWeights(sizes=aug.ladder.sizes, weights=out)
    for i, r in enumerate(aug.ladder.sizes):
        x0, x1 = _index_span(r, grid.rho, m, qx, qr)
        y0, y1 = _index_span(r, grid.rho, m, qy, qr)
        keep = (x0 <= x1) & (y0 <= y1)
        x0, x1, y0, y1 = x0[keep], x1[keep], y0[keep], y1[keep]
        diff = np.zeros((m + 1, m + 1), dtype=np.int64)
        np.add.at(diff, (y0, x0), 1)
        np.add.at(diff, (y0, x1 + 1), -1)
        np.add.at(diff, (y1 + 1, x0), -1)
        np.add.at(diff, (y1 + 1, x1 + 1), 1)
        out[i] = diff.cumsum(axis=0).cumsum(axis=1)[:m, :m]
    return WorkloadWeights(sizes=aug.ladder.sizes, weights=out)
