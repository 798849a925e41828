"""Data collection: equi-width grid with Laplace-noised cell counts.

This is the only stage that reads the sensitive records. Each record falls in exactly
one cell, so by parallel composition the whole histogram costs ``epsilon``.
"""
import logging
import math
import secrets
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from typing import Iterator, Protocol, Union

import numpy as np

from .config import settings
from .errors import ConfigError
from .geo import PlanarDataset, PlanarPoint, Region
from .schemas import HistogramDocument, VersionedDocument

logger = logging.getLogger(__name__)


class SecureRandom:
    """Uniform source backed by ``secrets``.

    Only the uniforms are unpredictable; inverse-CDF sampling on floats is still
    exposed to floating-point side channels.
    """

    def uniform(self, low: float, high: float, size=None):
        count = 1 if size is None else int(np.prod(size))
        raw = np.frombuffer(secrets.token_bytes(8 * count), dtype=np.uint64)
        # 53 random bits -> [0, 1)
        unit = (raw >> np.uint64(11)).astype(np.float64) / float(1 << 53)
        out = low + (high - low) * unit
        if size is None:
            return float(out[0])
        return out.reshape(size)


RandomSource = Union[np.random.Generator, SecureRandom]


def laplace_noise(scale: float, size: int, rng: RandomSource) -> np.ndarray:
    """Laplace(0, scale) samples by inverse CDF: -b * sgn(u) * ln(1 - 2|u|)."""
    if scale <= 0:
        raise ValueError(f"Laplace scale must be positive, got {scale}")
    # open interval (-0.5, 0.5): excluding -0.5 keeps the log finite
    u = rng.uniform(np.nextafter(-0.5, 0.0), 0.5, size=size)
    return -scale * np.sign(u) * np.log1p(-2.0 * np.abs(u))


def laplace_sample(scale: float, rng: RandomSource) -> float:
    return float(laplace_noise(scale, 1, rng)[0])


class PointSource(Protocol):
    region: Region

    @property
    def n(self) -> int: ...

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]: ...


class AccessAudit(VersionedDocument):
    point_reads: int = 0
    post_collection_reads: int = 0
    evaluation_reads: int = 0

    @property
    def compliant(self) -> bool:
        return self.post_collection_reads == 0


class AuditedDataset:
    """Wraps a dataset and counts every point read, split by pipeline phase.

    Reads before ``seal()`` are collection reads. Reads after it are violations,
    except inside ``out_of_band()`` which accounts for evaluation truth counts.
    """

    def __init__(self, dataset: PlanarDataset):
        self._dataset = dataset
        self.region = dataset.region
        self._lock = threading.Lock()
        self._sealed = False
        self._out_of_band = 0
        self._audit = AccessAudit()

    @property
    def n(self) -> int:
        return self._dataset.n

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        with self._lock:
            if self._out_of_band:
                self._audit.evaluation_reads += self.n
            elif self._sealed:
                self._audit.post_collection_reads += self.n
            else:
                self._audit.point_reads += self.n
        return self._dataset.coordinates()

    def seal(self) -> None:
        with self._lock:
            self._sealed = True

    @contextmanager
    def out_of_band(self) -> Iterator["AuditedDataset"]:
        with self._lock:
            self._out_of_band += 1
        try:
            yield self
        finally:
            with self._lock:
                self._out_of_band -= 1

    def audit(self) -> AccessAudit:
        with self._lock:
            return self._audit.model_copy()


@dataclass(frozen=True)
class Grid:
    region: Region
    rho: float
    cells_per_side: int

    @classmethod
    def over(cls, region: Region, rho: float) -> "Grid":
        if not 0 < rho <= region.side:
            raise ValueError(f"rho must lie in (0, {region.side}], got {rho}")
        # tolerate side/rho landing a hair above an integer
        m = max(1, math.ceil(region.side / rho * (1.0 - 1e-12)))
        return cls(region=region, rho=float(rho), cells_per_side=m)

    @property
    def size(self) -> int:
        return self.cells_per_side ** 2

    @property
    def extent(self) -> float:
        return self.cells_per_side * self.rho

    def starts(self) -> np.ndarray:
        """Lower edges of the cells along either axis."""
        return np.arange(self.cells_per_side, dtype=np.float64) * self.rho

    def corner_arrays(self) -> tuple[np.ndarray, np.ndarray]:
        s = self.starts()
        return np.tile(s, self.cells_per_side), np.repeat(s, self.cells_per_side)

    @property
    def corners(self) -> list[PlanarPoint]:
        cx, cy = self.corner_arrays()
        return [PlanarPoint(x=float(x), y=float(y)) for x, y in zip(cx, cy)]

    def cell_index(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        m = self.cells_per_side
        ix = np.clip(np.floor(xs / self.rho).astype(np.int64), 0, m - 1)
        iy = np.clip(np.floor(ys / self.rho).astype(np.int64), 0, m - 1)
        return iy * m + ix


@dataclass(frozen=True, eq=False)
class NoisyHistogram:
    """Released noisy counts, shape (m, m) with row index y and column index x."""
    grid: Grid
    answers: np.ndarray
    epsilon: float
    n: int
    noise_draws: int

    def __post_init__(self):
        answers = np.array(self.answers, dtype=np.float64, copy=True)
        m = self.grid.cells_per_side
        if answers.shape != (m, m):
            answers = answers.reshape(m, m)
        answers.setflags(write=False)
        object.__setattr__(self, "answers", answers)

    def answer_at(self, corner: PlanarPoint) -> float:
        ix = int(round(corner.x / self.grid.rho))
        iy = int(round(corner.y / self.grid.rho))
        return float(self.answers[iy, ix])

    def as_map(self) -> dict[tuple[float, float], float]:
        cx, cy = self.grid.corner_arrays()
        return {(float(x), float(y)): float(v) for x, y, v in zip(cx, cy, self.answers.reshape(-1))}

    def to_document(self) -> HistogramDocument:
        return HistogramDocument(
            region=self.grid.region,
            rho=self.grid.rho,
            epsilon=self.epsilon,
            n=self.n,
            cells_per_side=self.grid.cells_per_side,
            noise_draws=self.noise_draws,
            answers=self.answers.reshape(-1).tolist(),
        )

    @classmethod
    def from_document(cls, doc: HistogramDocument) -> "NoisyHistogram":
        grid = Grid.over(doc.region, doc.rho)
        if grid.cells_per_side != doc.cells_per_side:
            raise ValueError("histogram document grid size is inconsistent with rho")
        return cls(
            grid=grid,
            answers=np.asarray(doc.answers, dtype=np.float64),
            epsilon=doc.epsilon,
            n=doc.n,
            noise_draws=doc.noise_draws,
        )


def collect(
    d: PointSource,
    rho: float,
    epsilon: float,
    rng: RandomSource,
    *,
    noise_free: bool = False,
) -> NoisyHistogram:
    """Release Y_D[c] = count(c, rho) + Lap(1/epsilon) for every grid cell."""
    if epsilon <= 0:
        raise ValueError(f"epsilon must be positive, got {epsilon}")
    if noise_free and not settings.allow_noise_free:
        raise ConfigError("Noise-free collection is disabled outside the test suite")
    grid = Grid.over(d.region, rho)
    xs, ys = d.coordinates()
    counts = np.bincount(grid.cell_index(xs, ys), minlength=grid.size).astype(np.float64)
    if noise_free:
        noise = np.zeros(grid.size)
        draws = 0
    else:
        noise = laplace_noise(1.0 / epsilon, grid.size, rng)
        draws = grid.size
    logger.info(
        f"Collected {grid.cells_per_side}x{grid.cells_per_side} grid (rho={grid.rho:g} m, "
        f"epsilon={epsilon:g}, laplace draws={draws})"
    )
    return NoisyHistogram(
        grid=grid,
        answers=(counts + noise).reshape(grid.cells_per_side, grid.cells_per_side),
        epsilon=float(epsilon),
        n=d.n,
        noise_draws=draws,
    )
