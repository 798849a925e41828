"""Local planar frame in meters; queries are half-open squares."""
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np
import pandas as pd
from pydantic import BaseModel, ConfigDict, Field

from .errors import DatasetNotFoundError, InvalidRowsError

logger = logging.getLogger(__name__)

EARTH_RADIUS_M = 6_371_000.0


class GeoPoint(BaseModel):
    lat: float = Field(ge=-90.0, le=90.0)
    lon: float = Field(ge=-180.0, le=180.0)

    model_config = ConfigDict(frozen=True)


class Region(BaseModel):
    """Square spatial region of ``side`` meters centered at ``center``."""
    center: GeoPoint
    side: float = Field(gt=0.0)

    model_config = ConfigDict(frozen=True)

    def contains(self, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
        return (xs >= 0.0) & (xs < self.side) & (ys >= 0.0) & (ys < self.side)


class PlanarPoint(BaseModel):
    x: float
    y: float

    model_config = ConfigDict(frozen=True)


class RangeQuery(BaseModel):
    """Square query with bottom-left corner ``c`` and side ``r``."""
    c: PlanarPoint
    r: float = Field(gt=0.0)

    model_config = ConfigDict(frozen=True)

    @classmethod
    def at(cls, x: float, y: float, r: float) -> "RangeQuery":
        return cls(c=PlanarPoint(x=x, y=y), r=r)


def project_many(lat: np.ndarray, lon: np.ndarray, region: Region) -> tuple[np.ndarray, np.ndarray]:
    """Equirectangular projection centered at the region center."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    lat0 = region.center.lat
    lon0 = region.center.lon
    half = region.side / 2.0
    xs = EARTH_RADIUS_M * (lon - lon0) * np.cos(np.radians(lat0)) * np.pi / 180.0 + half
    ys = EARTH_RADIUS_M * (lat - lat0) * np.pi / 180.0 + half
    return xs, ys


def project(p: GeoPoint, region: Region) -> PlanarPoint:
    xs, ys = project_many(np.array([p.lat]), np.array([p.lon]), region)
    return PlanarPoint(x=float(xs[0]), y=float(ys[0]))


@dataclass(frozen=True, eq=False)
class PlanarDataset:
    """Projected points of one sensitive or public dataset.

    The coordinate arrays are read-only; ``coordinates()`` is the single read path so
    that wrappers can count accesses to the records.
    """
    xs: np.ndarray
    ys: np.ndarray
    region: Region

    def __post_init__(self):
        xs = np.array(self.xs, dtype=np.float64, copy=True).reshape(-1)
        ys = np.array(self.ys, dtype=np.float64, copy=True).reshape(-1)
        if xs.shape != ys.shape:
            raise ValueError("x and y coordinate arrays differ in length")
        if not np.all(self.region.contains(xs, ys)):
            raise ValueError("dataset holds points outside its region")
        xs.setflags(write=False)
        ys.setflags(write=False)
        object.__setattr__(self, "xs", xs)
        object.__setattr__(self, "ys", ys)

    @classmethod
    def from_arrays(cls, xs, ys, region: Region) -> "PlanarDataset":
        """Build a dataset, dropping points that fall outside the region."""
        xs = np.asarray(xs, dtype=np.float64).reshape(-1)
        ys = np.asarray(ys, dtype=np.float64).reshape(-1)
        inside = region.contains(xs, ys)
        dropped = int(xs.size - np.count_nonzero(inside))
        if dropped:
            logger.info(f"Dropped {dropped} of {xs.size} points outside the region")
        return cls(xs=xs[inside], ys=ys[inside], region=region)

    @classmethod
    def from_points(cls, points: Iterable[PlanarPoint], region: Region) -> "PlanarDataset":
        pts = list(points)
        return cls.from_arrays([p.x for p in pts], [p.y for p in pts], region)

    @property
    def n(self) -> int:
        return int(self.xs.size)

    def coordinates(self) -> tuple[np.ndarray, np.ndarray]:
        return self.xs, self.ys

    def points(self) -> list[PlanarPoint]:
        xs, ys = self.coordinates()
        return [PlanarPoint(x=float(x), y=float(y)) for x, y in zip(xs, ys)]


def true_count(d: PlanarDataset, q: RangeQuery) -> int:
    xs, ys = d.coordinates()
    x0, y0 = q.c.x, q.c.y
    inside = (xs >= x0) & (xs < x0 + q.r) & (ys >= y0) & (ys < y0 + q.r)
    return int(np.count_nonzero(inside))


def true_counts(d: PlanarDataset, cx, cy, r) -> np.ndarray:
    """Exact counts for a batch of queries given as corner and size arrays."""
    cx = np.asarray(cx, dtype=np.float64).reshape(-1)
    cy = np.asarray(cy, dtype=np.float64).reshape(-1)
    r = np.broadcast_to(np.asarray(r, dtype=np.float64), cx.shape)
    xs, ys = d.coordinates()
    order = np.argsort(xs, kind="stable")
    sx = xs[order]
    sy = ys[order]
    lo = np.searchsorted(sx, cx, side="left")
    hi = np.searchsorted(sx, cx + r, side="left")
    out = np.zeros(cx.size, dtype=np.int64)
    for i in range(cx.size):
        band = sy[lo[i]:hi[i]]
        out[i] = np.count_nonzero((band >= cy[i]) & (band < cy[i] + r[i]))
    return out


def query_arrays(queries) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Corner and size arrays for a workload or any iterable of RangeQuery."""
    if all(hasattr(queries, a) for a in ("cx", "cy", "r")):
        return (
            np.asarray(queries.cx, dtype=np.float64),
            np.asarray(queries.cy, dtype=np.float64),
            np.asarray(queries.r, dtype=np.float64),
        )
    qs = list(queries)
    return (
        np.array([q.c.x for q in qs], dtype=np.float64),
        np.array([q.c.y for q in qs], dtype=np.float64),
        np.array([q.r for q in qs], dtype=np.float64),
    )


def relative_error(y: float, truth: float, psi: float) -> float:
    if psi <= 0:
        raise ValueError(f"psi must be positive, got {psi}")
    return abs(y - truth) / max(truth, psi)


def relative_errors(y: np.ndarray, truth: np.ndarray, psi: float) -> np.ndarray:
    if psi <= 0:
        raise ValueError(f"psi must be positive, got {psi}")
    y = np.asarray(y, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    return np.abs(y - truth) / np.maximum(truth, psi)


def read_geo_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray]:
    """Read a ``lat,lon`` CSV. Other columns (user ids, timestamps) are discarded."""
    path = Path(path)
    if not path.is_file():
        raise DatasetNotFoundError(f"Dataset not found: {path}")
    frame = pd.read_csv(path, dtype=str, skipinitialspace=True)
    missing = {"lat", "lon"} - set(frame.columns)
    if missing:
        raise InvalidRowsError(f"Missing columns {sorted(missing)} in {path}", lines=[1])
    lat = pd.to_numeric(frame["lat"], errors="coerce").to_numpy(dtype=np.float64)
    lon = pd.to_numeric(frame["lon"], errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(lat) | ~np.isfinite(lon) | (np.abs(lat) > 90.0) | (np.abs(lon) > 180.0)
    if bad.any():
        # header is line 1
        lines = (np.flatnonzero(bad) + 2).tolist()
        shown = ", ".join(str(i) for i in lines[:20])
        raise InvalidRowsError(f"{len(lines)} invalid rows in {path} (lines {shown})", lines=lines)
    return lat, lon


def ingest_csv(path: str | Path, region: Region) -> PlanarDataset:
    lat, lon = read_geo_csv(path)
    xs, ys = project_many(lat, lon, region)
    dataset = PlanarDataset.from_arrays(xs, ys, region)
    logger.info(f"Ingested {dataset.n} records from {path}")
    return dataset
