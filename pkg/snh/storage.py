import json
import logging
from pathlib import Path
from typing import Type, TypeVar

import numpy as np
import pandas as pd
from pydantic import BaseModel, ValidationError

from .config import settings
from .errors import ArtifactVersionError, CorruptArtifactError, DatasetNotFoundError, InvalidRowsError
from .geo import PlanarDataset
from .schemas import DatasetMeta

logger = logging.getLogger(__name__)

DocT = TypeVar("DocT", bound=BaseModel)


def write_document(doc: BaseModel, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        json.dump(doc.model_dump(mode="json"), fh)
    return path


def write_json(payload: dict, path: str | Path, *, indent: int | None = 2) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w") as fh:
        json.dump(payload, fh, indent=indent, default=str)
    return path


def read_document(path: str | Path, cls: Type[DocT]) -> DocT:
    path = Path(path)
    if not path.is_file():
        raise CorruptArtifactError(f"Missing artifact: {path}")
    try:
        with path.open() as fh:
            raw = json.load(fh)
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise CorruptArtifactError(f"Unreadable artifact {path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise CorruptArtifactError(f"Artifact {path} is not a JSON object")
    version = raw.get("version")
    if version != settings.artifact_version:
        raise ArtifactVersionError(
            f"Artifact {path} has version {version!r}, expected {settings.artifact_version}"
        )
    try:
        return cls.model_validate(raw)
    except ValidationError as exc:
        raise CorruptArtifactError(f"Malformed artifact {path}: {exc.error_count()} errors") from exc


def _meta_path(path: Path) -> Path:
    return path.with_suffix(".region.json")


def save_planar_dataset(d: PlanarDataset, path: str | Path, *, source: str | None = None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    xs, ys = d.coordinates()
    pd.DataFrame({"x": xs, "y": ys}).to_csv(path, index=False)
    write_document(DatasetMeta(region=d.region, n=d.n, source=source), _meta_path(path))
    logger.info(f"Wrote {d.n} points to {path}")
    return path


def check_dataset_exists(path: str | Path) -> Path:
    """Fail on a missing dataset or sidecar without reading any record."""
    path = Path(path)
    if not path.is_file():
        raise DatasetNotFoundError(f"Dataset not found: {path}")
    if not _meta_path(path).is_file():
        raise DatasetNotFoundError(f"Dataset region sidecar not found: {_meta_path(path)}")
    return path


def load_planar_dataset(path: str | Path) -> PlanarDataset:
    path = check_dataset_exists(path)
    meta = read_document(_meta_path(path), DatasetMeta)
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = {"x", "y"} - set(frame.columns)
    if missing:
        raise InvalidRowsError(f"Missing columns {sorted(missing)} in {path}", lines=[1])
    xs = pd.to_numeric(frame["x"], errors="coerce").to_numpy(dtype=np.float64)
    ys = pd.to_numeric(frame["y"], errors="coerce").to_numpy(dtype=np.float64)
    bad = ~np.isfinite(xs) | ~np.isfinite(ys) | ~meta.region.contains(xs, ys)
    if bad.any():
        lines = (np.flatnonzero(bad) + 2).tolist()
        raise InvalidRowsError(f"{len(lines)} invalid rows in {path}", lines=lines)
    return PlanarDataset(xs=xs, ys=ys, region=meta.region)


def read_query_csv(path: str | Path) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Read ``cx,cy,r`` rows."""
    path = Path(path)
    if not path.is_file():
        raise DatasetNotFoundError(f"Query file not found: {path}")
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = {"cx", "cy", "r"} - set(frame.columns)
    if missing:
        raise InvalidRowsError(f"Missing columns {sorted(missing)} in {path}", lines=[1])
    cols = [pd.to_numeric(frame[c], errors="coerce").to_numpy(dtype=np.float64) for c in ("cx", "cy", "r")]
    bad = ~np.isfinite(cols[0]) | ~np.isfinite(cols[1]) | ~np.isfinite(cols[2]) | (cols[2] <= 0)
    if bad.any():
        lines = (np.flatnonzero(bad) + 2).tolist()
        raise InvalidRowsError(f"{len(lines)} invalid queries in {path}", lines=lines)
    return cols[0], cols[1], cols[2]


def write_table(frame: pd.DataFrame, path: str | Path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame.to_csv(path, index=False)
    return path
