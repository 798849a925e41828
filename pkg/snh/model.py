import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

import numpy as np
from joblib import Parallel, delayed

from .augment import SizeLadder, augment, size_ladder, workload_weights
from .collect import AccessAudit, AuditedDataset, NoisyHistogram, SecureRandom, collect
from .errors import ConfigError, CorruptArtifactError
from .geo import PlanarDataset, RangeQuery, Region, query_arrays
from .mlp import Mlp, train
from .schemas import (
    BundleManifest,
    BundleModelEntry,
    HistogramDocument,
    LadderConfig,
    LadderDocument,
    MlpDocument,
    ScalingMode,
    TrainConfig,
)
from .storage import read_document, write_document
from .utils import seeding

logger = logging.getLogger(__name__)

MANIFEST = "manifest.json"


@dataclass(frozen=True, eq=False)
class SnhModel:
    ladder: SizeLadder
    # one network per ladder size, same order
    models: tuple[Mlp, ...]
    rho: float
    epsilon: float
    n: int
    region: Region
    psi: float
    seed: int
    scaling: ScalingMode = ScalingMode.area
    histogram: Optional[NoisyHistogram] = None
    audit: Optional[AccessAudit] = None

    def scale_factors(self, r: np.ndarray, r_star: np.ndarray) -> np.ndarray:
        ratio = r / r_star
        return ratio ** 2 if self.scaling == ScalingMode.area else ratio

    def raw_answers(self, cx, cy, r) -> np.ndarray:
        """Scaled network outputs before clamping."""
        cx = np.asarray(cx, dtype=np.float64).reshape(-1)
        cy = np.asarray(cy, dtype=np.float64).reshape(-1)
        r = np.broadcast_to(np.asarray(r, dtype=np.float64), cx.shape)
        nearest = self.ladder.nearest_indices(r)
        sizes = np.asarray(self.ladder.sizes)
        out = np.empty(cx.size)
        for i in np.unique(nearest):
            sel = nearest == i
            pred = self.models[i].predict(cx[sel], cy[sel])
            out[sel] = self.scale_factors(r[sel], sizes[i]) * pred
        return out

    def answer_many(self, queries) -> np.ndarray:
        cx, cy, r = query_arrays(queries)
        return np.maximum(self.raw_answers(cx, cy, r), 0.0)

    def answer(self, q: RangeQuery) -> float:
        return float(np.maximum(self.raw_answers([q.c.x], [q.c.y], [q.r]), 0.0)[0])


def _train_size(index: int, cx, cy, labels, weights, cfg: TrainConfig, region: Region, n: int) -> Mlp:
    if not np.any(weights > 0):
        logger.warning(f"No workload query overlaps training size #{index}; using uniform weights")
        weights = np.ones_like(weights)
    return train(cx, cy, labels, weights, cfg, input_scale=region.side, label_scale=float(max(n, 1)))


def fit(
    d: PlanarDataset | AuditedDataset,
    epsilon: float,
    rho: float,
    ladder_cfg: LadderConfig,
    train_cfg: TrainConfig,
    workload=None,
    *,
    seed: int = 0,
    scaling: ScalingMode = ScalingMode.area,
    secure_rng: bool = False,
    noise_free: bool = False,
    n_jobs: int = 1,
) -> SnhModel:
    """Spend the privacy budget once on the grid, then train from the released counts only."""
    source = d if isinstance(d, AuditedDataset) else AuditedDataset(d)
    region = source.region
    if rho > region.side:
        raise ConfigError(f"rho={rho} exceeds the region side {region.side}")
    if scaling == ScalingMode.linear:
        logger.warning("Answers use linear r/r* scaling instead of area scaling")

    rng = SecureRandom() if secure_rng else seeding.derive_rng(seed, seeding.COLLECT)
    histogram = collect(source, rho, epsilon, rng, noise_free=noise_free)
    # every later stage works from the released histogram only
    source.seal()
    n = histogram.n

    ladder = size_ladder(ladder_cfg.l, ladder_cfg.u, ladder_cfg.k)
    aug = augment(histogram, ladder)
    if workload is not None and query_arrays(workload)[0].size:
        weights = workload_weights(aug, workload).weights
    else:
        weights = np.ones_like(aug.labels, dtype=np.int64)

    tasks = []
    for i in range(ladder.k):
        cx, cy, labels = aug.samples(i)
        cfg = train_cfg.model_copy(update={"seed": seeding.derive_seed(seed, seeding.TRAIN, i)})
        tasks.append(delayed(_train_size)(i, cx, cy, labels, weights[i].reshape(-1), cfg, region, n))
    models = Parallel(n_jobs=n_jobs)(tasks)

    audit = source.audit()
    logger.info(
        f"Fitted {ladder.k} networks (rho={rho:g}, epsilon={epsilon:g}, n={n}); "
        f"point reads={audit.point_reads}, post-collection reads={audit.post_collection_reads}"
    )
    return SnhModel(
        ladder=ladder,
        models=tuple(models),
        rho=float(rho),
        epsilon=float(epsilon),
        n=n,
        region=region,
        psi=train_cfg.psi_fraction * n,
        seed=seed,
        scaling=scaling,
        histogram=histogram,
        audit=audit,
    )


def save(m: SnhModel, path: str | Path) -> Path:
    """Write a bundle directory: manifest, one weight file per size, histogram, audit."""
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    entries = []
    for i, (size, net) in enumerate(zip(m.ladder.sizes, m.models)):
        name = f"model_{i:02d}.json"
        write_document(net.to_document(), path / name)
        entries.append(BundleModelEntry(size=size, file=name))
    manifest = BundleManifest(
        ladder=LadderDocument(l=m.ladder.l, u=m.ladder.u, k=m.ladder.k, sizes=list(m.ladder.sizes)),
        rho=m.rho,
        epsilon=m.epsilon,
        n=m.n,
        region=m.region,
        psi=m.psi,
        seed=m.seed,
        scaling=m.scaling,
        models=entries,
    )
    if m.histogram is not None:
        write_document(m.histogram.to_document(), path / manifest.histogram_file)
    if m.audit is not None:
        write_document(m.audit, path / manifest.audit_file)
    write_document(manifest, path / MANIFEST)
    logger.info(f"Saved model bundle with {len(entries)} networks to {path}")
    return path


def load(path: str | Path) -> SnhModel:
    path = Path(path)
    if not (path / MANIFEST).is_file():
        raise ConfigError(f"No model bundle at {path}")
    manifest = read_document(path / MANIFEST, BundleManifest)
    try:
        models = tuple(Mlp.from_document(read_document(path / e.file, MlpDocument)) for e in manifest.models)
        histogram = None
        if (path / manifest.histogram_file).is_file():
            histogram = NoisyHistogram.from_document(
                read_document(path / manifest.histogram_file, HistogramDocument)
            )
    except ValueError as exc:
        raise CorruptArtifactError(f"Malformed model bundle {path}: {exc}") from exc
    ladder = SizeLadder(
        l=manifest.ladder.l, u=manifest.ladder.u, k=manifest.ladder.k, sizes=tuple(manifest.ladder.sizes)
    )
    if len(models) != ladder.k:
        raise CorruptArtifactError(f"Bundle at {path} lists {len(models)} networks for k={ladder.k}")
    audit = None
    if (path / manifest.audit_file).is_file():
        audit = read_document(path / manifest.audit_file, AccessAudit)
    return SnhModel(
        ladder=ladder,
        models=models,
        rho=manifest.rho,
        epsilon=manifest.epsilon,
        n=manifest.n,
        region=manifest.region,
        psi=manifest.psi,
        seed=manifest.seed,
        scaling=manifest.scaling,
        histogram=histogram,
        audit=audit,
    )


def load_audit(path: str | Path) -> AccessAudit:
    path = Path(path)
    if not (path / MANIFEST).is_file():
        raise ConfigError(f"No model bundle at {path}")
    manifest = read_document(path / MANIFEST, BundleManifest)
    return read_document(path / manifest.audit_file, AccessAudit)
