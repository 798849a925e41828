"""ParamSelect: grid width from public signals. Reads no sensitive record; only ``n`` is used."""
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, Sequence

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from pydantic import BaseModel, ConfigDict, Field
from sklearn.ensemble import ExtraTreesRegressor

from .baselines import ug_rho
from .errors import CorruptArtifactError, ParamSelectModelRequiredError
from .evaluation import Workload, gen_workload
from .geo import PlanarDataset, Region, relative_errors, true_counts
from .model import fit
from .schemas import LadderConfig, ParamSelectDocument, ScalingMode, TrainConfig, TreeDocument
from .storage import read_document, write_document, write_table
from .utils import seeding

logger = logging.getLogger(__name__)

FEATURE_NAMES = ("n", "epsilon", "inv_ne", "inv_sqrt_ne", "entropy")
DATA_INDEPENDENT_FEATURES = FEATURE_NAMES[:4]
SAMPLE_COLUMNS = list(FEATURE_NAMES) + ["rho_label"]
ENTROPY_GRID = 100


class FeatureVector(BaseModel):
    n: int = Field(gt=0)
    epsilon: float = Field(gt=0)
    inv_ne: float
    inv_sqrt_ne: float
    # nats; None when no public surrogate is available
    entropy: Optional[float] = Field(default=None, ge=0)

    model_config = ConfigDict(frozen=True)

    @classmethod
    def build(cls, n: int, epsilon: float, entropy: Optional[float] = None) -> "FeatureVector":
        ne = n * epsilon
        return cls(n=n, epsilon=epsilon, inv_ne=1.0 / ne, inv_sqrt_ne=1.0 / math.sqrt(ne), entropy=entropy)

    def values(self, names: Sequence[str] = FEATURE_NAMES) -> list[float]:
        out = []
        for name in names:
            value = getattr(self, name)
            if value is None:
                raise ValueError(f"feature {name!r} is not available")
            out.append(float(value))
        return out


class ParamSample(BaseModel):
    features: FeatureVector
    label: float = Field(gt=0)


def entropy(d: PlanarDataset, g: int = ENTROPY_GRID) -> float:
    """Shannon entropy (nats) of the point distribution over a g x g equi-width grid."""
    if g < 1:
        raise ValueError(f"entropy grid needs g >= 1, got {g}")
    if d.n == 0:
        raise ValueError("entropy of an empty dataset is undefined")
    xs, ys = d.coordinates()
    cell = d.region.side / g
    ix = np.clip(np.floor(xs / cell).astype(np.int64), 0, g - 1)
    iy = np.clip(np.floor(ys / cell).astype(np.int64), 0, g - 1)
    counts = np.bincount(iy * g + ix, minlength=g * g)
    p = counts[counts > 0] / d.n
    return float(-np.sum(p * np.log(p)))


def features(d_star: Optional[PlanarDataset], n: int, epsilon: float) -> FeatureVector:
    """Features for a sensitive dataset of cardinality ``n``; entropy comes from the
    public surrogate ``d_star`` when one is given."""
    h = entropy(d_star) if d_star is not None else None
    return FeatureVector.build(n, epsilon, h)


def candidate_ladder(side: float, steps: int = 16) -> list[float]:
    """Geometric ladder of grid widths from side/512 to side/8."""
    if steps < 1:
        raise ValueError(f"candidate ladder needs at least one step, got {steps}")
    if steps == 1:
        return [side / 8.0]
    return [float(v) for v in np.geomspace(side / 512.0, side / 8.0, steps)]


def _search_run(d_public, epsilon, rho, train_workload, test_workload, truth, psi,
                ladder_cfg, train_cfg, scaling, run_seed) -> float:
    model = fit(d_public, epsilon, rho, ladder_cfg, train_cfg, train_workload, seed=run_seed, scaling=scaling)
    return float(np.median(relative_errors(model.answer_many(test_workload), truth, psi)))


def rho_errors(
    d_public: PlanarDataset,
    epsilon: float,
    candidates: Sequence[float],
    workload: Workload,
    seeds: Sequence[int] = (0,),
    *,
    train_workload: Optional[Workload] = None,
    ladder_cfg: Optional[LadderConfig] = None,
    train_cfg: Optional[TrainConfig] = None,
    scaling: ScalingMode = ScalingMode.area,
    n_jobs: int = 1,
) -> np.ndarray:
    """Median relative error of SNH at every candidate width, averaged over ``seeds``.

    Candidates are evaluated in the order given; the run seed only depends on the
    candidate value's rank, so reordering candidates does not change any score.
    """
    ladder_cfg = ladder_cfg or LadderConfig()
    train_cfg = train_cfg or TrainConfig()
    candidates = [float(c) for c in candidates]
    bad = [c for c in candidates if not 0 < c <= d_public.region.side]
    if bad:
        raise ValueError(f"candidate widths outside (0, {d_public.region.side}]: {bad}")
    rank = {c: i for i, c in enumerate(sorted(set(candidates)))}
    truth = true_counts(d_public, workload.cx, workload.cy, workload.r)
    psi = train_cfg.psi_fraction * d_public.n
    tasks = [
        delayed(_search_run)(
            d_public, epsilon, c, train_workload, workload, truth, psi, ladder_cfg, train_cfg, scaling,
            seeding.derive_seed(s, seeding.SEARCH, rank[c], rep),
        )
        for c in candidates
        for rep, s in enumerate(seeds)
    ]
    scores = np.asarray(Parallel(n_jobs=n_jobs)(tasks), dtype=np.float64)
    return scores.reshape(len(candidates), len(seeds)).mean(axis=1)


def empirical_best_rho(
    d_public: PlanarDataset,
    epsilon: float,
    candidates: Sequence[float],
    workload: Workload,
    seeds: Sequence[int] = (0,),
    **kwargs,
) -> float:
    """Candidate width with the lowest median relative error; ties go to the smaller width."""
    if len(candidates) == 0:
        raise ValueError("no candidate widths given")
    if len(candidates) == 1:
        return float(candidates[0])
    ordered = sorted(float(c) for c in candidates)
    errors = rho_errors(d_public, epsilon, ordered, workload, seeds, **kwargs)
    best = ordered[int(np.argmin(errors))]
    logger.info(
        f"Empirical best rho={best:g} at epsilon={epsilon:g} "
        f"(median errors {dict(zip([round(c, 2) for c in ordered], np.round(errors, 4).tolist()))})"
    )
    return best


@dataclass(frozen=True, eq=False)
class RegressionTree:
    """Array form of a fitted regression tree; leaves have ``children_left == -1``."""
    children_left: np.ndarray
    children_right: np.ndarray
    feature: np.ndarray
    threshold: np.ndarray
    value: np.ndarray

    @classmethod
    def from_sklearn(cls, tree) -> "RegressionTree":
        t = tree.tree_
        return cls(
            children_left=np.asarray(t.children_left, dtype=np.int64),
            children_right=np.asarray(t.children_right, dtype=np.int64),
            feature=np.asarray(t.feature, dtype=np.int64),
            threshold=np.asarray(t.threshold, dtype=np.float64),
            value=np.asarray(t.value, dtype=np.float64).reshape(t.node_count, -1)[:, 0],
        )

    def predict(self, x: np.ndarray) -> np.ndarray:
        # float32 inputs compared against float64 thresholds, as the fitted trees split
        x = np.asarray(x, dtype=np.float32)
        node = np.zeros(x.shape[0], dtype=np.int64)
        while True:
            active = np.flatnonzero(self.children_left[node] != -1)
            if active.size == 0:
                return self.value[node]
            at = node[active]
            go_left = x[active, self.feature[at]] <= self.threshold[at]
            node[active] = np.where(go_left, self.children_left[at], self.children_right[at])

    def to_document(self) -> TreeDocument:
        return TreeDocument(
            children_left=self.children_left.tolist(),
            children_right=self.children_right.tolist(),
            feature=self.feature.tolist(),
            threshold=self.threshold.tolist(),
            value=self.value.tolist(),
        )

    @classmethod
    def from_document(cls, doc: TreeDocument) -> "RegressionTree":
        sizes = {len(doc.children_left), len(doc.children_right), len(doc.feature),
                 len(doc.threshold), len(doc.value)}
        if len(sizes) != 1:
            raise ValueError("tree arrays differ in length")
        return cls(
            children_left=np.asarray(doc.children_left, dtype=np.int64),
            children_right=np.asarray(doc.children_right, dtype=np.int64),
            feature=np.asarray(doc.feature, dtype=np.int64),
            threshold=np.asarray(doc.threshold, dtype=np.float64),
            value=np.asarray(doc.value, dtype=np.float64),
        )


@dataclass(frozen=True, eq=False)
class TreeEnsemble:
    trees: tuple[RegressionTree, ...]
    feature_names: tuple[str, ...]
    n_trees: int
    max_depth: int
    seed: int
    label_range: tuple[float, float]

    @property
    def use_entropy(self) -> bool:
        return "entropy" in self.feature_names

    def predict(self, x) -> np.ndarray:
        x = np.atleast_2d(np.asarray(x, dtype=np.float64))
        if x.shape[1] != len(self.feature_names):
            raise ValueError(f"expected {len(self.feature_names)} features, got {x.shape[1]}")
        return np.mean([t.predict(x) for t in self.trees], axis=0)

    def predict_features(self, fv: FeatureVector) -> float:
        return float(self.predict([fv.values(self.feature_names)])[0])

    def to_document(self) -> ParamSelectDocument:
        return ParamSelectDocument(
            feature_names=list(self.feature_names),
            n_trees=self.n_trees,
            max_depth=self.max_depth,
            seed=self.seed,
            label_range=list(self.label_range),
            trees=[t.to_document() for t in self.trees],
        )

    @classmethod
    def from_document(cls, doc: ParamSelectDocument) -> "TreeEnsemble":
        unknown = set(doc.feature_names) - set(FEATURE_NAMES)
        if unknown:
            raise ValueError(f"unknown features {sorted(unknown)}")
        if len(doc.label_range) != 2 or not doc.trees:
            raise ValueError("ensemble document needs a label range and at least one tree")
        return cls(
            trees=tuple(RegressionTree.from_document(t) for t in doc.trees),
            feature_names=tuple(doc.feature_names),
            n_trees=doc.n_trees,
            max_depth=doc.max_depth,
            seed=doc.seed,
            label_range=(doc.label_range[0], doc.label_range[1]),
        )


def fit_ensemble(
    samples: Sequence[ParamSample],
    n_trees: int = 150,
    max_depth: int = 7,
    seed: int = 0,
    *,
    use_entropy: bool = True,
    n_jobs: int = 1,
) -> TreeEnsemble:
    """Extremely randomized trees on the full sample set (no bootstrap)."""
    if len(samples) < 2:
        raise ValueError(f"ParamSelect needs at least 2 training samples, got {len(samples)}")
    names = FEATURE_NAMES if use_entropy else DATA_INDEPENDENT_FEATURES
    x = np.array([s.features.values(names) for s in samples], dtype=np.float64)
    y = np.array([s.label for s in samples], dtype=np.float64)
    regressor = ExtraTreesRegressor(
        n_estimators=n_trees,
        max_depth=max_depth,
        bootstrap=False,
        random_state=seeding.derive_seed(seed, seeding.ENSEMBLE),
        n_jobs=n_jobs,
    )
    regressor.fit(x, y)
    ensemble = TreeEnsemble(
        trees=tuple(RegressionTree.from_sklearn(est) for est in regressor.estimators_),
        feature_names=tuple(names),
        n_trees=n_trees,
        max_depth=max_depth,
        seed=seed,
        label_range=(float(y.min()), float(y.max())),
    )
    logger.info(f"Fitted ParamSelect ensemble: {n_trees} trees, depth {max_depth}, {len(samples)} samples, "
                f"features {list(names)}")
    return ensemble


def predict_rho(
    model: TreeEnsemble, region: Region, d_star: Optional[PlanarDataset], n: int, epsilon: float
) -> float:
    """Grid width for a sensitive dataset of cardinality ``n``. Spends no privacy budget."""
    if model.use_entropy and d_star is None:
        raise ValueError("this ParamSelect model needs a public surrogate dataset for the entropy feature")
    fv = features(d_star if model.use_entropy else None, n, epsilon)
    rho = min(model.predict_features(fv), region.side)
    logger.info(f"ParamSelect predicted rho={rho:g} for n={n}, epsilon={epsilon:g}")
    return rho


def build_training_set(
    public_datasets: Sequence[PlanarDataset],
    epsilons: Sequence[float],
    *,
    seed: int = 0,
    seeds: Sequence[int] = (0,),
    steps: int = 16,
    workload_count: int = 5000,
    ladder_cfg: Optional[LadderConfig] = None,
    train_cfg: Optional[TrainConfig] = None,
    scaling: ScalingMode = ScalingMode.area,
    n_jobs: int = 1,
) -> list[ParamSample]:
    """One labelled sample per (public dataset, epsilon): each dataset is its own surrogate."""
    ladder_cfg = ladder_cfg or LadderConfig()
    samples = []
    for di, d in enumerate(public_datasets):
        test = gen_workload(d.region, workload_count, ladder_cfg.l, ladder_cfg.u,
                            seed=seeding.derive_seed(seed, seeding.WORKLOAD, di, 0), anchor=d)
        train_w = gen_workload(d.region, workload_count, ladder_cfg.l, ladder_cfg.u,
                               seed=seeding.derive_seed(seed, seeding.WORKLOAD, di, 1), anchor=d)
        h = entropy(d)
        for eps in epsilons:
            label = empirical_best_rho(
                d, eps, candidate_ladder(d.region.side, steps), test, seeds,
                train_workload=train_w, ladder_cfg=ladder_cfg, train_cfg=train_cfg,
                scaling=scaling, n_jobs=n_jobs,
            )
            samples.append(ParamSample(features=FeatureVector.build(d.n, eps, h), label=label))
    logger.info(f"Built {len(samples)} ParamSelect samples from {len(public_datasets)} public datasets")
    return samples


def samples_frame(samples: Sequence[ParamSample]) -> pd.DataFrame:
    rows = [
        {**s.features.model_dump(), "rho_label": s.label}
        for s in samples
    ]
    return pd.DataFrame(rows, columns=SAMPLE_COLUMNS)


def write_samples(samples: Sequence[ParamSample], path: str | Path) -> Path:
    return write_table(samples_frame(samples), path)


def read_samples(path: str | Path) -> list[ParamSample]:
    frame = pd.read_csv(path, float_precision="round_trip")
    missing = set(SAMPLE_COLUMNS) - set(frame.columns)
    if missing:
        raise ValueError(f"sample file {path} misses columns {sorted(missing)}")
    samples = []
    for row in frame.itertuples(index=False):
        h = None if pd.isna(row.entropy) else float(row.entropy)
        fv = FeatureVector(n=int(row.n), epsilon=float(row.epsilon), inv_ne=float(row.inv_ne),
                           inv_sqrt_ne=float(row.inv_sqrt_ne), entropy=h)
        samples.append(ParamSample(features=fv, label=float(row.rho_label)))
    return samples


def rho_selection_error(
    samples: Sequence[ParamSample], model: TreeEnsemble, side: float, *, c: float = 10.0
) -> dict[str, float]:
    """Mean |rho - rho_hat| against the empirical labels, for UG-derived and predicted widths."""
    labels = np.array([s.label for s in samples])
    ug = np.array([ug_rho(side, s.features.n, s.features.epsilon, c) for s in samples])
    predicted = np.array([min(model.predict_features(s.features), side) for s in samples])
    return {
        "ug": float(np.mean(np.abs(ug - labels))),
        "paramselect": float(np.mean(np.abs(predicted - labels))),
    }


def save_ensemble(model: TreeEnsemble, path: str | Path) -> Path:
    return write_document(model.to_document(), path)


def load_ensemble(path: str | Path) -> TreeEnsemble:
    path = Path(path)
    if not path.is_file():
        raise ParamSelectModelRequiredError(f"ParamSelect model not found: {path}")
    try:
        return TreeEnsemble.from_document(read_document(path, ParamSelectDocument))
    except ValueError as exc:
        raise CorruptArtifactError(f"Malformed ParamSelect model {path}: {exc}") from exc
