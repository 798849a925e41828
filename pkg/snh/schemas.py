from enum import Enum
from typing import Any, Dict, List, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from .config import settings
from .geo import GeoPoint, Region


# ----------- ENUMS ----------- #
class ScalingMode(str, Enum):
    area = "area"
    linear = "linear"


class SyntheticKind(str, Enum):
    uniform = "uniform"
    gaussian_mixture = "gaussian-mixture"


class Method(str, Enum):
    snh = "snh"
    snh_ug = "snh@ug"
    identity = "identity"
    ug = "ug"


class SweepAxis(str, Enum):
    epsilon = "epsilon"
    rho = "rho"
    k = "k"


# ----------- PIPELINE CONFIG ----------- #
class LadderConfig(BaseModel):
    l: float = Field(25.0, gt=0)
    u: float = Field(100.0, gt=0)
    k: int = Field(8, ge=1)

    model_config = ConfigDict(frozen=True)

    @model_validator(mode="after")
    def _check_bounds(self):
        if self.l > self.u:
            raise ValueError(f"ladder lower bound {self.l} exceeds upper bound {self.u}")
        return self


class TrainConfig(BaseModel):
    depth: int = Field(5, ge=1)
    width: int = Field(40, ge=1)
    epochs: int = Field(2000, ge=1)
    lr: float = Field(0.001, gt=0)
    beta1: float = Field(0.9, ge=0, lt=1)
    beta2: float = Field(0.999, ge=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)
    full_batch_limit: int = Field(16384, ge=1)
    batch_size: int = Field(1024, ge=1)
    # loss floor psi as a fraction of n, shared with the evaluation metric
    psi_fraction: float = Field(0.001, gt=0)
    seed: int = 0

    model_config = ConfigDict(frozen=True)


class RegionConfig(BaseModel):
    lat0: float = Field(0.0, ge=-90, le=90)
    lon0: float = Field(0.0, ge=-180, le=180)
    side: float = Field(20000.0, gt=0)

    def to_region(self) -> Region:
        return Region(center=GeoPoint(lat=self.lat0, lon=self.lon0), side=self.side)


class RunConfig(BaseModel):
    """Everything a command needs, with all defaults materialized."""
    dataset: Optional[str] = None
    public_dataset: Optional[str] = None
    public_datasets: List[str] = Field(default_factory=list)
    workload: Optional[str] = None
    test_workload: Optional[str] = None
    model: Optional[str] = None
    paramselect_model: Optional[str] = None
    output: Optional[str] = None

    region: RegionConfig = Field(default_factory=RegionConfig)
    epsilon: float = Field(0.2, gt=0)
    rho: Union[float, Literal["paramselect", "ug"]] = "paramselect"
    ladder: LadderConfig = Field(default_factory=LadderConfig)
    train: TrainConfig = Field(default_factory=TrainConfig)
    scaling: ScalingMode = ScalingMode.area
    seed: int = 0
    secure_rng: bool = False
    n_jobs: int = Field(1, ge=1)

    # evaluation and sweeps
    workload_count: int = Field(5000, ge=1)
    epsilons: List[float] = Field(default_factory=lambda: [0.05, 0.1, 0.2, 0.4, 0.8])
    methods: List[Method] = Field(default_factory=lambda: [Method.snh, Method.identity, Method.ug])
    seeds: List[int] = Field(default_factory=lambda: [0])
    vary: SweepAxis = SweepAxis.epsilon
    rho_steps: int = Field(16, ge=2)
    k_values: List[int] = Field(default_factory=lambda: [1, 2, 4, 8])
    ug_c: float = Field(10.0, gt=0)
    use_entropy: bool = True
    n_trees: int = Field(150, ge=1)
    max_depth: int = Field(7, ge=1)

    @model_validator(mode="after")
    def _check_rho(self):
        if isinstance(self.rho, float) and self.rho <= 0:
            raise ValueError("rho must be positive")
        if any(e <= 0 for e in self.epsilons):
            raise ValueError("every sweep epsilon must be positive")
        return self


# ----------- ARTIFACTS ----------- #
class VersionedDocument(BaseModel):
    version: int = Field(default_factory=lambda: settings.artifact_version)


class HistogramDocument(VersionedDocument):
    region: Region
    rho: float
    epsilon: float
    n: int
    cells_per_side: int
    noise_draws: int
    # row-major: row index is y, column index is x
    answers: List[float]


class MlpDocument(VersionedDocument):
    depth: int
    width: int
    activation: Literal["relu"] = "relu"
    weights: List[List[List[float]]]
    biases: List[List[float]]
    input_scale: float
    label_scale: float


class LadderDocument(BaseModel):
    l: float
    u: float
    k: int
    sizes: List[float]


class BundleModelEntry(BaseModel):
    size: float
    file: str


class BundleManifest(VersionedDocument):
    ladder: LadderDocument
    rho: float
    epsilon: float
    n: int
    region: Region
    psi: float
    seed: int
    scaling: ScalingMode
    models: List[BundleModelEntry]
    histogram_file: str = "histogram.json"
    audit_file: str = "audit.json"


class TreeDocument(BaseModel):
    children_left: List[int]
    children_right: List[int]
    feature: List[int]
    threshold: List[float]
    value: List[float]


class ParamSelectDocument(VersionedDocument):
    param: str = "rho"
    feature_names: List[str]
    n_trees: int
    max_depth: int
    seed: int
    label_range: List[float]
    trees: List[TreeDocument]


class EvalSummary(BaseModel):
    method: str
    count: int
    psi: float
    mean: float
    median: float
    p90: float
    config: Dict[str, Any] = Field(default_factory=dict)


class DatasetMeta(VersionedDocument):
    """Sidecar of a planar dataset CSV."""
    region: Region
    n: int
    source: Optional[str] = None
