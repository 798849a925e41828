import numpy as np
import pytest

from snh.config import settings
from snh.geo import GeoPoint, PlanarDataset, Region
from snh.paramselect import FeatureVector, ParamSample
from snh.schemas import LadderConfig, TrainConfig


@pytest.fixture(autouse=True)
def allow_noise_free(monkeypatch):
    monkeypatch.setattr(settings, "allow_noise_free", True)


@pytest.fixture
def data_dir(tmp_path, monkeypatch):
    monkeypatch.setattr(settings, "data_dir", str(tmp_path))
    return tmp_path


@pytest.fixture
def region_100() -> Region:
    return Region(center=GeoPoint(lat=0.0, lon=0.0), side=100.0)


@pytest.fixture
def four_points(region_100) -> PlanarDataset:
    return PlanarDataset(xs=[10.0, 10.0, 90.0, 90.0], ys=[10.0, 90.0, 10.0, 90.0], region=region_100)


@pytest.fixture
def small_region() -> Region:
    return Region(center=GeoPoint(lat=40.0, lon=-74.0), side=400.0)


@pytest.fixture
def uniform_dataset(small_region) -> PlanarDataset:
    rng = np.random.default_rng(7)
    xs = rng.uniform(0.0, small_region.side, size=2000)
    ys = rng.uniform(0.0, small_region.side, size=2000)
    return PlanarDataset(xs=xs, ys=ys, region=small_region)


@pytest.fixture
def tiny_train() -> TrainConfig:
    return TrainConfig(depth=3, width=8, epochs=30, lr=0.01)


@pytest.fixture
def small_ladder() -> LadderConfig:
    return LadderConfig(l=25.0, u=100.0, k=2)


@pytest.fixture
def param_samples():
    """Factory for ParamSelect samples whose label follows 1/sqrt(n*eps) and entropy."""
    def make(count: int = 45, seed: int = 0) -> list[ParamSample]:
        rng = np.random.default_rng(seed)
        out = []
        for _ in range(count):
            n = int(rng.choice([10_000, 50_000, 100_000, 400_000]))
            eps = float(rng.choice([0.05, 0.1, 0.2, 0.4, 0.8]))
            h = float(rng.uniform(4.0, 9.0))
            fv = FeatureVector.build(n, eps, h)
            label = 20_000.0 * fv.inv_sqrt_ne + 10.0 * h + rng.normal(0.0, 2.0)
            out.append(ParamSample(features=fv, label=max(label, 1.0)))
        return out

    return make
