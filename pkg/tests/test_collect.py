import numpy as np
import pytest
from numpy.testing import assert_array_equal

from snh.collect import (
    AuditedDataset,
    Grid,
    NoisyHistogram,
    SecureRandom,
    collect,
    laplace_noise,
    laplace_sample,
)
from snh.config import settings
from snh.errors import ConfigError
from snh.geo import PlanarPoint, RangeQuery, true_count
from snh.utils import seeding


def test_laplace_statistics():
    epsilon = 0.2
    samples = laplace_noise(1.0 / epsilon, 1_000_000, seeding.derive_rng(0, seeding.COLLECT))
    assert abs(samples.mean()) < 0.05
    assert samples.var() == pytest.approx(2.0 / epsilon ** 2, rel=0.02)


def test_laplace_is_reproducible():
    a = laplace_noise(5.0, 10, np.random.default_rng(1))
    b = laplace_noise(5.0, 10, np.random.default_rng(1))
    assert_array_equal(a, b)
    assert np.isfinite(laplace_sample(5.0, np.random.default_rng(2)))


def test_laplace_rejects_bad_scale():
    with pytest.raises(ValueError):
        laplace_noise(0.0, 3, np.random.default_rng(0))


def test_secure_random_uniform_range():
    u = SecureRandom().uniform(-0.5, 0.5, size=1000)
    assert u.shape == (1000,)
    assert np.all((u >= -0.5) & (u < 0.5))
    assert np.all(np.isfinite(laplace_noise(1.0, 100, SecureRandom())))


@pytest.mark.parametrize("rho, cells", [(10.0, 10), (30.0, 4), (100.0, 1), (100.0 / 3.0, 3)])
def test_grid_cells_per_side(region_100, rho, cells):
    grid = Grid.over(region_100, rho)
    assert grid.cells_per_side == cells
    assert len(grid.corners) == cells ** 2


def test_grid_rejects_bad_rho(region_100):
    with pytest.raises(ValueError):
        Grid.over(region_100, 101.0)
    with pytest.raises(ValueError):
        Grid.over(region_100, 0.0)


def test_grid_corners_are_row_major(region_100):
    corners = Grid.over(region_100, 50.0).corners
    assert corners == [
        PlanarPoint(x=0.0, y=0.0),
        PlanarPoint(x=50.0, y=0.0),
        PlanarPoint(x=0.0, y=50.0),
        PlanarPoint(x=50.0, y=50.0),
    ]


def test_collect_noise_free_one_point_per_cell(four_points):
    h = collect(four_points, 50.0, 0.2, np.random.default_rng(0), noise_free=True)
    assert_array_equal(h.answers, np.ones((2, 2)))
    assert h.noise_draws == 0
    assert h.n == 4


def test_collect_noise_free_matches_true_counts(uniform_dataset):
    h = collect(uniform_dataset, 30.0, 1.0, np.random.default_rng(0), noise_free=True)
    assert h.answers.sum() == uniform_dataset.n
    for corner in h.grid.corners[::17]:
        q = RangeQuery(c=corner, r=30.0)
        assert h.answer_at(corner) == true_count(uniform_dataset, q)


def test_collect_draws_one_noise_per_cell(uniform_dataset):
    h = collect(uniform_dataset, 40.0, 0.2, np.random.default_rng(0))
    assert h.noise_draws == h.grid.cells_per_side ** 2 == 100
    with pytest.raises(ValueError):
        h.answers[0, 0] = 0.0


def test_collect_is_unbiased(four_points):
    runs = np.stack([
        collect(four_points, 50.0, 1.0, np.random.default_rng(seed)).answers for seed in range(4000)
    ])
    # Laplace(1) has variance 2, so the mean of 4000 draws has sd ~0.022
    np.testing.assert_allclose(runs.mean(axis=0), np.ones((2, 2)), atol=0.1)


def test_noise_free_is_gated(four_points, monkeypatch):
    monkeypatch.setattr(settings, "allow_noise_free", False)
    with pytest.raises(ConfigError):
        collect(four_points, 50.0, 0.2, np.random.default_rng(0), noise_free=True)


def test_collect_rejects_bad_epsilon(four_points):
    with pytest.raises(ValueError):
        collect(four_points, 50.0, 0.0, np.random.default_rng(0))


def test_audit_counts_reads_by_phase(uniform_dataset):
    audited = AuditedDataset(uniform_dataset)
    collect(audited, 50.0, 0.2, np.random.default_rng(0))
    assert audited.audit().point_reads == uniform_dataset.n
    audited.seal()
    with audited.out_of_band():
        true_count(audited, RangeQuery.at(0.0, 0.0, 10.0))
    audit = audited.audit()
    assert audit.post_collection_reads == 0
    assert audit.evaluation_reads == uniform_dataset.n
    assert audit.compliant
    audited.coordinates()
    assert not audited.audit().compliant


def test_histogram_document_round_trip(uniform_dataset):
    h = collect(uniform_dataset, 40.0, 0.2, np.random.default_rng(5))
    back = NoisyHistogram.from_document(h.to_document())
    assert_array_equal(back.answers, h.answers)
    assert back.grid == h.grid
    assert h.as_map()[(40.0, 0.0)] == h.answers[0, 1]
