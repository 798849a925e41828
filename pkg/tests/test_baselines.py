import numpy as np
import pytest
from numpy.testing import assert_allclose

from snh.augment import augment, size_ladder
from snh.baselines import (
    GridAnswerer,
    grid_answer,
    identity_answerer,
    ug_answerer,
    ug_granularity,
    ug_rho,
)
from snh.collect import Grid, NoisyHistogram
from snh.geo import RangeQuery
from snh.utils import seeding


def released(region, rho, counts) -> NoisyHistogram:
    return NoisyHistogram(grid=Grid.over(region, rho), answers=np.asarray(counts, dtype=float),
                          epsilon=1.0, n=int(np.sum(counts)), noise_draws=0)


@pytest.mark.parametrize("n, eps, m", [(100_000, 0.2, 45), (100_000, 0.8, 89), (10, 1.0, 1), (1, 0.01, 1)])
def test_ug_granularity(n, eps, m):
    assert ug_granularity(n, eps) == m


def test_ug_rho_divides_side():
    assert ug_rho(20_000.0, 100_000, 0.2) == pytest.approx(20_000.0 / 45)


def test_ug_granularity_rejects_non_positive():
    with pytest.raises(ValueError):
        ug_granularity(0, 0.1)


def test_grid_answer_full_cell_and_whole_grid(region_100):
    h = released(region_100, 50.0, [[1, 2], [3, 4]])
    g = GridAnswerer(h)
    assert grid_answer(g, RangeQuery.at(50.0, 0.0, 50.0)) == pytest.approx(2.0)
    assert g.answer(RangeQuery.at(0.0, 0.0, 100.0)) == pytest.approx(10.0)


def test_grid_answer_quarter_overlap(region_100):
    g = GridAnswerer(released(region_100, 50.0, [[1, 2], [3, 4]]))
    assert g.answer(RangeQuery.at(25.0, 25.0, 50.0)) == pytest.approx(2.5)


def test_grid_answer_clamps_negative_counts(region_100):
    g = GridAnswerer(released(region_100, 50.0, [[-3, 2], [3, 4]]))
    assert g.answer(RangeQuery.at(0.0, 0.0, 50.0)) == 0.0
    assert g.raw_answers([0.0], [0.0], [50.0])[0] == pytest.approx(-3.0)


def test_grid_answers_match_augmented_labels(region_100):
    rng = np.random.default_rng(3)
    h = released(region_100, 12.5, rng.normal(5.0, 3.0, size=(8, 8)))
    aug = augment(h, size_ladder(10.0, 40.0, 3))
    g = GridAnswerer(h)
    for i in range(3):
        cx, cy, labels = aug.samples(i)
        assert_allclose(g.raw_answers(cx, cy, np.full(cx.size, aug.ladder.sizes[i])), labels, rtol=1e-9, atol=1e-9)


def test_identity_total_matches_n_without_noise(uniform_dataset):
    g = identity_answerer(uniform_dataset, 40.0, 1.0, np.random.default_rng(0))
    # with noise the whole-region answer is n plus 100 Laplace draws
    total = float(np.sum(g.histogram.answers))
    assert abs(total - uniform_dataset.n) < 200.0
    assert g.histogram.noise_draws == 100


def test_ug_answerer_uses_granularity(uniform_dataset):
    rng = seeding.derive_rng(0, seeding.COLLECT)
    g = ug_answerer(uniform_dataset, 0.2, rng)
    m = ug_granularity(uniform_dataset.n, 0.2)
    assert g.histogram.grid.cells_per_side == m
    assert g.histogram.grid.rho == pytest.approx(uniform_dataset.region.side / m)
