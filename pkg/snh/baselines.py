import logging
import math
from dataclasses import dataclass

import numpy as np

from .augment import grid_estimates
from .collect import NoisyHistogram, PointSource, RandomSource, collect
from .geo import RangeQuery, query_arrays

logger = logging.getLogger(__name__)

UG_CONSTANT = 10.0


def ug_granularity(n: int, epsilon: float, c: float = UG_CONSTANT) -> int:
    """Cells per side m = round(sqrt(n * epsilon / c)), at least 1."""
    if n <= 0 or epsilon <= 0 or c <= 0:
        raise ValueError(f"UG granularity needs positive n, epsilon and c, got {n}, {epsilon}, {c}")
    return max(1, int(round(math.sqrt(n * epsilon / c))))


def ug_rho(side: float, n: int, epsilon: float, c: float = UG_CONSTANT) -> float:
    return side / ug_granularity(n, epsilon, c)


@dataclass(frozen=True, eq=False)
class GridAnswerer:
    """Answers range counts from a released histogram under the uniformity assumption."""
    histogram: NoisyHistogram

    def raw_answers(self, cx, cy, r) -> np.ndarray:
        h = self.histogram
        return grid_estimates(h.answers, h.grid, cx, cy, r)

    def answer_many(self, queries) -> np.ndarray:
        cx, cy, r = query_arrays(queries)
        return np.maximum(self.raw_answers(cx, cy, r), 0.0)

    def answer(self, q: RangeQuery) -> float:
        return float(self.answer_many([q])[0])


def grid_answer(g: GridAnswerer, q: RangeQuery) -> float:
    return g.answer(q)


def identity_answerer(d: PointSource, rho: float, epsilon: float, rng: RandomSource) -> GridAnswerer:
    return GridAnswerer(collect(d, rho, epsilon, rng))


def ug_answerer(d: PointSource, epsilon: float, rng: RandomSource, *, c: float = UG_CONSTANT) -> GridAnswerer:
    # n is treated as public, as for the training label scale
    m = ug_granularity(d.n, epsilon, c)
    logger.info(f"UG baseline: {m}x{m} grid for n={d.n}, epsilon={epsilon:g}")
    return GridAnswerer(collect(d, d.region.side / m, epsilon, rng))
