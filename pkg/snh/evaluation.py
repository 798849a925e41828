import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Iterator, Optional, Protocol, Sequence

import numpy as np
import pandas as pd

from .baselines import identity_answerer, ug_answerer, ug_rho
from .collect import AuditedDataset
from .geo import PlanarDataset, RangeQuery, Region, query_arrays, relative_errors, true_counts
from .model import fit
from .schemas import EvalSummary, LadderConfig, Method, RunConfig, SweepAxis, SyntheticKind, TrainConfig
from .storage import read_query_csv, write_json, write_table
from .utils import seeding

logger = logging.getLogger(__name__)

AGGREGATES = ("mean", "median", "p90")
SWEEP_COLUMNS = [
    "method", "vary", "value", "epsilon", "rho", "k", "seed", "aggregate", "metric_value", "status", "error",
]


class Answerer(Protocol):
    def answer_many(self, queries) -> np.ndarray: ...


@dataclass(frozen=True, eq=False)
class Workload:
    """Range count queries as corner and size arrays."""
    cx: np.ndarray
    cy: np.ndarray
    r: np.ndarray
    seed: Optional[int] = None
    l: Optional[float] = None
    u: Optional[float] = None

    def __len__(self) -> int:
        return int(np.size(self.cx))

    def __iter__(self) -> Iterator[RangeQuery]:
        for x, y, r in zip(self.cx, self.cy, self.r):
            yield RangeQuery.at(float(x), float(y), float(r))

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame({"cx": self.cx, "cy": self.cy, "r": self.r})

    def write_csv(self, path: str | Path) -> Path:
        return write_table(self.to_frame(), path)

    @classmethod
    def read_csv(cls, path: str | Path) -> "Workload":
        cx, cy, r = read_query_csv(path)
        bounds = (float(r.min()), float(r.max())) if r.size else (None, None)
        return cls(cx=cx, cy=cy, r=r, l=bounds[0], u=bounds[1])

    @classmethod
    def of(cls, queries) -> "Workload":
        cx, cy, r = query_arrays(queries)
        return cls(cx=cx, cy=cy, r=r)


def gen_workload(
    region: Region,
    count: int = 5000,
    l: float = 25.0,
    u: float = 100.0,
    seed: int = 0,
    *,
    anchor: Optional[PlanarDataset] = None,
) -> Workload:
    """Square queries with sizes uniform in [l, u].

    Centers are uniform over the region, or drawn from the points of the public
    ``anchor`` dataset; corners are center - r/2 so queries may hang off the region.
    """
    if count < 1:
        raise ValueError(f"workload size must be at least 1, got {count}")
    if not 0 < l <= u:
        raise ValueError(f"query sizes need 0 < l <= u, got l={l}, u={u}")
    rng = seeding.derive_rng(seed, seeding.WORKLOAD)
    r = rng.uniform(l, u, size=count)
    if anchor is None:
        centers_x = rng.uniform(0.0, region.side, size=count)
        centers_y = rng.uniform(0.0, region.side, size=count)
    else:
        if anchor.n == 0:
            raise ValueError("cannot anchor a workload on an empty dataset")
        xs, ys = anchor.coordinates()
        pick = rng.integers(0, anchor.n, size=count)
        centers_x, centers_y = xs[pick], ys[pick]
    return Workload(cx=centers_x - r / 2.0, cy=centers_y - r / 2.0, r=r, seed=seed, l=l, u=u)


def _inside(values: np.ndarray, side: float) -> np.ndarray:
    # uniform draws can round up to the open bound
    return np.minimum(values, np.nextafter(side, 0.0))


def gen_synthetic(
    kind: SyntheticKind | str,
    n: int,
    region: Region,
    *,
    components: int = 5,
    sigma: Optional[float] = None,
    centers: Optional[Sequence[tuple[float, float]]] = None,
    seed: int = 0,
    max_rounds: int = 1000,
) -> PlanarDataset:
    """Uniform points, or a Gaussian mixture truncated to the region by resampling.

    Mixture defaults: ``components`` centers uniform over the central 80% of the region,
    equal weights, ``sigma = side / 20``.
    """
    kind = SyntheticKind(kind)
    if n < 1:
        raise ValueError(f"synthetic dataset needs n >= 1, got {n}")
    rng = seeding.derive_rng(seed, seeding.SYNTHETIC)
    side = region.side
    if kind == SyntheticKind.uniform:
        xs = _inside(rng.uniform(0.0, side, size=n), side)
        ys = _inside(rng.uniform(0.0, side, size=n), side)
        return PlanarDataset(xs=xs, ys=ys, region=region)

    if centers is None:
        mu = rng.uniform(0.1 * side, 0.9 * side, size=(components, 2))
    else:
        mu = np.asarray(centers, dtype=np.float64).reshape(-1, 2)
    if not np.all(region.contains(mu[:, 0], mu[:, 1])):
        raise ValueError("mixture centers must lie inside the region")
    sigma = side / 20.0 if sigma is None else float(sigma)
    if sigma < 0:
        raise ValueError(f"sigma must be non-negative, got {sigma}")

    label = rng.integers(0, len(mu), size=n)
    xs = np.empty(n)
    ys = np.empty(n)
    outside = np.arange(n)
    for _ in range(max_rounds):
        xs[outside] = rng.normal(mu[label[outside], 0], sigma)
        ys[outside] = rng.normal(mu[label[outside], 1], sigma)
        outside = outside[~region.contains(xs[outside], ys[outside])]
        if outside.size == 0:
            return PlanarDataset(xs=xs, ys=ys, region=region)
    raise ValueError(f"{outside.size} mixture points still outside the region after {max_rounds} rounds")


@dataclass(eq=False)
class EvalReport:
    method: str
    psi: float
    # cx, cy, r, estimate, truth, rel_error
    rows: pd.DataFrame
    config: dict[str, Any] = field(default_factory=dict)

    def aggregates(self) -> dict[str, float]:
        err = self.rows["rel_error"].to_numpy(dtype=np.float64)
        if err.size == 0:
            return {name: float("nan") for name in AGGREGATES}
        return {
            "mean": float(np.mean(err)),
            "median": float(np.median(err)),
            "p90": float(np.percentile(err, 90)),
        }

    def summary(self) -> EvalSummary:
        return EvalSummary(method=self.method, count=len(self.rows), psi=self.psi,
                           config=self.config, **self.aggregates())

    def write(self, directory: str | Path, name: str = "eval") -> tuple[Path, Path]:
        directory = Path(directory)
        csv_path = write_table(self.rows, directory / f"{name}.csv")
        json_path = write_json(self.summary().model_dump(mode="json"), directory / f"{name}.summary.json")
        return csv_path, json_path


def evaluate(
    answerer: Answerer,
    workload,
    truth: PlanarDataset | AuditedDataset,
    psi: Optional[float] = None,
    *,
    method: str = "",
    config: Optional[dict[str, Any]] = None,
) -> EvalReport:
    """Relative error of every workload answer against the exact count.

    Exact counts read the records; on an audited dataset they are booked as
    evaluation reads rather than pipeline reads.
    """
    cx, cy, r = query_arrays(workload)
    psi = TrainConfig().psi_fraction * truth.n if psi is None else psi
    if isinstance(truth, AuditedDataset):
        with truth.out_of_band():
            exact = true_counts(truth, cx, cy, r)
    else:
        exact = true_counts(truth, cx, cy, r)
    estimate = np.asarray(answerer.answer_many(workload), dtype=np.float64)
    rows = pd.DataFrame({
        "cx": cx, "cy": cy, "r": r,
        "estimate": estimate,
        "truth": exact,
        "rel_error": relative_errors(estimate, exact, psi),
    })
    report = EvalReport(method=method, psi=psi, rows=rows, config=config or {})
    agg = report.aggregates()
    logger.info(f"Evaluated {method or 'answerer'} on {len(rows)} queries: "
                f"mean={agg['mean']:.4f} median={agg['median']:.4f} p90={agg['p90']:.4f}")
    return report


@dataclass(frozen=True)
class SweepPoint:
    method: Method
    vary: SweepAxis
    value: float
    epsilon: float
    rho: Optional[float]
    k: int
    seed: int


def sweep_points(
    cfg: RunConfig, values: Sequence[float], rho_for: Callable[[float], float]
) -> list[SweepPoint]:
    """Expand the sweep axis into one point per (method, value, seed)."""
    points = []
    for method in cfg.methods:
        for value in values:
            eps = float(value) if cfg.vary == SweepAxis.epsilon else cfg.epsilon
            k = int(value) if cfg.vary == SweepAxis.k else cfg.ladder.k
            if method == Method.ug:
                rho = None
            elif cfg.vary == SweepAxis.rho and method != Method.snh_ug:
                rho = float(value)
            else:
                rho = None if method == Method.snh_ug else rho_for(eps)
            for s in cfg.seeds:
                points.append(SweepPoint(method, cfg.vary, float(value), eps, rho, k, s))
    return points


def run_point(
    p: SweepPoint,
    d: PlanarDataset,
    cfg: RunConfig,
    test_workload,
    train_workload=None,
) -> tuple[float, EvalReport]:
    run_seed = seeding.derive_seed(cfg.seed, seeding.SWEEP, p.seed)
    ladder = LadderConfig(l=cfg.ladder.l, u=cfg.ladder.u, k=p.k)
    answerer: Answerer
    if p.method == Method.ug:
        answerer = ug_answerer(d, p.epsilon, seeding.derive_rng(run_seed, seeding.COLLECT), c=cfg.ug_c)
        rho = answerer.histogram.grid.rho
    elif p.method == Method.identity:
        # same collection stream as an SNH fit with this seed, so both see one noisy grid
        answerer = identity_answerer(d, p.rho, p.epsilon, seeding.derive_rng(run_seed, seeding.COLLECT))
        rho = p.rho
    else:
        rho = ug_rho(d.region.side, d.n, p.epsilon, cfg.ug_c) if p.method == Method.snh_ug else p.rho
        answerer = fit(d, p.epsilon, rho, ladder, cfg.train, train_workload,
                       seed=run_seed, scaling=cfg.scaling, n_jobs=cfg.n_jobs)
    report = evaluate(answerer, test_workload, d, method=p.method.value,
                      config={"epsilon": p.epsilon, "rho": rho, "k": p.k, "seed": p.seed})
    return rho, report


def run_sweep(
    d: PlanarDataset,
    cfg: RunConfig,
    values: Sequence[float],
    test_workload,
    *,
    rho_for: Callable[[float], float],
    train_workload=None,
) -> pd.DataFrame:
    """Long-format results: one row per (point, aggregate). A failing point is recorded
    with status ``failed`` and the sweep moves on."""
    rows = []
    for p in sweep_points(cfg, values, rho_for):
        base = {"method": p.method.value, "vary": p.vary.value, "value": p.value,
                "epsilon": p.epsilon, "k": p.k, "seed": p.seed}
        try:
            rho, report = run_point(p, d, cfg, test_workload, train_workload)
        except Exception as exc:
            logger.exception(f"Sweep point {base} failed")
            for agg in AGGREGATES:
                rows.append({**base, "rho": p.rho, "aggregate": agg, "metric_value": float("nan"),
                             "status": "failed", "error": f"{type(exc).__name__}: {exc}"})
            continue
        for agg, value in report.aggregates().items():
            rows.append({**base, "rho": rho, "aggregate": agg, "metric_value": value,
                         "status": "ok", "error": ""})
        logger.info(f"Sweep {p.method.value} {p.vary.value}={p.value:g} seed={p.seed}: "
                    f"median={report.aggregates()['median']:.4f}")
    return pd.DataFrame(rows, columns=SWEEP_COLUMNS)


def evaluate_methods(
    d: PlanarDataset | AuditedDataset,
    answerers: dict[str, Answerer],
    workload,
    psi: Optional[float] = None,
) -> dict[str, EvalReport]:
    return {name: evaluate(a, workload, d, psi, method=name) for name, a in answerers.items()}

