import json

import numpy as np
import pandas as pd
import pytest
from numpy.testing import assert_array_equal

from snh import evaluation
from snh.collect import AuditedDataset
from snh.evaluation import (
    AGGREGATES,
    SWEEP_COLUMNS,
    Workload,
    evaluate,
    evaluate_methods,
    gen_synthetic,
    gen_workload,
    run_sweep,
    sweep_points,
)
from snh.geo import GeoPoint, RangeQuery, Region, true_counts
from snh.schemas import LadderConfig, Method, RunConfig, SweepAxis, TrainConfig


class Exact:
    def __init__(self, d):
        self.d = d

    def answer_many(self, queries):
        w = Workload.of(queries) if not isinstance(queries, Workload) else queries
        return true_counts(self.d, w.cx, w.cy, w.r).astype(float)


class Zero:
    def answer_many(self, queries):
        return np.zeros(len(list(queries)))


def test_workload_is_reproducible(small_region):
    a = gen_workload(small_region, 50, seed=3)
    b = gen_workload(small_region, 50, seed=3)
    c = gen_workload(small_region, 50, seed=4)
    assert_array_equal(a.cx, b.cx)
    assert_array_equal(a.r, b.r)
    assert not np.array_equal(a.cx, c.cx)
    single = gen_workload(small_region, 1, seed=9)
    assert len(single) == 1
    assert_array_equal(single.r, gen_workload(small_region, 1, seed=9).r)


def test_workload_sizes_and_centers(small_region):
    w = gen_workload(small_region)
    assert len(w) == 5000
    assert np.all((w.r >= 25.0) & (w.r <= 100.0))
    # uniform on [25, 100]: sd 21.65, so the mean of 5000 draws sits well within 1.5
    assert abs(w.r.mean() - 62.5) < 1.5
    centers_x = w.cx + w.r / 2.0
    assert np.all((centers_x >= 0.0) & (centers_x <= small_region.side))
    assert np.any(w.cx < 0.0)


def test_workload_anchored_on_dataset(four_points):
    w = gen_workload(four_points.region, 200, 10.0, 20.0, seed=1, anchor=four_points)
    centers = set(zip(np.round(w.cx + w.r / 2, 9), np.round(w.cy + w.r / 2, 9)))
    assert centers <= {(10.0, 10.0), (10.0, 90.0), (90.0, 10.0), (90.0, 90.0)}


def test_workload_rejects_bad_arguments(small_region):
    with pytest.raises(ValueError):
        gen_workload(small_region, 0)
    with pytest.raises(ValueError):
        gen_workload(small_region, 10, l=50.0, u=20.0)


def test_workload_csv_round_trip(small_region, tmp_path):
    w = gen_workload(small_region, 20, seed=2)
    back = Workload.read_csv(w.write_csv(tmp_path / "w.csv"))
    assert_array_equal(back.cx, w.cx)
    assert_array_equal(back.r, w.r)


def test_uniform_synthetic_fills_quadrants():
    region = Region(center=GeoPoint(lat=0.0, lon=0.0), side=1000.0)
    d = gen_synthetic("uniform", 10_000, region, seed=5)
    assert d.n == 10_000
    xs, ys = d.coordinates()
    bound = 3.0 * np.sqrt(2500 * 0.75)
    for west in (True, False):
        for south in (True, False):
            inside = ((xs < 500.0) == west) & ((ys < 500.0) == south)
            assert abs(np.count_nonzero(inside) - 2500) <= bound


def test_synthetic_is_reproducible(small_region):
    a = gen_synthetic("gaussian-mixture", 500, small_region, seed=2)
    b = gen_synthetic("gaussian-mixture", 500, small_region, seed=2)
    assert_array_equal(a.xs, b.xs)
    assert np.all(small_region.contains(a.xs, a.ys))


def test_mixture_with_zero_sigma_collapses_to_center(small_region):
    d = gen_synthetic("gaussian-mixture", 300, small_region, centers=[(123.0, 321.0)], sigma=0.0, seed=1)
    assert np.all(d.xs == 123.0)
    assert np.all(d.ys == 321.0)


def test_mixture_rejects_centers_outside(small_region):
    with pytest.raises(ValueError):
        gen_synthetic("gaussian-mixture", 10, small_region, centers=[(500.0, 10.0)])


def test_perfect_answerer_has_zero_error(uniform_dataset):
    w = gen_workload(uniform_dataset.region, 100, seed=1)
    report = evaluate(Exact(uniform_dataset), w, uniform_dataset, method="exact")
    assert np.all(report.rows["rel_error"] == 0.0)
    assert report.psi == pytest.approx(2.0)


def test_zero_answerer_errors(four_points):
    queries = [RangeQuery.at(40.0, 40.0, 20.0), RangeQuery.at(0.0, 0.0, 50.0)]
    report = evaluate(Zero(), queries, four_points, psi=0.5)
    assert report.rows["rel_error"].tolist() == [0.0, 1.0]


def test_aggregates_recompute_from_rows(uniform_dataset, tmp_path):
    w = gen_workload(uniform_dataset.region, 300, seed=6)
    report = evaluate(Zero(), w, uniform_dataset, psi=1.0, method="zero", config={"note": "x"})
    err = report.rows["rel_error"].to_numpy()
    agg = report.aggregates()
    assert agg == {"mean": np.mean(err), "median": np.median(err), "p90": np.percentile(err, 90)}
    csv_path, json_path = report.write(tmp_path, "zero")
    assert list(pd.read_csv(csv_path).columns) == ["cx", "cy", "r", "estimate", "truth", "rel_error"]
    summary = json.loads(json_path.read_text())
    assert summary["median"] == agg["median"]
    assert summary["config"] == {"note": "x"}


def test_truth_reads_are_booked_as_evaluation(uniform_dataset):
    audited = AuditedDataset(uniform_dataset)
    audited.seal()
    evaluate(Zero(), [RangeQuery.at(0.0, 0.0, 50.0)], audited)
    audit = audited.audit()
    assert audit.post_collection_reads == 0
    assert audit.evaluation_reads == uniform_dataset.n


def test_evaluate_methods_runs_each(uniform_dataset):
    w = gen_workload(uniform_dataset.region, 30, seed=1)
    reports = evaluate_methods(uniform_dataset, {"exact": Exact(uniform_dataset), "zero": Zero()}, w)
    assert set(reports) == {"exact", "zero"}
    assert reports["exact"].aggregates()["mean"] == 0.0


def sweep_config(**overrides) -> RunConfig:
    base = dict(
        methods=[Method.identity, Method.ug],
        epsilons=[0.5, 1.0],
        seeds=[0, 1],
        ladder=LadderConfig(l=25.0, u=100.0, k=2),
        train=TrainConfig(depth=2, width=4, epochs=5),
    )
    base.update(overrides)
    return RunConfig(**base)


def test_sweep_points_assign_rho_per_method():
    cfg = sweep_config(methods=[Method.snh, Method.snh_ug, Method.ug], seeds=[0])
    points = sweep_points(cfg, [0.5], lambda eps: 80.0)
    assert [(p.method, p.rho) for p in points] == [(Method.snh, 80.0), (Method.snh_ug, None), (Method.ug, None)]
    by_rho = sweep_points(sweep_config(vary=SweepAxis.rho, seeds=[0]), [20.0], lambda eps: 1.0)
    assert by_rho[0].rho == 20.0 and by_rho[0].epsilon == 0.2


def test_sweep_writes_long_format_rows(uniform_dataset):
    cfg = sweep_config()
    w = gen_workload(uniform_dataset.region, 40, seed=2)
    frame = run_sweep(uniform_dataset, cfg, cfg.epsilons, w, rho_for=lambda eps: 40.0)
    assert list(frame.columns) == SWEEP_COLUMNS
    assert len(frame) == 2 * 2 * 2 * len(AGGREGATES)
    assert (frame["status"] == "ok").all()
    assert set(frame.loc[frame["method"] == "identity", "rho"]) == {40.0}


def test_sweep_records_failed_points_and_continues(uniform_dataset, monkeypatch):
    def broken(*args, **kwargs):
        raise RuntimeError("grid exploded")

    monkeypatch.setattr(evaluation, "ug_answerer", broken)
    cfg = sweep_config(seeds=[0])
    w = gen_workload(uniform_dataset.region, 20, seed=2)
    frame = run_sweep(uniform_dataset, cfg, cfg.epsilons, w, rho_for=lambda eps: 40.0)
    failed = frame[frame["status"] == "failed"]
    assert set(failed["method"]) == {"ug"}
    assert failed["metric_value"].isna().all()
    assert failed["error"].str.contains("grid exploded").all()
    assert (frame.loc[frame["method"] == "identity", "status"] == "ok").all()


def test_sweep_over_k_fits_snh(uniform_dataset):
    cfg = sweep_config(methods=[Method.snh], vary=SweepAxis.k, seeds=[0], epsilon=1.0)
    w = gen_workload(uniform_dataset.region, 20, seed=2)
    frame = run_sweep(uniform_dataset, cfg, [1.0, 2.0], w, rho_for=lambda eps: 50.0)
    assert (frame["status"] == "ok").all()
    assert sorted(set(frame["k"])) == [1, 2]
