import argparse
import logging

from .. import model as snh_model
from ..baselines import GridAnswerer
from ..config import settings
from ..errors import ConfigError
from ..evaluation import evaluate_methods, run_sweep
from ..paramselect import candidate_ladder
from ..schemas import Method, SweepAxis
from ..storage import write_json, write_table
from .common import (
    add_run_options,
    load_dataset,
    load_run_config,
    load_workload,
    print_json,
    require,
    rho_resolver,
    write_resolved_config,
)

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    ev = subparsers.add_parser(
        "eval", help="relative error of a bundle on a test workload", argument_default=argparse.SUPPRESS
    )
    add_run_options(ev)
    ev.set_defaults(handler=cmd_eval)

    sweep = subparsers.add_parser(
        "sweep", help="error versus epsilon, rho or k for several methods", argument_default=argparse.SUPPRESS
    )
    add_run_options(sweep)
    sweep.set_defaults(handler=cmd_sweep)


def cmd_eval(args: argparse.Namespace) -> None:
    cfg = load_run_config(args)
    bundle = snh_model.load(settings.resolve(require(cfg.model, "--model")))
    truth = load_dataset(require(cfg.dataset, "--dataset"))
    if truth.region != bundle.region:
        raise ConfigError("dataset region differs from the bundle region")
    workload = load_workload(cfg, cfg.test_workload, truth.region)

    answerers = {Method.snh.value: bundle}
    if bundle.histogram is not None:
        answerers[Method.identity.value] = GridAnswerer(bundle.histogram)
    reports = evaluate_methods(truth, answerers, workload, bundle.psi)

    out = settings.resolve(cfg.output or "eval")
    summaries = {}
    for name, report in reports.items():
        report.config.update({"model": cfg.model, "rho": bundle.rho, "epsilon": bundle.epsilon})
        report.write(out, name)
        summaries[name] = report.summary().model_dump(mode="json")
    write_json(summaries, out / "summary.json")
    write_resolved_config(cfg, out)
    print_json(summaries)


def cmd_sweep(args: argparse.Namespace) -> None:
    cfg = load_run_config(args)
    d = load_dataset(require(cfg.dataset, "--dataset"))
    if cfg.vary == SweepAxis.epsilon:
        values = list(cfg.epsilons)
    elif cfg.vary == SweepAxis.rho:
        values = candidate_ladder(d.region.side, cfg.rho_steps)
    else:
        values = [float(k) for k in cfg.k_values]
    if not values:
        raise ConfigError(f"nothing to sweep over for vary={cfg.vary.value}")

    needs_rho = cfg.vary != SweepAxis.rho and any(m in (Method.snh, Method.identity) for m in cfg.methods)
    rho_for = rho_resolver(cfg, d.n, d.region) if needs_rho else (lambda epsilon: float("nan"))
    test_workload = load_workload(cfg, cfg.test_workload, d.region, index=0)
    train_workload = load_workload(cfg, cfg.workload, d.region, index=1) if cfg.workload else None

    frame = run_sweep(d, cfg, values, test_workload, rho_for=rho_for, train_workload=train_workload)
    out = settings.resolve(cfg.output or "sweep")
    path = write_table(frame, out / "results.csv")
    write_resolved_config(cfg, out)
    failed = int((frame["status"] == "failed").sum()) if len(frame) else 0
    print_json({"results": str(path), "rows": len(frame), "failed_rows": failed})
