import argparse
import logging
import sys

from .. import model as snh_model
from ..baselines import GridAnswerer
from ..config import settings
from ..errors import AuditViolationError, ConfigError
from ..evaluation import Workload
from ..storage import check_dataset_exists, write_table
from .common import (
    add_run_options,
    load_dataset,
    load_paramselect,
    load_run_config,
    print_json,
    require,
    rho_resolver,
    write_resolved_config,
)

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    fit = subparsers.add_parser(
        "fit", help="collect the noisy grid once and train the SNH networks", argument_default=argparse.SUPPRESS
    )
    add_run_options(fit)
    fit.set_defaults(handler=cmd_fit)

    answer = subparsers.add_parser(
        "answer", help="answer a cx,cy,r query CSV from a model bundle", argument_default=argparse.SUPPRESS
    )
    add_run_options(answer)
    answer.add_argument("--queries", required=True, help="CSV with cx, cy, r columns")
    answer.add_argument("--identity", action="store_true", default=False,
                        help="answer from the bundle's noisy grid instead of the networks")
    answer.set_defaults(handler=cmd_answer)

    audit = subparsers.add_parser(
        "audit", help="check a bundle's record access report", argument_default=argparse.SUPPRESS
    )
    add_run_options(audit)
    audit.set_defaults(handler=cmd_audit)


def cmd_fit(args: argparse.Namespace) -> None:
    cfg = load_run_config(args)
    dataset_path = require(cfg.dataset, "--dataset")
    if cfg.rho == "paramselect":
        # fail on a missing dataset or model before any record is read
        check_dataset_exists(settings.resolve(dataset_path))
        load_paramselect(cfg)
    dataset = load_dataset(dataset_path)
    workload = Workload.read_csv(settings.resolve(cfg.workload)) if cfg.workload else None

    rho = rho_resolver(cfg, dataset.n, dataset.region)(cfg.epsilon)
    fitted = snh_model.fit(
        dataset, cfg.epsilon, rho, cfg.ladder, cfg.train, workload,
        seed=cfg.seed, scaling=cfg.scaling, secure_rng=cfg.secure_rng, n_jobs=cfg.n_jobs,
    )
    out = settings.resolve(cfg.output or "model")
    snh_model.save(fitted, out)
    write_resolved_config(cfg.model_copy(update={"rho": rho}), out)
    print_json({
        "bundle": str(out),
        "rho": rho,
        "epsilon": cfg.epsilon,
        "sizes": list(fitted.ladder.sizes),
        "audit": fitted.audit.model_dump() if fitted.audit else None,
    })


def cmd_answer(args: argparse.Namespace) -> None:
    cfg = load_run_config(args)
    bundle = snh_model.load(settings.resolve(require(cfg.model, "--model")))
    queries = Workload.read_csv(settings.resolve(args.queries))
    if args.identity:
        if bundle.histogram is None:
            raise ConfigError("this bundle carries no noisy histogram")
        answers = GridAnswerer(bundle.histogram).answer_many(queries)
    else:
        answers = bundle.answer_many(queries)
    frame = queries.to_frame().assign(answer=answers)
    if cfg.output:
        path = write_table(frame, settings.resolve(cfg.output))
        logger.info(f"Wrote {len(frame)} answers to {path}")
    else:
        frame.to_csv(sys.stdout, index=False)


def cmd_audit(args: argparse.Namespace) -> None:
    cfg = load_run_config(args)
    audit = snh_model.load_audit(settings.resolve(require(cfg.model, "--model")))
    report = {**audit.model_dump(), "compliant": audit.compliant}
    if not audit.compliant:
        raise AuditViolationError(
            f"{audit.post_collection_reads} record reads after collection", extra={"audit": report}
        )
    print_json(report)
