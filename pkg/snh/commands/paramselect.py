import argparse
import logging

from ..config import settings
from ..errors import ConfigError
from ..paramselect import (
    build_training_set,
    fit_ensemble,
    predict_rho,
    read_samples,
    rho_selection_error,
    save_ensemble,
    write_samples,
)
from .common import (
    add_run_options,
    load_dataset,
    load_paramselect,
    load_run_config,
    print_json,
    public_surrogate,
    write_resolved_config,
)

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    train = subparsers.add_parser(
        "paramselect-train",
        help="label public datasets with their best rho and fit the ensemble",
        argument_default=argparse.SUPPRESS,
    )
    add_run_options(train)
    train.add_argument("--samples", default=None, help="reuse a samples CSV instead of searching rho")
    train.set_defaults(handler=cmd_train)

    predict = subparsers.add_parser(
        "paramselect-predict", help="predict rho for a sensitive dataset size", argument_default=argparse.SUPPRESS
    )
    add_run_options(predict)
    predict.add_argument("--n", type=int, required=True, help="cardinality of the sensitive dataset")
    predict.set_defaults(handler=cmd_predict)


def cmd_train(args: argparse.Namespace) -> None:
    cfg = load_run_config(args)
    out = settings.resolve(cfg.output or "paramselect")
    if args.samples:
        samples = read_samples(settings.resolve(args.samples))
        side = cfg.region.side
    else:
        if not cfg.public_datasets:
            raise ConfigError("--public-datasets is required to build ParamSelect training samples")
        public = [load_dataset(p) for p in cfg.public_datasets]
        side = public[0].region.side
        samples = build_training_set(
            public, cfg.epsilons,
            seed=cfg.seed, seeds=cfg.seeds, steps=cfg.rho_steps, workload_count=cfg.workload_count,
            ladder_cfg=cfg.ladder, train_cfg=cfg.train, scaling=cfg.scaling, n_jobs=cfg.n_jobs,
        )
        write_samples(samples, out / "samples.csv")

    ensemble = fit_ensemble(
        samples, cfg.n_trees, cfg.max_depth, cfg.seed, use_entropy=cfg.use_entropy, n_jobs=cfg.n_jobs
    )
    path = save_ensemble(ensemble, out / "paramselect.json")
    selection = rho_selection_error(samples, ensemble, side, c=cfg.ug_c)
    write_resolved_config(cfg, out)
    print_json({
        "model": str(path),
        "samples": len(samples),
        "features": list(ensemble.feature_names),
        "rho_selection_error": selection,
    })


def cmd_predict(args: argparse.Namespace) -> None:
    cfg = load_run_config(args)
    if args.n < 1:
        raise ConfigError(f"--n must be positive, got {args.n}")
    ensemble = load_paramselect(cfg)
    d_star = public_surrogate(cfg, ensemble)
    region = d_star.region if d_star is not None else cfg.region.to_region()
    rho = predict_rho(ensemble, region, d_star, args.n, cfg.epsilon)
    print_json({"rho": rho, "n": args.n, "epsilon": cfg.epsilon, "features": list(ensemble.feature_names)})
