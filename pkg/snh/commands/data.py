import argparse
import logging

from ..config import settings
from ..evaluation import gen_synthetic, gen_workload
from ..geo import ingest_csv
from ..schemas import SyntheticKind
from ..storage import save_planar_dataset
from .common import add_run_options, load_dataset, load_run_config, print_json, require

logger = logging.getLogger(__name__)


def register(subparsers) -> None:
    ingest = subparsers.add_parser(
        "ingest", help="project a lat,lon CSV onto the region", argument_default=argparse.SUPPRESS
    )
    add_run_options(ingest)
    ingest.add_argument("--input", required=True, help="CSV with lat and lon columns")
    ingest.set_defaults(handler=cmd_ingest)

    synth = subparsers.add_parser(
        "synth", help="generate a synthetic dataset or a query workload", argument_default=argparse.SUPPRESS
    )
    add_run_options(synth)
    synth.add_argument("what", choices=["dataset", "workload"])
    synth.add_argument("--kind", choices=[k.value for k in SyntheticKind], default=SyntheticKind.uniform.value)
    synth.add_argument("--n", type=int, default=10000, help="number of points")
    synth.add_argument("--components", type=int, default=5)
    synth.add_argument("--sigma", type=float, default=None, help="mixture spread in meters")
    synth.add_argument("--anchor", default=None, help="public dataset whose points center the queries")
    synth.set_defaults(handler=cmd_synth)


def cmd_ingest(args: argparse.Namespace) -> None:
    cfg = load_run_config(args)
    output = require(cfg.output, "--output")
    region = cfg.region.to_region()
    dataset = ingest_csv(settings.resolve(args.input), region)
    path = save_planar_dataset(dataset, settings.resolve(output), source=str(args.input))
    print_json({"dataset": str(path), "n": dataset.n, "side": region.side})


def cmd_synth(args: argparse.Namespace) -> None:
    cfg = load_run_config(args)
    output = settings.resolve(require(cfg.output, "--output"))
    if args.what == "dataset":
        dataset = gen_synthetic(
            args.kind, args.n, cfg.region.to_region(),
            components=args.components, sigma=args.sigma, seed=cfg.seed,
        )
        save_planar_dataset(dataset, output, source=f"synthetic:{args.kind}")
        print_json({"dataset": str(output), "n": dataset.n, "kind": args.kind})
        return

    anchor = load_dataset(args.anchor) if args.anchor else None
    region = anchor.region if anchor is not None else cfg.region.to_region()
    workload = gen_workload(
        region, cfg.workload_count, cfg.ladder.l, cfg.ladder.u,
        seed=cfg.seed, anchor=anchor,
    )
    workload.write_csv(output)
    logger.info(f"Wrote {len(workload)} queries to {output}")
    print_json({"workload": str(output), "count": len(workload)})
