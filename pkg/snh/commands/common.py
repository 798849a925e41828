"""Options and helpers shared by every command."""
import argparse
import json
import logging
from pathlib import Path
from typing import Any, Optional

from pydantic import ValidationError

from ..baselines import ug_rho
from ..config import settings
from ..errors import ConfigError, ParamSelectModelRequiredError
from ..evaluation import Workload, gen_workload
from ..geo import PlanarDataset, Region
from ..paramselect import TreeEnsemble, load_ensemble, predict_rho
from ..schemas import Method, RunConfig, ScalingMode, SweepAxis
from ..storage import load_planar_dataset, write_json
from ..utils import seeding

logger = logging.getLogger(__name__)

RESOLVED_CONFIG = "config.resolved.json"

# flag dest -> dotted RunConfig path
NESTED_FLAGS = {
    "lat0": "region.lat0",
    "lon0": "region.lon0",
    "side": "region.side",
    "l": "ladder.l",
    "u": "ladder.u",
    "k": "ladder.k",
    "depth": "train.depth",
    "width": "train.width",
    "epochs": "train.epochs",
    "lr": "train.lr",
    "batch_size": "train.batch_size",
    "full_batch_limit": "train.full_batch_limit",
    "psi_fraction": "train.psi_fraction",
}


def rho_value(text: str) -> float | str:
    if text in ("paramselect", "ug"):
        return text
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"rho must be a number, 'paramselect' or 'ug', got {text!r}")


def add_run_options(parser: argparse.ArgumentParser) -> None:
    """Flags that map onto RunConfig. Unset flags leave the config file value alone."""
    parser.add_argument("--config", help="JSON run config; flags override its values")
    parser.add_argument("--dataset", help="planar dataset CSV (x,y with .region.json sidecar)")
    parser.add_argument("--public-dataset", help="public surrogate dataset over the same region")
    parser.add_argument("--public-datasets", nargs="+", help="public datasets for ParamSelect training")
    parser.add_argument("--workload", help="public query workload CSV used for loss weights")
    parser.add_argument("--test-workload", help="evaluation workload CSV")
    parser.add_argument("--model", help="model bundle directory")
    parser.add_argument("--paramselect-model", help="ParamSelect model JSON")
    parser.add_argument("-o", "--output", help="output file or directory")

    region = parser.add_argument_group("region")
    region.add_argument("--lat0", type=float)
    region.add_argument("--lon0", type=float)
    region.add_argument("--side", type=float, help="region side in meters")

    pipeline = parser.add_argument_group("pipeline")
    pipeline.add_argument("--epsilon", type=float)
    pipeline.add_argument("--rho", type=rho_value, help="grid width in meters, 'paramselect' or 'ug'")
    pipeline.add_argument("--l", type=float, help="smallest training query size")
    pipeline.add_argument("--u", type=float, help="largest training query size")
    pipeline.add_argument("--k", type=int, help="number of training query sizes")
    pipeline.add_argument("--scaling", choices=[m.value for m in ScalingMode])
    pipeline.add_argument("--seed", type=int)
    pipeline.add_argument("--secure-rng", action="store_true")
    pipeline.add_argument("--n-jobs", type=int)

    train = parser.add_argument_group("training")
    train.add_argument("--depth", type=int)
    train.add_argument("--width", type=int)
    train.add_argument("--epochs", type=int)
    train.add_argument("--lr", type=float)
    train.add_argument("--batch-size", type=int)
    train.add_argument("--full-batch-limit", type=int)
    train.add_argument("--psi-fraction", type=float)

    experiments = parser.add_argument_group("experiments")
    experiments.add_argument("--workload-count", type=int)
    experiments.add_argument("--epsilons", type=float, nargs="+")
    experiments.add_argument("--methods", nargs="+", choices=[m.value for m in Method])
    experiments.add_argument("--seeds", type=int, nargs="+")
    experiments.add_argument("--vary", choices=[a.value for a in SweepAxis])
    experiments.add_argument("--rho-steps", type=int)
    experiments.add_argument("--k-values", type=int, nargs="+")
    experiments.add_argument("--ug-c", type=float)
    experiments.add_argument("--no-entropy", dest="use_entropy", action="store_false")
    experiments.add_argument("--n-trees", type=int)
    experiments.add_argument("--max-depth", type=int)


def _read_config_file(path: str) -> dict[str, Any]:
    resolved = settings.resolve(path)
    if not resolved.is_file():
        raise ConfigError(f"Config file not found: {resolved}")
    try:
        with resolved.open() as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"Config file {resolved} is not valid JSON: {exc}") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"Config file {resolved} must hold a JSON object")
    return raw


def _set_path(target: dict, dotted: str, value: Any) -> None:
    *parents, leaf = dotted.split(".")
    for key in parents:
        node = target.get(key)
        if not isinstance(node, dict):
            node = {}
            target[key] = node
        target = node
    target[leaf] = value


def load_run_config(args: argparse.Namespace) -> RunConfig:
    """Config file merged with flags, validated before any data is touched."""
    merged = _read_config_file(args.config) if getattr(args, "config", None) else {}
    given = vars(args)
    for dest, value in given.items():
        if dest in NESTED_FLAGS:
            _set_path(merged, NESTED_FLAGS[dest], value)
        elif dest in RunConfig.model_fields:
            merged[dest] = value
    try:
        cfg = RunConfig.model_validate(merged)
    except ValidationError as exc:
        problems = "; ".join(f"{'.'.join(str(p) for p in e['loc'])}: {e['msg']}" for e in exc.errors())
        raise ConfigError(f"Invalid run config: {problems}") from exc
    logger.debug(f"Resolved config: {cfg.model_dump(mode='json')}")
    return cfg


def write_resolved_config(cfg: RunConfig, directory: str | Path) -> Path:
    return write_json(cfg.model_dump(mode="json"), Path(directory) / RESOLVED_CONFIG)


def require(value: Optional[str], flag: str) -> str:
    if not value:
        raise ConfigError(f"{flag} is required for this command")
    return value


def load_dataset(path: str) -> PlanarDataset:
    return load_planar_dataset(settings.resolve(path))


def load_workload(cfg: RunConfig, path: Optional[str], region: Region, *, index: int = 0) -> Workload:
    """Read a workload CSV, or draw ``workload_count`` uniform queries over the region."""
    if path:
        return Workload.read_csv(settings.resolve(path))
    seed = seeding.derive_seed(cfg.seed, seeding.WORKLOAD, index)
    return gen_workload(region, cfg.workload_count, cfg.ladder.l, cfg.ladder.u, seed=seed)


def load_paramselect(cfg: RunConfig) -> TreeEnsemble:
    if not cfg.paramselect_model:
        raise ParamSelectModelRequiredError("rho='paramselect' needs --paramselect-model")
    return load_ensemble(settings.resolve(cfg.paramselect_model))


def public_surrogate(cfg: RunConfig, ensemble: TreeEnsemble) -> Optional[PlanarDataset]:
    if not ensemble.use_entropy:
        return None
    if not cfg.public_dataset:
        raise ConfigError("this ParamSelect model uses entropy; pass --public-dataset")
    return load_dataset(cfg.public_dataset)


def rho_resolver(cfg: RunConfig, n: int, region: Region):
    """Callable epsilon -> rho for the configured rho mode."""
    if isinstance(cfg.rho, float):
        return lambda epsilon: cfg.rho
    if cfg.rho == "ug":
        return lambda epsilon: ug_rho(region.side, n, epsilon, cfg.ug_c)
    ensemble = load_paramselect(cfg)
    d_star = public_surrogate(cfg, ensemble)
    return lambda epsilon: predict_rho(ensemble, region, d_star, n, epsilon)


def print_json(payload: dict) -> None:
    print(json.dumps(payload, indent=2, default=str))

