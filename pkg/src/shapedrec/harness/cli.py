"""Command-line entry point: ``shapedrec <command> [options]``.

Every command reads an optional JSON experiment config, applies ``--set``
overrides and writes its artifacts plus one CSV into the output directory.
The output directory is ``--output-dir``, else ``$SHAPEDREC_OUTPUT_DIR``,
else the config's ``output`` field, else the working directory.

On failure a single JSON object ``{"error": ..., "message": ...}`` is
printed to stderr and the exit code is nonzero.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from ..errors import ConfigurationError, DataError, ShapedRecError
from ..imputation import ImputationHead, holdout_split
from ..policy import ModelConfig, PolicyModel, load_checkpoint, save_checkpoint
from ..sim.logs import EVAL_STREAM, LOG_STREAM, generate_logs, read_logs, write_logs
from ..sim.world import SimConfig, SimWorld, spawn_world
from .config import ArmConfig, ExperimentConfig
from .csvout import write_csv
from .experiment import (
    MIN_SEEDS_FOR_SIGNIFICANCE,
    SeedData,
    _build_trainer,
    _head_key,
    compare_arms,
    comparison_table,
    sweep,
)
from .metrics import compute_metrics

OUTPUT_ENV = "SHAPEDREC_OUTPUT_DIR"
EXIT_USAGE, EXIT_FAILURE = 2, 1

log = logging.getLogger("shapedrec")


class UsageError(ShapedRecError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # route argparse failures through the JSON error line
        raise UsageError(message)


# -- config assembly -------------------------------------------------------------
def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        return text


def apply_override(d: dict, assignment: str) -> None:
    """Set ``a.b.c=value`` in a config dict. ``arms.<name>.`` selects an arm; ``arms.*.`` all arms."""
    if "=" not in assignment:
        raise ConfigurationError(f"override {assignment!r} is not of the form key=value")
    key, raw = assignment.split("=", 1)
    path = key.strip().split(".")
    value = _parse_value(raw)
    if path[0] == "arms" and len(path) >= 3:
        targets = [a for a in d["arms"] if path[1] in ("*", a["name"])]
        if not targets:
            raise ConfigurationError(f"override {key!r}: no arm named {path[1]!r}")
        for arm in targets:
            _set_path(arm, path[2:], value, key)
        return
    _set_path(d, path, value, key)


def _set_path(d: dict, path: list[str], value, key: str) -> None:
    for part in path[:-1]:
        if not isinstance(d.get(part), dict):
            raise ConfigurationError(f"override {key!r}: {part!r} is not a config section")
        d = d[part]
    d[path[-1]] = value


def load_config(path: str | None, overrides: list[str], seeds: str | None = None) -> ExperimentConfig:
    cfg = ExperimentConfig.load(path) if path else ExperimentConfig()
    d = cfg.to_dict()
    for o in overrides:
        apply_override(d, o)
    if seeds is not None:
        d["seeds"] = _parse_seeds(seeds)
    return ExperimentConfig.from_dict(d)


def _parse_seeds(text: str) -> list[int]:
    try:
        if ":" in text:
            lo, hi = text.split(":")
            return list(range(int(lo), int(hi)))
        return [int(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigurationError(f"bad seed list {text!r}; use 0,1,2 or 0:10") from exc


def output_dir(args, cfg: ExperimentConfig) -> Path:
    out = Path(args.output_dir or os.environ.get(OUTPUT_ENV) or cfg.output or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


# -- shared steps ----------------------------------------------------------------
def _seed(args, cfg: ExperimentConfig) -> int:
    return cfg.seeds[0] if args.seed is None else args.seed


def _world(args, cfg: ExperimentConfig, seed: int) -> SimWorld:
    if getattr(args, "world", None):
        return SimWorld.load(args.world)
    return spawn_world(replace(cfg.sim, seed=seed))


def _behavior_logs(cfg: ExperimentConfig, world: SimWorld, seed: int):
    behavior = PolicyModel(cfg.model_config(world.config), world.creator, seed=seed).snapshot()
    return generate_logs(world, behavior, cfg.n_log_episodes, seed=seed, stream=LOG_STREAM).training_view()


def _emit(path: Path) -> None:
    print(path)


# -- commands --------------------------------------------------------------------
def cmd_config(args, cfg, out):
    path = out / "config.json"
    cfg.save(path)
    _emit(path)


def cmd_spawn(args, cfg, out):
    seed = _seed(args, cfg)
    world = spawn_world(replace(cfg.sim, seed=seed))
    world.save(out / "world.json")
    rows = [
        {
            "item_id": i,
            "creator_id": int(world.creator[i]),
            "appeal": world.appeal[i],
            "quality": world.quality[i],
            "length_sec": world.length_sec[i],
        }
        for i in range(world.n_items)
    ]
    _emit(out / "world.json")
    _emit(write_csv(out / "world.csv", list(rows[0]), rows))


def cmd_log(args, cfg, out):
    seed = _seed(args, cfg)
    world = _world(args, cfg, seed)
    logs = _behavior_logs(cfg, world, seed)
    write_logs(logs, out / "logs.jsonl")
    ratings = logs.survey[logs.survey > 0]
    hist = np.bincount(ratings, minlength=6)[1:6]
    row = {
        "seed": seed,
        "episodes": logs.n_episodes,
        "steps": int(logs.item.size),
        "surveys": int(ratings.size),
        "mean_completion": float(logs.completion.mean()) if logs.item.size else None,
        "mean_propensity": float(logs.propensity.mean()) if logs.item.size else None,
        **{f"rating_{i}": int(c) for i, c in enumerate(hist, 1)},
    }
    _emit(out / "logs.jsonl")
    _emit(write_csv(out / "logs.csv", list(row), [row]))


def cmd_train(args, cfg, out):
    seed = _seed(args, cfg)
    arm = cfg.arm(args.arm) if args.arm else cfg.arms[-1]
    world = _world(args, cfg, seed)
    logs = read_logs(args.logs) if args.logs else _behavior_logs(cfg, world, seed)
    train, hold = holdout_split(logs, arm.train.holdout_fraction, seed)
    trainer, _ = _build_trainer(cfg, SeedData(seed, world, train, hold), arm, [_head_key(arm)])
    history = trainer.fit(train)
    auc = trainer.evaluate_holdout()
    manifest = {
        "sim": world.config.to_dict(),
        "model": trainer.model.config.to_dict(),
        "arm": arm.to_dict(),
        "seed": seed,
        "step": trainer.step,
        "head_prefix": trainer.head.prefix,
        "holdout_auc": auc,
    }
    ckpt = out / f"{arm.name}-seed{seed}.npz"
    save_checkpoint(ckpt, trainer.model.store, manifest)
    columns = ["step", "policy_objective", "imputation_loss", "n_labels", "shaped", "mean_reward", "holdout_auc"]
    rows = [{c: getattr(s, c) for c in columns} for s in history]
    _emit(ckpt)
    _emit(write_csv(out / f"train-{arm.name}-seed{seed}.csv", columns, rows))


def load_trained(path, world: SimWorld | None = None):
    """Rebuild (world, model, head, manifest) from a training checkpoint."""
    man, values = load_checkpoint(path)
    for key in ("sim", "model", "arm", "seed", "head_prefix"):
        if key not in man:
            raise DataError(f"{path}: checkpoint manifest lacks {key!r}; not written by `train`")
    world = world or spawn_world(SimConfig.from_dict(man["sim"]))
    arm = ArmConfig.from_dict(man["arm"])
    model = PolicyModel(ModelConfig.from_dict(man["model"]), world.creator, seed=man["seed"])
    head = ImputationHead(model, arm.feature_set, arm.head_hidden, seed=man["seed"], name=man["head_prefix"])
    model.store.load_values(values)
    return world, model, head, man


def cmd_eval(args, cfg, out):
    world = SimWorld.load(args.world) if args.world else None
    world, model, _, man = load_trained(args.checkpoint, world)
    seed = man["seed"] if args.seed is None else args.seed
    logs = generate_logs(world, model, cfg.n_eval_episodes, seed=seed, stream=EVAL_STREAM)
    report = compute_metrics(logs, man["arm"]["name"], seed)
    report.holdout_auc = man.get("holdout_auc")
    row = report.to_row()
    stem = Path(args.checkpoint).stem
    _emit(write_csv(out / f"eval-{stem}.csv", list(row), [row]))


def cmd_compare(args, cfg, out):
    if len(cfg.seeds) < MIN_SEEDS_FOR_SIGNIFICANCE:
        log.warning("fewer than %d seeds: no sign test is reported", MIN_SEEDS_FOR_SIGNIFICANCE)
    cmp = compare_arms(cfg, args.control, args.experiment, workers=args.workers)
    columns, rows = comparison_table(cmp)
    _emit(write_csv(out / f"compare-{cmp.control}-vs-{cmp.experiment}.csv", columns, rows))


def cmd_sweep(args, cfg, out):
    values = [_parse_value(v) for v in args.values.split(",")]
    columns, rows = sweep(cfg, args.parameter, values, args.arm, workers=args.workers)
    _emit(write_csv(out / f"sweep-{args.parameter}.csv", columns, rows))


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="experiment config JSON (defaults if omitted)")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override a config field, e.g. sim.rho=0.1")
    common.add_argument("--seeds", help="seed list, e.g. 0,1,2 or 0:10")
    common.add_argument("--output-dir", help=f"output directory (else ${OUTPUT_ENV})")
    common.add_argument("-v", "--verbose", action="count", default=0)

    p = _Parser(prog="shapedrec", description="Reward-shaped REINFORCE recommender experiments on a synthetic simulator.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sub.add_parser("config", parents=[common], help="write the effective config")
    s = sub.add_parser("spawn", parents=[common], help="generate a simulator world")
    s.add_argument("--seed", type=int)
    s = sub.add_parser("log", parents=[common], help="roll out behavior-policy logs")
    s.add_argument("--seed", type=int)
    s.add_argument("--world")
    s = sub.add_parser("train", parents=[common], help="train one arm and save a checkpoint")
    s.add_argument("--seed", type=int)
    s.add_argument("--arm")
    s.add_argument("--world")
    s.add_argument("--logs", help="behavior logs (JSON lines); generated if omitted")
    s = sub.add_parser("eval", parents=[common], help="evaluate a checkpoint on fresh simulated users")
    s.add_argument("checkpoint")
    s.add_argument("--seed", type=int)
    s.add_argument("--world")
    for name, helptext in (("compare", "paired control vs experiment over all seeds"), ("sweep", "one-parameter sweep")):
        s = sub.add_parser(name, parents=[common], help=helptext)
        s.add_argument("--workers", type=int, default=1)
        if name == "compare":
            s.add_argument("--control")
            s.add_argument("--experiment")
        else:
            s.add_argument("--parameter", required=True)
            s.add_argument("--values", required=True, help="comma-separated")
            s.add_argument("--arm")
    return p


COMMANDS = {
    "config": cmd_config,
    "spawn": cmd_spawn,
    "log": cmd_log,
    "train": cmd_train,
    "eval": cmd_eval,
    "compare": cmd_compare,
    "sweep": cmd_sweep,
}


def _fail(kind: str, message: str, code: int) -> int:
    print(json.dumps({"error": kind, "message": message}), file=sys.stderr)
    return code


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except UsageError as exc:
        return _fail("UsageError", str(exc), EXIT_USAGE)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2), format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config, args.set, args.seeds)
        COMMANDS[args.command](args, cfg, output_dir(args, cfg))
    except (ShapedRecError, KeyError, TypeError) as exc:
        return _fail(type(exc).__name__, str(exc), EXIT_USAGE if isinstance(exc, (ConfigurationError, TypeError)) else EXIT_FAILURE)
    except OSError as exc:
        return _fail("OSError", str(exc), EXIT_FAILURE)
    return 0


if __name__ == "__main__":
    sys.exit(main())
