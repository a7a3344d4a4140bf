"""Paired-seed arm runs, arm comparison and one-parameter sweeps.

Every arm of a seed sees the same world, the same behavior logs and the
same evaluation users, so per-seed differences are paired.

Runs are organized to avoid repeating identical work:

* Arms that share a training schedule and discount are bit-identical through
  warm-up (the reward is engagement-only there), so the warm-up is trained
  once and then forked for each arm.
* Imputation heads never influence the shared bottom. Arms that differ only
  in head settings, and whose reward ignores the head, can therefore share
  one policy run with the extra heads trained alongside as probes.

``run_seed(..., share=False)`` runs every arm from scratch instead. Both
paths produce identical results.
"""
from __future__ import annotations

import copy
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from ..errors import ConfigurationError, ShapedRecError
from ..imputation import ImbalanceConfig, ImputationHead, holdout_split
from ..policy import PolicyModel
from ..reward import RewardConfig
from ..sim.logs import EVAL_STREAM, LOG_STREAM, EpisodeLogs, generate_logs
from ..sim.world import SimWorld, spawn_world
from ..trainer import Trainer
from .config import ArmConfig, ExperimentConfig
from .metrics import MetricReport, compute_metrics, relative_change, sign_test

log = logging.getLogger(__name__)

COMPARE_METRICS = (
    "satisfied_engagement",
    "unsatisfied_engagement",
    "total_engagement",
    "high_sat_share",
    "mean_true_sat",
    "likes",
    "dislikes",
    "holdout_auc",
)
MIN_SEEDS_FOR_SIGNIFICANCE = 5
SWEEP_PARAMETERS = ("negative_class_weight", "transform", "gamma", "hinge_threshold", "feature_set")


@dataclass
class SeedData:
    seed: int
    world: SimWorld
    train_logs: EpisodeLogs
    holdout_logs: EpisodeLogs


@dataclass
class ArmResult:
    arm: str
    seed: int
    report: MetricReport | None
    failed: bool = False
    error: str = ""
    eval_logs: EpisodeLogs | None = field(default=None, repr=False)


def prepare_seed(cfg: ExperimentConfig, seed: int, holdout_fraction: float = 0.2) -> SeedData:
    """World, behavior-policy logs and the by-user holdout split for one seed.

    The behavior policy is a frozen snapshot of the freshly initialized model,
    which is also every arm's starting point.
    """
    sim = replace(cfg.sim, seed=seed)
    world = spawn_world(sim)
    behavior = PolicyModel(cfg.model_config(sim), world.creator, seed=seed).snapshot()
    logs = generate_logs(world, behavior, cfg.n_log_episodes, seed=seed, stream=LOG_STREAM).training_view()
    train, hold = holdout_split(logs, holdout_fraction, seed)
    return SeedData(seed, world, train, hold)


def _head_key(arm: ArmConfig) -> tuple:
    return (arm.feature_set, arm.head_hidden, arm.imbalance)


def _build_trainer(cfg: ExperimentConfig, data: SeedData, arm: ArmConfig, head_keys: list[tuple]) -> tuple[Trainer, dict]:
    model = PolicyModel(cfg.model_config(data.world.config), data.world.creator, seed=data.seed)
    heads = {}
    for i, (feature_set, hidden, imbalance) in enumerate(head_keys):
        head = ImputationHead(model, feature_set, hidden, seed=data.seed, name=f"head{i}/")
        heads[(feature_set, hidden, imbalance)] = (head, imbalance)
    main, main_imb = heads[_head_key(arm)]
    trainer = Trainer(
        model,
        main,
        arm.reward,
        replace(arm.train, seed=data.seed),
        main_imb,
        data.holdout_logs,
        probes=[v for k, v in heads.items() if k != _head_key(arm)],
    )
    return trainer, heads


def _retarget(trainer: Trainer, heads: dict, arm: ArmConfig, keep: list[tuple]) -> Trainer:
    """Point an (already copied) trainer at ``arm``'s reward and head."""
    head, imbalance = heads[_head_key(arm)]
    trainer.head, trainer.imbalance, trainer.reward = head, imbalance, arm.reward
    trainer.probes = [heads[k] for k in keep if k != _head_key(arm)]
    trainer.holdout_auc = trainer.head_aucs.get(head.prefix)
    return trainer


def _fork(trainer: Trainer, heads: dict) -> tuple[Trainer, dict]:
    clone, clone_heads = copy.deepcopy((trainer, heads))
    return clone, clone_heads


def _report(cfg: ExperimentConfig, data: SeedData, trainer: Trainer, arms: list[ArmConfig], heads: dict) -> list[ArmResult]:
    eval_logs = generate_logs(data.world, trainer.model, cfg.n_eval_episodes, seed=data.seed, stream=EVAL_STREAM)
    trainer.evaluate_holdout()  # every head's AUC at the final parameters
    out = []
    for arm in arms:
        report = compute_metrics(eval_logs, arm.name, data.seed)
        head = heads[_head_key(arm)][0]
        report.holdout_auc = trainer.head_aucs.get(head.prefix)
        out.append(ArmResult(arm.name, data.seed, report, eval_logs=eval_logs))
    return out


def _run_group(cfg: ExperimentConfig, data: SeedData, arms: list[ArmConfig]) -> list[ArmResult]:
    """Arms sharing a training schedule and discount: shared warm-up, then forks."""
    train = arms[0].train
    head_keys = list(dict.fromkeys(_head_key(a) for a in arms))
    trainer, heads = _build_trainer(cfg, data, arms[0], head_keys)
    trainer.reward = RewardConfig.engagement_only(arms[0].reward.gamma)
    prefix = min(train.warmup_steps, train.total_steps)
    trainer.fit(data.train_logs, prefix)

    passive = [a for a in arms if not a.reward.use_imputed_satisfaction]
    shaped: dict[tuple, list[ArmConfig]] = {}
    for a in arms:
        if a.reward.use_imputed_satisfaction:
            shaped.setdefault((a.reward, _head_key(a)), []).append(a)
    branches = ([passive] if passive else []) + list(shaped.values())

    results = []
    for i, branch in enumerate(branches):
        t, h = (trainer, heads) if i == len(branches) - 1 else _fork(trainer, heads)
        keep = list(dict.fromkeys(_head_key(a) for a in branch))
        _retarget(t, h, branch[0], keep)
        t.fit(data.train_logs, train.total_steps - prefix)
        results.extend(_report(cfg, data, t, branch, h))
    return results


def _run_alone(cfg: ExperimentConfig, data: SeedData, arm: ArmConfig) -> list[ArmResult]:
    trainer, heads = _build_trainer(cfg, data, arm, [_head_key(arm)])
    trainer.fit(data.train_logs)
    return _report(cfg, data, trainer, [arm], heads)


def run_seed(cfg: ExperimentConfig, seed: int, arms: list[ArmConfig] | None = None, share: bool = True) -> dict[str, ArmResult]:
    """Train and evaluate every arm on one seed. Failed arms are returned flagged."""
    arms = list(cfg.arms if arms is None else arms)
    fractions = {a.train.holdout_fraction for a in arms}
    if len(fractions) != 1:
        raise ConfigurationError("all arms must use the same holdout fraction")
    data = prepare_seed(cfg, seed, fractions.pop())
    if share:
        groups: dict[tuple, list[ArmConfig]] = {}
        for a in arms:
            groups.setdefault((a.train, a.reward.gamma), []).append(a)
        jobs = list(groups.values())
    else:
        jobs = [[a] for a in arms]
    results: dict[str, ArmResult] = {}
    for job in jobs:
        try:
            out = _run_group(cfg, data, job) if share else _run_alone(cfg, data, job[0])
        except (ShapedRecError, ValueError, RuntimeError, FloatingPointError) as exc:
            log.warning("seed %d arms %s failed: %s", seed, [a.name for a in job], exc)
            out = [ArmResult(a.name, seed, None, failed=True, error=f"{type(exc).__name__}: {exc}") for a in job]
        results.update({r.arm: r for r in out})
    return {a.name: results[a.name] for a in arms}


def run_experiment(
    cfg: ExperimentConfig, arms: list[ArmConfig] | None = None, share: bool = True, workers: int = 1
) -> dict[int, dict[str, ArmResult]]:
    """Every seed, optionally across worker processes; results are the same either way."""
    if workers <= 1 or len(cfg.seeds) == 1:
        return {seed: run_seed(cfg, seed, arms, share) for seed in cfg.seeds}
    with ProcessPoolExecutor(max_workers=workers) as pool:
        futures = {seed: pool.submit(run_seed, cfg, seed, arms, share) for seed in cfg.seeds}
        return {seed: futures[seed].result() for seed in cfg.seeds}


# -- comparison ----------------------------------------------------------------
@dataclass
class Comparison:
    control: str
    experiment: str
    rows: list[dict]
    summary: dict

    @property
    def columns(self) -> list[str]:
        return list(self.rows[0]) if self.rows else list(self.summary)


def _metric(report: MetricReport | None, name: str):
    if report is None:
        return None
    return getattr(report, name)


def compare_results(results: dict[int, dict[str, ArmResult]], control: str, experiment: str) -> Comparison:
    """Per-seed deltas, mean relative changes and sign tests between two arms."""
    rows = []
    for seed, by_arm in results.items():
        c, e = by_arm[control], by_arm[experiment]
        failed = c.failed or e.failed
        row: dict = {"seed": seed, "status": "failed" if failed else "ok"}
        for m in COMPARE_METRICS:
            cv, ev = _metric(c.report, m), _metric(e.report, m)
            ok = not failed and cv is not None and ev is not None
            row[f"control_{m}"] = cv
            row[f"experiment_{m}"] = ev
            row[f"delta_{m}"] = ev - cv if ok else None
            row[f"rel_{m}"] = relative_change(ev, cv) if ok else None
        row["sign_test_p"] = None
        row["error"] = "; ".join(x for x in (c.error, e.error) if x)
        rows.append(row)

    good = [r for r in rows if r["status"] == "ok"]
    summary: dict = {"seed": "summary", "status": "ok" if len(good) == len(rows) else "partial"}
    for m in COMPARE_METRICS:
        for prefix in ("control", "experiment", "delta", "rel"):
            vals = [r[f"{prefix}_{m}"] for r in good if r[f"{prefix}_{m}"] is not None]
            summary[f"{prefix}_{m}"] = float(np.mean(vals)) if vals else None
    deltas = [r["delta_satisfied_engagement"] for r in good]
    summary["sign_test_p"] = sign_test(deltas) if len(good) >= MIN_SEEDS_FOR_SIGNIFICANCE else None
    summary["error"] = f"{len(rows) - len(good)} failed seeds" if len(good) < len(rows) else ""
    return Comparison(control, experiment, rows, summary)


def compare_arms(
    cfg: ExperimentConfig, control: str | None = None, experiment: str | None = None, workers: int = 1
) -> Comparison:
    """Run the two arms on every seed and compare them (the first two arms by default)."""
    if len(cfg.arms) < 2 and (control is None or experiment is None):
        raise ConfigurationError("comparison needs two arms")
    control = control or cfg.arms[0].name
    experiment = experiment or cfg.arms[1].name
    arms = [cfg.arm(control), cfg.arm(experiment)]
    return compare_results(run_experiment(cfg, arms, workers=workers), control, experiment)


def comparison_table(cmp: Comparison) -> tuple[list[str], list[dict]]:
    rows = cmp.rows + [cmp.summary]
    return cmp.columns, rows


# -- sweeps --------------------------------------------------------------------
def _override(arm: ArmConfig, parameter: str, value) -> ArmConfig:
    if parameter == "negative_class_weight":
        return replace(arm, imbalance=replace(arm.imbalance, negative_class_weight=float(value)))
    if parameter == "feature_set":
        return replace(arm, feature_set=str(value))
    if parameter == "transform":
        return replace(arm, reward=replace(arm.reward, transform=str(value)))
    if parameter == "gamma":
        return replace(arm, reward=replace(arm.reward, gamma=float(value)))
    if parameter == "hinge_threshold":
        return replace(arm, reward=replace(arm.reward, hinge_threshold=float(value)))
    raise ConfigurationError(f"cannot sweep {parameter!r}; expected one of {SWEEP_PARAMETERS}")


def sweep_arms(base: ArmConfig, parameter: str, values) -> list[ArmConfig]:
    values = list(values)
    if not values:
        raise ConfigurationError("sweep needs at least one value")
    if len(set(map(str, values))) != len(values):
        raise ConfigurationError(f"duplicate sweep values: {values}")
    return [replace(_override(base, parameter, v), name=f"{parameter}={v}") for v in values]


def sweep(
    cfg: ExperimentConfig, parameter: str, values, arm: str | None = None, workers: int = 1
) -> tuple[list[str], list[dict]]:
    """One run per value per seed of ``arm`` (the last arm by default) with ``parameter`` set."""
    base = cfg.arm(arm) if arm else cfg.arms[-1]
    arms = sweep_arms(base, parameter, values)
    results = run_experiment(cfg, arms, workers=workers)
    metric_fields = [c for c in MetricReport.__dataclass_fields__ if c not in ("arm", "seed", "rating_hist")]
    columns = ["parameter", "value", "seed", "status"] + metric_fields + [f"rating_{i}" for i in range(1, 6)] + ["error"]
    rows = []
    for value, a in zip(values, arms):
        for seed in cfg.seeds:
            r = results[seed][a.name]
            row = {"parameter": parameter, "value": value, "seed": seed, "status": "failed" if r.failed else "ok", "error": r.error}
            if r.report is not None:
                row.update({k: v for k, v in r.report.to_row().items() if k != "arm"})
            rows.append({c: row.get(c) for c in columns})
    return columns, rows
