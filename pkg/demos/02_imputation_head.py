"""Training only the satisfaction head on behavior logs.

The policy stays frozen at initialization while the head learns from survey
labels. Prints holdout AUC for a few feature sets and negative-class weights.
Takes about a minute.
"""
# %%
from dataclasses import replace

import numpy as np

from shapedrec.harness.config import ExperimentConfig
from shapedrec.harness.experiment import prepare_seed
from shapedrec.imputation import ImbalanceConfig, ImputationHead, calibrate
from shapedrec.policy import PolicyModel
from shapedrec.reward import RewardConfig
from shapedrec.trainer import Trainer, TrainConfig

cfg = ExperimentConfig()
data = prepare_seed(cfg, seed=0)
print(f"train episodes {data.train_logs.n_episodes}, holdout episodes {data.holdout_logs.n_episodes}")


def fit_head(feature_set: str, weight: float, steps: int = 1500):
    model = PolicyModel(cfg.model_config(), data.world.creator, seed=0)
    head = ImputationHead(model, feature_set, seed=0)
    imb = ImbalanceConfig(negative_class_weight=weight)
    trainer = Trainer(model, head, RewardConfig.engagement_only(), TrainConfig(seed=0), imb, data.holdout_logs)
    logs = data.train_logs
    for _ in range(steps):
        trainer.imputation_update(trainer.sample_batch(logs))
    return trainer.evaluate_holdout(), trainer


# %% feature sets at the default weight
for fs in ("time-only", "item-only", "item+creator+time", "state+action"):
    auc, _ = fit_head(fs, 3.0)
    print(f"{fs:>18}: holdout AUC {auc:.3f}")

# %% weighting negatives shifts raw predictions down; calibration brings them back
auc, trainer = fit_head("state+action", 3.0)
scores, labels = trainer.holdout_scores(data.holdout_logs)
print(f"positive rate {labels.mean():.3f}; mean raw score {scores.mean():.3f}; "
      f"mean calibrated {np.mean(calibrate(scores, 3.0)):.3f}")
