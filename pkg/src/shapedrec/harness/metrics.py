"""Evaluation metrics computed from ground-truth episode logs."""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import binomtest, rankdata

from ..errors import EvaluationError
from ..sim.logs import EVAL, EpisodeLogs

SATISFIED_THRESHOLD = 0.5
HIGH_SAT_THRESHOLD = 0.9


def auc_roc(scores, labels) -> float:
    """Area under the ROC curve via the Mann-Whitney rank statistic (ties count 1/2)."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(bool)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise EvaluationError("AUC needs at least one positive and one negative label")
    ranks = rankdata(s)
    u = ranks[y].sum() - n_pos * (n_pos + 1) / 2.0
    return float(u / (n_pos * n_neg))


@dataclass
class MetricReport:
    arm: str
    seed: int = 0
    n_steps: int = 0
    total_engagement: float = 0.0
    satisfied_engagement: float = 0.0
    unsatisfied_engagement: float = 0.0
    high_sat_share: float = 0.0
    mean_true_sat: float = 0.0
    likes: int = 0
    dislikes: int = 0
    n_surveys: int = 0
    rating_hist: list[int] = field(default_factory=lambda: [0] * 5)
    holdout_auc: float | None = None

    def to_row(self) -> dict:
        row = asdict(self)
        hist = row.pop("rating_hist")
        for i, c in enumerate(hist, 1):
            row[f"rating_{i}"] = c
        return row


def compute_metrics(
    logs: EpisodeLogs,
    arm: str,
    seed: int = 0,
    satisfied_threshold: float = SATISFIED_THRESHOLD,
    high_threshold: float = HIGH_SAT_THRESHOLD,
) -> MetricReport:
    """Satisfied/unsatisfied engagement and satisfaction-distribution statistics."""
    if logs.mode != EVAL or not logs.has_ground_truth:
        raise EvaluationError("metrics need evaluation-mode logs with ground truth")
    truth = logs.ground_truth
    report = MetricReport(arm=arm, seed=seed)
    n = logs.item.size
    if n == 0:
        return report
    eng = logs.completion.ravel()
    sat = truth.true_sat_prob.ravel()
    satisfied = sat >= satisfied_threshold
    report.n_steps = int(n)
    report.satisfied_engagement = float(eng[satisfied].sum())
    report.unsatisfied_engagement = float(eng[~satisfied].sum())
    report.total_engagement = report.satisfied_engagement + report.unsatisfied_engagement
    report.high_sat_share = float(np.mean(sat >= high_threshold))
    report.mean_true_sat = float(sat.mean())
    report.likes = int(truth.like.sum())
    report.dislikes = int(truth.dislike.sum())
    ratings = logs.survey[logs.survey > 0]
    report.n_surveys = int(ratings.size)
    report.rating_hist = np.bincount(ratings, minlength=6)[1:6].astype(int).tolist()
    return report


def sign_test(deltas) -> float:
    """Two-sided sign-test p-value; zero deltas are dropped. 1.0 if all are zero."""
    d = np.asarray(deltas, dtype=np.float64)
    pos, neg = int((d > 0).sum()), int((d < 0).sum())
    if pos + neg == 0:
        return 1.0
    return float(binomtest(pos, pos + neg, 0.5, alternative="two-sided").pvalue)


def relative_change(experiment: float, control: float) -> float:
    return (experiment - control) / control if control != 0 else 0.0
