"""Engagement-only control against the hinge-shaped arm on paired seeds.

Usage: ``python demos/03_shaped_vs_control.py [seeds]`` with seeds like ``0,1``.
Each seed trains both arms for the full default schedule (about two minutes
per seed on one core). Writes the comparison CSV to the working directory.
"""
# %%
import sys

from shapedrec.harness.config import ExperimentConfig
from shapedrec.harness.csvout import write_csv
from shapedrec.harness.experiment import compare_arms, comparison_table

seeds = [int(s) for s in (sys.argv[1] if len(sys.argv) > 1 else "0").split(",")]
cfg = ExperimentConfig(seeds=seeds)
cmp = compare_arms(cfg)

# %%
for row in cmp.rows:
    print(
        f"seed {row['seed']}: satisfied {row['rel_satisfied_engagement']:+.2%}, "
        f"unsatisfied {row['rel_unsatisfied_engagement']:+.2%}, "
        f"high-sat share {row['control_high_sat_share']:.3f} -> {row['experiment_high_sat_share']:.3f}"
    )
print("sign test p:", cmp.summary["sign_test_p"], "(needs 5+ seeds)")
print(write_csv("compare-demo.csv", *comparison_table(cmp)))
