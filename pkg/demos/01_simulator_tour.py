"""A tour of the simulated platform.

Run with ``python demos/01_simulator_tour.py``. Takes a few seconds.
"""
# %% spawn a world and log a day of uniform-random recommendations
import numpy as np

from shapedrec.sim import SimConfig, UniformPolicy, generate_logs, spawn_world

world = spawn_world(SimConfig(seed=0))
logs = generate_logs(world, UniformPolicy(world.n_items), 2000, seed=0)
truth = logs.ground_truth
print(f"{world.n_items} items, {logs.n_episodes} episodes of {logs.horizon} steps")

# %% appeal drives completion, quality drives satisfaction; they only loosely agree
print("corr(appeal, quality) =", round(float(np.corrcoef(world.appeal, world.quality)[0, 1]), 3))
comp, sat = logs.completion.ravel(), truth.true_sat_prob.ravel()
print("corr(completion, true satisfaction) =", round(float(np.corrcoef(comp, sat)[0, 1]), 3))

high_comp = comp > np.quantile(comp, 0.9)
print("among the top-decile completions, satisfaction ranges",
      np.round(np.quantile(sat[high_comp], [0.1, 0.5, 0.9]), 3))

# %% surveys are rare and lean positive
rated = logs.survey[logs.survey > 0]
print(f"survey responses: {rated.size} of {logs.item.size} steps ({rated.size / logs.item.size:.2%})")
print("rating histogram 1..5:", np.bincount(rated, minlength=6)[1:].tolist())

# %% likes and dislikes exist but are never used for training
print("likes", int(truth.like.sum()), "dislikes", int(truth.dislike.sum()))
