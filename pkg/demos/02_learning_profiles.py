# coding: utf-8

# # Variability profiles of simulated drivers
#
# Three synthetic drivers share one maneuver but differ in how their
# trial-to-trial noise evolves.  Each baseline trajectory is compared with the
# embedding of the driver's final trials.

# %%

import numpy as np

from trajmmd import (
    Kernel,
    LearningSchedule,
    ManeuverModel,
    SplitSpec,
    mmd_sequence,
    regress_fixation,
    segmented_regression,
    trend_statistics,
)
from trajmmd.synthetic import generate_subject

kernel = Kernel(32.0)
split = SplitSpec(8, 4)
model = ManeuverModel()

schedules = {
    "steady": LearningSchedule("constant", 0.3),
    "learner": LearningSchedule("geometric_decay", 0.6, 0.6),
    "relapse": LearningSchedule("decay_then_growth", 0.6, 0.6, reversal_index=4),
}

# %% [markdown]
# Noise amplitude per trajectory for each schedule:

# %%

for name, sched in schedules.items():
    print(f"{name:8s}", np.round(sched.amplitudes(12), 3))

# %% [markdown]
# Profiles and their trend labels.  The steady driver's values are exchangeable,
# so its label is essentially a coin toss between flat and something else.

# %%

subjects = {}
for k, (name, sched) in enumerate(schedules.items()):
    ds = generate_subject(model, sched, 12, seed=40 + k, subject_id=name, fixation_intercept=2.0, fixation_slope=-0.1, fixation_noise=0.05)
    prof = mmd_sequence(ds, split, kernel)
    trend = trend_statistics(prof)
    subjects[name] = (ds, prof)
    print(f"{name:8s} rho={trend.spearman_rho:+.2f} -> {trend.classification:13s}", np.round(prof.values, 3))

# %% [markdown]
# Fixation duration against MMD for the learner, as one line and split after the
# fourth trajectory.

# %%

ds, prof = subjects["learner"]
print(regress_fixation(prof, ds).describe("learner"))
first, second = segmented_regression(prof, ds, breakpoint=4)
print(first.describe("learner 1-4"))
print(second.describe("learner 5-8"))
