# coding: utf-8

# # Kernel mean embeddings and MMD
#
# A handful of flattened trajectories is turned into an embedding, and two
# embeddings are compared with the biased MMD.  Run with `python3 demos/01_kernel_embeddings.py`.

# %%

import numpy as np

from trajmmd import Kernel, ManeuverModel, embed, embedding_eval, generate_trajectory, mmd, permutation_test
from trajmmd.trajectory import flatten

kernel = Kernel(sigma=32.0)
model = ManeuverModel()

# %% [markdown]
# Each trajectory is 1100 samples of (lateral offset, speed, heading), so a
# feature vector has 3300 entries.

# %%

X = np.stack([flatten(generate_trajectory(model, seed=s)).values for s in range(8)])
print("feature matrix", X.shape)

# %% [markdown]
# The embedding is a weighted sum of kernel sections.  Evaluated at one of its
# own samples it is large; far away from the data it drops toward zero.

# %%

p = embed(kernel, X)
print("embedding at sample 0:", round(embedding_eval(p, X[0]), 4))
print("embedding at a shifted point:", round(embedding_eval(p, X[0] + 5.0), 4))

# %% [markdown]
# Two batches from the same model should be close; a batch from a model with a
# narrower swerve should be further away.

# %%

Y_same = np.stack([flatten(generate_trajectory(model, seed=100 + s)).values for s in range(8)])
Y_diff = np.stack([flatten(generate_trajectory(ManeuverModel(lane_width=3.0), seed=200 + s)).values for s in range(8)])
print("MMD same model     ", mmd(p, embed(kernel, Y_same)).value)
print("MMD narrower swerve", mmd(p, embed(kernel, Y_diff)).value)

# %% [markdown]
# More samples per side shrink the estimate for identical models.

# %%

for m in (4, 16, 64):
    A = np.stack([flatten(generate_trajectory(model, seed=1000 + s)).values for s in range(m)])
    B = np.stack([flatten(generate_trajectory(model, seed=5000 + s)).values for s in range(m)])
    print(f"m = {m:3d}: MMD = {mmd(embed(kernel, A), embed(kernel, B)).value:.4f}")

# %% [markdown]
# The permutation test turns the statistic into a p-value.

# %%

for label, Y in (("same model", Y_same), ("narrower swerve", Y_diff)):
    res = permutation_test(X, Y, kernel, n_permutations=500, seed=0)
    print(f"{label:16s} observed {res.observed.value:.4f}  p = {res.p_value:.3f}")
