"""
Restricted simplex and the three projections
============================================

Class weights live on the simplex with a floor ``u_min`` on every entry.
After a multiplicative step the weights can drop below the floor, and a
projection puts them back.  This script compares the three projections on
the small vector used throughout the tests.
"""

# %%
import numpy as np

from clam.simplex import (
    MWConfig,
    Projection,
    RestrictedSimplex,
    ggf_value,
    min_linear_over_simplex,
    mw_update,
    project,
)

s = RestrictedSimplex(3, 0.15)
x = np.array([0.7, 0.2, 0.1])

# %% [markdown]
# The single-pass clip raises the small entry to the floor and renormalises.
# Renormalising pulls it below the floor again, so the result is not in the
# set.  The scaled clip and the Euclidean projection both land inside.

# %%
for method in Projection:
    w = project(x, s, method)
    print(f"{method.value:12s} {np.round(w, 5)}  feasible={s.contains(w)}")

# %% [markdown]
# One multiplicative-weights step: classes with low accuracy gain weight.

# %%
w = s.uniform()
acc = np.array([0.95, 0.60, 0.80])
for t in range(5):
    w = mw_update(w, acc, MWConfig(tau=1.0), s)
    print(t + 1, np.round(w, 4))

# %% [markdown]
# Minimising a linear function over the restricted simplex puts the floor on
# every class and the leftover mass on the worst one.  A GGF with weights
# sorted in decreasing order gives the largest weight to the smallest value.

# %%
w_star, value = min_linear_over_simplex(acc, s)
print("minimiser", w_star, "value", round(value, 4))
print("GGF value", ggf_value([0.5, 0.3, 0.2], acc))
