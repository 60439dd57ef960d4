"""
A finite game and the regret bound
==================================

Rows are classes, columns are candidate models and ``M[i, j]`` is the
accuracy of model ``j`` on class ``i``.  The weighting player runs projected
multiplicative weights and the model player best-responds.  On a finite
game every term of the regret bound can be evaluated exactly.
"""

# %%
import math

import numpy as np

from clam.game import run_mw_game, tau_theorem, verify_theorem1
from clam.simplex import MWConfig, Projection, RestrictedSimplex

rng = np.random.default_rng(0)
n, m, T = 10, 8, 2000
M = rng.random((n, m))
s = RestrictedSimplex(n, 0.01)

# %% [markdown]
# The learning rate in the bound depends on the largest clipping share
# ``alpha``, which is only known after a run.  Probe with ``tau = 1`` first,
# then rerun with the derived rate.

# %%
probe = verify_theorem1(run_mw_game(M, T, MWConfig(1.0, Projection.PROOF_CLIP), s), s)
tau = tau_theorem(n, T, probe.max_alpha)
trace = run_mw_game(M, T, MWConfig(tau, Projection.PROOF_CLIP), s)
diag = verify_theorem1(trace, s)
print(f"tau = {tau:.4f}, max alpha (probe) = {probe.max_alpha:.3f}")
print(f"per-step violations: {diag.per_step_violations} of {T}, largest slack {diag.max_slack:.2e}")

# %%
gap = diag.lhs - diag.best_fixed
allowed = math.log(n) / T + (1 + diag.max_alpha) * math.sqrt(math.log(n) / T)
print(f"average value {diag.lhs:.4f}, best fixed {diag.best_fixed:.4f}")
print(f"regret {gap:.4f} <= {allowed:.4f}: {gap <= allowed}")
print(f"exact right-hand side {diag.rhs_exact:.4f}")

# %% [markdown]
# Matching pennies has value 1/2.  The long-run average approaches it, with
# an overshoot of roughly ``tau / 8`` for a fixed step.

# %%
for tau in (0.5, 0.1, 0.02):
    tr = run_mw_game(np.eye(2), 20_000, MWConfig(tau, Projection.PROOF_CLIP), RestrictedSimplex(2, 0.01))
    print(f"tau={tau:<5} average value {tr.values.mean():.4f}")
