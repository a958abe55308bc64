# %% [markdown]
# # Greedy snapshot selection and the online phase
#
# An affine family of reciprocals 1/sigma(mu) = b + sum_k mu_k g_k spans a
# space of dimension d + 1, so the greedy loop should stop after at most
# d + 1 snapshots with a vanishing surrogate distance.

# %%
import numpy as np

from resolvgreedy import (
    GreedyConfig,
    Grid1D,
    PiecewiseFn,
    SplitMix64,
    affine_reciprocal_family,
    apply_resolvent,
    greedy_run,
    online_approximate,
    primitive,
)

rng = SplitMix64(7)
M, d = 64, 3
modes = rng.uniform(-0.25, 0.25, (d, M)) / d
params = rng.uniform(-1.0, 1.0, (150, d))
family = affine_reciprocal_family(Grid1D(M), 1.5, list(modes), params)

# %%
result = greedy_run(family)
print("snapshots:", result.n, "stop:", result.stop_reason)
for k, value in enumerate(result.decay):
    print(f"  n={k}  max distance {value:.3e}")

# %% [markdown]
# With fewer snapshots the online approximation of a new resolvent is no
# longer exact. Its derivative error is still bounded by the surrogate
# distance times max |F|.

# %%
small = greedy_run(family, GreedyConfig(n_max=2))
tau = PiecewiseFn(Grid1D(M), 1.0 / (1.5 + modes.T @ rng.uniform(-1, 1, d)))
f = PiecewiseFn(Grid1D(M), rng.uniform(-1, 1, M))
online = online_approximate(small, tau, f)
err = (online.approx - apply_resolvent(tau, f)).derivative.linf_norm()
bound = online.surrogate_err * np.max(np.abs(primitive(f)))
print(f"error {err:.3e}  bound {bound:.3e}")
