"""Run the multi-index and multilevel estimators side by side.

Both estimate E[X(T)] (zero for this problem) to tolerance eps with mean
square error O(eps^2); the interesting difference is where they spend their
samples and what that costs.
"""

import numpy as np

from spdemc import get_preset, mlmc_params, run_mimc, run_mlmc

preset = get_preset("linear_nu43")
eps = 2.0**-4

mimc = run_mimc(preset.problem, eps, preset.rates, seed=3)
print(f"multi-index estimator at eps = {eps}")
print(f"  |estimate|_H = {np.linalg.norm(mimc.value):.4f}  (target 0, gate 4*eps = {4*eps})")
print(f"  total cost   = {mimc.total_cost:,.0f} base-solve units")
print("  heaviest indices:")
for ell, st in sorted(mimc.per_index.items(), key=lambda kv: -kv[1].cost_units)[:5]:
    print(f"    {ell}: m = {st.samples:>7d}, mean|D| = {st.mean_norm:.4f}, "
          f"cost = {st.cost_units:,.0f}")

params = mlmc_params(eps, preset.rates.kappa, preset.rates.nu,
                     preset.rates.alpha1, preset.rates.alpha2)
mlmc = run_mlmc(preset.problem, eps, params, seed=3)
print(f"\nmultilevel estimator, {params.levels + 1} levels, grids "
      f"M = {params.m_steps}, N = {params.n_modes}")
print(f"  |estimate|_H = {np.linalg.norm(mlmc.value):.4f}")
print(f"  total cost   = {mlmc.total_cost:,.0f} base-solve units")

print(f"\ncost ratio multilevel / multi-index: "
      f"{mlmc.total_cost / mimc.total_cost:.2f}")
