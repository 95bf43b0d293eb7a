"""Estimate the empirical convergence-rate surface and fit it.

e_F(l1, l2) is the root mean square norm of the mixed difference at each
multi-index; its log2 should fall off like a max of two planes (a mixed
time-space plane and a pure-space plane). The fit recovers those slopes and
shifts itself to dominate the data everywhere.
"""

import math

from spdemc import estimate_rate_surface, fit_dominating_surface, get_preset
from spdemc.harness import regression_slope

preset = get_preset("linear_nu43")
surface = estimate_rate_surface(preset.problem, max_level=4, samples=500, seed=11)

print("log2 e_F over the grid:")
print("l1\\l2 " + "".join(f"{l2:>8d}" for l2 in range(5)))
for l1 in range(5):
    row = [math.log2(surface.point(l1, l2)[0]) for l2 in range(5)]
    print(f"{l1:>5d} " + "".join(f"{v:>8.2f}" for v in row))

# slope along the time axis at a fixed fine spatial level (theory: b1/2 = 0.5)
ys = [-math.log2(surface.point(l1, 4)[0]) for l1 in range(5)]
print("\ntime-axis slope at l2=4:", round(regression_slope(range(5), ys), 3))
# slope along the space axis with no time refinement (theory: b2/2 = 2/3)
ys = [-math.log2(surface.point(0, l2)[0]) for l2 in range(5)]
print("space-axis slope at l1=0:", round(regression_slope(range(5), ys), 3))

fit = fit_dominating_surface(surface)
print("\ndominating surface fit:")
print(f"  mixed plane rates  ({fit.b1_bar:.3f}, {fit.b2_bar:.3f})")
print(f"  pure-space rate     {fit.b3_bar:.3f}")
print(f"  dominates data      {fit.dominates}")
