"""Optimal source rates on the two-flow toy topology as the SINR threshold grows."""
# %%
import numpy as np

from tofra import build_problem, fig3_scenario, solve_grid, solve_sa
from tofra.allocator import AllocationProblem, convexity_witness, s2_function

# Flow 0 runs 1 -> 2 -> 0 through relay 2, flow 1 is the single hop 3 -> 0.
# Both end at node 0, so every packet of one is interference for the other.
gammas = np.arange(0.25, 2.01, 0.25)

# %%
print(" gamma   q1(SA)  q3(SA)  q1(grid) q3(grid)  AAT")
for g in gammas:
    prob = build_problem(fig3_scenario(g))
    sa = solve_sa(prob)
    grid = solve_grid(prob, 0.01)
    print(f"{g:6.2f}  {sa.rates[0]:6.3f}  {sa.rates[1]:6.3f}  {grid.rates[0]:7.3f}  "
          f"{grid.rates[1]:7.3f}  {sa.predicted_aat:.4f}")

# %% Up to gamma = 1 both sources run flat out; beyond that the direct flow backs off
# so the relayed flow's second hop keeps up with its first (bounded delay).

# %% The bounded-delay constraint is not convex in (q1, q3):
prob = AllocationProblem(fig3_scenario(1.0))
(c,) = [c for c in prob.constraints if c.kind == "S2"]
g = s2_function(prob, c)
a, b, th, gap = convexity_witness(g, 2)
print(f"g({th}*{a} + {1 - th}*{b}) exceeds the chord by {gap:.4f}")
