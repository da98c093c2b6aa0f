"""Analytic link throughputs against the slot-level simulator."""
# %%
import warnings

import numpy as np

from tofra import SimConfig, build_problem, fig3_scenario, run, solve_sa
from tofra.harness import GenParams, default_phy, generate_scenario, select_disjoint_paths
from tofra.simulator import link_success_census, queue_stability_report
from tofra.throughput import ThroughputModel, aggregate_throughput

# %% Saturated relays and unlimited retries match the model's assumptions.
sc = fig3_scenario(1.5)
rates = solve_sa(build_problem(sc)).rates
m = run(sc, rates, SimConfig(total_slots=100_000, max_retransmits=None, saturated_relays=True, seed=1))
model = ThroughputModel(sc).link_throughputs(rates)
census = link_success_census(m)
for link, t in zip(sc.links, model):
    c = census[link]
    # census ratios are per attempt, the model counts successes per slot
    print(link, f"model {t:.4f}  sim {c.successes / m.slots:.4f}  "
                f"success per attempt {c.ratio:.3f} [{c.low:.3f}, {c.high:.3f}]")
print("AAT model", round(aggregate_throughput(sc, rates), 4), "sim", round(m.aat, 4))

# %% A generated scenario, with real queues and a retry limit of three.
with warnings.catch_warnings():
    warnings.simplefilter("ignore")
    g = select_disjoint_paths(generate_scenario(GenParams(seed=11), default_phy(1.0)), 0.9, "hops")
print("hops per flow:", [f.hops for f in g.flows])
res = solve_sa(build_problem(g, delay_margin=0.2, silent_idle_paths=True))
m = run(g, res.rates, SimConfig(total_slots=50_000, seed=2, silent_idle_paths=True))
print("rates", np.round(res.rates, 3))
print("AAT model", round(res.predicted_aat, 4), "sim", round(m.aat, 4))
print("relay queues stable:", all(v.stable for v in queue_stability_report(m).values()))
