"""Throughput-optimal flow-rate allocation over node-disjoint paths in slotted-ALOHA networks."""
from .allocator import (AllocationProblem, AllocationResult, SaParams, baseline_best_path,
                        baseline_fmp, baseline_rr, build_problem, evaluate, solve_grid, solve_sa)
from .phy import PhyParams, success_probability
from .scenario import Flow, Node, Scenario, fig3_scenario
from .simulator import SimConfig, SimMetrics, run
from .throughput import aggregate_throughput, link_throughput, path_throughput

__version__ = "0.1.0"
