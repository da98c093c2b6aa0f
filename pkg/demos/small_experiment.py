"""A reduced experiment grid and the per-figure tables derived from it."""
# %%
import csv
import tempfile
from pathlib import Path

from tofra.allocator import SaParams
from tofra.harness import ExperimentConfig, emit_plotdata, run_experiment
from tofra.simulator import SimConfig

out = Path(tempfile.mkdtemp(prefix="tofra_"))
cfg = ExperimentConfig(n_scenarios=3, gammas=(0.5, 2.0), sim=SimConfig(total_slots=5000),
                       sa=SaParams(restarts=4), out_dir=str(out))
rows = run_experiment(cfg)
print(len(rows), "rows in", out / "report.csv")

# %%
for p in emit_plotdata(out / "report.csv", out):
    print("--", p.name)
    with open(p) as fh:
        for line in csv.reader(fh):
            print("  ", *line)
