"""Scenario generation, file formats, experiment orchestration and plot tables."""
from .experiment import ExperimentConfig, load_config, run_experiment
from .generate import GenParams, GenerationError, default_phy, generate_scenario, select_disjoint_paths
from .io import ScenarioFormatError, bundled, read_scenario, write_scenario
from .plotdata import emit_plotdata
