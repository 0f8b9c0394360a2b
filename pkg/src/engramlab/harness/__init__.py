"""Experiment orchestration: strict configs, seeded trial fan-out, outputs and CLI."""
from .config import ExperimentConfig, load_config, resolve_config
from .experiments import REGISTRY, Document, Experiment, Table, read_table
from .runner import ResultManifest, emit_plot_data, run, run_trials, trial_seeds

__all__ = ["ExperimentConfig", "load_config", "resolve_config", "REGISTRY", "Document",
           "Experiment", "Table", "read_table", "ResultManifest", "emit_plot_data", "run",
           "run_trials", "trial_seeds"]
