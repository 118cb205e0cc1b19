from .config import ExperimentConfig, load_config, parse_config
from .experiment import run_experiment
from .plotting import emit_plot_data

__all__ = ["ExperimentConfig", "load_config", "parse_config", "run_experiment", "emit_plot_data"]
