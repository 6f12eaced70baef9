"""Physics-informed neural network laboratory: pendulum ODE and 2D heat equation."""

from .harness import ExperimentConfig, TrainReport, preset, rmse, run_experiment, run_sweep

__all__ = ["ExperimentConfig", "TrainReport", "preset", "rmse", "run_experiment", "run_sweep"]
__version__ = "0.1.0"
