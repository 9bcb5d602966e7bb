from .catalog import get_scenario, scenario_catalog
from .config import ExperimentConfig, RateFit, fit_rate
from .runner import CSV_COLUMNS, ExperimentResult, rows_to_csv, run_experiment

__all__ = [
    "CSV_COLUMNS",
    "ExperimentConfig",
    "ExperimentResult",
    "RateFit",
    "fit_rate",
    "get_scenario",
    "rows_to_csv",
    "run_experiment",
    "scenario_catalog",
]
