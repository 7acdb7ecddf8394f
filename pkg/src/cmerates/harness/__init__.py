"""Experiment runner behind the ``cme-rates`` command."""

from .config import EXPERIMENTS, ExperimentConfig
from .outputs import CSV_HEADER, SCHEMA_VERSION, read_rows, write_outputs
from .runner import CheckResult, RateFitResult, Row, fit_rate, run

__all__ = ["EXPERIMENTS", "ExperimentConfig", "CSV_HEADER", "SCHEMA_VERSION", "read_rows", "write_outputs",
           "CheckResult", "RateFitResult", "Row", "fit_rate", "run"]
