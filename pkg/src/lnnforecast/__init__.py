"""Continuous-time recurrent forecasters and walk-forward evaluation for daily returns."""

from lnnforecast.cells import ArchKind, ModelParams, forward_window, init_params
from lnnforecast.metrics import MetricsReport, bias_test, compute_metrics
from lnnforecast.training import TrainConfig, train

__all__ = [
    "ArchKind",
    "ModelParams",
    "MetricsReport",
    "TrainConfig",
    "bias_test",
    "compute_metrics",
    "forward_window",
    "init_params",
    "train",
]

__version__ = "0.1.0"
