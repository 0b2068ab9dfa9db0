"""Forecasting sparse clinical time series, then scoring the forecasts.

Transformer encoder/decoder variants with forcing-strategy training,
deterministic SOFA / SAPS-II / Sepsis-3 engines applied to forecasts, a
synthetic cohort generator, and an evaluation/ablation harness.
"""

from . import kernels
from .autodiff import Tensor, no_grad
from .config import Curriculum, ExperimentConfig
from .data import (
    DenseGrid,
    Observation,
    SparseSeries,
    StandardizationStats,
    VariableCatalog,
    WindowPair,
    bin_to_grid,
    sliding_windows,
    standardize,
)
from .models import ForecastModel, build_model, load_checkpoint, save_checkpoint
from .scoring import HourlyVitals, SapsPoints, SofaSubscores, saps_score, sofa_score
from .synth import CouplingSpec, GeneratorConfig, generate_cohort
from .training import curriculum_ratio, fit, selection_plan

__version__ = "0.1.0"

__all__ = [
    "Tensor", "no_grad", "kernels",
    "Curriculum", "ExperimentConfig",
    "DenseGrid", "Observation", "SparseSeries", "StandardizationStats",
    "VariableCatalog", "WindowPair", "bin_to_grid", "sliding_windows", "standardize",
    "ForecastModel", "build_model", "load_checkpoint", "save_checkpoint",
    "HourlyVitals", "SapsPoints", "SofaSubscores", "saps_score", "sofa_score",
    "CouplingSpec", "GeneratorConfig", "generate_cohort",
    "curriculum_ratio", "fit", "selection_plan",
    "__version__",
]
