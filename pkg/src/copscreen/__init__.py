"""Copula-based correlation (CC) and partial correlation (CPC) screening."""

__version__ = "0.1.0"

from .cc import QuantilePair, cc_estimate, cc_test_equal, cc_test_zero, cc_variance
from .cpc import ConditioningDesign, cpc_estimate, cpc_test_equal, cpc_test_zero, cpc_variance
from .dataio import Dataset, ih_outlier_report, load_csv, write_csv
from .errors import CopscreenError
from .evaluation import PeReport, prediction_error
from .screening import ScreeningConfig, ScreeningResult, screen
from .simbench import SimulationSpec, generate

__all__ = [
    "QuantilePair", "cc_estimate", "cc_test_equal", "cc_test_zero", "cc_variance",
    "ConditioningDesign", "cpc_estimate", "cpc_test_equal", "cpc_test_zero", "cpc_variance",
    "Dataset", "load_csv", "write_csv", "ih_outlier_report", "CopscreenError",
    "PeReport", "prediction_error", "ScreeningConfig", "ScreeningResult", "screen",
    "SimulationSpec", "generate", "__version__",
]
