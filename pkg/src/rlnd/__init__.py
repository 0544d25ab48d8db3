"""Random limit normal distribution: evaluation, validity checks and fitting."""

from .core import *  # noqa: F401,F403
from .core import __all__ as _core_all
from .fitting import FitResult, FitSpec, evaluate_statistics, fit_normal, fit_rlnd, fixed_fit, identifiability_scan
from .gof import BinnedSample, BinningSpec, GofError, GofReport, bin_data, delta_pair, model_bin_probs, pearson_lambda
from .ingest import IngestError, ReturnSeries, load_series, log_returns, read_price_csv
from .numerics import ConvergenceError, NoSignChangeError
from .validity import check_monotone_cdf, heat_equation_oracle, verify_case2_derivative_sign, verify_fx_positive

__version__ = "0.1.0"

__all__ = list(_core_all) + [
    "FitResult", "FitSpec", "evaluate_statistics", "fit_normal", "fit_rlnd", "fixed_fit", "identifiability_scan",
    "BinnedSample", "BinningSpec", "GofError", "GofReport", "bin_data", "delta_pair", "model_bin_probs",
    "pearson_lambda", "IngestError", "ReturnSeries", "load_series", "log_returns", "read_price_csv",
    "ConvergenceError", "NoSignChangeError", "check_monotone_cdf", "heat_equation_oracle",
    "verify_case2_derivative_sign", "verify_fx_positive",
]
