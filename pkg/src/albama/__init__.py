"""Adaptive moving averages from bagged regression trees on the time index."""

from .errors import AlbamaError, DataError, NumericalError, ZeroVarianceError
from .evaluation import EvalSettings, EvaluationReport, full_report, paired_method_r2, r2_fixed_unit
from .filters import FilterOutput, ema, ma_one_sided, ma_two_sided, sg_coefficients, sg_one_sided, sg_two_sided
from .forest import (ForestParams, WeightMatrix, bucket_shares, extract_weights, fit_one_sided, fit_two_sided,
                     forest_fitted)
from .series import TimeSeries, TransformKind, load_csv, transform, write_csv
from .simulation import Scenario, ScenarioSpec, generate
from .tree import TreeParams, best_split, fit_tree
from .trendfilters import boosted_hp, hp_smooth, kkt_certificate, l1_trend_filter, select_lambda_cv

__version__ = "0.1.0"

__all__ = [
    "AlbamaError", "DataError", "NumericalError", "ZeroVarianceError",
    "EvalSettings", "EvaluationReport", "full_report", "paired_method_r2", "r2_fixed_unit",
    "FilterOutput", "ema", "ma_one_sided", "ma_two_sided", "sg_coefficients", "sg_one_sided", "sg_two_sided",
    "ForestParams", "WeightMatrix", "bucket_shares", "extract_weights", "fit_one_sided", "fit_two_sided",
    "forest_fitted",
    "TimeSeries", "TransformKind", "load_csv", "transform", "write_csv",
    "Scenario", "ScenarioSpec", "generate",
    "TreeParams", "best_split", "fit_tree",
    "boosted_hp", "hp_smooth", "kkt_certificate", "l1_trend_filter", "select_lambda_cv",
]
