"""Multiscale quantile segmentation of univariate series."""

from .bounds import (
    DistributionSpec,
    SignalCharacteristics,
    gamma_ns,
    location_rate_bound,
    over_bound,
    quantile_jump,
    signal_characteristics,
    under_bound,
)
from .core import Series, StepFunction, runs_count, transform
from .heap import DoubleHeap
from .msb import BoxplotResult, merge_fits, msb_fit
from .multiscale import (
    ConfidenceBox,
    box_ranks,
    confidence_box,
    invert_llr,
    local_llr,
    multiscale_stat,
    multiscale_stat_exhaustive,
    penalty,
)
from .segmentation import (
    SegmentationResult,
    audit,
    brute_force_fit,
    changepoint_intervals,
    fit,
    koenker_cost,
    runs_cost,
    runs_log_density,
)
from .threshold import ThresholdKey, ThresholdTable, quantile_of, simulate_Mn, threshold

__version__ = "0.1.0"

__all__ = [
    "BoxplotResult", "ConfidenceBox", "DistributionSpec", "DoubleHeap", "SegmentationResult", "Series",
    "SignalCharacteristics", "StepFunction", "ThresholdKey", "ThresholdTable", "audit", "box_ranks",
    "brute_force_fit", "changepoint_intervals", "confidence_box", "fit", "gamma_ns", "invert_llr",
    "koenker_cost", "local_llr", "location_rate_bound", "merge_fits", "msb_fit", "multiscale_stat",
    "multiscale_stat_exhaustive", "over_bound", "penalty", "quantile_jump", "quantile_of", "runs_cost",
    "runs_count", "runs_log_density", "signal_characteristics", "simulate_Mn", "threshold", "transform",
    "under_bound",
]
