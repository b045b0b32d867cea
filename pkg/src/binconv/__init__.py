"""Probabilistic forecasting with cumulative binary encodings and a
fully-convolutional network, implemented in numpy."""

__version__ = "0.1.0"

from .codec import Binning, BinDistribution, CbeVector, decode, encode, mean_scale
from .forecasting import ForecastResult, forecast_point, forecast_samples
from .model import BinConvConfig, BinConvModel, VariantKind, build_variant, param_count
from .training import TrainConfig, fit, make_pairs

__all__ = [
    "BinConvConfig",
    "BinConvModel",
    "BinDistribution",
    "Binning",
    "CbeVector",
    "ForecastResult",
    "TrainConfig",
    "VariantKind",
    "build_variant",
    "decode",
    "encode",
    "fit",
    "forecast_point",
    "forecast_samples",
    "make_pairs",
    "mean_scale",
    "param_count",
]
