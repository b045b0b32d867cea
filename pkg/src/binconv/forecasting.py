"""Autoregressive forecasting: argmax point paths and sampled trajectories."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .codec import argmax_bin, decode, inverse_cdf, mean_scale
from .model import BinConvModel

QUANTILE_LEVELS = np.round(np.arange(1, 20) * 0.05, 2)


@dataclass
class ForecastResult:
    point_path: np.ndarray | None = None
    sample_paths: np.ndarray | None = None
    quantiles: np.ndarray | None = None
    levels: np.ndarray = QUANTILE_LEVELS


def _scales(windows: np.ndarray, scale: float | None, frozen: np.ndarray | None):
    if scale is not None:
        return np.full(windows.shape[0], float(scale))
    if frozen is not None:
        return frozen
    return np.array([mean_scale(w).s for w in windows])


def _check_context(model: BinConvModel, context) -> np.ndarray:
    x = np.asarray(context, dtype=np.float64)
    if x.ndim != 1 or x.size != model.config.C:
        raise ValueError(f"context must have length {model.config.C}, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError("context contains non-finite values")
    return x


def _step_distributions(model: BinConvModel, windows, s):
    logits, _ = model.forward(model.encode_context(windows / s[:, None]), training=False)
    return [model.distribution(z) for z in logits]


def forecast_point(
    model: BinConvModel,
    context,
    horizon: int,
    scale: float | None = None,
    freeze_scale: bool = False,
) -> np.ndarray:
    """Most probable encoding at each step, decoded and unscaled.

    By default the mean scale is recomputed from the sliding window each
    step.  ``freeze_scale`` keeps the initial window's scale; ``scale``
    fixes an external (e.g. dataset-level) scale.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    window = _check_context(model, context)[None].copy()
    frozen = np.array([mean_scale(window[0]).s]) if freeze_scale else None
    out = np.empty(horizon)
    for h in range(horizon):
        s = _scales(window, scale, frozen)
        dist = _step_distributions(model, window, s)[0]
        out[h] = s[0] * decode(argmax_bin(dist), model.binning)
        window = np.concatenate((window[:, 1:], [[out[h]]]), axis=1)
    return out


def forecast_samples(
    model: BinConvModel,
    context,
    horizon: int,
    n_samples: int = 100,
    seed: int = 0,
    scale: float | None = None,
    freeze_scale: bool = False,
    levels=QUANTILE_LEVELS,
) -> ForecastResult:
    """``n_samples`` trajectories advanced together as one batch.

    Trajectory ``i`` draws its uniforms from ``default_rng([seed, i])``, so
    a path does not depend on how many others are run alongside it.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    x = _check_context(model, context)
    windows = np.repeat(x[None], n_samples, axis=0)
    frozen = np.full(n_samples, mean_scale(x).s) if freeze_scale else None
    rngs = [np.random.default_rng([seed, i]) for i in range(n_samples)]
    paths = np.empty((n_samples, horizon))
    for h in range(horizon):
        s = _scales(windows, scale, frozen)
        dists = _step_distributions(model, windows, s)
        m = np.array([int(inverse_cdf(d, r.random(1))[0]) for d, r in zip(dists, rngs)])
        paths[:, h] = s * decode(m, model.binning)
        windows = np.concatenate((windows[:, 1:], paths[:, h:h + 1]), axis=1)
    return ForecastResult(
        sample_paths=paths,
        quantiles=sample_quantiles(paths, levels),
        levels=np.asarray(levels),
    )


def sample_quantiles(paths, levels=QUANTILE_LEVELS) -> np.ndarray:
    """Per-step empirical quantiles (linear interpolation), shape (L, H)."""
    return np.quantile(np.asarray(paths, dtype=np.float64), levels, axis=0, method="linear")
