"""Point (NMAE) and probabilistic (CRPS) forecast scores.

Both are normalized by the total absolute value of the actuals, so a model
that puts all quantiles on its point forecast scores the same under both.
"""

from __future__ import annotations

import numpy as np

QUANTILE_LEVELS = np.round(np.arange(1, 20) * 0.05, 2)


def _denominator(actuals: np.ndarray) -> float:
    denom = float(np.sum(np.abs(actuals)))
    if denom == 0.0:
        raise ValueError("sum of absolute actuals is zero; score undefined")
    return denom


def nmae(actuals, forecasts) -> float:
    """sum|x - x_hat| / sum|x| over every series and step."""
    x = np.asarray(actuals, dtype=np.float64)
    f = np.asarray(forecasts, dtype=np.float64)
    if x.shape != f.shape:
        raise ValueError(f"actuals {x.shape} and forecasts {f.shape} differ")
    return float(np.sum(np.abs(x - f))) / _denominator(x)


def quantile_loss(alpha, q, z):
    """Pinball loss ``(alpha - 1{z < q}) (z - q)``."""
    alpha = np.asarray(alpha, dtype=np.float64)
    if np.any((alpha <= 0) | (alpha >= 1)):
        raise ValueError("quantile level must be in (0, 1)")
    q = np.asarray(q, dtype=np.float64)
    z = np.asarray(z, dtype=np.float64)
    return (alpha - (z < q)) * (z - q)


def crps(actuals, quantile_forecasts, levels=QUANTILE_LEVELS) -> float:
    """Normalized CRPS from quantile forecasts.

    actuals: (num_series, T); quantile_forecasts: (num_series, L, T) with
    levels along axis 1.  The integral over levels is the plain mean of
    ``2 * quantile_loss`` over the L levels.
    """
    x = np.asarray(actuals, dtype=np.float64)
    q = np.asarray(quantile_forecasts, dtype=np.float64)
    levels = np.asarray(levels, dtype=np.float64)
    if x.ndim == 1:
        x, q = x[None], q[None]
    if q.shape != (x.shape[0], levels.size, x.shape[1]):
        raise ValueError(f"quantiles {q.shape} do not match actuals {x.shape} and {levels.size} levels")
    if np.any(np.diff(q, axis=1) < 0):
        raise ValueError("quantile forecasts must be non-decreasing across levels")
    denom = _denominator(x)
    ql = quantile_loss(levels[None, :, None], q, x[:, None, :])
    return float(np.sum(2.0 * ql.mean(axis=1))) / denom


def per_series(actuals, forecasts, quantile_forecasts=None, levels=QUANTILE_LEVELS) -> list[dict]:
    x = np.atleast_2d(np.asarray(actuals, dtype=np.float64))
    f = np.atleast_2d(np.asarray(forecasts, dtype=np.float64))
    rows = []
    for k in range(x.shape[0]):
        row = {"nmae": nmae(x[k], f[k])}
        if quantile_forecasts is not None:
            row["crps"] = crps(x[k], np.asarray(quantile_forecasts)[k], levels)
        rows.append(row)
    return rows
