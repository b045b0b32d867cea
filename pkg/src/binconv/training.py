"""One-step-ahead training with Adam."""

from __future__ import annotations

import logging
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .codec import Binning, encode, mean_scale
from .model import BinConvModel

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 50
    learning_rate: float = 1e-3
    batch_size: int = 32
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    def __post_init__(self):
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")
        if self.learning_rate < 0:
            raise ValueError("learning_rate must be non-negative")
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")


@dataclass(frozen=True)
class TrainingPair:
    context: np.ndarray
    target: float


@dataclass
class TrainHistory:
    losses: list[float] = field(default_factory=list)
    wall_time: float = 0.0
    seed: int = 0
    config: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def make_pairs(series, context_length: int) -> list[TrainingPair]:
    x = np.asarray(series, dtype=np.float64)
    if context_length < 1:
        raise ValueError("context_length must be >= 1")
    if x.size < context_length + 1:
        raise ValueError(f"series of length {x.size} too short for context {context_length}")
    return [
        TrainingPair(x[i:i + context_length].copy(), float(x[i + context_length]))
        for i in range(x.size - context_length)
    ]


def prepare_batch(pair: TrainingPair, binning: Binning, scale: float | None = None):
    """Encode one pair; the context's mean scale (or a fixed ``scale``)
    divides both context and target."""
    s = mean_scale(pair.context).s if scale is None else float(scale)
    ctx = np.stack([encode(v, binning).bits for v in pair.context / s])
    return ctx, encode(pair.target / s, binning)


def _scaled_arrays(pairs, scale):
    ctx = np.stack([p.context for p in pairs])
    tgt = np.array([p.target for p in pairs], dtype=np.float64)
    if scale is None:
        s = np.array([mean_scale(c).s for c in ctx])
    else:
        s = np.full(len(pairs), float(scale))
    return ctx / s[:, None], tgt / s


def adam_step(params, lr: float, beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
    """One bias-corrected Adam update of every parameter, in place."""
    for p in params:
        p.t += 1
        p.adam_m *= beta1
        p.adam_m += (1.0 - beta1) * p.grad
        p.adam_v *= beta2
        p.adam_v += (1.0 - beta2) * p.grad * p.grad
        m_hat = p.adam_m / (1.0 - beta1 ** p.t)
        v_hat = p.adam_v / (1.0 - beta2 ** p.t)
        new = p.value.astype(np.float64) - lr * m_hat / (np.sqrt(v_hat) + eps)
        p.value[...] = new


def batch_loss_and_grad(model: BinConvModel, ctx_scaled, tgt_scaled, training=False, rng=None):
    """Mean loss over the batch; parameter grads are accumulated on ``model``."""
    x = model.encode_context(ctx_scaled)
    logits, cache = model.forward(x, training=training, rng=rng)
    loss, dlogits = model.loss(logits, tgt_scaled)
    model.backward(cache, dlogits)
    return loss


def fit(
    model: BinConvModel,
    pairs: list[TrainingPair],
    config: TrainConfig = TrainConfig(),
    scale: float | None = None,
) -> TrainHistory:
    """Train on one-step pairs.

    ``scale=None`` applies per-sample mean scaling; a number fixes a
    dataset-level scale.  Shuffling and dropout masks for epoch ``e`` come
    from generators seeded with ``(config.seed, e)`` so runs are
    reproducible.
    """
    if not pairs:
        raise ValueError("no training pairs")
    ctx, tgt = _scaled_arrays(pairs, scale)
    n = len(pairs)
    params = list(model.params.values())
    hist = TrainHistory(seed=config.seed, config=asdict(config))
    start = time.perf_counter()
    for epoch in range(config.epochs):
        order = np.random.default_rng([config.seed, epoch, 0]).permutation(n)
        drop_rng = np.random.default_rng([config.seed, epoch, 1])
        total = 0.0
        for lo in range(0, n, config.batch_size):
            idx = order[lo:lo + config.batch_size]
            model.zero_grad()
            loss = batch_loss_and_grad(model, ctx[idx], tgt[idx], training=True, rng=drop_rng)
            if not np.isfinite(loss):
                raise FloatingPointError(f"non-finite loss {loss} at epoch {epoch}, batch starting {lo}")
            adam_step(params, config.learning_rate, config.beta1, config.beta2, config.eps)
            total += loss * idx.size
        hist.losses.append(total / n)
        log.debug("epoch %d loss %.6f", epoch, hist.losses[-1])
    hist.wall_time = time.perf_counter() - start
    return hist


def evaluate_loss(model: BinConvModel, pairs, scale: float | None = None) -> float:
    """Mean eval-mode loss over ``pairs`` (no parameter update)."""
    ctx, tgt = _scaled_arrays(pairs, scale)
    logits, _ = model.forward(model.encode_context(ctx), training=False)
    return model.loss(logits, tgt)[0]


__all__ = [
    "TrainConfig",
    "TrainHistory",
    "TrainingPair",
    "adam_step",
    "batch_loss_and_grad",
    "evaluate_loss",
    "fit",
    "make_pairs",
    "prepare_batch",
]
