"""Forward and backward passes for the handful of layers the forecaster uses.

Every ``*_forward`` returns ``(output, ctx)`` where ``ctx`` holds what the
matching ``*_backward`` needs.  Activations carry a leading batch axis and
put the bin axis last: ``(B, channels, D)``.  All arithmetic is float64
regardless of how parameters are stored.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

F64 = np.float64


@dataclass(eq=False)
class Parameter:
    """Trainable tensor with its gradient and Adam moment buffers."""

    value: np.ndarray
    grad: np.ndarray = field(init=False)
    adam_m: np.ndarray = field(init=False)
    adam_v: np.ndarray = field(init=False)
    t: int = 0

    def __post_init__(self):
        self.value = np.ascontiguousarray(self.value)
        self.grad = np.zeros(self.value.shape, dtype=F64)
        self.adam_m = np.zeros(self.value.shape, dtype=F64)
        self.adam_v = np.zeros(self.value.shape, dtype=F64)

    @property
    def shape(self):
        return self.value.shape

    @property
    def size(self) -> int:
        return self.value.size

    def zero_grad(self):
        self.grad[...] = 0.0


# -- padding ---------------------------------------------------------------

def pad_bins(x, left: int, right: int) -> np.ndarray:
    """Pad the last axis with ones on the left and zeros on the right.

    This is the natural continuation of a cumulative encoding (everything
    below the grid is "on", everything above is "off").
    """
    if left < 0 or right < 0:
        raise ValueError("pad widths must be non-negative")
    x = np.asarray(x, dtype=F64)
    if left == 0 and right == 0:
        return x
    lead = x.shape[:-1]
    return np.concatenate(
        (np.ones(lead + (left,), F64), x, np.zeros(lead + (right,), F64)), axis=-1
    )


def pad_bins_backward(grad, left: int, right: int) -> np.ndarray:
    return grad[..., left:grad.shape[-1] - right]


# -- convolutions ------------------------------------------------------------

def grouped_conv1d_forward(x, kernels, bias, groups: int = 1):
    """Valid cross-correlation along the bin axis with channel groups.

    x: (B, Cin, D + s - 1), already padded.  kernels: (Cout, Cin // g, s).
    Returns (B, Cout, D).
    """
    x = np.asarray(x, dtype=F64)
    w = np.asarray(kernels, dtype=F64)
    b = np.asarray(bias, dtype=F64)
    if x.ndim != 3 or w.ndim != 3:
        raise ValueError(f"expected x (B, Cin, L) and kernels (Cout, Cin/g, s); got {x.shape}, {w.shape}")
    B, cin, L = x.shape
    cout, cin_g, s = w.shape
    if groups < 1 or cin % groups or cout % groups:
        raise ValueError(f"groups={groups} must divide in ({cin}) and out ({cout}) channels")
    if cin_g != cin // groups:
        raise ValueError(f"kernel expects {cin_g} input channels per group, input gives {cin // groups}")
    if b.shape != (cout,):
        raise ValueError(f"bias shape {b.shape} != ({cout},)")
    D = L - s + 1
    if D < 1:
        raise ValueError(f"padded length {L} shorter than kernel {s}")

    xg = x.reshape(B, groups, cin_g, L)
    wg = w.reshape(groups, cout // groups, cin_g, s)
    # tap-major copy keeps every per-tap weight matrix contiguous for BLAS
    wt = np.ascontiguousarray(np.moveaxis(wg, -1, 0))
    y = np.empty((B, groups, cout // groups, D), dtype=F64)
    y[...] = b.reshape(1, groups, cout // groups, 1)
    for t in range(s):
        xs = xg[..., t:t + D]
        if groups == 1:
            y[:, 0] += wt[t, 0] @ xs[:, 0]
        elif cin_g == 1 and cout == groups:
            y[:, :, 0] += wt[t, None, :, 0, 0, None] * xs[:, :, 0]
        else:
            y += np.einsum("goi,bgij->bgoj", wt[t], xs)
    return y.reshape(B, cout, D), (xg, wt, groups, s, D)


def grouped_conv1d_backward(ctx, grad):
    """Returns ``(dx_padded, dkernels, dbias)``."""
    xg, wt, groups, s, D = ctx
    B, _, cin_g, L = xg.shape
    cout_g = wt.shape[2]
    gy = np.ascontiguousarray(grad, dtype=F64).reshape(B, groups, cout_g, D)

    if groups == 1:
        # stack shifted copies of the output gradient, shifts[b, (t, o), r] =
        # gy[b, o, r - t], so dx and dW each reduce to one (batched) GEMM
        shifts = np.zeros((B, s, cout_g, L), dtype=F64)
        for t in range(s):
            shifts[:, t, :, t:t + D] = gy[:, 0]
        shifts = shifts.reshape(B, s * cout_g, L)
        wmat = wt[:, 0].reshape(s * cout_g, cin_g)
        dx = (wmat.T @ shifts)[:, None]
        dwt = (shifts @ np.swapaxes(xg[:, 0], 1, 2)).sum(axis=0).reshape(wt.shape)
    else:
        dx = np.zeros_like(xg)
        dwt = np.empty_like(wt)
        depthwise = cin_g == 1 and cout_g == 1
        for t in range(s):
            xs = xg[..., t:t + D]
            if depthwise:
                dwt[t, :, 0, 0] = np.einsum("bgj,bgj->g", gy[:, :, 0], xs[:, :, 0])
                dx[:, :, 0, t:t + D] += wt[t, None, :, 0, 0, None] * gy[:, :, 0]
            else:
                dwt[t] = np.einsum("bgoj,bgij->goi", gy, xs)
                dx[..., t:t + D] += np.einsum("goi,bgoj->bgij", wt[t], gy)
    db = gy.sum(axis=(0, 3)).reshape(-1)
    dw = np.moveaxis(dwt, 0, -1).reshape(groups * cout_g, cin_g, s)
    return dx.reshape(B, groups * cin_g, L), dw, db


def conv2d_full_context_forward(x, kernels, bias):
    """2-D convolution whose kernel spans the whole context axis.

    x: (B, C, D + s - 1) is a single-channel image with C rows; kernels:
    (K, 1, C, s).  The context axis collapses to extent one, giving (B, K, D).
    This equals a standard 1-D convolution that treats rows as channels.
    """
    w = np.asarray(kernels, dtype=F64)
    if w.ndim != 4 or w.shape[1] != 1:
        raise ValueError(f"kernels must have shape (K, 1, C, s), got {w.shape}")
    x = np.asarray(x, dtype=F64)
    if x.ndim != 3 or x.shape[1] != w.shape[2]:
        raise ValueError(f"input rows {x.shape} do not match kernel context {w.shape[2]}")
    return grouped_conv1d_forward(x, w[:, 0], bias, groups=1)


def conv2d_full_context_backward(ctx, grad):
    dx, dw, db = grouped_conv1d_backward(ctx, grad)
    return dx, dw[:, None], db


# -- elementwise -------------------------------------------------------------

def dytanh_forward(x, alpha, gamma, beta):
    """``gamma[k] * tanh(alpha * x[k, j]) + beta[k]`` over (B, K, D)."""
    x = np.asarray(x, dtype=F64)
    a = float(np.asarray(alpha, dtype=F64).reshape(()))
    g = np.asarray(gamma, dtype=F64)
    b = np.asarray(beta, dtype=F64)
    if g.shape != (x.shape[1],) or b.shape != (x.shape[1],):
        raise ValueError("gamma/beta must have one entry per channel")
    th = np.tanh(a * x)
    return g[:, None] * th + b[:, None], (x, a, g, th)


def dytanh_backward(ctx, grad):
    """Returns ``(dx, dalpha, dgamma, dbeta)``; dalpha has shape (1,)."""
    x, a, g, th = ctx
    gy = np.asarray(grad, dtype=F64)
    dgamma = np.sum(gy * th, axis=(0, 2))
    dbeta = gy.sum(axis=(0, 2))
    dpre = gy * g[:, None] * (1.0 - th * th)
    dalpha = np.array([np.sum(dpre * x)])
    return dpre * a, dalpha, dgamma, dbeta


def relu_forward(x):
    x = np.asarray(x, dtype=F64)
    mask = x > 0
    return np.where(mask, x, 0.0), mask


def relu_backward(mask, grad):
    return np.where(mask, grad, 0.0)


def sigmoid(x):
    x = np.asarray(x, dtype=F64)
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def dropout_forward(x, rate: float, rng: np.random.Generator | None, training: bool):
    """Inverted dropout; the identity when not training."""
    if not 0.0 <= rate < 1.0:
        raise ValueError(f"dropout rate must be in [0, 1), got {rate}")
    x = np.asarray(x, dtype=F64)
    if not training or rate == 0.0:
        return x, None
    if rng is None:
        raise ValueError("training-mode dropout needs an rng")
    keep = (rng.random(x.shape) >= rate) / (1.0 - rate)
    return x * keep, keep


def dropout_backward(keep, grad):
    return grad if keep is None else grad * keep


def residual_add(x, y):
    x = np.asarray(x, dtype=F64)
    y = np.asarray(y, dtype=F64)
    if x.shape != y.shape:
        raise ValueError(f"residual shapes differ: {x.shape} vs {y.shape}")
    return x + y


# -- losses ------------------------------------------------------------------

def bce_loss(logits, target):
    """Mean binary cross-entropy on logits and its gradient.

    Works on a single vector (D,) or a batch (B, D); the mean runs over
    every entry, so the batch loss is the mean of per-item losses.
    """
    z = np.asarray(logits, dtype=F64)
    t = np.asarray(getattr(target, "bits", target), dtype=F64)
    if z.shape != t.shape:
        raise ValueError(f"logits {z.shape} and target {t.shape} differ")
    loss = np.maximum(z, 0.0) - z * t + np.log1p(np.exp(-np.abs(z)))
    return float(loss.mean()), (sigmoid(z) - t) / z.size


def softmax_cross_entropy(logits, target_class):
    """Mean multi-class cross-entropy over the last axis and its gradient."""
    z = np.asarray(logits, dtype=F64)
    z2 = z.reshape(-1, z.shape[-1])
    cls = np.asarray(target_class).reshape(-1)
    if cls.size != z2.shape[0]:
        raise ValueError("one target class per row required")
    logp = log_softmax(z2)
    n = z2.shape[0]
    loss = -logp[np.arange(n), cls].mean()
    grad = np.exp(logp)
    grad[np.arange(n), cls] -= 1.0
    return float(loss), (grad / n).reshape(z.shape)


def log_softmax(z):
    z = np.asarray(z, dtype=F64)
    top = z.max(axis=-1, keepdims=True)
    return z - top - np.log(np.sum(np.exp(z - top), axis=-1, keepdims=True))


# -- gradient checking -------------------------------------------------------

def grad_check(
    f: Callable[[], float],
    params: dict[str, np.ndarray],
    analytic: dict[str, np.ndarray],
    h: float = 1e-5,
    probes: int | None = None,
    rng: np.random.Generator | None = None,
) -> float:
    """Worst relative error between analytic and central-difference gradients.

    ``f`` reads the arrays in ``params`` (perturbed in place).  With
    ``probes`` set, only that many random coordinates are compared overall.
    The error per coordinate is ``|a - n| / max(|a| + |n|, 1e-8)``, which is
    well defined when both derivatives vanish.
    """
    coords = [(name, i) for name, arr in params.items() for i in range(arr.size)]
    if probes is not None and probes < len(coords):
        rng = rng or np.random.default_rng(0)
        pick = rng.choice(len(coords), size=probes, replace=False)
        coords = [coords[i] for i in sorted(pick)]
    worst = 0.0
    for name, i in coords:
        flat = params[name].reshape(-1)
        old = flat[i]
        flat[i] = old + h
        fp = f()
        flat[i] = old - h
        fm = f()
        flat[i] = old
        num = (fp - fm) / (2 * h)
        ana = analytic[name].reshape(-1)[i]
        err = abs(ana - num) / max(abs(ana) + abs(num), 1e-8)
        worst = max(worst, err)
    return worst
