"""Finite-difference checks for every layer and for a tiny end-to-end model.

Each check projects the layer output onto a fixed random direction ``r`` so
the scalar ``sum(y * r)`` exercises the full Jacobian, then compares the
analytic backward pass with central differences on every coordinate.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .codec import CbeVector
from .model import BinConvConfig, VariantKind, build_variant

LAYER_TOL = 1e-4
MODEL_TOL = 1e-3


@dataclass(frozen=True)
class CheckResult:
    name: str
    error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return bool(self.error < self.tolerance)


def _check(f, arrays: dict, grads: dict) -> float:
    return ad.grad_check(f, arrays, grads)


def check_conv2d_full_context(rng) -> float:
    x = rng.normal(size=(2, 3, 7))
    k = rng.normal(size=(4, 1, 3, 3))
    b = rng.normal(size=4)
    r = rng.normal(size=(2, 4, 5))
    _, ctx = ad.conv2d_full_context_forward(x, k, b)
    dx, dk, db = ad.conv2d_full_context_backward(ctx, r)
    return _check(lambda: float(np.sum(ad.conv2d_full_context_forward(x, k, b)[0] * r)),
                  {"x": x, "k": k, "b": b}, {"x": dx, "k": dk, "b": db})


def check_grouped_conv1d(rng, groups: int, channels: int = 4, s: int = 3) -> float:
    x = rng.normal(size=(2, channels, 5 + s - 1))
    w = rng.normal(size=(channels, channels // groups, s))
    b = rng.normal(size=channels)
    r = rng.normal(size=(2, channels, 5))
    _, ctx = ad.grouped_conv1d_forward(x, w, b, groups)
    dx, dw, db = ad.grouped_conv1d_backward(ctx, r)
    return _check(lambda: float(np.sum(ad.grouped_conv1d_forward(x, w, b, groups)[0] * r)),
                  {"x": x, "w": w, "b": b}, {"x": dx, "w": dw, "b": db})


def check_dytanh(rng) -> float:
    x = rng.normal(size=(2, 3, 6))
    alpha = np.array([0.7])
    gamma = rng.normal(size=3)
    beta = rng.normal(size=3)
    r = rng.normal(size=x.shape)
    _, ctx = ad.dytanh_forward(x, alpha, gamma, beta)
    dx, da, dg, db = ad.dytanh_backward(ctx, r)
    return _check(lambda: float(np.sum(ad.dytanh_forward(x, alpha, gamma, beta)[0] * r)),
                  {"x": x, "alpha": alpha, "gamma": gamma, "beta": beta},
                  {"x": dx, "alpha": da, "gamma": dg, "beta": db})


def check_relu_composite(rng) -> float:
    """conv -> relu -> dropout (fixed mask) -> residual."""
    x = rng.normal(size=(1, 2, 8))
    w = rng.normal(size=(2, 2, 3))
    b = rng.normal(size=2)
    r = rng.normal(size=(1, 2, 6))

    def run():
        h, c1 = ad.grouped_conv1d_forward(x, w, b, 1)
        a, c2 = ad.relu_forward(h)
        d, c3 = ad.dropout_forward(a, 0.3, np.random.default_rng(4), training=True)
        return ad.residual_add(d, x[..., 1:-1]), (c1, c2, c3)

    _, (c1, c2, c3) = run()
    g = ad.relu_backward(c2, ad.dropout_backward(c3, r))
    dx, dw, db = ad.grouped_conv1d_backward(c1, g)
    dx[..., 1:-1] += r
    return _check(lambda: float(np.sum(run()[0] * r)), {"x": x, "w": w, "b": b}, {"x": dx, "w": dw, "b": db})


def check_bce(rng) -> float:
    z = rng.normal(size=(3, 7)) * 3
    t = np.stack([CbeVector.from_count(m, 7).bits for m in (0, 4, 7)])
    _, g = ad.bce_loss(z, t)
    return _check(lambda: ad.bce_loss(z, t)[0], {"z": z}, {"z": g})


def check_softmax_ce(rng) -> float:
    z = rng.normal(size=(2, 6))
    cls = np.array([1, 4])
    _, g = ad.softmax_cross_entropy(z, cls)
    return _check(lambda: ad.softmax_cross_entropy(z, cls)[0], {"z": z}, {"z": g})


def check_model(kind, seed: int = 0) -> float:
    """Loss gradient of a tiny model (C=4, D=12, K=4, M=1) against every parameter."""
    cfg = BinConvConfig(4, D=12, K=4, M=1, s3=3, dtype="float64", dropout_rate=0.0, b0=-3.0, bD=3.0)
    m = build_variant(kind, cfg, seed)
    rng = np.random.default_rng(seed)
    ctx = rng.normal(0.0, 1.5, (3, cfg.C))
    tgt = rng.normal(0.0, 1.5, 3)
    x = m.encode_context(ctx)
    m.zero_grad()
    logits, cache = m.forward(x)
    _, dl = m.loss(logits, tgt)
    m.backward(cache, dl)
    values = {n: p.value for n, p in m.params.items()}
    grads = {n: p.grad.copy() for n, p in m.params.items()}
    return _check(lambda: m.loss(m.forward(x)[0], tgt)[0], values, grads)


def run_suite(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    out = [
        CheckResult("conv2d_full_context", check_conv2d_full_context(rng), LAYER_TOL),
        CheckResult("grouped_conv1d[g=1]", check_grouped_conv1d(rng, 1), LAYER_TOL),
        CheckResult("grouped_conv1d[g=K]", check_grouped_conv1d(rng, 4), LAYER_TOL),
        CheckResult("dytanh", check_dytanh(rng), LAYER_TOL),
        CheckResult("relu_composite", check_relu_composite(rng), LAYER_TOL),
        CheckResult("bce_loss", check_bce(rng), LAYER_TOL),
        CheckResult("softmax_cross_entropy", check_softmax_ce(rng), LAYER_TOL),
    ]
    for kind in VariantKind:
        out.append(CheckResult(f"model[{kind.value}]", check_model(kind, seed), MODEL_TOL))
    return out
