"""The BinConv network and its ablation variants.

Each block maps a ``C x D`` map to ``C x D``::

    pad -> Conv2d (C, s1), 1 -> K  -> DyTanh
    pad -> Conv1d-1 s2, K -> K, groups K -> ReLU
    pad -> Conv1d-2 s2, K -> C, groups K -> ReLU -> Dropout -> + input

After ``M`` blocks a wide Conv1d (kernel s3, C -> 1) produces ``D`` logits.
"""

from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter
from .codec import (
    BinDistribution,
    Binning,
    encode_many,
    ones_count,
    valid_sequence_log_probs_from_logits,
)


class VariantKind(str, enum.Enum):
    STANDARD = "standard"
    FC_HEAD = "fc_head"
    STANDARD_CONV = "standard_conv"
    ONE_HOT = "one_hot"


@dataclass(frozen=True)
class BinConvConfig:
    """Architecture hyperparameters; defaults are the univariate settings."""

    context_length: int
    D: int = 1000
    b0: float = -5.0
    bD: float = 5.0
    K: int | None = None  # None -> same as context_length
    s1: int = 3
    s2: int = 3
    s3: int = 51
    M: int = 3
    dropout_rate: float = 0.35
    dytanh_alpha: float = 0.5
    dtype: str = "float32"

    def __post_init__(self):
        if self.K is None:
            object.__setattr__(self, "K", self.context_length)
        if self.context_length < 1 or self.D < 1 or self.K < 1 or self.M < 0:
            raise ValueError("context_length, D and K must be positive and M non-negative")
        for name in ("s1", "s2", "s3"):
            s = getattr(self, name)
            if s < 1 or s % 2 == 0:
                raise ValueError(f"kernel size {name}={s} must be odd")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")
        Binning(self.b0, self.bD, self.D)

    @property
    def C(self) -> int:
        return self.context_length

    @property
    def binning(self) -> Binning:
        return Binning(self.b0, self.bD, self.D)

    def to_dict(self) -> dict:
        return asdict(self)


def _groups(kind: VariantKind, config: BinConvConfig) -> int:
    return 1 if kind is VariantKind.STANDARD_CONV else config.K


def parameter_shapes(config: BinConvConfig, kind=VariantKind.STANDARD) -> dict[str, tuple]:
    """Ordered parameter names and shapes for a given variant."""
    kind = VariantKind(kind)
    C, K, D = config.C, config.K, config.D
    g = _groups(kind, config)
    if K % g or C % g:
        raise ValueError(f"groups={g} must divide K={K} and C={C}")
    shapes: dict[str, tuple] = {}
    for i in range(config.M):
        p = f"block{i}."
        shapes[p + "conv2d.weight"] = (K, 1, C, config.s1)
        shapes[p + "conv2d.bias"] = (K,)
        shapes[p + "dytanh.alpha"] = (1,)
        shapes[p + "dytanh.gamma"] = (K,)
        shapes[p + "dytanh.beta"] = (K,)
        shapes[p + "conv1.weight"] = (K, K // g, config.s2)
        shapes[p + "conv1.bias"] = (K,)
        shapes[p + "conv2.weight"] = (C, K // g, config.s2)
        shapes[p + "conv2.bias"] = (C,)
    if kind is VariantKind.FC_HEAD:
        shapes["head.weight"] = (D, D)
        shapes["head.bias"] = (D,)
    else:
        shapes["head.weight"] = (1, C, config.s3)
        shapes["head.bias"] = (1,)
    return shapes


def param_count(config: BinConvConfig, kind=VariantKind.STANDARD) -> int:
    return int(sum(np.prod(s) for s in parameter_shapes(config, kind).values()))


def _fan_in(name: str, shape: tuple) -> int:
    if name == "head.weight" and len(shape) == 2:
        return shape[1]
    return int(np.prod(shape[1:]))


class BinConvModel:
    """Parameters plus forward/backward for one variant.

    ``forward`` takes encoded contexts ``(B, C, D)`` and returns logits
    ``(B, D)`` along with a cache for ``backward``, which accumulates into
    each ``Parameter.grad``.
    """

    def __init__(self, config: BinConvConfig, kind=VariantKind.STANDARD, params=None):
        self.config = config
        self.kind = VariantKind(kind)
        shapes = parameter_shapes(config, self.kind)
        if params is None:
            params = {n: Parameter(np.zeros(s, dtype=config.dtype)) for n, s in shapes.items()}
        if list(params) != list(shapes):
            raise ValueError("parameter names do not match the configuration")
        for n, s in shapes.items():
            if params[n].shape != s:
                raise ValueError(f"shape mismatch for {n}: {params[n].shape} != {s}")
        self.params: dict[str, Parameter] = params

    @classmethod
    def init(cls, config: BinConvConfig, seed: int = 0, kind=VariantKind.STANDARD) -> "BinConvModel":
        """Weights and biases uniform in +-1/sqrt(fan_in); DyTanh at
        alpha = config.dytanh_alpha, gamma = 1, beta = 0."""
        rng = np.random.default_rng(seed)
        params = {}
        for name, shape in parameter_shapes(config, kind).items():
            if name.endswith("dytanh.alpha"):
                v = np.full(shape, config.dytanh_alpha)
            elif name.endswith("dytanh.gamma"):
                v = np.ones(shape)
            elif name.endswith("dytanh.beta"):
                v = np.zeros(shape)
            else:
                w_name = name.replace(".bias", ".weight")
                w_shape = parameter_shapes(config, kind)[w_name]
                bound = 1.0 / np.sqrt(_fan_in(w_name, w_shape))
                v = rng.uniform(-bound, bound, size=shape)
            params[name] = Parameter(v.astype(config.dtype))
        return cls(config, kind, params)

    # -- bookkeeping ---------------------------------------------------------

    @property
    def binning(self) -> Binning:
        return self.config.binning

    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def zero_grad(self):
        for p in self.params.values():
            p.zero_grad()

    def _v(self, name):
        return self.params[name].value

    # -- encoding/decoding tied to the variant -------------------------------

    def encode_context(self, scaled) -> np.ndarray:
        """Scaled contexts (..., C) -> model input (..., C, D)."""
        if self.kind is VariantKind.ONE_HOT:
            return one_hot_encode(scaled, self.binning)
        return encode_many(scaled, self.binning)

    def distribution(self, logits) -> BinDistribution:
        """Outcome distribution for one logit vector (D,)."""
        if self.kind is VariantKind.ONE_HOT:
            return BinDistribution(ad.log_softmax(logits), 0.0, m_offset=1)
        return valid_sequence_log_probs_from_logits(logits)

    def loss(self, logits, targets_scaled):
        """Training loss and gradient w.r.t. logits for scaled targets (B,)."""
        if self.kind is VariantKind.ONE_HOT:
            return ad.softmax_cross_entropy(logits, one_hot_class(targets_scaled, self.binning))
        return ad.bce_loss(logits, encode_many(targets_scaled, self.binning))

    def output(self, logits) -> np.ndarray:
        """Probabilities from logits: softmax for one-hot, sigmoid otherwise."""
        if self.kind is VariantKind.ONE_HOT:
            return np.exp(ad.log_softmax(logits))
        return ad.sigmoid(logits)

    # -- passes --------------------------------------------------------------

    def forward(self, x, training: bool = False, rng: np.random.Generator | None = None):
        cfg = self.config
        x = np.asarray(x, dtype=ad.F64)
        if x.ndim == 2:
            x = x[None]
        if x.shape[1:] != (cfg.C, cfg.D):
            raise ValueError(f"expected input (B, {cfg.C}, {cfg.D}), got {x.shape}")
        g = _groups(self.kind, cfg)
        p1, p2 = (cfg.s1 - 1) // 2, (cfg.s2 - 1) // 2
        caches = []
        h = x
        for i in range(cfg.M):
            b = f"block{i}."
            a, c_conv0 = ad.conv2d_full_context_forward(
                ad.pad_bins(h, p1, p1), self._v(b + "conv2d.weight"), self._v(b + "conv2d.bias"))
            a, c_dyt = ad.dytanh_forward(
                a, self._v(b + "dytanh.alpha"), self._v(b + "dytanh.gamma"), self._v(b + "dytanh.beta"))
            a, c_conv1 = ad.grouped_conv1d_forward(
                ad.pad_bins(a, p2, p2), self._v(b + "conv1.weight"), self._v(b + "conv1.bias"), g)
            a, c_relu1 = ad.relu_forward(a)
            a, c_conv2 = ad.grouped_conv1d_forward(
                ad.pad_bins(a, p2, p2), self._v(b + "conv2.weight"), self._v(b + "conv2.bias"), g)
            a, c_relu2 = ad.relu_forward(a)
            a, c_drop = ad.dropout_forward(a, cfg.dropout_rate, rng, training)
            h = ad.residual_add(h, a)
            caches.append((c_conv0, c_dyt, c_conv1, c_relu1, c_conv2, c_relu2, c_drop))

        if self.kind is VariantKind.FC_HEAD:
            hbar = h.mean(axis=1)
            w = np.asarray(self._v("head.weight"), dtype=ad.F64)
            logits = hbar @ w.T + np.asarray(self._v("head.bias"), dtype=ad.F64)
            head_cache = (hbar, h.shape[1])
        else:
            p3 = (cfg.s3 - 1) // 2
            out, head_cache = ad.grouped_conv1d_forward(
                ad.pad_bins(h, p3, p3), self._v("head.weight"), self._v("head.bias"), 1)
            logits = out[:, 0]
        return logits, (caches, head_cache)

    def backward(self, cache, dlogits) -> np.ndarray:
        """Accumulate parameter gradients; returns the gradient w.r.t. input."""
        cfg = self.config
        caches, head_cache = cache
        dlogits = np.asarray(dlogits, dtype=ad.F64)
        if self.kind is VariantKind.FC_HEAD:
            hbar, C = head_cache
            w = np.asarray(self._v("head.weight"), dtype=ad.F64)
            self.params["head.weight"].grad += dlogits.T @ hbar
            self.params["head.bias"].grad += dlogits.sum(axis=0)
            dh = np.repeat((dlogits @ w)[:, None, :] / C, C, axis=1)
        else:
            p3 = (cfg.s3 - 1) // 2
            dhp, dw, db = ad.grouped_conv1d_backward(head_cache, dlogits[:, None])
            self.params["head.weight"].grad += dw
            self.params["head.bias"].grad += db
            dh = ad.pad_bins_backward(dhp, p3, p3)

        p1, p2 = (cfg.s1 - 1) // 2, (cfg.s2 - 1) // 2
        for i in reversed(range(cfg.M)):
            b = f"block{i}."
            c_conv0, c_dyt, c_conv1, c_relu1, c_conv2, c_relu2, c_drop = caches[i]
            da = ad.dropout_backward(c_drop, dh)
            da = ad.relu_backward(c_relu2, da)
            dap, dw, db = ad.grouped_conv1d_backward(c_conv2, da)
            self.params[b + "conv2.weight"].grad += dw
            self.params[b + "conv2.bias"].grad += db
            da = ad.relu_backward(c_relu1, ad.pad_bins_backward(dap, p2, p2))
            dap, dw, db = ad.grouped_conv1d_backward(c_conv1, da)
            self.params[b + "conv1.weight"].grad += dw
            self.params[b + "conv1.bias"].grad += db
            da, dalpha, dgamma, dbeta = ad.dytanh_backward(c_dyt, ad.pad_bins_backward(dap, p2, p2))
            self.params[b + "dytanh.alpha"].grad += dalpha
            self.params[b + "dytanh.gamma"].grad += dgamma
            self.params[b + "dytanh.beta"].grad += dbeta
            dap, dw, db = ad.conv2d_full_context_backward(c_conv0, da)
            self.params[b + "conv2d.weight"].grad += dw
            self.params[b + "conv2d.bias"].grad += db
            # residual: gradient flows both through the block and around it
            dh = dh + ad.pad_bins_backward(dap, p1, p1)
        return dh


def build_variant(kind, config: BinConvConfig, seed: int = 0) -> BinConvModel:
    try:
        kind = VariantKind(kind)
    except ValueError:
        raise ValueError(f"unknown variant {kind!r}; expected one of {[k.value for k in VariantKind]}") from None
    return BinConvModel.init(config, seed, kind)


def one_hot_class(x_scaled, binning: Binning):
    """Index (0..D-1) of the bin holding each value, clamped to the grid."""
    m = np.asarray(ones_count(np.asarray(x_scaled, dtype=np.float64), binning))
    return np.clip(m - 1, 0, binning.D - 1)


def one_hot_encode(x_scaled, binning: Binning) -> np.ndarray:
    cls = one_hot_class(x_scaled, binning)
    return (np.arange(binning.D) == np.asarray(cls)[..., None]).astype(np.float64)
