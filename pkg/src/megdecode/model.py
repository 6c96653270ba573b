"""Forward and backward passes for the two classifier variants (LF: depthwise
temporal filters; VAR: cross-component temporal kernels).

Pipeline per trial: spatial projection (n -> k latent time courses), valid
temporal convolution (depthwise for LF, full cross-component for VAR), ReLU,
temporal max-pool (factor 2, stride 2), flatten, inverted dropout, dense
softmax output. Gradients are derived by hand layer by layer; the backward
pass replays the cached ReLU/pool/dropout decisions.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from . import backend
from .errors import DimensionError, FormatError, ParameterError
from .tensor import Array

LF = "lf"
VAR = "var"


@dataclass
class ModelConfig:
    variant: str
    n_channels: int
    n_times: int
    n_classes: int
    n_latent: int = 32
    filter_len: int = 7
    pool_factor: int = 2
    pool_stride: int = 2
    dropout_rate: float = 0.5
    l1_lambda: float = 3e-4

    def __post_init__(self):
        if self.variant not in (LF, VAR):
            raise ParameterError(f"variant must be '{LF}' or '{VAR}', got {self.variant!r}")
        if self.n_latent > self.n_channels:
            raise ParameterError("n_latent must be <= n_channels")
        if self.filter_len > self.n_times:
            raise ParameterError("filter_len must be <= n_times")
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ParameterError("dropout_rate must be in [0, 1)")

    @property
    def conv_len(self) -> int:
        return self.n_times - self.filter_len + 1

    @property
    def pooled_len(self) -> int:
        return (self.conv_len - self.pool_factor) // self.pool_stride + 1

    @property
    def n_features(self) -> int:
        return self.n_latent * self.pooled_len

    def temporal_shape(self) -> tuple[int, ...]:
        if self.variant == LF:
            return (self.n_latent, self.filter_len)
        return (self.n_latent, self.filter_len, self.n_latent)

    def temporal_param_count(self) -> int:
        n = self.n_latent * self.filter_len
        return n if self.variant == LF else n * self.n_latent

    def param_count(self) -> int:
        return (self.n_channels * self.n_latent + self.temporal_param_count()
                + self.n_latent + self.n_features * self.n_classes + self.n_classes)

    def describe(self) -> dict:
        """Self-describing hyperparameter dump (used by tests and the CLI)."""
        return {
            "variant": self.variant,
            "n_latent": self.n_latent,
            "filter_len": self.filter_len,
            "pool_method": "max",
            "pool_factor": self.pool_factor,
            "pool_stride": self.pool_stride,
            "dropout_rate": self.dropout_rate,
            "l1_lambda": self.l1_lambda,
            "output_nonlinearity": "softmax",
            "n_dense_layers": 1,
            "input_link": "identity",
            "hidden_link": "relu",
        }


@dataclass
class ModelParams:
    """All trainable weights. Tensor shapes are fixed by the ModelConfig."""
    w_spatial: Array  # (n, k)
    temporal: Array   # LF: (k, l); VAR: (k, l, k)
    b_temporal: Array  # (k,)
    w_out: Array      # (F, n_classes)
    b_out: Array      # (n_classes,)

    FIELDS = ("w_spatial", "temporal", "b_temporal", "w_out", "b_out")
    WEIGHT_FIELDS = ("w_spatial", "temporal", "w_out")  # l1 applies here only

    def copy(self) -> "ModelParams":
        return ModelParams(*(getattr(self, f).copy() for f in self.FIELDS))

    def as_dict(self) -> dict[str, Array]:
        return {f: getattr(self, f) for f in self.FIELDS}

    def check_shapes(self, cfg: ModelConfig) -> None:
        expect = {
            "w_spatial": (cfg.n_channels, cfg.n_latent),
            "temporal": cfg.temporal_shape(),
            "b_temporal": (cfg.n_latent,),
            "w_out": (cfg.n_features, cfg.n_classes),
            "b_out": (cfg.n_classes,),
        }
        for name, shape in expect.items():
            got = getattr(self, name).shape
            if got != shape:
                raise DimensionError(f"{name} has shape {got}, expected {shape}")


@dataclass
class ForwardCache:
    latent: Array        # (B, k, t)
    conv_pre_relu: Array  # (B, k, t')
    pool_argmax: Array   # (B, k, tp) absolute indices into time axis
    features: Array      # (B, F) pooled + flattened
    dropout_mask: Array | None  # (B, F) of {0, 1}, None at inference
    logits: Array        # (B, n_classes)
    probabilities: Array  # (B, n_classes)


def softmax(logits: Array) -> Array:
    """Row-wise softmax with max subtraction."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def as_batch(x: Array) -> Array:
    x = np.ascontiguousarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise DimensionError(f"expected (n, t) or (B, n, t) input, got shape {x.shape}")
    return x


def spatial_forward(params: ModelParams, batch: Array) -> Array:
    """Latent time courses: W^T applied at every time point."""
    if batch.shape[1] != params.w_spatial.shape[0]:
        raise DimensionError(
            f"batch has {batch.shape[1]} channels, W expects {params.w_spatial.shape[0]}")
    return np.matmul(params.w_spatial.T[None, :, :], batch)


def forward(cfg: ModelConfig, params: ModelParams, batch: Array,
            dropout_mask: Array | None = None) -> ForwardCache:
    """Full forward pass.

    dropout_mask, when given, is a (B, F) array of 0/1 draws. Inverted
    dropout: masked features are scaled by 1/(1-p) so inference (mask None)
    needs no rescaling.
    """
    batch = as_batch(batch)
    params.check_shapes(cfg)
    if batch.shape[2] != cfg.n_times:
        raise DimensionError(f"batch has {batch.shape[2]} samples, config says {cfg.n_times}")
    latent = np.ascontiguousarray(spatial_forward(params, batch))
    if cfg.variant == LF:
        pre = backend.lf_conv_forward(latent, params.temporal, params.b_temporal)
    else:
        pre = backend.var_conv_forward(latent, params.temporal, params.b_temporal)
    act = np.maximum(pre, 0.0)
    pooled, argmax = backend.maxpool_forward(np.ascontiguousarray(act),
                                             cfg.pool_factor, cfg.pool_stride)
    feats = pooled.reshape(batch.shape[0], cfg.n_features)
    if dropout_mask is not None:
        h = feats * dropout_mask / (1.0 - cfg.dropout_rate)
    else:
        h = feats
    logits = h @ params.w_out + params.b_out
    return ForwardCache(latent=latent, conv_pre_relu=pre, pool_argmax=argmax,
                        features=feats, dropout_mask=dropout_mask,
                        logits=logits, probabilities=softmax(logits))


def predict(cfg: ModelConfig, params: ModelParams, batch: Array) -> np.ndarray:
    """Class predictions (argmax probability) without dropout."""
    return forward(cfg, params, batch).probabilities.argmax(axis=1)


def l1_penalty(cfg: ModelConfig, params: ModelParams) -> float:
    return cfg.l1_lambda * sum(
        float(np.abs(getattr(params, f)).sum()) for f in ModelParams.WEIGHT_FIELDS)


def cross_entropy(probabilities: Array, labels: np.ndarray) -> float:
    """Mean multinomial cross-entropy over a batch."""
    p = probabilities[np.arange(len(labels)), labels]
    return float(-np.log(np.maximum(p, 1e-300)).mean())


def loss(cfg: ModelConfig, params: ModelParams, probabilities: Array,
         labels: np.ndarray) -> float:
    return cross_entropy(probabilities, np.asarray(labels)) + l1_penalty(cfg, params)


def backward(cfg: ModelConfig, params: ModelParams, cache: ForwardCache,
             batch: Array, labels: np.ndarray) -> dict[str, Array]:
    """Analytic gradients of loss() w.r.t. every parameter.

    Cross-entropy gradients are averaged over the batch; the l1 subgradient
    sign(w) (0 at w == 0) is added once per weight tensor.
    """
    batch = as_batch(batch)
    labels = np.asarray(labels)
    b = batch.shape[0]
    if cache.latent.shape[0] != b:
        raise DimensionError("cache batch size does not match input batch")

    dlogits = cache.probabilities.copy()
    dlogits[np.arange(b), labels] -= 1.0
    dlogits /= b

    if cache.dropout_mask is not None:
        h = cache.features * cache.dropout_mask / (1.0 - cfg.dropout_rate)
    else:
        h = cache.features
    grads = {
        "w_out": h.T @ dlogits,
        "b_out": dlogits.sum(axis=0),
    }
    dh = dlogits @ params.w_out.T
    if cache.dropout_mask is not None:
        dh = dh * cache.dropout_mask / (1.0 - cfg.dropout_rate)
    dpooled = dh.reshape(b, cfg.n_latent, cfg.pooled_len)
    dact = backend.maxpool_backward(np.ascontiguousarray(dpooled),
                                    cache.pool_argmax, cfg.conv_len)
    dpre = np.ascontiguousarray(dact * (cache.conv_pre_relu > 0))
    if cfg.variant == LF:
        dlatent, dtemporal, dbias = backend.lf_conv_backward(
            dpre, cache.latent, params.temporal)
    else:
        dlatent, dtemporal, dbias = backend.var_conv_backward(
            dpre, cache.latent, params.temporal)
    grads["temporal"] = dtemporal
    grads["b_temporal"] = dbias
    b_, n_, t_ = batch.shape
    k_ = dlatent.shape[1]
    grads["w_spatial"] = (
        batch.transpose(1, 0, 2).reshape(n_, b_ * t_)
        @ dlatent.transpose(0, 2, 1).reshape(b_ * t_, k_))

    for name in ModelParams.WEIGHT_FIELDS:
        grads[name] = grads[name] + cfg.l1_lambda * np.sign(getattr(params, name))
    return grads


def var_from_lf(lf_temporal: Array) -> Array:
    """Embed LF filters as a VAR kernel bank with zero off-diagonal slices."""
    k, l = lf_temporal.shape
    kernels = np.zeros((k, l, k))
    for c in range(k):
        kernels[c, :, c] = lf_temporal[c]
    return kernels


# --- persistence: "MEGW" version 1, little-endian ---

_W_MAGIC = b"MEGW"
_W_VERSION = 1
_W_HEADER = struct.Struct("<4sHBIIIIIIIdd")
_VARIANT_CODE = {LF: 0, VAR: 1}
_VARIANT_NAME = {v: k for k, v in _VARIANT_CODE.items()}


def save_model(path, cfg: ModelConfig, params: ModelParams) -> None:
    params.check_shapes(cfg)
    with open(path, "wb") as fh:
        fh.write(_W_HEADER.pack(
            _W_MAGIC, _W_VERSION, _VARIANT_CODE[cfg.variant], cfg.n_channels,
            cfg.n_times, cfg.n_classes, cfg.n_latent, cfg.filter_len,
            cfg.pool_factor, cfg.pool_stride, cfg.dropout_rate, cfg.l1_lambda))
        for name in ModelParams.FIELDS:
            fh.write(np.ascontiguousarray(getattr(params, name), dtype="<f8").tobytes())


def load_model(path) -> tuple[ModelConfig, ModelParams]:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _W_HEADER.size:
        raise FormatError("model file shorter than header")
    (magic, version, variant, n_channels, n_times, n_classes, n_latent,
     filter_len, pool_factor, pool_stride, dropout, l1) = _W_HEADER.unpack_from(raw)
    if magic != _W_MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {_W_MAGIC!r}")
    if version != _W_VERSION:
        raise FormatError(f"unsupported model file version {version}")
    cfg = ModelConfig(variant=_VARIANT_NAME[variant], n_channels=n_channels,
                      n_times=n_times, n_classes=n_classes, n_latent=n_latent,
                      filter_len=filter_len, pool_factor=pool_factor,
                      pool_stride=pool_stride, dropout_rate=dropout, l1_lambda=l1)
    shapes = {
        "w_spatial": (cfg.n_channels, cfg.n_latent),
        "temporal": cfg.temporal_shape(),
        "b_temporal": (cfg.n_latent,),
        "w_out": (cfg.n_features, cfg.n_classes),
        "b_out": (cfg.n_classes,),
    }
    off = _W_HEADER.size
    arrays = {}
    for name in ModelParams.FIELDS:
        count = int(np.prod(shapes[name]))
        end = off + 8 * count
        if end > len(raw):
            raise FormatError(f"model file truncated in tensor {name}")
        arrays[name] = np.frombuffer(raw, "<f8", count, off).reshape(shapes[name]).copy()
        off = end
    if off != len(raw):
        raise FormatError("model file has trailing bytes")
    return cfg, ModelParams(**arrays)
