"""Pure-numpy implementations of the hot model kernels.

These are the fallback used when the compiled extension is unavailable.
All functions take and return float64 arrays; shapes follow the model
convention (batch, components, time).
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

BACKEND_NAME = "python"


def lf_conv_forward(latent: np.ndarray, taps: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Depthwise valid cross-correlation.

    latent: (B, k, t), taps: (k, l), bias: (k) -> (B, k, t - l + 1)
    """
    win = sliding_window_view(latent, taps.shape[1], axis=2)  # (B, k, t', l)
    return np.einsum("bcij,cj->bci", win, taps, optimize=True) + bias[None, :, None]


def var_conv_forward(latent: np.ndarray, kernels: np.ndarray, bias: np.ndarray) -> np.ndarray:
    """Full cross-component valid cross-correlation.

    latent: (B, k, t), kernels: (k, l, k) with kernels[c, j, d] the weight of
    input component d at lag j feeding output component c.
    """
    win = sliding_window_view(latent, kernels.shape[1], axis=2)  # (B, k, t', l)
    return np.einsum("bdij,cjd->bci", win, kernels, optimize=True) + bias[None, :, None]


def lf_conv_backward(dpre: np.ndarray, latent: np.ndarray, taps: np.ndarray):
    """Gradients of the depthwise convolution.

    Returns (dlatent, dtaps, dbias) for dpre of shape (B, k, t').
    """
    l = taps.shape[1]
    win = sliding_window_view(latent, l, axis=2)
    dtaps = np.einsum("bci,bcij->cj", dpre, win, optimize=True)
    dbias = dpre.sum(axis=(0, 2))
    padded = np.pad(dpre, ((0, 0), (0, 0), (l - 1, l - 1)))
    winp = sliding_window_view(padded, l, axis=2)  # (B, k, t, l)
    dlatent = np.einsum("bcsj,cj->bcs", winp, taps[:, ::-1], optimize=True)
    return dlatent, dtaps, dbias


def var_conv_backward(dpre: np.ndarray, latent: np.ndarray, kernels: np.ndarray):
    """Gradients of the full cross-component convolution."""
    l = kernels.shape[1]
    win = sliding_window_view(latent, l, axis=2)
    dkernels = np.einsum("bci,bdij->cjd", dpre, win, optimize=True)
    dbias = dpre.sum(axis=(0, 2))
    padded = np.pad(dpre, ((0, 0), (0, 0), (l - 1, l - 1)))
    winp = sliding_window_view(padded, l, axis=2)
    dlatent = np.einsum("bcsj,cjd->bds", winp, kernels[:, ::-1, :], optimize=True)
    return dlatent, dkernels, dbias


def maxpool_forward(x: np.ndarray, factor: int, stride: int):
    """Temporal max pooling with cached argmax (first maximum on ties).

    x: (B, k, t') -> (pooled (B, k, tp), idx (B, k, tp)) where idx holds
    absolute time indices into x.
    """
    win = sliding_window_view(x, factor, axis=2)[:, :, ::stride]  # (B, k, tp, factor)
    local = win.argmax(axis=3)
    pooled = np.take_along_axis(win, local[..., None], axis=3)[..., 0]
    idx = np.arange(local.shape[2])[None, None, :] * stride + local
    return pooled, idx.astype(np.int64)


def maxpool_backward(dpooled: np.ndarray, idx: np.ndarray, t_in: int) -> np.ndarray:
    """Route pooled gradients back to the cached argmax positions."""
    b, k, tp = dpooled.shape
    dx = np.zeros((b, k, t_in), dtype=dpooled.dtype)
    bi = np.repeat(np.arange(b), k * tp)
    ki = np.tile(np.repeat(np.arange(k), tp), b)
    np.add.at(dx, (bi, ki, idx.ravel()), dpooled.ravel())
    return dx
