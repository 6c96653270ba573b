"""Dense numeric kernels and the seeded random number generator.

Arrays are plain numpy float64 ndarrays (row-major). Every public operation
validates its inputs and guarantees a finite result. The RNG is pinned to
numpy's PCG64 so that a given seed produces the same stream on every
platform.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np

from .errors import DimensionError, ParameterError, SingularityError

Array = np.ndarray


def make_rng(seed: int) -> np.random.Generator:
    """Seeded generator. PCG64 is the pinned algorithm for reproducibility."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))


def substream(seed: int, *keys: int) -> np.random.Generator:
    """Independent, deterministic substream for (seed, key, key, ...).

    Used to give every (subject, trial) its own stream so generation is
    reproducible regardless of iteration or thread order.
    """
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence((seed, *keys))))


def check_finite(a: Array, name: str = "array") -> Array:
    if not np.all(np.isfinite(a)):
        raise ParameterError(f"{name} contains non-finite values")
    return a


def matmul(a: Array, b: Array) -> Array:
    """Matrix product a @ b with explicit shape checking."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.ndim != 2 or b.ndim != 2:
        raise DimensionError(f"matmul expects 2-d operands, got {a.shape} and {b.shape}")
    if a.shape[1] != b.shape[0]:
        raise DimensionError(f"inner dimensions differ: {a.shape} x {b.shape}")
    return check_finite(a @ b, "matmul result")


def conv1d_valid(signal: Array, kernel: Array) -> Array:
    """Valid cross-correlation: out[i] = sum_j signal[i+j] * kernel[j].

    No kernel flip; this is the CNN-layer convention and the same one used
    when interpreting learned temporal filters as FIR frequency responses.
    """
    signal = np.asarray(signal, dtype=np.float64).ravel()
    kernel = np.asarray(kernel, dtype=np.float64).ravel()
    if kernel.size > signal.size:
        raise DimensionError(
            f"kernel length {kernel.size} exceeds signal length {signal.size}")
    return check_finite(np.correlate(signal, kernel, mode="valid"), "conv1d result")


def covariance(x: Array) -> Array:
    """Row-mean-centered sample covariance of an (n, T) matrix, divisor T-1."""
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 2:
        raise DimensionError(f"covariance expects a 2-d matrix, got shape {x.shape}")
    n, t = x.shape
    if t < 2:
        raise ParameterError(f"covariance needs at least 2 samples, got {t}")
    xc = x - x.mean(axis=1, keepdims=True)
    c = (xc @ xc.T) / (t - 1)
    c = 0.5 * (c + c.T)  # kill asymmetric round-off
    return check_finite(c, "covariance")


def sym_inverse(a: Array, ridge: float = 0.0) -> Array:
    """Inverse of (a + ridge*I) via Cholesky; `a` must be symmetric."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise DimensionError(f"sym_inverse expects a square matrix, got {a.shape}")
    if not np.allclose(a, a.T, rtol=0.0, atol=1e-10 * max(1.0, np.abs(a).max())):
        raise DimensionError("sym_inverse expects a symmetric matrix")
    n = a.shape[0]
    m = a + ridge * np.eye(n)
    try:
        chol = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise SingularityError(f"matrix not positive definite after ridge {ridge}") from exc
    inv_chol = np.linalg.solve(chol, np.eye(n))
    out = inv_chol.T @ inv_chol
    return check_finite(0.5 * (out + out.T), "sym_inverse")


def rng_uniform(rng: np.random.Generator, low: float, high: float,
                shape: Sequence[int] | int) -> Array:
    if not low < high:
        raise ParameterError(f"uniform range invalid: low={low} high={high}")
    return rng.uniform(low, high, size=shape)


def rng_normal(rng: np.random.Generator, mean: float, std: float,
               shape: Sequence[int] | int) -> Array:
    if std < 0:
        raise ParameterError(f"normal std must be >= 0, got {std}")
    if std == 0:
        return np.full(shape, float(mean))
    return rng.normal(mean, std, size=shape)
