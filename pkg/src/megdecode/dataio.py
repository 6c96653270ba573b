"""Epoch file format, baseline scaling, decimation and subject-wise splits.

File format "MEGB", version 1, little-endian:
    magic     4 bytes  b"MEGB"
    version   u16
    n_trials  u32
    n_channels u32
    n_times   u32
    sample_rate f32
    n_classes u16
    flags     u16   bit 0 set -> float64 payload, clear -> float32
    labels    n_trials * u16
    subjects  n_trials * u16
    epochs    trial-major, channel-major within trial
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, ParameterError
from .synthgen import EpochSet
from .tensor import Array

MAGIC = b"MEGB"
VERSION = 1
_HEADER = struct.Struct("<4sHIIIfHH")
FLAG_FLOAT64 = 1

BASELINE_EPS = 1e-12


@dataclass
class SplitSpec:
    """Leave-one-subject-out split with a validation fraction of the rest."""
    held_out_subject: int
    validation_fraction: float = 0.1

    def __post_init__(self):
        if not 0.0 < self.validation_fraction < 1.0:
            raise ParameterError("validation_fraction must be in (0, 1)")


def write_epochs(path, epoch_set: EpochSet, float64: bool = True) -> None:
    n_trials, n_channels, n_times = epoch_set.epochs.shape
    flags = FLAG_FLOAT64 if float64 else 0
    dtype = "<f8" if float64 else "<f4"
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, n_trials, n_channels, n_times,
                              epoch_set.sample_rate_hz, epoch_set.n_classes, flags))
        fh.write(epoch_set.labels.astype("<u2").tobytes())
        fh.write(epoch_set.subjects.astype("<u2").tobytes())
        fh.write(np.ascontiguousarray(epoch_set.epochs, dtype=dtype).tobytes())


def read_epochs(path) -> EpochSet:
    with open(path, "rb") as fh:
        raw = fh.read()
    if len(raw) < _HEADER.size:
        raise FormatError("file shorter than header")
    magic, version, n_trials, n_channels, n_times, fs, n_classes, flags = \
        _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise FormatError(f"bad magic {magic!r}, expected {MAGIC!r}")
    if version != VERSION:
        raise FormatError(f"unsupported version {version}, expected {VERSION}")
    itemsize = 8 if flags & FLAG_FLOAT64 else 4
    expected = _HEADER.size + 2 * 2 * n_trials + itemsize * n_trials * n_channels * n_times
    if len(raw) != expected:
        raise FormatError(
            f"payload size mismatch: file has {len(raw)} bytes, header implies {expected}")
    if n_trials == 0:
        raise FormatError("header declares 0 trials")
    off = _HEADER.size
    labels = np.frombuffer(raw, "<u2", n_trials, off).astype(np.int64)
    off += 2 * n_trials
    subjects = np.frombuffer(raw, "<u2", n_trials, off).astype(np.int64)
    off += 2 * n_trials
    dtype = "<f8" if flags & FLAG_FLOAT64 else "<f4"
    epochs = np.frombuffer(raw, dtype, n_trials * n_channels * n_times, off)
    epochs = epochs.reshape(n_trials, n_channels, n_times).astype(np.float64)
    return EpochSet(epochs, labels, subjects, fs, n_classes)


def baseline_scale(epoch: Array, baseline_len: int, eps: float = BASELINE_EPS) -> Array:
    """Scale an (n, t) epoch by the scalar mean/std of its baseline interval.

    Mean and std pool all channels over the first baseline_len samples
    (std divisor N-1), so spatial structure is preserved.
    """
    epoch = np.asarray(epoch, dtype=np.float64)
    n, t = epoch.shape
    if not 1 <= baseline_len <= t:
        raise ParameterError(f"baseline_len {baseline_len} out of range [1, {t}]")
    base = epoch[:, :baseline_len]
    mu = base.mean()
    sd = base.std(ddof=1) if base.size > 1 else 0.0
    return (epoch - mu) / max(sd, eps)


def decimate(epoch: Array, factor: int) -> Array:
    """Keep every factor-th sample starting at index 0 (no anti-alias filter;
    callers must band-limit first)."""
    if factor < 1:
        raise ParameterError(f"decimation factor must be >= 1, got {factor}")
    return np.asarray(epoch)[..., ::factor]


def baseline_scale_set(epoch_set: EpochSet, baseline_len: int,
                       drop_baseline: bool = True, eps: float = BASELINE_EPS) -> EpochSet:
    """Baseline-scale every trial; optionally drop the baseline prefix."""
    scaled = np.stack([baseline_scale(tr, baseline_len, eps) for tr in epoch_set.epochs])
    if drop_baseline:
        scaled = scaled[:, :, baseline_len:]
    return EpochSet(scaled, epoch_set.labels, epoch_set.subjects,
                    epoch_set.sample_rate_hz, epoch_set.n_classes)


def split(epoch_set: EpochSet, spec: SplitSpec,
          rng: np.random.Generator) -> tuple[EpochSet, EpochSet, EpochSet]:
    """LOSO split: (train, validation, test).

    Test is every trial of the held-out subject. The remaining trials are
    shuffled; validation takes validation_fraction of them with class counts
    balanced within one trial.
    """
    subjects = epoch_set.subjects
    if spec.held_out_subject not in subjects:
        raise ParameterError(f"subject {spec.held_out_subject} not present in set")
    test_mask = subjects == spec.held_out_subject
    test = epoch_set.select(test_mask)
    rest_idx = np.flatnonzero(~test_mask)
    n_rest = rest_idx.size
    n_val = int(round(spec.validation_fraction * n_rest))

    # Per-class allocation: floor share everywhere, remainder spread one at a
    # time over a shuffled class order so balance holds within +-1.
    labels_rest = epoch_set.labels[rest_idx]
    classes = np.unique(labels_rest)
    base, extra = divmod(n_val, classes.size)
    class_order = rng.permutation(classes)
    val_idx = []
    train_idx = []
    for pos, cls in enumerate(class_order):
        cls_idx = rest_idx[labels_rest == cls]
        cls_idx = rng.permutation(cls_idx)
        take = base + (1 if pos < extra else 0)
        val_idx.append(cls_idx[:take])
        train_idx.append(cls_idx[take:])
    val_idx = np.concatenate(val_idx)
    train_idx = rng.permutation(np.concatenate(train_idx))
    return epoch_set.select(train_idx), epoch_set.select(val_idx), test
