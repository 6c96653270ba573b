"""Model interpretation: informative components, spatial activation patterns,
latency estimates and temporal-filter spectra.

Interpretation is restricted to the LF variant; the cross-component kernels
of the VAR variant have no per-component reading.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .errors import ParameterError
from .model import LF, ModelConfig, ModelParams
from .synthgen import EpochSet
from .tensor import Array, covariance, sym_inverse


@dataclass
class ComponentAttribution:
    class_idx: int
    component_idx: int
    pooled_time_idx: int | None
    latency_seconds: float | None
    weight_value: float


@dataclass
class ActivationPattern:
    pattern: Array  # (n_channels,)
    component_idx: int
    used_precision: bool


@dataclass
class SpectrumEstimate:
    freqs_hz: Array
    power: Array
    peak_freq_hz: float


class NoPositiveContribution(ParameterError):
    """Every output weight for the requested class is <= 0."""


def _require_lf(cfg: ModelConfig) -> None:
    if cfg.variant != LF:
        raise ParameterError("interpretation is only defined for the LF variant")


def _class_weights(cfg: ModelConfig, params: ModelParams, class_idx: int) -> Array:
    """Output weights for one class reshaped to (components, pooled time)."""
    return params.w_out[:, class_idx].reshape(cfg.n_latent, cfg.pooled_len)


def pooled_index_to_latency(cfg: ModelConfig, pooled_idx: int, fs_hz: float) -> float:
    """Map a pooled-time index back to epoch seconds.

    Centre of the pooling window plus the centre of the convolution window.
    """
    sample = (pooled_idx * cfg.pool_stride + (cfg.pool_factor - 1) / 2
              + (cfg.filter_len - 1) / 2)
    return sample / fs_hz


def top_component_evoked(cfg: ModelConfig, params: ModelParams, class_idx: int,
                         fs_hz: float) -> ComponentAttribution:
    """Single (component, pooled time) cell with the maximum positive weight.

    Ties resolve to the lowest (component, time) pair in lexicographic order.
    """
    _require_lf(cfg)
    w = _class_weights(cfg, params, class_idx)
    if not np.any(w > 0):
        raise NoPositiveContribution(f"class {class_idx} has no positive output weight")
    comp, tix = np.unravel_index(np.argmax(w), w.shape)
    return ComponentAttribution(
        class_idx=class_idx, component_idx=int(comp), pooled_time_idx=int(tix),
        latency_seconds=pooled_index_to_latency(cfg, int(tix), fs_hz),
        weight_value=float(w[comp, tix]))


def top_component_induced(cfg: ModelConfig, params: ModelParams,
                          class_idx: int) -> tuple[ComponentAttribution, ComponentAttribution]:
    """Components with the largest positive and most negative summed weight
    over pooled time (for responses extended over the whole epoch)."""
    _require_lf(cfg)
    sums = _class_weights(cfg, params, class_idx).sum(axis=1)
    if not np.any(sums > 0):
        raise NoPositiveContribution(f"class {class_idx} has no positive summed weight")
    pos = int(np.argmax(sums))
    neg = int(np.argmin(sums))
    return (
        ComponentAttribution(class_idx, pos, None, None, float(sums[pos])),
        ComponentAttribution(class_idx, neg, None, None, float(sums[neg])),
    )


def activation_pattern(w_spatial: Array, data: EpochSet, component_idx: int,
                       use_precision: bool = False,
                       ridge: float = 1e-8) -> ActivationPattern:
    """Spatial activation pattern of one latent component.

    pattern = Sigma_x @ w by default; with use_precision the latent precision
    (inverse covariance of the projected data, plus ridge) is applied as well.
    """
    if len(data) == 0:
        raise ParameterError("activation_pattern needs a nonempty data set")
    w_spatial = np.asarray(w_spatial, dtype=np.float64)
    n_trials, n_ch, n_t = data.epochs.shape
    concat = np.transpose(data.epochs, (1, 0, 2)).reshape(n_ch, n_trials * n_t)
    sigma_x = covariance(concat)
    if not use_precision:
        return ActivationPattern(sigma_x @ w_spatial[:, component_idx],
                                 component_idx, False)
    latent = w_spatial.T @ concat
    sigma_s = covariance(latent)
    full = sigma_x @ w_spatial @ sym_inverse(sigma_s, ridge)
    return ActivationPattern(full[:, component_idx], component_idx, True)


def filter_spectrum(taps: Array, fs_hz: float, n_freqs: int = 256) -> SpectrumEstimate:
    """Squared magnitude response of FIR taps on a uniform grid [0, fs/2]."""
    taps = np.asarray(taps, dtype=np.float64).ravel()
    if taps.size < 1:
        raise ParameterError("need at least one tap")
    freqs = np.linspace(0.0, fs_hz / 2.0, n_freqs)
    j = np.arange(taps.size)
    h = np.exp(-2j * np.pi * np.outer(freqs, j) / fs_hz) @ taps
    power = np.abs(h) ** 2
    return SpectrumEstimate(freqs_hz=freqs, power=power,
                            peak_freq_hz=float(freqs[np.argmax(power)]))


def least_informative_components(cfg: ModelConfig, params: ModelParams,
                                 n: int = 5) -> list[int]:
    """Components with the smallest absolute weight sum over classes and time."""
    if n > cfg.n_latent:
        raise ParameterError(f"requested {n} components, model has {cfg.n_latent}")
    w = np.abs(params.w_out).sum(axis=1)  # (F,)
    totals = w.reshape(cfg.n_latent, cfg.pooled_len).sum(axis=1)
    return [int(i) for i in np.argsort(totals, kind="stable")[:n]]


@dataclass
class InterpretationReport:
    """Per-class attributions, patterns and spectra for a trained LF model."""
    attributions: list[ComponentAttribution]
    patterns: list[ActivationPattern]
    spectra: list[SpectrumEstimate]
    least_informative: list[int]

    def write_csv(self, directory) -> None:
        import os
        os.makedirs(directory, exist_ok=True)
        with open(os.path.join(directory, "patterns.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class_idx", "component_idx"]
                       + [f"ch{j}" for j in range(len(self.patterns[0].pattern))])
            for att, pat in zip(self.attributions, self.patterns):
                w.writerow([att.class_idx, pat.component_idx] + list(pat.pattern))
        with open(os.path.join(directory, "spectra.csv"), "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["class_idx", "peak_freq_hz"]
                       + [f"f{j}" for j in range(len(self.spectra[0].freqs_hz))])
            for att, sp in zip(self.attributions, self.spectra):
                w.writerow([att.class_idx, sp.peak_freq_hz] + list(sp.power))
        with open(os.path.join(directory, "summary.txt"), "w") as fh:
            for att in self.attributions:
                lat = "n.a." if att.latency_seconds is None else f"{att.latency_seconds:.3f}s"
                fh.write(f"class {att.class_idx}: component {att.component_idx}, "
                         f"latency {lat}, weight {att.weight_value:.5f}\n")
            fh.write("least informative components: "
                     + ", ".join(map(str, self.least_informative)) + "\n")


def interpret_model(cfg: ModelConfig, params: ModelParams, data: EpochSet,
                    mode: str = "evoked", use_precision: bool = False,
                    ridge: float = 1e-8) -> InterpretationReport:
    """Full interpretation pass over all classes of a trained LF model."""
    _require_lf(cfg)
    attributions = []
    patterns = []
    spectra = []
    for class_idx in range(cfg.n_classes):
        if mode == "evoked":
            att = top_component_evoked(cfg, params, class_idx, data.sample_rate_hz)
        elif mode == "induced":
            att, _ = top_component_induced(cfg, params, class_idx)
        else:
            raise ParameterError(f"unknown interpretation mode {mode!r}")
        attributions.append(att)
        patterns.append(activation_pattern(params.w_spatial, data, att.component_idx,
                                           use_precision, ridge))
        spectra.append(filter_spectrum(params.temporal[att.component_idx],
                                       data.sample_rate_hz))
    n_least = min(5, cfg.n_latent)
    return InterpretationReport(attributions, patterns, spectra,
                                least_informative_components(cfg, params, n_least))
