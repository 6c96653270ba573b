"""Synthetic multi-subject epoch generator.

Sensor data are produced as a linear spatial mixture of a small number of
latent autoregressive sources plus white observation noise. Class structure
enters either as an additive evoked waveform on designated sources or as a
per-class gain on the AR innovation variance (induced / oscillatory-power
modulation). Per-subject spatial variability is modelled by jittering the
mixing matrix columns.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, StabilityError
from .tensor import Array, substream

EVOKED_BUMP_DEFAULT_WIDTH_S = 0.12


@dataclass
class LatentSourceSpec:
    """One latent source: AR dynamics plus optional class-dependent structure.

    ar_coeffs is the diagonal (univariate) AR model of the source. On trials
    of class c, the innovation std is innovation_std * class_gain[c], and
    evoked_waveform (length n_times) is added if c is in evoked_classes.
    """
    ar_coeffs: tuple[float, ...] = ()
    innovation_std: float = 1.0
    evoked_waveform: Array | None = None
    evoked_classes: tuple[int, ...] = ()
    class_gain: tuple[float, ...] | None = None  # None -> gain 1 for every class
    peak_freq_hz: float | None = None  # documentation only

    def __post_init__(self):
        if self.innovation_std <= 0:
            raise ParameterError("innovation_std must be > 0")
        if self.class_gain is not None and any(g <= 0 for g in self.class_gain):
            raise ParameterError("class_gain entries must be > 0")
        check_ar_stable(self.ar_coeffs)

    def gain(self, class_idx: int) -> float:
        if self.class_gain is None:
            return 1.0
        return float(self.class_gain[class_idx])


def check_ar_stable(ar_coeffs) -> None:
    """Raise unless all roots of 1 - sum a_l z^-l are inside the unit circle."""
    coeffs = np.asarray(ar_coeffs, dtype=np.float64)
    if coeffs.size == 0:
        return
    roots = np.roots(np.concatenate(([1.0], -coeffs)))
    if roots.size and np.max(np.abs(roots)) >= 1.0:
        raise StabilityError(
            f"AR coefficients {list(coeffs)} are unstable "
            f"(max root modulus {np.max(np.abs(roots)):.4f})")


def ar2_coeffs(peak_hz: float, fs_hz: float, r: float = 0.95) -> tuple[float, float]:
    """AR(2) coefficients resonant at peak_hz with pole radius r."""
    if not 0 < r < 1:
        raise ParameterError("pole radius must be in (0, 1)")
    a1 = 2.0 * r * np.cos(2.0 * np.pi * peak_hz / fs_hz)
    return (float(a1), float(-r * r))


@dataclass
class GenConfig:
    """Full parameterization of the generative simulator."""
    n_channels: int
    n_latent: int
    n_times: int
    sample_rate_hz: float
    sources: list[LatentSourceSpec]
    base_mixing: Array
    noise_std: float
    n_subjects: int
    subject_mixing_jitter: float
    trials_per_class_per_subject: int
    n_classes: int
    seed: int
    baseline_samples: int = 0  # silent prefix prepended to each trial
    subject_sources: list[list[LatentSourceSpec]] | None = None
    # optional per-subject source specs (e.g. subject-specific evoked
    # latencies); falls back to `sources` when None

    def sources_for(self, subject: int) -> list[LatentSourceSpec]:
        if self.subject_sources is None:
            return self.sources
        return self.subject_sources[subject]

    def __post_init__(self):
        if self.n_latent < 1 or self.n_channels < 1:
            raise ParameterError("n_latent and n_channels must be >= 1")
        if len(self.sources) != self.n_latent:
            raise ParameterError("need one LatentSourceSpec per latent source")
        if self.noise_std < 0 or self.subject_mixing_jitter < 0:
            raise ParameterError("noise_std and subject_mixing_jitter must be >= 0")
        self.base_mixing = np.asarray(self.base_mixing, dtype=np.float64)
        if self.base_mixing.shape != (self.n_channels, self.n_latent):
            raise ParameterError(
                f"base_mixing shape {self.base_mixing.shape} != "
                f"({self.n_channels}, {self.n_latent})")
        norms = np.linalg.norm(self.base_mixing, axis=0)
        if not np.allclose(norms, 1.0, atol=1e-8):
            raise ParameterError("base_mixing columns must have unit norm")
        if self.subject_sources is not None and len(self.subject_sources) != self.n_subjects:
            raise ParameterError("subject_sources needs one spec list per subject")
        all_specs = [s for group in (self.subject_sources or [self.sources])
                     for s in group] + self.sources
        for spec in all_specs:
            if spec.evoked_waveform is not None and len(spec.evoked_waveform) != self.n_times:
                raise ParameterError("evoked_waveform length must equal n_times")

    @property
    def total_times(self) -> int:
        return self.baseline_samples + self.n_times

    @property
    def n_trials_total(self) -> int:
        return self.n_subjects * self.n_classes * self.trials_per_class_per_subject


@dataclass
class EpochSet:
    """Trials with labels and subject identity; the unit of train/eval."""
    epochs: Array  # (trials, channels, times)
    labels: np.ndarray  # int
    subjects: np.ndarray  # int
    sample_rate_hz: float
    n_classes: int

    def __post_init__(self):
        self.epochs = np.asarray(self.epochs, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        self.subjects = np.asarray(self.subjects, dtype=np.int64)
        n = self.epochs.shape[0]
        if len(self.labels) != n or len(self.subjects) != n:
            raise ParameterError("labels/subjects length must equal trial count")

    def __len__(self) -> int:
        return self.epochs.shape[0]

    def select(self, mask) -> "EpochSet":
        return EpochSet(self.epochs[mask], self.labels[mask], self.subjects[mask],
                        self.sample_rate_hz, self.n_classes)


def simulate_source(spec: LatentSourceSpec, n_times: int, class_idx: int,
                    rng: np.random.Generator, baseline_samples: int = 0) -> Array:
    """One latent source time course of length baseline_samples + n_times.

    The class gain applies only after the baseline prefix (the prefix keeps
    unit gain and carries no evoked waveform). A burn-in of 10*L samples is
    generated and discarded so trials start in the stationary regime.
    """
    coeffs = np.asarray(spec.ar_coeffs, dtype=np.float64)
    order = coeffs.size
    total = baseline_samples + n_times
    if n_times <= order:
        raise ParameterError(f"n_times ({n_times}) must exceed AR order ({order})")
    burn = 10 * order
    gain = spec.gain(class_idx)
    std = np.full(burn + total, spec.innovation_std)
    std[burn + baseline_samples:] *= gain
    innov = rng.normal(0.0, 1.0, size=burn + total) * std
    if order == 0:
        s = innov
    else:
        s = np.empty(burn + total)
        s[:order] = innov[:order]
        for t in range(order, burn + total):
            s[t] = coeffs @ s[t - order:t][::-1] + innov[t]
    out = s[burn:].copy()
    if spec.evoked_waveform is not None and class_idx in spec.evoked_classes:
        out[baseline_samples:] += np.asarray(spec.evoked_waveform, dtype=np.float64)
    return out


def subject_mixing(config: GenConfig, subject: int) -> Array:
    """Per-subject mixing matrix: jittered base mixing, columns renormalized.

    Deterministic in (config.seed, subject).
    """
    if subject >= config.n_subjects:
        raise ParameterError(f"subject {subject} out of range ({config.n_subjects})")
    if config.subject_mixing_jitter == 0:
        return config.base_mixing.copy()
    rng = substream(config.seed, 1, subject)
    g = rng.normal(0.0, 1.0, size=config.base_mixing.shape)
    mixed = config.base_mixing + config.subject_mixing_jitter * g
    return mixed / np.linalg.norm(mixed, axis=0, keepdims=True)


def generate(config: GenConfig) -> EpochSet:
    """Generate the full multi-subject EpochSet. Fully deterministic in seed.

    Each trial draws its sources and sensor noise from a substream keyed by
    (seed, subject, trial), so results do not depend on generation order.
    """
    n_trials = config.n_trials_total
    total_t = config.total_times
    epochs = np.empty((n_trials, config.n_channels, total_t))
    labels = np.empty(n_trials, dtype=np.int64)
    subjects = np.empty(n_trials, dtype=np.int64)

    trial = 0
    for subject in range(config.n_subjects):
        mixing = subject_mixing(config, subject)
        specs = config.sources_for(subject)
        for class_idx in range(config.n_classes):
            for rep in range(config.trials_per_class_per_subject):
                rng = substream(config.seed, 2, subject, class_idx, rep)
                s = np.stack([
                    simulate_source(spec, config.n_times, class_idx, rng,
                                    config.baseline_samples)
                    for spec in specs
                ])
                x = mixing @ s
                if config.noise_std > 0:
                    x = x + rng.normal(0.0, config.noise_std, size=x.shape)
                epochs[trial] = x
                labels[trial] = class_idx
                subjects[trial] = subject
                trial += 1
    return EpochSet(epochs, labels, subjects, config.sample_rate_hz, config.n_classes)


def hanning_bump(n_times: int, fs_hz: float, latency_s: float,
                 width_s: float = EVOKED_BUMP_DEFAULT_WIDTH_S,
                 amplitude: float = 1.0) -> Array:
    """Hann-windowed bump centred at latency_s, zero elsewhere."""
    w = np.zeros(n_times)
    half = max(1, int(round(width_s * fs_hz / 2)))
    centre = int(round(latency_s * fs_hz))
    lo, hi = centre - half, centre + half + 1
    window = np.hanning(hi - lo) * amplitude
    src_lo, src_hi = max(lo, 0), min(hi, n_times)
    w[src_lo:src_hi] = window[src_lo - lo:src_hi - lo]
    return w


def evoked_class_config(n_channels: int = 64, n_latent: int = 8, n_times: int = 125,
                        fs_hz: float = 125.0, n_classes: int = 5, n_subjects: int = 7,
                        trials_per_class_per_subject: int = 60, snr: float = 1.0,
                        subject_mixing_jitter: float = 0.25, amplitude: float = 6.0,
                        subject_latency_jitter_s: float = 0.03, seed: int = 0,
                        latencies_s: tuple[float, ...] | None = None) -> GenConfig:
    """Desk-scale evoked-response task: class c adds a bump on source c.

    noise_std is chosen analytically so that the per-channel evoked power to
    noise power ratio over the evoked window equals `snr`. Besides the
    mixing jitter, each subject gets a deterministic latency offset on the
    evoked bumps (across-subject temporal variability).
    """
    if n_classes > n_latent:
        raise ParameterError("need at least one source per evoked class")
    rng = substream(seed, 3)
    mixing = rng.normal(0.0, 1.0, size=(n_channels, n_latent))
    mixing /= np.linalg.norm(mixing, axis=0, keepdims=True)
    if latencies_s is None:
        latencies_s = tuple(0.2 + 0.6 * c / max(1, n_classes - 1) for c in range(n_classes))

    def build_sources(latency_shift_s: float):
        specs = []
        powers = []
        for idx in range(n_latent):
            if idx < n_classes:
                wave = hanning_bump(n_times, fs_hz, latencies_s[idx] + latency_shift_s,
                                    amplitude=amplitude)
                specs.append(LatentSourceSpec(
                    ar_coeffs=ar2_coeffs(8.0 + 2.0 * idx, fs_hz, r=0.7),
                    innovation_std=1.0, evoked_waveform=wave, evoked_classes=(idx,)))
                powers.append(float(np.mean(wave ** 2)))
            else:
                specs.append(LatentSourceSpec(
                    ar_coeffs=ar2_coeffs(6.0 + 3.0 * idx, fs_hz, r=0.7),
                    innovation_std=1.0))
        return specs, powers

    sources, bump_powers = build_sources(0.0)
    subject_sources = None
    if subject_latency_jitter_s > 0:
        subject_sources = []
        for subject in range(n_subjects):
            shift = float(substream(seed, 4, subject).normal(0.0, subject_latency_jitter_s))
            subject_sources.append(build_sources(shift)[0])

    # Mixing columns have unit norm, so channel-summed evoked power equals
    # the bump power; noise power per channel is noise_std^2.
    evoked_chan_power = float(np.mean(bump_powers)) / n_channels
    noise_std = float(np.sqrt(evoked_chan_power / snr))
    baseline = int(round(0.3 * fs_hz))
    return GenConfig(
        n_channels=n_channels, n_latent=n_latent, n_times=n_times,
        sample_rate_hz=fs_hz, sources=sources, base_mixing=mixing,
        noise_std=noise_std, n_subjects=n_subjects,
        subject_mixing_jitter=subject_mixing_jitter,
        trials_per_class_per_subject=trials_per_class_per_subject,
        n_classes=n_classes, seed=seed, baseline_samples=baseline,
        subject_sources=subject_sources)


def induced_class_config(n_channels: int = 32, n_latent: int = 40, n_times: int = 188,
                         fs_hz: float = 125.0, n_subjects: int = 7,
                         trials_per_class_per_subject: int = 60,
                         osc_freq_hz: float = 10.0, suppressed_gain: float = 0.25,
                         noise_std: float = 0.12, subject_mixing_jitter: float = 0.25,
                         seed: int = 0) -> GenConfig:
    """Desk-scale induced task (3 classes), modelled on motor-imagery ERD.

    Sources 0 and 1 oscillate at osc_freq_hz; class 1 suppresses source 0,
    class 2 suppresses source 1, class 0 (rest) leaves both at full power.
    The remaining sources are broadband background activity; there are more
    of them than channels, so no spatial filter can isolate an oscillatory
    source on its own and the temporal filters have to select the band.
    """
    n_classes = 3
    rng = substream(seed, 3)
    mixing = rng.normal(0.0, 1.0, size=(n_channels, n_latent))
    mixing /= np.linalg.norm(mixing, axis=0, keepdims=True)
    sources = []
    for idx in range(n_latent):
        if idx < 2:
            gains = [1.0, 1.0, 1.0]
            gains[idx + 1] = suppressed_gain
            sources.append(LatentSourceSpec(
                ar_coeffs=ar2_coeffs(osc_freq_hz, fs_hz, r=0.97),
                innovation_std=0.3, class_gain=tuple(gains),
                peak_freq_hz=osc_freq_hz))
        else:
            # white background: flat spectra keep the discriminative band
            # centred on the oscillatory resonance
            sources.append(LatentSourceSpec(
                ar_coeffs=(0.0,), innovation_std=0.3))
    baseline = int(round(0.3 * fs_hz))
    return GenConfig(
        n_channels=n_channels, n_latent=n_latent, n_times=n_times,
        sample_rate_hz=fs_hz, sources=sources, base_mixing=mixing,
        noise_std=noise_std, n_subjects=n_subjects,
        subject_mixing_jitter=subject_mixing_jitter,
        trials_per_class_per_subject=trials_per_class_per_subject,
        n_classes=n_classes, seed=seed, baseline_samples=baseline)
