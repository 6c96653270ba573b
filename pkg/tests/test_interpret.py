"""Tests for component attribution, activation patterns and filter spectra."""

import numpy as np
import pytest

from megdecode import interpret as itp
from megdecode.errors import ParameterError
from megdecode.model import ModelConfig, ModelParams
from megdecode.optim import init_params
from megdecode.synthgen import EpochSet
from megdecode.tensor import make_rng

from conftest import toy_epoch_set


def lf_cfg(**kw):
    d = dict(n_channels=4, n_times=16, n_classes=3, n_latent=3, filter_len=3,
             dropout_rate=0.0)
    d.update(kw)
    return ModelConfig("lf", **d)


def zero_params(cfg):
    return ModelParams(
        w_spatial=np.zeros((cfg.n_channels, cfg.n_latent)),
        temporal=np.zeros(cfg.temporal_shape()),
        b_temporal=np.zeros(cfg.n_latent),
        w_out=np.zeros((cfg.n_features, cfg.n_classes)),
        b_out=np.zeros(cfg.n_classes),
    )


# ------------------------------------------------------------ attribution

def test_top_evoked_finds_planted_cell():
    cfg = lf_cfg()
    p = zero_params(cfg)
    w = p.w_out[:, 1].reshape(cfg.n_latent, cfg.pooled_len)
    w[2, 4] = 3.0
    w[0, 1] = 1.0
    att = itp.top_component_evoked(cfg, p, 1, fs_hz=125.0)
    assert (att.component_idx, att.pooled_time_idx) == (2, 4)
    assert att.weight_value == 3.0
    # latency: (4*2 + 0.5 + 1)/125
    assert att.latency_seconds == pytest.approx((4 * 2 + 0.5 + 1.0) / 125.0)


def test_top_evoked_tie_breaks_lexicographic():
    cfg = lf_cfg()
    p = zero_params(cfg)
    w = p.w_out[:, 0].reshape(cfg.n_latent, cfg.pooled_len)
    w[1, 5] = 2.0
    w[2, 1] = 2.0
    att = itp.top_component_evoked(cfg, p, 0, fs_hz=125.0)
    assert (att.component_idx, att.pooled_time_idx) == (1, 5)


def test_top_evoked_no_positive_contribution():
    cfg = lf_cfg()
    p = zero_params(cfg)
    p.w_out[:, 2] = -1.0
    with pytest.raises(itp.NoPositiveContribution):
        itp.top_component_evoked(cfg, p, 2, fs_hz=125.0)


def test_top_induced_sign_split():
    cfg = lf_cfg()
    p = zero_params(cfg)
    w = p.w_out[:, 0].reshape(cfg.n_latent, cfg.pooled_len)
    w[0, :] = 0.5   # summed +0.5*pooled_len
    w[2, :] = -0.3  # summed -0.3*pooled_len
    pos, neg = itp.top_component_induced(cfg, p, 0)
    assert pos.component_idx == 0 and neg.component_idx == 2
    assert pos.weight_value == pytest.approx(0.5 * cfg.pooled_len)
    assert neg.weight_value == pytest.approx(-0.3 * cfg.pooled_len)
    assert pos.pooled_time_idx is None and pos.latency_seconds is None


def test_interpret_rejects_var_variant():
    cfg = ModelConfig("var", n_channels=4, n_times=16, n_classes=2,
                      n_latent=3, filter_len=3)
    p = init_params(cfg, make_rng(0))
    with pytest.raises(ParameterError):
        itp.top_component_evoked(cfg, p, 0, 125.0)


def test_pooled_index_to_latency_formula():
    cfg = lf_cfg(filter_len=7, n_times=32)
    # [DERIVED] sample = idx*stride + (pool-1)/2 + (l-1)/2
    assert itp.pooled_index_to_latency(cfg, 0, 100.0) == pytest.approx(3.5 / 100)
    assert itp.pooled_index_to_latency(cfg, 5, 100.0) == pytest.approx(13.5 / 100)


# ------------------------------------------------------------ patterns

def make_set(epochs):
    n = epochs.shape[0]
    return EpochSet(epochs=epochs, labels=np.zeros(n, dtype=np.uint16),
                    subjects=np.zeros(n, dtype=np.uint16),
                    sample_rate_hz=125.0, n_classes=2)


def test_activation_pattern_rank_one_recovers_mixing():
    # single source mixed into channels: pattern must align with the column
    rng = make_rng(3)
    col = np.array([0.2, -0.5, 0.8, 0.1])
    col /= np.linalg.norm(col)
    s = rng.normal(size=(40, 1, 64))
    epochs = col[None, :, None] * s + 1e-3 * rng.normal(size=(40, 4, 64))
    w = rng.normal(size=(4, 2))
    w[:, 0] = col  # filter roughly matched to the source
    pat = itp.activation_pattern(w, make_set(epochs), 0)
    cos = abs(pat.pattern @ col) / np.linalg.norm(pat.pattern)
    assert cos > 0.999


def test_activation_pattern_whitened_data_equals_filter():
    # Sigma_x = I  =>  pattern == filter (up to sampling noise)
    rng = make_rng(4)
    epochs = rng.normal(size=(200, 4, 100))
    w = rng.normal(size=(4, 3))
    pat = itp.activation_pattern(w, make_set(epochs), 1)
    np.testing.assert_allclose(pat.pattern, w[:, 1], atol=0.05)


def test_activation_pattern_homogeneity():
    # pattern is linear in the filter: scaling w scales the pattern
    rng = make_rng(5)
    epochs = rng.normal(size=(30, 4, 50))
    w = rng.normal(size=(4, 2))
    a = itp.activation_pattern(w, make_set(epochs), 0).pattern
    b = itp.activation_pattern(3.0 * w, make_set(epochs), 0).pattern
    np.testing.assert_allclose(b, 3.0 * a, rtol=1e-10)


def test_activation_pattern_precision_flag():
    rng = make_rng(6)
    epochs = rng.normal(size=(50, 4, 80))
    w = rng.normal(size=(4, 2))
    data = make_set(epochs)
    plain = itp.activation_pattern(w, data, 0)
    prec = itp.activation_pattern(w, data, 0, use_precision=True)
    assert not plain.used_precision and prec.used_precision
    assert not np.allclose(plain.pattern, prec.pattern)


def test_activation_pattern_precision_orthonormal_identity():
    # with whitened data and orthonormal filters the precision correction
    # is (asymptotically) the identity
    rng = make_rng(7)
    epochs = rng.normal(size=(300, 4, 120))
    w, _ = np.linalg.qr(rng.normal(size=(4, 3)))
    data = make_set(epochs)
    plain = itp.activation_pattern(w, data, 2).pattern
    prec = itp.activation_pattern(w, data, 2, use_precision=True).pattern
    np.testing.assert_allclose(plain, prec, atol=0.05)


def test_activation_pattern_empty_set_rejected():
    data = make_set(np.zeros((0, 4, 16)))
    with pytest.raises(ParameterError):
        itp.activation_pattern(np.zeros((4, 2)), data, 0)


# ------------------------------------------------------------ spectra

def test_filter_spectrum_delta_is_flat():
    sp = itp.filter_spectrum(np.array([1.0, 0.0, 0.0]), 125.0)
    assert np.all(np.abs(sp.power - 1.0) < 1e-12)
    assert sp.peak_freq_hz == 0.0  # argmax of a flat spectrum -> first bin


def test_filter_spectrum_two_tap_closed_form():
    # [DERIVED] taps [1, 1]: |H(f)|^2 = 4 cos^2(pi f / fs)
    fs = 100.0
    sp = itp.filter_spectrum(np.array([1.0, 1.0]), fs)
    expect = 4 * np.cos(np.pi * sp.freqs_hz / fs) ** 2
    np.testing.assert_allclose(sp.power, expect, atol=1e-12)
    assert sp.peak_freq_hz == 0.0


def test_filter_spectrum_alternating_peaks_at_nyquist():
    # taps [1, -1]: highpass, peak at fs/2
    sp = itp.filter_spectrum(np.array([1.0, -1.0]), 250.0)
    assert sp.peak_freq_hz == 125.0


def test_filter_spectrum_sampled_sinusoid_peak():
    # taps sampled from a 20 Hz cosine peak near 20 Hz
    fs = 125.0
    t = np.arange(25) / fs
    sp = itp.filter_spectrum(np.cos(2 * np.pi * 20.0 * t), fs)
    assert abs(sp.peak_freq_hz - 20.0) < 1.5


def test_filter_spectrum_grid_and_validation():
    sp = itp.filter_spectrum(np.ones(5), 200.0, n_freqs=64)
    assert sp.freqs_hz.shape == (64,)
    assert sp.freqs_hz[0] == 0.0 and sp.freqs_hz[-1] == 100.0
    with pytest.raises(ParameterError):
        itp.filter_spectrum(np.array([]), 125.0)


# ------------------------------------------------------------ ranking

def test_least_informative_orders_by_weight_mass():
    cfg = lf_cfg()
    p = zero_params(cfg)
    w = p.w_out.reshape(cfg.n_latent, cfg.pooled_len, cfg.n_classes)
    w[0] = 0.5
    w[1] = 0.01
    w[2] = -2.0  # absolute mass counts
    assert itp.least_informative_components(cfg, p, 2) == [1, 0]
    assert itp.least_informative_components(cfg, p, 3) == [1, 0, 2]


def test_least_informative_rejects_overlong_request():
    cfg = lf_cfg()
    with pytest.raises(ParameterError):
        itp.least_informative_components(cfg, zero_params(cfg), 99)


def test_least_informative_stable_ties():
    cfg = lf_cfg()
    p = zero_params(cfg)  # all-equal totals: stable sort keeps index order
    assert itp.least_informative_components(cfg, p, 3) == [0, 1, 2]


# ------------------------------------------------------------ full report

def test_interpret_model_report_and_csv(tmp_path):
    data = toy_epoch_set(make_rng(8), n_trials=30)
    cfg = lf_cfg()
    p = init_params(cfg, make_rng(0))
    p.w_out[:] = np.abs(p.w_out)  # guarantee positive contributions
    rep = itp.interpret_model(cfg, p, data, mode="evoked")
    assert len(rep.attributions) == cfg.n_classes
    assert len(rep.patterns) == cfg.n_classes
    assert all(pat.pattern.shape == (cfg.n_channels,) for pat in rep.patterns)
    assert len(rep.least_informative) == min(5, cfg.n_latent)
    rep.write_csv(tmp_path)
    assert (tmp_path / "patterns.csv").exists()
    assert (tmp_path / "spectra.csv").exists()
    text = (tmp_path / "summary.txt").read_text()
    assert "class 0" in text and "least informative" in text
    import csv as _csv
    with open(tmp_path / "patterns.csv") as fh:
        rows = list(_csv.reader(fh))
    assert len(rows) == 1 + cfg.n_classes
    assert len(rows[1]) == 2 + cfg.n_channels


def test_interpret_model_unknown_mode():
    data = toy_epoch_set(make_rng(9), n_trials=10)
    cfg = lf_cfg()
    p = init_params(cfg, make_rng(0))
    with pytest.raises(ParameterError):
        itp.interpret_model(cfg, p, data, mode="bogus")
