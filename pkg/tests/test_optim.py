"""Tests for initialization, Adam, the trainer and early stopping."""

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from megdecode.errors import ParameterError, TrainingError
from megdecode.model import (ModelConfig, ModelParams, cross_entropy, forward,
                             l1_penalty)
from megdecode.optim import (AdamState, TrainConfig, Trainer, adam_step,
                             evaluate, init_params)
from megdecode.synthgen import EpochSet
from megdecode.tensor import make_rng

from conftest import toy_epoch_set


def small_cfg(variant="lf"):
    return ModelConfig(variant, n_channels=4, n_times=16, n_classes=3,
                       n_latent=3, filter_len=3, dropout_rate=0.0)


# ---------------------------------------------------------------- init

def test_init_biases_are_point_one(rng):
    # published initialization choice: all biases start at 0.1
    p = init_params(small_cfg(), rng)
    assert np.all(p.b_temporal == 0.1)
    assert np.all(p.b_out == 0.1)


def test_init_he_uniform_bounds(rng):
    # [DERIVED] He-uniform: |w| <= sqrt(6/fan_in), sd ~= bound/sqrt(3)
    cfg = ModelConfig("lf", n_channels=64, n_times=32, n_classes=2,
                      n_latent=64, filter_len=7)
    p = init_params(cfg, rng)
    bound = np.sqrt(6.0 / 64)
    assert np.abs(p.w_spatial).max() <= bound
    assert abs(p.w_spatial.std() - bound / np.sqrt(3)) < 0.03 * bound
    bound_t = np.sqrt(6.0 / 7)
    assert np.abs(p.temporal).max() <= bound_t
    assert abs(p.temporal.std() - bound_t / np.sqrt(3)) < 0.05 * bound_t


def test_init_var_temporal_fan_in(rng):
    # VAR temporal fan-in is l*k, not l
    cfg = ModelConfig("var", n_channels=32, n_times=32, n_classes=2,
                      n_latent=20, filter_len=7)
    p = init_params(cfg, rng)
    assert np.abs(p.temporal).max() <= np.sqrt(6.0 / (7 * 20))


def test_init_deterministic():
    a = init_params(small_cfg(), make_rng(7))
    b = init_params(small_cfg(), make_rng(7))
    for f in ModelParams.FIELDS:
        assert np.array_equal(getattr(a, f), getattr(b, f))


# ---------------------------------------------------------------- adam

def test_adam_first_step_hand_check(rng):
    # [DERIVED] at t=1 the bias-corrected update is lr * g/(|g| + eps),
    # i.e. a signed step of size ~lr regardless of gradient magnitude.
    cfg = small_cfg()
    p = init_params(cfg, rng)
    before = p.copy()
    grads = {f: rng.normal(size=getattr(p, f).shape) for f in ModelParams.FIELDS}
    tcfg = TrainConfig(learning_rate=1e-2)
    adam_step(p, grads, AdamState(p), tcfg)
    for f in ModelParams.FIELDS:
        g = grads[f]
        expect = getattr(before, f) - 1e-2 * g / (np.abs(g) + 1e-8)
        np.testing.assert_allclose(getattr(p, f), expect, atol=1e-9)


def test_adam_zero_gradient_keeps_params(rng):
    p = init_params(small_cfg(), rng)
    before = p.copy()
    grads = {f: np.zeros_like(getattr(p, f)) for f in ModelParams.FIELDS}
    adam_step(p, grads, AdamState(p), TrainConfig())
    for f in ModelParams.FIELDS:
        np.testing.assert_array_equal(getattr(p, f), getattr(before, f))


def test_adam_rejects_nonfinite_gradient(rng):
    p = init_params(small_cfg(), rng)
    grads = {f: np.zeros_like(getattr(p, f)) for f in ModelParams.FIELDS}
    grads["w_out"][0, 0] = np.nan
    with pytest.raises(TrainingError, match="w_out"):
        adam_step(p, grads, AdamState(p), TrainConfig())


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2 ** 31 - 1))
def test_adam_converges_on_quadratic(seed):
    # minimize ||w_out - target||^2 by feeding its gradient; other grads zero
    rng = make_rng(seed)
    cfg = small_cfg()
    p = init_params(cfg, rng)
    target = rng.normal(size=p.w_out.shape)
    state = AdamState(p)
    tcfg = TrainConfig(learning_rate=5e-2)
    zeros = {f: np.zeros_like(getattr(p, f)) for f in ModelParams.FIELDS}
    for _ in range(500):
        g = dict(zeros)
        g["w_out"] = 2 * (p.w_out - target)
        adam_step(p, g, state, tcfg)
    assert np.abs(p.w_out - target).max() < 0.05


def test_train_config_validation():
    with pytest.raises(ParameterError):
        TrainConfig(learning_rate=-1.0)
    with pytest.raises(ParameterError):
        TrainConfig(batch_size=0)
    with pytest.raises(ParameterError):
        TrainConfig(beta1=1.0)


# ---------------------------------------------------------------- trainer

def test_trainer_deterministic(rng):
    data = toy_epoch_set(make_rng(3), n_trials=60)
    cfg = small_cfg()
    tcfg = TrainConfig(learning_rate=1e-3, batch_size=20, eval_every=10,
                       max_iterations=30, seed=11)
    runs = []
    for _ in range(2):
        tr = Trainer(cfg, tcfg)
        tr.train(data, data)
        runs.append(tr.params.copy())
    for f in ModelParams.FIELDS:
        assert np.array_equal(getattr(runs[0], f), getattr(runs[1], f))


def test_trainer_learns_separable_toy():
    data = toy_epoch_set(make_rng(5), n_trials=120, separation=3.0)
    cfg = small_cfg()
    tcfg = TrainConfig(learning_rate=3e-3, batch_size=30, eval_every=50,
                       max_iterations=600, seed=0, stop_delta=0.0)
    tr = Trainer(cfg, tcfg)
    rep = tr.train(data, data)
    assert rep.final_train_accuracy > 0.9


def test_early_stop_rolls_back_to_checkpoint():
    # lr so large the val CE blows up after the first checkpoint: the
    # returned params must equal the snapshot *before* the bad interval.
    data = toy_epoch_set(make_rng(2), n_trials=60, separation=2.0)
    cfg = small_cfg()
    tcfg = TrainConfig(learning_rate=5.0, batch_size=20, eval_every=5,
                       max_iterations=100, seed=1)
    tr = Trainer(cfg, tcfg)
    rep = tr.train(data, data)
    assert rep.stop_reason == "early_stop"
    assert rep.iterations_run < 100
    # rolled-back params must score the checkpointed (pre-divergence) CE
    ce, _ = evaluate(cfg, tr.params, data)
    assert np.isfinite(ce)


def test_stop_delta_infinity_stops_at_first_checkpoint():
    data = toy_epoch_set(make_rng(2), n_trials=60)
    cfg = small_cfg()
    tcfg = TrainConfig(learning_rate=1e-3, batch_size=20, eval_every=7,
                       max_iterations=100, seed=1, stop_delta=np.inf)
    tr = Trainer(cfg, tcfg)
    init = tr.params.copy()
    rep = tr.train(data, data)
    assert rep.stop_reason == "early_stop"
    assert rep.iterations_run == 7
    # rollback target is the initial parameters
    for f in ModelParams.FIELDS:
        np.testing.assert_array_equal(getattr(tr.params, f), getattr(init, f))


def test_max_iter_reason_when_always_improving():
    data = toy_epoch_set(make_rng(4), n_trials=90, separation=2.5)
    cfg = small_cfg()
    tcfg = TrainConfig(learning_rate=1e-3, batch_size=30, eval_every=1000,
                       max_iterations=40, seed=0)
    rep = Trainer(cfg, tcfg).train(data, data)
    assert rep.stop_reason == "max_iter"
    assert rep.iterations_run == 40


def test_train_rejects_empty_sets():
    data = toy_epoch_set(make_rng(1), n_trials=30)
    empty = data.select(np.zeros(len(data), dtype=bool))
    tr = Trainer(small_cfg(), TrainConfig())
    with pytest.raises(ParameterError):
        tr.train(empty, data)
    with pytest.raises(ParameterError):
        tr.train(data, empty)


def test_history_rows_match_eval_every():
    data = toy_epoch_set(make_rng(6), n_trials=60)
    tcfg = TrainConfig(learning_rate=1e-4, batch_size=20, eval_every=10,
                       max_iterations=50, seed=0, stop_delta=0.0)
    rep = Trainer(small_cfg(), tcfg).train(data, data)
    iters = [row[0] for row in rep.history]
    assert iters == list(range(10, rep.iterations_run + 1, 10))
    for _, cost, ce, acc in rep.history:
        assert cost >= ce  # l1 penalty is nonnegative
        assert 0.0 <= acc <= 1.0


# ---------------------------------------------------------------- online

def test_online_update_descends_on_repeated_trial():
    rng = make_rng(9)
    cfg = small_cfg()
    tcfg = TrainConfig(learning_rate=1e-2, seed=0)
    tr = Trainer(cfg, tcfg)
    x = rng.normal(size=(cfg.n_channels, cfg.n_times))
    before = forward(cfg, tr.params, x[None]).probabilities[0, 1]
    for _ in range(20):
        tr.online_update(x, 1)
    after = forward(cfg, tr.params, x[None]).probabilities[0, 1]
    assert after > before


def test_online_update_zero_lr_is_noop():
    rng = make_rng(10)
    cfg = small_cfg()
    tr = Trainer(cfg, TrainConfig(learning_rate=0.0, seed=0))
    before = tr.params.copy()
    x = rng.normal(size=(cfg.n_channels, cfg.n_times))
    tr.online_update(x, 2)
    for f in ModelParams.FIELDS:
        np.testing.assert_array_equal(getattr(tr.params, f), getattr(before, f))


def test_evaluate_chunking_invariant():
    data = toy_epoch_set(make_rng(8), n_trials=37)
    cfg = small_cfg()
    p = init_params(cfg, make_rng(0))
    a = evaluate(cfg, p, data, chunk=5)
    b = evaluate(cfg, p, data, chunk=512)
    assert a == pytest.approx(b, abs=1e-12)
