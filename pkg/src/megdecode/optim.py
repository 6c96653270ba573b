"""Adam optimizer, initialization, the mini-batch trainer and online updates.

Defaults follow the tuned hyperparameters: batch size 100, learning rate
3e-4, validation checkpoints every 1000 iterations with immediate early
stopping when the validation cross-entropy rises or improves by less than
1e-5, at most 20000 iterations.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError, TrainingError
from .model import (ForwardCache, ModelConfig, ModelParams, backward,
                    cross_entropy, forward, l1_penalty)
from .synthgen import EpochSet
from .tensor import Array, make_rng


@dataclass
class TrainConfig:
    learning_rate: float = 3e-4
    batch_size: int = 100
    beta1: float = 0.9
    beta2: float = 0.999
    adam_eps: float = 1e-8
    eval_every: int = 1000
    stop_delta: float = 1e-5
    max_iterations: int = 20000
    seed: int = 0

    def __post_init__(self):
        if self.learning_rate < 0 or self.batch_size < 1 or self.eval_every < 1:
            raise ParameterError("learning_rate, batch_size, eval_every must be positive")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise ParameterError("beta1 and beta2 must be in (0, 1)")


class AdamState:
    """First/second moment estimates per parameter tensor plus step count."""

    def __init__(self, params: ModelParams):
        self.m = {k: np.zeros_like(v) for k, v in params.as_dict().items()}
        self.v = {k: np.zeros_like(v) for k, v in params.as_dict().items()}
        self.step = 0


@dataclass
class TrainReport:
    iterations_run: int = 0
    history: list[tuple[int, float, float, float]] = field(default_factory=list)
    # rows: (iteration, val_cost = ce + l1, val_ce, val_accuracy)
    final_train_accuracy: float = float("nan")
    final_val_accuracy: float = float("nan")
    stop_reason: str = ""

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "val_cost", "val_ce", "val_acc"])
            for row in self.history:
                w.writerow(row)


def init_params(cfg: ModelConfig, rng: np.random.Generator) -> ModelParams:
    """He-uniform weights (bound sqrt(6/fan_in)), biases at 0.1."""
    def he(shape, fan_in):
        bound = np.sqrt(6.0 / fan_in)
        return rng.uniform(-bound, bound, size=shape)

    fan_temporal = cfg.filter_len if cfg.variant == "lf" else cfg.filter_len * cfg.n_latent
    return ModelParams(
        w_spatial=he((cfg.n_channels, cfg.n_latent), cfg.n_channels),
        temporal=he(cfg.temporal_shape(), fan_temporal),
        b_temporal=np.full(cfg.n_latent, 0.1),
        w_out=he((cfg.n_features, cfg.n_classes), cfg.n_features),
        b_out=np.full(cfg.n_classes, 0.1),
    )


def adam_step(params: ModelParams, grads: dict[str, Array], state: AdamState,
              tcfg: TrainConfig) -> None:
    """In-place bias-corrected Adam update."""
    state.step += 1
    t = state.step
    for name in ModelParams.FIELDS:
        g = grads[name]
        if not np.all(np.isfinite(g)):
            raise TrainingError(f"non-finite gradient in tensor {name!r} at step {t}")
        state.m[name] = tcfg.beta1 * state.m[name] + (1 - tcfg.beta1) * g
        state.v[name] = tcfg.beta2 * state.v[name] + (1 - tcfg.beta2) * g * g
        m_hat = state.m[name] / (1 - tcfg.beta1 ** t)
        v_hat = state.v[name] / (1 - tcfg.beta2 ** t)
        getattr(params, name)[...] -= tcfg.learning_rate * m_hat / (np.sqrt(v_hat) + tcfg.adam_eps)


def evaluate(cfg: ModelConfig, params: ModelParams, data: EpochSet,
             chunk: int = 512) -> tuple[float, float]:
    """(mean cross-entropy, accuracy) over a set, dropout off."""
    total_ce = 0.0
    correct = 0
    n = len(data)
    for lo in range(0, n, chunk):
        sl = slice(lo, min(lo + chunk, n))
        cache = forward(cfg, params, data.epochs[sl])
        labels = data.labels[sl]
        total_ce += cross_entropy(cache.probabilities, labels) * (sl.stop - sl.start)
        correct += int((cache.probabilities.argmax(axis=1) == labels).sum())
    return total_ce / n, correct / n


class Trainer:
    """Owns the parameters, Adam state and dropout stream for one model."""

    def __init__(self, cfg: ModelConfig, tcfg: TrainConfig,
                 params: ModelParams | None = None):
        self.cfg = cfg
        self.tcfg = tcfg
        self.rng = make_rng(tcfg.seed)
        self.params = params if params is not None else init_params(cfg, self.rng)
        self.state = AdamState(self.params)

    def _dropout_mask(self, n: int) -> Array | None:
        if self.cfg.dropout_rate == 0:
            return None
        return (self.rng.random((n, self.cfg.n_features))
                >= self.cfg.dropout_rate).astype(np.float64)

    def step_batch(self, batch: Array, labels: np.ndarray) -> float:
        """One forward/backward/Adam step; returns the batch loss."""
        mask = self._dropout_mask(len(labels))
        cache = forward(self.cfg, self.params, batch, dropout_mask=mask)
        grads = backward(self.cfg, self.params, cache, batch, labels)
        adam_step(self.params, grads, self.state, self.tcfg)
        return cross_entropy(cache.probabilities, labels) + l1_penalty(self.cfg, self.params)

    def online_update(self, epoch: Array, label: int) -> None:
        """Single-trial update used in (pseudo-)real-time mode."""
        self.step_batch(np.asarray(epoch)[None], np.asarray([label]))

    def train(self, train_set: EpochSet, val_set: EpochSet) -> TrainReport:
        """Mini-batch training with checkpointed early stopping.

        Stops as soon as the validation cross-entropy rises or improves by
        less than stop_delta relative to the previous checkpoint, and rolls
        the parameters back to that previous checkpoint.
        """
        if len(train_set) == 0 or len(val_set) == 0:
            raise ParameterError("train and validation sets must be nonempty")
        report = TrainReport()
        ce_prev, _ = evaluate(self.cfg, self.params, val_set)
        snapshot = self.params.copy()
        n = len(train_set)
        order = np.array([], dtype=np.int64)
        pos = n  # force reshuffle on first batch
        it = 0
        while it < self.tcfg.max_iterations:
            if pos >= n:
                order = self.rng.permutation(n)
                pos = 0
            idx = order[pos:pos + self.tcfg.batch_size]
            pos += self.tcfg.batch_size
            self.step_batch(train_set.epochs[idx], train_set.labels[idx])
            it += 1
            if it % self.tcfg.eval_every == 0:
                ce, acc = evaluate(self.cfg, self.params, val_set)
                cost = ce + l1_penalty(self.cfg, self.params)
                report.history.append((it, cost, ce, acc))
                if ce > ce_prev or (ce_prev - ce) < self.tcfg.stop_delta:
                    self.params = snapshot
                    report.stop_reason = "early_stop"
                    break
                snapshot = self.params.copy()
                ce_prev = ce
        else:
            report.stop_reason = "max_iter"
        report.iterations_run = it
        _, report.final_val_accuracy = evaluate(self.cfg, self.params, val_set)
        _, report.final_train_accuracy = evaluate(self.cfg, self.params, train_set)
        return report
