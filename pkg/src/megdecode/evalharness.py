"""Across-subject evaluation: LOSO folds, pseudo-real-time sessions and a
linear SVM baseline trained by seeded stochastic subgradient descent."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .dataio import SplitSpec, split
from .errors import ParameterError
from .model import ModelConfig, predict
from .optim import TrainConfig, Trainer, evaluate
from .synthgen import EpochSet
from .tensor import Array, make_rng

UPDATE_ALL = "all"
UPDATE_CORRECT_ONLY = "correct-only"


@dataclass
class FoldResult:
    subject: int
    validation_accuracy: float
    initial_test_accuracy: float
    pseudo_realtime_accuracy: float = float("nan")
    confusion: np.ndarray | None = None
    failed: bool = False
    error: str = ""


@dataclass
class EvalReport:
    folds: list[FoldResult] = field(default_factory=list)
    presentation_seed: int = 0

    def _column(self, attr: str) -> np.ndarray:
        return np.array([getattr(f, attr) for f in self.folds if not f.failed])

    def mean_sd(self, attr: str) -> tuple[float, float]:
        col = self._column(attr)
        col = col[np.isfinite(col)]
        if col.size == 0:
            return float("nan"), float("nan")
        sd = float(col.std(ddof=1)) if col.size > 1 else 0.0
        return float(col.mean()), sd

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["subject", "validation", "initial_test", "pseudo_realtime", "failed"])
            for f in self.folds:
                w.writerow([f.subject, f.validation_accuracy, f.initial_test_accuracy,
                            f.pseudo_realtime_accuracy, int(f.failed)])

    def format_table(self, model_name: str = "model") -> str:
        """Aligned text table: Model | Validation | Initial test | Pseudo-real-time."""
        lines = [f"{'Model':<12} {'Validation (%)':>15} {'Initial test (%)':>17} "
                 f"{'Pseudo-real-time (%)':>21}"]
        for f in self.folds:
            rt = "n.a." if not np.isfinite(f.pseudo_realtime_accuracy) \
                else f"{100 * f.pseudo_realtime_accuracy:.1f}"
            lines.append(f"{model_name + ' s' + str(f.subject):<12} "
                         f"{100 * f.validation_accuracy:>15.1f} "
                         f"{100 * f.initial_test_accuracy:>17.1f} {rt:>21}")
        vm, vs = self.mean_sd("validation_accuracy")
        im, isd = self.mean_sd("initial_test_accuracy")
        rm, rs = self.mean_sd("pseudo_realtime_accuracy")
        rt = "n.a." if not np.isfinite(rm) else f"{100 * rm:.1f} +- {100 * rs:.1f}"
        lines.append(f"{model_name:<12} {100 * vm:>8.1f} +- {100 * vs:.1f} "
                     f"{100 * im:>9.1f} +- {100 * isd:.1f} {rt:>21}")
        return "\n".join(lines)


def confusion_matrix(true: np.ndarray, pred: np.ndarray, n_classes: int) -> np.ndarray:
    m = np.zeros((n_classes, n_classes), dtype=np.int64)
    np.add.at(m, (true, pred), 1)
    return m


def accuracy(cfg: ModelConfig, trainer: Trainer, data: EpochSet) -> float:
    _, acc = evaluate(cfg, trainer.params, data)
    return acc


def loso_evaluate(dataset: EpochSet, cfg: ModelConfig, tcfg: TrainConfig,
                  validation_fraction: float = 0.1,
                  with_realtime: bool = False,
                  realtime_tcfg: TrainConfig | None = None,
                  realtime_batch: int = 20,
                  presentation_seed: int = 1234) -> EvalReport:
    """Train and score one model per held-out subject.

    A failing fold is recorded (failed=True) rather than aborting the sweep.
    """
    subject_ids = np.unique(dataset.subjects)
    if subject_ids.size < 2:
        raise ParameterError("leave-one-subject-out needs at least 2 subjects")
    report = EvalReport(presentation_seed=presentation_seed)
    for subject in subject_ids:
        try:
            rng = make_rng(tcfg.seed + 7919 * int(subject))
            train_set, val_set, test_set = split(
                dataset, SplitSpec(int(subject), validation_fraction), rng)
            trainer = Trainer(cfg, tcfg)
            trainer.train(train_set, val_set)
            _, val_acc = evaluate(cfg, trainer.params, val_set)
            _, test_acc = evaluate(cfg, trainer.params, test_set)
            pred = predict(cfg, trainer.params, test_set.epochs)
            fold = FoldResult(
                subject=int(subject), validation_accuracy=val_acc,
                initial_test_accuracy=test_acc,
                confusion=confusion_matrix(test_set.labels, pred, dataset.n_classes))
            if with_realtime:
                rt_trainer = Trainer(cfg, realtime_tcfg or tcfg,
                                     params=trainer.params.copy())
                trace = pseudo_realtime(rt_trainer, test_set, batch=realtime_batch,
                                        presentation_seed=presentation_seed)
                fold.pseudo_realtime_accuracy = trace.overall_accuracy
            report.folds.append(fold)
        except Exception as exc:  # noqa: BLE001 - fold isolation is the contract
            report.folds.append(FoldResult(subject=int(subject),
                                           validation_accuracy=float("nan"),
                                           initial_test_accuracy=float("nan"),
                                           failed=True, error=str(exc)))
    return report


@dataclass
class RealtimeTrace:
    batch_accuracies: list[float]
    overall_accuracy: float
    presentation_seed: int

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["batch", "accuracy"])
            for i, a in enumerate(self.batch_accuracies):
                w.writerow([i, a])
            w.writerow(["overall", self.overall_accuracy])


def pseudo_realtime(trainer: Trainer, test_set: EpochSet, batch: int = 20,
                    policy: str = UPDATE_ALL,
                    presentation_seed: int = 1234) -> RealtimeTrace:
    """Sequential evaluation in batches with incremental updates.

    Every trial in a batch is predicted (and its accuracy recorded) before
    any update from that batch is applied, so predictions never see label
    information from their own batch. The trial order is a seeded shuffle.
    """
    if policy not in (UPDATE_ALL, UPDATE_CORRECT_ONLY):
        raise ParameterError(f"unknown update policy {policy!r}")
    order = make_rng(presentation_seed).permutation(len(test_set))
    accs = []
    n_correct = 0
    for lo in range(0, len(order), batch):
        idx = order[lo:lo + batch]
        epochs = test_set.epochs[idx]
        labels = test_set.labels[idx]
        pred = predict(trainer.cfg, trainer.params, epochs)
        correct = pred == labels
        accs.append(float(correct.mean()))
        n_correct += int(correct.sum())
        for i in range(len(idx)):
            if policy == UPDATE_CORRECT_ONLY and not correct[i]:
                continue
            trainer.online_update(epochs[i], int(labels[i]))
    return RealtimeTrace(accs, n_correct / len(order), presentation_seed)


# --- linear SVM baseline ---

DEFAULT_C_GRID = tuple(np.logspace(3, 5, 5))


@dataclass
class LinearSvmParams:
    """One-vs-rest linear SVM over flattened (channels x time) features."""
    weights: Array  # (n_classes, n_features)
    biases: Array   # (n_classes,)
    c_value: float
    feature_scale: float = 1.0


def _flatten(epochs: Array) -> Array:
    return np.asarray(epochs).reshape(epochs.shape[0], -1)


def _svm_fit_one_c(x: Array, y: np.ndarray, n_classes: int, c: float,
                   rng: np.random.Generator, epochs: int = 5) -> tuple[Array, Array]:
    """One-vs-rest hinge loss by SGD with l2 penalty 1/C (averaged iterate)."""
    n, d = x.shape
    lam = 1.0 / c
    w = np.zeros((n_classes, d))
    b = np.zeros(n_classes)
    w_sum = np.zeros_like(w)
    b_sum = np.zeros_like(b)
    t = 0
    total = epochs * n
    for _ in range(epochs):
        for i in rng.permutation(n):
            t += 1
            eta = 1.0 / (lam * (t + n))
            xi = x[i]
            targets = np.where(np.arange(n_classes) == y[i], 1.0, -1.0)
            margins = targets * (w @ xi + b)
            active = margins < 1.0
            w *= (1.0 - eta * lam)
            if np.any(active):
                step = (eta / 1.0) * targets * active
                w += step[:, None] * xi[None, :]
                b += step
            w_sum += w
            b_sum += b
    return w_sum / total, b_sum / total


def svm_train(train_set: EpochSet, val_set: EpochSet,
              c_grid=DEFAULT_C_GRID, seed: int = 0,
              sgd_epochs: int = 5) -> LinearSvmParams:
    """Grid-search C by validation accuracy; features standardized by a single
    global scale so the hinge margins are well conditioned."""
    y = train_set.labels
    if np.unique(y).size < 2:
        raise ParameterError("SVM training needs at least 2 classes")
    x = _flatten(train_set.epochs)
    scale = float(x.std()) or 1.0
    x = x / scale
    xv = _flatten(val_set.epochs) / scale
    n_classes = train_set.n_classes
    best = None
    for c in c_grid:
        rng = make_rng(seed)
        w, b = _svm_fit_one_c(x, y, n_classes, float(c), rng, epochs=sgd_epochs)
        acc = float((np.argmax(xv @ w.T + b, axis=1) == val_set.labels).mean())
        if best is None or acc > best[0]:
            best = (acc, c, w, b)
    _, c, w, b = best
    return LinearSvmParams(weights=w, biases=b, c_value=float(c), feature_scale=scale)


def svm_predict(params: LinearSvmParams, epochs: Array) -> np.ndarray:
    """Argmax of one-vs-rest margins; ties resolve to the lowest class index."""
    x = _flatten(np.asarray(epochs)) / params.feature_scale
    return np.argmax(x @ params.weights.T + params.biases, axis=1)


def svm_online_update(params: LinearSvmParams, epoch: Array, label: int,
                      eta: float = 1e-4) -> None:
    """One hinge subgradient step on a single trial (incremental mode)."""
    xi = np.asarray(epoch).ravel() / params.feature_scale
    n_classes = params.weights.shape[0]
    targets = np.where(np.arange(n_classes) == label, 1.0, -1.0)
    margins = targets * (params.weights @ xi + params.biases)
    active = margins < 1.0
    lam = 1.0 / params.c_value
    params.weights *= (1.0 - eta * lam)
    if np.any(active):
        step = eta * targets * active
        params.weights += step[:, None] * xi[None, :]
        params.biases += step
