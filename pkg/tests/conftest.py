import numpy as np
import pytest

from megdecode.synthgen import EpochSet
from megdecode.tensor import make_rng


@pytest.fixture
def rng():
    return make_rng(12345)


# one pass/fail line per acceptance criterion, shown in the terminal summary
# even when output capture is on (test_acceptance.py appends to this)
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def toy_epoch_set(rng, n_trials=30, n_channels=4, n_times=16, n_classes=3,
                  n_subjects=3, separation=0.0):
    """Random epochs; with separation > 0, class c gets a mean offset on
    channel c so the classes are linearly separable."""
    epochs = rng.normal(size=(n_trials, n_channels, n_times))
    labels = np.arange(n_trials) % n_classes
    subjects = (np.arange(n_trials) // n_classes) % n_subjects
    if separation:
        for i in range(n_trials):
            epochs[i, labels[i] % n_channels, :] += separation
    return EpochSet(epochs, labels, subjects, 125.0, n_classes)
