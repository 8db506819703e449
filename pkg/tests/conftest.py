import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from gantsc.data import Dataset, make_synthetic_benchmark, split
from gantsc.forest import fit_classifier_forest
from gantsc.gan import GANConfig, train_acgan
from gantsc.nn import init_mlp, train_classifier

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def bench():
    """Small 4-d benchmark: (train, validation, test)."""
    d = make_synthetic_benchmark(3000, 4, 2, 2.0, seed=0)
    return tuple(split(d, [0.4, 0.2, 0.4], seed=0))


@pytest.fixture(scope="session")
def small_forest(bench):
    return fit_classifier_forest(bench[0], 15, seed=0)


@pytest.fixture(scope="session")
def small_gan(bench):
    return train_acgan(bench[0], GANConfig(epochs=6, checkpoint_stride=3, noise_dim=8, hidden=[16]), seed=0)


@pytest.fixture(scope="session")
def small_mlp_teacher(bench):
    tr = bench[0]
    model, _ = train_classifier(init_mlp([tr.d, 16, tr.n_classes], 0), tr, 10, 64, seed=0)
    return model


def blobs(n=200, seed=0, d=2, gap=6.0) -> Dataset:
    """Two well separated Gaussian blobs."""
    rng = np.random.default_rng(seed)
    y = np.arange(n) % 2
    X = rng.standard_normal((n, d)) + gap * y[:, None]
    return Dataset(X, y, 2)


ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
