"""Benchmark experiments shared by the scripts and the acceptance suite.

All runs use the Gaussian-mixture benchmark split 2000 / 2000 / 10000
(train / validation / test) and derive every random stream from ``seed``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .compress import (ObjectiveConfig, SourceConfig, assemble_pooled, compress_forest, compress_nn, evaluate,
                       supervised_control)
from .data import Dataset, make_synthetic_benchmark, split
from .forest import fit_classifier_forest, fit_regression_forest
from .gan import GANConfig, degrade_acgan, generate, train_acgan
from .nn import OptimizerConfig, init_mlp, train_classifier
from .score import StudentTemplate, confidence_score, tsc_scores


@dataclass
class BenchmarkSetup:
    n_train: int = 2000
    n_validation: int = 2000
    n_test: int = 10000
    d: int = 10
    n_classes: int = 2
    separation: float = 2.0


def benchmark_splits(seed: int, setup: BenchmarkSetup | None = None) -> tuple[Dataset, Dataset, Dataset]:
    s = setup or BenchmarkSetup()
    n = s.n_train + s.n_validation + s.n_test
    full = make_synthetic_benchmark(n, s.d, s.n_classes, s.separation, seed)
    tr, va, te = split(full, [s.n_train / n, s.n_validation / n, s.n_test / n], seed)
    return tr, va, te


def mean_se(values) -> tuple[float, float]:
    v = np.asarray(values, dtype=np.float64)
    return float(v.mean()), float(v.std(ddof=1) / math.sqrt(len(v))) if len(v) > 1 else 0.0


def pooled_se(a, b) -> float:
    """Standard error of the difference of two independent means."""
    return math.hypot(mean_se(a)[1], mean_se(b)[1])


# -- forest compression -------------------------------------------------------

@dataclass
class ForestRun:
    student_only: float
    real_tsc: float
    gan_tsc: float
    supervised: float
    teacher: float
    real_tsc_auc: float
    student_only_auc: float


def forest_compression(seed: int, teacher_trees: int = 500, student_trees: int = 1, ratio: float = 9.0,
                       gan_config: GANConfig | None = None) -> ForestRun:
    """Student-only, real-only TSC, pooled GAN-TSC and GAN-assisted supervised control on one split."""
    tr, _, te = benchmark_splits(seed)
    teacher = fit_classifier_forest(tr, teacher_trees, seed)
    gan = train_acgan(tr, gan_config or GANConfig(), seed=seed)
    alone = fit_regression_forest(tr.features, tr.labels.astype(np.float64), student_trees, seed)
    real = compress_forest(teacher, assemble_pooled(tr, None, 0.0, teacher, seed), student_trees, seed)
    pooled = assemble_pooled(tr, gan, ratio, teacher, [seed, 5])
    gan_tsc = compress_forest(teacher, pooled, student_trees, seed)
    # identical synthetic rows, but with the generator's intended labels instead of teacher targets
    synth = generate(gan, int(round(ratio * tr.n)), [seed, 5])
    control, _ = supervised_control(student_trees, tr, synth, seed)
    r_alone, r_real = evaluate(alone, te), evaluate(real, te)
    return ForestRun(r_alone.accuracy, r_real.accuracy, evaluate(gan_tsc, te).accuracy,
                     evaluate(control, te).accuracy, evaluate(teacher, te).accuracy, r_real.auc, r_alone.auc)


# -- MLP stream mixture -------------------------------------------------------

@dataclass
class MLPSetup:
    teacher_hidden: list = field(default_factory=lambda: [200, 200])
    teacher_epochs: int = 30
    student_hidden: list = field(default_factory=lambda: [50, 50])
    student_epochs: int = 100
    batch_size: int = 64
    lr: float = 1e-3


def mlp_pfake(seed: int, grid=(0.0, 0.2, 0.5, 0.8, 1.0), setup: MLPSetup | None = None) -> dict:
    """Test accuracy of stream-mixture students for each p_fake, plus the plain student baseline."""
    s = setup or MLPSetup()
    tr, _, te = benchmark_splits(seed)
    opt = OptimizerConfig(lr=s.lr)
    teacher, _ = train_classifier(init_mlp([tr.d, *s.teacher_hidden, tr.n_classes], [seed, 1]), tr,
                                  s.teacher_epochs, s.batch_size, opt, seed)
    student0 = init_mlp([tr.d, *s.student_hidden, tr.n_classes], [seed, 2])
    alone, _ = train_classifier(student0, tr, s.student_epochs, s.batch_size, opt, seed)
    gan = train_acgan(tr, GANConfig(), seed=seed)
    out = {"teacher": evaluate(teacher, te).accuracy, "student_only": evaluate(alone, te).accuracy, "p_fake": {}}
    for p in grid:
        st, _ = compress_nn(teacher, student0, tr, SourceConfig("stream", p_fake=p), ObjectiveConfig("l2-logits"),
                            s.student_epochs, s.batch_size, opt, seed, gan=gan)
        out["p_fake"][p] = evaluate(st, te).accuracy
    return out


# -- synthetic data scoring ---------------------------------------------------

SCORE_TEMPLATE = StudentTemplate(kind="mlp", hidden=[10], epochs=1, batch_size=16, optimizer=OptimizerConfig(lr=0.01))


def score_ordering(seed: int, teacher_trees: int = 500, degrade_epochs: int = 30, replicates: int = 3,
                   template: StudentTemplate = SCORE_TEMPLATE) -> dict:
    """TSC and confidence scores of real data, a trained generator and a class-only degraded copy."""
    tr, va, te = benchmark_splits(seed)
    teacher = fit_classifier_forest(tr, teacher_trees, seed)
    gan = train_acgan(tr, GANConfig(), seed=seed)
    bad = degrade_acgan(gan, degrade_epochs, tr, seed)
    sets = {"real": tr, "gan": generate(gan, tr.n, [seed, 11]).features,
            "degraded": generate(bad, tr.n, [seed, 11]).features}
    reports = tsc_scores(sets, tr, teacher, template, te, seeds=tuple(range(replicates)))
    clf, _ = train_classifier(init_mlp([tr.d, 50, tr.n_classes], [seed, 9]), tr, 50, 64, seed=seed, validation=va)
    conf = {k: confidence_score(v.features if isinstance(v, Dataset) else v, clf, "mlp-50").score
            for k, v in sets.items()}
    return {"tsc": reports, "confidence": conf}
