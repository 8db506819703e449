"""TSC Score and a classifier-confidence score for synthetic datasets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .compress import (CompressionError, ObjectiveConfig, SourceConfig, assemble_pooled, compress_forest,
                       compress_nn, evaluate, model_scores)
from .data import Dataset
from .forest import RandomForest
from .gan import SyntheticBatch
from .nn import MLP, OptimizerConfig, init_mlp


class DegenerateScore(ValueError):
    pass


@dataclass
class StudentTemplate:
    """How to build a fresh student: an MLP (``hidden`` widths) or a regression forest (``n_trees``)."""

    kind: str = "mlp"
    hidden: list = field(default_factory=lambda: [10])
    activation: str = "relu"
    n_trees: int = 1
    epochs: int = 1
    batch_size: int = 64
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    objective: ObjectiveConfig | None = None  # None: l2-logits for MLP teachers, probability-regression for forests

    def objective_for(self, teacher) -> ObjectiveConfig:
        if self.objective is not None:
            return self.objective
        return ObjectiveConfig("probability-regression" if isinstance(teacher, RandomForest) else "l2-logits")

    def init(self, n_in: int, n_out: int, seed) -> MLP:
        return init_mlp([n_in, *self.hidden, n_out], seed, self.activation)


@dataclass
class TSCScoreReport:
    score: float
    acc_synth: float
    acc_real: float
    acc_mode: float
    student: dict
    epochs: int
    seeds: list
    replicate_scores: list
    stderr: float
    below_baseline: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ConfidenceScoreReport:
    score: float
    classifier: str
    marginal: list

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def mode_accuracy(test: Dataset) -> float:
    counts = np.bincount(test.labels, minlength=test.n_classes)
    return float(counts.max() / counts.sum())


def _features(synth) -> np.ndarray:
    if isinstance(synth, (SyntheticBatch, Dataset)):
        return synth.features
    return np.asarray(synth, dtype=np.float64)


def student_accuracy(features, teacher, template: StudentTemplate, test: Dataset, seed: int) -> float:
    """Test accuracy of a student distilled on ``features`` labelled by the teacher.

    The student initialisation and batch order depend only on ``seed``, so
    two calls with identical features give bit-identical students.
    """
    X = _features(features)
    # labels are only a placeholder; every target comes from the teacher
    d = Dataset(X, np.zeros(len(X), dtype=np.int64), test.n_classes)
    if template.kind == "forest":
        cset = assemble_pooled(d, None, 0.0, teacher, seed)
        return evaluate(compress_forest(teacher, cset, template.n_trees, seed), test).accuracy
    student = template.init(X.shape[1], test.n_classes, [seed, 7])
    student, _ = compress_nn(teacher, student, d, SourceConfig("real"), template.objective_for(teacher), template.epochs,
                             template.batch_size, template.optimizer, seed)
    return evaluate(student, test).accuracy


def _stderr(values) -> float:
    values = np.asarray(values, dtype=np.float64)
    return float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else 0.0


def tsc_scores(datasets: dict, real: Dataset, teacher, template: StudentTemplate, test: Dataset,
               seeds=(0, 1, 2)) -> dict[str, TSCScoreReport]:
    """Score several synthetic datasets against one reference set with shared student seeds."""
    acc_mode = mode_accuracy(test)
    acc_real = [student_accuracy(real.features, teacher, template, test, s) for s in seeds]
    if min(acc_real) <= acc_mode:
        raise DegenerateScore(f"reference accuracy {min(acc_real):.4f} does not exceed mode accuracy "
                              f"{acc_mode:.4f}; no score emitted")
    reports = {}
    for name, synth in datasets.items():
        if synth is real:
            acc = list(acc_real)
        else:
            acc = [student_accuracy(synth, teacher, template, test, s) for s in seeds]
        # the score is the ratio of mean accuracies, so changing the reference set rescales every
        # dataset's score by the same factor; per-replicate ratios only feed the standard error
        reps = [(a - acc_mode) / (r - acc_mode) for a, r in zip(acc, acc_real)]
        mean_synth, mean_real = float(np.mean(acc)), float(np.mean(acc_real))
        score = (mean_synth - acc_mode) / (mean_real - acc_mode)
        reports[name] = TSCScoreReport(score, mean_synth, mean_real, acc_mode,
                                       {"kind": template.kind, "hidden": template.hidden,
                                        "n_trees": template.n_trees},
                                       template.epochs, list(seeds), reps, _stderr(reps), score < 0)
    return reports


def tsc_score(synth, real: Dataset, teacher, template: StudentTemplate, test: Dataset,
              seeds=(0, 1, 2)) -> TSCScoreReport:
    return tsc_scores({"synthetic": synth}, real, teacher, template, test, seeds)["synthetic"]


def confidence_score(features, classifier, name: str | None = None) -> ConfidenceScoreReport:
    """exp of the mean KL divergence between per-row class conditionals and their marginal."""
    X = _features(features)
    if isinstance(classifier, RandomForest):
        classifier.check_dim(X)
        p = model_scores(classifier, X)
        if p.ndim == 1:
            p = np.column_stack([1 - p, p])
    elif isinstance(classifier, MLP):
        p = model_scores(classifier, X)
    elif callable(classifier):
        p = np.asarray(classifier(X), dtype=np.float64)
    else:
        raise CompressionError(f"unsupported classifier {type(classifier).__name__}")
    marginal = p.mean(axis=0)
    logp = np.log(np.clip(p, 1e-12, None))
    kl = np.where(p > 0, p * (logp - np.log(np.clip(marginal, 1e-12, None))), 0.0).sum(axis=1)
    return ConfidenceScoreReport(float(math.exp(kl.mean())), name or type(classifier).__name__,
                                 marginal.tolist())
