"""Compression-set assembly, teacher labelling, student training and evaluation."""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .data import Dataset
from .forest import CLASSIFICATION, RandomForest, fit_regression_forest, node_count, predict_proba, predict_value
from .gan import ACGAN, SyntheticBatch, generate
from .nn import (MLP, OptimizerConfig, loss_ce_distill, loss_combined, loss_hard_ce, loss_l2_logits,
                 loss_prob_l2, make_optimizer, softmax_T, train_classifier)

REAL, GAN, MUNGE = "real", "gan", "munge"


class CompressionError(ValueError):
    pass


@dataclass
class SourceConfig:
    kind: str = "real"        # real | gan | munge | pooled | stream
    ratio: float = 9.0        # synthetic rows per real row for gan / munge / pooled
    p_fake: float = 0.0       # stream only
    generator: str = GAN      # pooled only: where the synthetic rows come from

    def __post_init__(self):
        if self.kind not in ("real", "gan", "munge", "pooled", "stream"):
            raise CompressionError(f"unknown source kind {self.kind!r}")
        if not 0.0 <= self.p_fake <= 1.0:
            raise CompressionError("p_fake must lie in [0, 1]")
        if self.ratio < 0:
            raise CompressionError("ratio must be >= 0")


@dataclass
class ObjectiveConfig:
    kind: str = "l2-logits"   # l2-logits | ce-distill | probability-regression
    T: float = 1.0
    alpha: float = 1.0
    temperature_compensation: bool = False  # multiply the distillation term by T^2

    def __post_init__(self):
        if self.kind not in ("l2-logits", "ce-distill", "probability-regression"):
            raise CompressionError(f"unknown objective {self.kind!r}")
        if self.T <= 0:
            raise CompressionError("T must be positive")
        if not 0 < self.alpha <= 1:
            raise CompressionError("alpha must lie in (0, 1]")


@dataclass
class LabeledCompressionSet:
    features: np.ndarray
    targets: np.ndarray       # teacher outputs only
    hard_labels: np.ndarray   # true labels for real rows, teacher argmax for synthetic rows
    provenance: np.ndarray    # REAL / GAN / MUNGE per row

    def __len__(self):
        return self.features.shape[0]

    def counts(self) -> dict:
        kinds, n = np.unique(self.provenance, return_counts=True)
        return {str(k): int(c) for k, c in zip(kinds, n)}


@dataclass
class EvalReport:
    accuracy: float
    auc: float | None
    n: int
    curves: list = field(default_factory=list)
    throughput: float | None = None
    size: int | None = None

    def to_dict(self) -> dict:
        return {"accuracy": self.accuracy, "auc": self.auc, "n": self.n, "curves": self.curves,
                "throughput": self.throughput, "size": self.size}


# -- teacher labelling --------------------------------------------------------

def label_with_teacher(teacher, X) -> np.ndarray:
    """Class-1 probability (binary forest), probability matrix (multiclass forest) or logits (MLP)."""
    X = np.asarray(X, dtype=np.float64)
    if isinstance(teacher, RandomForest):
        if teacher.mode != CLASSIFICATION:
            raise CompressionError("teacher forest must be a classifier")
        p = predict_proba(teacher, X)
        return p[:, 1] if p.shape[1] == 2 else p
    if isinstance(teacher, MLP):
        if X.shape[1] != teacher.sizes[0]:
            raise CompressionError(f"teacher expects {teacher.sizes[0]} features, got {X.shape[1]}")
        return teacher.forward(X)
    raise CompressionError(f"unsupported teacher type {type(teacher).__name__}")


def _teacher_hard(targets: np.ndarray) -> np.ndarray:
    if targets.ndim == 1:
        return (targets > 0.5).astype(np.int64)
    return targets.argmax(axis=1)


def _synthetic_rows(source, m: int, seed) -> np.ndarray:
    if isinstance(source, ACGAN):
        return generate(source, m, seed).features
    feats = source.features if isinstance(source, SyntheticBatch) else np.asarray(source)
    if len(feats) < m:
        raise CompressionError(f"synthetic source has {len(feats)} rows, {m} requested")
    if len(feats) == m:
        return feats
    rows = np.sort(np.random.default_rng(seed).choice(len(feats), size=m, replace=False))
    return feats[rows]


def assemble_pooled(real: Dataset, source, ratio: float, teacher, seed, tag: str = GAN,
                    include_real: bool = True) -> LabeledCompressionSet:
    """Real rows followed by round(ratio * n_real) synthetic rows, all labelled by the teacher."""
    if ratio < 0:
        raise CompressionError("ratio must be >= 0")
    n_fake = int(round(ratio * real.n))
    parts, prov, hard = [], [], []
    if include_real:
        parts.append(real.features)
        prov.append(np.full(real.n, REAL))
        hard.append(real.labels)
    if n_fake:
        parts.append(_synthetic_rows(source, n_fake, seed))
        prov.append(np.full(n_fake, tag))
    if not parts:
        raise CompressionError("empty compression set")
    X = np.vstack(parts)
    targets = label_with_teacher(teacher, X)
    if n_fake:
        hard.append(_teacher_hard(targets[-n_fake:]))
    return LabeledCompressionSet(X, targets, np.concatenate(hard), np.concatenate(prov))


def sample_mixture_batch(real: Dataset, gan: ACGAN | None, p_fake: float, batch_size: int, teacher, rng,
                         real_rows=None, real_targets=None) -> LabeledCompressionSet:
    """Each slot is a fresh GAN draw with probability p_fake, otherwise a real row.

    Real rows are taken in order from ``real_rows`` when given (an epoch
    permutation), otherwise drawn uniformly with replacement.
    """
    if not 0.0 <= p_fake <= 1.0:
        raise CompressionError("p_fake must lie in [0, 1]")
    fake = rng.random(batch_size) < p_fake if p_fake > 0 else np.zeros(batch_size, dtype=bool)
    n_real = int((~fake).sum())
    if real_rows is None:
        rows = rng.integers(0, real.n, size=n_real)
    else:
        rows = np.asarray(real_rows)[:n_real]
    X = np.empty((batch_size, real.d))
    X[~fake] = real.features[rows]
    hard = np.empty(batch_size, dtype=np.int64)
    hard[~fake] = real.labels[rows]
    prov = np.where(fake, GAN, REAL)
    if real_targets is None:
        if fake.any():
            X[fake] = generate(gan, int(fake.sum()), rng).features
        targets = label_with_teacher(teacher, X)
    else:
        rt = real_targets[rows]
        targets = np.empty((batch_size,) + rt.shape[1:])
        targets[~fake] = rt
        if fake.any():
            X[fake] = generate(gan, int(fake.sum()), rng).features
            targets[fake] = label_with_teacher(teacher, X[fake])
    if fake.any():
        hard[fake] = _teacher_hard(targets[fake])
    return LabeledCompressionSet(X, targets, hard, prov)


# -- forest students ----------------------------------------------------------

def compress_forest(teacher: RandomForest, cset: LabeledCompressionSet, n_student_trees: int,
                    seed: int) -> RandomForest:
    """Regression forest on the teacher's class-1 probability."""
    if isinstance(teacher, RandomForest) and teacher.n_outputs != 2:
        raise CompressionError("forest compression needs a binary teacher")
    if cset.targets.ndim != 1:
        raise CompressionError("forest compression needs scalar probability targets")
    return fit_regression_forest(cset.features, cset.targets, n_student_trees, seed)


# -- neural students ----------------------------------------------------------

def _objective(obj: ObjectiveConfig, out, targets, hard, teacher_kind: str):
    if obj.kind == "probability-regression":
        if teacher_kind != "forest":
            raise CompressionError("probability-regression needs a forest teacher")
        if targets.ndim == 1:
            targets = np.column_stack([1.0 - targets, targets])
        return loss_prob_l2(out, targets)
    if teacher_kind != "mlp":
        raise CompressionError(f"objective {obj.kind!r} needs teacher logits; use probability-regression")
    if obj.kind == "l2-logits":
        if targets.ndim != 2 or targets.shape != out.shape:
            raise CompressionError("l2-logits needs teacher logit vectors as targets")
        return loss_l2_logits(out, targets)
    if obj.kind == "ce-distill":
        if targets.ndim != 2 or targets.shape != out.shape:
            raise CompressionError("ce-distill needs teacher logit vectors as targets")
        if not obj.temperature_compensation:
            return loss_combined(out, targets, hard, obj.T, obj.alpha)
        lt, gt = loss_ce_distill(out, targets, obj.T)
        l0, g0 = loss_hard_ce(out, hard)
        a, t2 = obj.alpha, obj.T ** 2
        return a * t2 * lt + (1 - a) * l0, a * t2 * gt + (1 - a) * g0
    raise CompressionError(f"unknown objective {obj.kind!r}")


def _io_sizes(model) -> tuple[int, int]:
    if isinstance(model, MLP):
        return model.sizes[0], model.sizes[-1]
    if isinstance(model, RandomForest) and model.mode == CLASSIFICATION:
        return model.n_features, model.n_outputs
    raise CompressionError(f"unsupported teacher type {type(model).__name__}")


def _epoch_stream(real: Dataset, real_targets, source: SourceConfig, pooled, gan, teacher, batch_size, seed,
                  epoch):
    if source.kind == "stream":
        perm = np.random.default_rng([seed, epoch]).permutation(real.n)
        mix = np.random.default_rng([seed, epoch, 1])
        for b, lo in enumerate(range(0, real.n, batch_size)):
            size = min(batch_size, real.n - lo)
            yield sample_mixture_batch(real, gan, source.p_fake, size, teacher, mix, perm[lo:],
                                       real_targets)
    else:
        n = len(pooled)
        perm = np.random.default_rng([seed, epoch]).permutation(n)
        for lo in range(0, n, batch_size):
            rows = perm[lo:lo + batch_size]
            yield LabeledCompressionSet(pooled.features[rows], pooled.targets[rows], pooled.hard_labels[rows],
                                        pooled.provenance[rows])


def build_pooled(real: Dataset, teacher, source: SourceConfig, gan=None, munge_batch=None, seed=0):
    if source.kind == "real":
        return assemble_pooled(real, None, 0.0, teacher, seed)
    if source.kind == "gan":
        return assemble_pooled(real, gan, source.ratio, teacher, seed, GAN, include_real=False)
    if source.kind == "munge":
        return assemble_pooled(real, munge_batch, source.ratio, teacher, seed, MUNGE, include_real=False)
    if source.kind == "pooled":
        src = gan if source.generator == GAN else munge_batch
        return assemble_pooled(real, src, source.ratio, teacher, seed, source.generator)
    return None


def compress_nn(teacher, student: MLP, real: Dataset, source: SourceConfig, objective: ObjectiveConfig,
                epochs: int, batch_size: int = 64, optimizer: OptimizerConfig | None = None, seed: int = 0,
                gan: ACGAN | None = None, munge_batch=None, test: Dataset | None = None,
                validation: Dataset | None = None) -> tuple[MLP, list[dict]]:
    """Train a copy of ``student`` to mimic ``teacher``; returns it with per-epoch curves.

    Stream sources draw batches in real time; epoch length is always
    ceil(n_real / batch_size) batches for streams and one pass otherwise.
    A forest teacher supplies probabilities and needs probability-regression.
    """
    teacher_kind = "mlp" if isinstance(teacher, MLP) else "forest"
    if _io_sizes(teacher) != (student.sizes[0], student.sizes[-1]):
        raise CompressionError("teacher and student must share input and output sizes")
    if source.kind in ("gan", "stream") and gan is None and not (source.kind == "stream" and source.p_fake == 0):
        raise CompressionError(f"source {source.kind!r} needs a GAN")
    student = student.copy()
    opt = make_optimizer(optimizer or OptimizerConfig())
    pooled = build_pooled(real, teacher, source, gan, munge_batch, seed)
    real_targets = label_with_teacher(teacher, real.features) if source.kind == "stream" else None
    curves = []
    for epoch in range(epochs):
        total, count, fake = 0.0, 0, 0
        for batch in _epoch_stream(real, real_targets, source, pooled, gan, teacher, batch_size, seed, epoch):
            out, cache = student.forward_cache(batch.features)
            loss, grad = _objective(objective, out, batch.targets, batch.hard_labels, teacher_kind)
            grads, _ = student.backward(cache, grad)
            opt.step(student.params, grads)
            total += loss * len(batch)
            count += len(batch)
            fake += int((batch.provenance != REAL).sum())
        rec = {"epoch": epoch + 1, "compression_loss": total / count, "fake_fraction": fake / count}
        if test is not None:
            rec["test_accuracy"] = evaluate(student, test).accuracy
        if validation is not None:
            rec["validation_accuracy"] = evaluate(student, validation).accuracy
        curves.append(rec)
    return student, curves


# -- evaluation ---------------------------------------------------------------

def roc_auc(labels, scores, positive: int = 1) -> float:
    """Exact AUC with ties counted one half, via grouped ranks."""
    labels = np.asarray(labels)
    scores = np.asarray(scores, dtype=np.float64)
    pos = labels == positive
    n_pos = int(pos.sum())
    n_neg = len(labels) - n_pos
    if n_pos == 0 or n_neg == 0:
        raise CompressionError("AUC needs both positive and negative examples")
    order = np.argsort(scores, kind="stable")
    s, p = scores[order], pos[order]
    _, start, counts = np.unique(s, return_index=True, return_counts=True)
    pos_in = np.add.reduceat(p.astype(np.int64), start)
    neg_in = counts - pos_in
    neg_below = np.concatenate([[0], np.cumsum(neg_in)[:-1]])
    twice = int((2 * pos_in * neg_below + pos_in * neg_in).sum())
    return twice / (2 * n_pos * n_neg)


def model_scores(model, X) -> np.ndarray:
    """Per-class scores for argmax (2-D) or a scalar class-1 score (1-D, thresholded at 0.5)."""
    if isinstance(model, RandomForest):
        return predict_proba(model, X) if model.mode == CLASSIFICATION else predict_value(model, X)
    if isinstance(model, MLP):
        return softmax_T(model.forward(X))
    raise CompressionError(f"unsupported model type {type(model).__name__}")


def predict_class(model, X) -> np.ndarray:
    s = model_scores(model, X)
    return (s > 0.5).astype(np.int64) if s.ndim == 1 else s.argmax(axis=1)


def evaluate(model, test: Dataset, positive_class: int = 1, auc: bool | None = None) -> EvalReport:
    if test.n == 0:
        raise CompressionError("empty test set")
    s = model_scores(model, test.features)
    pred = (s > 0.5).astype(np.int64) if s.ndim == 1 else s.argmax(axis=1)
    acc = float((pred == test.labels).mean())
    want_auc = test.n_classes == 2 if auc is None else auc
    value = None
    if want_auc:
        if test.n_classes != 2:
            raise CompressionError("AUC is only defined for binary tasks")
        score = s if s.ndim == 1 else s[:, positive_class]
        if s.ndim == 1 and positive_class == 0:
            score = -s
        value = roc_auc(test.labels, score, positive_class)
    size = node_count(model) if isinstance(model, RandomForest) else model.n_parameters()
    return EvalReport(acc, value, test.n, size=size)


def measure_throughput(model, X, repeats: int = 5) -> dict:
    """Median predictions/second over ``repeats`` timed passes."""
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        model_scores(model, X)
        times.append(time.perf_counter() - t0)
    times = np.array(times)
    return {"median_seconds": float(np.median(times)), "qps": float(len(X) / np.median(times)),
            "seconds": times.tolist(), "rel_spread": float((times.max() - times.min()) / np.median(times))}


def compare_throughput(teacher, student, X, repeats: int = 5) -> dict:
    """Time both models on identical queries, alternating so drift hits both equally."""
    if repeats < 1:
        raise CompressionError("repeats must be >= 1")
    if len(X) < 1:
        raise CompressionError("need at least one query")
    for m in (teacher, student):
        n_in = m.n_features if isinstance(m, RandomForest) else m.sizes[0]
        if X.shape[1] != n_in:
            raise CompressionError(f"model expects {n_in} features, probe data has {X.shape[1]}")
    times = {"teacher": [], "student": []}
    for _ in range(repeats):
        for name, m in (("teacher", teacher), ("student", student)):
            t0 = time.perf_counter()
            model_scores(m, X)
            times[name].append(time.perf_counter() - t0)
    out = {}
    for name, t in times.items():
        t = np.array(t)
        med = float(np.median(t))
        out[name] = {"median_seconds": med, "qps": len(X) / med, "seconds": t.tolist(),
                     "rel_spread": float((t.max() - t.min()) / med)}
    out["speedup"] = out["student"]["qps"] / out["teacher"]["qps"]
    return out


# -- supervised control -------------------------------------------------------

def supervised_control(student, real: Dataset, synthetic: SyntheticBatch | None, seed: int, *, epochs: int = 1,
                       batch_size: int = 64, optimizer: OptimizerConfig | None = None, ratio: float | None = None,
                       test: Dataset | None = None):
    """Train the student on the original labels, with synthetic rows keeping their intended classes.

    ``student`` is an initialised MLP or an int (number of regression trees,
    trained on 0/1 labels as real-valued targets). Returns (model, provenance).
    """
    X, y, prov = real.features, real.labels, np.full(real.n, REAL)
    if synthetic is not None and len(synthetic):
        m = len(synthetic) if ratio is None else int(round(ratio * real.n))
        feats = synthetic.features[:m]
        X = np.vstack([X, feats])
        y = np.concatenate([y, synthetic.intended_classes[:m]])
        prov = np.concatenate([prov, np.full(len(feats), GAN)])
    if isinstance(student, int):
        if real.n_classes != 2:
            raise CompressionError("forest supervised control needs a binary task")
        return fit_regression_forest(X, y.astype(np.float64), student, seed), prov
    model, _ = train_classifier(student, Dataset(X, y, real.n_classes), epochs, batch_size, optimizer, seed, test)
    return model, prov

