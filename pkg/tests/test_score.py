import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from gantsc.compress import label_with_teacher
from gantsc.data import Dataset
from gantsc.gan import generate
from gantsc.nn import OptimizerConfig
from gantsc.score import (DegenerateScore, StudentTemplate, confidence_score, mode_accuracy, tsc_score,
                          tsc_scores)

FOREST = StudentTemplate(kind="forest", n_trees=1)
MLP_TEMPLATE = StudentTemplate(hidden=[10], epochs=1, batch_size=16, optimizer=OptimizerConfig(lr=0.01))


def test_mode_accuracy():
    assert mode_accuracy(Dataset(np.zeros((4, 1)), np.array([0, 1, 0, 1]), 2)) == 0.5
    assert mode_accuracy(Dataset(np.zeros((4, 1)), np.array([0, 0, 0, 1]), 2)) == 0.75


def test_real_against_itself_scores_exactly_one(bench, small_forest, small_mlp_teacher):
    tr, _, te = bench
    for teacher, template in ((small_forest, FOREST), (small_mlp_teacher, MLP_TEMPLATE)):
        rep = tsc_score(tr.features.copy(), tr, teacher, template, te, seeds=(0, 1))
        assert rep.score == 1.0 and rep.replicate_scores == [1.0, 1.0] and rep.stderr == 0.0


def test_student_at_mode_accuracy_scores_zero(bench, small_forest):
    tr, _, te = bench
    majority = int(np.bincount(te.labels).argmax())
    p = label_with_teacher(small_forest, tr.features)
    # a single repeated point whose teacher label is the majority class: the student predicts it everywhere
    row = tr.features[np.flatnonzero((p > 0.5) == bool(majority))[0]]
    rep = tsc_score(np.tile(row, (50, 1)), tr, small_forest, FOREST, te, seeds=(0, 1, 2))
    assert rep.acc_synth == mode_accuracy(te) and rep.score == 0.0 and not rep.below_baseline


def test_negative_scores_are_flagged(bench, small_forest):
    tr, _, te = bench
    minority = int(np.bincount(te.labels).argmin())
    p = label_with_teacher(small_forest, tr.features)
    row = tr.features[np.flatnonzero((p > 0.5) == bool(minority))[0]]
    assert mode_accuracy(te) > 0.5
    rep = tsc_score(np.tile(row, (50, 1)), tr, small_forest, FOREST, te, seeds=(0,))
    assert rep.score < 0 and rep.below_baseline


def test_degenerate_reference_raises(bench, small_forest):
    tr, _, te = bench
    useless = Dataset(np.tile(tr.features[:1], (20, 1)), np.zeros(20, dtype=int), 2)
    with pytest.raises(DegenerateScore, match="mode accuracy"):
        tsc_score(tr.features, useless, small_forest, FOREST, te, seeds=(0,))


def test_ranking_is_invariant_to_reference_set(bench, small_forest, small_gan):
    tr, va, te = bench
    synth = {"gan": generate(small_gan, tr.n, 1), "early": generate(small_gan, tr.n, 1, epoch=0),
             "half": tr.features[: tr.n // 2]}
    by_ref = []
    for ref in (tr, va):
        reps = tsc_scores(synth, ref, small_forest, FOREST, te, seeds=(0, 1, 2))
        by_ref.append(sorted(reps, key=lambda k: reps[k].score))
    assert by_ref[0] == by_ref[1]


def test_scores_are_reproducible(bench, small_forest, small_gan):
    tr, _, te = bench
    synth = generate(small_gan, tr.n, 3)
    a = tsc_score(synth, tr, small_forest, FOREST, te).to_dict()
    b = tsc_score(synth, tr, small_forest, FOREST, te).to_dict()
    assert a == b


# -- confidence score -----------------------------------------------------------

def test_confidence_examples():
    X = np.zeros((10, 2))
    assert confidence_score(X, lambda x: np.tile([0.3, 0.7], (len(x), 1))).score == pytest.approx(1.0, abs=1e-12)
    hard = lambda x: np.array([[1.0, 0.0], [0.0, 1.0]] * (len(x) // 2))
    rep = confidence_score(X, hard, name="toy")
    assert rep.score == pytest.approx(2.0, rel=1e-12) and rep.classifier == "toy"


@given(st.integers(0, 10**6), st.integers(2, 6), st.floats(0.05, 20))
def test_confidence_lies_between_one_and_k(seed, K, scale):
    rng = np.random.default_rng(seed)
    logits = rng.standard_normal((40, K)) * scale
    p = np.exp(logits - logits.max(1, keepdims=True))
    p /= p.sum(1, keepdims=True)
    s = confidence_score(np.zeros((40, 1)), lambda x: p).score
    assert 1.0 - 1e-12 <= s <= K + 1e-9


def test_confidence_accepts_trained_models(bench, small_forest, small_mlp_teacher):
    X = bench[2].features[:200]
    for clf in (small_forest, small_mlp_teacher):
        s = confidence_score(X, clf).score
        assert 1.0 <= s <= 2.0
