import math

import mpmath
import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import blobs
from gantsc.data import make_synthetic_benchmark, split
from gantsc.nn import (MLP, AdamState, OptimizerConfig, SGDState, ShapeError, accuracy, init_mlp, load_mlp,
                       log_softmax_T, loss_ce_distill, loss_combined, loss_hard_ce, loss_l2_logits, loss_prob_l2,
                       save_mlp, softmax_T, train_classifier)


def rel_err(a, b):
    a, b = np.ravel(a), np.ravel(b)
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300))


def fd_grad(f, x, h=1e-6):
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in np.ndindex(x.shape):
        old = x[i]
        x[i] = old + h
        up = f(x)
        x[i] = old - h
        down = f(x)
        x[i] = old
        g[i] = (up - down) / (2 * h)
    return g


# -- forward ------------------------------------------------------------------

def test_forward_examples():
    zero = MLP([3, 4, 2], [np.zeros((3, 4)), np.zeros((4, 2))], [np.zeros(4), np.zeros(2)])
    np.testing.assert_array_equal(zero.forward(np.ones(3)), [0.0, 0.0])
    one = MLP([1, 1], [np.array([[2.0]])], [np.array([1.0])])
    assert one.forward(np.array([3.0]))[0] == 7.0


@pytest.mark.parametrize("activation", ["relu", "leaky_relu"])
def test_forward_matches_straight_line_oracle(activation):
    m = init_mlp([5, 7, 6, 3], 1, activation)
    for b in m.biases:
        b += np.random.default_rng(2).standard_normal(b.shape)
    X = np.random.default_rng(3).standard_normal((4, 5))
    act = (lambda h: max(h, 0.0)) if activation == "relu" else (lambda h: h if h > 0 else 0.2 * h)
    for x, got in zip(X, m.forward(X)):
        a = list(x)
        for li, (W, b) in enumerate(zip(m.weights, m.biases)):
            h = [sum(a[i] * W[i, j] for i in range(len(a))) + b[j] for j in range(W.shape[1])]
            a = h if li == len(m.weights) - 1 else [act(v) for v in h]
        np.testing.assert_allclose(got, a, rtol=0, atol=1e-12)


def test_forward_dimension_mismatch():
    with pytest.raises(ShapeError):
        init_mlp([3, 2], 0).forward(np.zeros(4))
    with pytest.raises(ValueError):
        init_mlp([3, 2], 0, "tanh")


# -- softmax --------------------------------------------------------------------

def test_softmax_examples():
    for T in (0.1, 1.0, 7.0):
        np.testing.assert_allclose(softmax_T([0.0, 0.0], T), [0.5, 0.5], atol=1e-15)
    np.testing.assert_allclose(softmax_T([math.log(2), 0.0], 1.0), [2 / 3, 1 / 3], atol=1e-15)
    mpmath.mp.dps = 50
    z, T = [1, 2, 3], 2
    den = sum(mpmath.e ** (mpmath.mpf(v) / T) for v in z)
    want = [float(mpmath.e ** (mpmath.mpf(v) / T) / den) for v in z]
    np.testing.assert_allclose(softmax_T(z, T), want, rtol=1e-14)
    with pytest.raises(ValueError):
        softmax_T([1.0], 0.0)
    with pytest.raises(ValueError):
        loss_ce_distill([1.0, 0.0], [0.0, 1.0], -1.0)


logits = st.lists(st.floats(-30, 30), min_size=2, max_size=5)


@given(logits, st.floats(-1e3, 1e3), st.floats(0.1, 50))  # spread under exp underflow
def test_softmax_shift_invariance_and_normalisation(z, c, T):
    p = softmax_T(z, T)
    assert np.all(p > 0) and abs(p.sum() - 1) <= 1e-12
    np.testing.assert_allclose(softmax_T(np.array(z) + c, T), p, atol=1e-12)


def test_extreme_logits_stay_finite():
    loss, grad = loss_ce_distill([1e4, -1e4], [-1e4, 1e4], 1.0)
    assert math.isfinite(loss) and np.all(np.isfinite(grad))


# -- losses -------------------------------------------------------------------

def test_loss_examples():
    g = np.array([0.3, -1.2, 2.0])
    loss, grad = loss_l2_logits(g, g)
    assert loss == 0 and not grad.any()
    loss, grad = loss_l2_logits(np.array([1.0, 0.0]), np.zeros(2))
    assert loss == 1.0 and grad.tolist() == [2.0, 0.0]
    with pytest.raises(ShapeError):
        loss_l2_logits(np.zeros(2), np.zeros(3))
    q = softmax_T(g, 3.0)
    loss, grad = loss_ce_distill(g, g, 3.0)
    assert loss == pytest.approx(-(q * np.log(q)).sum(), rel=1e-12)
    assert np.abs(grad).max() <= 1e-12


def test_distillation_reduces_to_hard_ce_for_saturated_teacher():
    g = np.array([0.4, -0.7, 1.1])
    z = np.array([-50.0, 50.0, -50.0])
    assert loss_ce_distill(g, z, 1.0)[0] == pytest.approx(loss_hard_ce(g, 1)[0], abs=1e-9)


def test_combined_loss_boundaries_and_composition():
    rng = np.random.default_rng(0)
    g, z = rng.standard_normal((4, 3)), rng.standard_normal((4, 3))
    c = np.array([0, 2, 1, 1])
    lt, gt = loss_ce_distill(g, z, 2.0)
    l1, g1 = loss_combined(g, z, c, 2.0, 1.0)
    assert l1 == lt and np.array_equal(g1, gt)
    l0, g0 = loss_hard_ce(g, c)
    assert loss_combined(g, z, c, 2.0, 1e-12)[0] == pytest.approx(l0, abs=1e-9)
    l5, _ = loss_ce_distill(g, z, 5.0)
    assert loss_combined(g, z, c, 5.0, 0.9)[0] == pytest.approx(0.9 * l5 + 0.1 * l0, rel=1e-14)
    for bad in (0.0, 1.5):
        with pytest.raises(ValueError):
            loss_combined(g, z, c, 2.0, bad)


@given(st.integers(0, 10**6), st.floats(0.2, 20))
def test_cross_entropy_is_at_least_entropy(seed, T):
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(4) * 3
    g = rng.standard_normal(4) * 3
    assert loss_ce_distill(g, z, T)[0] >= loss_ce_distill(z, z, T)[0] - 1e-12


def _loss_cases(rng):
    K = int(rng.integers(2, 6))
    n = int(rng.integers(1, 4))
    g, z = rng.standard_normal((n, K)) * 2, rng.standard_normal((n, K)) * 2
    c = rng.integers(0, K, n)
    p = softmax_T(rng.standard_normal((n, K)))
    T = float(rng.uniform(0.5, 8))
    a = float(rng.uniform(0.05, 1))
    return g, [
        lambda x: loss_l2_logits(x, z),
        lambda x: loss_ce_distill(x, z, T),
        lambda x: loss_hard_ce(x, c),
        lambda x: loss_prob_l2(x, p),
        lambda x: loss_combined(x, z, c, T, a),
    ]


def test_loss_gradients_match_finite_differences():
    errs = []
    for seed in range(100):
        g, fns = _loss_cases(np.random.default_rng(seed))
        for f in fns:
            errs.append(rel_err(f(g)[1], fd_grad(lambda x: f(x)[0], g)))
    assert len(errs) >= 100 and max(errs) < 1e-6


@pytest.mark.parametrize("activation", ["relu", "leaky_relu"])
def test_network_backprop_matches_finite_differences(activation):
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        sizes = [int(rng.integers(1, 6))] + [int(v) for v in rng.integers(1, 21, rng.integers(1, 3))] + [3]
        m = init_mlp(sizes, rng, activation)
        for b in m.biases:
            b += 0.1 * rng.standard_normal(b.shape)
        X = rng.standard_normal((4, sizes[0]))
        z = rng.standard_normal((4, 3))

        def loss_at(params_flat, which):
            saved = m.params[which].copy()
            m.params[which][...] = params_flat
            val = loss_l2_logits(m.forward(X), z)[0]
            m.params[which][...] = saved
            return val

        out, cache = m.forward_cache(X)
        grads, gx = m.backward(cache, loss_l2_logits(out, z)[1])
        for i, p in enumerate(m.params):
            worst = max(worst, rel_err(grads[i], fd_grad(lambda v: loss_at(v, i), p)))
        worst = max(worst, rel_err(gx, fd_grad(lambda v: loss_l2_logits(m.forward(v), z)[0], X)))
    assert worst < 1e-5


def test_temperature_limit_recovers_logit_matching():
    rng = np.random.default_rng(0)
    errs = {}
    K = 4
    g, z = rng.standard_normal((20, K)), rng.standard_normal((20, K))
    g -= g.mean(1, keepdims=True)
    z -= z.mean(1, keepdims=True)
    for T in (10.0, 100.0, 1000.0):
        scaled = np.array([K * T * T * loss_ce_distill(gi, zi, T)[1] for gi, zi in zip(g, z)])
        errs[T] = rel_err(scaled, g - z)
    assert errs[100.0] < 0.05
    assert errs[10.0] > errs[100.0] > errs[1000.0]


def test_log_softmax_matches_log_of_softmax():
    z = np.random.default_rng(1).standard_normal((5, 3))
    np.testing.assert_allclose(log_softmax_T(z, 2.0), np.log(softmax_T(z, 2.0)), atol=1e-14)


# -- optimizers ----------------------------------------------------------------

def test_adam_first_step_and_zero_gradient():
    p = [np.array([0.0])]
    AdamState(0.1, 0.9, 0.999, 1e-8).step(p, [np.array([1.0])])
    assert p[0][0] == pytest.approx(-0.1, abs=1e-6)
    q = [np.array([1.5, -2.0])]
    st_ = AdamState(0.1, 0.9, 0.999, 1e-8)
    st_.step(q, [np.zeros(2)])
    assert q[0].tolist() == [1.5, -2.0] and st_.t == 1
    assert st_.m[0].shape == q[0].shape
    with pytest.raises(ShapeError):
        st_.step(q, [np.zeros(3)])


def test_adam_converges_on_quadratic():
    p = [np.array([0.0])]
    opt = AdamState(0.1, 0.9, 0.999, 1e-8)
    for _ in range(1000):
        opt.step(p, [2 * (p[0] - 3.0)])
    assert abs(p[0][0] - 3.0) < 1e-3


def test_sgd_decay_and_momentum():
    p = [np.array([0.0])]
    opt = SGDState(0.1, decay=1.0)
    for _ in range(3):
        opt.step(p, [np.array([1.0])])
    assert p[0][0] == pytest.approx(-(0.1 + 0.05 + 0.1 / 3), rel=1e-12)
    q = [np.array([0.0])]
    mom = SGDState(1.0, momentum=0.5)
    mom.step(q, [np.array([1.0])])
    mom.step(q, [np.array([1.0])])
    assert q[0][0] == pytest.approx(-1.0 - 1.5)


# -- training -------------------------------------------------------------------

def test_train_classifier_separable_blobs():
    d = blobs(200, 0)
    m, hist = train_classifier(init_mlp([2, 10, 2], 0), d, 50, 16, OptimizerConfig(lr=0.01), seed=0)
    assert accuracy(m, d.features, d.labels) == 1.0
    assert len(hist) == 50 and [h["epoch"] for h in hist] == list(range(1, 51))


def test_train_classifier_near_bayes_on_benchmark():
    d = make_synthetic_benchmark(12000, 10, 2, 2.0, seed=1)
    tr, te = split(d, [2000 / 12000, 10000 / 12000], seed=1)
    m, _ = train_classifier(init_mlp([10, 50, 2], 0), tr, 30, 64, OptimizerConfig(lr=1e-3), seed=0, validation=te)
    assert abs(accuracy(m, te.features, te.labels) - d.metadata["bayes_accuracy"]) <= 0.03


def test_zero_epochs_and_reproducibility():
    d = blobs(100, 1)
    m0 = init_mlp([2, 5, 2], 3)
    same, hist = train_classifier(m0, d, 0, 16)
    assert hist == [] and all(np.array_equal(a, b) for a, b in zip(same.params, m0.params))
    a, _ = train_classifier(m0, d, 3, 16, seed=4)
    b, _ = train_classifier(m0, d, 3, 16, seed=4)
    assert all(x.tobytes() == y.tobytes() for x, y in zip(a.params, b.params))
    assert all(np.isfinite(p).all() for p in a.params)


def test_save_load_roundtrip(tmp_path):
    m = init_mlp([3, 4, 2], 0, "leaky_relu")
    h1 = save_mlp(tmp_path / "m", m)
    back = load_mlp(tmp_path / "m")
    assert back.sizes == m.sizes and back.activation == "leaky_relu"
    assert all(x.tobytes() == y.tobytes() for x, y in zip(back.params, m.params))
    assert save_mlp(tmp_path / "n", back) == h1
