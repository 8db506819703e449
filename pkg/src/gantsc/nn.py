"""Fully-connected networks with hand-written backprop, optimizers and distillation losses.

Loss functions accept a single logit vector (K,) or a batch (n, K). They
return the loss averaged over rows together with its gradient with respect
to the student logits, in the same shape as the input.
"""

from __future__ import annotations

import copy
import math
from dataclasses import dataclass, field

import numpy as np

from . import container

LEAKY_SLOPE = 0.2


class ShapeError(ValueError):
    pass


@dataclass
class MLP:
    sizes: list[int]
    weights: list[np.ndarray]  # (fan_in, fan_out) per layer
    biases: list[np.ndarray]
    activation: str = "relu"

    @property
    def params(self) -> list[np.ndarray]:
        out = []
        for W, b in zip(self.weights, self.biases):
            out += [W, b]
        return out

    def copy(self) -> "MLP":
        return copy.deepcopy(self)

    def _act(self, h):
        if self.activation == "relu":
            return np.maximum(h, 0.0)
        return np.where(h > 0, h, LEAKY_SLOPE * h)

    def _act_grad(self, h):
        if self.activation == "relu":
            return (h > 0).astype(h.dtype)
        return np.where(h > 0, 1.0, LEAKY_SLOPE)

    def forward_cache(self, X):
        X = np.asarray(X, dtype=np.float64)
        if X.shape[-1] != self.sizes[0]:
            raise ShapeError(f"network expects {self.sizes[0]} inputs, got {X.shape[-1]}")
        pre, a = [], X
        last = len(self.weights) - 1
        for i, (W, b) in enumerate(zip(self.weights, self.biases)):
            h = a @ W + b
            pre.append((a, h))
            a = h if i == last else self._act(h)
        return a, pre

    def forward(self, X) -> np.ndarray:
        X = np.asarray(X, dtype=np.float64)
        if X.ndim == 1:
            return self.forward_cache(X[None, :])[0][0]
        return self.forward_cache(X)[0]

    forward_batch = forward

    def backward(self, cache, grad_out) -> tuple[list[np.ndarray], np.ndarray]:
        """Parameter gradients (ordered like ``params``) and the input gradient."""
        grads = [None] * (2 * len(self.weights))
        g = grad_out
        for i in range(len(self.weights) - 1, -1, -1):
            a_in, h = cache[i]
            if i != len(self.weights) - 1:
                g = g * self._act_grad(h)
            grads[2 * i] = a_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            g = g @ self.weights[i].T
        return grads, g

    def n_parameters(self) -> int:
        return sum(p.size for p in self.params)


def init_mlp(sizes, seed_or_rng, activation: str = "relu") -> MLP:
    """Glorot-uniform weights, zero biases."""
    if activation not in ("relu", "leaky_relu"):
        raise ValueError(f"unknown activation {activation!r}")
    if len(sizes) < 2 or min(sizes) < 1:
        raise ShapeError("an MLP needs at least an input and an output layer of positive width")
    rng = np.random.default_rng(seed_or_rng)
    weights, biases = [], []
    for fan_in, fan_out in zip(sizes[:-1], sizes[1:]):
        lim = math.sqrt(6.0 / (fan_in + fan_out))
        weights.append(rng.uniform(-lim, lim, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MLP(list(sizes), weights, biases, activation)


def save_mlp(path, m: MLP, extra_meta: dict | None = None) -> str:
    meta, arrays = mlp_to_container(m)
    meta.update(extra_meta or {})
    return container.save(path, "mlp", meta, arrays)


def mlp_to_container(m: MLP, prefix: str = "") -> tuple[dict, dict]:
    arrays = {}
    for i, (W, b) in enumerate(zip(m.weights, m.biases)):
        arrays[f"{prefix}W{i}"] = W
        arrays[f"{prefix}b{i}"] = b
    return {"sizes": list(m.sizes), "activation": m.activation}, arrays


def mlp_from_container(meta: dict, arrays: dict, prefix: str = "") -> MLP:
    n = len(meta["sizes"]) - 1
    return MLP(list(meta["sizes"]), [arrays[f"{prefix}W{i}"] for i in range(n)],
               [arrays[f"{prefix}b{i}"] for i in range(n)], meta["activation"])


def load_mlp(path) -> MLP:
    _, meta, arrays = container.load(path, "mlp")
    return mlp_from_container(meta, arrays)


# -- softmax and losses -------------------------------------------------------

def log_softmax_T(z, T: float = 1.0) -> np.ndarray:
    if T <= 0:
        raise ValueError("temperature must be positive")
    s = np.asarray(z, dtype=np.float64) / T
    s = s - s.max(axis=-1, keepdims=True)
    return s - np.log(np.exp(s).sum(axis=-1, keepdims=True))


def softmax_T(z, T: float = 1.0) -> np.ndarray:
    if T <= 0:
        raise ValueError("temperature must be positive")
    s = np.asarray(z, dtype=np.float64) / T
    e = np.exp(s - s.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)


def _rows(a):
    a = np.asarray(a, dtype=np.float64)
    return a if a.ndim == 2 else a[None, :]


def _shape_like(grad, g):
    return grad if np.ndim(g) == 2 else grad[0]


def loss_l2_logits(g, z):
    """Squared L2 distance between student and teacher logits."""
    G, Z = _rows(g), _rows(z)
    if G.shape != Z.shape:
        raise ShapeError("student and teacher logits differ in shape")
    diff = G - Z
    n = G.shape[0]
    return float((diff * diff).sum() / n), _shape_like(2.0 * diff / n, g)


def loss_ce_distill(g, z, T: float):
    """Cross-entropy between the annealed teacher and annealed student distributions."""
    G, Z = _rows(g), _rows(z)
    q_t = softmax_T(Z, T)
    logq_s = log_softmax_T(G, T)
    n = G.shape[0]
    loss = -(q_t * logq_s).sum() / n
    grad = (np.exp(logq_s) - q_t) / (T * n)
    return float(loss), _shape_like(grad, g)


def loss_hard_ce(g, c):
    G = _rows(g)
    c = np.atleast_1d(np.asarray(c, dtype=np.intp))
    n = G.shape[0]
    logq = log_softmax_T(G, 1.0)
    loss = -logq[np.arange(n), c].sum() / n
    grad = np.exp(logq)
    grad[np.arange(n), c] -= 1.0
    return float(loss), _shape_like(grad / n, g)


def loss_prob_l2(g, p):
    """Squared L2 distance between the student's softmax and target probability vectors."""
    G, P = _rows(g), _rows(p)
    if G.shape != P.shape:
        raise ShapeError("student logits and target probabilities differ in shape")
    q = softmax_T(G)
    r = 2.0 * (q - P)
    n = G.shape[0]
    # softmax Jacobian-vector product: q * (r - <q, r>)
    grad = q * (r - (q * r).sum(axis=1, keepdims=True)) / n
    return float(((q - P) ** 2).sum() / n), _shape_like(grad, g)


def loss_combined(g, z, c, T: float, alpha: float):
    """alpha * distillation cross-entropy + (1 - alpha) * hard-label cross-entropy at T=1."""
    if not 0 < alpha <= 1:
        raise ValueError("alpha must lie in (0, 1]")
    lt, gt = loss_ce_distill(g, z, T)
    if alpha == 1:
        return lt, gt
    l0, g0 = loss_hard_ce(g, c)
    return alpha * lt + (1 - alpha) * l0, alpha * gt + (1 - alpha) * g0


# -- optimizers ---------------------------------------------------------------

@dataclass
class OptimizerConfig:
    name: str = "adam"
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    momentum: float = 0.0
    decay: float = 0.0  # sgd only: lr_t = lr / (1 + decay * t)


@dataclass
class AdamState:
    lr: float
    beta1: float
    beta2: float
    eps: float
    m: list = field(default_factory=list)
    v: list = field(default_factory=list)
    t: int = 0

    def step(self, params, grads):
        """In-place bias-corrected Adam update; returns ``params``."""
        if not self.m:
            self.m = [np.zeros_like(p) for p in params]
            self.v = [np.zeros_like(p) for p in params]
        if len(grads) != len(params) or any(p.shape != g.shape for p, g in zip(params, grads)):
            raise ShapeError("gradient shapes do not match parameters")
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * g * g
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)
        return params


@dataclass
class SGDState:
    lr: float
    momentum: float = 0.0
    decay: float = 0.0
    velocity: list = field(default_factory=list)
    t: int = 0

    def step(self, params, grads):
        if len(grads) != len(params) or any(p.shape != g.shape for p, g in zip(params, grads)):
            raise ShapeError("gradient shapes do not match parameters")
        if not self.velocity:
            self.velocity = [np.zeros_like(p) for p in params]
        lr = self.lr / (1.0 + self.decay * self.t)
        self.t += 1
        for p, g, vel in zip(params, grads, self.velocity):
            vel *= self.momentum
            vel -= lr * g
            p += vel
        return params


def make_optimizer(cfg: OptimizerConfig):
    if cfg.name == "adam":
        return AdamState(cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
    if cfg.name == "sgd":
        return SGDState(cfg.lr, cfg.momentum, cfg.decay)
    raise ValueError(f"unknown optimizer {cfg.name!r}")


def adam_step(state: AdamState, params, grads):
    return state.step(params, grads)


def sgd_step(state: SGDState, params, grads):
    return state.step(params, grads)


# -- training -----------------------------------------------------------------

def epoch_batches(n: int, batch_size: int, seed: int, epoch: int):
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    return [perm[i:i + batch_size] for i in range(0, n, batch_size)]


def accuracy(model: MLP, X, y) -> float:
    return float((model.forward(X).argmax(axis=1) == np.asarray(y)).mean())


def train_classifier(m: MLP, d, epochs: int, batch_size: int, optimizer: OptimizerConfig | None = None,
                     seed: int = 0, test=None, validation=None) -> tuple[MLP, list[dict]]:
    """Mini-batch hard-label cross-entropy training on a copy of ``m``.

    With ``validation`` the returned network is the epoch snapshot with the
    highest validation accuracy (earliest on ties).
    """
    m = m.copy()
    best, best_acc = m.copy(), -1.0
    opt = make_optimizer(optimizer or OptimizerConfig())
    X, y = d.features, d.labels
    history = []
    for epoch in range(epochs):
        total = 0.0
        for rows in epoch_batches(len(y), batch_size, seed, epoch):
            out, cache = m.forward_cache(X[rows])
            loss, grad = loss_hard_ce(out, y[rows])
            grads, _ = m.backward(cache, grad)
            opt.step(m.params, grads)
            total += loss * len(rows)
        rec = {"epoch": epoch + 1, "loss": total / len(y)}
        if test is not None:
            rec["test_accuracy"] = accuracy(m, test.features, test.labels)
        if validation is not None:
            rec["validation_accuracy"] = accuracy(m, validation.features, validation.labels)
            if rec["validation_accuracy"] > best_acc:
                best, best_acc = m.copy(), rec["validation_accuracy"]
        history.append(rec)
    return (best if validation is not None and epochs else m), history
