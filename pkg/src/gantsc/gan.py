"""Auxiliary-classifier GAN for standardized tabular feature vectors.

The generator maps [noise, one-hot class] to a feature vector through an
MLP with a linear output. The discriminator is one MLP whose final affine
layer has 1 + K outputs: column 0 is the source logit (sigmoid gives
P(real | x)) and columns 1..K are class logits.

Both objectives are written as quantities to maximise::

    L_source = mean log P(real | x_real) + mean log P(fake | G(w, c))
    L_class  = mean log P(c | x_real)    + mean log P(c | G(w, c))

The discriminator ascends L_class + L_source, the generator L_class - L_source.
"""

from __future__ import annotations

from dataclasses import dataclass, field, asdict

import numpy as np

from . import container
from .data import Dataset, Scaler, class_prior, fit_scaler
from .nn import MLP, OptimizerConfig, epoch_batches, init_mlp, log_softmax_T, make_optimizer, \
    mlp_from_container, mlp_to_container


class GANDivergence(RuntimeError):
    pass


@dataclass
class GANConfig:
    noise_dim: int = 100
    hidden: list = field(default_factory=lambda: [50])
    activation: str = "relu"
    epochs: int = 300
    batch_size: int = 64
    d_steps: int = 1
    checkpoint_stride: int = 50
    lr: float = 2e-4
    beta1: float = 0.5
    beta2: float = 0.999
    eps: float = 1e-8
    # "minimax": generator ascends -log P(fake | G) exactly as in the objective above.
    # "nonsaturating": generator ascends log P(real | G) instead.
    generator_loss: str = "minimax"

    def __post_init__(self):
        if self.generator_loss not in ("minimax", "nonsaturating"):
            raise ValueError(f"unknown generator_loss {self.generator_loss!r}")
        if self.activation not in ("relu", "leaky_relu"):
            raise ValueError(f"unknown activation {self.activation!r}")
        if self.noise_dim < 1 or self.batch_size < 1 or self.d_steps < 1 or self.epochs < 0:
            raise ValueError("noise_dim, batch_size and d_steps must be >= 1 and epochs >= 0")

    def optimizer(self) -> OptimizerConfig:
        return OptimizerConfig("adam", self.lr, self.beta1, self.beta2, self.eps)


@dataclass
class SyntheticBatch:
    features: np.ndarray
    intended_classes: np.ndarray

    def __post_init__(self):
        if not np.all(np.isfinite(self.features)):
            raise GANDivergence("synthetic batch contains non-finite values")

    def __len__(self):
        return self.features.shape[0]


@dataclass
class ACGAN:
    generator: MLP
    discriminator: MLP
    noise_dim: int
    n_classes: int
    prior: np.ndarray
    scaler: Scaler
    config: GANConfig
    log: list = field(default_factory=list)
    checkpoints: list = field(default_factory=list)  # [(epoch, generator MLP)]
    tag: str = "trained"
    epochs_trained: int = 0

    @property
    def n_features(self) -> int:
        return self.generator.sizes[-1]

    def checkpoint(self, epoch: int) -> MLP:
        for e, g in self.checkpoints:
            if e == epoch:
                return g
        raise KeyError(f"no checkpoint at epoch {epoch}; have {[e for e, _ in self.checkpoints]}")


def init_acgan(n_features: int, n_classes: int, prior, scaler: Scaler, config: GANConfig, seed: int) -> ACGAN:
    g = init_mlp([config.noise_dim + n_classes, *config.hidden, n_features], [seed, 2], config.activation)
    d = init_mlp([n_features, *config.hidden, 1 + n_classes], [seed, 3], config.activation)
    return ACGAN(g, d, config.noise_dim, n_classes, np.asarray(prior, dtype=np.float64), scaler, config,
                 checkpoints=[(0, g.copy())])


def sample_noise(noise_dim: int, m: int, seed_or_rng) -> np.ndarray:
    if m < 1:
        raise ValueError("m must be >= 1")
    return np.random.default_rng(seed_or_rng).standard_normal((m, noise_dim))


def generator_input(noise, classes, n_classes):
    return np.hstack([noise, np.eye(n_classes)[classes]])


def _sample_classes(rng, prior, m):
    return rng.choice(len(prior), size=m, p=prior)


def generate(gan: ACGAN, m: int, seed, epoch: int | None = None) -> SyntheticBatch:
    """Draw m feature vectors in original (unscaled) units."""
    rng = np.random.default_rng(seed)
    classes = _sample_classes(rng, gan.prior, m)
    noise = sample_noise(gan.noise_dim, m, rng)
    g = gan.generator if epoch is None else gan.checkpoint(epoch)
    scaled = g.forward(generator_input(noise, classes, gan.n_classes))
    return SyntheticBatch(gan.scaler.inverse(scaled), classes)


# -- objectives ---------------------------------------------------------------

def _log_sigmoid(s):
    return -np.logaddexp(0.0, -s)


def _sigmoid(s):
    return np.exp(_log_sigmoid(s))


@dataclass
class DiscriminatorLosses:
    L_source: float
    L_class: float
    # gradients of each objective w.r.t. the discriminator outputs (rows x (1 + K))
    dsource_real: np.ndarray
    dsource_fake: np.ndarray
    dclass_real: np.ndarray
    dclass_fake: np.ndarray


def losses_from_outputs(out_real, c_real, out_fake, c_fake) -> DiscriminatorLosses:
    nr, nf = out_real.shape[0], out_fake.shape[0]
    s_r, s_f = out_real[:, 0], out_fake[:, 0]
    L_source = _log_sigmoid(s_r).mean() + _log_sigmoid(-s_f).mean()
    lr_ = log_softmax_T(out_real[:, 1:])
    lf_ = log_softmax_T(out_fake[:, 1:])
    L_class = lr_[np.arange(nr), c_real].mean() + lf_[np.arange(nf), c_fake].mean()

    dsr = np.zeros_like(out_real)
    dsr[:, 0] = _sigmoid(-s_r) / nr
    dsf = np.zeros_like(out_fake)
    dsf[:, 0] = -_sigmoid(s_f) / nf
    dcr = np.zeros_like(out_real)
    dcr[:, 1:] = -np.exp(lr_)
    dcr[np.arange(nr), 1 + c_real] += 1.0
    dcr /= nr
    dcf = np.zeros_like(out_fake)
    dcf[:, 1:] = -np.exp(lf_)
    dcf[np.arange(nf), 1 + c_fake] += 1.0
    dcf /= nf
    return DiscriminatorLosses(float(L_source), float(L_class), dsr, dsf, dcr, dcf)


def discriminator_losses(disc: MLP, x_real, c_real, x_fake, c_fake) -> DiscriminatorLosses:
    """Both objectives plus their gradients w.r.t. the discriminator outputs."""
    if len(x_real) == 0 or len(x_fake) == 0:
        raise ValueError("real and fake batches must be nonempty")
    return losses_from_outputs(disc.forward(x_real), np.asarray(c_real), disc.forward(x_fake),
                               np.asarray(c_fake))


def generator_objective(gan: ACGAN, noise, classes, x_real=None, c_real=None) -> float:
    """L_class - L_source for the minimax generator (real terms included when given)."""
    x_fake = gan.generator.forward(generator_input(noise, classes, gan.n_classes))
    out_f = gan.discriminator.forward(x_fake)
    val = log_softmax_T(out_f[:, 1:])[np.arange(len(classes)), classes].mean() - _log_sigmoid(-out_f[:, 0]).mean()
    if x_real is not None:
        out_r = gan.discriminator.forward(x_real)
        val += log_softmax_T(out_r[:, 1:])[np.arange(len(c_real)), c_real].mean() - _log_sigmoid(out_r[:, 0]).mean()
    return float(val)


# -- training -----------------------------------------------------------------

def _neg(grads):
    return [-g for g in grads]


def _d_step(gan, opt, xr, cr, xf, cf, use_source: bool):
    D = gan.discriminator
    out, cache = D.forward_cache(np.vstack([xr, xf]))
    nr = len(xr)
    L = losses_from_outputs(out[:nr], cr, out[nr:], cf)
    grad = np.vstack([L.dclass_real, L.dclass_fake])
    if use_source:
        grad = grad + np.vstack([L.dsource_real, L.dsource_fake])
    grads, _ = D.backward(cache, grad)
    opt.step(D.params, _neg(grads))
    return L


def generator_gradients(gan: ACGAN, noise, classes, use_source: bool = True):
    """Gradients of the generator's objective w.r.t. generator params (for ascent)."""
    G, D = gan.generator, gan.discriminator
    xf, gcache = G.forward_cache(generator_input(noise, classes, gan.n_classes))
    out, dcache = D.forward_cache(xf)
    n = len(classes)
    logq = log_softmax_T(out[:, 1:])
    dout = np.zeros_like(out)
    dout[:, 1:] = -np.exp(logq)
    dout[np.arange(n), 1 + classes] += 1.0
    if use_source:
        if gan.config.generator_loss == "minimax":
            dout[:, 0] = _sigmoid(out[:, 0])       # d/ds of -log(1 - sigmoid(s))
        else:
            dout[:, 0] = _sigmoid(-out[:, 0])      # d/ds of log sigmoid(s)
    _, dx = D.backward(dcache, dout / n)
    grads, _ = G.backward(gcache, dx)
    return grads


def _g_step(gan, opt, rng, n, use_source: bool):
    classes = _sample_classes(rng, gan.prior, n)
    noise = sample_noise(gan.noise_dim, n, rng)
    opt.step(gan.generator.params, _neg(generator_gradients(gan, noise, classes, use_source)))


def _run_epochs(gan: ACGAN, Xs, y, epochs, seed, use_source, stride, g_opt, d_opt, phase):
    rng = np.random.default_rng([seed, 1, gan.epochs_trained])
    B = gan.config.batch_size
    for _ in range(epochs):
        epoch = gan.epochs_trained
        sums = np.zeros(2)
        nb = 0
        for rows in epoch_batches(len(y), B, seed, epoch):
            for _ in range(gan.config.d_steps):
                cf = _sample_classes(rng, gan.prior, len(rows))
                xf = gan.generator.forward(generator_input(sample_noise(gan.noise_dim, len(rows), rng), cf,
                                                           gan.n_classes))
                L = _d_step(gan, d_opt, Xs[rows], y[rows], xf, cf, use_source)
            if not (np.isfinite(L.L_source) and np.isfinite(L.L_class)):
                raise GANDivergence(f"non-finite loss at epoch {epoch + 1}, batch {nb}: "
                                    f"L_source={L.L_source}, L_class={L.L_class}")
            _g_step(gan, g_opt, rng, len(rows), use_source)
            sums += (L.L_source, L.L_class)
            nb += 1
        if not all(np.all(np.isfinite(p)) for p in gan.generator.params + gan.discriminator.params):
            raise GANDivergence(f"non-finite parameters after epoch {epoch + 1}")
        gan.epochs_trained += 1
        gan.log.append({"epoch": gan.epochs_trained, "phase": phase,
                        "L_source": float(sums[0] / nb), "L_class": float(sums[1] / nb)})
        if stride and gan.epochs_trained % stride == 0:
            gan.checkpoints.append((gan.epochs_trained, gan.generator.copy()))


def train_acgan(d: Dataset, config: GANConfig | None = None, seed: int = 0, scaler: Scaler | None = None,
                epochs: int | None = None) -> ACGAN:
    """Alternate one discriminator and one generator ascent step per real batch."""
    config = config or GANConfig()
    epochs = config.epochs if epochs is None else epochs
    scaler = scaler or fit_scaler(d)
    gan = init_acgan(d.d, d.n_classes, class_prior(d), scaler, config, seed)
    g_opt = make_optimizer(config.optimizer())
    d_opt = make_optimizer(config.optimizer())
    _run_epochs(gan, scaler.transform(d.features), d.labels, epochs, seed, True, config.checkpoint_stride,
                g_opt, d_opt, "adversarial")
    if gan.checkpoints[-1][0] != gan.epochs_trained:
        gan.checkpoints.append((gan.epochs_trained, gan.generator.copy()))
    return gan


def degrade_acgan(gan: ACGAN, extra_epochs: int, d: Dataset, seed: int) -> ACGAN:
    """Continue training both networks on the class objective alone."""
    out = ACGAN(gan.generator.copy(), gan.discriminator.copy(), gan.noise_dim, gan.n_classes, gan.prior.copy(),
                gan.scaler, gan.config, list(gan.log), list(gan.checkpoints), gan.tag, gan.epochs_trained)
    if extra_epochs == 0:
        return out
    out.tag = "inferior"
    g_opt = make_optimizer(gan.config.optimizer())
    d_opt = make_optimizer(gan.config.optimizer())
    _run_epochs(out, gan.scaler.transform(d.features), d.labels, extra_epochs, seed, False, 0, g_opt, d_opt,
                "class-only")
    return out


def at_checkpoint(gan: ACGAN, epoch: int) -> ACGAN:
    """Copy of ``gan`` whose generator is the snapshot saved after ``epoch`` epochs."""
    g = gan.checkpoint(epoch).copy()
    return ACGAN(g, gan.discriminator.copy(), gan.noise_dim, gan.n_classes, gan.prior.copy(), gan.scaler,
                 gan.config, list(gan.log), list(gan.checkpoints), gan.tag, epoch)


# -- persistence --------------------------------------------------------------

def save_acgan(path, gan: ACGAN) -> str:
    gmeta, arrays = mlp_to_container(gan.generator, "G_")
    dmeta, darr = mlp_to_container(gan.discriminator, "D_")
    arrays.update(darr)
    arrays.update(gan.scaler.to_arrays())
    arrays["prior"] = gan.prior
    for e, g in gan.checkpoints:
        arrays.update(mlp_to_container(g, f"ckpt{e}_")[1])
    meta = {"generator": gmeta, "discriminator": dmeta, "noise_dim": gan.noise_dim, "n_classes": gan.n_classes,
            "config": asdict(gan.config), "log": gan.log, "checkpoint_epochs": [e for e, _ in gan.checkpoints],
            "tag": gan.tag, "epochs_trained": gan.epochs_trained}
    return container.save(path, "acgan", meta, arrays)


def load_acgan(path) -> ACGAN:
    _, meta, arrays = container.load(path, "acgan")
    g = mlp_from_container(meta["generator"], arrays, "G_")
    ckpts = [(e, mlp_from_container(meta["generator"], arrays, f"ckpt{e}_")) for e in meta["checkpoint_epochs"]]
    return ACGAN(g, mlp_from_container(meta["discriminator"], arrays, "D_"), meta["noise_dim"], meta["n_classes"],
                 arrays["prior"], Scaler.from_arrays(arrays), GANConfig(**meta["config"]), meta["log"], ckpts,
                 meta["tag"], meta["epochs_trained"])
