"""Self-supervised training of the density-matrix estimator.

Loss functions take a batch of model outputs rho and snapshot labels sigma^s
and return the scalar plus per-sample matrix sensitivities dL/drho under the
pairing dL = Re Tr(dL/drho . drho).  The optimizer is AdamW with decoupled
weight decay (weights only, never biases or LayerNorm), warmup + cosine
learning-rate schedule and global-norm gradient clipping.  Training is
full batch: one optimizer step per epoch.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from threadpoolctl import threadpool_limits

from . import model as nn
from .errors import EmptyBatch, NumericalFailure
from .seeding import derive_rng

# Records per forward/backward slice inside an epoch.  Masks are drawn for
# the full batch up front, so the noise a record sees is chunking-free;
# gradient accumulation order is not (float rounding), which is why this is
# a fixed constant.  Small enough that a chunk's activations stay
# cache-resident.
CHUNK_SIZE = 512


@dataclass(frozen=True)
class TrainConfig:
    loss_kind: str = "main"
    lr_init: float = 5e-4
    lr_min: float = 1e-5
    weight_decay: float = 0.01
    warmup_fraction: float = 0.10
    clip_norm: float = 1.0
    epochs: int = 500
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    seed: int = 0
    # float32 halves the memory traffic of an epoch (the loop is bandwidth
    # bound); gradient-exactness tests always run in the float64 default.
    dtype: str = "float64"

    def __post_init__(self):
        if not 0 <= self.warmup_fraction < 1:
            raise ValueError(f"warmup_fraction must be in [0, 1), got {self.warmup_fraction}")
        if min(self.lr_init, self.lr_min) <= 0 or self.clip_norm <= 0:
            raise ValueError("rates and clip threshold must be positive")
        if self.loss_kind not in ("main", "l1"):
            raise ValueError(f"unknown loss_kind {self.loss_kind!r}")
        if self.dtype not in ("float64", "float32"):
            raise ValueError(f"dtype must be float64 or float32, got {self.dtype!r}")


def loss_main(rho_batch: np.ndarray, snapshot_batch: np.ndarray, *,
              batch_denominator: int | None = None):
    """-E[2 Tr(rho sigma^s) - Tr(rho^2)]; gradient -(2 sigma^s - 2 rho)/N per sample.

    ``batch_denominator`` lets chunked callers keep the 1/N of the full batch;
    the scalar is then this chunk's contribution to the full-batch mean.
    """
    rho = np.asarray(rho_batch)
    snap = np.asarray(snapshot_batch)
    if rho.ndim == 2:
        rho, snap = rho[None], snap[None]
    if rho.shape[0] == 0:
        raise EmptyBatch("loss over an empty batch")
    n = batch_denominator if batch_denominator is not None else rho.shape[0]
    overlap = np.einsum("nij,nji->n", rho, snap).real
    purity = np.einsum("nij,nji->n", rho, rho).real
    scalar = -float((2 * overlap - purity).sum() / n)
    return scalar, -(2 * snap - 2 * rho) / n


def loss_l1(rho_batch: np.ndarray, snapshot_batch: np.ndarray, *,
            batch_denominator: int | None = None):
    """-E[Tr(rho sigma^s)]; gradient -sigma^s/N per sample."""
    rho = np.asarray(rho_batch)
    snap = np.asarray(snapshot_batch)
    if rho.ndim == 2:
        rho, snap = rho[None], snap[None]
    if rho.shape[0] == 0:
        raise EmptyBatch("loss over an empty batch")
    n = batch_denominator if batch_denominator is not None else rho.shape[0]
    overlap = np.einsum("nij,nji->n", rho, snap).real
    return -float(overlap.sum() / n), -snap / n


LOSSES = {"main": loss_main, "l1": loss_l1}


def lr_at_step(config: TrainConfig, step: int, total_steps: int) -> float:
    """Linear warmup over floor(warmup_fraction * total) steps, then cosine
    annealing from lr_init down to lr_min."""
    if not 0 <= step < total_steps:
        raise ValueError(f"step {step} outside [0, {total_steps})")
    warm = int(math.floor(config.warmup_fraction * total_steps))
    if step < warm:
        return config.lr_init * (step + 1) / warm
    progress = (step - warm) / (total_steps - warm)
    return config.lr_min + (config.lr_init - config.lr_min) * 0.5 * (
        1 + math.cos(math.pi * progress))


def global_norm(grads: dict[str, np.ndarray]) -> float:
    return math.sqrt(sum(float(np.vdot(g, g).real) for g in grads.values()))


def clip_global_norm(grads: dict[str, np.ndarray], threshold: float) -> dict[str, np.ndarray]:
    """Scale all gradients by threshold/norm when the global norm exceeds it."""
    norm = global_norm(grads)
    if norm > threshold:
        factor = threshold / norm
        for g in grads.values():
            g *= factor
    return grads


def init_moments(params: dict[str, np.ndarray]):
    return ({k: np.zeros_like(v) for k, v in params.items()},
            {k: np.zeros_like(v) for k, v in params.items()})


def adamw_step(params: dict, grads: dict, moments, step: int, lr: float,
               config: TrainConfig):
    """One AdamW update (in place).  Decoupled decay p -= lr*wd*p touches only
    decayable parameters, then the bias-corrected Adam update is applied.
    ``step`` is 1-based.
    """
    m, v = moments
    b1, b2 = config.adam_beta1, config.adam_beta2
    c1 = 1 - b1**step
    c2 = 1 - b2**step
    for name, p in params.items():
        g = grads[name]
        m[name] = b1 * m[name] + (1 - b1) * g
        v[name] = b2 * v[name] + (1 - b2) * g * g
        if config.weight_decay and nn.is_decayable(name):
            p -= lr * config.weight_decay * p
        p -= lr * (m[name] / c1) / (np.sqrt(v[name] / c2) + config.adam_eps)
    return params, (m, v)


@dataclass
class TrainReport:
    loss_history: list[float]
    params: dict[str, np.ndarray]
    lr_trace: list[float]
    grad_norm_trace: list[float]
    model_config: nn.ModelConfig | None = None
    train_config: TrainConfig | None = None

    @property
    def final_loss(self) -> float:
        return self.loss_history[-1]


def train(tokens: np.ndarray, snapshots: np.ndarray, model_config: nn.ModelConfig,
          train_config: TrainConfig) -> TrainReport:
    """Full-batch training: one clipped AdamW step per epoch over the whole
    dataset, fresh dropout masks each epoch, loss_history recording the
    pre-step train-mode loss.  Deterministic given train_config.seed.
    """
    tokens = np.asarray(tokens, dtype=np.int64)
    real_dtype = np.dtype(train_config.dtype)
    cplx_dtype = np.complex64 if real_dtype == np.float32 else np.complex128
    snapshots = np.asarray(snapshots, dtype=cplx_dtype)
    n, s = tokens.shape
    if n == 0:
        raise EmptyBatch("training dataset is empty")
    loss_fn = LOSSES[train_config.loss_kind]
    params = nn.init_params(model_config, derive_rng(train_config.seed, "init"),
                            dtype=real_dtype)
    moments = init_moments(params)
    losses, lrs, norms = [], [], []
    with threadpool_limits(limits=1, user_api="blas"):
        _train_epochs(tokens, snapshots, model_config, train_config, loss_fn,
                      params, moments, losses, lrs, norms)
    return TrainReport(losses, params, lrs, norms, model_config, train_config)


def _train_epochs(tokens, snapshots, model_config, train_config, loss_fn,
                  params, moments, losses, lrs, norms):
    # threaded BLAS loses badly on this workload's small matrices, so the
    # caller pins the pool to one thread
    n, s = tokens.shape
    for epoch in range(train_config.epochs):
        masks = nn.generate_dropout_masks(
            model_config, n, s, derive_rng(train_config.seed, "dropout", epoch))
        epoch_loss = 0.0
        grads = {k: np.zeros_like(p) for k, p in params.items()}
        try:
            for start in range(0, n, CHUNK_SIZE):
                stop = min(start + CHUNK_SIZE, n)
                rho, cache = nn.forward_batch(
                    params, model_config, tokens[start:stop],
                    masks=nn.slice_masks(masks, start, stop), keep_cache=True)
                part, g_rho = loss_fn(rho, snapshots[start:stop], batch_denominator=n)
                epoch_loss += part
                for name, g in nn.backward_batch(params, model_config, cache, g_rho).items():
                    grads[name] += g
        except NumericalFailure as exc:
            raise NumericalFailure(f"epoch {epoch}: {exc}") from exc
        norm = global_norm(grads)
        clip_global_norm(grads, train_config.clip_norm)
        lr = lr_at_step(train_config, epoch, train_config.epochs)
        adamw_step(params, grads, moments, epoch + 1, lr, train_config)
        losses.append(epoch_loss)
        lrs.append(lr)
        norms.append(norm)


def train_config_with(base: TrainConfig | None = None, **overrides) -> TrainConfig:
    return replace(base if base is not None else TrainConfig(), **overrides)
