"""Adam with coupled L2, step-decayed learning rate, early stopping, and ``fit``."""

import copy
import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .model import (
    TRAIN,
    VALIDATION,
    ModelConfig,
    ModelParameters,
    SequenceSample,
    batch_loss,
    forward_batch,
    init_parameters,
    stack_samples,
)
from .numeric import bce_mean

log = logging.getLogger(__name__)


@dataclass
class TrainConfig:
    base_lr: float = 0.01
    decay_gamma: float = 0.9
    decay_every: int = 5
    l2_penalty: float = 2.5e-6
    patience: int = 16
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_epsilon: float = 1e-8
    batch_size: int = 64
    max_epochs: int = 500
    seed: int = 0
    clip_norm: Optional[float] = None

    def __post_init__(self):
        if not self.base_lr > 0:
            raise ValueError("base_lr must be > 0")
        if not 0 < self.decay_gamma <= 1:
            raise ValueError("decay_gamma must be in (0, 1]")
        if self.patience < 1 or self.decay_every < 1 or self.batch_size < 1 or self.max_epochs < 1:
            raise ValueError("patience, decay_every, batch_size and max_epochs must be >= 1")
        if self.l2_penalty < 0:
            raise ValueError("l2_penalty must be >= 0")

    def to_dict(self) -> dict:
        return asdict(self)


def lr_at_epoch(epoch: int, config: TrainConfig) -> float:
    """``base_lr * gamma ** (epoch // decay_every)`` with 0-based epochs."""
    if epoch < 0:
        raise ValueError("epoch must be >= 0")
    return config.base_lr * config.decay_gamma ** (epoch // config.decay_every)


@dataclass
class AdamState:
    m: Dict[str, np.ndarray] = field(default_factory=dict)
    v: Dict[str, np.ndarray] = field(default_factory=dict)
    t: int = 0

    @classmethod
    def zeros_like(cls, params: ModelParameters) -> "AdamState":
        return cls(
            m={k: np.zeros_like(p) for k, p in params.items()},
            v={k: np.zeros_like(p) for k, p in params.items()},
        )


def adam_step(params: ModelParameters, grads, state: AdamState, lr: float, config: TrainConfig) -> None:
    """In-place Adam update with the L2 penalty added to the gradient first."""
    if not lr > 0:
        raise ValueError("lr must be > 0")
    for name in sorted(params):
        if not np.all(np.isfinite(grads[name])):
            raise FloatingPointError(f"non-finite gradient for {name}")
    state.t += 1
    b1, b2 = config.adam_beta1, config.adam_beta2
    bc1 = 1.0 - b1**state.t
    bc2 = 1.0 - b2**state.t
    for name in sorted(params):
        theta = params[name]
        g = grads[name] + config.l2_penalty * theta
        m = state.m.setdefault(name, np.zeros_like(theta))
        v = state.v.setdefault(name, np.zeros_like(theta))
        m[...] = b1 * m + (1.0 - b1) * g
        v[...] = b2 * v + (1.0 - b2) * g * g
        m_hat = m / bc1
        v_hat = v / bc2
        theta -= lr * m_hat / (np.sqrt(v_hat) + config.adam_epsilon)


def clip_by_global_norm(grads, max_norm: float) -> float:
    norm = math.sqrt(sum(float(np.sum(g * g)) for _, g in sorted(grads.items())))
    if norm > max_norm:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


class EarlyStopController:
    """Tracks the best validation loss; signals a halt after ``patience`` flat epochs."""

    def __init__(self, patience: int):
        self.patience = patience
        self.best_loss = math.inf
        self.best_epoch = -1
        self.epochs_since_improvement = 0
        self.best_params: Optional[ModelParameters] = None

    def update(self, epoch: int, val_loss: float, params: Optional[ModelParameters] = None) -> bool:
        """Record one epoch; returns True when training should halt."""
        if not math.isfinite(val_loss):
            raise FloatingPointError(f"non-finite validation loss at epoch {epoch}")
        if val_loss < self.best_loss:
            self.best_loss = val_loss
            self.best_epoch = epoch
            self.epochs_since_improvement = 0
            if params is not None:
                self.best_params = copy.deepcopy(params)
            return False
        self.epochs_since_improvement += 1
        return self.epochs_since_improvement >= self.patience

    def restore(self, params: ModelParameters) -> None:
        if self.best_params is None:
            return
        for name, value in self.best_params.items():
            params[name][...] = value


def early_stop_update(controller: EarlyStopController, epoch: int, val_loss: float, params=None):
    """Functional wrapper: ``("continue", None)`` or ``("halt", best_epoch)``.

    On halt the best snapshot is copied back into ``params``.
    """
    if controller.update(epoch, val_loss, params):
        if params is not None:
            controller.restore(params)
        return "halt", controller.best_epoch
    return "continue", None


@dataclass
class EpochRecord:
    epoch: int
    lr: float
    train_loss: float
    val_loss: float
    is_best: bool


@dataclass
class TrainingHistory:
    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = -1
    halted_early: bool = False

    def to_csv(self) -> str:
        lines = ["epoch,lr,train_loss,val_loss,is_best"]
        for r in self.records:
            lines.append(f"{r.epoch},{r.lr!r},{r.train_loss!r},{r.val_loss!r},{int(r.is_best)}")
        return "\n".join(lines) + "\n"


def train_prefix_length(samples: Sequence[SequenceSample]) -> int:
    """Number of leading months tagged train; all train months must precede the rest."""
    split = samples[0].split
    n = int(np.count_nonzero(split == TRAIN))
    if n == 0:
        raise ValueError("dataset has no train months")
    if np.any(split[:n] != TRAIN):
        raise ValueError("train months must form a chronological prefix")
    for s in samples:
        if not np.array_equal(s.split, split):
            raise ValueError("all samples must share one split layout")
    return n


def evaluate_loss(samples: Sequence[SequenceSample], params: ModelParameters, split: int, batch_size: int = 256) -> float:
    """Mean BCE over all months tagged ``split``, running each full sequence."""
    total, count = 0.0, 0
    for start in range(0, len(samples), batch_size):
        features, cats, labels, tags = stack_samples(samples[start : start + batch_size])
        logits, _ = forward_batch(features, cats, params)
        mask = tags == split
        n = int(np.count_nonzero(mask))
        if n:
            total += bce_mean(logits, labels, mask) * n
            count += n
    if count == 0:
        raise ValueError("empty loss window")
    return total / count


def fit(
    samples: Sequence[SequenceSample],
    model_config: ModelConfig,
    train_config: TrainConfig,
    params: Optional[ModelParameters] = None,
):
    """Train with mini-batches of full train-prefix sequences.

    Each epoch shuffles playa order with ``default_rng([seed, epoch])``, takes
    one Adam step per batch at ``lr_at_epoch``, then scores the full-sequence
    validation loss for early stopping. Returns ``(params, history)`` with the
    best-epoch parameters restored.
    """
    samples = list(samples)
    n_train = train_prefix_length(samples)
    if not np.any(samples[0].split == VALIDATION):
        raise ValueError("dataset has no validation months")
    if params is None:
        params = init_parameters(model_config, train_config.seed)
    state = AdamState.zeros_like(params)
    stopper = EarlyStopController(train_config.patience)
    history = TrainingHistory()

    for epoch in range(train_config.max_epochs):
        lr = lr_at_epoch(epoch, train_config)
        order = np.random.default_rng([train_config.seed, epoch]).permutation(len(samples))
        total, count = 0.0, 0
        for b, start in enumerate(range(0, len(order), train_config.batch_size)):
            batch = [samples[i] for i in order[start : start + train_config.batch_size]]
            loss, grads = batch_loss(batch, params, TRAIN, stop=n_train)
            if not math.isfinite(loss):
                raise FloatingPointError(f"training diverged at epoch {epoch}, batch {b}")
            if train_config.clip_norm is not None:
                clip_by_global_norm(grads, train_config.clip_norm)
            try:
                adam_step(params, grads, state, lr, train_config)
            except FloatingPointError as exc:
                raise FloatingPointError(f"training diverged at epoch {epoch}, batch {b}: {exc}") from None
            total += loss * len(batch)
            count += len(batch)
        train_loss = total / count
        val_loss = evaluate_loss(samples, params, VALIDATION)
        halted = stopper.update(epoch, val_loss, params)
        history.records.append(EpochRecord(epoch, lr, train_loss, val_loss, stopper.best_epoch == epoch))
        log.debug("epoch %d lr %.3g train %.5f val %.5f", epoch, lr, train_loss, val_loss)
        if halted:
            history.halted_early = True
            break

    stopper.restore(params)
    history.best_epoch = stopper.best_epoch
    return params, history
