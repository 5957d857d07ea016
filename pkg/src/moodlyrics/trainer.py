"""Fine-tuning loop: AdamW with decoupled weight decay, per-batch linear
learning-rate decay without warmup, global-norm gradient clipping, and
best-validation checkpointing.

Epoch metrics are computed over the whole split in eval mode, so the
accuracy curves are well-defined. All randomness (shuffling, dropout)
derives from ``TrainConfig.seed``; two runs with identical seed, config,
and data produce identical histories and checkpoint bytes.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import _kernels
from .corpus import Corpus
from .errors import TrainerError
from .model import (
    Parameters,
    backward,
    cross_entropy,
    forward,
    is_decay_exempt,
    save_checkpoint,
)
from .tokenizer import EncodedExample, TokenizerConfig, Vocabulary, encode_corpus

HISTORY_HEADER = ["epoch", "train_loss", "train_acc", "val_loss", "val_acc"]


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 8
    learning_rate: float = 8e-5
    epochs: int = 100
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon: float = 1e-8
    max_grad_norm: float = 1.0
    seed: int = 42
    # optional per-class loss weights (Happy, Sad, Romantic, Relaxed);
    # None keeps the plain unweighted loss
    class_weights: tuple[float, float, float, float] | None = None

    def __post_init__(self):
        if self.batch_size < 1:
            raise TrainerError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.epochs < 1:
            raise TrainerError(f"epochs must be >= 1, got {self.epochs}")
        if self.learning_rate <= 0:
            raise TrainerError(f"learning_rate must be > 0, got {self.learning_rate}")
        if self.weight_decay < 0:
            raise TrainerError(f"weight_decay must be >= 0, got {self.weight_decay}")
        if not (0 < self.beta1 < 1 and 0 < self.beta2 < 1):
            raise TrainerError(f"betas must be in (0, 1), got {self.beta1}, {self.beta2}")
        if self.max_grad_norm <= 0:
            raise TrainerError(f"max_grad_norm must be > 0, got {self.max_grad_norm}")
        if self.class_weights is not None:
            if len(self.class_weights) != 4 or any(w <= 0 for w in self.class_weights):
                raise TrainerError(
                    f"class_weights needs 4 positive values, got {self.class_weights}"
                )


@dataclass
class AdamState:
    """First/second moment estimates and the shared step count."""

    m: dict[str, np.ndarray]
    v: dict[str, np.ndarray]
    step: int = 0


def init_adam_state(params: Parameters) -> AdamState:
    return AdamState(
        m={name: np.zeros_like(arr) for name, arr in params.items()},
        v={name: np.zeros_like(arr) for name, arr in params.items()},
    )


def adamw_step(
    params: Parameters,
    grads: dict[str, np.ndarray],
    state: AdamState,
    lr: float,
    config: TrainConfig,
) -> tuple[Parameters, AdamState]:
    """One AdamW update, in place. Weight decay is decoupled from the
    moments; layer-norm parameters and biases are exempt."""
    state.step += 1
    bias_c1 = 1.0 - config.beta1**state.step
    bias_c2 = 1.0 - config.beta2**state.step
    for name, arr in params.items():
        grad = grads[name]
        if not np.all(np.isfinite(grad)):
            raise TrainerError(f"non-finite gradient for {name} at step {state.step}")
        decay = 0.0 if is_decay_exempt(name, arr) else config.weight_decay
        _kernels.adamw_update(
            arr, grad, state.m[name], state.v[name],
            lr, config.beta1, config.beta2, config.epsilon, decay,
            bias_c1, bias_c2,
        )
    return params, state


def linear_schedule(step: int, total_steps: int, base_lr: float) -> float:
    """Linear decay from base_lr at step 0 to 0 at total_steps; no warmup."""
    if total_steps < 1:
        raise TrainerError(f"total_steps must be >= 1, got {total_steps}")
    if not 0 <= step <= total_steps:
        raise TrainerError(f"step {step} out of range [0, {total_steps}]")
    return base_lr * (1.0 - step / total_steps)


def clip_grad_norm(grads: dict[str, np.ndarray], max_norm: float) -> dict[str, np.ndarray]:
    """Scale all arrays by max_norm/norm when the global L2 norm exceeds
    max_norm; otherwise leave them untouched. In place."""
    total = 0.0
    for grad in grads.values():
        total += float(np.sum(np.asarray(grad, dtype=np.float64) ** 2))
    norm = math.sqrt(total)
    if norm > max_norm:
        scale = max_norm / norm
        for grad in grads.values():
            grad *= grad.dtype.type(scale)
    return grads


@dataclass
class TrainHistory:
    """Per-epoch metrics plus the 1-indexed best-validation epoch."""

    train_loss: list[float] = field(default_factory=list)
    train_acc: list[float] = field(default_factory=list)
    val_loss: list[float] = field(default_factory=list)
    val_acc: list[float] = field(default_factory=list)
    best_epoch: int = 0

    def __len__(self) -> int:
        return len(self.val_acc)

    def save_csv(self, path: str | Path) -> Path:
        path = Path(path)
        with path.open("w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(HISTORY_HEADER)
            for i in range(len(self)):
                writer.writerow(
                    [
                        i + 1,
                        repr(self.train_loss[i]),
                        repr(self.train_acc[i]),
                        repr(self.val_loss[i]),
                        repr(self.val_acc[i]),
                    ]
                )
        return path

    @classmethod
    def load_csv(cls, path: str | Path) -> "TrainHistory":
        history = cls()
        with Path(path).open(newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if header != HISTORY_HEADER:
                raise TrainerError(f"malformed history header: {header}")
            for row in reader:
                history.train_loss.append(float(row[1]))
                history.train_acc.append(float(row[2]))
                history.val_loss.append(float(row[3]))
                history.val_acc.append(float(row[4]))
        if history.val_acc:
            history.best_epoch = best_epoch_index(history.val_acc)
        return history


def best_epoch_index(val_accuracies: list[float]) -> int:
    """1-indexed epoch with the highest validation accuracy; first
    occurrence wins ties."""
    if not val_accuracies:
        raise TrainerError("no validation accuracies recorded")
    best = max(val_accuracies)
    return val_accuracies.index(best) + 1


def evaluate(
    params: Parameters, examples: list[EncodedExample], batch_size: int
) -> tuple[float, float]:
    """Mean loss and accuracy over a split, in eval mode."""
    if not examples:
        raise TrainerError("cannot evaluate an empty split")
    labels = np.array([ex.label for ex in examples], dtype=np.int64)
    loss_sum = 0.0
    correct = 0
    for start in range(0, len(examples), batch_size):
        chunk = examples[start : start + batch_size]
        chunk_labels = labels[start : start + len(chunk)]
        trace = forward(params, chunk, mode="eval")
        loss_sum += cross_entropy(trace.logits, chunk_labels) * len(chunk)
        correct += int((trace.logits.argmax(axis=1) == chunk_labels).sum())
    return loss_sum / len(examples), correct / len(examples)


def train(
    params: Parameters,
    train_corpus: Corpus,
    val_corpus: Corpus,
    vocab: Vocabulary,
    tokenizer_config: TokenizerConfig,
    train_config: TrainConfig,
    checkpoint_path: str | Path | None = None,
    log=None,
) -> tuple[Parameters, TrainHistory]:
    """Run the full fine-tuning recipe and return the best parameters.

    Shuffles per epoch, steps the schedule once per batch, clips before
    every update, and writes a checkpoint whenever validation accuracy
    strictly improves. ``log`` is an optional callable taking one line.
    """
    train_examples = encode_corpus(train_corpus, vocab, tokenizer_config)
    val_examples = encode_corpus(val_corpus, vocab, tokenizer_config)
    if not train_examples or not val_examples:
        raise TrainerError("train and validation splits must be nonempty")
    n = len(train_examples)
    batches_per_epoch = math.ceil(n / train_config.batch_size)
    total_steps = train_config.epochs * batches_per_epoch

    root = np.random.SeedSequence(train_config.seed)
    shuffle_seq, dropout_seq = root.spawn(2)
    shuffle_rng = np.random.default_rng(shuffle_seq)
    dropout_rng = np.random.default_rng(dropout_seq)

    state = init_adam_state(params)
    history = TrainHistory()
    best_acc = -1.0
    best_params = params.copy()
    step = 0
    for epoch in range(1, train_config.epochs + 1):
        perm = shuffle_rng.permutation(n)
        for start in range(0, n, train_config.batch_size):
            batch = [train_examples[j] for j in perm[start : start + train_config.batch_size]]
            labels = np.array([ex.label for ex in batch], dtype=np.int64)
            trace = forward(params, batch, mode="train", rng=dropout_rng)
            loss = cross_entropy(trace.logits, labels, train_config.class_weights)
            if not math.isfinite(loss):
                raise TrainerError(
                    f"non-finite loss {loss} at epoch {epoch}, step {step} "
                    f"(lr {linear_schedule(step, total_steps, train_config.learning_rate):.3g})"
                )
            grads = backward(params, trace, labels, train_config.class_weights)
            clip_grad_norm(grads, train_config.max_grad_norm)
            lr = linear_schedule(step, total_steps, train_config.learning_rate)
            adamw_step(params, grads, state, lr, train_config)
            step += 1
        train_loss, train_acc = evaluate(params, train_examples, train_config.batch_size)
        val_loss, val_acc = evaluate(params, val_examples, train_config.batch_size)
        history.train_loss.append(train_loss)
        history.train_acc.append(train_acc)
        history.val_loss.append(val_loss)
        history.val_acc.append(val_acc)
        if val_acc > best_acc:
            best_acc = val_acc
            best_params = params.copy()
            if checkpoint_path is not None:
                save_checkpoint(
                    checkpoint_path, best_params, vocab.sha256(), tokenizer_config
                )
        if log is not None:
            log(
                f"epoch {epoch}/{train_config.epochs} "
                f"train_loss={train_loss:.4f} train_acc={train_acc:.4f} "
                f"val_loss={val_loss:.4f} val_acc={val_acc:.4f}"
            )
    history.best_epoch = best_epoch_index(history.val_acc)
    return best_params, history
