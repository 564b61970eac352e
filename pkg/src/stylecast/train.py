"""Optimizers, epoch loops, and metrics for the generator and classifier.

Both paths share the same machinery: deterministic shuffle/split, batch
loss graph, backward, global-norm clip, SGD or AdamW step, per-epoch
validation metrics, best-checkpoint retention, optional early stop.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import text
from .model import ModelConfig, clf_forward, lm_forward
from .style import CorpusStats, StyleSpec
from .tensor import Tensor, add, concat_rows, cross_entropy_mean, reshape, scale, slice_rows
from .text import split_shuffled


class TrainError(ValueError):
    pass


@dataclass
class TrainConfig:
    optimizer: str = "adamw"
    learning_rate: float = 3e-4
    batch_size: int = 32
    epochs: int = 3
    split_ratio: float = 0.9
    seed: int = 0
    weight_decay: float = 0.01
    grad_clip_norm: float = 1.0
    early_stop_patience: int | None = 3

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise TrainError(f"learning_rate must be positive, got {self.learning_rate}")
        if not 0.0 < self.split_ratio < 1.0:
            raise TrainError(f"split_ratio must lie in (0, 1), got {self.split_ratio}")
        if self.optimizer not in ("sgd", "adamw"):
            raise TrainError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class MetricsLog:
    """Per-epoch (epoch, split, metric, value) records."""

    rows: list[tuple[int, str, str, float]] = field(default_factory=list)

    def add(self, epoch: int, split: str, metric: str, value: float) -> None:
        self.rows.append((epoch, split, metric, float(value)))

    def series(self, split: str, metric: str) -> list[float]:
        return [v for e, s, m, v in self.rows if s == split and m == metric]

    def to_csv(self, config_hash: str | None = None) -> str:
        lines = []
        if config_hash:
            lines.append(f"# config={config_hash}")
        lines.append("epoch,split,metric,value")
        for e, s, m, v in self.rows:
            lines.append(f"{e},{s},{m},{v!r}")
        return "\n".join(lines) + "\n"


@dataclass
class LmSample:
    ids: list[int]
    spec: StyleSpec | None = None


@dataclass
class ClfSample:
    ids: list[int]
    label: int


def lm_samples_from_articles(articles, vocab, max_len: int = text.LINE_LEN,
                             styled: bool = True) -> list[LmSample]:
    return [LmSample(text.format_article(a, vocab, max_len),
                     StyleSpec(a.label, a.release_time) if styled else None)
            for a in articles]


def clf_samples_from_articles(articles, vocab, max_len: int = text.TITLE_LEN) -> list[ClfSample]:
    return [ClfSample(text.encode_title(a.main_title, vocab, max_len), a.label)
            for a in articles]


def corpus_stats(articles, n_sections: int) -> CorpusStats:
    times = [a.release_time for a in articles]
    return CorpusStats(n_sections=n_sections, t_min=min(times), t_max=max(times))


# -- optimizers -------------------------------------------------------------------


def sgd_step(params: dict[str, Tensor], lr: float) -> None:
    """p <- p - lr * g, elementwise."""
    for name, p in params.items():
        if p.grad is None:
            raise TrainError(f"sgd_step: parameter {name!r} has no gradient")
        p.data -= (lr * p.grad).astype(p.data.dtype)


class AdamWState:
    """First/second moment accumulators plus the shared step counter."""

    def __init__(self) -> None:
        self.t = 0
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}


def adamw_step(params: dict[str, Tensor], state: AdamWState, lr: float,
               beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8,
               weight_decay: float = 0.0) -> None:
    """Bias-corrected Adam update plus decoupled decay p <- p - lr*wd*p."""
    if state is None:
        raise TrainError("adamw_step: optimizer state is required")
    state.t += 1
    bc1 = 1.0 - beta1 ** state.t
    bc2 = 1.0 - beta2 ** state.t
    for name, p in params.items():
        if p.grad is None:
            raise TrainError(f"adamw_step: parameter {name!r} has no gradient")
        g = p.grad
        if name not in state.m:
            state.m[name] = np.zeros_like(p.data)
            state.v[name] = np.zeros_like(p.data)
        m, v = state.m[name], state.v[name]
        m *= beta1
        m += (1.0 - beta1) * g
        v *= beta2
        v += (1.0 - beta2) * g * g
        update = (m / bc1) / (np.sqrt(v / bc2) + eps)
        if weight_decay:
            p.data -= (lr * weight_decay) * p.data
        p.data -= (lr * update).astype(p.data.dtype)


def clip_gradients(params: dict[str, Tensor], max_norm: float | None) -> float:
    """Scale all gradients so the global norm is at most max_norm; return the pre-clip norm."""
    sq = 0.0
    for p in params.values():
        if p.grad is not None:
            sq += float(np.sum(p.grad.astype(np.float64) ** 2))
    norm = math.sqrt(sq)
    if max_norm is not None and norm > max_norm > 0.0:
        factor = max_norm / norm
        for p in params.values():
            if p.grad is not None:
                p.grad *= factor
    return norm


def zero_gradients(params: dict[str, Tensor]) -> None:
    for p in params.values():
        p.grad = None


def perplexity(mean_loss: float) -> float:
    """exp(mean cross-entropy per predicted token)."""
    if mean_loss < 0:
        raise TrainError(f"mean loss must be nonnegative, got {mean_loss}")
    return math.exp(mean_loss)


# -- language model ---------------------------------------------------------------


def lm_batch_loss(params: dict[str, Tensor], config: ModelConfig,
                  batch: list[LmSample], stats: CorpusStats | None,
                  train: bool = False, rng: np.random.Generator | None = None) -> Tensor:
    """Mean over the batch of per-sequence next-token cross-entropy, pads ignored."""
    losses = []
    for sample in batch:
        t = len(sample.ids)
        logits = lm_forward(params, config, sample.ids, sample.spec, stats,
                            train=train, rng=rng)
        losses.append(cross_entropy_mean(slice_rows(logits, 0, t - 1),
                                         sample.ids[1:], ignore_id=text.PAD))
    total = losses[0]
    for extra in losses[1:]:
        total = add(total, extra)
    return scale(total, 1.0 / len(losses))


def evaluate_lm(params: dict[str, Tensor], config: ModelConfig,
                samples: list[LmSample], stats: CorpusStats | None) -> tuple[float, float]:
    """Per-token mean loss over all non-pad targets, and its perplexity."""
    if not samples:
        raise TrainError("evaluate_lm: empty sample set")
    total = 0.0
    count = 0
    for sample in samples:
        logits = lm_forward(params, config, sample.ids, sample.spec, stats).data
        z = logits[:-1].astype(np.float64)
        tgt = np.asarray(sample.ids[1:], dtype=np.int64)
        keep = tgt != text.PAD
        if not keep.any():
            continue
        zmax = z.max(axis=-1, keepdims=True)
        lse = zmax[:, 0] + np.log(np.exp(z - zmax).sum(axis=-1))
        per = lse - z[np.arange(len(tgt)), tgt]
        total += float(per[keep].sum())
        count += int(keep.sum())
    if count == 0:
        raise TrainError("evaluate_lm: no non-pad targets")
    mean = total / count
    return mean, perplexity(mean)


def _optimizer_step(params: dict[str, Tensor], cfg: TrainConfig, state: AdamWState) -> None:
    if cfg.optimizer == "sgd":
        sgd_step(params, cfg.learning_rate)
    else:
        adamw_step(params, state, cfg.learning_rate, weight_decay=cfg.weight_decay)


def _snapshot(params: dict[str, Tensor]) -> dict[str, Tensor]:
    return {k: Tensor(v.data.copy(), requires_grad=True) for k, v in params.items()}


def _check_finite(params: dict[str, Tensor]) -> None:
    for name, p in params.items():
        if not np.all(np.isfinite(p.data)):
            raise TrainError(f"parameter {name!r} became non-finite during training")


def train_lm(samples: list[LmSample], params: dict[str, Tensor], config: ModelConfig,
             cfg: TrainConfig, stats: CorpusStats | None = None,
             max_steps: int | None = None) -> tuple[dict[str, Tensor], MetricsLog]:
    """Teacher-forced next-char training with per-epoch validation metrics.

    Splits samples per cfg.split_ratio/seed, retains the best-validation
    parameters, and stops early once validation loss has not improved for
    early_stop_patience consecutive epochs (None disables).
    """
    if not samples:
        raise TrainError("train_lm: empty corpus")
    train_set, val_set = split_shuffled(samples, cfg.split_ratio, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    state = AdamWState()
    log = MetricsLog()
    best = _snapshot(params)
    best_val = math.inf
    since_best = 0
    steps = 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.monotonic()
        order = rng.permutation(len(train_set))
        epoch_losses = []
        for lo in range(0, len(train_set), cfg.batch_size):
            batch = [train_set[i] for i in order[lo:lo + cfg.batch_size]]
            zero_gradients(params)
            loss = lm_batch_loss(params, config, batch, stats, train=True, rng=rng)
            loss.backward()
            clip_gradients(params, cfg.grad_clip_norm)
            _optimizer_step(params, cfg, state)
            _check_finite(params)
            epoch_losses.append(loss.item())
            steps += 1
            if max_steps is not None and steps >= max_steps:
                break
        val_loss, val_ppl = evaluate_lm(params, config, val_set, stats)
        log.add(epoch, "train", "loss", float(np.mean(epoch_losses)))
        log.add(epoch, "val", "loss", val_loss)
        log.add(epoch, "val", "perplexity", val_ppl)
        log.add(epoch, "train", "wall_time", time.monotonic() - t0)
        if val_loss < best_val:
            best_val = val_loss
            best = _snapshot(params)
            since_best = 0
        else:
            since_best += 1
            if cfg.early_stop_patience is not None and since_best >= cfg.early_stop_patience:
                break
        if max_steps is not None and steps >= max_steps:
            break
    return best, log


# -- classifier -------------------------------------------------------------------


def clf_batch_loss(params: dict[str, Tensor], config: ModelConfig,
                   batch: list[ClfSample], train: bool = False,
                   rng: np.random.Generator | None = None) -> Tensor:
    rows = [reshape(clf_forward(params, config, s.ids, train=train, rng=rng),
                    (1, config.n_sections)) for s in batch]
    return cross_entropy_mean(concat_rows(rows), [s.label for s in batch])


def evaluate_accuracy(params: dict[str, Tensor], config: ModelConfig,
                      samples: list[ClfSample]) -> tuple[float, np.ndarray]:
    """Argmax accuracy plus an S x S confusion matrix (rows = true label)."""
    if not samples:
        raise TrainError("evaluate_accuracy: empty sample set")
    s = config.n_sections
    confusion = np.zeros((s, s), dtype=np.int64)
    correct = 0
    for sample in samples:
        pred = int(np.argmax(clf_forward(params, config, sample.ids).data))
        confusion[sample.label, pred] += 1
        correct += int(pred == sample.label)
    return correct / len(samples), confusion


def fine_tune_classifier(samples: list[ClfSample], params: dict[str, Tensor],
                         config: ModelConfig, cfg: TrainConfig,
                         freeze_backbone: bool = False) -> tuple[dict[str, Tensor], MetricsLog]:
    """Cross-entropy fine-tuning over section labels; best validation accuracy kept."""
    if len({s.label for s in samples}) < 2:
        raise TrainError("classifier training needs at least 2 distinct labels")
    train_set, val_set = split_shuffled(samples, cfg.split_ratio, cfg.seed)
    rng = np.random.default_rng(cfg.seed)
    state = AdamWState()
    log = MetricsLog()
    trainable = ({k: v for k, v in params.items() if k.startswith("head.")}
                 if freeze_backbone else params)
    best = _snapshot(params)
    best_acc = -1.0
    since_best = 0
    for epoch in range(1, cfg.epochs + 1):
        t0 = time.monotonic()
        order = rng.permutation(len(train_set))
        epoch_losses = []
        for lo in range(0, len(train_set), cfg.batch_size):
            batch = [train_set[i] for i in order[lo:lo + cfg.batch_size]]
            zero_gradients(params)
            loss = clf_batch_loss(params, config, batch, train=True, rng=rng)
            loss.backward()
            clip_gradients(trainable, cfg.grad_clip_norm)
            _optimizer_step(trainable, cfg, state)
            _check_finite(params)
            epoch_losses.append(loss.item())
        acc, _ = evaluate_accuracy(params, config, val_set)
        log.add(epoch, "train", "loss", float(np.mean(epoch_losses)))
        log.add(epoch, "val", "accuracy", acc)
        log.add(epoch, "train", "wall_time", time.monotonic() - t0)
        if acc > best_acc:
            best_acc = acc
            best = _snapshot(params)
            since_best = 0
        else:
            since_best += 1
            if cfg.early_stop_patience is not None and since_best >= cfg.early_stop_patience:
                break
    return best, log
