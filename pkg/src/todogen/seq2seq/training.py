"""Teacher-forced training with Adagrad, clipping, and patience-based
early stopping on validation token accuracy / perplexity."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import numeric as nm
from ..numeric.tensor import NumericError
from .model import Batch, EncodedExample, ModelConfig, Seq2SeqModel, make_batch

log = logging.getLogger(__name__)


class TrainingError(Exception):
    """Training aborted (divergence or unusable inputs)."""


@dataclass
class TrainConfig:
    batch_size: int = 64
    learning_rate: float = 0.15
    accumulator_init: float = 0.1
    max_grad_norm: float = 2.0
    dropout: float = 0.5
    attn_dropout: float = 0.5
    patience: int = 5
    beam_width: int = 5
    max_epochs: int = 60
    seed: int = 0
    embeddings_path: str | None = None

    def __post_init__(self):
        if self.patience < 1:
            raise ValueError("TrainConfig: patience must be >= 1")
        for name in ("batch_size", "learning_rate", "max_grad_norm",
                     "beam_width", "max_epochs"):
            if getattr(self, name) <= 0:
                raise ValueError(f"TrainConfig: {name} must be positive")


@dataclass
class EpochRecord:
    epoch: int
    train_loss: float
    val_accuracy: float
    val_perplexity: float
    patience_left: int
    improved: bool


@dataclass
class TrainLog:
    records: list[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    def to_dicts(self) -> list[dict]:
        return [{"epoch": r.epoch,
                 "train_loss": round(r.train_loss, 6),
                 "val_accuracy": round(r.val_accuracy, 6),
                 "val_perplexity": round(r.val_perplexity, 6),
                 "patience_left": r.patience_left,
                 "improved": r.improved} for r in self.records]


def evaluate_token_stats(model: Seq2SeqModel, examples: list[EncodedExample],
                         batch_size: int = 64) -> tuple[float, float]:
    """(token accuracy, perplexity) teacher-forced over ``examples``."""
    total = 0
    correct = 0
    nll = 0.0
    bifocal = model.config.variant == "bifocal"
    for start in range(0, len(examples), batch_size):
        batch = make_batch(examples[start:start + batch_size], model.tgt_vocab,
                           bifocal=bifocal)
        _, stats = model.loss_batch(batch, train=False)
        total += stats["n_tokens"]
        correct += stats["n_correct"]
        nll += stats["nll_sum"]
    if total == 0:
        raise TrainingError("evaluate_token_stats: no target tokens")
    return correct / total, math.exp(nll / total)


def train(model: Seq2SeqModel, train_examples: list[EncodedExample],
          val_examples: list[EncodedExample], config: TrainConfig,
          val_metrics_fn=None) -> TrainLog:
    """Run epochs until patience runs out or ``max_epochs`` is reached.

    Patience drops only when *neither* validation token accuracy nor
    perplexity improves on its best; any improvement resets it.  The
    parameters giving the best perplexity are restored at the end.
    ``val_metrics_fn(model) -> (accuracy, perplexity)`` can replace the
    default validation pass (used by the early-stopping contract tests).
    """
    if not train_examples:
        raise TrainingError("train: empty training split")
    if not val_examples and val_metrics_fn is None:
        raise TrainingError("train: empty validation split")
    bifocal = model.config.variant == "bifocal"
    state = nm.AdagradState(model.params, config.learning_rate,
                            config.accumulator_init)
    shuffle_rng = np.random.default_rng(config.seed)
    dropout_rng = np.random.default_rng(config.seed + 1)

    best_acc = -math.inf
    best_ppl = math.inf
    best_params = None
    best_epoch = 0
    patience_left = config.patience
    out = TrainLog()

    for epoch in range(1, config.max_epochs + 1):
        order = shuffle_rng.permutation(len(train_examples))
        loss_total = 0.0
        token_total = 0
        for start in range(0, len(order), config.batch_size):
            chunk = [train_examples[i] for i in order[start:start + config.batch_size]]
            batch = make_batch(chunk, model.tgt_vocab, bifocal=bifocal)
            try:
                with nm.Tape() as tape:
                    loss, stats = model.loss_batch(
                        batch, train=True, rng=dropout_rng,
                        dropout=config.dropout, attn_dropout=config.attn_dropout)
                    tape.backward(loss)
            except NumericError as exc:
                raise TrainingError(
                    f"training diverged at epoch {epoch}: {exc}") from exc
            nm.clip_grad_norm(model.params, config.max_grad_norm)
            nm.adagrad_step(model.params, state)
            loss_total += stats["nll_sum"]
            token_total += stats["n_tokens"]

        if val_metrics_fn is not None:
            acc, ppl = val_metrics_fn(model)
        else:
            acc, ppl = evaluate_token_stats(model, val_examples,
                                            config.batch_size)
        improved = acc > best_acc or ppl < best_ppl
        if acc > best_acc:
            best_acc = acc
        if ppl < best_ppl:
            best_ppl = ppl
            best_params = {k: v.data.copy() for k, v in model.params.items()}
            best_epoch = epoch
        if improved:
            patience_left = config.patience
        else:
            patience_left -= 1
        out.records.append(EpochRecord(epoch, loss_total / max(token_total, 1),
                                       acc, ppl, patience_left, improved))
        log.debug("epoch %d: loss %.4f acc %.4f ppl %.4f patience %d",
                  epoch, loss_total / max(token_total, 1), acc, ppl, patience_left)
        if patience_left == 0:
            out.stopped_early = True
            break

    if best_params is not None:
        for k, v in model.params.items():
            v.data = best_params[k]
            v.grad = None
    out.best_epoch = best_epoch
    return out
