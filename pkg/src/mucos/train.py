"""Mini-batch AdamW training on positive triples only (softmax over all classes, no negatives)."""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .evaluate import EmptySubtaskError, evaluate_triples
from .kg import DatasetSplits, KnowledgeGraph
from .model import LOG_FLOOR, EncoderModel
from .optim import AdamWState, adamw_step
from .pipeline import TrainConfig, batches, encode_triples, make_sampler, num_classes, task_triples, trim
from .sequence import TokenVocab

logger = logging.getLogger(__name__)


class TrainingError(RuntimeError):
    pass


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    epoch_seconds: list[float] = field(default_factory=list)
    context_seconds: float = 0.0
    clamped_probabilities: int = 0
    valid_mrr: list[float] = field(default_factory=list)
    best_valid_mrr: Optional[float] = None
    best_epoch: Optional[int] = None
    checkpoint: Optional[str] = None
    examples: int = 0

    def as_dict(self) -> dict[str, object]:
        return {
            "examples": self.examples,
            "epochs": len(self.epoch_losses),
            "epoch_losses": self.epoch_losses,
            "final_loss": self.epoch_losses[-1] if self.epoch_losses else None,
            "context_seconds": self.context_seconds,
            "train_seconds": sum(self.epoch_seconds),
            "clamped_probabilities": self.clamped_probabilities,
            "valid_mrr": self.valid_mrr,
            "best_valid_mrr": self.best_valid_mrr,
            "best_epoch": self.best_epoch,
            "checkpoint": self.checkpoint,
        }


def train(
    graph: KnowledgeGraph,
    splits: DatasetSplits,
    config: TrainConfig,
    out_dir: Optional[str | Path] = None,
) -> tuple[EncoderModel, TrainReport]:
    """Train a fresh model; each training triple is one positive example per epoch.

    With ``out_dir`` the model is written to ``last.npz`` after every epoch,
    and to ``best.npz`` whenever validation MRR improves (if a validation
    split exists).  The returned model is the final-epoch model.
    """
    report = TrainReport()
    triples = task_triples(splits, "train", config.subtask)
    if not triples:
        raise TrainingError(f"no training triples for subtask {config.subtask!r}")
    held_out = set(splits.valid) | set(splits.test)
    leaked = sum(1 for tr in triples if tr in held_out)
    if leaked:
        raise TrainingError(f"{leaked} evaluation triple(s) present in the training examples")

    start = time.perf_counter()
    sampler = make_sampler(graph, config)
    vocab = TokenVocab.for_graph(graph)
    tokens, mask, labels = encode_triples(triples, sampler, vocab, config)
    report.context_seconds = time.perf_counter() - start
    report.examples = len(triples)

    seeds = np.random.SeedSequence(config.seed).spawn(2)
    model = EncoderModel(len(vocab), num_classes(graph, config), config.encoder_config, seed=seeds[0])
    shuffle_rng = np.random.default_rng(seeds[1])
    state = AdamWState.like(model.params)
    hyper = config.adamw

    valid = task_triples(splits, "valid", config.subtask)
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        out.mkdir(parents=True, exist_ok=True)
    extra = {"config": config.as_dict()}

    for epoch in range(1, config.epochs + 1):
        t0 = time.perf_counter()
        total, seen = 0.0, 0
        for idx in batches(shuffle_rng.permutation(len(triples)), config.batch_size):
            tok, msk = trim(tokens[idx], mask[idx])
            probs, trace = model.forward(tok, msk)
            gold = probs[np.arange(len(idx)), labels[idx]]
            report.clamped_probabilities += int(np.count_nonzero(gold < LOG_FLOOR))
            batch_loss = float(-np.log(np.maximum(gold, LOG_FLOOR)).sum())
            if not math.isfinite(batch_loss):
                raise TrainingError(f"non-finite loss at epoch {epoch}, batch starting at example {idx[0]}")
            grads = model.backward(trace, labels[idx])
            adamw_step(model.params, grads, state, hyper)
            model.mark_updated()
            total += batch_loss
            seen += len(idx)
        report.epoch_losses.append(total / seen)
        report.epoch_seconds.append(time.perf_counter() - t0)
        logger.info("epoch %d loss %.6f", epoch, report.epoch_losses[-1])

        if out is None:
            continue
        model.save(out / "last.npz", extra=extra | {"epoch": epoch})
        report.checkpoint = str(out / "last.npz")
        if valid and config.eval_every and epoch % config.eval_every == 0:
            try:
                mrr = float(evaluate_triples(model, graph, splits, valid, config, sampler).mrr)
            except EmptySubtaskError:
                continue
            report.valid_mrr.append(mrr)
            if report.best_valid_mrr is None or mrr > report.best_valid_mrr:
                report.best_valid_mrr, report.best_epoch = mrr, epoch
                model.save(out / "best.npz", extra=extra | {"epoch": epoch, "valid_mrr": mrr})
                report.checkpoint = str(out / "best.npz")
    return model, report
