"""Ranking evaluation: per-query ranks, MRR and Hits@k."""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional, Sequence

import numpy as np

from .context import ContextSampler
from .kg import DatasetSplits, KnowledgeGraph, Triple
from .model import EncoderModel
from .pipeline import TrainConfig, batches, encode_triples, make_sampler, task_triples, trim
from .sequence import InputSequence, TokenVocab

HITS_AT = (1, 3, 5, 10)


class EvaluationError(ValueError):
    pass


class EmptySubtaskError(EvaluationError):
    pass


@dataclass
class RankingReport:
    ranks: list[int]
    mrr: Fraction
    hits: dict[int, Fraction]
    task: str = ""
    subtask: str = ""
    mode: str = ""
    n: Optional[int] = None
    k: Optional[int] = None
    unseen_queries: int = 0
    extra: dict = field(default_factory=dict)

    @property
    def count(self) -> int:
        return len(self.ranks)

    def as_dict(self) -> dict[str, object]:
        out: dict[str, object] = {
            "task": self.task,
            "subtask": self.subtask,
            "mode": self.mode,
            "n": self.n,
            "k": self.k,
            "N": self.count,
            "MRR": float(self.mrr),
        }
        out.update({f"Hits@{k}": float(v) for k, v in self.hits.items()})
        out["unseen_queries"] = self.unseen_queries
        return out


def compute_metrics(ranks: Sequence[int], ks: Sequence[int] = HITS_AT) -> RankingReport:
    """Exact MRR and Hits@k as fractions."""
    ranks = [int(r) for r in ranks]
    if not ranks:
        raise EvaluationError("no ranks to summarise")
    if min(ranks) < 1:
        raise EvaluationError("ranks start at 1")
    total = len(ranks)
    mrr = sum((Fraction(1, r) for r in ranks), Fraction(0)) / total
    hits = {k: Fraction(sum(1 for r in ranks if r <= k), total) for k in ks}
    return RankingReport(ranks, mrr, hits)


def ranks_from_scores(
    scores: np.ndarray, gold: np.ndarray, candidates: Optional[np.ndarray] = None
) -> np.ndarray:
    """1 + number of other candidates scoring strictly higher than the gold class.

    ``candidates`` is an optional boolean ``(B, C)`` mask; the gold class must be in it.
    """
    scores = np.atleast_2d(scores)
    gold = np.atleast_1d(gold)
    rows = np.arange(len(gold))
    if candidates is None:
        candidates = np.ones(scores.shape, dtype=bool)
    if not np.all(candidates[rows, gold]):
        raise EvaluationError("gold class missing from candidate set")
    gold_scores = scores[rows, gold][:, None]
    better = (scores > gold_scores) & candidates
    better[rows, gold] = False
    return 1 + better.sum(axis=1)


def rank_query(
    model: EncoderModel, seq: InputSequence, gold: int, candidates: Optional[Sequence[int]] = None
) -> int:
    """Rank of ``gold`` among ``candidates`` (all classes by default) from a single forward pass."""
    probs = model.predict(seq.token_ids, seq.attention_mask)
    mask = None
    if candidates is not None:
        mask = np.zeros((1, len(probs)), dtype=bool)
        mask[0, list(candidates)] = True
    return int(ranks_from_scores(probs[None], np.array([gold]), mask)[0])


def _candidate_masks(
    triples: Sequence[Triple],
    graph: KnowledgeGraph,
    splits: DatasetSplits,
    config: TrainConfig,
    num_classes: int,
) -> Optional[np.ndarray]:
    if config.task != "tail" or (not config.filtered and config.tail_candidates == "all"):
        return None
    mask = np.ones((len(triples), num_classes), dtype=bool)
    if config.tail_candidates == "seen_tails":
        seen = np.zeros(num_classes, dtype=bool)
        seen[[t for _, _, t in graph.triples]] = True
        mask &= seen
    if config.filtered:
        known: dict[tuple[int, int], set[int]] = {}
        for h, r, t in splits.all_triples():
            known.setdefault((h, r), set()).add(t)
        for i, (h, r, _) in enumerate(triples):
            mask[i, list(known[(h, r)])] = False
    for i, (_, _, t) in enumerate(triples):
        mask[i, t] = True
    return mask


def evaluate_triples(
    model: EncoderModel,
    graph: KnowledgeGraph,
    splits: DatasetSplits,
    triples: Sequence[Triple],
    config: TrainConfig,
    sampler: Optional[ContextSampler] = None,
    batch_size: int = 256,
) -> RankingReport:
    if not triples:
        raise EmptySubtaskError("no queries to evaluate")
    sampler = sampler or make_sampler(graph, config)
    vocab = TokenVocab.for_graph(graph)
    tokens, mask, labels = encode_triples(triples, sampler, vocab, config)
    cand = _candidate_masks(triples, graph, splits, config, model.num_classes)
    ranks = np.zeros(len(triples), dtype=np.int64)
    for idx in batches(range(len(triples)), batch_size):
        tok, msk = trim(tokens[idx], mask[idx])
        probs = model.predict(tok, msk)
        ranks[idx] = ranks_from_scores(probs, labels[idx], None if cand is None else cand[idx])

    seen = {e for h, _, t in graph.triples for e in (h, t)}
    report = compute_metrics(ranks.tolist())
    report.task, report.mode, report.n, report.k = config.task, config.mode, config.n, config.k
    report.unseen_queries = sum(1 for h, _, t in triples if h not in seen or t not in seen)
    return report


def evaluate_split(
    model: EncoderModel,
    graph: KnowledgeGraph,
    splits: DatasetSplits,
    config: TrainConfig,
    split: str = "test",
    subtasks: Sequence[str] = ("general", "drug-target"),
    sampler: Optional[ContextSampler] = None,
) -> dict[str, RankingReport]:
    """One report per subtask; drug-target restricts queries to marked relations."""
    sampler = sampler or make_sampler(graph, config)
    reports = {}
    for subtask in subtasks:
        triples = task_triples(splits, split, subtask)
        if not triples:
            raise EmptySubtaskError(f"{subtask} subtask has no {split} triples")
        report = evaluate_triples(model, graph, splits, triples, config, sampler)
        report.subtask = subtask
        reports[subtask] = report
    return reports


def format_table(reports: Sequence[RankingReport]) -> str:
    header = ["task", "subtask", "mode", "n", "k", "N", "MRR", *(f"Hits@{k}" for k in HITS_AT)]
    rows = []
    for rep in reports:
        d = rep.as_dict()
        rows.append(
            [str(d["task"]), str(d["subtask"]), str(d["mode"]), _fmt_limit(d["n"]), _fmt_limit(d["k"]), str(d["N"])]
            + [f"{d[key]:.4f}" for key in header[6:]]
        )
    widths = [max(len(h), *(len(r[i]) for r in rows)) for i, h in enumerate(header)]
    lines = ["  ".join(h.ljust(w) for h, w in zip(header, widths))]
    lines += ["  ".join(c.ljust(w) for c, w in zip(r, widths)) for r in rows]
    return "\n".join(line.rstrip() for line in lines) + "\n"


def _fmt_limit(value) -> str:
    return "inf" if value is None else str(value)
