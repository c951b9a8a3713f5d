"""Fixed-length token-id sequences for the two query types.

Layouts::

    relation query (h, ?, t):  CLS h SEP Hc... SEP t SEP Tc... SEP
    tail query (h, r, ?):      CLS h SEP Hc... SEP r SEP Rc... SEP

followed by PAD up to ``max_len``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .context import Token
from .kg import KnowledgeGraph

PAD, CLS, SEP = 0, 1, 2
NUM_SPECIAL = 3
SKELETON_LEN = 7
DEFAULT_MAX_LEN = 128


class TokenVocab:
    """Entity token = 3 + entity id; relation token = 3 + |E| + relation id."""

    def __init__(self, num_entities: int, num_relations: int) -> None:
        self.num_entities = num_entities
        self.num_relations = num_relations

    @classmethod
    def for_graph(cls, graph: KnowledgeGraph) -> "TokenVocab":
        return cls(graph.num_entities, graph.num_relations)

    def __len__(self) -> int:
        return NUM_SPECIAL + self.num_entities + self.num_relations

    def entity(self, e: int) -> int:
        return NUM_SPECIAL + e

    def relation(self, r: int) -> int:
        return NUM_SPECIAL + self.num_entities + r

    def encode(self, tok: Token) -> int:
        return self.entity(tok.id) if tok.kind == "ent" else self.relation(tok.id)

    def label(self, token_id: int, graph: Optional[KnowledgeGraph] = None) -> str:
        if token_id < NUM_SPECIAL:
            return ("PAD", "CLS", "SEP")[token_id]
        idx = token_id - NUM_SPECIAL
        if idx < self.num_entities:
            return graph.entities.label(idx) if graph else f"E{idx}"
        idx -= self.num_entities
        if idx >= self.num_relations:
            raise ValueError(f"token id {token_id} outside vocabulary of size {len(self)}")
        return graph.relations.label(idx) if graph else f"R{idx}"


@dataclass(frozen=True)
class InputSequence:
    token_ids: np.ndarray
    attention_mask: np.ndarray
    label: Optional[int] = None

    def __len__(self) -> int:
        return len(self.token_ids)

    def render(self, vocab: TokenVocab, graph: Optional[KnowledgeGraph] = None) -> str:
        return " ".join(vocab.label(int(t), graph) for t in self.token_ids)


def truncate_pair(first: Sequence, second: Sequence, budget: int) -> tuple[list, list]:
    """Drop tokens from the end of the longer context until both fit in ``budget``.

    On equal lengths the second context loses a token first, so the two
    shrink alternately once they are level.
    """
    a, b = list(first), list(second)
    excess = len(a) + len(b) - budget
    while excess > 0:
        if len(a) > len(b):
            a.pop()
        else:
            b.pop()
        excess -= 1
    return a, b


def _build(q1: int, ctx1: Sequence[Token], q2: int, ctx2: Sequence[Token], vocab, max_len, label):
    if max_len < SKELETON_LEN:
        raise ValueError(f"max_len={max_len} cannot hold the {SKELETON_LEN}-token skeleton")
    c1, c2 = truncate_pair(ctx1, ctx2, max_len - SKELETON_LEN)
    ids = [CLS, q1, SEP, *map(vocab.encode, c1), SEP, q2, SEP, *map(vocab.encode, c2), SEP]
    token_ids = np.zeros(max_len, dtype=np.int64)
    token_ids[: len(ids)] = ids
    mask = np.zeros(max_len, dtype=np.int64)
    mask[: len(ids)] = 1
    return InputSequence(token_ids, mask, label)


def build_relation_query(
    h: int,
    t: int,
    head_context: Sequence[Token],
    tail_context: Sequence[Token],
    vocab: TokenVocab,
    max_len: int = DEFAULT_MAX_LEN,
    label: Optional[int] = None,
) -> InputSequence:
    return _build(vocab.entity(h), head_context, vocab.entity(t), tail_context, vocab, max_len, label)


def build_tail_query(
    h: int,
    r: int,
    head_context: Sequence[Token],
    relation_context: Sequence[Token],
    vocab: TokenVocab,
    max_len: int = DEFAULT_MAX_LEN,
    label: Optional[int] = None,
) -> InputSequence:
    return _build(vocab.entity(h), head_context, vocab.relation(r), relation_context, vocab, max_len, label)


def stack(seqs: Sequence[InputSequence]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Batch sequences into (token_ids, mask, labels) arrays."""
    tokens = np.stack([s.token_ids for s in seqs])
    mask = np.stack([s.attention_mask for s in seqs])
    labels = np.array([-1 if s.label is None else s.label for s in seqs], dtype=np.int64)
    return tokens, mask, labels
