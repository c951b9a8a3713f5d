"""Head, tail and relation contexts in FULL (unsampled) and SAMPLED (density top-n/top-k) modes.

A head context lists the relations linking ``h`` to its selected neighbours
followed by those neighbours; the tail context is the same construction over
the incoming edges of ``t``.  A relation context is the flattened list of
(head, tail) pairs connected by ``r``.  Thresholds of ``None`` mean "no limit".
"""

from __future__ import annotations

import heapq
from dataclasses import dataclass
from enum import Enum
from typing import NamedTuple, Optional

from .density import DensityIndex
from .kg import KnowledgeGraph

DEFAULT_N = 15
DEFAULT_K = 10


class Mode(str, Enum):
    FULL = "full"
    SAMPLED = "sampled"


class Token(NamedTuple):
    kind: str  # "rel" or "ent"
    id: int


def rel_token(r: int) -> Token:
    return Token("rel", r)


def ent_token(e: int) -> Token:
    return Token("ent", e)


def _edges(graph: KnowledgeGraph, entity: int, side: str, undirected: bool) -> list[tuple[int, int]]:
    if side == "head":
        primary, secondary = graph.out_index, graph.in_index
    else:
        primary, secondary = graph.in_index, graph.out_index
    if undirected:
        return primary[entity] + secondary[entity]
    return primary[entity]


def _neighborhood(graph, entity, side, undirected):
    rels: dict[int, None] = {}
    links: dict[int, dict[int, None]] = {}
    for r, e in _edges(graph, entity, side, undirected):
        rels.setdefault(r)
        links.setdefault(e, {}).setdefault(r)
    return list(rels), {e: list(rs) for e, rs in links.items()}


def head_neighborhood(graph: KnowledgeGraph, h: int, undirected: bool = False) -> tuple[list[int], list[int]]:
    """Relations and neighbour entities on the outgoing edges of ``h``, deduplicated in first-appearance order."""
    rels, links = _neighborhood(graph, h, "head", undirected)
    return rels, list(links)


def tail_neighborhood(graph: KnowledgeGraph, t: int, undirected: bool = False) -> tuple[list[int], list[int]]:
    rels, links = _neighborhood(graph, t, "tail", undirected)
    return rels, list(links)


def _check_threshold(value: Optional[int], name: str, mode: Mode) -> None:
    if mode is Mode.SAMPLED and value is not None and value < 1:
        raise ValueError(f"{name} must be >= 1 in sampled mode, got {value}")


def _entity_context(graph, density, entity, n, mode, side, undirected) -> list[Token]:
    mode = Mode(mode)
    _check_threshold(n, "n", mode)
    rels, links = _neighborhood(graph, entity, side, undirected)
    if mode is Mode.FULL:
        return [rel_token(r) for r in rels] + [ent_token(e) for e in links]
    chosen = heapq.nsmallest(len(links) if n is None else n, links, key=density.rank_key)
    linking: dict[int, None] = {}
    for e in chosen:
        for r in links[e]:
            linking.setdefault(r)
    return [rel_token(r) for r in linking] + [ent_token(e) for e in chosen]


def sample_head_context(
    graph: KnowledgeGraph,
    density: DensityIndex,
    h: int,
    n: Optional[int] = DEFAULT_N,
    mode: Mode | str = Mode.SAMPLED,
    undirected: bool = False,
) -> list[Token]:
    """Head context of ``h``.

    SAMPLED keeps the ``n`` densest outgoing neighbours (ties to the lower
    id) and the distinct relations linking ``h`` to them, taken neighbour by
    neighbour in rank order.  FULL keeps every relation and neighbour.
    """
    return _entity_context(graph, density, h, n, mode, "head", undirected)


def sample_tail_context(
    graph: KnowledgeGraph,
    density: DensityIndex,
    t: int,
    n: Optional[int] = DEFAULT_N,
    mode: Mode | str = Mode.SAMPLED,
    undirected: bool = False,
) -> list[Token]:
    return _entity_context(graph, density, t, n, mode, "tail", undirected)


def relation_pairs(graph: KnowledgeGraph, r: int) -> list[tuple[int, int]]:
    """Distinct (head, tail) pairs connected by ``r`` in first-appearance order."""
    return list(dict.fromkeys(graph.by_relation[r]))


def sample_relation_context(
    graph: KnowledgeGraph,
    density: DensityIndex,
    r: int,
    k: Optional[int] = DEFAULT_K,
    mode: Mode | str = Mode.SAMPLED,
) -> list[Token]:
    """Flattened (head, tail) pairs of ``r``; SAMPLED keeps the ``k`` pairs with the largest density sum."""
    mode = Mode(mode)
    _check_threshold(k, "k", mode)
    pairs = relation_pairs(graph, r)
    if mode is Mode.SAMPLED:
        counts = density.counts
        pairs = heapq.nsmallest(
            len(pairs) if k is None else k,
            pairs,
            key=lambda p: (-int(counts[p[0]] + counts[p[1]]), p[0], p[1]),
        )
    return [ent_token(e) for pair in pairs for e in pair]


@dataclass(frozen=True)
class ContextBundle:
    head_context: list[Token]
    tail_context: Optional[list[Token]]
    relation_context: Optional[list[Token]]
    mode: Mode
    n: Optional[int]
    k: Optional[int]

    def render(self, graph: KnowledgeGraph) -> str:
        """One-line debug form, e.g. ``Hc: r1 C | Rc: A C``."""
        parts = [("Hc", self.head_context), ("Tc", self.tail_context), ("Rc", self.relation_context)]
        return " | ".join(
            f"{name}: {' '.join(token_label(graph, tok) for tok in ctx)}".rstrip()
            for name, ctx in parts
            if ctx is not None
        )


def token_label(graph: KnowledgeGraph, tok: Token) -> str:
    vocab = graph.relations if tok.kind == "rel" else graph.entities
    return vocab.label(tok.id)


class ContextSampler:
    """Context construction over neighbourhoods presorted by density.

    All rankings are computed once at construction, so a SAMPLED context
    costs O(n) (or O(k)) per query instead of a scan of the whole
    neighbourhood.  Results are identical to the module-level functions.
    Instances are immutable after construction and safe to share.
    """

    def __init__(self, graph: KnowledgeGraph, density: DensityIndex, undirected: bool = False) -> None:
        self.graph = graph
        self.density = density
        self.undirected = undirected
        self._rel_tok = [rel_token(r) for r in range(graph.num_relations)]
        self._ent_tok = [ent_token(e) for e in range(graph.num_entities)]
        self._head = [self._prepare(e, "head") for e in range(graph.num_entities)]
        self._tail = [self._prepare(e, "tail") for e in range(graph.num_entities)]
        counts = density.counts
        self._pairs_full: list[list[Token]] = []
        self._pairs_ranked: list[list[Token]] = []
        for r in range(graph.num_relations):
            pairs = relation_pairs(graph, r)
            ranked = sorted(pairs, key=lambda p: (-int(counts[p[0]] + counts[p[1]]), p[0], p[1]))
            self._pairs_full.append([self._ent_tok[e] for p in pairs for e in p])
            self._pairs_ranked.append([self._ent_tok[e] for p in ranked for e in p])

    def _prepare(self, entity: int, side: str):
        rels, links = _neighborhood(self.graph, entity, side, self.undirected)
        full = [self._rel_tok[r] for r in rels] + [self._ent_tok[e] for e in links]
        ranked = sorted(links, key=self.density.rank_key)
        return full, [(self._ent_tok[e], [self._rel_tok[r] for r in links[e]]) for e in ranked]

    def _entity_context(self, table, entity: int, n: Optional[int], mode: Mode | str) -> list[Token]:
        mode = Mode(mode)
        full, ranked = table[entity]
        if mode is Mode.FULL:
            return list(full)
        _check_threshold(n, "n", mode)
        chosen = ranked if n is None else ranked[:n]
        linking: dict[Token, None] = {}
        for _, rels in chosen:
            for tok in rels:
                linking.setdefault(tok)
        return [*linking, *(tok for tok, _ in chosen)]

    def head_context(self, h: int, n: Optional[int] = DEFAULT_N, mode: Mode | str = Mode.SAMPLED) -> list[Token]:
        return self._entity_context(self._head, h, n, mode)

    def tail_context(self, t: int, n: Optional[int] = DEFAULT_N, mode: Mode | str = Mode.SAMPLED) -> list[Token]:
        return self._entity_context(self._tail, t, n, mode)

    def relation_context(self, r: int, k: Optional[int] = DEFAULT_K, mode: Mode | str = Mode.SAMPLED) -> list[Token]:
        mode = Mode(mode)
        if mode is Mode.FULL:
            return list(self._pairs_full[r])
        _check_threshold(k, "k", mode)
        ranked = self._pairs_ranked[r]
        return list(ranked) if k is None else ranked[: 2 * k]

    def relation_query(
        self, h: int, t: int, n: Optional[int] = DEFAULT_N, mode: Mode | str = Mode.SAMPLED
    ) -> ContextBundle:
        """Contexts for ``(h, ?, t)``: head and tail contexts."""
        mode = Mode(mode)
        return ContextBundle(self.head_context(h, n, mode), self.tail_context(t, n, mode), None, mode, n, None)

    def tail_query(
        self,
        h: int,
        r: int,
        n: Optional[int] = DEFAULT_N,
        k: Optional[int] = DEFAULT_K,
        mode: Mode | str = Mode.SAMPLED,
    ) -> ContextBundle:
        """Contexts for ``(h, r, ?)``: head and relation contexts."""
        mode = Mode(mode)
        return ContextBundle(self.head_context(h, n, mode), None, self.relation_context(r, k, mode), mode, n, k)
