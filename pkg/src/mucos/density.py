"""Entity density (occurrence frequency) and deterministic top-n selection."""

from __future__ import annotations

import heapq
from pathlib import Path
from typing import Iterable

import numpy as np

from .kg import KnowledgeGraph

DENSITY_MODES = ("both", "tail_only")


class DensityIndex:
    """Per-entity occurrence counts over the training triples.

    ``mode="both"`` counts an entity once per triple for each role it plays
    (a self-loop counts twice); ``mode="tail_only"`` counts tail occurrences.
    """

    def __init__(self, counts: np.ndarray, mode: str = "both") -> None:
        self.counts = np.asarray(counts, dtype=np.int64)
        self.counts.setflags(write=False)
        self.mode = mode

    def __getitem__(self, entity: int) -> int:
        return int(self.counts[entity])

    def __len__(self) -> int:
        return len(self.counts)

    def rank_key(self, entity: int) -> tuple[int, int]:
        """Sort key: higher density first, then lower id."""
        return -int(self.counts[entity]), entity

    def dump(self, graph: KnowledgeGraph, path: str | Path) -> None:
        with Path(path).open("w", encoding="utf-8") as fh:
            for e, c in enumerate(self.counts.tolist()):
                fh.write(f"{graph.entities.label(e)}\t{c}\n")


def build_density(graph: KnowledgeGraph, mode: str = "both") -> DensityIndex:
    if mode not in DENSITY_MODES:
        raise ValueError(f"density mode must be one of {DENSITY_MODES}, got {mode!r}")
    counts = np.zeros(graph.num_entities, dtype=np.int64)
    if graph.triples:
        arr = np.asarray(graph.triples, dtype=np.int64)
        np.add.at(counts, arr[:, 2], 1)
        if mode == "both":
            np.add.at(counts, arr[:, 0], 1)
    return DensityIndex(counts, mode)


def top_n_entities(candidates: Iterable[int], density: DensityIndex, n: int) -> list[int]:
    """The ``n`` densest candidates, densest first, ties to the lower id."""
    if n < 0:
        raise ValueError("n must be non-negative")
    return heapq.nsmallest(n, candidates, key=density.rank_key)
