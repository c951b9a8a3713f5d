"""Triple storage, vocabulary interning, adjacency indexes and dataset splits."""

from __future__ import annotations

import hashlib
import json
import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Iterable, NamedTuple, Sequence

import numpy as np

logger = logging.getLogger(__name__)

SPLIT_NAMES = ("train", "valid", "test")
DATASET_META = "dataset.json"


class DatasetError(Exception):
    """Raised for unusable dataset inputs (empty files, overlapping splits, bad counts)."""


class ParseError(DatasetError):
    def __init__(self, path: str | Path, lineno: int, message: str) -> None:
        super().__init__(f"{path}:{lineno}: {message}")
        self.path = str(path)
        self.lineno = lineno


class Triple(NamedTuple):
    head: int
    relation: int
    tail: int


class Vocab:
    """Dense label <-> id mapping in first-appearance order."""

    def __init__(self, labels: Iterable[str] = ()) -> None:
        self.labels: list[str] = []
        self._index: dict[str, int] = {}
        for label in labels:
            self.add(label)

    def add(self, label: str) -> int:
        idx = self._index.get(label)
        if idx is None:
            idx = len(self.labels)
            self._index[label] = idx
            self.labels.append(label)
        return idx

    def id(self, label: str) -> int:
        try:
            return self._index[label]
        except KeyError:
            raise KeyError(f"unknown label {label!r}") from None

    def label(self, idx: int) -> str:
        return self.labels[idx]

    def __contains__(self, label: object) -> bool:
        return label in self._index

    def __len__(self) -> int:
        return len(self.labels)

    def __eq__(self, other: object) -> bool:
        return isinstance(other, Vocab) and self.labels == other.labels

    def __repr__(self) -> str:
        return f"Vocab({len(self)} labels)"


@dataclass(eq=False)
class KnowledgeGraph:
    """Interned training graph with outgoing, incoming and per-relation indexes.

    ``triples`` holds the train split only; evaluation triples live in
    :class:`DatasetSplits` so contexts can never see them.
    """

    entities: Vocab
    relations: Vocab
    triples: list[Triple]
    out_index: list[list[tuple[int, int]]] = field(init=False, repr=False)
    in_index: list[list[tuple[int, int]]] = field(init=False, repr=False)
    by_relation: list[list[tuple[int, int]]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        n_ent, n_rel = len(self.entities), len(self.relations)
        self.out_index = [[] for _ in range(n_ent)]
        self.in_index = [[] for _ in range(n_ent)]
        self.by_relation = [[] for _ in range(n_rel)]
        for h, r, t in self.triples:
            if not (0 <= h < n_ent and 0 <= t < n_ent and 0 <= r < n_rel):
                raise DatasetError(f"triple ({h}, {r}, {t}) outside vocabulary")
            self.out_index[h].append((r, t))
            self.in_index[t].append((r, h))
            self.by_relation[r].append((h, t))

    @property
    def num_entities(self) -> int:
        return len(self.entities)

    @property
    def num_relations(self) -> int:
        return len(self.relations)

    def triple_labels(self, triple: Triple) -> tuple[str, str, str]:
        h, r, t = triple
        return self.entities.label(h), self.relations.label(r), self.entities.label(t)


@dataclass
class DatasetSplits:
    train: list[Triple]
    valid: list[Triple]
    test: list[Triple]
    drug_target_relation_ids: frozenset[int] = frozenset()

    def split(self, name: str) -> list[Triple]:
        if name not in SPLIT_NAMES:
            raise ValueError(f"unknown split {name!r}")
        return getattr(self, name)

    def all_triples(self) -> list[Triple]:
        return [*self.train, *self.valid, *self.test]

    def drug_target(self, name: str) -> list[Triple]:
        return [tr for tr in self.split(name) if tr.relation in self.drug_target_relation_ids]


@dataclass(frozen=True)
class StatsReport:
    num_entities: int
    num_relations: int
    num_triples: int
    split_sizes: dict[str, int]
    drug_target_sizes: dict[str, int]
    avg_density: Fraction
    avg_appearance: Fraction
    unseen_valid_entities: int
    unseen_test_entities: int

    def as_dict(self) -> dict[str, object]:
        return {
            "entities": self.num_entities,
            "relations": self.num_relations,
            "triples": self.num_triples,
            **{f"{k}_triples": v for k, v in self.split_sizes.items()},
            **{f"drug_target_{k}_triples": v for k, v in self.drug_target_sizes.items()},
            "avg_density": float(self.avg_density),
            "avg_density_exact": str(self.avg_density),
            "avg_appearance": float(self.avg_appearance),
            "avg_appearance_exact": str(self.avg_appearance),
            "unseen_valid_entities": self.unseen_valid_entities,
            "unseen_test_entities": self.unseen_test_entities,
        }

    def to_text(self) -> str:
        return "\n".join(f"{k}={v}" for k, v in self.as_dict().items()) + "\n"


def read_triples(path: str | Path, delimiter: str | None = "\t") -> list[tuple[str, str, str]]:
    """Read labelled triples from a delimited text file.

    ``delimiter=None`` splits on any run of whitespace.  Blank lines are
    skipped; any other line must have exactly three fields.
    """
    path = Path(path)
    rows: list[tuple[str, str, str]] = []
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\r\n")
            if not line.strip():
                continue
            fields = line.split(delimiter)
            if len(fields) != 3:
                raise ParseError(path, lineno, f"expected 3 fields, got {len(fields)}")
            if delimiter is not None:
                fields = [f.strip() for f in fields]
            if not all(fields):
                raise ParseError(path, lineno, "empty field")
            rows.append((fields[0], fields[1], fields[2]))
    if not rows:
        raise DatasetError(f"{path}: no triples")
    return rows


def from_labeled(
    train: Sequence[tuple[str, str, str]],
    valid: Sequence[tuple[str, str, str]] = (),
    test: Sequence[tuple[str, str, str]] = (),
    drug_target_relations: Iterable[str] = (),
) -> tuple[KnowledgeGraph, DatasetSplits]:
    """Intern labelled splits into a graph (train edges only) plus splits."""
    entities, relations = Vocab(), Vocab()

    def intern(rows: Sequence[tuple[str, str, str]]) -> list[Triple]:
        return [Triple(entities.add(h), relations.add(r), entities.add(t)) for h, r, t in rows]

    train_t, valid_t, test_t = intern(train), intern(valid), intern(test)
    valid_set = set(valid_t)
    overlap = set(train_t) & (valid_set | set(test_t)) | valid_set & set(test_t)
    if overlap:
        raise DatasetError(f"{len(overlap)} triple(s) shared between splits")

    drug_target_relations = list(drug_target_relations)
    dt_ids = frozenset(relations.id(lbl) for lbl in drug_target_relations if lbl in relations)
    missing = [lbl for lbl in drug_target_relations if lbl not in relations]
    if missing:
        logger.warning("drug-target relation labels not in data: %s", missing)

    graph = KnowledgeGraph(entities, relations, train_t)
    return graph, DatasetSplits(train_t, valid_t, test_t, dt_ids)


def ingest_tsv(
    train: str | Path,
    valid: str | Path | None = None,
    test: str | Path | None = None,
    delimiter: str | None = "\t",
    drug_target_relations: Iterable[str] = (),
) -> tuple[KnowledgeGraph, DatasetSplits]:
    """Load one file per split; vocabularies cover all splits, indexes only train."""
    rows = [read_triples(p, delimiter) if p is not None else [] for p in (train, valid, test)]
    return from_labeled(*rows, drug_target_relations=drug_target_relations)


def export_tsv(graph: KnowledgeGraph, triples: Sequence[Triple], path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8", newline="\n") as fh:
        for tr in triples:
            fh.write("\t".join(graph.triple_labels(tr)) + "\n")


def save_dataset(graph: KnowledgeGraph, splits: DatasetSplits, directory: str | Path) -> Path:
    """Write ``train/valid/test.tsv`` plus a small metadata file.

    Empty splits are not written, since an empty TSV is rejected on load.
    """
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for name in SPLIT_NAMES:
        triples = splits.split(name)
        target = directory / f"{name}.tsv"
        if triples:
            export_tsv(graph, triples, target)
        elif target.exists():
            target.unlink()
    meta = {
        "drug_target_relations": sorted(graph.relations.label(r) for r in splits.drug_target_relation_ids),
        "fingerprint": fingerprint(graph, splits),
    }
    (directory / DATASET_META).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return directory


def load_dataset(
    directory: str | Path, drug_target_relations: Iterable[str] | None = None
) -> tuple[KnowledgeGraph, DatasetSplits]:
    directory = Path(directory)
    train = directory / "train.tsv"
    if not train.is_file():
        raise FileNotFoundError(f"{train} not found")
    if drug_target_relations is None:
        meta_path = directory / DATASET_META
        meta = json.loads(meta_path.read_text()) if meta_path.is_file() else {}
        drug_target_relations = meta.get("drug_target_relations", [])
    paths = [directory / f"{name}.tsv" for name in SPLIT_NAMES]
    return ingest_tsv(
        paths[0],
        paths[1] if paths[1].is_file() else None,
        paths[2] if paths[2].is_file() else None,
        drug_target_relations=drug_target_relations,
    )


def fingerprint(graph: KnowledgeGraph, splits: DatasetSplits) -> dict[str, object]:
    digest = hashlib.sha256()
    for name in SPLIT_NAMES:
        digest.update(name.encode())
        for tr in splits.split(name):
            digest.update(("\t".join(graph.triple_labels(tr)) + "\n").encode("utf-8"))
    return {"triples": len(splits.all_triples()), "sha256": digest.hexdigest()}


def graph_stats(graph: KnowledgeGraph, splits: DatasetSplits | None = None) -> StatsReport:
    """Counts and the two averages used by the cost model.

    With ``splits`` the triple count covers every split (the whole dataset);
    without it only the graph's own (train) triples are counted.
    """
    if splits is None:
        splits = DatasetSplits(list(graph.triples), [], [])
    n_triples = len(splits.train) + len(splits.valid) + len(splits.test)
    if n_triples == 0 or graph.num_entities == 0 or graph.num_relations == 0:
        raise DatasetError("statistics of an empty graph are undefined")

    seen = {e for tr in splits.train for e in (tr.head, tr.tail)}

    def unseen(triples: list[Triple]) -> int:
        return len({e for tr in triples for e in (tr.head, tr.tail)} - seen)

    return StatsReport(
        num_entities=graph.num_entities,
        num_relations=graph.num_relations,
        num_triples=n_triples,
        split_sizes={name: len(splits.split(name)) for name in SPLIT_NAMES},
        drug_target_sizes={name: len(splits.drug_target(name)) for name in SPLIT_NAMES},
        avg_density=Fraction(n_triples, graph.num_entities),
        avg_appearance=Fraction(n_triples, graph.num_relations),
        unseen_valid_entities=unseen(splits.valid),
        unseen_test_entities=unseen(splits.test),
    )


def split_sizes(total: int) -> tuple[int, int, int]:
    """90/5/5 split: valid and test get floor(5%), train takes the rest."""
    small = math.floor(total * 5 / 100)
    return total - 2 * small, small, small


def generate_synthetic(
    num_entities: int,
    num_relations: int,
    num_triples: int,
    seed: int,
    *,
    skew: float = 1.1,
    drug_target_fraction: float = 0.0,
    sizes: tuple[int, int, int] | None = None,
) -> tuple[KnowledgeGraph, DatasetSplits]:
    """Seeded random graph of distinct triples with skewed degrees.

    Heads follow a global power law with exponent ``skew``; each relation
    draws tails from its own power law over a relation-specific entity
    permutation, so the tail task carries learnable structure.  The first
    ``num_entities`` triples use every entity once as head and the first
    ``num_relations`` use every relation once, guaranteeing full coverage.
    The first ``round(num_relations * drug_target_fraction)`` relations are
    marked as drug-target relations.  ``sizes`` overrides the 90/5/5 split
    with explicit (train, valid, test) counts.
    """
    if min(num_entities, num_relations, num_triples) < 1:
        raise DatasetError("entity, relation and triple counts must be positive")
    if num_triples < max(num_entities, num_relations):
        raise DatasetError(
            f"num_triples={num_triples} cannot cover {num_entities} entities and {num_relations} relations"
        )
    if num_triples > num_entities * num_entities * num_relations:
        raise DatasetError(f"num_triples={num_triples} exceeds the number of distinct triples")
    if sizes is not None and (sum(sizes) != num_triples or min(sizes) < 0 or sizes[0] < 1):
        raise DatasetError(f"split sizes {sizes} do not partition {num_triples} triples")
    rng = np.random.default_rng(seed)
    weights = 1.0 / np.arange(1, num_entities + 1) ** skew
    weights /= weights.sum()
    head_order = rng.permutation(num_entities)
    tail_orders = rng.permutation(np.tile(np.arange(num_entities), (num_relations, 1)), axis=1)

    coverage_heads = rng.permutation(num_entities)
    seen: set[tuple[int, int, int]] = set()
    rows: list[tuple[int, int, int]] = []
    while len(rows) < num_triples:
        batch = max(64, 2 * (num_triples - len(rows)))
        heads = head_order[rng.choice(num_entities, size=batch, p=weights)]
        rels = rng.integers(0, num_relations, size=batch)
        tails = tail_orders[rels, rng.choice(num_entities, size=batch, p=weights)]
        for h, r, t in zip(heads.tolist(), rels.tolist(), tails.tolist()):
            i = len(rows)
            if i < num_entities:
                h = int(coverage_heads[i])
            if i < num_relations:
                r = i
            if (h, r, t) in seen:
                continue
            seen.add((h, r, t))
            rows.append((h, r, t))
            if len(rows) == num_triples:
                break

    order = rng.permutation(num_triples)
    labelled = [(f"e{rows[i][0]}", f"r{rows[i][1]}", f"e{rows[i][2]}") for i in order]
    n_train, n_valid, _ = sizes if sizes is not None else split_sizes(num_triples)
    n_dt = int(round(num_relations * drug_target_fraction))
    return from_labeled(
        labelled[:n_train],
        labelled[n_train : n_train + n_valid],
        labelled[n_train + n_valid :],
        drug_target_relations=[f"r{i}" for i in range(n_dt)],
    )
