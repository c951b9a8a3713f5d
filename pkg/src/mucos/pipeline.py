"""Run configuration and the triple -> input-sequence pipeline shared by training and evaluation."""

from __future__ import annotations

import dataclasses
import typing
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Optional, Sequence

import numpy as np

from .context import DEFAULT_K, DEFAULT_N, ContextSampler, Mode
from .density import DENSITY_MODES, build_density
from .kg import DatasetSplits, KnowledgeGraph, Triple
from .model import ENCODERS, EncoderConfig
from .optim import AdamWHyper
from .sequence import DEFAULT_MAX_LEN, TokenVocab, build_relation_query, build_tail_query

TASKS = ("relation", "tail")
SUBTASKS = ("general", "drug-target")
TAIL_CANDIDATES = ("all", "seen_tails")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class TrainConfig:
    task: str = "relation"
    subtask: str = "general"
    mode: str = "sampled"
    n: Optional[int] = DEFAULT_N
    k: Optional[int] = DEFAULT_K
    max_len: int = DEFAULT_MAX_LEN
    lr: float = 5e-5
    batch_size: int = 16
    epochs: int = 50
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.01
    encoder: str = "mean"
    dim: int = 64
    ff_dim: int = 128
    init_scale: float = 0.05
    density_mode: str = "both"
    undirected_context: bool = False
    use_head_context: bool = True
    use_tail_context: bool = True
    use_relation_context: bool = True
    filtered: bool = False
    tail_candidates: str = "all"
    eval_every: int = 1

    def __post_init__(self) -> None:
        choices = {
            "task": TASKS,
            "subtask": SUBTASKS,
            "mode": tuple(m.value for m in Mode),
            "encoder": ENCODERS,
            "density_mode": DENSITY_MODES,
            "tail_candidates": TAIL_CANDIDATES,
        }
        for name, allowed in choices.items():
            if getattr(self, name) not in allowed:
                raise ConfigError(f"{name} must be one of {allowed}, got {getattr(self, name)!r}")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.batch_size < 1 or self.epochs < 1:
            raise ConfigError("batch_size and epochs must be >= 1")
        for name in ("n", "k"):
            value = getattr(self, name)
            if value is not None and value < 1:
                raise ConfigError(f"{name} must be >= 1 or unlimited")

    @property
    def encoder_config(self) -> EncoderConfig:
        return EncoderConfig(self.encoder, self.dim, self.ff_dim, self.init_scale)

    @property
    def adamw(self) -> AdamWHyper:
        return AdamWHyper(self.lr, self.beta1, self.beta2, self.eps, self.weight_decay)

    def replace(self, **changes) -> "TrainConfig":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict[str, object]:
        return dataclasses.asdict(self)

    def to_text(self) -> str:
        return "".join(f"{k}={format_value(v)}\n" for k, v in self.as_dict().items())


def format_value(value: object) -> str:
    if value is None:
        return "inf"
    if isinstance(value, bool):
        return "true" if value else "false"
    return str(value)


def _coerce(name: str, raw: str, annotation) -> object:
    raw = raw.strip()
    optional = typing.get_origin(annotation) is typing.Union and type(None) in typing.get_args(annotation)
    base = next(a for a in typing.get_args(annotation) if a is not type(None)) if optional else annotation
    if optional and raw.lower() in ("inf", "none", "all"):
        return None
    try:
        if base is bool:
            lowered = raw.lower()
            if lowered in ("true", "1", "yes"):
                return True
            if lowered in ("false", "0", "no"):
                return False
            raise ValueError(raw)
        if base is int:
            return int(raw)
        if base is float:
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"bad value for {name}: {raw!r}") from None


_HINTS = typing.get_type_hints(TrainConfig)
_FIELDS = {f.name for f in fields(TrainConfig)}


def parse_overrides(pairs: dict[str, str]) -> dict[str, object]:
    unknown = sorted(set(pairs) - _FIELDS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return {k: _coerce(k, v, _HINTS[k]) for k, v in pairs.items()}


def parse_config_text(text: str, source: str = "<config>") -> dict[str, object]:
    """Parse flat ``key=value`` lines; ``#`` starts a comment."""
    pairs: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value")
        key, value = line.split("=", 1)
        pairs[key.strip()] = value
    return parse_overrides(pairs)


def load_config(path: Optional[str | Path] = None, **overrides) -> TrainConfig:
    """File values first, then ``overrides`` (only keys the caller actually set)."""
    values: dict[str, object] = {}
    if path is not None:
        values.update(parse_config_text(Path(path).read_text(), str(path)))
    unknown = sorted(set(overrides) - _FIELDS)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    values.update(overrides)
    try:
        return TrainConfig(**values)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


# -- triples -> sequences --------------------------------------------------------


def make_sampler(graph: KnowledgeGraph, config: TrainConfig) -> ContextSampler:
    return ContextSampler(graph, build_density(graph, config.density_mode), config.undirected_context)


def num_classes(graph: KnowledgeGraph, config: TrainConfig) -> int:
    return graph.num_relations if config.task == "relation" else graph.num_entities


def task_triples(splits: DatasetSplits, split: str, subtask: str) -> list[Triple]:
    return splits.drug_target(split) if subtask == "drug-target" else list(splits.split(split))


def encode_triples(
    triples: Sequence[Triple],
    sampler: ContextSampler,
    vocab: TokenVocab,
    config: TrainConfig,
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Token ids ``(N, max_len)``, masks and labels for the configured task."""
    mode = Mode(config.mode)
    tokens = np.zeros((len(triples), config.max_len), dtype=np.int64)
    mask = np.zeros_like(tokens)
    labels = np.zeros(len(triples), dtype=np.int64)
    for i, (h, r, t) in enumerate(triples):
        hc = sampler.head_context(h, config.n, mode) if config.use_head_context else []
        if config.task == "relation":
            tc = sampler.tail_context(t, config.n, mode) if config.use_tail_context else []
            seq = build_relation_query(h, t, hc, tc, vocab, config.max_len, r)
        else:
            rc = sampler.relation_context(r, config.k, mode) if config.use_relation_context else []
            seq = build_tail_query(h, r, hc, rc, vocab, config.max_len, t)
        tokens[i] = seq.token_ids
        mask[i] = seq.attention_mask
        labels[i] = seq.label
    return tokens, mask, labels


def trim(tokens: np.ndarray, mask: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Drop trailing all-PAD columns; outputs are unchanged by padding."""
    width = int(mask.sum(axis=1).max()) if len(mask) else 0
    return tokens[:, :width], mask[:, :width]


def batches(order: Iterable[int], size: int):
    order = list(order)
    for start in range(0, len(order), size):
        yield order[start : start + size]
