"""Command-line entry point: ``mucos <command> ...``.

Every command that produces a report writes it to its own run directory
(``<out>/<command>-<timestamp>-seed<seed>``) as ``report.json`` and
``report.txt``, each carrying the run manifest.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from datetime import datetime, timezone
from fractions import Fraction
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from .bench import bench_report, analytical_speedup, speedup_from_stats
from .context import ContextBundle, Mode
from .evaluate import EvaluationError, evaluate_triples, format_table
from .kg import (
    DatasetError,
    DatasetSplits,
    KnowledgeGraph,
    fingerprint,
    generate_synthetic,
    graph_stats,
    ingest_tsv,
    load_dataset,
    save_dataset,
)
from .model import CheckpointError, EncoderModel
from .optim import NonFiniteGradientError
from .pipeline import ConfigError, TrainConfig, load_config, make_sampler, parse_config_text, parse_overrides, task_triples
from .sequence import TokenVocab
from .train import TrainingError, train

logger = logging.getLogger("mucos")

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_MISSING_FILE = 4
EXIT_DATASET = 5
EXIT_CHECKPOINT = 6
EXIT_TRAINING = 7
EXIT_EVALUATION = 8

DEFAULT_OUT = "runs"
BENCH_QUERIES = 200

# Report entries that vary between otherwise identical runs.
VOLATILE_KEYS = ("timestamps", "timing")


def stable_view(doc: dict) -> dict:
    """A report document with wall-clock entries removed, for run-to-run comparison."""
    out = {k: v for k, v in doc.items() if k not in VOLATILE_KEYS}
    if isinstance(out.get("manifest"), dict):
        out["manifest"] = {k: v for k, v in out["manifest"].items() if k not in VOLATILE_KEYS}
    return out


def _json_default(value):
    if isinstance(value, Fraction):
        return str(value)
    if isinstance(value, Path):
        return str(value)
    raise TypeError(f"cannot serialise {type(value).__name__}")


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class Run:
    """Output directory plus manifest for one invocation."""

    def __init__(self, command: str, out_root: str | Path, seed: int) -> None:
        self.command = command
        self.seed = seed
        self.started = _now()
        stamp = datetime.now(timezone.utc).strftime("%Y%m%dT%H%M%S")
        base = Path(out_root) / f"{command}-{stamp}-seed{seed}"
        path, suffix = base, 1
        while path.exists():
            suffix += 1
            path = base.with_name(f"{base.name}-{suffix}")
        path.mkdir(parents=True)
        self.dir = path
        self.manifest: dict[str, object] = {
            "command": command,
            "version": __version__,
            "seed": seed,
            "config": None,
            "dataset": None,
            "inputs": {},
        }

    def write(self, report: dict, text: str, timing: Optional[dict] = None) -> Path:
        self.manifest["timestamps"] = {"started": self.started, "finished": _now()}
        doc = {"manifest": self.manifest, "report": report, "timing": timing or {}}
        (self.dir / "report.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=_json_default) + "\n")
        header = "".join(
            f"# {k}: {json.dumps(v, sort_keys=True, default=_json_default)}\n" for k, v in sorted(self.manifest.items())
        )
        (self.dir / "report.txt").write_text(header + text)
        return self.dir


# -- argument handling ----------------------------------------------------------


def _common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="PATH", help="key=value config file")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--mode", choices=[m.value for m in Mode])
    parser.add_argument("--n", metavar="INT", help="entity budget per context ('inf' for no limit)")
    parser.add_argument("--k", metavar="INT", help="pair budget for relation context ('inf' for no limit)")
    parser.add_argument("--task", choices=["relation", "tail"])
    parser.add_argument("--subtask", choices=["general", "drug-target"])
    parser.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="any other config field")
    parser.add_argument("--out", metavar="DIR", help="run output root (default: $MUCOS_OUT or ./runs)")


def _overrides(args: argparse.Namespace) -> dict[str, object]:
    pairs: dict[str, str] = {}
    for item in args.set:
        if "=" not in item:
            raise ConfigError(f"--set expects KEY=VALUE, got {item!r}")
        key, value = item.split("=", 1)
        pairs[key.strip()] = value
    for name in ("seed", "mode", "n", "k", "task", "subtask"):
        value = getattr(args, name, None)
        if value is not None:
            pairs[name] = str(value)
    return parse_overrides(pairs)


def _config(args: argparse.Namespace, base: Optional[dict] = None) -> TrainConfig:
    values = dict(base or {})
    if args.config:
        path = Path(args.config)
        if not path.is_file():
            raise FileNotFoundError(f"config file {path} not found")
        values.update(parse_config_text(path.read_text(), str(path)))
    values.update(_overrides(args))
    return load_config(**values)


def _out_root(args: argparse.Namespace) -> str:
    return args.out or os.environ.get("MUCOS_OUT") or DEFAULT_OUT


def _dataset(path: str) -> tuple[KnowledgeGraph, DatasetSplits]:
    if not Path(path).is_dir():
        raise FileNotFoundError(f"dataset directory {path} not found")
    return load_dataset(path)


def _start(command: str, args, config: Optional[TrainConfig], graph=None, splits=None, **inputs) -> Run:
    seed = config.seed if config is not None else (args.seed if args.seed is not None else 0)
    run = Run(command, _out_root(args), seed)
    run.manifest["config"] = config.as_dict() if config is not None else None
    if graph is not None:
        run.manifest["dataset"] = fingerprint(graph, splits)
    run.manifest["inputs"] = inputs
    return run


def _kv_text(d: dict) -> str:
    return "".join(f"{k}={v}\n" for k, v in d.items())


def _store(run: Run, graph: KnowledgeGraph, splits: DatasetSplits, dest: Path) -> int:
    save_dataset(graph, splits, dest)
    stats = graph_stats(graph, splits)
    # relative inside the run dir, so the report does not depend on the timestamp
    shown = dest.relative_to(run.dir) if dest.is_relative_to(run.dir) else dest
    run.write({"dataset_dir": str(shown), "stats": stats.as_dict()}, stats.to_text())
    print(dest)
    return EXIT_OK


# -- commands --------------------------------------------------------------------


def cmd_ingest(args) -> int:
    for p in (args.train, args.valid, args.test):
        if p is not None and not Path(p).is_file():
            raise FileNotFoundError(f"{p} not found")
    drug = [s for s in (args.drug_target or "").split(",") if s]
    graph, splits = ingest_tsv(args.train, args.valid, args.test, None if args.whitespace else "\t", drug)
    run = _start("ingest", args, None, graph, splits, train=args.train, valid=args.valid, test=args.test)
    dest = Path(args.dest) if args.dest else run.dir / "dataset"
    return _store(run, graph, splits, dest)


def cmd_synth(args) -> int:
    seed = args.seed if args.seed is not None else 0
    graph, splits = generate_synthetic(
        args.entities, args.relations, args.triples, seed, skew=args.skew, drug_target_fraction=args.drug_target_fraction
    )
    params = {
        "entities": args.entities,
        "relations": args.relations,
        "triples": args.triples,
        "skew": args.skew,
        "drug_target_fraction": args.drug_target_fraction,
    }
    run = _start("synth", args, None, graph, splits, **params)
    dest = Path(args.dest) if args.dest else run.dir / "dataset"
    return _store(run, graph, splits, dest)


def cmd_stats(args) -> int:
    graph, splits = _dataset(args.dataset)
    stats = graph_stats(graph, splits)
    run = _start("stats", args, None, graph, splits, dataset=args.dataset)
    run.write(stats.as_dict(), stats.to_text())
    sys.stdout.write(stats.to_text())
    return EXIT_OK


def _lookup(vocab, label: str, kind: str) -> Optional[int]:
    if label == "?":
        return None
    if label not in vocab:
        raise DatasetError(f"unknown {kind} {label!r}")
    return vocab.id(label)


def cmd_sample(args) -> int:
    graph, splits = _dataset(args.dataset)
    config = _config(args)
    sampler = make_sampler(graph, config)
    h = _lookup(graph.entities, args.head, "entity")
    r = _lookup(graph.relations, args.relation, "relation")
    t = _lookup(graph.entities, args.tail, "entity")
    if h is None:
        raise DatasetError("the head entity must be given")
    mode = Mode(config.mode)
    hc = sampler.head_context(h, config.n, mode)
    tc = sampler.tail_context(t, config.n, mode) if t is not None else None
    rc = sampler.relation_context(r, config.k, mode) if r is not None else None
    line = ContextBundle(hc, tc, rc, mode, config.n, config.k).render(graph)
    run = _start("sample", args, config, graph, splits, query=[args.head, args.relation, args.tail])
    run.write({"context": line}, line + "\n")
    print(line)
    return EXIT_OK


def cmd_train(args) -> int:
    graph, splits = _dataset(args.dataset)
    config = _config(args)
    run = _start("train", args, config, graph, splits, dataset=args.dataset)
    _, report = train(graph, splits, config, out_dir=run.dir)
    summary = report.as_dict()
    timing = {k: summary.pop(k) for k in ("context_seconds", "train_seconds")}
    summary["checkpoint"] = Path(report.checkpoint).name if report.checkpoint else None
    run.write(summary, _kv_text(summary), timing)
    print(f"final_loss={summary['final_loss']:.6f} checkpoint={run.dir / (summary['checkpoint'] or '')}")
    return EXIT_OK


def cmd_eval(args) -> int:
    graph, splits = _dataset(args.dataset)
    if not Path(args.checkpoint).is_file():
        raise FileNotFoundError(f"checkpoint {args.checkpoint} not found")
    vocab = TokenVocab.for_graph(graph)
    model, extra = EncoderModel.load(args.checkpoint, len(vocab))
    config = _config(args, base=extra.get("config"))
    expected = graph.num_relations if config.task == "relation" else graph.num_entities
    if model.num_classes != expected:
        raise CheckpointError(f"checkpoint has {model.num_classes} classes, {config.task} task needs {expected}")
    triples = task_triples(splits, args.split, config.subtask)
    report = evaluate_triples(model, graph, splits, triples, config)
    report.subtask = config.subtask
    run = _start("eval", args, config, graph, splits, dataset=args.dataset, checkpoint=Path(args.checkpoint).name, split=args.split)
    doc = report.as_dict() | {"split": args.split, "ranks": report.ranks}
    table = format_table([report])
    run.write(doc, table)
    sys.stdout.write(table)
    return EXIT_OK


def cmd_bench(args) -> int:
    limits = parse_overrides({name: getattr(args, name) for name in ("n", "k") if getattr(args, name) is not None})
    n, k = limits.get("n", 15), limits.get("k", 10)
    if n is None or k is None:
        raise ConfigError("bench needs finite n and k")
    if args.dataset is None:
        if args.avg_density is None or args.avg_appearance is None:
            raise ConfigError("bench needs a dataset or both --avg-density and --avg-appearance")
        report = analytical_speedup(args.avg_density, args.avg_appearance, n, k)
        run = _start("bench", args, None, avg_density=args.avg_density, avg_appearance=args.avg_appearance, n=n, k=k)
    else:
        graph, splits = _dataset(args.dataset)
        stats = graph_stats(graph, splits)
        if args.analytical_only:
            report = speedup_from_stats(stats, n, k)
        else:
            config = TrainConfig(n=n, k=k)
            sampler = make_sampler(graph, config)
            queries = [(h, r) for h, r, _ in graph.triples[:BENCH_QUERIES]]
            queries = (queries * (BENCH_QUERIES // len(queries) + 1))[:BENCH_QUERIES]
            report = bench_report(sampler, stats, queries, n, k, args.repetitions)
        run = _start("bench", args, None, graph, splits, dataset=args.dataset, n=n, k=k)
    doc = report.as_dict()
    timing = {key: doc.pop(key) for key in list(doc) if key.startswith("empirical")}
    run.write(doc, report.to_text(), timing)
    sys.stdout.write(report.to_text())
    print(f"speedup ~= {float(report.speedup):.2f}")
    return EXIT_OK


# -- entry point -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="mucos", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("ingest", help="load TSV splits into a dataset directory")
    p.add_argument("train")
    p.add_argument("--valid")
    p.add_argument("--test")
    p.add_argument("--whitespace", action="store_true", help="split rows on any whitespace instead of tabs")
    p.add_argument("--drug-target", metavar="R1,R2", help="comma-separated drug-target relation labels")
    p.add_argument("--dest", metavar="DIR", help="dataset directory (default: <run>/dataset)")
    _common(p)
    p.set_defaults(func=cmd_ingest)

    p = sub.add_parser("synth", help="generate a seeded synthetic dataset")
    p.add_argument("--entities", type=int, required=True)
    p.add_argument("--relations", type=int, required=True)
    p.add_argument("--triples", type=int, required=True)
    p.add_argument("--skew", type=float, default=1.1)
    p.add_argument("--drug-target-fraction", type=float, default=0.0)
    p.add_argument("--dest", metavar="DIR")
    _common(p)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("stats", help="dataset statistics")
    p.add_argument("dataset")
    _common(p)
    p.set_defaults(func=cmd_stats)

    p = sub.add_parser("sample", help="print the contexts for a query such as 'A r1 ?'")
    p.add_argument("dataset")
    p.add_argument("head")
    p.add_argument("relation")
    p.add_argument("tail")
    _common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("train", help="train a model and write checkpoints")
    p.add_argument("dataset")
    _common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="rank held-out queries with a checkpoint")
    p.add_argument("dataset")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--split", choices=["train", "valid", "test"], default="test")
    _common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", help="analytical and measured context-construction speedup")
    p.add_argument("dataset", nargs="?")
    p.add_argument("--avg-density")
    p.add_argument("--avg-appearance")
    p.add_argument("--repetitions", type=int, default=5)
    p.add_argument("--analytical-only", action="store_true")
    _common(p)
    p.set_defaults(func=cmd_bench)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        code, msg = EXIT_MISSING_FILE, str(exc)
    except ConfigError as exc:
        code, msg = EXIT_CONFIG, str(exc)
    except CheckpointError as exc:
        code, msg = EXIT_CHECKPOINT, str(exc)
    except DatasetError as exc:
        code, msg = EXIT_DATASET, str(exc)
    except (TrainingError, NonFiniteGradientError) as exc:
        code, msg = EXIT_TRAINING, str(exc)
    except EvaluationError as exc:
        code, msg = EXIT_EVALUATION, str(exc)
    except ValueError as exc:
        code, msg = EXIT_USAGE, str(exc)
    print(f"mucos: error: {msg}", file=sys.stderr)
    return code


if __name__ == "__main__":
    sys.exit(main())
