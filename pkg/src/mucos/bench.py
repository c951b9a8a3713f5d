"""Analytical context-cost model and wall-clock comparison of FULL vs SAMPLED context construction.

Cost model (context tokens per tail query)::

    full    = 2 * avg_density + avg_appearance
    sampled = 2 * n + k
    speedup = full / sampled
"""

from __future__ import annotations

import statistics
import time
from dataclasses import dataclass
from fractions import Fraction
from numbers import Real
from typing import Optional, Sequence

from .context import ContextSampler, Mode
from .kg import StatsReport

# Values reported for KEGG50k (|T| = 63,080, |E| = 16,201, |R| = 9).
KEGG50K_REPORTED_AVG_DENSITY = Fraction("3.895")
KEGG50K_REPORTED_AVG_APPEARANCE = Fraction("7008.89")
KEGG50K_COUNTS = {"triples": 63080, "entities": 16201, "relations": 9}

MIN_QUERIES = 100
MIN_REPETITIONS = 3
MIN_TIMED_NS = 1_000_000


def exact(value: Real | str | Fraction) -> Fraction:
    """Decimal-exact fraction: 3.895 becomes 779/200, not the nearest binary float."""
    if isinstance(value, Fraction):
        return value
    if isinstance(value, int):
        return Fraction(value)
    return Fraction(str(value))


@dataclass
class ComplexityReport:
    avg_density: Fraction
    avg_appearance: Fraction
    n: int
    k: int
    cost_full: Fraction
    cost_sampled: Fraction
    speedup: Fraction
    reported_avg_density: Optional[Fraction] = None
    empirical_full_ns: Optional[float] = None
    empirical_sampled_ns: Optional[float] = None
    empirical_speedup: Optional[float] = None
    repetitions: Optional[int] = None
    queries: Optional[int] = None

    @property
    def density_discrepancy(self) -> Optional[Fraction]:
        if self.reported_avg_density is None:
            return None
        return self.reported_avg_density - self.avg_density

    def as_dict(self) -> dict[str, object]:
        out: dict[str, object] = {
            "avg_density": float(self.avg_density),
            "avg_appearance": float(self.avg_appearance),
            "n": self.n,
            "k": self.k,
            "cost_full": float(self.cost_full),
            "cost_sampled": float(self.cost_sampled),
            "speedup": float(self.speedup),
            "speedup_exact": str(self.speedup),
        }
        if self.reported_avg_density is not None:
            out["reported_avg_density"] = float(self.reported_avg_density)
            out["avg_density_discrepancy"] = float(self.density_discrepancy)
            out["avg_density_matches_reported"] = round(float(self.avg_density), 3) == float(self.reported_avg_density)
        if self.empirical_speedup is not None:
            out.update(
                empirical_full_ns=self.empirical_full_ns,
                empirical_sampled_ns=self.empirical_sampled_ns,
                empirical_speedup=self.empirical_speedup,
                repetitions=self.repetitions,
                queries=self.queries,
            )
        return out

    def to_text(self) -> str:
        rows = []
        for key, value in self.as_dict().items():
            if isinstance(value, float):
                value = f"{value:.6g}" if "ns" in key else f"{value:.4f}"
            rows.append((key, str(value)))
        width = max(len(k) for k, _ in rows)
        return "".join(f"{k.ljust(width)}  {v}\n" for k, v in rows)


def analytical_speedup(
    avg_density: Real | str | Fraction,
    avg_appearance: Real | str | Fraction,
    n: int = 15,
    k: int = 10,
    reported_avg_density: Real | str | Fraction | None = None,
) -> ComplexityReport:
    if n < 1 or k < 1:
        raise ValueError("n and k must be >= 1")
    density, appearance = exact(avg_density), exact(avg_appearance)
    full = 2 * density + appearance
    sampled = Fraction(2 * n + k)
    return ComplexityReport(
        avg_density=density,
        avg_appearance=appearance,
        n=n,
        k=k,
        cost_full=full,
        cost_sampled=sampled,
        speedup=full / sampled,
        reported_avg_density=None if reported_avg_density is None else exact(reported_avg_density),
    )


def speedup_from_stats(stats: StatsReport, n: int = 15, k: int = 10) -> ComplexityReport:
    """Cost model on recomputed dataset averages.

    For a KEGG50k-sized dataset the reported average density is attached so
    the gap between 3.895 and |T|/|E| stays visible.
    """
    counts = {"triples": stats.num_triples, "entities": stats.num_entities, "relations": stats.num_relations}
    reported = KEGG50K_REPORTED_AVG_DENSITY if counts == KEGG50K_COUNTS else None
    return analytical_speedup(stats.avg_density, stats.avg_appearance, n, k, reported)


def _time_pass(fn, loops: int) -> int:
    start = time.perf_counter_ns()
    for _ in range(loops):
        fn()
    return time.perf_counter_ns() - start


def _median_ns(fn, repetitions: int) -> tuple[float, int]:
    fn()  # warm-up
    loops = 1
    while _time_pass(fn, loops) < MIN_TIMED_NS:
        loops *= 2
    samples = [_time_pass(fn, loops) / loops for _ in range(repetitions)]
    return statistics.median(samples), loops


def empirical_bench(
    sampler: ContextSampler,
    queries: Sequence[tuple[int, int]],
    n: int = 15,
    k: int = 10,
    repetitions: int = 5,
) -> tuple[float, float, float]:
    """Median wall-clock (ns per pass over ``queries``) of FULL and SAMPLED head + relation contexts.

    Returns ``(full_ns, sampled_ns, full_ns / sampled_ns)``.  A pass shorter
    than 1 ms is repeated in a loop until it is timeable.
    """
    if len(queries) < MIN_QUERIES:
        raise ValueError(f"need at least {MIN_QUERIES} queries, got {len(queries)}")
    if repetitions < MIN_REPETITIONS:
        raise ValueError(f"need at least {MIN_REPETITIONS} repetitions")
    head, rel = sampler.head_context, sampler.relation_context
    full, sampled = Mode.FULL, Mode.SAMPLED

    def run_full():
        for h, r in queries:
            head(h, None, full)
            rel(r, None, full)

    def run_sampled():
        for h, r in queries:
            head(h, n, sampled)
            rel(r, k, sampled)

    full_ns, _ = _median_ns(run_full, repetitions)
    sampled_ns, _ = _median_ns(run_sampled, repetitions)
    return full_ns, sampled_ns, full_ns / sampled_ns


def bench_report(
    sampler: ContextSampler,
    stats: StatsReport,
    queries: Sequence[tuple[int, int]],
    n: int = 15,
    k: int = 10,
    repetitions: int = 5,
) -> ComplexityReport:
    report = speedup_from_stats(stats, n, k)
    full_ns, sampled_ns, ratio = empirical_bench(sampler, queries, n, k, repetitions)
    report.empirical_full_ns, report.empirical_sampled_ns, report.empirical_speedup = full_ns, sampled_ns, ratio
    report.repetitions, report.queries = repetitions, len(queries)
    return report
