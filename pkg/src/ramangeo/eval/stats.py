"""Dataset composition statistics: per-country and per-species tables."""

from __future__ import annotations

from collections import Counter
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

from ..geo.ingest import SampleRecord


@dataclass
class CountRow:
    rank: int
    name: str
    count: int
    percentage: float
    cumulative_percentage: float


@dataclass
class DatasetStats:
    """Counts over a manifest.

    Country shares use natural samples with an assigned country as the
    denominator; species shares use every row.
    """

    total: int
    natural: int
    synthetic: int
    geocoded: int
    missing_coordinates: int
    with_country: int
    unique_species: int
    countries: list[CountRow] = field(default_factory=list)
    species: list[CountRow] = field(default_factory=list)

    def country(self, name: str) -> CountRow | None:
        return next((r for r in self.countries if r.name == name), None)

    def to_dict(self) -> dict:
        return asdict(self)


def ranked_counts(counter: Counter, denominator: int | None = None) -> list[CountRow]:
    """Rows sorted by count (descending), ties broken by name."""
    denom = sum(counter.values()) if denominator is None else denominator
    rows, running = [], 0
    for rank, (name, n) in enumerate(sorted(counter.items(), key=lambda kv: (-kv[1], str(kv[0]))), start=1):
        running += n
        rows.append(CountRow(rank, str(name), int(n), 100.0 * n / denom, 100.0 * running / denom))
    return rows


def dataset_stats(rows: Iterable[SampleRecord]) -> DatasetStats:
    rows = list(rows)
    if not rows:
        raise ValueError("empty manifest")
    natural = [r for r in rows if not r.is_synthetic]
    geocoded = [r for r in natural if r.latitude is not None]
    with_country = [r for r in geocoded if r.country]
    countries = Counter(r.country for r in with_country)
    species = Counter(r.mineral_name for r in rows)
    return DatasetStats(
        total=len(rows),
        natural=len(natural),
        synthetic=len(rows) - len(natural),
        geocoded=len(geocoded),
        missing_coordinates=len(natural) - len(geocoded),
        with_country=len(with_country),
        unique_species=len(species),
        countries=ranked_counts(countries) if countries else [],
        species=ranked_counts(species),
    )


def distribution_table(labels: Sequence[str], top_n: int = 3) -> list[tuple[str, int, float]]:
    """Top ``top_n`` classes then an ``Others`` bucket: ``(name, count, percent)``."""
    if not labels:
        raise ValueError("no labels")
    ranked = ranked_counts(Counter(labels))
    total = len(labels)
    out = [(r.name, r.count, r.percentage) for r in ranked[:top_n]]
    rest = sum(r.count for r in ranked[top_n:])
    if rest:
        out.append(("Others", rest, 100.0 * rest / total))
    return out
