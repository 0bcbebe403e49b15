"""Report files: versioned JSON, CSV tables, and standalone SVG bar charts."""

from __future__ import annotations

import csv
import io
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

from ..geo.iso import iso_a3
from .metrics import FoldAggregate, MetricsReport, aggregate_from_dict
from .stats import CountRow, DatasetStats

log = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = 1

PER_CLASS_COLUMNS = (
    "country", "iso_a3", "support", "precision", "precision_std", "recall", "recall_std",
    "f1", "f1_std", "folds_present", "undefined",
)
CHOROPLETH_COLUMNS = ("iso_a3", "country", "count")
COUNT_TABLE_COLUMNS = ("rank", "name", "count", "percentage", "cumulative_percentage")
DISTRIBUTION_COLUMNS = ("country", "count", "percentage")


@dataclass
class ReportBundle:
    """Everything a report is rendered from.

    ``folds`` holds one report per fold (a single holdout run has one entry);
    ``aggregate`` is present for cross-validation.
    """

    folds: list[MetricsReport]
    aggregate: FoldAggregate | None = None
    stats: DatasetStats | None = None
    distribution: list[tuple[str, int, float]] | None = None
    provenance: dict = field(default_factory=dict)

    @property
    def summary(self) -> MetricsReport:
        return self.aggregate.mean if self.aggregate is not None else self.folds[0]

    def to_dict(self) -> dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "provenance": self.provenance,
            "folds": [r.to_dict() for r in self.folds],
            "aggregate": None if self.aggregate is None else self.aggregate.to_dict(),
            "stats": None if self.stats is None else self.stats.to_dict(),
            "distribution": None if self.distribution is None else [list(r) for r in self.distribution],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ReportBundle":
        version = d.get("schema_version")
        if version != REPORT_SCHEMA_VERSION:
            raise ValueError(f"unsupported report schema version {version}")
        stats = None
        if d.get("stats") is not None:
            s = dict(d["stats"])
            s["countries"] = [CountRow(**r) for r in s["countries"]]
            s["species"] = [CountRow(**r) for r in s["species"]]
            stats = DatasetStats(**s)
        dist = None if d.get("distribution") is None else [tuple(r) for r in d["distribution"]]
        return cls(
            folds=[MetricsReport.from_dict(r) for r in d["folds"]],
            aggregate=None if d.get("aggregate") is None else aggregate_from_dict(d["aggregate"]),
            stats=stats,
            distribution=dist,
            provenance=dict(d.get("provenance") or {}),
        )


def load_report(path) -> ReportBundle:
    return ReportBundle.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def _num(v: float | None) -> str:
    return "" if v is None else f"{v:.6f}"


def per_class_csv(bundle: ReportBundle, iso_overrides: Mapping[str, str] | None = None) -> str:
    mean = bundle.summary
    std = bundle.aggregate.std if bundle.aggregate is not None else None
    present = bundle.aggregate.per_class_folds if bundle.aggregate is not None else None
    rows = []
    for i, c in enumerate(mean.per_class):
        s = std.per_class[i] if std is not None else None
        rows.append(
            [
                c.label,
                iso_a3(c.label, iso_overrides) or "",
                c.support,
                _num(c.precision),
                _num(s.precision if s else None),
                _num(c.recall),
                _num(s.recall if s else None),
                _num(c.f1),
                _num(s.f1 if s else None),
                present[i] if present is not None else int(c.support > 0),
                ";".join(c.undefined),
            ]
        )
    return _csv(PER_CLASS_COLUMNS, rows)


def choropleth_csv(stats: DatasetStats, iso_overrides: Mapping[str, str] | None = None) -> str:
    rows = []
    for r in stats.countries:
        code = iso_a3(r.name, iso_overrides)
        if code is None:
            log.warning("no ISO alpha-3 code for %r", r.name)
        rows.append([code or "", r.name, r.count])
    return _csv(CHOROPLETH_COLUMNS, rows)


def count_table_csv(rows: Sequence[CountRow], top_n: int | None = 20) -> str:
    sel = rows if top_n is None else rows[:top_n]
    return _csv(
        COUNT_TABLE_COLUMNS,
        [[r.rank, r.name, r.count, f"{r.percentage:.2f}", f"{r.cumulative_percentage:.2f}"] for r in sel],
    )


def distribution_csv(dist: Sequence[tuple[str, int, float]]) -> str:
    return _csv(DISTRIBUTION_COLUMNS, [[n, c, f"{p:.2f}"] for n, c, p in dist])


def bar_chart_svg(title: str, items: Sequence[tuple[str, float]], errors: Sequence[float] | None = None) -> str:
    """Horizontal bars for values in [0, 1], one row per item, no external assets."""
    row_h, label_w, bar_w, pad = 18, 180, 360, 10
    height = pad * 2 + 24 + row_h * max(len(items), 1)
    width = label_w + bar_w + 70
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<text x="{pad}" y="{pad + 12}" font-size="13" font-weight="bold">{escape(title)}</text>',
    ]
    for i, (name, value) in enumerate(items):
        y = pad + 24 + i * row_h
        v = 0.0 if value is None or math.isnan(value) else min(max(value, 0.0), 1.0)
        w = v * bar_w
        out.append(f'<text x="{label_w - 6}" y="{y + 12}" text-anchor="end">{escape(name)}</text>')
        out.append(f'<rect x="{label_w}" y="{y + 2}" width="{w:.2f}" height="{row_h - 5}" fill="#4a7ab5"/>')
        if errors is not None and errors[i]:
            e = min(errors[i], 1.0) * bar_w
            lo, hi = max(label_w + w - e, label_w), min(label_w + w + e, label_w + bar_w)
            out.append(f'<line x1="{lo:.2f}" y1="{y + 8}" x2="{hi:.2f}" y2="{y + 8}" stroke="#222"/>')
        out.append(f'<text x="{label_w + bar_w + 6}" y="{y + 12}">{v:.3f}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(
    bundle: ReportBundle,
    out_dir,
    svg: bool = True,
    iso_overrides: Mapping[str, str] | None = None,
) -> dict[str, Path]:
    """Write the report files under ``out_dir``; returns ``{kind: path}``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files: dict[str, str] = {
        "json": ("report.json", json.dumps(bundle.to_dict(), indent=2, sort_keys=True) + "\n"),
        "per_country": ("per_country_metrics.csv", per_class_csv(bundle, iso_overrides)),
    }
    if bundle.stats is not None:
        files.update(_stats_files(bundle.stats, iso_overrides))
    if bundle.distribution is not None:
        files["distribution"] = ("country_distribution.csv", distribution_csv(bundle.distribution))
    if svg:
        s = bundle.summary
        std = bundle.aggregate.std if bundle.aggregate is not None else None
        shown = [i for i, c in enumerate(s.per_class) if c.support > 0]
        order = sorted(shown, key=lambda i: (-s.per_class[i].f1, s.labels[i]))
        for metric in ("f1", "precision"):
            items = [(s.labels[i], getattr(s.per_class[i], metric)) for i in order]
            errs = [getattr(std.per_class[i], metric) for i in order] if std is not None else None
            files[f"{metric}_svg"] = (f"{metric}_by_country.svg", bar_chart_svg(f"Average {metric} by country", items, errs))
    return _write_all(out, files)


def _stats_files(stats: DatasetStats, iso_overrides=None) -> dict[str, tuple[str, str]]:
    return {
        "choropleth": ("choropleth_counts.csv", choropleth_csv(stats, iso_overrides)),
        "country_table": ("top_countries.csv", count_table_csv(stats.countries)),
        "species_table": ("top_species.csv", count_table_csv(stats.species)),
    }


def _write_all(out: Path, files: Mapping[str, tuple[str, str]]) -> dict[str, Path]:
    paths = {}
    for kind, (name, text) in files.items():
        p = out / name
        p.write_text(text, encoding="utf-8")
        paths[kind] = p
    return paths


def emit_stats(
    stats: DatasetStats, out_dir, iso_overrides: Mapping[str, str] | None = None, provenance: dict | None = None
) -> dict[str, Path]:
    """Dataset statistics alone: JSON plus the country, species and choropleth tables."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    doc = {"schema_version": REPORT_SCHEMA_VERSION, "provenance": provenance or {}, "stats": stats.to_dict()}
    files = {"json": ("dataset_stats.json", json.dumps(doc, indent=2, sort_keys=True) + "\n")}
    files.update(_stats_files(stats, iso_overrides))
    return _write_all(out, files)
