from .metrics import (
    ClassMetrics,
    ConfusionMatrix,
    FoldAggregate,
    MetricsReport,
    aggregate_folds,
    aggregate_from_dict,
    confusion_matrix,
    per_class_metrics,
)
from .report import REPORT_SCHEMA_VERSION, ReportBundle, bar_chart_svg, emit_report, emit_stats, load_report
from .stats import CountRow, DatasetStats, dataset_stats, distribution_table, ranked_counts

__all__ = [
    "REPORT_SCHEMA_VERSION",
    "ClassMetrics",
    "ConfusionMatrix",
    "CountRow",
    "DatasetStats",
    "FoldAggregate",
    "MetricsReport",
    "ReportBundle",
    "aggregate_folds",
    "aggregate_from_dict",
    "bar_chart_svg",
    "confusion_matrix",
    "dataset_stats",
    "distribution_table",
    "emit_report",
    "emit_stats",
    "load_report",
    "per_class_metrics",
    "ranked_counts",
]
