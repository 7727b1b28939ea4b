"""Render reports as human tables or machine-readable JSON.

Tables round to 2 decimals; machine output keeps full precision and carries
the effective run configuration for provenance.
"""

from __future__ import annotations

import json
import math

from .corpus import CorpusStats
from .evaluate import FeatureRanking, MetricsReport, MetricsRow

TABLE = "table"
MACHINE = "machine"
FORMATS = (TABLE, MACHINE)


def _config_header(config: dict | None) -> list[str]:
    if not config:
        return []
    parts = []
    for key, value in config.items():
        if isinstance(value, dict):
            # flatten one level of scalars (hyperparams); grids stay machine-only
            parts.extend(
                f"{key}.{k}={v}" for k, v in value.items() if not isinstance(v, (dict, list))
            )
        else:
            parts.append(f"{key}={value}")
    return [f"# config: {' '.join(parts)}"]


def _row_cells(row: MetricsRow) -> list[str]:
    return [
        row.label,
        f"{row.precision:.2f}",
        f"{row.recall:.2f}",
        f"{row.f_measure:.2f}",
        f"{row.support:.2f}",
    ]


def metrics_table(report: MetricsReport, config: dict | None = None) -> str:
    header = ["label", "precision", "recall", "f-measure", "support"]
    body = [_row_cells(row) for row in report.rows] + [_row_cells(report.average_row)]
    widths = [max(len(header[i]), *(len(cells[i]) for cells in body)) for i in range(len(header))]
    lines = _config_header(config)
    lines.append("  ".join(header[i].ljust(widths[i]) for i in range(len(header))))
    for cells in body[:-1]:
        lines.append("  ".join(cells[i].ljust(widths[i]) for i in range(len(header))))
    lines.append("-" * (sum(widths) + 2 * (len(header) - 1)))
    lines.append("  ".join(body[-1][i].ljust(widths[i]) for i in range(len(header))))
    return "\n".join(lines) + "\n"


def _row_dict(row: MetricsRow) -> dict:
    return {
        "label": row.label,
        "precision": row.precision,
        "recall": row.recall,
        "f_measure": row.f_measure,
        "support": row.support,
    }


def metrics_machine(report: MetricsReport, config: dict | None = None) -> str:
    doc = {
        "config": config or {},
        "rows": [_row_dict(row) for row in report.rows],
        "avg_total": _row_dict(report.average_row),
        "folds": [[_row_dict(row) for row in rows] for rows in report.fold_rows],
    }
    return json.dumps(doc, ensure_ascii=True, sort_keys=True) + "\n"


def _score_str(score: float) -> str:
    return "inf" if math.isinf(score) else f"{score:.2f}"


def ranking_table(
    rankings: list[FeatureRanking], printed_order: bool = False, config: dict | None = None
) -> str:
    """One line per label, features best-first (or mirrored with printed_order)."""
    lines = _config_header(config)
    for ranking in rankings:
        ranked = list(reversed(ranking.ranked)) if printed_order else ranking.ranked
        feats = ", ".join(f"{name} ({_score_str(score)})" for name, score in ranked)
        lines.append(f"{ranking.label}: {feats}")
    return "\n".join(lines) + "\n"


def ranking_machine(rankings: list[FeatureRanking], config: dict | None = None) -> str:
    doc = {
        "config": config or {},
        "rankings": [
            {
                "label": r.label,
                "features": [
                    {"name": name, "score": "inf" if math.isinf(score) else score}
                    for name, score in r.ranked
                ],
            }
            for r in rankings
        ],
    }
    return json.dumps(doc, ensure_ascii=True, sort_keys=True) + "\n"


def stats_table(stats: CorpusStats, config: dict | None = None) -> str:
    lines = _config_header(config)
    lines.append(f"conversations: {stats.conversation_count}")
    lines.append(f"turns: {stats.turn_count}")
    for speaker, count in sorted(stats.per_speaker_turn_counts.items()):
        lines.append(f"{speaker} turns: {count}")
    lines.append("label counts:")
    for name, count in stats.label_counts.items():
        lines.append(f"  {name}: {count}")
    if stats.excluded_label_counts:
        lines.append("excluded label counts:")
        for name, count in sorted(stats.excluded_label_counts.items()):
            lines.append(f"  {name}: {count}")
    return "\n".join(lines) + "\n"


def stats_machine(stats: CorpusStats, config: dict | None = None) -> str:
    doc = {
        "config": config or {},
        "conversation_count": stats.conversation_count,
        "turn_count": stats.turn_count,
        "per_speaker_turn_counts": stats.per_speaker_turn_counts,
        "label_counts": stats.label_counts,
        "excluded_label_counts": stats.excluded_label_counts,
    }
    return json.dumps(doc, ensure_ascii=True, sort_keys=True) + "\n"
