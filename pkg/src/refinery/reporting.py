"""Render benchmark results: aligned tables, CSV, JSON and figures.

The report path writes the delimited outputs next to PNG figures so a run
can be read from a terminal or dropped into a writeup unchanged.
"""

from __future__ import annotations

import csv
import json
import os
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .evaluate import GroupReportRow

__all__ = [
    "refinement_table",
    "effort_table",
    "generalization_table",
    "write_report_files",
    "render_figures",
    "rows_from_stats_document",
]

_REFINEMENT_COLUMNS = ("group", "before_map", "after_map", "human_images", "human_boxes")
_EFFORT_COLUMNS = (
    "group",
    "human_images",
    "human_boxes",
    "al_queries",
    "ssl_images",
    "pseudo_label_map",
)
_GENERALIZATION_COLUMNS = ("group", "heldout_before", "heldout_after")


def _format_cell(value) -> str:
    if isinstance(value, float):
        return f"{value * 100:.1f}%" if 0.0 <= value <= 1.0 else f"{value:.3f}"
    return str(value)


def _aligned(rows: list[GroupReportRow], columns: tuple[str, ...], title: str) -> str:
    header = [c.replace("_", " ") for c in columns]
    body = [[_format_cell(getattr(r, c)) for c in columns] for r in rows]
    widths = [
        max(len(header[i]), *(len(b[i]) for b in body)) if body else len(header[i])
        for i in range(len(columns))
    ]
    def fmt(cells):
        return "  ".join(c.rjust(w) for c, w in zip(cells, widths))
    lines = [title, fmt(header), fmt(["-" * w for w in widths])]
    lines.extend(fmt(b) for b in body)
    return "\n".join(lines)


def refinement_table(rows: list[GroupReportRow]) -> str:
    """Before/after accuracy with the manual annotation cost."""
    return _aligned(rows, _REFINEMENT_COLUMNS, "Refinement on the explored sequence")


def effort_table(rows: list[GroupReportRow]) -> str:
    """Annotation effort breakdown and pseudo-label quality."""
    return _aligned(rows, _EFFORT_COLUMNS, "Annotation effort")


def generalization_table(rows: list[GroupReportRow]) -> str:
    """Before/after accuracy on the held-out sequence."""
    return _aligned(rows, _GENERALIZATION_COLUMNS, "Generalization to the held-out sequence")


def rows_from_stats_document(doc: dict) -> list[GroupReportRow]:
    return [GroupReportRow(**g["row"]) for g in doc["groups"]]


def write_report_files(rows: list[GroupReportRow], out_dir: str | os.PathLike) -> dict[str, Path]:
    """Write report.txt / report.csv / report.json plus figures; return paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths: dict[str, Path] = {}

    text = "\n\n".join(
        [refinement_table(rows), effort_table(rows), generalization_table(rows)]
    )
    paths["text"] = out / "report.txt"
    paths["text"].write_text(text + "\n")

    paths["csv"] = out / "report.csv"
    with open(paths["csv"], "w", newline="", encoding="utf-8") as fh:
        fieldnames = list(rows[0].as_dict()) if rows else ["group"]
        writer = csv.DictWriter(fh, fieldnames=fieldnames)
        writer.writeheader()
        for r in rows:
            writer.writerow(r.as_dict())

    paths["json"] = out / "report.json"
    with open(paths["json"], "w", encoding="utf-8") as fh:
        json.dump([r.as_dict() for r in rows], fh, indent=2, sort_keys=True)

    paths.update(render_figures(rows, out))
    return paths


def render_figures(rows: list[GroupReportRow], out_dir: str | os.PathLike) -> dict[str, Path]:
    """Bar charts of the before/after accuracies and the annotation effort."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    groups = [r.group for r in rows]
    x = np.arange(len(rows))
    width = 0.38
    paths: dict[str, Path] = {}

    fig, axes = plt.subplots(1, 2, figsize=(10, 4), sharey=True)
    for ax, before, after, title in (
        (axes[0], [r.before_map for r in rows], [r.after_map for r in rows], "explored sequence"),
        (
            axes[1],
            [r.heldout_before for r in rows],
            [r.heldout_after for r in rows],
            "held-out sequence",
        ),
    ):
        ax.bar(x - width / 2, np.asarray(before) * 100, width, label="before", color="#b0b0b0")
        ax.bar(x + width / 2, np.asarray(after) * 100, width, label="after", color="#2b7bba")
        ax.set_xticks(x, groups)
        ax.set_ylim(0, 105)
        ax.set_title(title)
        ax.set_ylabel("mAP@0.5 (%)")
        ax.legend(frameon=False)
    fig.suptitle("Detection accuracy before and after refinement")
    fig.tight_layout()
    paths["figure_map"] = out / "refinement_map.png"
    fig.savefig(paths["figure_map"], dpi=150)
    plt.close(fig)

    fig, ax = plt.subplots(figsize=(6.5, 4))
    ax.bar(x - width / 2, [r.al_queries for r in rows], width, label="AL queries", color="#888888")
    ax.bar(x + width / 2, [r.human_images for r in rows], width, label="human images", color="#c44e52")
    ax.set_xticks(x, groups)
    ax.set_yscale("symlog")
    ax.set_ylabel("images")
    ax.set_title("Annotation effort per group")
    ax.legend(frameon=False)
    fig.tight_layout()
    paths["figure_effort"] = out / "annotation_effort.png"
    fig.savefig(paths["figure_effort"], dpi=150)
    plt.close(fig)
    return paths
