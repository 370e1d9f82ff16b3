"""Report figures rendered next to the results CSV."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .evaluation import EvalReport


def render_experiment_figures(reports: list[EvalReport], out_dir) -> list[Path]:
    """Box plots of f-measure, precision and recall per (scheme, metric)."""
    out_dir = Path(out_dir)
    written = []
    schemes = []
    metrics = []
    for row in reports:
        if row.scheme_kind not in schemes:
            schemes.append(row.scheme_kind)
        if row.metric not in metrics:
            metrics.append(row.metric)

    for attr, label, name in (
        ("f", "F-measure", "fmeasure_boxplot.png"),
        ("precision", "Precision", "precision_boxplot.png"),
        ("recall", "Recall", "recall_boxplot.png"),
    ):
        fig, ax = plt.subplots(figsize=(1.8 + 1.6 * len(schemes), 4.0))
        colors = plt.rcParams["axes.prop_cycle"].by_key()["color"]
        width = 0.8 / max(len(metrics), 1)
        for m_idx, metric in enumerate(metrics):
            positions = []
            data = []
            for s_idx, scheme in enumerate(schemes):
                values = [
                    getattr(row, attr)
                    for row in reports
                    if row.scheme_kind == scheme and row.metric == metric and row.ok
                ]
                if values:
                    positions.append(s_idx + (m_idx - (len(metrics) - 1) / 2) * width)
                    data.append(values)
            if not data:
                continue
            box = ax.boxplot(
                data,
                positions=positions,
                widths=width * 0.85,
                patch_artist=True,
                medianprops={"color": "black"},
            )
            for patch in box["boxes"]:
                patch.set_facecolor(colors[m_idx % len(colors)])
                patch.set_alpha(0.7)
            ax.plot([], [], color=colors[m_idx % len(colors)], linewidth=6, alpha=0.7, label=metric)
        ax.set_xticks(range(len(schemes)))
        ax.set_xticklabels(schemes, rotation=20)
        ax.set_ylabel(label)
        ax.set_ylim(-0.02, 1.02)
        ax.legend(loc="lower right", fontsize=8)
        ax.grid(axis="y", alpha=0.3)
        fig.tight_layout()
        target = out_dir / name
        fig.savefig(target, dpi=150)
        plt.close(fig)
        written.append(target)
    return written
