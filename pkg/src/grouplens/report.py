"""Report emission: CSV tables, JSON mirrors, and minimal SVG line charts.

Every output file embeds the config that produced it (a leading comment
line for CSVs, a top-level key for JSON), so identical configs always yield
byte-identical reports.
"""

from __future__ import annotations

import json
from pathlib import Path

from .grouping_metrics import BlockSummary
from .saliency import CHANCE_NOTE, REPORTED_CHANCE_LEVELS, chance_analytic

# best prior saliency-model ratios from the source benchmark, reported for
# comparison only
REFERENCE_BEST_PRIOR = {"msr_targ": 1.4, "msr_bg": 1.52}


def fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return f"{value:.12g}"
    return str(value)


def write_csv(path: Path, columns: list[str], rows: list[dict], config: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    lines = ["# config: " + json.dumps(config, sort_keys=True)]
    lines.append(",".join(columns))
    for row in rows:
        lines.append(",".join(fmt(row.get(c)) for c in columns))
    path.write_text("\n".join(lines) + "\n")
    return path


def write_json(path: Path, doc: dict) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=1, sort_keys=True))
    return path


# -- grouping ---------------------------------------------------------------

def grouping_rows(summaries: list[BlockSummary]) -> list[dict]:
    rows = []
    for s in summaries:
        rows.append({
            "model_id": s.model_id, "block": s.block_index,
            "feature_dim": s.feature_dim, "metric": "GI", "mean": s.mean_gi,
            "n_stimuli": s.n_stimuli_gi, "n_channels_included": s.n_channels_gi,
        })
        rows.append({
            "model_id": s.model_id, "block": s.block_index,
            "feature_dim": s.feature_dim, "metric": "AR", "mean": s.mean_ar,
            "n_stimuli": s.n_stimuli_ar, "n_channels_included": s.n_channels_ar,
        })
    return rows


GROUPING_COLUMNS = [
    "model_id", "block", "feature_dim", "metric", "mean",
    "n_stimuli", "n_channels_included",
]


def write_grouping_csv(path: Path, summaries: list[BlockSummary], config: dict) -> Path:
    return write_csv(path, GROUPING_COLUMNS, grouping_rows(summaries), config)


def write_grouping_json(path: Path, summaries: list[BlockSummary], config: dict) -> Path:
    return write_json(path, {"config": config, "rows": grouping_rows(summaries)})


# -- saliency ----------------------------------------------------------------

DETECTION_COLUMNS = [
    "model_id", "block", "kind", "feature_dim", "threshold", "detection_rate", "n",
]
MSR_COLUMNS = [
    "model_id", "block", "kind", "mean_msr_targ", "mean_msr_bg",
    "n_defined", "n_defined_bg", "n_undefined",
]


def chance_table(n_cells: int, thresholds) -> list[dict]:
    return [
        {
            "threshold": int(t),
            "analytic": chance_analytic(n_cells, int(t)),
            "reported_196": REPORTED_CHANCE_LEVELS.get(int(t)) if n_cells == 196 else None,
        }
        for t in thresholds
    ]


def write_saliency_reports(out_dir: Path, rate_rows: list[dict], msr_rows: list[dict],
                           config: dict, n_cells: int) -> dict[str, Path]:
    out_dir = Path(out_dir)
    thresholds = config.get("thresholds", [])
    files = {
        "detection_csv": write_csv(
            out_dir / "saliency_detection.csv", DETECTION_COLUMNS, rate_rows, config),
        "msr_csv": write_csv(out_dir / "saliency_msr.csv", MSR_COLUMNS, msr_rows, config),
        "json": write_json(out_dir / "saliency_summary.json", {
            "config": config,
            "detection": rate_rows,
            "msr": msr_rows,
            "chance_levels": chance_table(n_cells, thresholds),
            "chance_note": CHANCE_NOTE,
            "reference_best_prior": REFERENCE_BEST_PRIOR,
        }),
    }
    return files


# -- SVG line charts ------------------------------------------------------------

_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
            "#17becf", "#7f7f7f"]


def line_chart_svg(path: Path, title: str, series: dict[str, list[tuple[float, float]]],
                   x_label: str, y_label: str,
                   hlines: dict[str, float] | None = None,
                   width: int = 640, height: int = 400) -> Path:
    """Tiny dependency-free multi-series line chart."""
    pad_l, pad_r, pad_t, pad_b = 60, 150, 40, 45
    plot_w, plot_h = width - pad_l - pad_r, height - pad_t - pad_b
    points = [(x, y) for pts in series.values() for x, y in pts if y is not None]
    hlines = hlines or {}
    ys_extra = list(hlines.values())
    if not points and not ys_extra:
        points = [(0.0, 0.0)]
    xs = [p[0] for p in points] or [0.0]
    ys = [p[1] for p in points] + ys_extra
    x_min, x_max = min(xs), max(xs)
    y_min, y_max = min(ys + [0.0]), max(ys)
    if x_max == x_min:
        x_max = x_min + 1
    if y_max == y_min:
        y_max = y_min + 1

    def sx(x: float) -> float:
        return pad_l + (x - x_min) / (x_max - x_min) * plot_w

    def sy(y: float) -> float:
        return pad_t + plot_h - (y - y_min) / (y_max - y_min) * plot_h

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'font-family="sans-serif" font-size="12">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
        f'<line x1="{pad_l}" y1="{pad_t + plot_h}" x2="{pad_l + plot_w}" '
        f'y2="{pad_t + plot_h}" stroke="black"/>',
        f'<line x1="{pad_l}" y1="{pad_t}" x2="{pad_l}" y2="{pad_t + plot_h}" stroke="black"/>',
        f'<text x="{pad_l + plot_w / 2:.1f}" y="{height - 8}" text-anchor="middle">{x_label}</text>',
        f'<text x="15" y="{pad_t + plot_h / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 15 {pad_t + plot_h / 2:.1f})">{y_label}</text>',
        f'<text x="{pad_l - 5}" y="{sy(y_min):.1f}" text-anchor="end">{y_min:.3g}</text>',
        f'<text x="{pad_l - 5}" y="{sy(y_max) + 4:.1f}" text-anchor="end">{y_max:.3g}</text>',
        f'<text x="{sx(x_min):.1f}" y="{pad_t + plot_h + 15}" text-anchor="middle">{x_min:g}</text>',
        f'<text x="{sx(x_max):.1f}" y="{pad_t + plot_h + 15}" text-anchor="middle">{x_max:g}</text>',
    ]
    for name, y in hlines.items():
        parts.append(
            f'<line x1="{pad_l}" y1="{sy(y):.1f}" x2="{pad_l + plot_w}" y2="{sy(y):.1f}" '
            f'stroke="gray" stroke-dasharray="5,4"/>'
        )
        parts.append(
            f'<text x="{pad_l + plot_w + 4}" y="{sy(y) + 4:.1f}" fill="gray">{name}</text>'
        )
    legend_y = pad_t
    for i, (name, pts) in enumerate(series.items()):
        color = _PALETTE[i % len(_PALETTE)]
        clean = [(x, y) for x, y in pts if y is not None]
        if clean:
            coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in sorted(clean))
            parts.append(
                f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>'
            )
            for x, y in clean:
                parts.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.5" fill="{color}"/>')
        parts.append(
            f'<rect x="{pad_l + plot_w + 10}" y="{legend_y}" width="10" height="10" fill="{color}"/>'
        )
        parts.append(
            f'<text x="{pad_l + plot_w + 24}" y="{legend_y + 9}">{name}</text>'
        )
        legend_y += 16
    parts.append("</svg>")
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text("\n".join(parts))
    return path


def build_report(out_dir: Path, grouping_json: Path | None = None,
                 saliency_json: Path | None = None) -> list[Path]:
    """Per-block curve charts (x = block index) from eval summary JSONs."""
    out_dir = Path(out_dir)
    written = []
    if grouping_json is not None:
        doc = json.loads(Path(grouping_json).read_text())
        for metric in ("GI", "AR"):
            series: dict[str, list[tuple[float, float]]] = {}
            for row in doc["rows"]:
                if row["metric"] == metric and row["mean"] is not None:
                    series.setdefault(row["feature_dim"], []).append(
                        (row["block"], row["mean"]))
            hlines = {"AR=1": 1.0} if metric == "AR" else None
            written.append(line_chart_svg(
                out_dir / f"grouping_{metric.lower()}.svg",
                f"mean {metric} per block ({doc['config'].get('model_id', '')})",
                series, "block", f"mean {metric}", hlines=hlines,
            ))
    if saliency_json is not None:
        doc = json.loads(Path(saliency_json).read_text())
        chance = {f"chance f={c['threshold']}": c["analytic"]
                  for c in doc.get("chance_levels", [])}
        kinds = sorted({row["kind"] for row in doc["detection"]})
        for kind in kinds:
            for t in doc["config"].get("thresholds", []):
                series = {}
                for row in doc["detection"]:
                    if row["kind"] == kind and row["threshold"] == t:
                        series.setdefault(row["feature_dim"], []).append(
                            (row["block"], row["detection_rate"]))
                written.append(line_chart_svg(
                    out_dir / f"saliency_{kind}_detection_f{t}.svg",
                    f"detection rate at {t} fixations ({kind})",
                    series, "block", "detection rate",
                    hlines={f"chance f={t}": chance.get(f"chance f={t}", 0.0)},
                ))
            msr_series: dict[str, list[tuple[float, float]]] = {}
            for row in doc["msr"]:
                if row["kind"] == kind:
                    if row["mean_msr_targ"] is not None:
                        msr_series.setdefault("msr_targ", []).append(
                            (row["block"], row["mean_msr_targ"]))
                    if row["mean_msr_bg"] is not None:
                        msr_series.setdefault("msr_bg", []).append(
                            (row["block"], row["mean_msr_bg"]))
            written.append(line_chart_svg(
                out_dir / f"saliency_{kind}_msr.svg",
                f"maximum-saliency ratios ({kind})",
                msr_series, "block", "ratio",
                hlines={"best prior msr_targ": REFERENCE_BEST_PRIOR["msr_targ"],
                        "best prior msr_bg": REFERENCE_BEST_PRIOR["msr_bg"]},
            ))
    return written
