"""Report emission: delimited tables, structured text, and rendered figures.

Every report embeds the tool version, the resolved run configuration, and
content hashes of its input files, so a report fully identifies the run that
produced it. Rendering is deterministic: rerunning a command with identical
inputs yields byte-identical artifacts, figures included.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from . import __version__
from .metrics import EvalReport

# Keys stripped from the PNG encoder so reruns are byte-identical regardless
# of the matplotlib build.
_PNG_METADATA = {"Software": None}


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def run_metadata(config: dict, input_paths: dict) -> dict:
    """Reproducibility header: version, resolved config, input hashes.

    Output locations are excluded from the resolved config so the report
    content does not depend on where it is written.
    """
    resolved = {k: v for k, v in sorted(config.items()) if not k.startswith("out")}
    return {
        "tool_version": __version__,
        "config": resolved,
        "input_hashes": {name: sha256_file(p) for name, p in sorted(input_paths.items())},
    }


def _write_meta(f, meta: dict):
    f.write(f"tool_version={meta['tool_version']}\n")
    f.write("config=" + json.dumps(meta["config"], sort_keys=True) + "\n")
    for name, digest in meta["input_hashes"].items():
        f.write(f"input_sha256[{name}]={digest}\n")


def _fmt(x: float) -> str:
    return f"{x:.6f}"


def metric_rows(report: EvalReport) -> list[tuple[str, float]]:
    """Flatten an evaluation report into (metric, value) rows."""
    rows = []
    for k in sorted(report.r_at_k):
        rows.append((f"R@{k}", report.r_at_k[k]))
    for k in sorted(report.mr_at_k):
        rows.append((f"mR@{k}", report.mr_at_k[k]))
    for k in sorted(report.group_mr):
        for group in ("head", "body", "tail"):
            rows.append((f"mR@{k}/{group}", report.group_mr[k][group]))
    for k in sorted(report.dp_at_k):
        rows.append((f"DP@{k}", report.dp_at_k[k]))
    return rows


def write_eval_report(report: EvalReport, out_dir, meta: dict) -> list[Path]:
    """Write report.txt, metrics.csv, rings.csv, confusion.csv and figures."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    path = out_dir / "report.txt"
    with open(path, "w", encoding="utf-8") as f:
        _write_meta(f, meta)
        for name, value in metric_rows(report):
            f.write(f"{name}={_fmt(value)}\n")
        f.write("confusion_prime=\n")
        for row in report.confusion_prime:
            f.write(" ".join(_fmt(v) for v in row) + "\n")
    written.append(path)

    path = out_dir / "metrics.csv"
    with open(path, "w", encoding="utf-8") as f:
        f.write("metric,value\n")
        for name, value in metric_rows(report):
            f.write(f"{name},{_fmt(value)}\n")
    written.append(path)

    path = out_dir / "rings.csv"
    with open(path, "w", encoding="utf-8") as f:
        f.write("gt_class,slice_label,proportion\n")
        for ring in report.rings:
            f.write(f"{ring['gt_class']},self,{_fmt(ring['self'])}\n")
            for j, p in ring["neighbors"]:
                f.write(f"{ring['gt_class']},class_{j},{_fmt(p)}\n")
            f.write(f"{ring['gt_class']},other,{_fmt(ring['other'])}\n")
    written.append(path)

    path = out_dir / "confusion.csv"
    with open(path, "w", encoding="utf-8") as f:
        f.write(",".join(str(j) for j in range(report.num_classes)) + "\n")
        for row in report.confusion_prime:
            f.write(",".join(_fmt(v) for v in row) + "\n")
    written.append(path)

    written.append(render_recall_figure(report, out_dir / "per_class_recall.png"))
    written.append(render_ring_figure(report, out_dir / "rings.png"))
    return written


def render_recall_figure(report: EvalReport, path) -> Path:
    """Bar chart of per-class recall at the largest K, in class-rank order."""
    k = max(report.per_class_recall)
    per_class = report.per_class_recall[k]
    fig, ax = plt.subplots(figsize=(10, 4))
    vals = np.nan_to_num(per_class, nan=0.0)
    ax.bar(np.arange(len(vals)), vals, color="#4878cf")
    ax.set_xlabel("class id (frequency rank)")
    ax.set_ylabel(f"recall @ K={k}")
    ax.set_ylim(0, 1)
    ax.set_title("Per-class recall")
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_METADATA)
    plt.close(fig)
    return Path(path)


def render_ring_figure(report: EvalReport, path, max_rings: int = 6) -> Path:
    """Donut charts of the prediction distribution for the most confused classes."""
    rings = sorted(report.rings, key=lambda r: r["self"])[:max_rings]
    count = max(len(rings), 1)
    fig, axes = plt.subplots(1, count, figsize=(3 * count, 3.2))
    axes = np.atleast_1d(axes)
    for ax in axes:
        ax.axis("off")
    for ax, ring in zip(axes, rings):
        labels = ["self"] + [f"cls {j}" for j, _ in ring["neighbors"]] + ["other"]
        sizes = [ring["self"]] + [p for _, p in ring["neighbors"]] + [ring["other"]]
        sizes = [max(v, 0.0) for v in sizes]
        if sum(sizes) <= 0:
            continue
        ax.pie(sizes, labels=labels, wedgeprops={"width": 0.45}, textprops={"fontsize": 7})
        ax.set_title(f"gt class {ring['gt_class']}", fontsize=9)
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_METADATA)
    plt.close(fig)
    return Path(path)


def write_compare_report(
    rows: list[tuple[str, EvalReport]], out_dir, meta: dict, mr_key: int, dp_key: int
) -> list[Path]:
    """Side-by-side method table (text + csv) and a grouped bar figure."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    columns = None
    table = []
    for name, report in rows:
        cells = metric_rows(report)
        if columns is None:
            columns = [c for c, _ in cells]
        table.append((name, [v for _, v in cells]))

    path = out_dir / "compare.csv"
    with open(path, "w", encoding="utf-8") as f:
        f.write("method," + ",".join(columns) + "\n")
        for name, values in table:
            f.write(name + "," + ",".join(_fmt(v) for v in values) + "\n")
    written.append(path)

    path = out_dir / "compare.txt"
    with open(path, "w", encoding="utf-8") as f:
        _write_meta(f, meta)
        widths = [max(len(c), 10) for c in columns]
        name_w = max(len(n) for n, _ in table + [("method", [])])
        f.write("method".ljust(name_w) + "  " + "  ".join(c.rjust(w) for c, w in zip(columns, widths)) + "\n")
        for name, values in table:
            f.write(
                name.ljust(name_w)
                + "  "
                + "  ".join(_fmt(v).rjust(w) for v, w in zip(values, widths))
                + "\n"
            )
    written.append(path)

    written.append(
        render_compare_figure(rows, out_dir / "compare.png", mr_key=mr_key, dp_key=dp_key)
    )
    return written


def render_compare_figure(rows, path, mr_key: int, dp_key: int) -> Path:
    """Grouped bars: mean recall analog and discriminatory power per method."""
    names = [name for name, _ in rows]
    mr = [report.mr_at_k[mr_key] * 100 for _, report in rows]
    dp = [report.dp_at_k[dp_key] for _, report in rows]
    x = np.arange(len(names))
    fig, ax = plt.subplots(figsize=(7, 4))
    ax.bar(x - 0.2, mr, width=0.4, label=f"mR@{mr_key} (%)", color="#4878cf")
    ax.bar(x + 0.2, dp, width=0.4, label=f"DP@{dp_key} (%)", color="#d65f5f")
    ax.set_xticks(x)
    ax.set_xticklabels(names)
    ax.set_ylabel("percent")
    ax.set_title("Method comparison")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, metadata=_PNG_METADATA)
    plt.close(fig)
    return Path(path)
