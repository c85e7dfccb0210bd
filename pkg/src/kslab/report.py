"""Summaries of finished runs: one delimited table plus per-run figures."""

from __future__ import annotations

import csv
import io
from pathlib import Path

from .harness import RunManifest, read_series_csv

SUMMARY_COLUMNS = [
    "name", "config_hash", "exit_event", "exit_code", "final_time", "steps",
    "mu1", "vstar", "predicted_rate", "fitted_rate", "failed_checks", "figure",
]


def find_manifests(root: str | Path) -> list[Path]:
    root = Path(root)
    if root.is_file():
        return [root]
    return sorted(root.rglob("manifest.json"))


def summarize(root: str | Path, *, figures: bool = True) -> tuple[list[dict], str]:
    """Collect every manifest below ``root``.

    Writes ``report.csv`` into ``root`` (when it is a directory) and, if
    ``figures`` is set, a ``figure.png`` next to each manifest.

    Returns:
        tuple: the rows and the CSV text.
    """
    rows = []
    for path in find_manifests(root):
        man = RunManifest.load(path)
        d = man.data
        fig_path = ""
        series_rel = d.get("artifacts", {}).get("series")
        if figures and series_rel:
            from .plotting import plot_run

            series = read_series_csv(path.parent / series_rel)
            fig = plot_run(
                series,
                path.parent / "figure.png",
                title=d["scenario"]["name"],
                predicted_rate=d["theory"]["predicted_rate_norm"],
            )
            fig_path = str(fig)
        rate = d["verdicts"].get("rate", {})
        rows.append({
            "name": d["scenario"]["name"],
            "config_hash": d["config_hash"][:12],
            "exit_event": d["exit_event"],
            "exit_code": d["exit_code"],
            "final_time": repr(float(d["final_time"])),
            "steps": d["steps"],
            "mu1": repr(float(d["theory"]["mu1"])),
            "vstar": repr(float(d["theory"]["vstar"])),
            "predicted_rate": repr(float(d["theory"]["predicted_rate_norm"])),
            "fitted_rate": repr(float(rate["fitted_rate"])) if rate else "",
            "failed_checks": ";".join(k for k, v in d["verdicts"].items() if not v["passed"]),
            "figure": fig_path,
        })
    buf = io.StringIO()
    writer = csv.DictWriter(buf, SUMMARY_COLUMNS, lineterminator="\n")
    writer.writeheader()
    writer.writerows(rows)
    text = buf.getvalue()
    root = Path(root)
    if root.is_dir():
        (root / "report.csv").write_text(text)
    return rows, text
