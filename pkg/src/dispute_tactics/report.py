"""Render JSON reports as markdown/CSV tables and matplotlib figures."""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

HEADER = ("Key", "Value")


class ReportError(ValueError):
    pass


@dataclass
class Table:
    name: str
    header: tuple[str, ...]
    rows: list[tuple]


def fmt(value: Any) -> str:
    if value is None:
        return "undefined"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        if math.isnan(value):
            return "undefined"
        return f"{value:.4f}"
    return str(value)


def _scalars(d: dict) -> list[tuple]:
    return [(k, v) for k, v in d.items() if not isinstance(v, (dict, list))]


def _pmi_table(pmi: dict) -> Table:
    defined = sorted(((k, v) for k, v in pmi.items() if v is not None), key=lambda kv: (-kv[1], kv[0]))
    undefined = sorted(k for k, v in pmi.items() if v is None)
    return Table("pmi", ("Label", "PMI"), defined + [(k, None) for k in undefined])


def tables(report: dict) -> list[Table]:
    if not isinstance(report, dict):
        raise ReportError("report must be a JSON object")
    out: list[Table] = []
    if "rebuttal_mean" in report:
        rm = report["rebuttal_mean"]
        rows = [(mode, rm[mode]["statistic"], rm[mode]["p_value"], rm[mode]["n"])
                for mode in ("micro", "macro") if isinstance(rm.get(mode), dict)]
        out.append(Table("rebuttal_mean", ("Mean", "Spearman rho", "P", "N"), rows))
    if "pmi" in report:
        if not isinstance(report["pmi"], dict):
            raise ReportError("'pmi' must map labels to values")
        out.append(_pmi_table(report["pmi"]))
    for key in ("attacks", "users", "mirroring", "stats"):
        if isinstance(report.get(key), dict):
            out.append(Table(key, ("Statistic", "Value"), _scalars(report[key])))
    if "jaccard" in report or "pr_auc" in report:
        rows = [(k, report[k]) for k in ("jaccard", "hamming", "emr", "at_least_one", "pr_auc",
                                         "positive_rate", "n") if k in report]
        out.append(Table("metrics", ("Metric", "Value"), rows))
        plc = report.get("per_label_counts")
        if isinstance(plc, dict):
            out.append(Table("per_label", ("Label", "Gold", "Predicted", "Correct"),
                             [(k, v["gold"], v["predicted"], v["correct"]) for k, v in plc.items()]))
    if not out:
        out.append(Table("report", HEADER, [(k, v) for k, v in _scalars(report) if k != "manifest"]))
    return out


def _markdown(t: Table) -> str:
    lines = ["| " + " | ".join(t.header) + " |", "|" + "|".join("---" for _ in t.header) + "|"]
    lines += ["| " + " | ".join(fmt(c) for c in row) + " |" for row in t.rows]
    return "\n".join(lines) + "\n"


def render_report(report: dict) -> str:
    """Deterministic markdown rendering with 4-decimal reals."""
    ts = tables(report)
    if len(ts) == 1 and ts[0].name == "report":
        return _markdown(ts[0])
    return "\n".join(f"### {t.name}\n\n{_markdown(t)}" for t in ts)


def write_csv(report: dict, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for t in tables(report):
        path = out_dir / f"{t.name}.csv"
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(t.header)
            w.writerows([fmt(c) for c in row] for row in t.rows)
        paths.append(path)
    return paths


# -- figures ----------------------------------------------------------------

def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def _pmi_figure(pmi: dict, path: Path) -> Path:
    t = _pmi_table(pmi)
    rows = [(k, v) for k, v in t.rows if v is not None][::-1]
    fig, ax = plt.subplots(figsize=(6, 0.3 * max(4, len(rows)) + 1))
    colors = ["tab:red" if v < 0 else "tab:blue" for _, v in rows]
    ax.barh([k for k, _ in rows], [v for _, v in rows], color=colors)
    ax.axvline(0, color="k", lw=0.8)
    ax.set_xlabel("PMI with personal attacks")
    return _save(fig, path)


def _means_figure(per_conv: list, path: Path) -> Path:
    esc = [c["micro_mean"] for c in per_conv if c["escalated"] and c["micro_mean"] is not None]
    res = [c["micro_mean"] for c in per_conv if c["escalated"] is False and c["micro_mean"] is not None]
    fig, ax = plt.subplots(figsize=(5, 3.5))
    ax.boxplot([res, esc])
    ax.set_xticks([1, 2], ["resolved", "escalated"])
    ax.set_ylabel("mean rebuttal level (micro)")
    return _save(fig, path)


def _per_label_figure(plc: dict, path: Path) -> Path:
    names = list(plc)
    fig, ax = plt.subplots(figsize=(7, 4))
    xs = range(len(names))
    ax.bar([x - 0.2 for x in xs], [plc[n]["gold"] for n in names], width=0.4, label="gold")
    ax.bar([x + 0.2 for x in xs], [plc[n]["correct"] for n in names], width=0.4, label="correct")
    ax.set_xticks(list(xs), names, rotation=75, fontsize=7)
    ax.legend()
    return _save(fig, path)


def write_figures(report: dict, out_dir: Path) -> list[Path]:
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    if isinstance(report.get("pmi"), dict) and any(v is not None for v in report["pmi"].values()):
        paths.append(_pmi_figure(report["pmi"], out_dir / "pmi.png"))
    per_conv = (report.get("rebuttal_mean") or {}).get("per_conversation")
    if per_conv:
        paths.append(_means_figure(per_conv, out_dir / "rebuttal_means.png"))
    if isinstance(report.get("per_label_counts"), dict):
        paths.append(_per_label_figure(report["per_label_counts"], out_dir / "per_label.png"))
    return paths


def write_report(report: dict, out_dir, figures: bool = True) -> list[Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    md = out_dir / "report.md"
    md.write_text(render_report(report), encoding="utf-8")
    paths = [md] + write_csv(report, out_dir)
    if figures:
        paths += write_figures(report, out_dir)
    return paths
