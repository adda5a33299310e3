"""Tabular reports: CSV / JSON-lines writers, readers and figures.

A report has a one-row summary and a body table.  Both are written to
disk: the body goes to the requested path and the summary to a sibling
``<stem>.summary.<ext>`` file.  Every float is rounded to 12 significant
digits when the report is built, so reading the files back reproduces the
in-memory report exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Optional, Sequence

FORMATS = ("csv", "jsonl")


def r12(x):
    """Round a float to 12 significant digits (ints, strings, None pass through)."""
    if isinstance(x, bool) or x is None or isinstance(x, (int, str)):
        return x
    x = float(x)
    if math.isnan(x) or math.isinf(x):
        return x
    return float(f"{x:.12g}")


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, bool):
        return "true" if x else "false"
    if isinstance(x, float):
        return f"{x:.12g}"
    return str(x)


def _parse(text: str):
    if text == "":
        return None
    if text in ("true", "false"):
        return text == "true"
    try:
        return int(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        return text


def _json_safe(x):
    if isinstance(x, float) and (math.isnan(x) or math.isinf(x)):
        return str(x)
    return x


def _json_restore(x):
    if x in ("nan", "inf", "-inf"):
        return float(x)
    return x


@dataclass
class Report:
    kind: str
    summary: dict = field(default_factory=dict)
    columns: Sequence[str] = ("n", "prob")
    rows: list = field(default_factory=list)

    def __post_init__(self):
        self.summary = {k: r12(v) for k, v in self.summary.items()}
        self.columns = tuple(self.columns)
        self.rows = [tuple(r12(v) for v in row) for row in self.rows]

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [row[i] for row in self.rows]

    # -- serialisation ---------------------------------------------------

    def body_text(self, fmt: str) -> str:
        buf = io.StringIO()
        if fmt == "csv":
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(self.columns)
            for row in self.rows:
                w.writerow([_fmt(v) for v in row])
        elif fmt == "jsonl":
            for row in self.rows:
                buf.write(json.dumps({c: _json_safe(v) for c, v in zip(self.columns, row)}) + "\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
        return buf.getvalue()

    def summary_text(self, fmt: str) -> str:
        items = {"report": self.kind, **self.summary}
        buf = io.StringIO()
        if fmt == "csv":
            w = csv.writer(buf, lineterminator="\n")
            w.writerow(list(items))
            w.writerow([_fmt(v) for v in items.values()])
        elif fmt == "jsonl":
            buf.write(json.dumps({k: _json_safe(v) for k, v in items.items()}) + "\n")
        else:
            raise ValueError(f"unknown format {fmt!r}")
        return buf.getvalue()

    def write(self, path, fmt: str = "csv") -> tuple[Path, Path]:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        spath = summary_path(path, fmt)
        path.write_text(self.body_text(fmt))
        spath.write_text(self.summary_text(fmt))
        return path, spath

    @classmethod
    def read(cls, path, fmt: str = "csv") -> "Report":
        path = Path(path)
        spath = summary_path(path, fmt)
        if fmt == "csv":
            with open(spath, newline="") as fh:
                head, values = list(csv.reader(fh))
            summary = {k: _parse(v) for k, v in zip(head, values)}
            with open(path, newline="") as fh:
                reader = csv.reader(fh)
                columns = next(reader)
                rows = [tuple(_parse(v) for v in row) for row in reader]
        elif fmt == "jsonl":
            summary = {k: _json_restore(v) for k, v in json.loads(spath.read_text()).items()}
            lines = [json.loads(line) for line in path.read_text().splitlines() if line.strip()]
            columns = list(lines[0]) if lines else []
            rows = [tuple(_json_restore(d[c]) for c in columns) for d in lines]
        else:
            raise ValueError(f"unknown format {fmt!r}")
        kind = summary.pop("report")
        return cls(kind, summary, columns, rows)

    def __eq__(self, other):
        if not isinstance(other, Report):
            return NotImplemented
        return (self.kind == other.kind and _same(self.summary, other.summary)
                and tuple(self.columns) == tuple(other.columns)
                and len(self.rows) == len(other.rows)
                and all(_same_seq(a, b) for a, b in zip(self.rows, other.rows)))


def _same_val(a, b) -> bool:
    if isinstance(a, float) and isinstance(b, float) and math.isnan(a) and math.isnan(b):
        return True
    return a == b and type(a) is type(b) or (isinstance(a, (int, float)) and isinstance(b, (int, float))
                                             and not isinstance(a, bool) and a == b)


def _same_seq(a, b) -> bool:
    return len(a) == len(b) and all(_same_val(x, y) for x, y in zip(a, b))


def _same(a: dict, b: dict) -> bool:
    return list(a) == list(b) and all(_same_val(a[k], b[k]) for k in a)


def summary_path(path: Path, fmt: str) -> Path:
    path = Path(path)
    ext = ".csv" if fmt == "csv" else ".jsonl"
    return path.with_name(path.stem + ".summary" + ext)


def pmf_rows(pmf, start: int = 1, stop: Optional[int] = None) -> list:
    stop = len(pmf) if stop is None else min(stop, len(pmf))
    return [(n, float(pmf[n])) for n in range(start, stop)]


# -- figures ------------------------------------------------------------------

def plot_pmfs(path, curves: Iterable[tuple[str, Sequence[float]]], title: str = "",
              max_n: Optional[int] = None, floor: float = 1e-16):
    """Step plot of one or more AoI pmfs on a log scale, clipped at ``floor``."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    for label, pmf in curves:
        stop = len(pmf) if max_n is None else min(len(pmf), max_n + 1)
        n = list(range(1, stop))
        # zero cells (unvisited or below round-off) are left out of the log plot
        vals = [float(pmf[k]) if float(pmf[k]) > floor else float("nan") for k in n]
        ax.step(n, vals, where="mid", label=label)
    ax.set_yscale("log")
    ax.set_ylim(bottom=floor)
    ax.set_xlabel("AoI n (slots)")
    ax.set_ylabel("Pr{AoI = n}")
    if title:
        ax.set_title(title, fontsize=9)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def plot_sweep(path, report: Report, xcol: str, ycols: Sequence[str], title: str = ""):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(6.0, 3.8))
    x = report.column(xcol)
    for col in ycols:
        ax.plot(x, report.column(col), marker="o", ms=3, label=col)
    ax.set_xlabel(xcol)
    ax.set_ylabel("average AoI (slots)")
    if title:
        ax.set_title(title, fontsize=9)
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)
