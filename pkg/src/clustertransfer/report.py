"""Table, curve and scatter rendering.

Everything is data-first CSV; markdown and SVG are optional views. No
timestamps are embedded, so identical inputs give byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path
from typing import Iterable, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .errors import ShapeError
from .io_utils import atomic_write_text, fmt
from .metrics import EvalReport
from .neural_net import LossHistory
from .pipeline import ExperimentResult, SummaryRow, aggregate_seeds

FORMATS = ("csv", "md", "svg")
REPORT_COLUMNS = ("dataset", "stage", "cluster", "split", "frozen", "seed", "n", "rmse", "mae", "r2")
SUMMARY_COLUMNS = ("dataset", "stage", "frozen", "metric", "mean", "std", "n_seeds")
PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf")


def _report_row(stage: str, rep: EvalReport) -> dict:
    p = rep.provenance
    return {"dataset": p.dataset, "stage": stage, "cluster": p.cluster, "split": p.split,
            "frozen": p.frozen, "seed": p.seed, "n": rep.n,
            "rmse": rep.rmse, "mae": rep.mae, "r2": rep.r2}


def _csv_text(columns: Sequence[str], rows: Iterable[dict]) -> str:
    lines = [",".join(columns)]
    for row in rows:
        cells = []
        for c in columns:
            v = row[c]
            if v is None:
                cells.append("")
            elif isinstance(v, float):
                cells.append(fmt(v))
            else:
                cells.append(str(v))
        lines.append(",".join(cells))
    return "\n".join(lines) + "\n"


def _md_text(title: str, columns: Sequence[str], rows: Iterable[dict]) -> str:
    lines = [f"## {title}", "", "| " + " | ".join(columns) + " |",
             "|" + "|".join("---" for _ in columns) + "|"]
    for row in rows:
        cells = []
        for c in columns:
            v = row[c]
            if v is None:
                cells.append("n/a")
            elif isinstance(v, float):
                cells.append(f"{v:.2f}")
            else:
                cells.append(str(v))
        lines.append("| " + " | ".join(cells) + " |")
    return "\n".join(lines) + "\n"


def no_transfer_rows(results: Sequence[ExperimentResult]) -> list[dict]:
    rows = []
    for res in results:
        rows.append(_report_row("source-test", res.source_report))
        rows.append(_report_row("target-direct", res.direct_report))
    return rows


def transfer_rows(results: Sequence[ExperimentResult]) -> list[dict]:
    return [_report_row("target-transfer", rep)
            for res in results for _, rep in sorted(res.transfer_reports.items())]


def summary_rows(rows: Sequence[SummaryRow]) -> list[dict]:
    return [vars(r) for r in rows]


def render_tables(result: ExperimentResult | Sequence[ExperimentResult], out_dir,
                  formats: Sequence[str] = ("csv", "md")) -> tuple[list[Path], list[str]]:
    """Write the no-transfer and transfer tables (plus a seed summary).

    Returns ``(written_paths, notices)``. An empty transfer table is omitted
    with a notice rather than written as an empty file.
    """
    results = [result] if isinstance(result, ExperimentResult) else list(result)
    tables = Path(out_dir) / "tables"
    written: list[Path] = []
    notices: list[str] = []

    def emit(stem: str, title: str, columns, rows):
        if "csv" in formats:
            written.append(atomic_write_text(tables / f"{stem}.csv", _csv_text(columns, rows)))
        if "md" in formats:
            written.append(atomic_write_text(tables / f"{stem}.md", _md_text(title, columns, rows)))

    emit("no_transfer", "Evaluation without transfer learning", REPORT_COLUMNS,
         no_transfer_rows(results))
    t_rows = transfer_rows(results)
    if t_rows:
        emit("transfer", "Evaluation with transfer learning", REPORT_COLUMNS, t_rows)
    else:
        notices.append("no frozen-layer counts were run; transfer table omitted")
    failed = [(r.seed, f, msg) for r in results for f, msg in sorted(r.failures.items())]
    for seed, frozen, msg in failed:
        notices.append(f"seed {seed}, frozen {frozen}: FAILED ({msg})")
    if results:
        emit("summary", "Mean and std over seeds", SUMMARY_COLUMNS,
             summary_rows(aggregate_seeds(results)))
    return written, notices


def read_csv_rows(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(row for row in fh if not row.startswith("#")))


# --- SVG -------------------------------------------------------------------

_W, _H, _PAD = 480, 360, 48


def _scale(values: np.ndarray, lo: float, hi: float, out_lo: float, out_hi: float) -> np.ndarray:
    span = hi - lo if hi > lo else 1.0
    return out_lo + (values - lo) / span * (out_hi - out_lo)


def _svg_frame(title: str, body: list[str], xlabel: str, ylabel: str,
               xr: tuple[float, float], yr: tuple[float, float]) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
        f'viewBox="0 0 {_W} {_H}">',
        f'<rect width="{_W}" height="{_H}" fill="white"/>',
        f'<text x="{_W / 2:.1f}" y="20" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD / 2}" y2="{_H - _PAD}" stroke="black"/>',
        f'<line x1="{_PAD}" y1="{_PAD / 2}" x2="{_PAD}" y2="{_H - _PAD}" stroke="black"/>',
        f'<text x="{_W / 2:.1f}" y="{_H - 10}" text-anchor="middle" font-size="12">'
        f'{escape(xlabel)} [{xr[0]:.3g}, {xr[1]:.3g}]</text>',
        f'<text x="14" y="{_H / 2:.1f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {_H / 2:.1f})">{escape(ylabel)} [{yr[0]:.3g}, {yr[1]:.3g}]</text>',
    ]
    return "\n".join(head + body + ["</svg>"]) + "\n"


def svg_line(xs, ys, title: str, xlabel: str, ylabel: str, mark_x: float | None = None) -> str:
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    xr = (float(xs.min()), float(xs.max()))
    yr = (float(ys.min()), float(ys.max()))
    px = _scale(xs, *xr, _PAD, _W - _PAD / 2)
    py = _scale(ys, *yr, _H - _PAD, _PAD / 2)
    pts = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py))
    body = [f'<polyline fill="none" stroke="{PALETTE[0]}" stroke-width="1.5" points="{pts}"/>']
    if mark_x is not None:
        mx = float(_scale(np.array([mark_x]), *xr, _PAD, _W - _PAD / 2)[0])
        body.append(f'<line x1="{mx:.2f}" y1="{_PAD / 2}" x2="{mx:.2f}" y2="{_H - _PAD}" '
                    f'stroke="{PALETTE[3]}" stroke-dasharray="4 3"/>')
    return _svg_frame(title, body, xlabel, ylabel, xr, yr)


def svg_scatter(x, y, title: str, xlabel: str, ylabel: str, groups=None,
                identity_line: bool = False) -> str:
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    groups = np.zeros(x.size, dtype=int) if groups is None else np.asarray(groups, dtype=int)
    if x.size:
        lo, hi = (min(x.min(), y.min()), max(x.max(), y.max())) if identity_line else (0, 0)
        xr = (float(lo), float(hi)) if identity_line else (float(x.min()), float(x.max()))
        yr = (float(lo), float(hi)) if identity_line else (float(y.min()), float(y.max()))
    else:
        xr = yr = (0.0, 1.0)
    px = _scale(x, *xr, _PAD, _W - _PAD / 2)
    py = _scale(y, *yr, _H - _PAD, _PAD / 2)
    body = []
    if identity_line:
        body.append(f'<line x1="{_PAD}" y1="{_H - _PAD}" x2="{_W - _PAD / 2}" y2="{_PAD / 2}" '
                    f'stroke="gray" stroke-dasharray="4 3"/>')
    for a, b, g in zip(px, py, groups):
        body.append(f'<circle cx="{a:.2f}" cy="{b:.2f}" r="3" '
                    f'fill="{PALETTE[int(g) % len(PALETTE)]}" fill-opacity="0.7"/>')
    return _svg_frame(title, body, xlabel, ylabel, xr, yr)


# --- curves and scatters ---------------------------------------------------

def render_loss_curve(history: LossHistory, path, svg: bool = False) -> list[Path]:
    """``epoch,mae`` CSV (1-based epochs) with the best epoch in a leading comment."""
    if not history.losses:
        raise ValueError("empty loss history")
    path = Path(path)
    lines = [f"# best_epoch={history.best_epoch + 1}", "epoch,mae"]
    lines += [f"{i + 1},{fmt(v)}" for i, v in enumerate(history.losses)]
    written = [atomic_write_text(path, "\n".join(lines) + "\n")]
    if svg:
        epochs = np.arange(1, len(history.losses) + 1)
        written.append(atomic_write_text(
            path.with_suffix(".svg"),
            svg_line(epochs, history.losses, "Training loss over epochs", "epoch", "MAE",
                     mark_x=history.best_epoch + 1)))
    return written


def read_loss_curve(path) -> LossHistory:
    best = None
    with open(path) as fh:
        for line in fh:
            if line.startswith("# best_epoch="):
                best = int(line.split("=", 1)[1]) - 1
    rows = read_csv_rows(path)
    losses = tuple(float(r["mae"]) for r in rows)
    return LossHistory(losses, best if best is not None else int(np.argmin(losses)))


def render_scatter(y, yhat, path, svg: bool = False, title: str = "Predicted vs real") -> list[Path]:
    y = np.asarray(y, dtype=float).reshape(-1)
    yhat = np.asarray(yhat, dtype=float).reshape(-1)
    if y.shape != yhat.shape:
        raise ShapeError(f"{y.size} real values vs {yhat.size} predictions")
    path = Path(path)
    lines = ["real,predicted"] + [f"{fmt(a)},{fmt(b)}" for a, b in zip(y, yhat)]
    written = [atomic_write_text(path, "\n".join(lines) + "\n")]
    if svg:
        written.append(atomic_write_text(
            path.with_suffix(".svg"),
            svg_scatter(y, yhat, title, "real", "predicted", identity_line=True)))
    return written


def read_scatter(path) -> tuple[np.ndarray, np.ndarray]:
    rows = read_csv_rows(path)
    return (np.array([float(r["real"]) for r in rows]),
            np.array([float(r["predicted"]) for r in rows]))


def render_wcss(ks, values, path, svg: bool = False, chosen_k: int | None = None) -> list[Path]:
    path = Path(path)
    lines = ["k,wcss"] + [f"{int(k)},{fmt(w)}" for k, w in zip(ks, values)]
    written = [atomic_write_text(path, "\n".join(lines) + "\n")]
    if svg and len(ks):
        written.append(atomic_write_text(
            path.with_suffix(".svg"),
            svg_line(ks, values, "Elbow method", "k", "WCSS", mark_x=chosen_k)))
    return written


def render_pca_scatter_svg(coords, labels, path) -> Path:
    coords = np.asarray(coords, dtype=float).reshape(-1, 2)
    return atomic_write_text(path, svg_scatter(coords[:, 0], coords[:, 1],
                                               "PCA of K-means clusters", "PC1", "PC2",
                                               groups=labels))
