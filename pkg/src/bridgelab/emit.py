"""Deterministic result files: CSV series, JSON metadata and a minimal SVG line plot."""
from __future__ import annotations

import csv
import json
import math
import subprocess
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Sequence, Tuple
from xml.sax.saxutils import escape

import numpy as np

FLOAT_FMT = "%.17g"
_BUILD_ROOT = Path(__file__).resolve().parent


def git_describe() -> str:
    """``git describe --always --dirty`` of the source tree, or "unknown"."""
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"], cwd=_BUILD_ROOT,
                             capture_output=True, text=True, timeout=10)
    except (OSError, subprocess.SubprocessError):
        return "unknown"
    return out.stdout.strip() if out.returncode == 0 and out.stdout.strip() else "unknown"


def format_cell(v: Any) -> str:
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return FLOAT_FMT % v
    return "" if v is None else str(v)


def _meta_path(csv_path: Path) -> Path:
    return csv_path.with_name(csv_path.stem + ".meta.json")


def write_meta(path: Path, config: Any, wall_time: Optional[float], extra: Optional[Mapping] = None) -> Path:
    meta = {"config": config, "git_describe": git_describe(), "wall_time_s": wall_time}
    if extra:
        meta.update(extra)
    path.write_text(json.dumps(meta, indent=2, sort_keys=True, default=_jsonable) + "\n", encoding="utf-8")
    return path


def _jsonable(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, tuple):
        return list(o)
    return str(o)


def emit_series(name: str, columns: Sequence[str], rows, out_dir, config: Any = None,
                wall_time: Optional[float] = None) -> Path:
    """Write ``<name>.csv`` plus the sibling ``<name>.meta.json``; returns the CSV path."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / f"{name}.csv"
    ncol = len(columns)
    with path.open("w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(columns))
        for r in rows:
            r = list(r)
            if len(r) != ncol:
                raise ValueError(f"row has {len(r)} cells, expected {ncol}")
            w.writerow([format_cell(c) for c in r])
    write_meta(_meta_path(path), config, wall_time)
    return path


def _parse(cell: str):
    if cell in ("true", "false"):
        return cell == "true"
    try:
        return int(cell)
    except ValueError:
        pass
    try:
        return float(cell)
    except ValueError:
        return cell


def read_series(path) -> Tuple[List[str], List[List[Any]]]:
    """Inverse of :func:`emit_series` (numbers back to int/float)."""
    with Path(path).open(encoding="utf-8", newline="") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [[_parse(c) for c in row] for row in r]
    return header, rows


def read_meta(csv_path) -> Dict[str, Any]:
    return json.loads(_meta_path(Path(csv_path)).read_text(encoding="utf-8"))


_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


def write_svg(path, x, series: Mapping[str, Sequence[float]], x_range: Sequence[float],
              y_range: Sequence[float], config: Any = None, title: str = "",
              width: int = 640, height: int = 400) -> Path:
    """Self-contained SVG line plot on fixed axis ranges; the config echo goes in ``<desc>``."""
    x0, x1 = map(float, x_range)
    y0, y1 = map(float, y_range)
    pad = 50
    pw, ph = width - 2 * pad, height - 2 * pad
    sx = lambda v: pad + (v - x0) / (x1 - x0) * pw           # noqa: E731
    sy = lambda v: height - pad - (v - y0) / (y1 - y0) * ph  # noqa: E731
    x = np.asarray(x, dtype=float)
    parts = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
             f'viewBox="0 0 {width} {height}">',
             f"<desc>{escape(json.dumps(config, sort_keys=True, default=_jsonable))}</desc>",
             f'<rect x="{pad}" y="{pad}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    if title:
        parts.append(f'<text x="{width / 2:.1f}" y="{pad / 2:.1f}" text-anchor="middle" '
                     f'font-size="14">{escape(title)}</text>')
    for k in range(5):
        xv = x0 + k * (x1 - x0) / 4
        yv = y0 + k * (y1 - y0) / 4
        parts.append(f'<text x="{sx(xv):.1f}" y="{height - pad + 16}" text-anchor="middle" '
                     f'font-size="10">{xv:.3g}</text>')
        parts.append(f'<text x="{pad - 6}" y="{sy(yv) + 3:.1f}" text-anchor="end" '
                     f'font-size="10">{yv:.3g}</text>')
    for i, (label, ys) in enumerate(series.items()):
        ys = np.clip(np.asarray(ys, dtype=float), y0, y1)
        pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(x, ys) if np.isfinite(b))
        col = _COLORS[i % len(_COLORS)]
        parts.append(f'<polyline fill="none" stroke="{col}" stroke-width="1.5" points="{pts}"/>')
        parts.append(f'<text x="{pad + 8}" y="{pad + 14 + 14 * i}" font-size="11" fill="{col}">'
                     f"{escape(label)}</text>")
    parts.append("</svg>")
    p = Path(path)
    p.parent.mkdir(parents=True, exist_ok=True)
    p.write_text("\n".join(parts) + "\n", encoding="utf-8")
    return p
