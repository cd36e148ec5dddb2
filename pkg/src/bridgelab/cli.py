"""``bridgelab run <config.json> [--out DIR] [--claims ID,ID] [--resolution multiplier]``."""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
import time
from pathlib import Path
from typing import List, Optional

from .claims import ALL_CLAIMS, MATRIX_COLUMNS, Context, run_matrix
from .config import ConfigError, load
from .emit import emit_series, git_describe, write_svg

EXIT_OK, EXIT_FAIL, EXIT_CONFIG = 0, 1, 2


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bridgelab", description="Schrödinger bridge verification runs.")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiments of a config file")
    r.add_argument("config", help="JSON run configuration")
    r.add_argument("--out", help="output directory (overrides output_dir)")
    r.add_argument("--claims", help="comma-separated claim ids to run (others are skipped)")
    r.add_argument("--resolution", type=float, default=1.0, help="grid refinement multiplier")
    r.add_argument("-v", "--verbose", action="store_true")
    return p


def _emit_plot(ctx: Context, out: Path, cfg, echo):
    if not cfg.plot.get("svg") or "entropy_bound" not in ctx.series:
        return
    cols, rows = ctx.series["entropy_bound"]
    x = [r[0] for r in rows]
    series = {c: [r[k] for r in rows] for k, c in enumerate(cols) if k > 0}
    ys = [v for s in series.values() for v in s if math.isfinite(v)]
    y_range = cfg.plot.get("y_range", [min(0.0, min(ys)), max(ys) * 1.05 if ys else 1.0])
    write_svg(out / "entropy_bound.svg", x, series, cfg.plot.get("x_range", [0.0, 1.0]), y_range,
              config=echo, title="entropy along the bridge and its upper bounds")


def _json_cell(v):
    return None if isinstance(v, float) and not math.isfinite(v) else v


def run(config_path: str, out: Optional[str] = None, claims: Optional[str] = None,
        resolution: float = 1.0) -> int:
    try:
        cfg = load(config_path)
    except FileNotFoundError:
        print(f"config error: {config_path}: no such file", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as e:
        where = ".".join(str(p) for p in e.path)
        print(f"config error: {config_path}:{e.line}: " + (f"{where}: " if where else "") + e.message,
              file=sys.stderr)
        return EXIT_CONFIG
    if not (resolution > 0 and math.isfinite(resolution)):
        print("config error: --resolution must be a positive number", file=sys.stderr)
        return EXIT_CONFIG
    selected = cfg.claims
    if claims:
        selected = [c.strip() for c in claims.split(",") if c.strip()]
        bad = [c for c in selected if c not in ALL_CLAIMS]
        if bad:
            print(f"config error: --claims: unknown claim id {bad[0]!r}", file=sys.stderr)
            return EXIT_CONFIG
    out_dir = Path(out if out is not None else cfg.output_dir)
    echo = dict(cfg.raw)
    if resolution != 1.0:
        echo = {"config": echo, "resolution": resolution}
    t0 = time.perf_counter()
    ctx = Context(cfg, resolution)
    results = run_matrix(ctx, selected)
    wall = time.perf_counter() - t0
    for name, (cols, rows) in ctx.series.items():
        emit_series(name, cols, rows, out_dir, config=echo, wall_time=wall)
    emit_series("matrix", MATRIX_COLUMNS, [r.row() for r in results], out_dir, config=echo, wall_time=wall)
    doc = {"config": echo, "git_describe": git_describe(), "wall_time_s": wall,
           "timings_s": {r.id: r.seconds for r in results},
           "rows": [dict(zip(MATRIX_COLUMNS, map(_json_cell, r.row()))) for r in results]}
    (out_dir / "matrix.json").write_text(json.dumps(doc, indent=2, sort_keys=True, default=str) + "\n",
                                         encoding="utf-8")
    _emit_plot(ctx, out_dir, cfg, echo)
    for r in results:
        print(f"{r.id:13s} {r.status:7s} measured={r.measured:.6g} tol={r.tolerance:.3g} [{r.resolution}] {r.detail}")
    failed = [r.id for r in results if r.status == "fail"]
    if failed:
        print(f"numerical failure: {', '.join(failed)}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK


def main(argv: Optional[List[str]] = None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "run":
        return run(args.config, args.out, args.claims, args.resolution)
    return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
