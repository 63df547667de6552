"""Command line entry point: ``stablercm run|validate|list-experiments``.

Exit status: 0 when every acceptance check passes, 1 on an acceptance
failure, 2 on a configuration error and 3 on a runtime error.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import logging
import os
import sys
import tempfile
import time
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .. import __version__
from ..errors import ConfigurationError
from .config import EXPERIMENT_KINDS, ExperimentConfig, parse_config
from .experiments import COLUMNS, DRIVERS, Recorder, _jsonable
from .plots import render_svg

EXIT_PASS, EXIT_FAIL, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("stablercm")


@dataclass
class RunReport:
    config: dict[str, Any]
    out_dir: Path
    csv_path: Path | None
    summary_path: Path | None
    plots: list[Path] = field(default_factory=list)
    checks: list[dict] = field(default_factory=list)
    fits: dict[str, Any] = field(default_factory=dict)
    steps: dict[str, int] = field(default_factory=dict)
    wall_clock: float = 0.0
    error: str | None = None

    @property
    def passed(self) -> bool:
        return self.error is None and all(c["passed"] for c in self.checks)

    @property
    def exit_code(self) -> int:
        if self.error is not None:
            return EXIT_RUNTIME
        return EXIT_PASS if self.passed else EXIT_FAIL


def atomic_write(path: Path, text: str) -> None:
    """Write ``text`` to a temporary file next to ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def rows_to_csv(rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(COLUMNS)
    for row in rows:
        w.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def run_experiment(cfg: ExperimentConfig, out: str | os.PathLike | None = None) -> RunReport:
    """Run the experiment of ``cfg`` and write ``measurements.csv``, ``summary.json`` and plots.

    If a worker fails, the rows gathered so far are written together with a
    ``manifest.json`` describing the failure, and the report carries the error.
    """
    out_dir = Path(out if out is not None else cfg.out)
    rec = Recorder(cfg)
    report = RunReport(config=cfg.echo(), out_dir=out_dir, csv_path=None, summary_path=None)
    start = time.perf_counter()
    try:
        outcome = DRIVERS[cfg.kind](cfg, rec)
    except ConfigurationError:
        raise
    except Exception as exc:
        report.wall_clock = time.perf_counter() - start
        report.error = f"{type(exc).__name__}: {exc}"
        partial = out_dir / "measurements.partial.csv"
        atomic_write(partial, rows_to_csv(rec.rows()))
        manifest = {"status": "aborted", "error": report.error, "traceback": traceback.format_exc(),
                    "partial_rows": len(rec.rows()), "partial_csv": partial.name, "config": report.config,
                    "wall_clock_s": report.wall_clock}
        atomic_write(out_dir / "manifest.json", json.dumps(_jsonable(manifest), indent=2) + "\n")
        report.csv_path = partial
        return report

    report.wall_clock = time.perf_counter() - start
    report.checks = [c.as_dict() for c in outcome.checks]
    report.fits = _jsonable(outcome.fits)
    report.steps = outcome.steps
    report.csv_path = out_dir / "measurements.csv"
    atomic_write(report.csv_path, rows_to_csv(rec.rows()))
    for name, plot in outcome.plots.items():
        path = out_dir / f"{name}.svg"
        atomic_write(path, render_svg(plot))
        report.plots.append(path)
    summary = {
        "experiment": cfg.kind,
        "version": __version__,
        "passed": report.passed,
        "checks": report.checks,
        "fits": report.fits,
        "steps": report.steps,
        "notes": cfg.notes,
        "wall_clock_s": report.wall_clock,
        "config": report.config,
    }
    report.summary_path = out_dir / "summary.json"
    atomic_write(report.summary_path, json.dumps(summary, indent=2) + "\n")
    atomic_write(out_dir / "config.resolved.ini", cfg.to_text())
    return report


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="stablercm", description="Homogenization experiments for stable-like random conductance models.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)
    run = sub.add_parser("run", help="run an experiment")
    run.add_argument("config")
    run.add_argument("--threads", type=int, default=None, help="worker threads (overrides run.threads)")
    run.add_argument("--out", default=None, help="output directory (overrides run.out)")
    run.add_argument("--seed-offset", type=int, default=0, help="added to every seed")
    val = sub.add_parser("validate", help="validate a config and print the resolved values")
    val.add_argument("config")
    sub.add_parser("list-experiments", help="list the experiment kinds")
    return p


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.command == "list-experiments":
        for kind, desc in EXPERIMENT_KINDS.items():
            print(f"{kind:22s} {desc}")
        return EXIT_PASS
    try:
        cfg = parse_config(args.config)
        if args.command == "run":
            if args.threads is not None and args.threads < 1:
                raise ConfigurationError(f"--threads must be positive, got {args.threads}")
            cfg = cfg.with_overrides(threads=args.threads, out=args.out, seed_offset=args.seed_offset)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.command == "validate":
        print(cfg.to_text(), end="")
        for note in cfg.notes:
            print(f"# note: {note}")
        return EXIT_PASS
    try:
        report = run_experiment(cfg)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # failures outside the workers, e.g. an unwritable output directory
        print(f"runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    if report.error is not None:
        print(f"runtime error: {report.error} (partial results in {report.out_dir})", file=sys.stderr)
        return EXIT_RUNTIME
    for c in report.checks:
        print(f"{'PASS' if c['passed'] else 'FAIL'}  {c['name']}: {c['value']} (band {c['band']})")
    print(f"wrote {report.csv_path}, {report.summary_path} in {report.wall_clock:.1f}s")
    return report.exit_code


if __name__ == "__main__":
    sys.exit(main())
