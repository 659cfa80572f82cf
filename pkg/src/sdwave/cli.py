"""Command line: ``sdwave run <config>`` and ``sdwave validate <config>``."""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import __version__
from .config import ConfigError, RunConfig, load_config
from .experiments import ExperimentResult, run_experiment
from .output import write_csv, write_json, write_json_atomic, write_snapshots, trajectory_columns
from .spectral import set_fft_workers

log = logging.getLogger("sdwave")

THREADS_ENV = "SDWAVE_THREADS"


def resolve_threads(flag: int | None) -> int:
    """--threads wins, then the environment variable, then 1."""
    if flag is not None:
        return max(1, flag)
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ConfigError(f"{THREADS_ENV} must be an integer, got {env!r}") from None
    return 1


def write_outputs(cfg: RunConfig, result: ExperimentResult, outdir: Path) -> list[str]:
    """CSV, report JSON and snapshots; returns the written file names."""
    outdir.mkdir(parents=True, exist_ok=True)
    formats = cfg.output["formats"]
    written = []
    if "csv" in formats:
        for name, (model, rec) in sorted(result.trajectories.items()):
            written.append(write_csv(outdir / f"{name}.csv", trajectory_columns(model, rec)).name)
        for name, cols in sorted(result.tables.items()):
            written.append(write_csv(outdir / f"{name}.csv", cols).name)
    if "json" in formats:
        payload = {"experiment": cfg.experiment["name"], "summary": result.summary,
                   "verdicts": result.verdicts, "details": result.report}
        written.append(write_json(outdir / "report.json", payload).name)
    if "snapshots" in formats:
        for name, (_, rec) in sorted(result.trajectories.items()):
            written.append(write_snapshots(outdir / f"{name}.bin", rec).name)
    return written


def execute(cfg: RunConfig, outdir: Path, threads: int = 1) -> dict:
    """Run one configured experiment and write all files; returns the manifest."""
    set_fft_workers(threads)
    start = time.perf_counter()
    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            result = run_experiment(cfg, pool)
    else:
        result = run_experiment(cfg)
    files = write_outputs(cfg, result, outdir)
    verdicts = {k: bool(v) for k, v in result.verdicts.items()}
    manifest = {
        "config": cfg.to_dict(),
        "tool": {"name": "sdwave", "version": __version__},
        "threads": threads,
        "wall_clock_seconds": time.perf_counter() - start,
        "summary": result.summary,
        "verdicts": verdicts,
        "status": "pass" if all(verdicts.values()) else "fail",
        "files": files,
    }
    write_json_atomic(outdir / "manifest.json", manifest)
    return manifest


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg = cfg.replace(seed=args.seed)
    if args.output is not None:
        cfg = cfg.replace(**{"output.directory": args.output})
    threads = resolve_threads(args.threads)
    manifest = execute(cfg, Path(cfg.output["directory"]), threads)
    for name, ok in manifest["verdicts"].items():
        print(f"{'PASS' if ok else 'FAIL'}  {name}")
    print(f"{manifest['status']}: {cfg.experiment['name']} -> {cfg.output['directory']}")
    return 0 if manifest["status"] == "pass" else 1


def _cmd_validate(args) -> int:
    cfg = load_config(args.config)
    print(f"ok: {cfg.experiment['name']} on d={cfg.model['dimension']}, N={cfg.model['modes_per_dim']}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="sdwave", description="Strongly damped wave equation laboratory")
    p.add_argument("--verbose", "-v", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    r = sub.add_parser("run", help="run the experiment described by a JSON config")
    r.add_argument("config")
    r.add_argument("--output", help="output directory (overrides output.directory)")
    r.add_argument("--seed", type=int, help="unsigned 64-bit seed (overrides seed)")
    r.add_argument("--threads", type=int, help=f"worker threads (default: ${THREADS_ENV} or 1)")
    r.set_defaults(func=_cmd_run)
    v = sub.add_parser("validate", help="check a config without running it")
    v.add_argument("config")
    v.set_defaults(func=_cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (OSError, ValueError, FloatingPointError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
