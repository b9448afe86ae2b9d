"""Command-line entry point.

    learnsim run CONFIG [--set section.key=value ...] [--seed N] [--iterations N]
    learnsim reproduce PRESET [--seeds 0,1,2] [--iterations N]
    learnsim validate-config CONFIG [--set ...]

Outputs go under ``$LEARNSIM_OUTPUT`` (default ``./runs``), one directory per
invocation, each with a ``manifest.json`` listing every file written there.
"""

from __future__ import annotations

import argparse
import datetime as _dt
import json
import logging
import os
import subprocess
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import __version__
from . import orchestrator as orch
from .config import ExperimentConfig
from .errors import ConfigError, ExperimentError
from .presets import PRESETS, run_preset

OUTPUT_ENV = "LEARNSIM_OUTPUT"
MANIFEST_VERSION = 1

log = logging.getLogger("learnsim")


@dataclass
class RunManifest:
    command: str
    config_hash: Optional[str]
    seed: Optional[int]
    code_version: str
    started: str
    finished: str = ""
    status: str = "running"
    outputs: list[str] = field(default_factory=list)
    error: Optional[str] = None
    version: int = MANIFEST_VERSION

    def add(self, path: Path, root: Path) -> None:
        rel = str(Path(path).relative_to(root))
        if rel in self.outputs:
            raise ValueError(f"{rel} already listed")
        self.outputs.append(rel)

    def write(self, root: Path) -> Path:
        path = root / "manifest.json"
        path.write_text(json.dumps(asdict(self), indent=2) + "\n")
        return path


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def code_version() -> str:
    """``git describe`` of the source tree when available, else the package version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty", "--tags"],
            cwd=Path(__file__).resolve().parent,
            capture_output=True,
            text=True,
            timeout=5,
        )
        if out.returncode == 0 and out.stdout.strip():
            return f"{__version__}+git.{out.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def output_root(explicit: Optional[str]) -> Path:
    return Path(explicit or os.environ.get(OUTPUT_ENV) or "runs")


def _fresh_dir(root: Path, name: str) -> Path:
    path = root / name
    n = 1
    while path.exists():
        n += 1
        path = root / f"{name}-{n}"
    path.mkdir(parents=True)
    return path


def load_config(path: str, overrides: Sequence[str], seed=None, iterations=None, parallelism=None) -> ExperimentConfig:
    cfg = ExperimentConfig.load(path)
    extra = list(overrides)
    if seed is not None:
        extra.append(f"experiment.seed={seed}")
    if iterations is not None:
        extra.append(f"experiment.iterations={iterations}")
    if parallelism is not None:
        extra.append(f"experiment.parallelism={parallelism}")
    return cfg.with_overrides(extra) if extra else cfg


# ---------------------------------------------------------------------------
# commands


def cmd_run(args) -> int:
    cfg = load_config(args.config, args.set, args.seed, args.iterations, args.parallelism)
    e = cfg.experiment
    root = output_root(args.out)
    out = _fresh_dir(root, f"{e.task}_{e.protocol}_seed{e.seed}_{cfg.digest()[:8]}")
    manifest = RunManifest("run", cfg.digest(), e.seed, code_version(), _now())
    manifest.add(cfg.save(out / "config.cfg"), out)

    status = 0
    try:
        hist = orch.run(cfg)
    except ExperimentError as exc:
        hist = exc.partial
        manifest.status, manifest.error = "failed", str(exc)
        print(f"error: {exc}", file=sys.stderr)
        status = 1
    else:
        manifest.status = "ok"

    if hist is not None:
        manifest.add(hist.write_csv(out / "history.csv"), out)
        manifest.add(hist.write_rollouts_csv(out / "rollouts.csv"), out)
        if len(hist):
            manifest.add(orch.write_summary(hist, out / "summary.json", e.final_window, {"config_hash": cfg.digest()}), out)
    manifest.finished = _now()
    manifest.write(out)
    if status == 0:
        summary = hist.summary(e.final_window)
        print(f"{e.protocol} on {e.task}: final reward {summary['final_reward']:.4f} over {len(hist)} iterations")
    print(out)
    return status


def _format_cell(v) -> str:
    if isinstance(v, dict) and "median" in v:
        return f"{v['median']:.4f}"
    if isinstance(v, float):
        return f"{v:.4f}"
    return str(v)


def format_table(rows: list[dict]) -> str:
    keys: list[str] = []
    for r in rows:
        keys += [k for k in r if k not in keys]
    cells = [keys] + [[_format_cell(r.get(k, "")) for k in keys] for r in rows]
    widths = [max(len(row[i]) for row in cells) for i in range(len(keys))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip() for row in cells]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines)


def cmd_reproduce(args) -> int:
    kwargs = {"overrides": args.set}
    if args.seeds:
        kwargs["seeds"] = tuple(int(s) for s in args.seeds.split(","))
    if args.iterations:
        kwargs["iterations"] = args.iterations
    root = output_root(args.out)
    out = _fresh_dir(root, args.preset)
    manifest = RunManifest("reproduce " + args.preset, None, None, code_version(), _now())
    result = run_preset(args.preset, **kwargs)
    for path in result.write(out):
        manifest.add(path, out)
    manifest.status, manifest.finished = "ok", _now()
    manifest.write(out)
    print(format_table(result.rows))
    print(out)
    return 0


def cmd_validate(args) -> int:
    cfg = load_config(args.config, args.set)
    sys.stdout.write(cfg.to_ini())
    print(f"# sha256 {cfg.digest()}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="learnsim", description="Learn simulator parameters by policy gradient.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one experiment from a config file")
    run.add_argument("config")
    run.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE", help="override a config field")
    run.add_argument("--seed", type=int)
    run.add_argument("--iterations", type=int)
    run.add_argument("--parallelism", type=int, help="max worker processes for rollouts")
    run.add_argument("--out", help=f"output root (default ${OUTPUT_ENV} or ./runs)")
    run.set_defaults(func=cmd_run)

    rep = sub.add_parser("reproduce", help="run a named experiment matrix and print its table")
    rep.add_argument("preset", choices=sorted(PRESETS))
    rep.add_argument("--seeds", help="comma separated seeds")
    rep.add_argument("--iterations", type=int, help="shorten every run (smoke test)")
    rep.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    rep.add_argument("--out", help=f"output root (default ${OUTPUT_ENV} or ./runs)")
    rep.set_defaults(func=cmd_reproduce)

    val = sub.add_parser("validate-config", help="check a config and print its canonical form")
    val.add_argument("config")
    val.add_argument("--set", action="append", default=[], metavar="SECTION.KEY=VALUE")
    val.set_defaults(func=cmd_validate)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
