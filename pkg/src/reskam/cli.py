"""
The ``reskam`` command.

::

    reskam run <stage> <config.ini> [--caps k=v,...] [--steps N] [--out DIR] [--seed-manifest FILE]
    reskam export <artifact> --format text|csv|manifest [--out DIR] [-o FILE]

``<artifact>`` is a path or ``stage:file``, resolved through the manifest in ``--out``. The exit code is 0 on
success, 1 on a stage error and 2 when ``run accept`` finds a failing check.
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path
from typing import Optional, Sequence

from ._pipeline import FORMATS, MANIFEST, STAGES, Pipeline, PipelineManifest, PipelineOptions, export
from .config import load_config, parse_overrides
from .errors import ReskamError, StageError

__all__ = ("main", "parse_args", "LOG_LEVEL_ENV")

log = logging.getLogger(__name__)

LOG_LEVEL_ENV = "RESKAM_LOG_LEVEL"


def parse_args(argv: Optional[Sequence[str]] = None) -> argparse.Namespace:
    parser = argparse.ArgumentParser(prog="reskam", description="Normal forms of a planetary mean-motion resonance.")
    parser.add_argument(
        "--log-level",
        default=os.environ.get(LOG_LEVEL_ENV, "WARNING"),
        help=f"Logging level (default: ${LOG_LEVEL_ENV} or WARNING)",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="Run a stage and the stages it depends on.")
    run.add_argument("stage", choices=list(STAGES))
    run.add_argument("config", type=Path, help="INI configuration file")
    run.add_argument("--caps", default=None, help="Truncation overrides: key=value,key=value")
    run.add_argument("--steps", type=int, default=None, help="Step count of the stage")
    run.add_argument("--out", type=Path, default=Path("."), help="Output directory (default: .)")
    run.add_argument("--seed-manifest", type=Path, default=None, help="Reuse the stage keys of this manifest")

    out = commands.add_parser("export", help="Render an artifact file.")
    out.add_argument("artifact", help="A path, or stage:file resolved through the manifest")
    out.add_argument("--format", choices=FORMATS, required=True)
    out.add_argument("--out", type=Path, default=Path("."), help="Directory holding the manifest (default: .)")
    out.add_argument("-o", "--output", type=Path, default=None, help="Write here instead of standard output")
    return parser.parse_args(argv)


def _resolve(artifact: str, out: Path) -> Path:
    path = Path(artifact)
    if path.exists():
        return path
    stage, sep, name = artifact.partition(":")
    if not sep:
        raise StageError(f"no such artifact: {artifact}.")
    manifest = PipelineManifest.read(out / MANIFEST)
    if stage not in manifest.stages:
        raise StageError(f"stage {stage} has not been run in {out}.")
    entry = manifest.stages[stage]
    if name not in entry.get("outputs", []):
        raise StageError(f"stage {stage} has no output {name}.")
    return Path(entry["path"]) / name


def _run(args: argparse.Namespace) -> int:
    config = load_config(args.config)
    if args.caps:
        config = config.with_caps(parse_overrides(args.caps))
    if args.steps is not None:
        config = config.with_steps(args.stage, args.steps)
    seed = PipelineManifest.read(args.seed_manifest) if args.seed_manifest else None
    pipeline = Pipeline(config, PipelineOptions(args.out, seed=seed))
    artifact = pipeline.run(args.stage)
    for name, value in sorted(artifact.scalars.items()):
        print(f"{args.stage}.{name}: {value}")
    if args.stage == "accept" and not artifact.scalars.get("passed", False):
        print(f"acceptance failed: {', '.join(artifact.scalars.get('failed', []))}", file=sys.stderr)
        return 2
    return 0


def _export(args: argparse.Namespace) -> int:
    text = export(_resolve(args.artifact, args.out), args.format)
    if args.output is None:
        sys.stdout.write(text)
    else:
        args.output.write_text(text)
    return 0


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=args.log_level.upper(), format="%(asctime)s %(levelname)s %(name)s: %(message)s")
    try:
        match args.command:
            case "run":
                return _run(args)
            case "export":
                return _export(args)
    except (ReskamError, ValueError, OSError) as e:
        print(f"reskam: {e}", file=sys.stderr)
        return 1
    return 1


if __name__ == "__main__":
    sys.exit(main())
