"""``owlbench`` command line: one subcommand per pipeline stage."""
from __future__ import annotations

import argparse
import logging
import sys

from .gateway import GatewayError
from .pipeline import STAGES, PipelineError, RunConfig, run_stage
from .prompts import PromptError
from .tasks import TaskError

log = logging.getLogger("owlbench")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="owlbench", description="Graph reasoning prompt benchmark pipeline")
    sub = parser.add_subparsers(dest="stage", required=True, metavar="STAGE")
    for stage in STAGES:
        p = sub.add_parser(stage, help=f"run the {stage} stage")
        p.add_argument("--config", required=True, help="run configuration (YAML)")
        p.add_argument("--out", default=None, help="output directory (default: output_dir from the config)")
        p.add_argument("--stage-override", action="store_true",
                       help="proceed even if the manifest was written under a different config hash")
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    try:
        config = RunConfig.load(args.config)
        result = run_stage(args.stage, config, args.out, args.stage_override)
    except (PipelineError, TaskError, PromptError, GatewayError) as exc:
        log.error("%s failed: %s", args.stage, exc)
        return 2
    state = "up to date" if result.skipped else "done"
    log.info("%s %s: %s", args.stage, state, ", ".join(f"{k}={v}" for k, v in result.stats.items()))
    if result.exit_code:
        log.error("%s reported violations", args.stage)
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
