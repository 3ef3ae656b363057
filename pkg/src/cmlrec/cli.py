"""Command-line entry point: ``cmlrec <stage> [options]``.

Exit codes: 0 success, 2 invalid configuration, 3 missing artifact,
4 data error. On failure one JSON line describing the error goes to stderr.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

from . import __version__
from .errors import CMLRecError, ConfigError
from .pipeline import STAGES, load_config, run_all, run_stage

# flag -> config key; every flag overrides exactly one key
_FLAGS = {
    "seed": "seed",
    "artifacts": "paths.artifacts",
    "catalog": "paths.catalog",
    "transactions": "paths.transactions",
    "ground_truth": "paths.ground_truth",
    "targets": "paths.targets",
    "output": "paths.predictions",
    "max_plot_tokens": "text.max_plot_tokens",
    "comps_target": "eval.comps_target",
    "threshold": "eval.threshold",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="JSON config document")
    common.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any config key, e.g. --set metric.epochs=5")
    common.add_argument("--seed", type=int)
    common.add_argument("--artifacts", help="artifact directory (env CMLREC_ARTIFACTS)")
    common.add_argument("--catalog", help="catalog JSONL (ingest/synth)")
    common.add_argument("--transactions", help="transactions CSV (ingest/synth)")
    common.add_argument("--ground-truth", dest="ground_truth", help="synthetic ground-truth JSON")
    common.add_argument("--targets", help="target movies JSONL for infer")
    common.add_argument("--output", help="predictions CSV path for infer")
    common.add_argument("--max-plot-tokens", dest="max_plot_tokens", type=int)
    common.add_argument("--comps-target", dest="comps_target")
    common.add_argument("--threshold", type=float)
    common.add_argument("-v", "--verbose", action="store_true")

    parser = _Parser(prog="cmlrec", description="Content-based purchase prediction for new movies.")
    parser.add_argument("--version", action="version", version=f"cmlrec {__version__}")
    sub = parser.add_subparsers(dest="stage", required=True, parser_class=_Parser)
    for stage in STAGES:
        sub.add_parser(stage, parents=[common], help=f"run the {stage} stage")
    run = sub.add_parser("run", parents=[common], help="run every stage in order")
    run.add_argument("--skip-synth", action="store_true", help="use existing --catalog/--transactions")
    return parser


def _overrides(args) -> list:
    out = list(args.set)
    for flag, key in _FLAGS.items():
        value = getattr(args, flag, None)
        if value is not None:
            out.append(f"{key}={json.dumps(value)}")
    return out


def main(argv=None) -> int:
    stage = None
    try:
        args = build_parser().parse_args(argv)
        stage = args.stage
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(asctime)s %(name)s %(levelname)s %(message)s")
        config = load_config(args.config, _overrides(args))
        if stage == "run":
            stages = [s for s in STAGES if not (args.skip_synth and s == "synth")]
            result = run_all(config, stages)
            summary = {s: result[s] for s in ("eval", "comps", "project") if s in result}
            print(json.dumps({"stage": "run", "auc": summary.get("eval", {}).get("auc"),
                              "comps_overlap": summary.get("comps", {}).get("overlap"),
                              "purity": summary.get("project", {}).get("purity")}, sort_keys=True))
        else:
            result = run_stage(stage, config)
            print(json.dumps({"stage": stage, "result": result}, sort_keys=True, default=str))
        return 0
    except CMLRecError as exc:
        print(json.dumps({"error": exc.reason, "exit_code": exc.exit_code, "stage": stage,
                          "message": str(exc)}), file=sys.stderr)
        return exc.exit_code
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
