"""
prcaps - pseudo-Riemannian capsule network command line

Sub-commands:
    train               train one model, write report.csv, best.ckpt, resolved_config.yaml
    eval                score a checkpoint on one split
    ablate              run an ablation grid over several seeds, write summary.csv
    gen-synthetic       generate a synthetic node dataset in the text format
    export-embeddings   write per-node tangent embeddings of a checkpoint

Exit codes: 0 success, 2 configuration or validation error, 3 numeric
divergence, 4 I/O error.

Educational Note:
Settings are resolved as defaults < --config YAML < flags. The resolved
configuration is written next to the results, so
`prcaps train --config runs/x/resolved_config.yaml --out runs/y`
repeats a run exactly.
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from dotenv import load_dotenv

# Add the repository root to the Python path for `src` imports
sys.path.insert(0, str(Path(__file__).parent))

from src.cli.commands import (
    cmd_ablate,
    cmd_eval,
    cmd_export_embeddings,
    cmd_gen_synthetic,
    cmd_train,
)
from src.cli.config import AblationGrid, load_run_config
from src.data.synthetic import SyntheticFamily, SyntheticSpec
from src.utils.errors import (
    EXIT_CODES,
    classify_error,
    describe_error,
    get_error_recovery_suggestions,
)
from src.utils.logging_config import StructuredLogger, close_file_logging, setup_logging

logger = logging.getLogger("prcaps")


# ============================================================================
# Argument Parsing
# ============================================================================

def _run_options() -> argparse.ArgumentParser:
    """Flags shared by train, eval, ablate and export-embeddings."""
    parent = argparse.ArgumentParser(add_help=False)
    parent.add_argument("--config", help="YAML run configuration")
    parent.add_argument("--seed", type=int, help="Run seed (every random stream derives from it)")
    parent.add_argument("--data", help="Dataset path (node directory, graph JSON-lines file or TU directory)")
    parent.add_argument("--task", choices=["node", "graph"], help="Classification task")
    parent.add_argument("--normalize-features", dest="normalize_features", action="store_true",
                        help="Row-wise L2 normalization of node features")
    parent.add_argument("--routing", choices=["none", "euclidean", "pcr", "acr"], help="Routing mode")
    parent.add_argument("--classifier", choices=["linear", "prcc"], help="Classification head")
    parent.add_argument("--K", type=int, help="Routing perspectives (ACR)")
    parent.add_argument("--T", type=int, help="Routing iterations")
    parent.add_argument("--dims", help="Capsule signature as s,t")
    parent.add_argument("--epochs", type=int, help="Training epochs")
    parent.add_argument("--out", help="Output directory")
    parent.add_argument("--overwrite", action="store_true", help="Reuse a non-empty output directory")
    parent.add_argument("--log-level", dest="log_level", help="DEBUG | INFO | WARNING | ERROR")
    return parent


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="prcaps",
        description="Pseudo-Riemannian capsule networks for graph representation learning",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    run_options = _run_options()

    sub.add_parser("train", parents=[run_options], help="Train one model")

    p_eval = sub.add_parser("eval", parents=[run_options], help="Score a checkpoint")
    p_eval.add_argument("--checkpoint", required=True, help="best.ckpt written by train")
    p_eval.add_argument("--split", default="test", choices=["train", "val", "test"])

    p_ablate = sub.add_parser("ablate", parents=[run_options], help="Run an ablation grid")
    p_ablate.add_argument("--grid", choices=[g.value for g in AblationGrid], help="Ablation grid")
    p_ablate.add_argument("--seeds", type=int, nargs="+", help="Seeds per cell")
    p_ablate.add_argument("--workers", type=int, help="Parallel worker processes")

    p_export = sub.add_parser("export-embeddings", parents=[run_options], help="Export tangent embeddings")
    p_export.add_argument("--checkpoint", required=True, help="best.ckpt written by train")
    p_export.add_argument("--output", help="CSV path (default <out>/embeddings.csv)")

    defaults = SyntheticSpec()
    p_gen = sub.add_parser("gen-synthetic", help="Generate a synthetic node dataset")
    p_gen.add_argument("--family", choices=[f.value for f in SyntheticFamily], default=defaults.family.value)
    for name in ("depth", "branching", "clique_size", "cycle_length", "motif_count",
                 "motif_depth", "motif_branching", "max_degree", "seed"):
        p_gen.add_argument(f"--{name.replace('_', '-')}", dest=name, type=int, default=getattr(defaults, name))
    p_gen.add_argument("--noise", type=float, default=defaults.noise, help="Feature noise rate in [0, 1)")
    p_gen.add_argument("--out", required=True, help="Output directory")
    p_gen.add_argument("--overwrite", action="store_true")
    p_gen.add_argument("--log-level", dest="log_level")

    return parser


OVERRIDE_FLAGS = (
    "seed", "data", "task", "normalize_features", "routing", "classifier", "K", "T", "dims",
    "epochs", "out", "overwrite", "log_level", "grid", "seeds", "workers",
)


def overrides_from_args(args: argparse.Namespace) -> dict:
    """Flag values keyed the way load_run_config expects."""
    return {flag: getattr(args, flag) for flag in OVERRIDE_FLAGS if hasattr(args, flag)}


# ============================================================================
# Dispatch
# ============================================================================

def run_command(args: argparse.Namespace) -> int:
    if args.command == "gen-synthetic":
        spec = SyntheticSpec(
            family=args.family, depth=args.depth, branching=args.branching,
            clique_size=args.clique_size, cycle_length=args.cycle_length,
            motif_count=args.motif_count, motif_depth=args.motif_depth,
            motif_branching=args.motif_branching, noise=args.noise,
            max_degree=args.max_degree, seed=args.seed,
        )
        return cmd_gen_synthetic(spec, args.out, args.overwrite)

    config = load_run_config(args.config, overrides_from_args(args))
    setup_logging(config.run.log_level, enable_file_logging=False)

    if args.command == "train":
        return cmd_train(config)
    if args.command == "eval":
        return cmd_eval(config, args.checkpoint, args.split)
    if args.command == "ablate":
        return cmd_ablate(config)
    return cmd_export_embeddings(config, args.checkpoint, args.output)


def main(argv: Optional[List[str]] = None) -> int:
    """
    Entry point; returns the process exit code.

    Errors are reported on stderr with recovery hints and mapped to exit
    codes by category. argparse usage errors exit with 2.
    """
    load_dotenv()
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)

    try:
        setup_logging(getattr(args, "log_level", None), enable_file_logging=False)
        return run_command(args)
    except KeyboardInterrupt:
        print("interrupted", file=sys.stderr)
        return 130
    except Exception as e:
        category = classify_error(e)
        StructuredLogger().log_event("command_failed", level=logging.ERROR, command=args.command, **describe_error(e))
        logger.debug("Traceback", exc_info=True)
        print(f"error: {e}", file=sys.stderr)
        for suggestion in get_error_recovery_suggestions(category):
            print(f"  hint: {suggestion}", file=sys.stderr)
        return EXIT_CODES[category]
    finally:
        close_file_logging()


if __name__ == "__main__":
    sys.exit(main())
