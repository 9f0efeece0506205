"""Command-line surface for the full pipeline.

    vesselspace vessel gen|voxelize   dataset synthesis and rasterization
    vesselspace vae train|encode      model training and feature extraction
    vesselspace space embed|cluster|render|compare
    vesselspace all                   chain every stage
    vesselspace serve                 HTTP explorer over a finished run

Common flags: --config <json>, --preset paper|desk|ci, --seed <u64>,
--out <dir>. Exit codes: 0 success, 2 configuration error, 3 data/format
error, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import sys

from .errors import (
    ConfigurationError,
    DataError,
    DimensionError,
    DomainError,
    NumericError,
)
from .pipeline import load_config, preset_config, run_all, run_stage

EXIT_CONFIG = 2
EXIT_DATA = 3
EXIT_NUMERIC = 4

_STAGE_COMMANDS = {
    ("vessel", "gen"): "gen",
    ("vessel", "voxelize"): "voxelize",
    ("vae", "train"): "train",
    ("vae", "encode"): "encode",
    ("space", "embed"): "embed",
    ("space", "cluster"): "cluster",
    ("space", "render"): "render",
    ("space", "compare"): "compare",
}


def _add_common(parser):
    parser.add_argument("--config", help="JSON config file (PipelineConfig schema)")
    parser.add_argument(
        "--preset", choices=("paper", "desk", "ci"), help="named preset"
    )
    parser.add_argument("--seed", type=int, help="global seed")
    parser.add_argument("--out", default="runs/out", help="artifact directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vesselspace",
        description="parametric vs. feature design-space pipeline",
    )
    top = parser.add_subparsers(dest="group", required=True)

    for group, stages in (
        ("vessel", ("gen", "voxelize")),
        ("vae", ("train", "encode")),
        ("space", ("embed", "cluster", "render", "compare")),
    ):
        g = top.add_parser(group)
        sub = g.add_subparsers(dest="stage", required=True)
        for stage in stages:
            _add_common(sub.add_parser(stage))

    _add_common(top.add_parser("all", help="run every stage in order"))

    serve = top.add_parser("serve", help="serve the interactive explorer API")
    serve.add_argument("--snapshot-dir", required=True, help="finished run directory")
    serve.add_argument("--port", type=int, default=8080)
    serve.add_argument("--host", default="127.0.0.1")
    return parser


def resolve_config(args):
    if args.config:
        return load_config(args.config, preset=args.preset, seed=args.seed)
    preset = args.preset or "desk"
    return preset_config(preset, seed=args.seed if args.seed is not None else 0)


def _progress(entry):
    print(
        f"epoch {entry.epoch}: train total {entry.train_total:.3f} "
        f"(recon {entry.train_recon:.3f}, kld {entry.train_kld:.3f}), "
        f"val total {entry.val_total:.3f}",
        flush=True,
    )


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.group == "serve":
            from .explorer_api import serve

            serve(args.snapshot_dir, host=args.host, port=args.port)
            return 0
        config = resolve_config(args)
        if args.group == "all":
            written = run_all(config, args.out, progress=_progress)
            for stage, paths in written.items():
                for path in paths:
                    print(f"{stage}: {path}")
            return 0
        stage = _STAGE_COMMANDS[(args.group, args.stage)]
        for path in run_stage(stage, config, args.out, progress=_progress):
            print(f"{stage}: {path}")
        return 0
    except (ConfigurationError, DomainError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, DimensionError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except NumericError as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
