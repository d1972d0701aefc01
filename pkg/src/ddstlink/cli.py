"""Command-line entry points.

Subcommands: ``simulate``, ``export-dataset``, ``score``, ``info``.
Exit codes: 0 success, 2 configuration error, 3 I/O error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .harness import (
    ConfigError,
    emit_results,
    export_dataset,
    load_config,
    make_context,
    run_sweep,
    score_external,
)

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddstlink", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="run a Monte-Carlo sweep and write CSV results")
    sim.add_argument("--config", required=True)
    sim.add_argument("--out", required=True)
    sim.add_argument("--seed", type=int, default=None, help="override the config seed")
    sim.add_argument("--trials", type=int, default=None, help="override trials per SNR point")

    exp = sub.add_parser("export-dataset", help="export training tensors for the neural component")
    exp.add_argument("--config", required=True)
    exp.add_argument("--split", required=True, choices=["train", "val", "test"])
    exp.add_argument("--samples", type=int, required=True)
    exp.add_argument("--out", required=True)

    sc = sub.add_parser("score", help="grade externally produced estimates or LLRs")
    sc.add_argument("--dataset", required=True)
    sc.add_argument("--import", dest="import_dir", required=True)
    sc.add_argument("--mode", required=True, choices=["estimates", "llrs"])
    sc.add_argument("--out", required=True)

    info = sub.add_parser("info", help="print the frame plan and derived quantities")
    info.add_argument("--config", required=True)
    return parser


def _load(path: str, overrides: dict):
    cfg = load_config(path)
    raw = dict(cfg.raw)
    for key, value in overrides.items():
        if value is not None:
            raw[key] = value
    if overrides:
        from .harness import config_from_dict

        cfg = config_from_dict(raw)
    return cfg


def _cmd_simulate(args) -> int:
    cfg = _load(args.config, {"seed": args.seed, "trials": args.trials})
    records = run_sweep(cfg)
    emit_results(records, args.out, cfg.raw)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def _cmd_export(args) -> int:
    cfg = _load(args.config, {})
    out = export_dataset(cfg, args.split, args.samples, args.out)
    print(f"exported {args.samples} samples to {out}")
    return EXIT_OK


def _cmd_score(args) -> int:
    records = score_external(args.dataset, args.import_dir, args.mode)
    emit_results(records, args.out)
    print(f"wrote {len(records)} records to {args.out}")
    return EXIT_OK


def _cmd_info(args) -> int:
    cfg = _load(args.config, {})
    ctx = make_context(cfg)
    summary = {
        "scheme": cfg.scheme,
        "estimator": cfg.estimator,
        "plan": ctx.plan.describe(),
        "alpha": ctx.alpha,
        "cycle_blocks": ctx.ddst.n_blocks if ctx.ddst else None,
        "data_res_per_antenna": ctx.capacity,
        "bits_per_antenna": ctx.seg.bits_per_antenna,
        "codewords_per_antenna": ctx.seg.codewords_per_antenna,
        "filler_bits": ctx.seg.filler_bits,
        "code": {"n": ctx.code.n, "k": ctx.code.k, "rate": ctx.code.rate},
        "modulation": cfg.modulation,
    }
    print(json.dumps(summary, indent=1))
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    handlers = {
        "simulate": _cmd_simulate,
        "export-dataset": _cmd_export,
        "score": _cmd_score,
        "info": _cmd_info,
    }
    try:
        return handlers[args.command](args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (OSError, FileNotFoundError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
