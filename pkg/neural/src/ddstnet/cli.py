"""Command-line entry points: ``train`` and ``infer``.

Network geometry is read from the dataset's embedded simulator config, so
the key names mirror the link simulator's configuration file.
"""

from __future__ import annotations

import argparse
import sys

from .training import TrainSchedule, infer, train


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ddstnet", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    tr = sub.add_parser("train", help="run the three-stage training schedule")
    tr.add_argument("--dataset", required=True)
    tr.add_argument("--out", required=True, help="checkpoint directory")
    tr.add_argument("--stages", default="123", help="subset of stages to run, e.g. 12")
    tr.add_argument("--desk-scale", action="store_true",
                    help="10x fewer epochs per stage (workstation budget)")
    tr.add_argument("--epochs", type=int, nargs=3, metavar=("S1", "S2", "S3"),
                    default=None, help="explicit per-stage epoch counts")
    tr.add_argument("--batch", type=int, default=16)
    tr.add_argument("--seed", type=int, default=0)
    tr.add_argument("--device", default="cpu")
    tr.add_argument("--plain-data-subnet", action="store_true",
                    help="drop the temporal stage from the pure-data subnet")

    inf = sub.add_parser("infer", help="write channel estimates and LLRs for scoring")
    inf.add_argument("--dataset", required=True)
    inf.add_argument("--checkpoints", required=True)
    inf.add_argument("--out", required=True)
    inf.add_argument("--mode", default="both", choices=["estimates", "llrs", "both"])
    inf.add_argument("--device", default="cpu")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "train":
            if args.epochs is not None:
                schedule = TrainSchedule(
                    stage1_epochs=args.epochs[0],
                    stage2_epochs=args.epochs[1],
                    stage3_epochs=args.epochs[2],
                    batch_size=args.batch,
                )
            elif args.desk_scale:
                schedule = TrainSchedule.desk_scale(batch_size=args.batch)
            else:
                schedule = TrainSchedule(batch_size=args.batch)
            log = train(
                args.dataset, args.out, schedule, stages=args.stages,
                temporal_stage=not args.plain_data_subnet,
                device=args.device, seed=args.seed,
            )
            for stage in sorted({e["stage"] for e in log}):
                losses = [e["loss"] for e in log if e["stage"] == stage]
                print(f"stage {stage}: {len(losses)} epochs, "
                      f"loss {losses[0]:.5f} -> {losses[-1]:.5f}")
        else:
            out = infer(args.dataset, args.checkpoints, args.out,
                        mode=args.mode, device=args.device)
            print(f"wrote {args.mode} tensors to {out}")
        return 0
    except (ValueError, KeyError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
