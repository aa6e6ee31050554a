"""Command line interface: ``posegan <command> [options]``"""
import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import numpy as np

from posegan import __version__
from posegan.core.config import resolve_train_config, settings
from posegan.core.exceptions import PoseganError, UsageError
from posegan.core.init import init_runtime
from posegan.core.logging import setup_logging

logger = logging.getLogger("posegan.cli")


class ArgumentParser(argparse.ArgumentParser):
    """argparse that reports usage problems as UsageError instead of exiting"""

    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def expand_sequences(values: Optional[Sequence[str]]) -> List[str]:
    """Accept ``00 01`` as well as ranges like ``00-10``"""
    result: List[str] = []
    for value in values or []:
        for item in value.split(","):
            item = item.strip()
            if not item:
                continue
            first, sep, last = item.partition("-")
            if sep and first.isdigit() and last.isdigit():
                width = len(first)
                result.extend(f"{i:0{width}d}" for i in range(int(first), int(last) + 1))
            else:
                result.append(item)
    return list(dict.fromkeys(result))


def print_resolved(command: str, resolved: Dict[str, Any]) -> None:
    """Resolved configuration as one JSON line on stderr; stdout stays for results"""
    payload = {"command": command, "version": __version__, **resolved}
    print(json.dumps(payload, sort_keys=True, default=str), file=sys.stderr)


# ── Commands ─────────────────────────────────────────────────────────


def cmd_preprocess(args) -> int:
    from posegan.services.dataset_service import DatasetBuilder

    sequences = expand_sequences(args.sequences)
    if not sequences:
        raise UsageError("No sequences given (use --sequences 00 01 ... or 00-10)")
    print_resolved("preprocess", {"kitti_root": args.kitti_root, "out": args.out, "sequences": sequences,
                                  "mirror": args.mirror, "stride": args.stride,
                                  "correspondences": args.correspondences, "seed": args.seed})
    DatasetBuilder(workers=args.workers, show_progress=sys.stderr.isatty()).build(
        args.kitti_root,
        args.out,
        sequences,
        mirror=args.mirror,
        stride=args.stride,
        correspondences_dir=args.correspondences,
        max_points=args.max_points,
        seed=args.seed,
    )
    return 0


def cmd_synth(args) -> int:
    from posegan.services.synthetic import write_synthetic_dataset

    sequences = expand_sequences(args.sequences) or ["synthetic"]
    print_resolved("synth", {"out": args.out, "pairs": args.pairs, "sequences": sequences,
                             "mirror": args.mirror, "points_per_frame": args.points_per_frame, "seed": args.seed})
    write_synthetic_dataset(
        args.out,
        n_pairs=args.pairs,
        seed=args.seed,
        sequences=sequences,
        mirror=args.mirror,
        points_per_frame=args.points_per_frame,
    )
    return 0


def cmd_train(args) -> int:
    from posegan.services.dataset_service import PreprocessedDataset
    from posegan.services.training_service import train

    overrides = {
        "regime": args.regime,
        "adversarial_iters": args.adversarial_iters,
        "pose_iters": args.pose_iters,
        "total_iters": args.total_iters,
        "batch_size": args.batch_size,
        "learning_rate": args.learning_rate,
        "beta": args.beta,
        "loss": args.loss,
        "test_sequence": args.test_sequence,
        "seed": args.seed if args.seed_given else None,
    }
    config = resolve_train_config(args.config, overrides)
    print_resolved("train", {"data": args.data, "out": args.out, "config": config.model_dump(mode="json")})

    dataset = PreprocessedDataset(args.data)
    if args.holdout:
        if config.test_sequence is None:
            raise UsageError("--holdout needs a test_sequence")
        dataset, _ = dataset.holdout(config.test_sequence)
    result = train(
        config,
        dataset,
        args.out,
        device=args.torch_device,
        show_progress=True,
        init_checkpoint=args.init_checkpoint,
    )
    print(json.dumps({"checkpoint": str(result.checkpoint), "log": str(result.log), "iterations": result.iteration}))
    return 0


def cmd_infer(args) -> int:
    from posegan.services.dataset_service import PreprocessedDataset
    from posegan.services.evaluation_service import export_trajectory
    from posegan.services.geometry import compose_trajectory
    from posegan.services.training_service import infer

    print_resolved("infer", {"checkpoint": args.checkpoint, "data": args.data, "out": args.out,
                             "sequence": args.sequence, "seed": args.seed})
    dataset = PreprocessedDataset(args.data).filter(mirrored=False)
    sequences = dataset.sequences
    if args.sequence is not None:
        dataset = dataset.pairs_for(args.sequence, mirrored=False)
        if len(dataset) == 0:
            raise UsageError(f"Sequence {args.sequence} has no pairs in {args.data}")
    elif len(sequences) > 1:
        raise UsageError(f"Dataset holds several sequences ({', '.join(sequences)}); pick one with --sequence")

    result = infer(args.checkpoint, (dataset[i] for i in range(len(dataset))), device=args.torch_device)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / "predictions.jsonl", "w") as f:
        for record, pred in zip(dataset.records, result.predictions):
            f.write(json.dumps({
                "a": record.a,
                "b": record.b,
                "x_hat": [float(v) for v in pred.x_hat],
                "q_hat": [float(v) for v in pred.q_hat],
            }) + "\n")
    export_trajectory(compose_trajectory(result.predictions), out / "trajectory.txt")
    with open(out / "timings.csv", "w") as f:
        f.write("pair,ms\n")
        for k, seconds in enumerate(result.timings):
            f.write(f"{k},{seconds * 1000.0:.6f}\n")
    mean_ms = float(np.mean(result.timings) * 1000.0) if result.timings else None
    print(json.dumps({"pairs": len(result.predictions), "mean_ms": mean_ms, "out": str(out)}))
    return 0


def cmd_eval(args) -> int:
    from posegan.services.evaluation_service import evaluate_sequence, load_trajectory

    align = None if args.align == "none" else args.align
    print_resolved("eval", {"est": args.est, "gt": args.gt, "align": align, "segment_stride": args.segment_stride})
    report = evaluate_sequence(
        load_trajectory(args.est), load_trajectory(args.gt), align=align, segment_stride=args.segment_stride
    )
    if args.json:
        print(report.model_dump_json())
    else:
        print(report.table_row())
    return 0


def cmd_plot(args) -> int:
    from posegan.services.plot_service import (
        load_named_trajectories,
        plot_data,
        read_timings,
        render,
        write_plot_tables,
    )

    print_resolved("plot", {"traj": args.traj, "timings": args.timings, "out": args.out})
    trajectories = load_named_trajectories(args.traj or [])
    timings = {}
    for spec in args.timings or []:
        name, sep, path = spec.partition("=")
        if not sep:
            name, path = Path(spec).parent.name or Path(spec).stem, spec
        timings[name] = read_timings(path)
    tables = plot_data(trajectories, timings)
    written = write_plot_tables(tables, args.out)
    if not args.no_render:
        written += render(tables, args.out)
    print(json.dumps({"written": [str(p) for p in written]}))
    return 0


def cmd_sample(args) -> int:
    from posegan.services.training_service import sample_pairs

    print_resolved("sample", {"checkpoint": args.checkpoint, "n": args.n, "out": args.out, "seed": args.seed})
    paths = sample_pairs(args.checkpoint, args.n, args.seed, args.out, device=args.torch_device)
    print(json.dumps({"written": len(paths), "out": args.out}))
    return 0


# ── Parser ───────────────────────────────────────────────────────────


def build_parser() -> ArgumentParser:
    parser = ArgumentParser(prog="posegan", description="Adversarially pre-trained monocular visual odometry")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--seed", type=int, default=None, help="Seed for every random source")
    parser.add_argument("--log-level", default=None, help=f"Logging level (default: {settings.LOG_LEVEL})")
    parser.add_argument("--device", choices=["cpu", "cuda", "auto"], default=None,
                        help=f"Torch device (default: {settings.DEVICE})")
    sub = parser.add_subparsers(dest="command", metavar="command")
    sub.required = True

    p = sub.add_parser("preprocess", help="Crop, resize and pair KITTI frames")
    p.add_argument("--kitti-root", required=True, help="KITTI odometry root (sequences/, poses/)")
    p.add_argument("--out", required=True, help="Output dataset directory")
    p.add_argument("--sequences", nargs="*", default=[], help="Sequence ids, e.g. 00 01 or 00-10")
    p.add_argument("--mirror", action="store_true", help="Add horizontally mirrored twins")
    p.add_argument("--stride", type=int, default=1, help="Pair frames i and i+stride")
    p.add_argument("--correspondences", default=None,
                   help="Directory of <seq>.jsonl stereo matches; writes points.jsonl")
    p.add_argument("--max-points", type=int, default=200, help="Points per frame kept after triangulation")
    p.add_argument("--workers", type=int, default=None, help="Preprocessing threads")
    p.set_defaults(func=cmd_preprocess)

    p = sub.add_parser("synth", help="Write a synthetic dataset with a learnable motion cue")
    p.add_argument("--out", required=True)
    p.add_argument("--pairs", type=int, default=200, help="Pairs per sequence")
    p.add_argument("--sequences", nargs="*", default=[])
    p.add_argument("--mirror", action="store_true")
    p.add_argument("--points-per-frame", type=int, default=0, help="Also write synthetic point sets")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("train", help="Train one regime")
    p.add_argument("--config", default=None, help="YAML or JSON TrainConfig")
    p.add_argument("--data", required=True, help="Preprocessed dataset directory")
    p.add_argument("--out", required=True, help="Directory for checkpoint and training log")
    p.add_argument("--regime", choices=["semi_supervised", "only_vo", "simultaneous", "adversarial_only"])
    p.add_argument("--adversarial-iters", type=int)
    p.add_argument("--pose-iters", type=int)
    p.add_argument("--total-iters", type=int)
    p.add_argument("--batch-size", type=int)
    p.add_argument("--learning-rate", type=float)
    p.add_argument("--beta", type=float)
    p.add_argument("--loss", choices=["beta", "reprojection"])
    p.add_argument("--test-sequence")
    p.add_argument("--holdout", action="store_true", help="Drop the test sequence and its mirror before training")
    p.add_argument("--init-checkpoint", default=None, help="Start from these weights")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("infer", help="Predict relative motion for every pair of a sequence")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sequence", default=None)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("eval", help="KITTI metric of an estimated trajectory")
    p.add_argument("--est", required=True, help="Estimated poses (KITTI format)")
    p.add_argument("--gt", required=True, help="Ground-truth poses (KITTI format)")
    p.add_argument("--align", choices=["none", "sim3", "se3"], default="none")
    p.add_argument("--segment-stride", type=int, default=1,
                   help="Distance between subsequence starts (the KITTI devkit uses 10)")
    p.add_argument("--json", action="store_true", help="Print the full report as JSON")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("plot", help="Path tables, timing summaries and figures")
    p.add_argument("--traj", nargs="+", default=[], help="name=path or path of KITTI pose files")
    p.add_argument("--timings", nargs="*", default=[], help="name=path of timings.csv files")
    p.add_argument("--out", required=True)
    p.add_argument("--no-render", action="store_true", help="Write CSV tables only")
    p.set_defaults(func=cmd_plot)

    p = sub.add_parser("sample", help="Render generated pairs from a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--n", type=int, default=16)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_sample)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Run one command; returns the process exit code (0 ok, 1 user error, 2 internal error)"""
    try:
        args = build_parser().parse_args(argv)
        setup_logging(args.log_level)
        args.seed_given = args.seed is not None
        if args.seed is None:
            args.seed = settings.DEFAULT_SEED
        args.torch_device = init_runtime(args.seed, args.device)
        return args.func(args)
    except PoseganError as e:
        print(json.dumps(e.to_dict(), default=str), file=sys.stderr)
        return 1 if e.user_error else 2
    except SystemExit as e:
        # --help and --version
        return e.code if isinstance(e.code, int) else 0
    except KeyboardInterrupt:
        print(json.dumps({"error": "Interrupted", "message": "interrupted by user"}), file=sys.stderr)
        return 2
    except Exception as e:
        logger.exception("Unexpected error")
        print(json.dumps({"error": "InternalError", "message": str(e)}), file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
