"""Command-line entry point: ``gaussws <subcommand>`` or ``python -m gaussws``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .bench import bench_all, format_table, to_csv
from .blockwise import fake_quant_squareblock, fake_quant_vectorwise
from .checkpoint import CheckpointError
from .config import ConfigError, load_config
from .fp_emu import parse_format
from .lemmas import run_all
from .pqt_core import summarize_bitwidths
from .trainer import TrainingDiverged, bitwidth_csv_text, checkpoint_bitwidths, train_run


def _global_flags(parser: argparse.ArgumentParser, suppress: bool) -> None:
    # the subcommand copies only override when given, so flags work on either side of the subcommand
    def default(v):
        return argparse.SUPPRESS if suppress else v

    parser.add_argument("--seed", type=int, default=default(0), help="root seed (u64)")
    parser.add_argument("--out-dir", type=Path, default=default(None), help="directory for artifacts")
    parser.add_argument("--threads", type=int, default=default(None), help="BLAS/OpenMP thread limit")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gaussws", description="Gaussian weight sampling laboratory")
    _global_flags(parser, suppress=False)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    common = argparse.ArgumentParser(add_help=False)
    _global_flags(common, suppress=True)

    p = sub.add_parser("train", parents=[common], help="train a toy model")
    p.add_argument("--config", type=Path, required=True)
    p.add_argument("--method", choices=("baseline", "gaussws", "diffq"))
    p.add_argument("--apply", help='"all", "od" or a comma list of qkv,out,up,down')
    p.add_argument("--steps", type=int)

    p = sub.add_parser("bench-noise", parents=[common], help="noise generator throughput")
    p.add_argument("--elements", type=int, default=2**24)
    p.add_argument("--iters", type=int, default=5)

    p = sub.add_parser("verify-lemmas", parents=[common], help="empirical underflow checks")
    p.add_argument("--format", default="e8m7", dest="fmt")
    p.add_argument("--trials", type=int, default=1000)

    p = sub.add_parser("demo-consistency", parents=[common], help="transpose consistency of block quantizers")
    p.add_argument("--size", type=int, default=4)
    p.add_argument("--block", type=int, default=2)
    p.add_argument("--int-bits", type=int, default=4)

    p = sub.add_parser("analyze-bitwidth", parents=[common], help="b_t report from a checkpoint")
    p.add_argument("checkpoint", type=Path)
    return parser


def _out_path(args, name: str) -> Path | None:
    if args.out_dir is None:
        return None
    args.out_dir.mkdir(parents=True, exist_ok=True)
    return args.out_dir / name


def cmd_train(args) -> int:
    if args.out_dir is None:
        print("train: --out-dir is required", file=sys.stderr)
        return 2
    cfg = load_config(args.config, method=args.method, apply=args.apply, steps=args.steps)
    result = train_run(cfg, args.seed, args.out_dir, threads=args.threads)
    print(f"final eval loss {result.final_eval:.6f}; artifacts in {result.out_dir}")
    return 0


def cmd_bench_noise(args) -> int:
    results = bench_all(args.elements, args.iters, args.seed)
    print(format_table(results))
    print()
    csv = to_csv(results)
    print(csv, end="")
    path = _out_path(args, "bench_noise.csv")
    if path:
        path.write_text(csv)
    bitwise = next(r for r in results if r.generator == "gauss-bitwise")
    if bitwise.float_ops:
        print(f"bitwise generator performed {bitwise.float_ops} float operations", file=sys.stderr)
        return 1
    return 0


def cmd_verify_lemmas(args) -> int:
    fmt = parse_format(args.fmt)
    if fmt is None:
        print("verify-lemmas needs a concrete format", file=sys.stderr)
        return 2
    results = run_all(fmt, args.trials, args.seed)
    for r in results:
        print(r.line())
    failed = sum(not r.passed for r in results)
    print(f"{len(results) - failed}/{len(results)} claims hold")
    return 1 if failed else 0


def _panel(title: str, M: np.ndarray) -> str:
    body = np.array2string(M, precision=4, suppress_small=True, floatmode="fixed", sign=" ")
    return f"{title}\n{body}\n"


def cmd_demo_consistency(args) -> int:
    if args.size < args.block:
        print("--size must be >= --block", file=sys.stderr)
        return 2
    W = np.random.default_rng(args.seed).standard_normal((args.size, args.size))
    # A @ W groups along K (axis 0) in forward; dA = dT @ W.T groups along N in backward
    fwd = fake_quant_vectorwise(W, "col", args.block, args.int_bits)
    bwd = fake_quant_vectorwise(W, "row", args.block, args.int_bits)
    sq = fake_quant_squareblock(W, args.block, args.int_bits)
    sq_t = fake_quant_squareblock(W.T, args.block, args.int_bits).T
    out = [
        f"W ~ N(0, 1), {args.size}x{args.size}, INT{args.int_bits}, block {args.block}, seed {args.seed}\n",
        _panel("original W", W),
        _panel("backward view: grouped along N (rows of W)", bwd),
        _panel("forward view: grouped along K (columns of W)", fwd),
        _panel("vector-wise discrepancy |forward - backward|", np.abs(fwd - bwd)),
        _panel(f"square-block {args.block}x{args.block} discrepancy |Q(W) - Q(W.T).T|", np.abs(sq - sq_t)),
    ]
    text = "\n".join(out)
    print(text, end="")
    path = _out_path(args, "consistency.txt")
    if path:
        path.write_text(text)
    print(f"max discrepancy: vector-wise {np.abs(fwd - bwd).max():.6g}, square-block {np.abs(sq - sq_t).max():.6g}")
    return 0


def cmd_analyze_bitwidth(args) -> int:
    grids, shapes, cfg = checkpoint_bitwidths(args.checkpoint)
    csv = bitwidth_csv_text(grids)
    path = _out_path(args, "bitwidth.csv")
    if path:
        path.write_text(csv)
    else:
        print(csv, end="")
    report = summarize_bitwidths(((n, grids[n], shapes[n]) for n in grids), cfg.b_l)
    print(report.format())
    return 0


COMMANDS = {
    "train": cmd_train,
    "bench-noise": cmd_bench_noise,
    "verify-lemmas": cmd_verify_lemmas,
    "demo-consistency": cmd_demo_consistency,
    "analyze-bitwidth": cmd_analyze_bitwidth,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.seed < 0 or args.seed >= 2**64:
        print("--seed must be a u64", file=sys.stderr)
        return 2
    try:
        if args.threads and args.command != "train":
            from threadpoolctl import threadpool_limits

            with threadpool_limits(limits=args.threads):
                return COMMANDS[args.command](args)
        return COMMANDS[args.command](args)
    except (ConfigError, CheckpointError, TrainingDiverged, ValueError, OSError) as exc:
        print(f"{args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
