"""Command-line entry point: describe, cost, gradcheck, train-toy, features."""

from __future__ import annotations

import argparse
import json
import logging
import sys
import warnings
from typing import Optional, Sequence

import numpy as np

from .backbone import backbone_forward, classify_forward, init_weights
from .checkpoint import read_checkpoint, save_checkpoint
from .config import PRESET_NAMES, ModelConfig, preset, resolve_variant, stage_table, vit_small
from .cost import count_flops, count_params, cost_row, estimate_activation_memory, flops_curve, write_csv
from .data import make_toy_dataset
from .errors import CheckpointError, ConfigError, NumericalError, ShapeError
from .gradcheck import grad_check
from .heads import init_seg_head, semantic_fpn_lite_forward
from .tensor import Tensor, cross_entropy, named_tensors
from .train import train_toy

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _cost_summary(config, height: int, width: int) -> str:
    params = count_params(config).params
    flops = count_flops(config, height, width)
    mem = estimate_activation_memory(config, height, width)
    return (
        f"{config.name} @ {height}x{width}: params {params / 1e6:.2f}M, "
        f"GFLOPs {flops.gflops:.2f}, peak activations {mem.activation_bytes / 1e6:.1f} MB"
    )


def cmd_describe(args) -> int:
    config = resolve_variant(args.variant)
    if isinstance(config, ModelConfig):
        print(f"{config.name}: {config.num_classes} classes, reference {config.reference_size}x{config.reference_size}")
        print("stage  stride  P    C    L    R    N    E")
        for row in stage_table(config):
            print(
                f"{row['stage']:>5}  {row['stride']:>6}  {row['patch_size']:<3}  {row['channels']:<3}  "
                f"{row['depth']:<3}  {row['reduction']:<3}  {row['heads']:<3}  {row['ffn_expansion']}"
            )
    else:
        print(
            f"{config.name}: patch {config.patch_size}, width {config.channels}, depth {config.depth}, "
            f"heads {config.heads}, ffn ratio {config.ffn_expansion}"
        )
    print(_cost_summary(config, args.height, args.width))
    return EXIT_OK


def cmd_cost(args) -> int:
    if args.curve:
        scales = [int(s) for s in args.curve.split(",") if s.strip()]
        if args.variant:
            configs = [resolve_variant(args.variant)]
        else:
            configs = [preset(n) for n in PRESET_NAMES if n != "pvt-micro"] + [vit_small(16), vit_small(32)]
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            rows = flops_curve(configs, scales)
    else:
        rows = [cost_row(resolve_variant(args.variant or "pvt-small"), args.height, args.width)]
    for row in rows:
        if row.gflops is None:
            print(f"warning: {row.note}")
            continue
        print(
            f"{row.variant:<14} {row.height}x{row.width}: params {row.params / 1e6:.2f}M  "
            f"gflops {row.gflops:.2f}  act_bytes {row.act_bytes}"
        )
    if args.csv:
        write_csv(rows, args.csv)
    return EXIT_OK


def micro_gradcheck_reports(seed: int, tolerance: float, max_entries: int = 6) -> dict:
    """Finite-difference check of the micro model (classification and segmentation) at 64-bit."""
    rng = np.random.default_rng(seed)
    config = preset("pvt-micro", num_classes=3)
    weights = init_weights(config, seed, np.float64)
    image = Tensor(rng.normal(size=(2, 32, 32, 3)))
    labels = np.array([0, 2])
    names, params = zip(*named_tensors(weights))
    reports = {}
    reports["classification"] = grad_check(
        lambda *_: cross_entropy(classify_forward(image, config, weights), labels),
        list(params), tolerance=tolerance, max_entries=max_entries, seed=seed, names=names,
    )
    head = init_seg_head(config, 2, 8, seed + 1, np.float64)
    masks = rng.integers(0, 2, size=(2, 8, 8))
    seg_names, seg_params = zip(*(list(named_tensors(weights, "backbone")) + list(named_tensors(head, "head"))))
    reports["segmentation"] = grad_check(
        lambda *_: cross_entropy(semantic_fpn_lite_forward(backbone_forward(image, config, weights), head), masks),
        list(seg_params), tolerance=tolerance, max_entries=max_entries, seed=seed, names=seg_names,
    )
    return reports


def cmd_gradcheck(args) -> int:
    reports = micro_gradcheck_reports(args.seed, args.tolerance)
    ok = True
    for name, report in reports.items():
        print(f"{name}: {report}")
        ok &= report.passed
    return EXIT_OK if ok else EXIT_NUMERICAL


def cmd_train_toy(args) -> int:
    dataset = make_toy_dataset(args.seed, args.samples, args.mode)
    config = preset(args.variant, num_classes=2)
    result = train_toy(config, dataset, steps=args.steps, lr=args.lr, seed=args.seed)
    every = max(1, args.steps // 10)
    for entry in result.log:
        if entry.step % every == 0 or entry.step == args.steps - 1:
            print(f"step {entry.step:>5}  loss {entry.loss:.5f}  acc {entry.accuracy:.3f}")
    print(f"final: loss {result.final_loss:.5f}  accuracy {result.final_accuracy:.3f}")
    if args.checkpoint:
        save_checkpoint(result.weights, result.config, args.checkpoint, result.head)
        print(f"saved checkpoint to {args.checkpoint}")
    return EXIT_OK


def _stats(t: Tensor) -> dict:
    d = t.data
    return {"mean": float(d.mean()), "std": float(d.std()), "min": float(d.min()), "max": float(d.max())}


def cmd_features(args) -> int:
    if args.checkpoint:
        ckpt = read_checkpoint(args.checkpoint)
        config, weights = ckpt.config, ckpt.weights
    else:
        config = preset(args.variant)
        weights = init_weights(config, args.seed)
    rng = np.random.default_rng(args.seed)
    image = Tensor(rng.uniform(size=(args.height, args.width, 3)), dtype=weights.class_token.dtype)
    pyramid = backbone_forward(image, config, weights)
    report = {
        "variant": config.name,
        "height": args.height,
        "width": args.width,
        "levels": [
            {"name": f"F{i + 1}", "stride": s, "shape": list(f.shape), **_stats(f)}
            for i, (f, s) in enumerate(zip(pyramid.levels, pyramid.strides))
        ],
    }
    if args.classify:
        report["logits"] = classify_forward(image, config, weights).data.tolist()
    text = json.dumps(report, indent=2)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pvt", description="Pyramid vision transformer toolkit")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("describe", help="print stage settings and a cost summary")
    p.add_argument("--variant", default="pvt-small")
    p.add_argument("--height", type=int, default=224)
    p.add_argument("--width", type=int, default=224)
    p.set_defaults(func=cmd_describe)

    p = sub.add_parser("cost", help="parameters, GFLOPs and activation memory")
    p.add_argument("--variant")
    p.add_argument("--height", type=int, default=224)
    p.add_argument("--width", type=int, default=224)
    p.add_argument("--csv", help="write rows to this CSV file")
    p.add_argument("--curve", help="comma-separated square input sizes")
    p.set_defaults(func=cmd_cost)

    p = sub.add_parser("gradcheck", help="finite-difference check of the micro model")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tolerance", type=float, default=1e-4)
    p.set_defaults(func=cmd_gradcheck)

    p = sub.add_parser("train-toy", help="train on the synthetic stripe/blob task")
    p.add_argument("--steps", type=int, default=300)
    p.add_argument("--lr", type=float, default=1e-3)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--mode", choices=("cls", "seg"), default="cls")
    p.add_argument("--samples", type=int, default=64)
    p.add_argument("--variant", default="pvt-micro")
    p.add_argument("--checkpoint", help="save final weights here")
    p.set_defaults(func=cmd_train_toy)

    p = sub.add_parser("features", help="dump feature pyramid shapes and statistics")
    p.add_argument("--checkpoint")
    p.add_argument("--variant", default="pvt-micro", help="used when no checkpoint is given")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--height", type=int, default=32)
    p.add_argument("--width", type=int, default=32)
    p.add_argument("--classify", action="store_true", help="also report class logits")
    p.add_argument("--out")
    p.set_defaults(func=cmd_features)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except (ShapeError, ConfigError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (CheckpointError, OSError) as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
