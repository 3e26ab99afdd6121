"""Command-line entry points: train / eval / ablate / infer / gen-data."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from vsodkit import harness, syndata
from vsodkit.config import TrainConfig
from vsodkit.model import FUSION_MODES


def _load_config(args) -> TrainConfig:
    cfg = TrainConfig.from_file(args.config) if args.config else TrainConfig()
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "fusion_mode", None) is not None:
        overrides["fusion_mode"] = args.fusion_mode
    if getattr(args, "steps", None) is not None:
        overrides["max_steps"] = args.steps
    if getattr(args, "data", None) is not None:
        overrides["train_data"] = args.data
    if getattr(args, "eval_data", None) is not None:
        overrides["eval_data"] = args.eval_data
    return replace(cfg, **overrides) if overrides else cfg


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="flat JSON config file")
    parser.add_argument("--seed", type=int, help="override config seed")
    parser.add_argument("--fusion-mode", choices=FUSION_MODES, help="override fusion mode")
    parser.add_argument("--steps", type=int, help="override max training steps")


def _cmd_train(args) -> int:
    cfg = _load_config(args)
    harness.train(cfg, args.out, log_fn=print)
    return 0


def _cmd_eval(args) -> int:
    harness.evaluate(
        args.checkpoint, args.data, out_dir=args.out, save_maps=args.save_maps, log_fn=print
    )
    return 0


def _cmd_ablate(args) -> int:
    cfg = _load_config(args)
    modes = [m.strip() for m in args.modes.split(",") if m.strip()]
    seeds = [int(s) for s in args.seeds.split(",") if s.strip()]
    harness.ablate(cfg, modes, seeds, args.out, log_fn=print)
    return 0


def _cmd_infer(args) -> int:
    harness.infer(args.checkpoint, args.rgb, args.flow, args.out, log_fn=print)
    return 0


def _cmd_gen_data(args) -> int:
    presets = syndata.challenge_configs(resolution=(args.size, args.size))
    if args.preset == "default":
        cfg = syndata.SceneConfig(resolution=(args.size, args.size))
    elif args.preset in presets:
        cfg = presets[args.preset]
    else:
        raise SystemExit(f"unknown preset '{args.preset}'")
    cfg = replace(cfg, num_frames=args.frames)
    corrupted = syndata.build_dataset(
        args.out,
        num_sequences=args.sequences,
        cfg=cfg,
        seed=args.seed if args.seed is not None else 0,
        corrupt_fraction=args.corrupt_fraction,
        corrupt_mode=args.corrupt_mode,
    )
    print(f"wrote {args.sequences} sequences to {args.out}")
    if corrupted:
        print(f"corrupted flow renderings: {', '.join(corrupted)}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vsodkit",
        description="Two-stream video saliency: training, evaluation, and synthetic data.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_train = sub.add_parser("train", help="train a model")
    _add_config_flags(p_train)
    p_train.add_argument("--data", help="training dataset root")
    p_train.add_argument("--out", required=True, help="run directory")
    p_train.set_defaults(func=_cmd_train)

    p_eval = sub.add_parser("eval", help="score a checkpoint on a dataset")
    p_eval.add_argument("--checkpoint", required=True)
    p_eval.add_argument("--data", required=True, help="evaluation dataset root")
    p_eval.add_argument("--out", help="directory for report.json (and maps)")
    p_eval.add_argument("--save-maps", action="store_true", help="write per-frame rasters")
    p_eval.set_defaults(func=_cmd_eval)

    p_ablate = sub.add_parser("ablate", help="train and compare fusion modes")
    _add_config_flags(p_ablate)
    p_ablate.add_argument("--data", help="training dataset root")
    p_ablate.add_argument("--eval-data", help="held-out dataset root")
    p_ablate.add_argument(
        "--modes", default="concat,add,mul,cag_dde", help="comma-separated fusion modes"
    )
    p_ablate.add_argument("--seeds", default="0,1,2", help="comma-separated seeds")
    p_ablate.add_argument("--out", required=True, help="output directory")
    p_ablate.set_defaults(func=_cmd_ablate)

    p_infer = sub.add_parser("infer", help="write saliency maps for frame pairs")
    p_infer.add_argument("--checkpoint", required=True)
    p_infer.add_argument("--rgb", required=True, help="directory of rgb frames")
    p_infer.add_argument("--flow", required=True, help="directory of flow renderings")
    p_infer.add_argument("--out", required=True, help="output directory")
    p_infer.set_defaults(func=_cmd_infer)

    p_gen = sub.add_parser("gen-data", help="generate a synthetic dataset")
    p_gen.add_argument("--out", required=True, help="dataset root to create")
    p_gen.add_argument("--seed", type=int, default=0)
    p_gen.add_argument("--sequences", type=int, default=8)
    p_gen.add_argument("--frames", type=int, default=6)
    p_gen.add_argument("--size", type=int, default=64, help="frame side length")
    p_gen.add_argument(
        "--preset",
        default="default",
        choices=("default", "low_contrast", "fast_motion", "multi_object"),
    )
    p_gen.add_argument("--corrupt-fraction", type=float, default=0.0)
    p_gen.add_argument("--corrupt-mode", default="noise", choices=("noise", "zero"))
    p_gen.set_defaults(func=_cmd_gen_data)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
