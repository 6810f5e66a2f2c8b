"""Command-line entry point: ``pairgan {gen-shapes,train,translate,eval}``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

import torch

from pairgan.shapes import BACKGROUNDS, SCENARIO_NAMES, BackgroundSpec, generate_dataset

log = logging.getLogger("pairgan")


def _echo(command: str, settings: dict):
    print(f"effective config ({command}):")
    print(json.dumps(settings, indent=2, sort_keys=True, default=str))
    sys.stdout.flush()


def cmd_gen_shapes(args) -> int:
    bg = BackgroundSpec(args.background, args.background_file)
    _echo("gen-shapes", {
        "scenario": args.scenario, "count": args.count, "test_count": args.test_count,
        "size": args.size, "seed": args.seed, "out": args.out,
        "background": {"kind": bg.kind, "path": bg.path, "grid": bg.grid},
    })
    meta = generate_dataset(
        args.scenario, args.count, args.size, args.size, args.seed, args.out,
        test_count=args.test_count, background=bg,
    )
    print(meta)
    return 0


def cmd_train(args) -> int:
    from pairgan.config import load_run_config
    from pairgan.io import load_domain
    from pairgan.trainer import fit

    run = load_run_config(args.config)
    if args.epochs is not None:
        run.train.epochs = args.epochs
    settings = run.to_dict()
    settings["resume"] = args.resume
    settings["threads"] = torch.get_num_threads()
    _echo("train", settings)
    cfg = run.train
    data_S, _ = load_domain(run.data_a, cfg.num_classes)
    data_T, _ = load_domain(run.data_b, cfg.num_classes)
    if data_S.spatial != (cfg.image_size, cfg.image_size) or data_T.spatial != data_S.spatial:
        raise ValueError(
            f"image_size {cfg.image_size} does not match the data ({data_S.spatial}, {data_T.spatial})"
        )

    def progress(state, report):
        if state.step % args.log_every == 0:
            log.info("epoch %d step %d total %.4f adv_D %.4f", state.epoch, state.step,
                     report.total, report.adv_D)

    final = fit(cfg, data_S, data_T, run.out_dir, resume=args.resume, progress=progress)
    print(final)
    return 0


def cmd_translate(args) -> int:
    from pairgan.inference import translate_directory

    _echo("translate", {
        "checkpoint": args.checkpoint, "direction": args.direction,
        "input": args.input, "output": args.output, "grids": not args.no_grids,
    })
    names = translate_directory(args.checkpoint, args.direction, args.input, args.output,
                                grids=not args.no_grids)
    print(f"translated {len(names)} images into {args.output}")
    return 0


def cmd_eval(args) -> int:
    from pairgan.evaluation import evaluate_directories, write_report
    from pairgan.metrics import load_embedder

    metrics = [m.strip() for m in args.metrics.split(",") if m.strip()]
    ignore = [int(c) for c in args.ignore_classes.split(",") if c.strip()] if args.ignore_classes else []
    embedder = load_embedder(args.embedder) if "fid" in metrics else None
    _echo("eval", {
        "pred": args.pred, "ref": args.ref, "masks": args.masks, "metrics": metrics,
        "embedder": getattr(embedder, "name", None), "num_classes": args.num_classes,
        "ignore_classes": ignore, "out": args.out,
    })
    report = evaluate_directories(args.pred, args.ref, metrics, args.masks, embedder,
                                  args.num_classes, ignore)
    paths = write_report(report, args.out)
    print(report.to_text(), end="")
    print(paths["csv"])
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pairgan", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    p.add_argument("--threads", type=int, default=None, help="torch intra-op threads")
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-shapes", help="synthesize a shapes transfiguration dataset")
    g.add_argument("--scenario", required=True, choices=SCENARIO_NAMES, metavar="SCENARIO",
                   help="one of: " + ", ".join(SCENARIO_NAMES))
    g.add_argument("--count", type=int, default=500, help="training samples per domain")
    g.add_argument("--test-count", type=int, default=None, help="test samples per domain")
    g.add_argument("--size", type=int, default=128)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--background", choices=BACKGROUNDS, default="smooth-noise")
    g.add_argument("--background-file", default=None)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_shapes)

    t = sub.add_parser("train", help="train both translation directions from a TOML config")
    t.add_argument("--config", required=True)
    t.add_argument("--resume", default=None, help="checkpoint to continue from")
    t.add_argument("--epochs", type=int, default=None, help="override the configured epoch count")
    t.add_argument("--log-every", type=int, default=100)
    t.set_defaults(func=cmd_train)

    tr = sub.add_parser("translate", help="translate a labeled image directory")
    tr.add_argument("--checkpoint", required=True)
    tr.add_argument("--direction", choices=("s2t", "t2s"), default="s2t")
    tr.add_argument("--input", required=True)
    tr.add_argument("--output", required=True)
    tr.add_argument("--no-grids", action="store_true")
    tr.set_defaults(func=cmd_translate)

    e = sub.add_parser("eval", help="score predicted images/labels against references")
    e.add_argument("--pred", required=True)
    e.add_argument("--ref", required=True)
    e.add_argument("--masks", default=None, help="label directory; nonzero pixels are kept")
    e.add_argument("--metrics", default="l1,ssim,fid",
                   help="comma list from l1, ssim, fid, miou, pixel_accuracy")
    e.add_argument("--embedder", default=None, help="TorchScript feature extractor for FID")
    e.add_argument("--num-classes", type=int, default=None)
    e.add_argument("--ignore-classes", default="", help="comma list excluded from mIoU")
    e.add_argument("--out", required=True)
    e.set_defaults(func=cmd_eval)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.DEBUG if args.verbose else logging.INFO,
        format="%(asctime)s %(levelname)s %(name)s: %(message)s",
    )
    if args.threads:
        torch.set_num_threads(args.threads)
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
