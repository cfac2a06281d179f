"""Command line interface: ``hmh <subcommand> ...``."""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import config, pipeline, report
from .imgcore import read_alpha, read_rgb, write_rgb
from .losses import DEFAULT_LAMBDA1, DEFAULT_LAMBDA2, ScoreBatch, loss_bundle
from .metrics import CONN_STEP, CONN_THETA, GRAD_SIGMA

log = logging.getLogger("hmh")

SCORE_COLUMNS = ("d_real", "d_harmonized", "d_composite", "d_disharmonious")


def _common_options() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("run options (override --config)")
    g.add_argument("--config", type=Path, help="key = value config file")
    g.add_argument("--seed", type=int)
    g.add_argument("--size", type=int, help="square working resolution (default 256)")
    g.add_argument("--band-radius", type=int, help="trimap unknown band radius in px (default 10)")
    g.add_argument("--mask-dilation", type=int, help="inpainting mask dilation in px (default 5)")
    g.add_argument("--train-fraction", type=float, help="train share for split (default 0.9)")
    g.add_argument("--jobs", type=int, help="worker processes (default 1)")
    g.add_argument("--alpha-source", help="groundtruth | predicted:<dir>")
    g.add_argument("--adjust-override", help="fixed adjustment, e.g. illumination:1.0")
    return p


def _settings(args) -> dict:
    return config.resolve(
        args.config,
        seed=args.seed, size=args.size, band_radius=args.band_radius,
        mask_dilation=args.mask_dilation, train_fraction=args.train_fraction,
        jobs=args.jobs, alpha_source=args.alpha_source, adjust_override=args.adjust_override,
    )


def _finish(run, what) -> int:
    print(f"{what}: {len(run.records)} written, {len(run.failures)} failed, {len(run.warnings)} warnings")
    for image_id, why in run.failures.items():
        print(f"  failed {image_id}: {why}", file=sys.stderr)
    return 0 if run.ok else 1


def cmd_prepare(args) -> int:
    s = _settings(args)
    run = pipeline.prepare(args.corpus_dir, args.out_dir, size=s["size"],
                           mask_dilation=s["mask_dilation"], jobs=s["jobs"])
    return _finish(run, "prepare")


def cmd_triplets(args) -> int:
    s = _settings(args)
    run = pipeline.build_triplets(args.manifest, args.out_dir, seed=s["seed"], band_radius=s["band_radius"],
                                  alpha_source=s["alpha_source"], adjust_override=s["adjust_override"],
                                  jobs=s["jobs"])
    return _finish(run, "triplets")


def cmd_split(args) -> int:
    s = _settings(args)
    records = pipeline.split(args.manifest, s["train_fraction"], s["seed"], out_path=args.out)
    n_train = sum(r.split == "train" for r in records)
    print(f"split: {n_train} train / {len(records) - n_train} test")
    return 0


def cmd_composite(args) -> int:
    s = _settings(args)
    if args.manifest is not None:
        manifest = Path(args.manifest)
        out_dir = Path(args.out)
        failed = 0
        for rec in pipeline.read_manifest(manifest):
            img = read_rgb(manifest.parent / rec.image)
            alpha = read_alpha(manifest.parent / rec.alpha)
            try:
                out = pipeline.composite_new_background(img, alpha, args.backgrounds, s["seed"], rec.image_id)
            except (OSError, ValueError) as exc:
                print(f"  failed {rec.image_id}: {exc}", file=sys.stderr)
                failed += 1
                continue
            write_rgb(out_dir / f"{rec.image_id}.png", out)
        return 1 if failed else 0
    if args.image is None or args.alpha is None:
        print("composite: give --image and --alpha, or --manifest", file=sys.stderr)
        return 2
    img = read_rgb(args.image)
    out = pipeline.composite_new_background(img, read_alpha(args.alpha), args.backgrounds, s["seed"],
                                            Path(args.image).stem)
    write_rgb(args.out, out)
    return 0


def cmd_eval_matting(args) -> int:
    evaluation = pipeline.eval_matting(args.pred_dir, args.gt_dir, args.trimap_dir,
                                       sigma=args.sigma, step=args.step, theta=args.theta)
    print(report.matting_table(evaluation))
    if args.out is not None:
        paths = report.write_matting_report(args.out, evaluation, figures=not args.no_figures)
        print("wrote " + ", ".join(str(p) for p in paths.values()))
    return 0 if evaluation.ok else 1


def cmd_eval_mos(args) -> int:
    summaries = pipeline.eval_mos(args.scores)
    print(report.mos_table(summaries))
    if args.out is not None:
        paths = report.write_mos_report(args.out, summaries, figures=not args.no_figures)
        print("wrote " + ", ".join(str(p) for p in paths.values()))
    return 0


def read_score_batch(path) -> ScoreBatch:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.DictReader(fh))
    if not rows or not set(SCORE_COLUMNS) <= set(rows[0]):
        raise ValueError(f"{path}: need columns {', '.join(SCORE_COLUMNS)}")
    return ScoreBatch(**{c: np.array([float(r[c]) for r in rows]) for c in SCORE_COLUMNS})


def cmd_losses(args) -> int:
    bundle = loss_bundle(read_score_batch(args.scores),
                         read_alpha(args.pred_alpha), read_alpha(args.gt_alpha),
                         read_rgb(args.pred_image), read_rgb(args.gt_image),
                         lambda1=args.lambda1, lambda2=args.lambda2)
    print(json.dumps(asdict(bundle), indent=2))
    return 0


def build_parser() -> argparse.ArgumentParser:
    common = _common_options()
    parser = argparse.ArgumentParser(prog="hmh", description="Human matting & harmonization dataset tools")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prepare", parents=[common], help="resize pairs, extract F, inpaint B")
    p.add_argument("corpus_dir", type=Path, help="directory with images/ and alphas/")
    p.add_argument("out_dir", type=Path)
    p.set_defaults(func=cmd_prepare)

    p = sub.add_parser("triplets", parents=[common], help="synthesize disharmonious composites")
    p.add_argument("manifest", type=Path, help="corpus.jsonl written by prepare")
    p.add_argument("out_dir", type=Path)
    p.set_defaults(func=cmd_triplets)

    p = sub.add_parser("split", parents=[common], help="label records train/test")
    p.add_argument("manifest", type=Path)
    p.add_argument("--out", type=Path, help="write here instead of in place")
    p.set_defaults(func=cmd_split)

    p = sub.add_parser("composite", parents=[common], help="paste portraits onto random new backgrounds")
    p.add_argument("--backgrounds", type=Path, required=True)
    p.add_argument("--image", type=Path)
    p.add_argument("--alpha", type=Path)
    p.add_argument("--manifest", type=Path, help="composite every record of a corpus manifest")
    p.add_argument("--out", type=Path, required=True, help="output PNG, or directory with --manifest")
    p.set_defaults(func=cmd_composite)

    p = sub.add_parser("eval-matting", parents=[common], help="MSE / SAD / Grad / Conn over unknown regions")
    p.add_argument("pred_dir", type=Path)
    p.add_argument("gt_dir", type=Path)
    p.add_argument("trimap_dir", type=Path)
    p.add_argument("--out", type=Path, help="directory for CSV, JSONL and figure")
    p.add_argument("--sigma", type=float, default=GRAD_SIGMA)
    p.add_argument("--step", type=float, default=CONN_STEP)
    p.add_argument("--theta", type=float, default=CONN_THETA)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval_matting)

    p = sub.add_parser("eval-mos", parents=[common], help="aggregate 1-5 rater scores per method")
    p.add_argument("scores", type=Path, help="CSV with image_id,rater_id,method,score")
    p.add_argument("--out", type=Path)
    p.add_argument("--no-figures", action="store_true")
    p.set_defaults(func=cmd_eval_mos)

    p = sub.add_parser("losses", parents=[common], help="print every loss term for one batch as JSON")
    p.add_argument("--scores", type=Path, required=True, help="CSV with " + ",".join(SCORE_COLUMNS))
    p.add_argument("--pred-alpha", type=Path, required=True)
    p.add_argument("--gt-alpha", type=Path, required=True)
    p.add_argument("--pred-image", type=Path, required=True)
    p.add_argument("--gt-image", type=Path, required=True)
    p.add_argument("--lambda1", type=float, default=DEFAULT_LAMBDA1)
    p.add_argument("--lambda2", type=float, default=DEFAULT_LAMBDA2)
    p.set_defaults(func=cmd_losses)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (OSError, ValueError) as exc:
        print(f"hmh {args.command}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
