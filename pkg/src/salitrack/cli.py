"""Command line front end: ``salitrack {train,detect,track,eval}``.

Exit status is 0 on success, 1 for a bad invocation (arguments, config or
manifest syntax) and 2 when the command fails while running.
"""

import argparse
import csv
import sys
from pathlib import Path

import numpy as np

from . import io
from .exceptions import ConfigurationError, SalitrackError
from .fusion import default_grid, fuse_pipeline
from .metrics import center_precision, evaluate_masks, evaluate_saliency, pr_curve, summarize, write_csv
from .saliency_net import SaliencyNetwork
from .saliency_net import checkpoint as ckpt_io
from .tracker import NonRigidTracker

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2


class _Usage(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad arguments; route them to our usage code
    def error(self, message):
        raise _Usage(f"{self.prog}: error: {message}\n{self.format_usage().rstrip()}")


def build_parser():
    parser = _Parser(prog="salitrack", description="Discriminative-saliency tracking toolkit.")
    sub = parser.add_subparsers(dest="command", metavar="{train,detect,track,eval}", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("train", help="train the saliency network on image/mask pairs")
    p.add_argument("--data", required=True, type=Path, help="directory of <stem>.<ext> images and <stem>.mask.<ext> masks")
    p.add_argument("--config", type=Path)
    p.add_argument("--out", required=True, type=Path, help="checkpoint to write")

    p = sub.add_parser("detect", help="saliency map of one image")
    p.add_argument("--image", required=True, type=Path)
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--config", type=Path)
    p.add_argument("--out", type=Path, help="output PNG (default: <stem>.saliency.png next to the image)")

    p = sub.add_parser("track", help="track the target of a sequence manifest")
    p.add_argument("--seq", required=True, type=Path)
    p.add_argument("--ckpt", required=True, type=Path)
    p.add_argument("--config", type=Path)
    p.add_argument("--out", required=True, type=Path, help="output directory")

    p = sub.add_parser("eval", help="score predictions against ground-truth masks")
    p.add_argument("--pred", required=True, type=Path)
    p.add_argument("--gt", required=True, type=Path)
    p.add_argument("--mode", choices=("saliency", "tracking"), default="saliency")
    p.add_argument("--out", type=Path, help="metrics CSV (default: <pred>/metrics.csv)")
    return parser


def _config(args):
    path = getattr(args, "config", None)
    return io.parse_config(path) if path else io.RunConfig()


def _find_mask(directory, stem):
    for suffix in io.IMAGE_SUFFIXES:
        p = directory / f"{stem}.mask{suffix}"
        if p.is_file():
            return p
    return None


def cmd_train(args, cfg):
    images = io.list_images(args.data, tag="")
    if not images:
        raise SalitrackError(f"{args.data}: no training images found")
    X, y = [], []
    for path in images:
        mask_path = _find_mask(args.data, io.image_stem(path))
        if mask_path is None:
            raise SalitrackError(f"{path}: no matching <stem>.mask image")
        img = io.load_image(path)
        mask = io.load_mask(mask_path)
        if mask.shape != img.shape[:2]:
            raise SalitrackError(f"{mask_path}: mask size {mask.shape} differs from image {img.shape[:2]}")
        X.append(img)
        y.append(mask)
    net = SaliencyNetwork(**cfg.network_kwargs()).fit(X, y)
    net.save(args.out)
    print(f"trained on {len(X)} pairs, final loss {net.loss_curve_[-1]:.6f}")
    return EXIT_OK


def cmd_detect(args, cfg):
    params = ckpt_io.load(args.ckpt)
    img = io.load_image(args.image)
    sal = fuse_pipeline(img, default_grid(img, cfg.n_scales), params, **cfg.fusion_kwargs())
    out = args.out or args.image.with_name(f"{io.image_stem(args.image)}.saliency.png")
    io.save_saliency(out, sal)
    print(out)
    return EXIT_OK


def cmd_track(args, cfg, manifest):
    net = SaliencyNetwork.from_params(ckpt_io.load(args.ckpt))
    frames = [io.load_image(p) for p in manifest.frames]
    manifest.check_init(frames[0].shape)
    stems = [io.image_stem(p) for p in manifest.frames]
    if len(set(stems)) != len(stems):
        raise SalitrackError(f"{args.seq}: frame file names must be unique")
    args.out.mkdir(parents=True, exist_ok=True)
    tracker = NonRigidTracker(net)
    tracker.fit(frames[0], manifest.init, config=cfg.tracker_config())
    rows = []
    for i in range(1, len(frames)):
        out = tracker.track(frames[i])
        io.save_mask(args.out / f"{stems[i]}.mask.png", out.mask)
        io.save_saliency(args.out / f"{stems[i]}.saliency.png", out.saliency)
        rows.append((i + 1, *out.bbox))
    with open(args.out / "boxes.csv", "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(("frame", "x", "y", "w", "h"))
        writer.writerows(rows)
    for t in tracker.lost_frames_:
        print(f"warning: target lost at frame {t}", file=sys.stderr)
    print(f"tracked {len(rows)} frames, {len(tracker.lost_frames_)} lost")
    return EXIT_OK


def _index(directory, preferred_tag):
    found = {}
    for path in io.list_images(directory):
        stem = io.image_stem(path)
        tagged = Path(path.stem).suffix == f".{preferred_tag}"
        if stem not in found or tagged:
            found[stem] = path
    return found


def cmd_eval(args, cfg):
    tag = "saliency" if args.mode == "saliency" else "mask"
    preds = _index(args.pred, tag)
    gts = _index(args.gt, "mask")
    if not gts:
        raise SalitrackError(f"{args.gt}: no ground-truth masks found")
    stems = sorted(set(gts) & set(preds))
    if not stems:
        raise SalitrackError(f"{args.pred}: no prediction matches a ground-truth stem")
    for stem in sorted(set(gts) - set(preds)):
        print(f"warning: no prediction for {stem}", file=sys.stderr)
    records, aucs = [], []
    for stem in stems:
        gt = io.load_mask(gts[stem])
        if args.mode == "saliency":
            sal = io.load_image(preds[stem])[:, :, 0]
            if sal.shape != gt.shape:
                raise SalitrackError(f"{preds[stem]}: size {sal.shape} differs from ground truth {gt.shape}")
            records.append(evaluate_saliency(stem, sal, gt))
            aucs.append(pr_curve(sal, gt)[1])
        else:
            pred = io.load_mask(preds[stem])
            if pred.shape != gt.shape:
                raise SalitrackError(f"{preds[stem]}: size {pred.shape} differs from ground truth {gt.shape}")
            records.append(evaluate_masks(stem, pred, gt))
    out = args.out or args.pred / "metrics.csv"
    write_csv(records, out)
    means = summarize(records)
    if args.mode == "saliency":
        extra = f"auc={np.mean(aucs):.6f}"
    else:
        extra = f"center_precision@20={center_precision(r.center_error_px for r in records):.6f}"
    print(
        f"n={len(records)} precision={means['precision']:.6f} recall={means['recall']:.6f} "
        f"f_measure={means['f_measure']:.6f} iou_mask={means['iou_mask']:.6f} "
        f"iou_bbox={means['iou_bbox']:.6f} {extra}"
    )
    return EXIT_OK


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        cfg = _config(args)
        manifest = io.parse_manifest(args.seq) if args.command == "track" else None
    except _Usage as exc:
        print(exc, file=sys.stderr)
        return EXIT_USAGE
    except ConfigurationError as exc:
        print(f"salitrack: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SystemExit as exc:
        # --help prints and exits cleanly
        return EXIT_OK if not exc.code else EXIT_USAGE
    try:
        if args.command == "train":
            return cmd_train(args, cfg)
        if args.command == "detect":
            return cmd_detect(args, cfg)
        if args.command == "track":
            return cmd_track(args, cfg, manifest)
        return cmd_eval(args, cfg)
    except (SalitrackError, OSError, ValueError, ArithmeticError) as exc:
        print(f"salitrack {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
