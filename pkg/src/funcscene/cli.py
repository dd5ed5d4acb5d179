"""Command-line surface for the detection pipeline.

Subcommands: segment, propose, detect, train, mine, eval, synth, render,
damping. Exit code 0 on success, 1 on usage errors, 2 on data or format
errors. Every subcommand that involves randomness takes --seed and records
it in its outputs.
"""

from __future__ import annotations

import argparse
import csv
import os
import sys

import numpy as np

from . import neuralnet as nn
from .dataset import (
    SyntheticSceneSpec,
    category_id,
    category_name,
    group_by_image,
    image_rng,
    load_annotations,
    sample_background,
    write_synthetic_dataset,
)
from .evaluation import Detection, compute_metrics, match_detections, nms, roc_curve
from .imaging import BoundingBox, Image, load_ppm, save_ppm
from .optimizer import DampingProbe, Schedule, simulate_quadratic
from .proposals import fast_preset, propose, quality_preset
from .render import render
from .segmentation import oversegment, save_segment_map
from .training import TrainConfig, detect_image, mine_hard_examples, train_rounds


class DataError(Exception):
    """Bad input data or file format (exit code 2)."""


def _preset(name: str):
    return quality_preset() if name == "quality" else fast_preset()


def _load_detections(path) -> list[Detection]:
    dets = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 7:
                raise DataError(f"{path}:{lineno}: expected 7 fields, got {len(parts)}")
            ref, x0, y0, x1, y1, name, conf = parts
            dets.append(Detection(BoundingBox(int(x0), int(y0), int(x1), int(y1)),
                                  category_id(name), float(conf), ref))
    return dets


def _save_detections(path, dets: list[Detection], seed: int) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write(f"# seed {seed}\n")
        f.write("# image_path x_min y_min x_max y_max category_name confidence\n")
        for d in dets:
            b = d.box
            f.write(f"{d.image_ref} {b.x_min} {b.y_min} {b.x_max} {b.y_max} "
                    f"{category_name(d.category)} {d.confidence:.6f}\n")


def _load_scene_images(anns, image_dir):
    images = {}
    for ref in sorted({a.image_ref for a in anns}):
        path = os.path.join(image_dir, ref)
        if not os.path.exists(path):
            raise DataError(f"referenced image missing: {path}")
        images[ref] = load_ppm(path)
    return images


def _read_train_config(path) -> dict:
    out = {}
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key] = value
    return out


def _net_from_name(name: str) -> nn.NetworkSpec:
    if name == "default":
        return nn.default_network()
    if name.startswith("tiny"):
        side = int(name.split(":", 1)[1]) if ":" in name else 32
        return nn.tiny_network(side)
    if os.path.exists(name):
        net, _ = nn.load_checkpoint(name)
        return net
    raise DataError(f"unknown net spec {name!r} (use default, tiny[:side], or a checkpoint path)")


# --- subcommand implementations --------------------------------------------

def _cmd_segment(args) -> int:
    img = load_ppm(args.image)
    seg = oversegment(img, args.k, min_size=args.min_size, seed=args.seed)
    save_segment_map(args.output, seg)
    print(f"{seg.segment_count} segments -> {args.output}")
    return 0


def _cmd_propose(args) -> int:
    img = load_ppm(args.image)
    result = propose(img, _preset(args.preset), seed=args.seed)
    with open(args.output, "w", encoding="utf-8") as f:
        f.write(f"# seed {args.seed} preset {args.preset}\n")
        for b in result.boxes:
            f.write(f"{b.x_min} {b.y_min} {b.x_max} {b.y_max}\n")
    if args.overlay:
        dets = [Detection(b, 0, 0.5) for b in result.boxes]
        save_ppm(args.overlay, render(img, dets))
    print(f"{len(result.boxes)} proposals -> {args.output}")
    return 0


def _cmd_detect(args) -> int:
    img = load_ppm(args.image)
    net, params = nn.load_checkpoint(args.checkpoint)
    dets = detect_image(net, params, img, os.path.basename(args.image),
                        _preset(args.preset), seed=args.seed,
                        confidence_cutoff=args.cutoff)
    if args.nms_threshold is not None:
        dets = nms(dets, args.nms_threshold)
    _save_detections(args.output, dets, args.seed)
    if args.overlay:
        save_ppm(args.overlay, render(img, dets))
    print(f"{len(dets)} detections -> {args.output}")
    return 0


def _cmd_synth(args) -> int:
    spec = SyntheticSceneSpec(width=args.size, height=args.size, seed=args.seed)
    ann_path = write_synthetic_dataset(args.output_dir, spec, args.count)
    print(f"{args.count} scenes -> {args.output_dir} ({ann_path})")
    return 0


def _cmd_train(args) -> int:
    cfg = _read_train_config(args.config)
    net = _net_from_name(cfg.get("net", "tiny:32"))
    schedule = Schedule(
        base_lr_body=float(cfg.get("lr_body", 0.005)),
        base_lr_head=float(cfg.get("lr_head", 0.05)),
        drop_epochs=tuple(int(s) for s in cfg.get("drop_epochs", "40,60").split(",") if s),
        stop_epoch=int(cfg.get("stop_epoch", 70)),
    )
    seed = int(cfg.get("seed", 0))
    config = TrainConfig(
        net=net,
        schedule=schedule,
        batch_size=int(cfg.get("batch_size", 64)),
        momentum=float(cfg.get("momentum", 0.9)),
        seed=seed,
        rounds=int(cfg.get("rounds", 3)),
    )
    anns = load_annotations(args.annotations)
    images = _load_scene_images(anns, args.image_dir)
    by_image = group_by_image(anns)
    backgrounds = {
        ref: sample_background(images[ref], by_image.get(ref, []),
                               n=int(cfg.get("background_boxes", 100)),
                               rng=image_rng(seed, i))
        for i, ref in enumerate(sorted(images))
    }
    os.makedirs(args.output_dir, exist_ok=True)
    params, reports = train_rounds(images, by_image, backgrounds, config)
    for report in reports:
        log_path = os.path.join(args.output_dir, f"round{report.round_index}.csv")
        with open(log_path, "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["epoch", "loss", "top1_error", "top5_error"])
            writer.writerows(report.epoch_log)
    ckpt = os.path.join(args.output_dir, "final.fscn")
    nn.save_checkpoint(ckpt, net, params)
    print(f"{len(reports)} rounds, final loss {reports[-1].final_loss:.4f} -> {ckpt}")
    return 0


def _cmd_mine(args) -> int:
    anns = load_annotations(args.annotations)
    images = _load_scene_images(anns, args.image_dir)
    net, params = nn.load_checkpoint(args.checkpoint)
    hard = mine_hard_examples(net, params, images, group_by_image(anns),
                              _preset(args.preset), seed=args.seed)
    with open(args.output, "w", encoding="utf-8") as f:
        f.write(f"# seed {args.seed}\n# image_path x_min y_min x_max y_max label\n")
        for h in hard:
            b = h.box
            f.write(f"{h.image_ref} {b.x_min} {b.y_min} {b.x_max} {b.y_max} {category_name(h.label)}\n")
    print(f"{len(hard)} hard examples -> {args.output}")
    return 0


def _cmd_eval(args) -> int:
    dets = _load_detections(args.detections)
    gts = load_annotations(args.annotations)
    if args.nms_threshold is not None:
        by_image = {}
        for d in dets:
            by_image.setdefault(d.image_ref, []).append(d)
        dets = [d for ref in sorted(by_image) for d in nms(by_image[ref], args.nms_threshold)]
    dets = [d for d in dets if d.confidence >= args.cutoff]

    gts_by_image = group_by_image(gts)
    dets_by_image = {}
    for d in dets:
        dets_by_image.setdefault(d.image_ref, []).append(d)
    tp = fp = fn = 0
    for ref in sorted(set(dets_by_image) | set(gts_by_image)):
        m = match_detections(dets_by_image.get(ref, []), gts_by_image.get(ref, []), args.iou)
        tp += len(m.true_positives)
        fp += len(m.false_positives)
        fn += len(m.false_negatives)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0

    base, _ = os.path.splitext(args.output)
    with open(args.output, "w", encoding="utf-8") as f:
        f.write(f"tp {tp}\nfp {fp}\nfn {fn}\n")
        f.write(f"precision {precision:.4f}\nrecall {recall:.4f}\nf1 {f1:.4f}\n")
    with open(base + ".csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["tp", "fp", "fn", "precision", "recall", "f1"])
        writer.writerow([tp, fp, fn, f"{precision:.6f}", f"{recall:.6f}", f"{f1:.6f}"])
    curve = roc_curve(dets, gts, args.iou)
    with open(base + "_roc.csv", "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["threshold", "fp_per_image", "recall"])
        writer.writerows(curve.points)
    print(f"precision {precision:.4f} recall {recall:.4f} f1 {f1:.4f} -> {args.output}")
    return 0


def _cmd_render(args) -> int:
    img = load_ppm(args.image)
    dets = _load_detections(args.detections)
    save_ppm(args.output, render(img, dets))
    print(f"overlay -> {args.output}")
    return 0


def _cmd_damping(args) -> int:
    pairs = []
    for spec in args.pairs:
        try:
            eta, mu = (float(s) for s in spec.split(","))
        except ValueError:
            raise DataError(f"bad eta,mu pair {spec!r}") from None
        pairs.append((eta, mu))
    with open(args.output, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["step"] + [f"eta={e} mu={m}" for e, m in pairs])
        columns = [simulate_quadratic(DampingProbe(args.curvature, e, m, steps=args.steps))
                   for e, m in pairs]
        for t in range(args.steps + 1):
            writer.writerow([t] + [f"{col[t]:.8g}" for col in columns])
    print(f"{len(pairs)} trajectories -> {args.output}")
    return 0


# --- argument wiring --------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="funcscene",
                                     description="Functional-area detection pipeline.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("segment", help="over-segment an image")
    p.add_argument("image")
    p.add_argument("output")
    p.add_argument("--k", type=float, default=100.0)
    p.add_argument("--min-size", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_segment)

    p = sub.add_parser("propose", help="emit region proposals")
    p.add_argument("image")
    p.add_argument("output")
    p.add_argument("--preset", choices=("fast", "quality"), default="fast")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--overlay", default=None)
    p.set_defaults(func=_cmd_propose)

    p = sub.add_parser("detect", help="run the full detector on an image")
    p.add_argument("image")
    p.add_argument("checkpoint")
    p.add_argument("output")
    p.add_argument("--preset", choices=("fast", "quality"), default="fast")
    p.add_argument("--cutoff", type=float, default=0.0)
    p.add_argument("--nms-threshold", type=float, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--overlay", default=None)
    p.set_defaults(func=_cmd_detect)

    p = sub.add_parser("train", help="train the classifier with mining rounds")
    p.add_argument("config", help="key = value text file")
    p.add_argument("image_dir")
    p.add_argument("annotations")
    p.add_argument("output_dir")
    p.set_defaults(func=_cmd_train)

    p = sub.add_parser("mine", help="collect hard examples from a trained model")
    p.add_argument("checkpoint")
    p.add_argument("image_dir")
    p.add_argument("annotations")
    p.add_argument("output")
    p.add_argument("--preset", choices=("fast", "quality"), default="fast")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_mine)

    p = sub.add_parser("eval", help="score a detections file against annotations")
    p.add_argument("detections")
    p.add_argument("annotations")
    p.add_argument("output")
    p.add_argument("--iou", type=float, default=0.5)
    p.add_argument("--cutoff", type=float, default=0.0)
    p.add_argument("--nms-threshold", type=float, default=None)
    p.set_defaults(func=_cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic labeled dataset")
    p.add_argument("output_dir")
    p.add_argument("--count", type=int, default=50)
    p.add_argument("--size", type=int, default=96)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("render", help="draw detections onto an image")
    p.add_argument("image")
    p.add_argument("detections")
    p.add_argument("output")
    p.set_defaults(func=_cmd_render)

    p = sub.add_parser("damping", help="emit momentum-descent trajectories as CSV")
    p.add_argument("output")
    p.add_argument("pairs", nargs="+", help="eta,mu pairs, e.g. 0.1,0.9")
    p.add_argument("--curvature", type=float, default=1.0)
    p.add_argument("--steps", type=int, default=200)
    p.set_defaults(func=_cmd_damping)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 0 if e.code == 0 else 1
    try:
        return args.func(args)
    except (DataError, nn.CheckpointFormatError, FileNotFoundError, ValueError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
