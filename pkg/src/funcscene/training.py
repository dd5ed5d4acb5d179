"""Patch-classifier training: mini-batch SGD over the two-rate schedule,
head re-initialization for fine-tuning, and multi-round hard negative mining.

Mining runs the full detector over the training images; false positives are
re-labeled background, missed ground-truth boxes are re-labeled with their
true category, and both are appended to the next round's training set.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import neuralnet as nn
from .dataset import Annotation, BACKGROUND_ID
from .evaluation import Detection, match_detections
from .imaging import BoundingBox, Image, extract_patch, resize_bilinear
from .optimizer import DEFAULT_MOMENTUM, OptimizerState, Schedule, lr_at_epoch, sgd_momentum_step
from .proposals import Strategy, propose

__all__ = [
    "TrainConfig",
    "RoundReport",
    "HardExample",
    "reinit_head",
    "train",
    "classify_boxes",
    "detect_image",
    "mine_hard_examples",
    "train_rounds",
]


@dataclass(frozen=True)
class TrainConfig:
    net: nn.NetworkSpec
    schedule: Schedule = Schedule()
    batch_size: int = 64
    momentum: float = DEFAULT_MOMENTUM
    seed: int = 0
    rounds: int = 3
    confidence_cutoff: float = 0.0
    strategies: tuple[Strategy, ...] | None = None  # None -> fast preset
    proposal_min_size: int | None = None
    dtype: str = "float64"  # "float32" halves training cost at desk scale

    def __post_init__(self):
        if self.batch_size < 1:
            raise ValueError("batch_size must be >= 1")
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")


@dataclass(frozen=True)
class RoundReport:
    round_index: int
    epochs_run: int
    final_loss: float
    val_top1_error: float
    val_top5_error: float
    train_size: int
    epoch_log: tuple[tuple[int, float, float, float], ...] = ()  # (epoch, loss, top1, top5)


@dataclass(frozen=True)
class HardExample:
    image_ref: str
    box: BoundingBox
    label: int  # background for false positives, true category for false negatives


def reinit_head(net: nn.NetworkSpec, params: list, class_count: int = 12, seed: int = 0) -> tuple[nn.NetworkSpec, list]:
    """Replace the final fully connected layer with a fresh seeded init."""
    head = None
    for i in range(len(net.layers) - 1, -1, -1):
        if isinstance(net.layers[i], nn.FullyConnected):
            head = i
            break
    if head is None:
        raise ValueError("network has no fully connected head to re-initialize")
    old = net.layers[head]
    layers = list(net.layers)
    layers[head] = nn.FullyConnected(old.in_dim, class_count)
    new_net = replace(net, layers=tuple(layers), class_count=class_count)
    rng = np.random.default_rng(seed)
    limit = np.sqrt(6.0 / old.in_dim)
    new_params = [None if p is None else tuple(a.copy() for a in p) for p in params]
    new_params[head] = (rng.uniform(-limit, limit, (class_count, old.in_dim)), np.zeros(class_count))
    return new_net, new_params


def _errors(net, params, xs, ys, batch: int = 256) -> tuple[float, float]:
    """Top-1 and top-5 error rates."""
    if len(ys) == 0:
        return 0.0, 0.0
    top1 = top5 = 0
    for i in range(0, len(ys), batch):
        probs, _ = nn.forward_batch(net, params, xs[i:i + batch])
        order = np.argsort(-probs, axis=1)
        top1 += int((order[:, 0] != ys[i:i + batch]).sum())
        top5 += int((order[:, :5] != ys[i:i + batch, None]).all(axis=1).sum())
    return top1 / len(ys), top5 / len(ys)


def train(
    xs: np.ndarray,
    ys: np.ndarray,
    config: TrainConfig,
    params: list | None = None,
    val: tuple[np.ndarray, np.ndarray] | None = None,
    round_index: int = 1,
) -> tuple[list, RoundReport]:
    """Mini-batch SGD with momentum until the schedule halts.

    Continues from `params` when given (fine-tuning / later mining rounds),
    otherwise starts from a seeded random init.
    """
    if len(ys) == 0:
        raise ValueError("empty training set")
    if len(np.unique(ys)) < 2:
        raise ValueError("training set is single-class; nothing separable to learn")
    net = config.net
    dtype = np.dtype(config.dtype)
    xs = xs.astype(dtype, copy=False)
    if params is None:
        params = nn.init_parameters(net, seed=config.seed)
    params = [None if p is None else tuple(a.astype(dtype, copy=False) for a in p) for p in params]
    state = OptimizerState.for_params(params, momentum=config.momentum)

    rng = np.random.default_rng(np.random.SeedSequence([config.seed, round_index]))
    log = []
    loss = float("nan")
    epoch = 0
    while True:
        rates = lr_at_epoch(config.schedule, epoch)
        if rates is None:
            break
        state.lr_body, state.lr_head = rates
        order = rng.permutation(len(ys))
        losses = []
        for start in range(0, len(order), config.batch_size):
            idx = order[start:start + config.batch_size]
            probs, cache = nn.forward_batch(net, params, xs[idx])
            p_true = np.maximum(probs[np.arange(len(idx)), ys[idx]], nn.LOG_CLAMP)
            losses.append(float(-np.log(p_true).mean()))
            grads = nn.backward_batch(net, params, cache, ys[idx])
            sgd_momentum_step(net, params, grads, state)
        loss = float(np.mean(losses))
        if val is not None:
            top1, top5 = _errors(net, params, val[0].astype(dtype, copy=False), val[1])
        else:
            top1, top5 = _errors(net, params, xs, ys)
        log.append((epoch, loss, top1, top5))
        epoch += 1

    top1, top5 = log[-1][2], log[-1][3]
    report = RoundReport(round_index, epoch, loss, top1, top5, len(ys), tuple(log))
    return params, report


def classify_boxes(net, params, img: Image, boxes: list[BoundingBox], batch: int = 256) -> np.ndarray:
    """Probability matrix (len(boxes), K) for resized crops of the boxes."""
    c, h, w = net.input
    patches = []
    for box in boxes:
        patch = resize_bilinear(extract_patch(img, box), w, h)
        x = patch.pixels.transpose(2, 0, 1)
        if net.preprocess == "mean_subtract":
            x = x - x.mean()
        patches.append(x)
    if not patches:
        return np.zeros((0, net.class_count))
    xs = np.stack(patches)
    for p in params:
        if p is not None:
            xs = xs.astype(p[0].dtype, copy=False)
            break
    out = []
    for i in range(0, len(xs), batch):
        probs, _ = nn.forward_batch(net, params, xs[i:i + batch])
        out.append(probs)
    return np.concatenate(out)


def detect_image(
    net,
    params,
    img: Image,
    image_ref: str = "",
    strategies: list[Strategy] | None = None,
    seed: int = 0,
    confidence_cutoff: float = 0.0,
    min_size: int | None = None,
) -> list[Detection]:
    """Proposals -> classify -> keep non-background argmaxes above the cutoff."""
    proposal_set = propose(img, strategies, seed=seed, min_size=min_size)
    probs = classify_boxes(net, params, img, proposal_set.boxes)
    dets = []
    for box, p in zip(proposal_set.boxes, probs):
        cat = int(p.argmax())
        if cat == BACKGROUND_ID:
            continue
        conf = float(p[cat])
        if conf < confidence_cutoff:
            continue
        dets.append(Detection(box, cat, conf, image_ref))
    return dets


def mine_hard_examples(
    net,
    params,
    images: dict[str, Image],
    annotations_by_image: dict[str, list[Annotation]],
    strategies: list[Strategy] | None = None,
    seed: int = 0,
    iou_threshold: float = 0.5,
    confidence_cutoff: float = 0.5,
    min_size: int | None = None,
) -> list[HardExample]:
    """Run detection on every image; disagreements with ground truth become
    hard examples via the same matching rule the evaluator uses."""
    hard: list[HardExample] = []
    for ref in sorted(images):
        img = images[ref]
        gts = annotations_by_image.get(ref, [])
        dets = detect_image(net, params, img, ref, strategies, seed=seed,
                            confidence_cutoff=confidence_cutoff, min_size=min_size)
        match = match_detections(dets, gts, iou_threshold)
        for det in match.false_positives:
            hard.append(HardExample(ref, det.box, BACKGROUND_ID))
        for gt in match.false_negatives:
            hard.append(HardExample(ref, gt.box, gt.category))
    return hard


def _patch_array(net, images, entries: list[tuple[str, BoundingBox, int]]):
    c, h, w = net.input
    xs, ys = [], []
    for ref, box, label in entries:
        patch = resize_bilinear(extract_patch(images[ref], box), w, h)
        xs.append(patch.pixels.transpose(2, 0, 1))
        ys.append(label)
    return np.stack(xs), np.asarray(ys, dtype=np.int64)


def train_rounds(
    images: dict[str, Image],
    annotations_by_image: dict[str, list[Annotation]],
    backgrounds: dict[str, list[BoundingBox]],
    config: TrainConfig,
    val: tuple[np.ndarray, np.ndarray] | None = None,
) -> tuple[list, list[RoundReport]]:
    """Round 1 trains on annotations + sampled backgrounds; each later round
    appends the previous round's hard examples and retrains from the previous
    checkpoint with the schedule restarted."""
    entries: list[tuple[str, BoundingBox, int]] = []
    for ref, anns in sorted(annotations_by_image.items()):
        for a in anns:
            entries.append((ref, a.box, a.category))
    for ref, boxes in sorted(backgrounds.items()):
        for box in boxes:
            entries.append((ref, box, BACKGROUND_ID))

    params = None
    reports = []
    strategies = list(config.strategies) if config.strategies else None
    for rnd in range(1, config.rounds + 1):
        xs, ys = _patch_array(config.net, images, entries)
        params, report = train(xs, ys, config, params=params, val=val, round_index=rnd)
        reports.append(report)
        if rnd < config.rounds:
            hard = mine_hard_examples(config.net, params, images, annotations_by_image,
                                      strategies, seed=config.seed,
                                      min_size=config.proposal_min_size)
            entries.extend((h.image_ref, h.box, h.label) for h in hard)
    return params, reports
