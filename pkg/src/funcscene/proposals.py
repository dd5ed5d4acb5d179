"""Selective-search-style region proposals.

Each strategy (color space, merge scale k, similarity weights) runs the
over-segmentation, describes every segment by color and gradient-texture
histograms, then greedily merges the most similar adjacent pair until one
region covers the image. The bounding boxes of every region ever created,
across all strategies, form the proposal set.
"""

from __future__ import annotations

import hashlib
import heapq
from dataclasses import dataclass, field

import numpy as np

from .imaging import BoundingBox, Image, convert_color
from .segmentation import SegmentMap, default_min_size, oversegment, segment_adjacency

__all__ = [
    "RegionNode",
    "Strategy",
    "ProposalSet",
    "region_features",
    "similarity",
    "hierarchical_group",
    "propose",
    "quality_preset",
    "fast_preset",
]

COLOR_BINS = 25      # per channel
ORIENT_BINS = 8
MAGNITUDE_BINS = 10


@dataclass(frozen=True)
class RegionNode:
    id: int
    size: int
    bbox: BoundingBox
    color_hist: np.ndarray    # L1-normalized, 25 bins per channel
    texture_hist: np.ndarray  # L1-normalized, 8 orientations x 10 magnitudes per channel


@dataclass(frozen=True)
class Strategy:
    color_space: str = "HSV"
    k: float = 100.0
    weights: tuple[float, float, float, float] = (1.0, 1.0, 1.0, 1.0)  # color, texture, size, fill

    def __post_init__(self):
        if not any(w > 0 for w in self.weights):
            raise ValueError("at least one similarity weight must be positive")


@dataclass(frozen=True)
class ProposalSet:
    boxes: list[BoundingBox]
    source_count: int


def quality_preset() -> list[Strategy]:
    return [
        Strategy(space, k, weights)
        for space in ("RGB", "HSV", "Intensity")
        for k in (50.0, 100.0, 150.0, 300.0)
        for weights in ((1.0, 1.0, 1.0, 1.0), (0.0, 1.0, 1.0, 1.0))
    ]


def fast_preset() -> list[Strategy]:
    return [Strategy("HSV", k, (1.0, 1.0, 1.0, 1.0)) for k in (100.0, 200.0)]


def _segment_bboxes(seg: SegmentMap) -> list[BoundingBox]:
    lab = seg.labels
    n = seg.segment_count
    ys, xs = np.mgrid[0:lab.shape[0], 0:lab.shape[1]]
    flat = lab.ravel()
    x0 = np.full(n, np.iinfo(np.int64).max)
    y0 = np.full(n, np.iinfo(np.int64).max)
    x1 = np.zeros(n, dtype=np.int64)
    y1 = np.zeros(n, dtype=np.int64)
    np.minimum.at(x0, flat, xs.ravel())
    np.minimum.at(y0, flat, ys.ravel())
    np.maximum.at(x1, flat, xs.ravel())
    np.maximum.at(y1, flat, ys.ravel())
    return [BoundingBox(int(a), int(b), int(c) + 1, int(d) + 1) for a, b, c, d in zip(x0, y0, x1, y1)]


def _texture_responses(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Finite-difference gradient orientation (bin 0..7) and magnitude per pixel/channel."""
    gy = np.zeros_like(pixels)
    gx = np.zeros_like(pixels)
    gy[1:-1] = (pixels[2:] - pixels[:-2]) / 2.0
    gx[:, 1:-1] = (pixels[:, 2:] - pixels[:, :-2]) / 2.0
    mag = np.sqrt(gx * gx + gy * gy)
    angle = np.arctan2(gy, gx)  # [-pi, pi]
    obin = np.minimum((angle + np.pi) / (2 * np.pi) * ORIENT_BINS, ORIENT_BINS - 1).astype(np.int64)
    # gradients of [0,1] data are bounded by sqrt(2)/2 per axis -> magnitude <= 1
    mbin = np.minimum(mag * MAGNITUDE_BINS, MAGNITUDE_BINS - 1).astype(np.int64)
    return obin, mbin


def region_features(img: Image, seg: SegmentMap) -> list[RegionNode]:
    """One RegionNode per segment, with L1-normalized histograms."""
    if (seg.height, seg.width) != (img.height, img.width):
        raise ValueError("segment map does not match image dimensions")
    pixels = img.pixels
    c = img.channels
    n = seg.segment_count
    flat = seg.labels.ravel()

    cbin = np.minimum(pixels * COLOR_BINS, COLOR_BINS - 1).astype(np.int64)
    color = np.zeros((n, c * COLOR_BINS))
    obin, mbin = _texture_responses(pixels)
    texture = np.zeros((n, c * ORIENT_BINS * MAGNITUDE_BINS))
    for ch in range(c):
        idx = flat * (c * COLOR_BINS) + ch * COLOR_BINS + cbin[:, :, ch].ravel()
        color.ravel()[:] += np.bincount(idx, minlength=color.size)
        tidx = (
            flat * (c * ORIENT_BINS * MAGNITUDE_BINS)
            + ch * ORIENT_BINS * MAGNITUDE_BINS
            + obin[:, :, ch].ravel() * MAGNITUDE_BINS
            + mbin[:, :, ch].ravel()
        )
        texture.ravel()[:] += np.bincount(tidx, minlength=texture.size)

    sizes = np.bincount(flat, minlength=n)
    color /= color.sum(axis=1, keepdims=True)
    texture /= texture.sum(axis=1, keepdims=True)
    bboxes = _segment_bboxes(seg)
    return [
        RegionNode(i, int(sizes[i]), bboxes[i], color[i], texture[i])
        for i in range(n)
    ]


def _hist_intersection(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.minimum(a, b).sum())


def similarity(a: RegionNode, b: RegionNode, img_size: int, strategy: Strategy) -> float:
    """Weighted sum of color, texture, size and fill similarities, each in [0,1]."""
    wc, wt, ws, wf = strategy.weights
    score = 0.0
    if wc > 0:
        score += wc * _hist_intersection(a.color_hist, b.color_hist)
    if wt > 0:
        score += wt * _hist_intersection(a.texture_hist, b.texture_hist)
    if ws > 0:
        s_size = 1.0 - (a.size + b.size) / img_size
        score += ws * min(max(s_size, 0.0), 1.0)
    if wf > 0:
        s_fill = 1.0 - (a.bbox.union(b.bbox).area - a.size - b.size) / img_size
        score += wf * min(max(s_fill, 0.0), 1.0)
    return score


def _merge_nodes(a: RegionNode, b: RegionNode, new_id: int) -> RegionNode:
    size = a.size + b.size
    color = (a.size * a.color_hist + b.size * b.color_hist) / size
    texture = (a.size * a.texture_hist + b.size * b.texture_hist) / size
    color = color / color.sum()
    texture = texture / texture.sum()
    return RegionNode(new_id, size, a.bbox.union(b.bbox), color, texture)


def hierarchical_group(
    regions: list[RegionNode],
    adjacency: set[tuple[int, int]],
    strategy: Strategy,
    img_size: int | None = None,
) -> list[RegionNode]:
    """Merge the most similar adjacent pair until one region remains.

    Returns every node ever live: the n initial regions plus the n-1 merged
    ones. Ties in similarity break by the smaller (id, id) pair.
    """
    if not regions:
        raise ValueError("regions must be non-empty")
    if img_size is None:
        img_size = sum(r.size for r in regions)
    nodes = {r.id: r for r in regions}
    all_nodes = list(regions)
    neighbors: dict[int, set[int]] = {r.id: set() for r in regions}
    for a, b in adjacency:
        neighbors[a].add(b)
        neighbors[b].add(a)

    # max-heap with lazy invalidation: entries referencing dead ids are skipped
    heap: list[tuple[float, int, int]] = []
    for a, b in adjacency:
        lo, hi = min(a, b), max(a, b)
        heap.append((-similarity(nodes[lo], nodes[hi], img_size, strategy), lo, hi))
    heapq.heapify(heap)

    next_id = max(nodes) + 1
    while len(nodes) > 1:
        neg, a, b = heapq.heappop(heap)
        if a not in nodes or b not in nodes:
            continue
        merged = _merge_nodes(nodes[a], nodes[b], next_id)
        next_id += 1

        merged_neighbors = (neighbors[a] | neighbors[b]) - {a, b}
        for x in (a, b):
            del neighbors[x]
            del nodes[x]
        for nb in merged_neighbors:
            neighbors[nb].discard(a)
            neighbors[nb].discard(b)
            neighbors[nb].add(merged.id)
            heapq.heappush(
                heap, (-similarity(nodes[nb], merged, img_size, strategy), nb, merged.id)
            )
        neighbors[merged.id] = merged_neighbors
        nodes[merged.id] = merged
        all_nodes.append(merged)
    return all_nodes


def _box_priority(seed: int, strategy_index: int, depth: int) -> int:
    digest = hashlib.sha256(f"{seed}:{strategy_index}:{depth}".encode()).digest()
    return int.from_bytes(digest[:8], "big")


def propose(
    img: Image,
    strategies: list[Strategy] | None = None,
    seed: int = 0,
    min_size: int | None = None,
    min_area: int = 0,
) -> ProposalSet:
    """Run every strategy and collect the deduplicated proposal boxes.

    Boxes are ordered by a seed-derived pseudo-random priority so ranking is
    reproducible but mixes strategies. The full-image box is always present.
    """
    if strategies is None:
        strategies = fast_preset()
    if not strategies:
        raise ValueError("strategies must be non-empty")
    if min_size is None:
        min_size = default_min_size(img.width, img.height)

    ranked: dict[BoundingBox, int] = {}
    for si, strategy in enumerate(strategies):
        converted = convert_color(img, strategy.color_space)
        seg = oversegment(converted, strategy.k, min_size=min_size, seed=seed)
        regions = region_features(converted, seg)
        adjacency = segment_adjacency(seg)
        nodes = hierarchical_group(regions, adjacency, strategy, img.width * img.height)
        for depth, node in enumerate(nodes):
            if node.bbox.area < min_area:
                continue
            priority = _box_priority(seed, si, depth)
            if node.bbox not in ranked or priority < ranked[node.bbox]:
                ranked[node.bbox] = priority
    boxes = sorted(ranked, key=lambda b: (ranked[b], b))
    return ProposalSet(boxes=boxes, source_count=len(strategies))
