"""Graph-based over-segmentation.

Greedy merging over the 4-connected pixel graph: edges sorted by weight
(Euclidean color distance) and merged when the weight is below both
components' adaptive internal thresholds Int(C) + k/|C|. A post-pass folds
components smaller than min_size into their cheapest neighbor. Ties in edge
weight break by (weight, u, v) so results are identical across platforms.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imaging import Image

__all__ = ["SegmentMap", "oversegment", "default_min_size", "segment_adjacency", "save_segment_map"]


@dataclass(frozen=True)
class SegmentMap:
    """Dense per-pixel segment labels 0..segment_count-1, shape (h, w)."""

    labels: np.ndarray
    segment_count: int

    @property
    def height(self) -> int:
        return self.labels.shape[0]

    @property
    def width(self) -> int:
        return self.labels.shape[1]


def default_min_size(width: int, height: int) -> int:
    """Minimum segment size for the "quality" setting: max(h,w)/100, >= 1."""
    return max(1, max(height, width) // 100)


class _UnionFind:
    __slots__ = ("parent", "size", "internal")

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n
        self.internal = [0.0] * n  # max weight of any merged edge in the component

    def find(self, x: int) -> int:
        root = x
        parent = self.parent
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int, weight: float) -> int:
        if self.size[a] < self.size[b]:
            a, b = b, a
        self.parent[b] = a
        self.size[a] += self.size[b]
        self.internal[a] = max(self.internal[a], self.internal[b], weight)
        return a


def _gaussian_blur(pixels: np.ndarray, sigma: float) -> np.ndarray:
    radius = max(1, int(np.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kernel = np.exp(-0.5 * (x / sigma) ** 2)
    kernel /= kernel.sum()
    padded = np.pad(pixels, ((radius, radius), (0, 0), (0, 0)), mode="edge")
    out = np.zeros_like(pixels)
    for o, w in enumerate(kernel):
        out += w * padded[o:o + pixels.shape[0]]
    padded = np.pad(out, ((0, 0), (radius, radius), (0, 0)), mode="edge")
    out = np.zeros_like(pixels)
    for o, w in enumerate(kernel):
        out += w * padded[:, o:o + pixels.shape[1]]
    return out


def _grid_edges(pixels: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """4-neighbor edges (u, v, weight) with u < v, as flat pixel indices."""
    h, w = pixels.shape[:2]
    idx = np.arange(h * w).reshape(h, w)

    us, vs, ws = [], [], []
    if w > 1:
        us.append(idx[:, :-1].ravel())
        vs.append(idx[:, 1:].ravel())
        ws.append(np.sqrt(((pixels[:, :-1] - pixels[:, 1:]) ** 2).sum(axis=2)).ravel())
    if h > 1:
        us.append(idx[:-1, :].ravel())
        vs.append(idx[1:, :].ravel())
        ws.append(np.sqrt(((pixels[:-1, :] - pixels[1:, :]) ** 2).sum(axis=2)).ravel())
    if not us:
        return np.empty(0, int), np.empty(0, int), np.empty(0)
    return np.concatenate(us), np.concatenate(vs), np.concatenate(ws)


def oversegment(
    img: Image,
    k: float,
    min_size: int | None = None,
    seed: int = 0,
    smooth_sigma: float | None = None,
) -> SegmentMap:
    """Segment an image into 4-connected regions.

    k is the merge scale (larger -> fewer, larger segments); min_size defaults
    to max(h,w)/100. The algorithm is deterministic; seed is accepted for
    interface uniformity with the rest of the pipeline.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    h, w = img.height, img.width
    if min_size is None:
        min_size = default_min_size(w, h)
    if min_size < 1:
        raise ValueError("min_size must be >= 1")

    pixels = img.pixels
    if smooth_sigma is not None and smooth_sigma > 0:
        pixels = _gaussian_blur(pixels, smooth_sigma)

    us, vs, ws = _grid_edges(pixels)
    order = np.lexsort((vs, us, ws))
    us, vs, ws = us[order], vs[order], ws[order]

    uf = _UnionFind(h * w)
    find, size, internal = uf.find, uf.size, uf.internal
    for u, v, weight in zip(us.tolist(), vs.tolist(), ws.tolist()):
        a = find(u)
        b = find(v)
        if a == b:
            continue
        if weight <= min(internal[a] + k / size[a], internal[b] + k / size[b]):
            uf.union(a, b, weight)

    # fold undersized components into their cheapest neighbor; ascending edge
    # order means the first qualifying edge is the minimum-weight connection
    for u, v in zip(us.tolist(), vs.tolist()):
        a = find(u)
        b = find(v)
        if a != b and (size[a] < min_size or size[b] < min_size):
            uf.union(a, b, 0.0)

    roots = np.fromiter((find(i) for i in range(h * w)), dtype=np.int64, count=h * w)
    _, labels = np.unique(roots, return_inverse=True)
    labels = labels.reshape(h, w)
    return SegmentMap(labels=labels, segment_count=int(labels.max()) + 1)


def segment_adjacency(seg: SegmentMap) -> set[tuple[int, int]]:
    """Pairs (a, b), a < b, of segments sharing a 4-neighbor pixel edge."""
    lab = seg.labels
    pairs: set[tuple[int, int]] = set()
    for left, right in ((lab[:, :-1], lab[:, 1:]), (lab[:-1, :], lab[1:, :])):
        diff = left != right
        a = left[diff]
        b = right[diff]
        lo = np.minimum(a, b)
        hi = np.maximum(a, b)
        pairs.update(zip(lo.tolist(), hi.tolist()))
    return pairs


def save_segment_map(path, seg: SegmentMap) -> None:
    """Write the label map as a PGM plus a `<path>.counts.txt` sidecar."""
    from .imaging import save_ppm

    denom = max(1, seg.segment_count - 1)
    gray = (seg.labels.astype(np.float64) / denom)[:, :, None]
    save_ppm(path, Image(gray))
    counts = np.bincount(seg.labels.ravel(), minlength=seg.segment_count)
    with open(str(path) + ".counts.txt", "w", encoding="utf-8") as f:
        for label, count in enumerate(counts.tolist()):
            f.write(f"{label} {count}\n")
