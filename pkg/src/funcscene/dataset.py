"""Category ontology, annotation I/O, background sampling and splits.

Also hosts a synthetic-scene generator: small indoor-style canvases with
colored/textured shapes, one visual signature per category, so the whole
detection pipeline can be trained and evaluated end to end in minutes.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .imaging import BoundingBox, Image, extract_patch, iou, resize_bilinear, save_ppm

__all__ = [
    "OntologyCategory",
    "Annotation",
    "DatasetSplit",
    "SyntheticSceneSpec",
    "ontology",
    "category_id",
    "category_name",
    "BACKGROUND_ID",
    "load_annotations",
    "save_annotations",
    "group_by_image",
    "sample_background",
    "split_dataset",
    "generate_synthetic",
    "write_synthetic_dataset",
    "extract_training_patches",
    "image_rng",
]

BACKGROUND_ID = 11


@dataclass(frozen=True)
class OntologyCategory:
    id: int
    name: str
    parent_chain: tuple[str, ...]
    display_color: tuple[int, int, int]


_PART = ("small-part-of-furniture-appliance-wall",)
_OBJ = ("objects-vessels-and-tools",)
_FURN = ("furniture",)

_CATEGORIES = (
    OntologyCategory(0, "spherical-grasp-to-open", _PART + ("to-open",), (0, 0, 255)),
    OntologyCategory(1, "wrap-grasp-to-open", _PART + ("to-open",), (0, 255, 0)),
    OntologyCategory(2, "turn-on-off-fire", _PART + ("to-turn-on-off",), (255, 0, 0)),
    OntologyCategory(3, "turn-on-off-water", _PART + ("to-turn-on-off",), (0, 255, 255)),
    OntologyCategory(4, "turn-on-off-electricity", _PART + ("to-turn-on-off",), (255, 255, 0)),
    OntologyCategory(5, "two-hands-raise-and-move", _OBJ + ("to-move",), (0, 0, 0)),
    OntologyCategory(6, "cylindrical-grasp-to-move", _OBJ + ("to-move",), (255, 0, 255)),
    OntologyCategory(7, "hook-grasp-to-move", _OBJ + ("to-move",), (255, 128, 0)),
    OntologyCategory(8, "pinch-grasp-to-move", _OBJ + ("to-move",), (128, 0, 255)),
    OntologyCategory(9, "manipulate-elongated-tools", _OBJ + ("tools",), (0, 128, 0)),
    OntologyCategory(10, "to-sit-to-place", _FURN, (128, 64, 0)),
    OntologyCategory(11, "background", (), (128, 128, 128)),
)

_BY_NAME = {c.name: c for c in _CATEGORIES}


def ontology() -> list[OntologyCategory]:
    """The 11 end categories plus background, ids dense 0..11."""
    return list(_CATEGORIES)


def category_id(name: str) -> int:
    try:
        return _BY_NAME[name].id
    except KeyError:
        raise ValueError(f"unknown category {name!r}") from None


def category_name(cid: int) -> str:
    return _CATEGORIES[cid].name


@dataclass(frozen=True)
class Annotation:
    image_ref: str
    box: BoundingBox
    category: int  # end category 0..10, never background

    def __post_init__(self):
        if not 0 <= self.category < BACKGROUND_ID:
            raise ValueError(f"annotation category must be an end category, got {self.category}")


def save_annotations(path, annotations: list[Annotation]) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("# image_path x_min y_min x_max y_max category_name\n")
        for a in annotations:
            b = a.box
            f.write(f"{a.image_ref} {b.x_min} {b.y_min} {b.x_max} {b.y_max} {category_name(a.category)}\n")


def load_annotations(path) -> list[Annotation]:
    out = []
    with open(path, "r", encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split()
            if len(parts) != 6:
                raise ValueError(f"{path}:{lineno}: expected 6 fields, got {len(parts)}")
            ref, x0, y0, x1, y1, name = parts
            out.append(Annotation(ref, BoundingBox(int(x0), int(y0), int(x1), int(y1)), category_id(name)))
    return out


def group_by_image(annotations: list[Annotation]) -> dict[str, list[Annotation]]:
    grouped: dict[str, list[Annotation]] = {}
    for a in annotations:
        grouped.setdefault(a.image_ref, []).append(a)
    return grouped


def sample_background(
    img: Image,
    annotations: list[Annotation],
    n: int = 100,
    threshold: float = 0.5,
    rng: np.random.Generator | None = None,
) -> list[BoundingBox]:
    """Generate n random boxes and keep those with IOU < threshold vs every annotation.

    Side lengths are log-uniform in [8, min(image side, 256)], positions
    uniform. Fewer than n boxes may come back; sampling is generate-then-filter
    with no resampling.
    """
    if n < 1:
        raise ValueError("n must be >= 1")
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    if rng is None:
        rng = np.random.default_rng(0)
    max_w = min(img.width, 256)
    max_h = min(img.height, 256)
    if max_w < 8 or max_h < 8:
        raise ValueError("image too small for 8px background boxes")
    kept = []
    for _ in range(n):
        w = int(round(np.exp(rng.uniform(np.log(8), np.log(max_w)))))
        h = int(round(np.exp(rng.uniform(np.log(8), np.log(max_h)))))
        w = min(max(w, 8), img.width)
        h = min(max(h, 8), img.height)
        x0 = int(rng.integers(0, img.width - w + 1))
        y0 = int(rng.integers(0, img.height - h + 1))
        box = BoundingBox(x0, y0, x0 + w, y0 + h)
        if all(iou(box, a.box) < threshold for a in annotations):
            kept.append(box)
    return kept


@dataclass(frozen=True)
class DatasetSplit:
    train: tuple[str, ...]
    test: tuple[str, ...]
    validation: tuple[str, ...]
    seed: int


def split_dataset(image_ids: list[str], seed: int = 0) -> DatasetSplit:
    """90/10 train/test; 2% of the training side held out for validation."""
    if len(image_ids) < 10:
        raise ValueError(f"need at least 10 images to split, got {len(image_ids)}")
    rng = np.random.default_rng(seed)
    ids = list(image_ids)
    rng.shuffle(ids)
    n_test = len(ids) // 10
    test = ids[:n_test]
    rest = ids[n_test:]
    n_val = max(1, int(np.ceil(0.02 * len(rest))))
    validation = rest[:n_val]
    train = rest[n_val:]
    return DatasetSplit(tuple(train), tuple(test), tuple(validation), seed)


# --- synthetic scenes -------------------------------------------------------

@dataclass(frozen=True)
class SyntheticSceneSpec:
    width: int = 96
    height: int = 96
    min_objects: int = 2
    max_objects: int = 4
    noise: float = 0.04
    seed: int = 0


# per-category signature: base RGB color, shape, stripe texture
_SIGNATURES = (
    ((0.10, 0.15, 0.85), "circle", None),
    ((0.10, 0.80, 0.15), "square", None),
    ((0.85, 0.10, 0.10), "circle", "h"),
    ((0.10, 0.80, 0.80), "square", "v"),
    ((0.85, 0.85, 0.10), "diamond", None),
    ((0.10, 0.10, 0.10), "square", None),
    ((0.85, 0.10, 0.85), "circle", "v"),
    ((0.90, 0.50, 0.10), "diamond", "h"),
    ((0.50, 0.10, 0.85), "square", "h"),
    ((0.10, 0.45, 0.10), "diamond", "v"),
    ((0.55, 0.30, 0.10), "circle", None),
)


def image_rng(seed: int, index: int) -> np.random.Generator:
    """Per-image random stream, independent of processing order."""
    return np.random.default_rng(np.random.SeedSequence([seed, index]))


def _draw_object(canvas: np.ndarray, box: BoundingBox, category: int, rng) -> None:
    color, shape, stripes = _SIGNATURES[category]
    h, w = box.height, box.width
    yy, xx = np.mgrid[0:h, 0:w]
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    if shape == "circle":
        mask = ((yy - cy) / (h / 2.0)) ** 2 + ((xx - cx) / (w / 2.0)) ** 2 <= 1.0
    elif shape == "diamond":
        mask = np.abs(yy - cy) / (h / 2.0) + np.abs(xx - cx) / (w / 2.0) <= 1.0
    else:
        mask = np.ones((h, w), dtype=bool)
    # corners/edges must stay touched so the annotation box is tight
    mask[0, :] |= np.abs(xx[0] - cx) < w / 4
    mask[-1, :] |= np.abs(xx[-1] - cx) < w / 4
    mask[:, 0] |= np.abs(yy[:, 0] - cy) < h / 4
    mask[:, -1] |= np.abs(yy[:, -1] - cy) < h / 4

    patch = np.empty((h, w, 3))
    patch[:] = np.asarray(color) + rng.uniform(-0.04, 0.04, 3)
    if stripes == "h":
        patch[(yy // 3) % 2 == 0] *= 0.75
    elif stripes == "v":
        patch[(xx // 3) % 2 == 0] *= 0.75
    region = canvas[box.y_min:box.y_max, box.x_min:box.x_max]
    region[mask] = patch[mask]


def generate_synthetic(spec: SyntheticSceneSpec, count: int) -> tuple[list[Image], list[Annotation]]:
    """Deterministic labeled scenes; image refs are scene_0000.ppm, ..."""
    images: list[Image] = []
    annotations: list[Annotation] = []
    for idx in range(count):
        rng = image_rng(spec.seed, idx)
        base = 0.55 + rng.uniform(-0.1, 0.1)
        canvas = np.clip(
            base + rng.normal(0.0, spec.noise, (spec.height, spec.width, 3)), 0.0, 1.0
        )
        # a couple of faint large background structures (counters, walls)
        for _ in range(2):
            bw = int(rng.integers(spec.width // 3, spec.width))
            bh = int(rng.integers(spec.height // 3, spec.height))
            bx = int(rng.integers(0, spec.width - bw + 1))
            by = int(rng.integers(0, spec.height - bh + 1))
            canvas[by:by + bh, bx:bx + bw] = np.clip(
                canvas[by:by + bh, bx:bx + bw] + rng.uniform(-0.08, 0.08, 3), 0.0, 1.0)

        ref = f"scene_{idx:04d}.ppm"
        n_obj = int(rng.integers(spec.min_objects, spec.max_objects + 1))
        placed: list[BoundingBox] = []
        attempts = 0
        while len(placed) < n_obj and attempts < 50 * n_obj:
            attempts += 1
            side_lo = max(10, min(spec.width, spec.height) // 8)
            side_hi = min(spec.width, spec.height) // 3
            w = int(rng.integers(side_lo, side_hi + 1))
            h = int(rng.integers(side_lo, side_hi + 1))
            x0 = int(rng.integers(0, spec.width - w + 1))
            y0 = int(rng.integers(0, spec.height - h + 1))
            box = BoundingBox(x0, y0, x0 + w, y0 + h)
            if any(iou(box, p) > 0.05 for p in placed):
                continue
            category = int(rng.integers(0, BACKGROUND_ID))
            _draw_object(canvas, box, category, rng)
            placed.append(box)
            annotations.append(Annotation(ref, box, category))
        canvas = np.clip(canvas, 0.0, 1.0)
        images.append(Image(canvas))
    return images, annotations


def write_synthetic_dataset(out_dir, spec: SyntheticSceneSpec, count: int) -> str:
    """Emit PPM scenes plus an annotations.txt; returns the annotation path."""
    os.makedirs(out_dir, exist_ok=True)
    images, annotations = generate_synthetic(spec, count)
    for idx, img in enumerate(images):
        save_ppm(os.path.join(out_dir, f"scene_{idx:04d}.ppm"), img)
    ann_path = os.path.join(out_dir, "annotations.txt")
    save_annotations(ann_path, annotations)
    return ann_path


def extract_training_patches(
    images: dict[str, Image],
    annotations: list[Annotation],
    net_input: tuple[int, int, int],
    backgrounds: dict[str, list[BoundingBox]] | None = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Crop and resize labeled boxes to the network input; backgrounds get label 11.

    Returns (X, y) with X of shape (N, C, H, W).
    """
    c, h, w = net_input
    xs, ys = [], []

    def add(img: Image, box: BoundingBox, label: int) -> None:
        patch = resize_bilinear(extract_patch(img, box), w, h)
        px = patch.pixels
        if px.shape[2] != c:
            raise ValueError(f"patch has {px.shape[2]} channels, network wants {c}")
        xs.append(px.transpose(2, 0, 1))
        ys.append(label)

    for a in annotations:
        add(images[a.image_ref], a.box, a.category)
    if backgrounds:
        for ref, boxes in backgrounds.items():
            for box in boxes:
                add(images[ref], box, BACKGROUND_ID)
    if not xs:
        return np.zeros((0, c, h, w)), np.zeros(0, dtype=np.int64)
    return np.stack(xs), np.asarray(ys, dtype=np.int64)
