"""Raster images, bounding boxes, IOU, patch extraction and resizing.

Images are stored as float64 arrays of shape (height, width, channels) with
intensities normalized to [0, 1]. Boxes are half-open integer pixel
rectangles [x_min, x_max) x [y_min, y_max), so areas and intersections are
exact integers.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Image",
    "BoundingBox",
    "iou",
    "extract_patch",
    "resize_bilinear",
    "to_intensity",
    "rgb_to_hsv",
    "convert_color",
    "load_ppm",
    "save_ppm",
]

COLOR_SPACES = ("RGB", "HSV", "Intensity")


class InvalidRegionError(ValueError):
    """Box does not intersect the image."""


@dataclass(frozen=True)
class Image:
    """Raster image; pixels float64 in [0,1], shape (h, w, c)."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.float64)
        if px.ndim == 2:
            px = px[:, :, None]
        if px.ndim != 3:
            raise ValueError(f"expected 2-d or 3-d pixel array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("image must be at least 1x1")
        if px.shape[2] not in (1, 3):
            raise ValueError(f"channels must be 1 or 3, got {px.shape[2]}")
        if not np.all(np.isfinite(px)):
            raise ValueError("image contains non-finite values")
        if px.min() < 0.0 or px.max() > 1.0:
            raise ValueError("intensities must lie in [0, 1]")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def channels(self) -> int:
        return self.pixels.shape[2]

    def full_box(self) -> "BoundingBox":
        return BoundingBox(0, 0, self.width, self.height)


@dataclass(frozen=True, order=True)
class BoundingBox:
    """Half-open pixel rectangle: x in [x_min, x_max), y in [y_min, y_max)."""

    x_min: int
    y_min: int
    x_max: int
    y_max: int

    def __post_init__(self):
        if not (self.x_min < self.x_max and self.y_min < self.y_max):
            raise ValueError(f"degenerate box {self}")

    @property
    def width(self) -> int:
        return self.x_max - self.x_min

    @property
    def height(self) -> int:
        return self.y_max - self.y_min

    @property
    def area(self) -> int:
        return self.width * self.height

    def union(self, other: "BoundingBox") -> "BoundingBox":
        return BoundingBox(
            min(self.x_min, other.x_min),
            min(self.y_min, other.y_min),
            max(self.x_max, other.x_max),
            max(self.y_max, other.y_max),
        )

    def intersect_area(self, other: "BoundingBox") -> int:
        iw = min(self.x_max, other.x_max) - max(self.x_min, other.x_min)
        ih = min(self.y_max, other.y_max) - max(self.y_min, other.y_min)
        if iw <= 0 or ih <= 0:
            return 0
        return iw * ih

    def clip(self, width: int, height: int) -> "BoundingBox | None":
        """Intersect with image bounds; None if the result is empty."""
        x0 = max(self.x_min, 0)
        y0 = max(self.y_min, 0)
        x1 = min(self.x_max, width)
        y1 = min(self.y_max, height)
        if x0 >= x1 or y0 >= y1:
            return None
        return BoundingBox(x0, y0, x1, y1)


def iou(a: BoundingBox, b: BoundingBox) -> float:
    """Intersection over union of two boxes, in [0, 1]."""
    inter = a.intersect_area(b)
    union = a.area + b.area - inter
    return inter / union


def extract_patch(img: Image, box: BoundingBox) -> Image:
    """Crop the box (clipped to bounds) out of the image."""
    clipped = box.clip(img.width, img.height)
    if clipped is None:
        raise InvalidRegionError(f"box {box} lies outside a {img.width}x{img.height} image")
    return Image(img.pixels[clipped.y_min:clipped.y_max, clipped.x_min:clipped.x_max].copy())


def resize_bilinear(img: Image, w: int, h: int) -> Image:
    """Bilinear resize with center-aligned sample mapping.

    Output pixel centers map linearly onto input pixel centers, so constant
    images stay constant and same-size resizes are identities.
    """
    if w < 1 or h < 1:
        raise ValueError("target dimensions must be >= 1")
    src = img.pixels
    sh, sw = src.shape[:2]
    # center alignment: out center (j+0.5)/w maps to in coordinate x*sw-0.5
    xs = (np.arange(w) + 0.5) * (sw / w) - 0.5
    ys = (np.arange(h) + 0.5) * (sh / h) - 0.5
    x0 = np.clip(np.floor(xs).astype(int), 0, sw - 1)
    y0 = np.clip(np.floor(ys).astype(int), 0, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    y1 = np.minimum(y0 + 1, sh - 1)
    fx = np.clip(xs - x0, 0.0, 1.0)
    fy = np.clip(ys - y0, 0.0, 1.0)

    top = src[y0][:, x0] * (1 - fx)[None, :, None] + src[y0][:, x1] * fx[None, :, None]
    bot = src[y1][:, x0] * (1 - fx)[None, :, None] + src[y1][:, x1] * fx[None, :, None]
    out = top * (1 - fy)[:, None, None] + bot * fy[:, None, None]
    return Image(np.clip(out, 0.0, 1.0))


def to_intensity(img: Image) -> Image:
    """Channel-mean grayscale."""
    return Image(img.pixels.mean(axis=2, keepdims=True))


def rgb_to_hsv(img: Image) -> Image:
    """RGB to HSV with all three components normalized to [0, 1]."""
    if img.channels != 3:
        raise ValueError("rgb_to_hsv needs a 3-channel image")
    r, g, b = img.pixels[..., 0], img.pixels[..., 1], img.pixels[..., 2]
    maxc = img.pixels.max(axis=2)
    minc = img.pixels.min(axis=2)
    delta = maxc - minc

    h = np.zeros_like(maxc)
    nz = delta > 0
    rmax = nz & (maxc == r)
    gmax = nz & ~rmax & (maxc == g)
    bmax = nz & ~rmax & ~gmax
    with np.errstate(invalid="ignore", divide="ignore"):
        h[rmax] = ((g - b)[rmax] / delta[rmax]) % 6.0
        h[gmax] = (b - r)[gmax] / delta[gmax] + 2.0
        h[bmax] = (r - g)[bmax] / delta[bmax] + 4.0
    h /= 6.0

    s = np.zeros_like(maxc)
    pos = maxc > 0
    s[pos] = delta[pos] / maxc[pos]
    return Image(np.stack([h, s, maxc], axis=2))


def convert_color(img: Image, space: str) -> Image:
    if space == "RGB":
        if img.channels != 3:
            raise ValueError("RGB conversion needs a 3-channel image")
        return img
    if space == "HSV":
        return rgb_to_hsv(img)
    if space == "Intensity":
        return to_intensity(img)
    raise ValueError(f"unknown color space {space!r}")


def load_ppm(path) -> Image:
    """Read a binary PPM (P6) or PGM (P5), maxval 255."""
    with open(path, "rb") as f:
        data = f.read()

    tokens = []
    i = 0
    while len(tokens) < 4:
        if i >= len(data):
            raise ValueError(f"{path}: truncated header")
        c = data[i:i + 1]
        if c == b"#":
            while i < len(data) and data[i:i + 1] != b"\n":
                i += 1
        elif c.isspace():
            i += 1
        else:
            j = i
            while j < len(data) and not data[j:j + 1].isspace():
                j += 1
            tokens.append(data[i:j])
            i = j
    i += 1  # single whitespace after maxval

    magic = tokens[0]
    if magic not in (b"P5", b"P6"):
        raise ValueError(f"{path}: unsupported magic {magic!r}")
    width, height, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    if maxval != 255:
        raise ValueError(f"{path}: only maxval 255 supported, got {maxval}")
    channels = 3 if magic == b"P6" else 1
    n = width * height * channels
    raw = np.frombuffer(data, dtype=np.uint8, count=n, offset=i)
    if raw.size != n:
        raise ValueError(f"{path}: truncated pixel data")
    pixels = raw.reshape(height, width, channels).astype(np.float64) / 255.0
    return Image(pixels)


def save_ppm(path, img: Image) -> None:
    """Write binary PPM (P6) for 3-channel images, PGM (P5) for 1-channel."""
    magic = b"P6" if img.channels == 3 else b"P5"
    raw = np.round(img.pixels * 255.0).astype(np.uint8)
    with open(path, "wb") as f:
        f.write(magic + b"\n%d %d\n255\n" % (img.width, img.height))
        f.write(raw.tobytes())
