"""Overlay rendering: detection boxes in category colors plus a legend strip."""

from __future__ import annotations

import numpy as np

from .dataset import ontology
from .evaluation import Detection
from .imaging import Image

__all__ = ["render"]

BORDER = 2
LEGEND_ROWS = 8


def render(img: Image, detections: list[Detection]) -> Image:
    """2-px borders in the ontology display colors; a legend strip is appended
    below the frame so pixels inside it stay untouched except at borders.

    Boxes are drawn in ascending confidence so the most confident detection
    wins contested border pixels.
    """
    cats = ontology()
    if img.channels == 3:
        canvas = img.pixels.copy()
    else:
        canvas = np.repeat(img.pixels, 3, axis=2)

    for det in sorted(detections, key=lambda d: d.confidence):
        color = np.asarray(cats[det.category].display_color) / 255.0
        b = det.box
        x0, y0 = max(b.x_min, 0), max(b.y_min, 0)
        x1, y1 = min(b.x_max, img.width), min(b.y_max, img.height)
        xi0, yi0 = min(x0 + BORDER, x1), min(y0 + BORDER, y1)
        xi1, yi1 = max(x1 - BORDER, x0), max(y1 - BORDER, y0)
        canvas[y0:y1, x0:xi0] = color
        canvas[y0:y1, xi1:x1] = color
        canvas[y0:yi0, x0:x1] = color
        canvas[yi1:y1, x0:x1] = color

    legend = np.ones((LEGEND_ROWS, canvas.shape[1], 3))
    cell = max(1, canvas.shape[1] // len(cats))
    for cat in cats:
        x0 = cat.id * cell
        legend[1:-1, x0:min(x0 + cell - 1, canvas.shape[1])] = np.asarray(cat.display_color) / 255.0
    return Image(np.vstack([canvas, legend]))
