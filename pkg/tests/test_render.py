import numpy as np

from funcscene.dataset import ontology
from funcscene.evaluation import Detection
from funcscene.imaging import BoundingBox, Image
from funcscene.render import BORDER, LEGEND_ROWS, render


def blank(side=32):
    return Image(np.full((side, side, 3), 0.5))


class TestRender:
    def test_dimensions_and_legend(self):
        out = render(blank(), [])
        assert out.width == 32
        assert out.height == 32 + LEGEND_ROWS
        # legend strip contains every category color
        legend = out.pixels[32:]
        for cat in ontology():
            color = np.asarray(cat.display_color) / 255.0
            assert np.any(np.all(np.isclose(legend, color, atol=1e-9), axis=2))

    def test_border_painted_interior_untouched(self):
        det = Detection(BoundingBox(8, 8, 24, 24), 2, 0.9)
        out = render(blank(), [det])
        color = np.asarray(ontology()[2].display_color) / 255.0
        np.testing.assert_allclose(out.pixels[8, 8], color)
        np.testing.assert_allclose(out.pixels[8 + BORDER - 1, 16], color)
        np.testing.assert_allclose(out.pixels[23, 23], color)
        # interior keeps the original gray
        np.testing.assert_allclose(out.pixels[16, 16], 0.5)

    def test_higher_confidence_wins_shared_pixels(self):
        a = Detection(BoundingBox(4, 4, 20, 20), 0, 0.9)
        b = Detection(BoundingBox(4, 4, 20, 20), 2, 0.3)
        out = render(blank(), [b, a])
        expected = np.asarray(ontology()[0].display_color) / 255.0
        np.testing.assert_allclose(out.pixels[4, 4], expected)

    def test_out_of_frame_boxes_clipped(self):
        det = Detection(BoundingBox(-5, -5, 100, 100), 4, 0.5)
        out = render(blank(), [det])
        assert out.height == 32 + LEGEND_ROWS  # no resizing or errors

    def test_grayscale_promoted_to_color(self):
        img = Image(np.full((16, 16, 1), 0.2))
        out = render(img, [Detection(BoundingBox(2, 2, 10, 10), 1, 0.5)])
        assert out.channels == 3
