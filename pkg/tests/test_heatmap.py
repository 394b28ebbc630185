import io

import numpy as np
import pytest
from PIL import Image, ImageDraw

from lib.heatmap import NEGATIVE, POSITIVE, ZERO, diverging_color, load_font, render_heatmap, truncate_to_width
from lib.regression import CoefficientMatrix
from lib.utils import ParameterError, ShapeError

TERMS = ("1", "x0", "y0", "x0^2")
VARS = ("x0", "y0")


def _panel(values):
    return CoefficientMatrix(np.array(values, dtype=float).reshape(4, 2), TERMS, VARS)


def test_diverging_color_ends():
    assert diverging_color(0.0, 1.0) == ZERO
    assert diverging_color(2.0, 2.0) == POSITIVE
    assert diverging_color(-5.0, 2.0) == NEGATIVE
    assert diverging_color(1.0, 0.0) == ZERO
    r, g, b = diverging_color(0.5, 1.0)
    assert POSITIVE[1] < g < 255


def test_truncate_to_width():
    draw = ImageDraw.Draw(Image.new("RGB", (10, 10)))
    font = load_font(10)
    assert truncate_to_width(draw, "x0", font, 500) == "x0"
    cut = truncate_to_width(draw, "x0 y0 x1 y1 x2 y2 " * 4, font, 40)
    assert cut.endswith("...")
    assert draw.textlength(cut, font=font) <= 40


def test_render_heatmap_png(tmp_path):
    panels = [("true", _panel(range(8))), ("fit", _panel(np.linspace(-1, 1, 8)))]
    path = tmp_path / "h.png"
    data = render_heatmap(panels, path)
    assert path.read_bytes() == data
    img = Image.open(io.BytesIO(data))
    assert img.format == "PNG"
    assert img.width > img.height / 4


def test_render_heatmap_argument_checks():
    with pytest.raises(ParameterError):
        render_heatmap([])
    other = CoefficientMatrix(np.zeros((4, 2)), ("1", "x0", "y0", "y0^2"), VARS)
    with pytest.raises(ShapeError):
        render_heatmap([("a", _panel(range(8))), ("b", other)])
