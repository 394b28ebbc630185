"""
Coefficient heatmaps: one panel per named coefficient matrix (terms down,
state variables across), side by side, on a diverging blue / white / red
scale shared by every panel so magnitudes compare directly.
"""

import functools
import io
import logging
import os
from typing import Optional, Sequence, Tuple

import numpy as np
from PIL import Image, ImageDraw, ImageFont

from lib.utils import ParameterError, ShapeError

_log = logging.getLogger(__name__)

BG = (251, 248, 241)
INK_PRIMARY = (28, 27, 42)
INK_SECONDARY = (88, 84, 110)
HAIRLINE = (216, 210, 196)
NEGATIVE = (49, 54, 149)
POSITIVE = (165, 0, 38)
ZERO = (255, 255, 255)

CELL_W = 22
CELL_H = 12
LABEL_W = 96
HEADER_H = 44
PANEL_GAP = 24
MARGIN = 16
LEGEND_H = 36
# Very tall libraries would give unusable images; the cap keeps degree-3
# libraries of up to ~10 nodes legible.
_MAX_PIXELS = 40_000_000


@functools.lru_cache(maxsize=16)
def load_font(size: int) -> ImageFont.ImageFont:
    """DejaVu Sans if the system has it, else Pillow's bundled default."""
    for path in (
        "/usr/share/fonts/truetype/dejavu/DejaVuSans.ttf",
        "DejaVuSans.ttf",
        "arial.ttf",
    ):
        try:
            return ImageFont.truetype(path, size)
        except (OSError, IOError):
            continue
    _log.debug("No TrueType font found for size %d; using PIL default", size)
    return ImageFont.load_default()


def truncate_to_width(draw: ImageDraw.ImageDraw, text: str,
                      font: ImageFont.ImageFont, max_width: int) -> str:
    """Longest prefix of ``text`` that fits in ``max_width`` (binary search),
    with ``...`` appended when cut."""
    if not text or draw.textlength(text, font=font) <= max_width:
        return text
    lo, hi = 0, len(text)
    while lo < hi:
        mid = (lo + hi) // 2
        if draw.textlength(text[:mid] + "...", font=font) <= max_width:
            lo = mid + 1
        else:
            hi = mid
    return text[: max(1, lo - 1)] + "..."


def diverging_color(value: float, scale: float) -> Tuple[int, int, int]:
    """Blend white toward red (positive) or blue (negative) by |value| / scale."""
    if scale <= 0 or value == 0:
        return ZERO
    t = min(abs(value) / scale, 1.0)
    end = POSITIVE if value > 0 else NEGATIVE
    return tuple(int(round(z + (e - z) * t)) for z, e in zip(ZERO, end))


def render_heatmap(panels: Sequence[Tuple[str, object]], path: Optional[os.PathLike] = None) -> bytes:
    """PNG bytes of the panels; also written to ``path`` when given.

    ``panels`` is a list of ``(title, CoefficientMatrix)`` pairs sharing the
    same term and variable names.
    """
    if not panels:
        raise ParameterError("render_heatmap needs at least one matrix")
    first = panels[0][1]
    terms, variables = list(first.term_names), list(first.var_names)
    for title, matrix in panels[1:]:
        if list(matrix.term_names) != terms or list(matrix.var_names) != variables:
            raise ShapeError(f"panel {title!r} does not share the first panel's terms and variables")

    scale = max(float(np.max(np.abs(m.xi))) if m.xi.size else 0.0 for _, m in panels)
    panel_w = CELL_W * len(variables)
    width = MARGIN * 2 + LABEL_W + len(panels) * panel_w + (len(panels) - 1) * PANEL_GAP
    height = MARGIN * 2 + HEADER_H + CELL_H * len(terms) + LEGEND_H
    if width * height > _MAX_PIXELS:
        raise ParameterError(f"heatmap of {len(terms)} terms x {len(variables)} variables is too large to render")

    img = Image.new("RGB", (width, height), BG)
    d = ImageDraw.Draw(img)
    title_font = load_font(14)
    label_font = load_font(9)

    top = MARGIN + HEADER_H
    for j, term in enumerate(terms):
        y = top + j * CELL_H
        d.text((MARGIN, y), truncate_to_width(d, term, label_font, LABEL_W - 6),
               fill=INK_SECONDARY, font=label_font)

    for p, (title, matrix) in enumerate(panels):
        left = MARGIN + LABEL_W + p * (panel_w + PANEL_GAP)
        d.text((left, MARGIN), truncate_to_width(d, title, title_font, panel_w),
               fill=INK_PRIMARY, font=title_font)
        for k, var in enumerate(variables):
            d.text((left + k * CELL_W + 2, MARGIN + HEADER_H - 14), var, fill=INK_SECONDARY, font=label_font)
        xi = matrix.xi
        for j in range(len(terms)):
            for k in range(len(variables)):
                x0, y0 = left + k * CELL_W, top + j * CELL_H
                d.rectangle([x0, y0, x0 + CELL_W - 1, y0 + CELL_H - 1],
                            fill=diverging_color(float(xi[j, k]), scale))
        d.rectangle([left - 1, top - 1, left + panel_w, top + CELL_H * len(terms)], outline=HAIRLINE)

    legend_y = height - MARGIN - LEGEND_H + 12
    d.text((MARGIN, legend_y),
           f"colour scale: -{scale:.3g} (blue) .. 0 (white) .. +{scale:.3g} (red)",
           fill=INK_SECONDARY, font=label_font)

    buf = io.BytesIO()
    img.save(buf, format="PNG")
    data = buf.getvalue()
    if path is not None:
        with open(path, "wb") as f:
            f.write(data)
        _log.info("heatmap (%d panels, %dx%d px) written to %s", len(panels), width, height, path)
    return data
