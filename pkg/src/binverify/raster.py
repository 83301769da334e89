"""Pixel-exact overlays: grid lines with cell indices, highlighted boxes and cells.

Images are RGBA ``uint8`` arrays of shape ``(height, width, 4)``. Every drawing
function returns a new image and leaves its input untouched. Rectangles are
half-open pixel ranges ``[x0, x1) x [y0, y1)``.
"""

from __future__ import annotations

import io
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import InvalidInputError
from .quantize import GridSpec, grid_boundaries

RGBA = tuple[int, int, int, int]

RED: RGBA = (255, 0, 0, 255)
GREEN: RGBA = (0, 200, 0, 255)
WHITE: RGBA = (255, 255, 255, 255)
DARK: RGBA = (20, 20, 20, 255)


class ClampWarning(UserWarning):
    """A box extended past the image and was clipped to it."""


@dataclass(frozen=True, eq=False)
class RasterImage:
    """Row-major RGBA raster."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels)
        if px.ndim != 3 or px.shape[2] != 4:
            raise InvalidInputError(f"expected (H, W, 4) pixel array, got shape {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise InvalidInputError("image must be at least 1x1")
        if px.dtype != np.uint8:
            px = px.astype(np.uint8)
        object.__setattr__(self, "pixels", px)

    @classmethod
    def blank(cls, width: int, height: int, color: RGBA = WHITE) -> RasterImage:
        if width < 1 or height < 1:
            raise InvalidInputError(f"image dimensions must be >= 1, got {width}x{height}")
        px = np.empty((height, width, 4), dtype=np.uint8)
        px[:, :] = color
        return cls(px)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    def copy(self) -> RasterImage:
        return RasterImage(self.pixels.copy())

    def __eq__(self, other):
        if not isinstance(other, RasterImage):
            return NotImplemented
        return self.pixels.shape == other.pixels.shape and bool(np.array_equal(self.pixels, other.pixels))

    __hash__ = None


@dataclass(frozen=True)
class OverlayStyle:
    line_color: RGBA = RED
    highlight_color: RGBA = GREEN
    line_thickness: int = 2
    highlight_thickness: int = 4
    index_labels: bool = True
    label_color: RGBA = WHITE
    label_outline: RGBA = DARK

    def __post_init__(self):
        if self.line_thickness < 1 or self.highlight_thickness < 1:
            raise InvalidInputError("line thicknesses must be >= 1")
        if self.line_color[3] != 255:
            raise InvalidInputError("grid line color must be fully opaque")


# --------------------------------------------------------------------------
# PNG I/O


def encode_png(image: RasterImage) -> bytes:
    from PIL import Image

    buf = io.BytesIO()
    Image.fromarray(image.pixels, mode="RGBA").save(buf, format="PNG")
    return buf.getvalue()


def decode_png(data: bytes) -> RasterImage:
    from PIL import Image

    with Image.open(io.BytesIO(data)) as im:
        return RasterImage(np.array(im.convert("RGBA")))


def save_png(image: RasterImage, path: str | Path) -> None:
    Path(path).write_bytes(encode_png(image))


def load_png(path: str | Path) -> RasterImage:
    return decode_png(Path(path).read_bytes())


# --------------------------------------------------------------------------
# primitives


def _band(boundary: int, thickness: int, extent: int) -> tuple[int, int]:
    """Pixel span [lo, hi) of a line centred on ``boundary``, kept inside [0, extent)."""
    thickness = min(thickness, extent)
    lo = boundary - thickness // 2
    lo = max(0, min(lo, extent - thickness))
    return lo, lo + thickness


def line_positions(spec: GridSpec, thickness: int = 1) -> tuple[list[int], list[int]]:
    """Sorted pixel columns and rows covered by grid lines (including the border)."""
    xs, ys = grid_boundaries(spec)
    cols = sorted({x for b in xs for x in range(*_band(b, thickness, spec.image_width))})
    rows = sorted({y for b in ys for y in range(*_band(b, thickness, spec.image_height))})
    return cols, rows


def _outline(px: np.ndarray, rect: tuple[int, int, int, int], thickness: int, color: RGBA) -> None:
    x0, y0, x1, y1 = rect
    t = thickness
    px[y0:min(y0 + t, y1), x0:x1] = color
    px[max(y1 - t, y0):y1, x0:x1] = color
    px[y0:y1, x0:min(x0 + t, x1)] = color
    px[y0:y1, max(x1 - t, x0):x1] = color


# 3x5 glyphs, one string per row, '#' = ink
_GLYPHS = {
    "0": ["###", "#.#", "#.#", "#.#", "###"],
    "1": [".#.", "##.", ".#.", ".#.", "###"],
    "2": ["###", "..#", "###", "#..", "###"],
    "3": ["###", "..#", "###", "..#", "###"],
    "4": ["#.#", "#.#", "###", "..#", "..#"],
    "5": ["###", "#..", "###", "..#", "###"],
    "6": ["###", "#..", "###", "#.#", "###"],
    "7": ["###", "..#", "..#", "..#", "..#"],
    "8": ["###", "#.#", "###", "#.#", "###"],
    "9": ["###", "#.#", "###", "..#", "###"],
    ",": ["...", "...", "...", ".#.", "#.."],
}
_GLYPH_W, _GLYPH_H = 3, 5


def text_mask(text: str) -> np.ndarray:
    """Boolean ink mask for ``text`` using the embedded 3x5 font (1px letter gap)."""
    if not text:
        return np.zeros((_GLYPH_H, 0), dtype=bool)
    width = len(text) * (_GLYPH_W + 1) - 1
    mask = np.zeros((_GLYPH_H, width), dtype=bool)
    for i, ch in enumerate(text):
        try:
            rows = _GLYPHS[ch]
        except KeyError:
            raise InvalidInputError(f"no glyph for {ch!r}") from None
        x = i * (_GLYPH_W + 1)
        for r, row in enumerate(rows):
            for c, cell in enumerate(row):
                mask[r, x + c] = cell == "#"
    return mask


def _stamp_label(px: np.ndarray, text: str, origin: tuple[int, int], clip: tuple[int, int, int, int],
                 color: RGBA, outline: RGBA) -> None:
    mask = text_mask(text)
    h, w = mask.shape
    # 1px dark halo around the glyphs
    halo = np.zeros((h + 2, w + 2), dtype=bool)
    for dy in range(3):
        for dx in range(3):
            halo[dy:dy + h, dx:dx + w] |= mask
    ox, oy = origin
    cx0, cy0, cx1, cy1 = clip
    for layer, col, off in ((halo, outline, 1), (mask, color, 0)):
        ys, xs = np.nonzero(layer)
        ys = ys + oy - off
        xs = xs + ox - off
        keep = (xs >= cx0) & (xs < cx1) & (ys >= cy0) & (ys < cy1)
        px[ys[keep], xs[keep]] = col


# --------------------------------------------------------------------------
# overlays


def _check_spec(image: RasterImage, spec: GridSpec) -> None:
    if (spec.image_width, spec.image_height) != (image.width, image.height):
        raise InvalidInputError(
            f"grid spec is for {spec.image_width}x{spec.image_height}, image is {image.width}x{image.height}"
        )


def draw_grid(image: RasterImage, spec: GridSpec, style: OverlayStyle = OverlayStyle()) -> RasterImage:
    """Overlay grid lines on every row/column boundary plus the outer border.

    Lines are ``style.line_thickness`` wide, centred on the boundary and pushed
    inward at the image edge. With ``index_labels`` each cell gets its 1-based
    ``row,col`` index in its top-left corner.
    """
    _check_spec(image, spec)
    out = image.pixels.copy()
    t = style.line_thickness
    xs, ys = grid_boundaries(spec)
    for b in xs:
        lo, hi = _band(b, t, image.width)
        out[:, lo:hi] = style.line_color
    for b in ys:
        lo, hi = _band(b, t, image.height)
        out[lo:hi, :] = style.line_color
    if style.index_labels:
        for r in range(spec.rows):
            for c in range(spec.cols):
                x0, x1 = xs[c], xs[c + 1]
                y0, y1 = ys[r], ys[r + 1]
                # first pixel clear of the line band, plus 1px halo
                ox = _band(x0, t, image.width)[1] + 1
                oy = _band(y0, t, image.height)[1] + 1
                _stamp_label(out, f"{r + 1},{c + 1}", (ox, oy), (x0, y0, x1, y1),
                             style.label_color, style.label_outline)
    return RasterImage(out)


def clamp_box(box, width: int, height: int) -> tuple[tuple[int, int, int, int], bool]:
    x0, y0, x1, y1 = (int(round(v)) for v in box)
    cx0, cy0 = max(0, x0), max(0, y0)
    cx1, cy1 = min(width, x1), min(height, y1)
    clamped = (cx0, cy0, cx1, cy1) != (x0, y0, x1, y1)
    return (cx0, cy0, cx1, cy1), clamped


def highlight_box(image: RasterImage, box, style: OverlayStyle = OverlayStyle()) -> RasterImage:
    """Outline one box ``(x0, y0, x1, y1)`` (half-open) in the highlight color.

    The outline is drawn inside the box. Boxes reaching past the image are
    clipped and a :class:`ClampWarning` is emitted; a box with no area left
    after clipping is rejected.
    """
    rect, clamped = clamp_box(box, image.width, image.height)
    x0, y0, x1, y1 = rect
    if x1 <= x0 or y1 <= y0:
        raise InvalidInputError(f"box {tuple(box)} has no area inside a {image.width}x{image.height} image")
    if clamped:
        warnings.warn(f"box {tuple(box)} clamped to {rect}", ClampWarning, stacklevel=2)
    out = image.pixels.copy()
    _outline(out, rect, style.highlight_thickness, style.highlight_color)
    return RasterImage(out)


def highlight_cell(image: RasterImage, spec: GridSpec, row: int, col: int,
                   style: OverlayStyle = OverlayStyle()) -> RasterImage:
    """Draw the grid, then outline cell ``(row, col)`` (1-based) in the highlight color."""
    if not (1 <= row <= spec.rows and 1 <= col <= spec.cols):
        raise InvalidInputError(f"cell ({row},{col}) outside a {spec.rows}x{spec.cols} grid")
    gridded = draw_grid(image, spec, style)
    xs, ys = grid_boundaries(spec)
    out = gridded.pixels  # fresh array owned by us
    _outline(out, (xs[col - 1], ys[row - 1], xs[col], ys[row]), style.highlight_thickness, style.highlight_color)
    return RasterImage(out)


def draw_boxes(image: RasterImage, boxes, style: OverlayStyle = OverlayStyle()) -> RasterImage:
    """Outline several boxes at once, numbered 1..n in their top-left corners (MCQ view)."""
    out = image
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ClampWarning)
        for box in boxes:
            out = highlight_box(out, box, style)
    px = out.pixels.copy()
    for i, box in enumerate(boxes, start=1):
        (x0, y0, x1, y1), _ = clamp_box(box, image.width, image.height)
        t = style.highlight_thickness
        _stamp_label(px, str(i), (x0 + t + 1, y0 + t + 1), (x0, y0, x1, y1), style.label_color, style.label_outline)
    return RasterImage(px)
