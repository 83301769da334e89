"""Render the visual prompts the verifier sees: grids, a highlighted cell and a box."""

import sys
from pathlib import Path

from binverify import GridSpec, OverlayStyle, RasterImage, draw_grid, highlight_box, highlight_cell
from binverify.raster import save_png

out = Path(sys.argv[1] if len(sys.argv) > 1 else "overlay_gallery")
out.mkdir(parents=True, exist_ok=True)

canvas = RasterImage.blank(210, 150)
spec = GridSpec(rows=5, cols=7, image_width=210, image_height=150)

save_png(draw_grid(canvas, spec), out / "grid_labelled.png")
save_png(draw_grid(canvas, spec, OverlayStyle(index_labels=False, line_thickness=1)), out / "grid_thin.png")

# The binary claim for cell (3,5) is asked about this image.
save_png(highlight_cell(draw_grid(canvas, spec), spec, 3, 5), out / "cell_3_5.png")

# A detector box candidate gets its own image with only that box drawn.
save_png(highlight_box(canvas, (40, 30, 120, 110)), out / "box.png")

for p in sorted(out.glob("*.png")):
    print(p)
