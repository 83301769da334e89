"""Spatial-Map direction claims and Spatial-Grid per-category claims over a highlighted cell."""

from __future__ import annotations

import re
from typing import Sequence

from ..errors import InvalidInputError
from ..quantize import Candidate, GridSpec, native_label_alphabet
from ..raster import OverlayStyle, RasterImage, highlight_cell
from .base import TaskAdapter, TaskContext, TaskInstance

DIRECTIONS = ("NW", "SW", "SE", "NE")
DIRECTION_WORDS = {"NW": "northwest", "SW": "southwest", "SE": "southeast", "NE": "northeast"}

MAP_TEMPLATE = "{a} is {direction} of {b}. Answer: True or False."
GRID_TEMPLATE = "The object in cell ({row},{col}) is a {category}. Answer with True or False."


def map_claims(a: str, b: str) -> list[Candidate]:
    """One True/False claim per compass option, in NW, SW, SE, NE order."""
    if not a or not a.strip() or not b or not b.strip():
        raise InvalidInputError("entity names must be non-empty")
    alphabet = native_label_alphabet(DIRECTIONS)
    return [Candidate(c.id, MAP_TEMPLATE.format(a=a, b=b, direction=DIRECTION_WORDS[c.id]), c.payload)
            for c in alphabet]


def map_question(a: str, b: str) -> str:
    return f"Where is {a} relative to {b}?"


def grid_claims(cell: tuple[int, int], categories: Sequence[str], spec: GridSpec | None = None,
                image: RasterImage | None = None,
                style: OverlayStyle = OverlayStyle()) -> tuple[list[Candidate], RasterImage | None]:
    """Per-category claims about one cell, plus the gridded image with that cell highlighted.

    All claims share the single rendering. ``spec`` (or the image size with a
    5x5 grid) bounds the cell index.
    """
    row, col = cell
    if spec is None and image is not None:
        spec = GridSpec(5, 5, image.width, image.height)
    if spec is not None and not (1 <= row <= spec.rows and 1 <= col <= spec.cols):
        raise InvalidInputError(f"cell ({row},{col}) outside a {spec.rows}x{spec.cols} grid")
    if row < 1 or col < 1:
        raise InvalidInputError(f"cell indices are 1-based, got ({row},{col})")
    alphabet = native_label_alphabet(categories)
    cands = [Candidate(c.id, GRID_TEMPLATE.format(row=row, col=col, category=c.payload), c.payload)
             for c in alphabet]
    rendered = highlight_cell(image, spec, row, col, style) if image is not None else None
    return cands, rendered


def _match_label(raw: str, labels: Sequence[str]) -> str | None:
    low = raw.lower()
    hits = [lab for lab in labels if re.search(rf"(?<![a-z]){re.escape(lab.lower())}(?![a-z])", low)]
    return hits[0] if len(hits) == 1 else None


class SpatialMapAdapter(TaskAdapter):
    kind = "spatial-map"

    def shortlist(self, inst, ctx):
        return map_claims(inst.source["a"], inst.source["b"])

    def is_correct(self, inst, cand):
        return cand.id == inst.ground_truth

    def mcq_stem(self, inst):
        return map_question(inst.source["a"], inst.source["b"])

    def mcq_options(self, inst, cands):
        return [DIRECTION_WORDS[c.id].capitalize() + f" ({c.id})" for c in cands]

    def open_prompt(self, inst):
        return map_question(inst.source["a"], inst.source["b"]) + " Reply with a compass direction."

    def score_open(self, inst, raw):
        low = raw.lower()
        found = [d for d in DIRECTIONS
                 if re.search(rf"\b{DIRECTION_WORDS[d]}\b|\b{d.lower()}\b", low)]
        answer = found[0] if len(found) == 1 else None
        return answer == inst.ground_truth, {"answer": answer}


class SpatialGridAdapter(TaskAdapter):
    kind = "spatial-grid"

    def _spec(self, inst, img: RasterImage) -> GridSpec:
        rows, cols = inst.source.get("grid", (5, 5))
        return GridSpec(rows, cols, img.width, img.height)

    def _rendered(self, inst, ctx: TaskContext) -> tuple[RasterImage, ...]:
        out = []
        for img in ctx.images(inst):
            row, col = inst.source["cell"]
            out.append(highlight_cell(img, self._spec(inst, img), row, col, ctx.style))
        return tuple(out)

    def shortlist(self, inst, ctx):
        cands, _ = grid_claims(tuple(inst.source["cell"]), inst.source["categories"])
        return cands

    def is_correct(self, inst, cand):
        return cand.payload == inst.ground_truth

    def claim_images(self, inst, cand, ctx):
        return self._rendered(inst, ctx)

    def mcq_images(self, inst, cands, ctx):
        return self._rendered(inst, ctx)

    def mcq_stem(self, inst):
        row, col = inst.source["cell"]
        return f"What is the object in cell ({row},{col})?"

    def open_prompt(self, inst):
        row, col = inst.source["cell"]
        return f"What is the object in row {row}, column {col} of the image? Reply with one word."

    def score_open(self, inst, raw):
        answer = _match_label(raw, inst.source["categories"])
        return answer == inst.ground_truth, {"answer": answer}


class SyntheticAdapter(TaskAdapter):
    """Plain labelled options, used for simulator sweeps."""

    kind = "synthetic"

    def shortlist(self, inst, ctx):
        return [Candidate(c.id, f"Option {c.payload} is the correct answer. Answer with True or False.", c.payload)
                for c in native_label_alphabet(inst.source["options"])]

    def is_correct(self, inst, cand):
        return cand.payload == inst.ground_truth
