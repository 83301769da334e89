"""Referring expression grounding: detector shortlist, one highlighted box per claim, IoU scoring."""

from __future__ import annotations

import json
import re
from fractions import Fraction
from pathlib import Path
from typing import Sequence

from ..errors import InvalidInputError
from ..quantize import Candidate, Detection, shortlist_detections
from ..raster import draw_boxes, highlight_box
from .base import TaskAdapter, TaskContext, TaskInstance

REC_TEMPLATE = ("Does the object in the highlighted bounding box match the referring description? "
                "Answer with True or False.")

REC_MCQ_STEM = "Which numbered bounding box contains the object matching the referring description?"

OPEN_TEMPLATE = ("Locate the object matching the referring description. Reply with its bounding box "
                 "as [x_min, y_min, x_max, y_max] in pixel coordinates.")


def rec_claim(expression: str) -> str:
    """Fixed True/False question with the referring expression appended verbatim."""
    if not expression or not expression.strip():
        raise InvalidInputError("referring expression is empty")
    return f"{REC_TEMPLATE}\nReferring description: {expression}"


def box_area(box) -> int:
    x0, y0, x1, y1 = box
    return max(0, x1 - x0) * max(0, y1 - y0)


def iou(a, b) -> Fraction:
    """Exact IoU of two half-open pixel rectangles (pass ints or Fractions)."""
    ix = max(0, min(a[2], b[2]) - max(a[0], b[0]))
    iy = max(0, min(a[3], b[3]) - max(a[1], b[1]))
    inter = ix * iy
    union = box_area(a) + box_area(b) - inter
    if union <= 0:
        return Fraction(0)
    return Fraction(inter, union)


def _exact_box(box) -> tuple[Fraction, ...]:
    if len(box) != 4:
        raise InvalidInputError(f"box needs 4 coordinates, got {box!r}")
    return tuple(Fraction(v) for v in box)  # exact for ints and floats


def score_rec(predicted, gt) -> tuple[Fraction, bool]:
    """IoU with the ground-truth box and whether it strictly exceeds 1/2."""
    gt = _exact_box(gt)
    if box_area(gt) <= 0:
        raise InvalidInputError(f"degenerate ground-truth box {gt}")
    if predicted is None:
        return Fraction(0), False
    value = iou(_exact_box(predicted), gt)
    return value, value > Fraction(1, 2)


def load_detections(path: str | Path) -> list[Detection]:
    """Detections from a JSON file: a list, or an object with a ``detections`` list."""
    data = json.loads(Path(path).read_text(encoding="utf-8"))
    if isinstance(data, dict):
        data = data["detections"]
    return [Detection.from_dict(d) for d in data]


_NUM = re.compile(r"-?\d+(?:\.\d+)?")


def parse_open_box(raw: str):
    nums = [float(v) for v in _NUM.findall(raw)]
    if len(nums) < 4:
        return None
    x0, y0, x1, y1 = nums[:4]
    if x1 <= x0 or y1 <= y0:
        return None
    return tuple(int(round(v)) for v in (x0, y0, x1, y1))


class RecAdapter(TaskAdapter):
    kind = "rec"

    def shortlist(self, inst: TaskInstance, ctx: TaskContext) -> list[Candidate]:
        alphabet = shortlist_detections(inst.source["detections"], ctx.shortlist)
        claim = rec_claim(inst.query)
        return [Candidate(c.id, claim, c.payload) for c in alphabet]

    def is_correct(self, inst: TaskInstance, cand: Candidate) -> bool:
        return score_rec(cand.payload, inst.ground_truth)[1]

    def claim_images(self, inst, cand, ctx):
        return tuple(highlight_box(img, cand.payload, ctx.style) for img in ctx.images(inst))

    def mcq_stem(self, inst: TaskInstance) -> str:
        return f"{REC_MCQ_STEM}\nReferring description: {inst.query}"

    def mcq_options(self, inst: TaskInstance, cands: Sequence[Candidate]) -> list[str]:
        return [f"box {i}" for i in range(1, len(cands) + 1)]

    def mcq_images(self, inst, cands, ctx):
        return tuple(draw_boxes(img, [c.payload for c in cands], ctx.style) for img in ctx.images(inst))

    def open_prompt(self, inst: TaskInstance) -> str:
        return f"{OPEN_TEMPLATE}\nReferring description: {inst.query}"

    def score_open(self, inst: TaskInstance, raw: str) -> tuple[bool, dict]:
        box = parse_open_box(raw)
        value, ok = score_rec(box, inst.ground_truth)
        return ok, {"iou": float(value), "box": box}
