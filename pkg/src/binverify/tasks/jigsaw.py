"""Jigsaw completion as a three-way choice with an explicit reject option."""

from __future__ import annotations

from typing import Sequence

from ..errors import InvalidInputError
from ..quantize import TILES, Alphabet, Candidate
from .base import TaskAdapter, TaskInstance

REJECT = "C"
JIGSAW_STEM = "Which image correctly completes the missing part of the first image?"
OPTION_TEXT = {"A": "Image A", "B": "Image B", "C": "Neither image is correct"}
CLAIMS = {
    "A": "Image A correctly completes the missing part of the first image. Answer with True or False.",
    "B": "Image B correctly completes the missing part of the first image. Answer with True or False.",
    "C": ("Neither image A nor image B correctly completes the missing part of the first image. "
          "Answer with True or False."),
}


def jigsaw_options(tiles: Sequence) -> Alphabet:
    """Options A (first tile), B (second tile) and C (reject) with their claims."""
    if len(tiles) != 2:
        raise InvalidInputError(f"jigsaw needs exactly two tiles, got {len(tiles)}")
    members = (
        Candidate("A", CLAIMS["A"], 0),
        Candidate("B", CLAIMS["B"], 1),
        Candidate("C", CLAIMS["C"], None),
    )
    return Alphabet(TILES, members)


def answer_letter(ground_truth) -> str:
    """Normalise a ground truth given as 'A'/'B'/'C', 0/1, or None/'reject'."""
    if ground_truth in (None, "reject", "neither", REJECT):
        return REJECT
    if ground_truth in ("A", 0):
        return "A"
    if ground_truth in ("B", 1):
        return "B"
    raise InvalidInputError(f"bad jigsaw ground truth {ground_truth!r}")


class JigsawAdapter(TaskAdapter):
    kind = "jigsaw"

    def shortlist(self, inst: TaskInstance, ctx):
        return list(jigsaw_options(inst.source["tiles"]))

    def is_correct(self, inst, cand):
        return cand.id == answer_letter(inst.ground_truth)

    def mcq_stem(self, inst):
        return JIGSAW_STEM

    def mcq_options(self, inst, cands):
        return [OPTION_TEXT[c.id] for c in cands]

    def open_prompt(self, inst):
        return JIGSAW_STEM + " Reply with A, B, or 'neither'."

    def score_open(self, inst, raw):
        low = raw.strip().lower()
        if "neither" in low:
            answer = REJECT
        elif low[:1] in ("a", "b") and (len(low) == 1 or not low[1].isalpha()):
            answer = low[0].upper()
        else:
            answer = None
        return answer == answer_letter(inst.ground_truth), {"answer": answer}
