"""Candidate shortlists: detector boxes, grid-cell alphabets and native label sets."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

from .errors import InvalidInputError

BOXES, CELLS, LABELS, TILES = "boxes", "cells", "labels", "tiles"


@dataclass(frozen=True)
class Candidate:
    """One verifiable hypothesis.

    ``payload`` is the visual unit the claim is about: a pixel box
    ``(x0, y0, x1, y1)``, a 1-based ``(row, col)`` cell, a tile index or a label.
    """

    id: str
    claim: str
    payload: Any = None

    def __post_init__(self):
        if not self.id:
            raise InvalidInputError("candidate id must be non-empty")
        if not self.claim or not self.claim.strip():
            raise InvalidInputError(f"candidate {self.id!r} has an empty claim")


@dataclass(frozen=True)
class Alphabet:
    kind: str
    members: tuple[Candidate, ...]
    no_candidate: bool = False

    def __post_init__(self):
        ids = [c.id for c in self.members]
        if len(set(ids)) != len(ids):
            raise InvalidInputError(f"duplicate candidate ids in alphabet: {ids}")
        if not self.members and not self.no_candidate:
            raise InvalidInputError("empty alphabet must carry the no_candidate flag")

    def __len__(self):
        return len(self.members)

    def __iter__(self):
        return iter(self.members)

    @property
    def ids(self) -> list[str]:
        return [c.id for c in self.members]


@dataclass(frozen=True)
class Detection:
    box: tuple[float, float, float, float]
    score: float
    label: str = ""

    def __post_init__(self):
        x0, y0, x1, y1 = self.box
        if not (x0 < x1 and y0 < y1):
            raise InvalidInputError(f"degenerate detection box {self.box}")
        if not 0.0 <= self.score <= 1.0:
            raise InvalidInputError(f"detection score {self.score} outside [0, 1]")
        object.__setattr__(self, "box", tuple(self.box))

    @classmethod
    def from_dict(cls, d: dict) -> Detection:
        return cls(box=tuple(d["box"]), score=float(d["score"]), label=str(d.get("label", "")))


@dataclass(frozen=True)
class ShortlistConfig:
    tau: float = 0.25
    max_candidates: int | None = None

    def __post_init__(self):
        if not 0.0 <= self.tau <= 1.0:
            raise InvalidInputError(f"tau must lie in [0, 1], got {self.tau}")
        if self.max_candidates is not None and self.max_candidates < 1:
            raise InvalidInputError("max_candidates must be >= 1 when given")


@dataclass(frozen=True)
class GridSpec:
    rows: int
    cols: int
    image_width: int
    image_height: int

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise InvalidInputError(f"grid must have >= 1 row and column, got {self.rows}x{self.cols}")
        if self.image_width < 1 or self.image_height < 1:
            raise InvalidInputError(f"zero-dimension image {self.image_width}x{self.image_height}")
        if self.cols > self.image_width or self.rows > self.image_height:
            raise InvalidInputError("more grid cells than pixels along an axis")


def grid_boundaries(spec: GridSpec) -> tuple[list[int], list[int]]:
    """Column and row boundaries; boundary k sits at floor(k * extent / n)."""
    xs = [k * spec.image_width // spec.cols for k in range(spec.cols + 1)]
    ys = [k * spec.image_height // spec.rows for k in range(spec.rows + 1)]
    return xs, ys


def cell_rect(spec: GridSpec, row: int, col: int) -> tuple[int, int, int, int]:
    """Half-open pixel rectangle ``(x0, y0, x1, y1)`` of a 1-based cell."""
    if not (1 <= row <= spec.rows and 1 <= col <= spec.cols):
        raise InvalidInputError(f"cell ({row},{col}) outside a {spec.rows}x{spec.cols} grid")
    xs, ys = grid_boundaries(spec)
    return xs[col - 1], ys[row - 1], xs[col], ys[row]


def shortlist_detections(detections: Sequence[Detection], config: ShortlistConfig = ShortlistConfig()) -> Alphabet:
    """Keep detections scoring at least ``tau``, best first, indexed a1..am.

    Equal scores keep their input order. An empty result is legal and comes
    back with ``no_candidate`` set.
    """
    kept = [d for d in detections if d.score >= config.tau]
    kept.sort(key=lambda d: -d.score)  # stable
    if config.max_candidates is not None:
        kept = kept[: config.max_candidates]
    members = tuple(
        Candidate(id=f"a{i}", claim=f"box a{i} at {_fmt_box(d.box)}", payload=d.box)
        for i, d in enumerate(kept, start=1)
    )
    return Alphabet(BOXES, members, no_candidate=not members)


def _fmt_box(box) -> str:
    return "(" + ", ".join(f"{v:g}" for v in box) + ")"


def make_grid_alphabet(spec: GridSpec) -> Alphabet:
    members = []
    for r in range(1, spec.rows + 1):
        for c in range(1, spec.cols + 1):
            members.append(Candidate(id=f"r{r}c{c}", claim=f"cell ({r},{c})", payload=(r, c)))
    return Alphabet(CELLS, tuple(members))


def native_label_alphabet(labels: Sequence[str]) -> Alphabet:
    labels = list(labels)
    if not labels:
        raise InvalidInputError("label set is empty")
    if len(set(labels)) != len(labels):
        raise InvalidInputError(f"duplicate labels: {labels}")
    return Alphabet(LABELS, tuple(Candidate(id=str(lab), claim=str(lab), payload=lab) for lab in labels))


CLASS_EXTRACTION_TEMPLATE = (
    "Referring expression: \"{expression}\"\n"
    "Name the coarse object category of the object this expression refers to "
    "(for example: person, cat, car, mug). Reply with a single lowercase noun and nothing else."
)


def build_class_extraction_prompt(expression: str) -> str:
    if not expression or not expression.strip():
        raise InvalidInputError("referring expression is empty")
    return CLASS_EXTRACTION_TEMPLATE.format(expression=expression)


def parse_class_reply(raw: str) -> str:
    """First alphabetic token of a class-extraction reply, lowercased."""
    for tok in raw.replace("\n", " ").split():
        word = "".join(ch for ch in tok if ch.isalpha() or ch in "-_")
        if word:
            return word.lower()
    raise InvalidInputError(f"no class name in reply {raw!r}")
