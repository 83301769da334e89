from __future__ import annotations

import threading
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

from ..errors import ConfigurationError
from ..quantize import Candidate, ShortlistConfig
from ..raster import OverlayStyle, RasterImage, load_png
from ..verifiers import DEFAULT_TEMPERATURE, ClaimQuery, McqQuery

KINDS = ("rec", "spatial-map", "spatial-grid", "spatial-maze", "jigsaw", "synthetic")


@dataclass
class TaskInstance:
    """One benchmark item.

    ``source`` holds whatever the task quantizes from (detections, grid and
    cell, labels, tiles, maze); ``ground_truth`` holds the scoring target.
    Image paths are already resolved against the manifest location.
    """

    kind: str
    id: str
    query: str = ""
    images: tuple[str, ...] = ()
    source: dict[str, Any] = field(default_factory=dict)
    ground_truth: Any = None


@dataclass
class TaskContext:
    """Per-run settings handed to adapters."""

    shortlist: ShortlistConfig = field(default_factory=ShortlistConfig)
    style: OverlayStyle = field(default_factory=OverlayStyle)
    certainty_policy: bool = False
    temperature: float = DEFAULT_TEMPERATURE
    repeat: int = 0
    render: bool = True
    _images: dict = field(default_factory=dict, repr=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False)

    def image(self, path: str) -> RasterImage:
        with self._lock:
            if path not in self._images:
                self._images[path] = load_png(path)
            return self._images[path]

    def images(self, inst: TaskInstance) -> tuple[RasterImage, ...]:
        if not self.render:
            return ()
        return tuple(self.image(p) for p in inst.images)


class TaskAdapter:
    """Binds one task family to the generic shortlist / verify / resolve loop."""

    kind = ""

    def shortlist(self, inst: TaskInstance, ctx: TaskContext) -> list[Candidate]:
        raise NotImplementedError

    def is_correct(self, inst: TaskInstance, cand: Candidate) -> bool:
        raise NotImplementedError

    def claim_query(self, inst: TaskInstance, cand: Candidate, round: int, ctx: TaskContext) -> ClaimQuery:
        return ClaimQuery(cand.claim, images=self.claim_images(inst, cand, ctx),
                          certainty_policy=ctx.certainty_policy, temperature=ctx.temperature,
                          key=f"{inst.id}/{cand.id}@{round}", repeat=ctx.repeat,
                          truth=self.is_correct(inst, cand))

    def claim_images(self, inst: TaskInstance, cand: Candidate, ctx: TaskContext) -> tuple[RasterImage, ...]:
        return ctx.images(inst)

    def mcq_stem(self, inst: TaskInstance) -> str:
        return inst.query or "Which option is correct?"

    def mcq_options(self, inst: TaskInstance, cands: Sequence[Candidate]) -> list[str]:
        return [str(c.payload) for c in cands]

    def mcq_images(self, inst: TaskInstance, cands: Sequence[Candidate], ctx: TaskContext) -> tuple[RasterImage, ...]:
        return ctx.images(inst)

    def mcq_query(self, inst: TaskInstance, cands: Sequence[Candidate], ctx: TaskContext,
                  temperature: float | None = None, key_suffix: str = "") -> McqQuery:
        answer = next((i for i, c in enumerate(cands) if self.is_correct(inst, c)), None)
        ids = ",".join(c.id for c in cands)
        return McqQuery(self.mcq_stem(inst), tuple(self.mcq_options(inst, cands)),
                        images=self.mcq_images(inst, cands, ctx),
                        temperature=ctx.temperature if temperature is None else temperature,
                        key=f"{inst.id}/mcq[{ids}]{key_suffix}", repeat=ctx.repeat, answer_index=answer)

    def open_prompt(self, inst: TaskInstance) -> str:
        raise ConfigurationError(f"open-ended mode is not defined for {self.kind!r} items")

    def score_open(self, inst: TaskInstance, raw: str) -> tuple[bool, dict]:
        raise ConfigurationError(f"open-ended mode is not defined for {self.kind!r} items")


def resolve_path(base: Path, p: str) -> str:
    path = Path(p)
    return str(path if path.is_absolute() else base / path)
