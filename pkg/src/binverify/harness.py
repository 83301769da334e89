"""Run orchestration: manifests in, per-item records and aggregate reports out.

Modes:

* ``open``    - the task question asked directly, free-form reply parsed;
* ``mcq``     - one single-shot multiple-choice query over the shortlist;
* ``mcq-mv``  - ``votes`` MCQ repeats at the voting temperature, plurality wins
                (ties go to the lowest option index);
* ``binary``  - per-candidate True/False verification with deterministic resolution.

Maze items have no shortlist: ``open`` sends the path prompt with the plain
maze, ``mcq`` adds the grid overlay, and ``binary`` adds the per-step checks.
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import logging
import math
import re
import threading
import time
from collections import Counter
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Sequence

import numpy as np
from scipy import stats

from .errors import BackendError, ConfigurationError, InvalidInputError, ManifestError, UnparseableAnswerError
from .quantize import Detection, GridSpec, ShortlistConfig
from .raster import OverlayStyle, draw_grid
from .resolution import Branch, ResolutionConfig, run_protocol
from .tasks import ADAPTERS, KINDS, TaskContext, TaskInstance
from .tasks.base import resolve_path
from .tasks.jigsaw import answer_letter
from .tasks.maze import MazeModel, render_maze
from .tasks.rec import load_detections, score_rec
from .tasks.spatial import DIRECTIONS
from .verifiers import DEFAULT_TEMPERATURE, VOTE_TEMPERATURE, ClaimQuery, McqQuery, Verdict

log = logging.getLogger(__name__)

MODES = ("open", "mcq", "mcq-mv", "binary")
CI_METHOD = ("Student-t interval over per-item accuracy (mean over that item's repeats): "
             "mean +/- t(0.975, n-1) * s / sqrt(n), n = number of items")


# --------------------------------------------------------------------------
# manifests


def _require(obj: dict, key: str, line: int):
    if key not in obj or obj[key] is None:
        raise ManifestError(f"missing required field {key!r}", line)
    return obj[key]


def _parse_instance(obj: dict, base: Path, line: int) -> TaskInstance:
    kind = _require(obj, "kind", line)
    if kind not in KINDS:
        raise ManifestError(f"unknown task kind {kind!r}", line)
    item_id = str(_require(obj, "id", line))
    images = tuple(resolve_path(base, p) for p in ([obj["image"]] if obj.get("image") else []))
    try:
        if kind == "rec":
            expression = _require(obj, "expression", line)
            gt = _require(obj, "gt_box", line)
            if len(gt) != 4 or not (gt[0] < gt[2] and gt[1] < gt[3]):
                raise ManifestError(f"degenerate gt_box {gt}", line)
            if "detections_file" in obj:
                dets = load_detections(resolve_path(base, obj["detections_file"]))
            else:
                dets = [Detection.from_dict(d) for d in _require(obj, "detections", line)]
            return TaskInstance(kind, item_id, expression, images, {"detections": dets}, tuple(gt))
        if kind == "spatial-map":
            answer = _require(obj, "answer", line)
            if answer not in DIRECTIONS:
                raise ManifestError(f"answer must be one of {DIRECTIONS}", line)
            a, b = _require(obj, "a", line), _require(obj, "b", line)
            return TaskInstance(kind, item_id, obj.get("question", ""), images, {"a": a, "b": b}, answer)
        if kind == "spatial-grid":
            cats = list(_require(obj, "categories", line))
            answer = _require(obj, "answer", line)
            if answer not in cats:
                raise ManifestError("answer is not one of the categories", line)
            cell = tuple(_require(obj, "cell", line))
            grid = tuple(obj.get("grid", (5, 5)))
            if not (1 <= cell[0] <= grid[0] and 1 <= cell[1] <= grid[1]):
                raise ManifestError(f"cell {cell} outside grid {grid}", line)
            return TaskInstance(kind, item_id, obj.get("question", ""), images,
                                {"cell": cell, "grid": grid, "categories": cats}, answer)
        if kind == "spatial-maze":
            if "maze_file" in obj:
                maze = MazeModel.load(resolve_path(base, obj["maze_file"]))
            else:
                maze = MazeModel.parse(_require(obj, "maze", line))
            return TaskInstance(kind, item_id, obj.get("question", ""), images, {"maze": maze}, "valid-path")
        if kind == "jigsaw":
            tiles = [resolve_path(base, p) for p in _require(obj, "tiles", line)]
            if len(tiles) != 2:
                raise ManifestError("jigsaw needs exactly two tiles", line)
            if "answer" not in obj:
                raise ManifestError("missing required field 'answer'", line)
            answer = answer_letter(obj["answer"])
            return TaskInstance(kind, item_id, obj.get("question", ""), images + tuple(tiles),
                                {"tiles": tiles}, answer)
        # synthetic
        options = [str(o) for o in _require(obj, "options", line)]
        answer = str(_require(obj, "answer", line))
        if answer not in options:
            raise ManifestError("answer is not one of the options", line)
        return TaskInstance(kind, item_id, obj.get("question", ""), images, {"options": options}, answer)
    except ManifestError:
        raise
    except (InvalidInputError, KeyError, TypeError, ValueError, OSError) as exc:
        raise ManifestError(str(exc), line) from exc


def load_manifest(path: str | Path, *, fail_fast: bool = True,
                  errors: list[ManifestError] | None = None) -> list[TaskInstance]:
    """Read a line-delimited JSON manifest holding items of a single task kind.

    Paths inside the manifest are relative to its directory. With
    ``fail_fast=False`` bad lines are skipped and their errors appended to
    ``errors``.
    """
    path = Path(path)
    base = path.parent
    out: list[TaskInstance] = []
    kind = None
    with open(path, encoding="utf-8") as f:
        for lineno, text in enumerate(f, start=1):
            if not text.strip():
                continue
            try:
                try:
                    obj = json.loads(text)
                except json.JSONDecodeError as exc:
                    raise ManifestError(f"invalid JSON: {exc.msg}", lineno) from exc
                if not isinstance(obj, dict):
                    raise ManifestError("each line must be a JSON object", lineno)
                inst = _parse_instance(obj, base, lineno)
                if kind is None:
                    kind = inst.kind
                elif inst.kind != kind:
                    raise ManifestError(f"manifest mixes task kinds ({kind!r} and {inst.kind!r})", lineno)
            except ManifestError as exc:
                if fail_fast:
                    raise
                if errors is not None:
                    errors.append(exc)
                log.warning("%s: %s", path, exc)
                continue
            out.append(inst)
    return out


# --------------------------------------------------------------------------
# configuration and records


@dataclass
class RunConfig:
    mode: str = "binary"
    votes: int = 3
    resolution: ResolutionConfig = field(default_factory=ResolutionConfig)
    shortlist: ShortlistConfig = field(default_factory=ShortlistConfig)
    style: OverlayStyle = field(default_factory=OverlayStyle)
    temperature: float = DEFAULT_TEMPERATURE
    vote_temperature: float = VOTE_TEMPERATURE
    repeats: int = 1
    parallelism: int = 1
    seed: int = 0
    render: bool = True

    def __post_init__(self):
        m = re.fullmatch(r"mcq-mv\((\d+)\)", self.mode)
        if m:
            self.mode, self.votes = "mcq-mv", int(m.group(1))
        if self.mode not in MODES:
            raise InvalidInputError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        if self.mode == "mcq-mv" and (self.votes < 3 or self.votes % 2 == 0):
            raise InvalidInputError("majority vote needs an odd number of votes >= 3")
        if self.repeats < 1:
            raise InvalidInputError("repeats must be >= 1")
        if self.parallelism < 1:
            raise InvalidInputError("parallelism must be >= 1")

    def to_dict(self) -> dict:
        return {
            "mode": self.mode, "votes": self.votes if self.mode == "mcq-mv" else None,
            "max_retries": self.resolution.max_retries, "certainty_policy": self.resolution.certainty_policy,
            "tau": self.shortlist.tau, "max_candidates": self.shortlist.max_candidates,
            "temperature": self.temperature, "vote_temperature": self.vote_temperature,
            "repeats": self.repeats, "seed": self.seed,
        }


SCORED, ERRORED, NO_CANDIDATE = "scored", "errored", "no-candidate"


@dataclass
class ItemRecord:
    item_id: str
    repeat: int = 0
    status: str = SCORED
    correct: bool = False
    chosen: str | None = None
    pattern: str = ""  # first-round verdicts, e.g. "TFFT"
    branch: str | None = None
    candidates_before: int = 0
    candidates_after: int = 0
    claim_queries: int = 0
    mcq_queries: int = 0
    other_queries: int = 0
    parse_failures: int = 0
    votes: list[str] | None = None
    vote_tie: bool = False
    detail: dict = field(default_factory=dict)
    error: str | None = None
    latency: float = 0.0
    interactions: list[dict] = field(default_factory=list, repr=False)

    def to_dict(self, include_timing: bool = False) -> dict:
        d = dataclasses.asdict(self)
        d.pop("interactions")
        if not include_timing:
            d.pop("latency")
        return d

    @classmethod
    def from_dict(cls, d: dict) -> ItemRecord:
        names = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in names})


class _Recorder:
    """Wraps a verifier and keeps every exchange of one item, in call order."""

    def __init__(self, inner):
        self.inner = inner
        self.events: list[dict] = []
        self._lock = threading.Lock()

    def _add(self, ev):
        with self._lock:
            self.events.append(ev)

    def verify(self, q: ClaimQuery):
        verdict, raw = self.inner.verify(q)
        self._add({"kind": "claim", "key": q.key, "prompt": q.prompt, "raw": raw, "verdict": verdict.value,
                   "temperature": q.temperature, "repeat": q.repeat})
        return verdict, raw

    def answer_mcq(self, q: McqQuery):
        try:
            idx, raw = self.inner.answer_mcq(q)
        except UnparseableAnswerError as exc:
            self._add({"kind": "mcq", "key": q.key, "prompt": q.prompt, "raw": exc.raw, "choice": None,
                       "temperature": q.temperature, "repeat": q.repeat})
            raise
        self._add({"kind": "mcq", "key": q.key, "prompt": q.prompt, "raw": raw, "choice": idx,
                   "temperature": q.temperature, "repeat": q.repeat})
        return idx, raw

    def complete(self, prompt, images=(), temperature=DEFAULT_TEMPERATURE, key=None, repeat=0):
        raw = self.inner.complete(prompt, images, temperature, key=key, repeat=repeat)
        self._add({"kind": "complete", "key": key, "prompt": prompt, "raw": raw, "temperature": temperature,
                   "repeat": repeat})
        return raw


def plurality(choices: Sequence[int], n_options: int) -> tuple[int, bool]:
    """Most frequent choice, lowest index on ties; also reports whether a tie occurred."""
    counts = Counter(choices)
    best = max(counts.values())
    winners = sorted(i for i in range(n_options) if counts.get(i, 0) == best)
    return winners[0], len(winners) > 1


# --------------------------------------------------------------------------
# running


def _run_maze(inst, rec: ItemRecord, config: RunConfig, ctx: TaskContext, verifier) -> None:
    adapter = ADAPTERS["spatial-maze"]
    if config.mode == "mcq-mv":
        raise ConfigurationError("majority voting is not defined for maze items")
    with_grid = config.mode in ("mcq", "binary")
    with_checks = config.mode == "binary"
    images = ()
    if ctx.render:
        maze = adapter.maze(inst)
        img = ctx.image(inst.images[0]) if inst.images else render_maze(maze, 20)
        if with_grid:
            spec = GridSpec(maze.n_rows, maze.n_cols, img.width, img.height)
            img = draw_grid(img, spec, dataclasses.replace(ctx.style, line_thickness=1))
        images = (img,)
    raw = verifier.complete(adapter.prompt(inst, with_checks), images, ctx.temperature,
                            key=f"{inst.id}/path", repeat=ctx.repeat)
    rec.other_queries = 1
    rec.correct, rec.detail = adapter.score(inst, raw, with_checks)
    rec.parse_failures = int(bool(rec.detail.get("parse_failure")))


def run_item(inst: TaskInstance, repeat: int, config: RunConfig, verifier, ctx: TaskContext) -> ItemRecord:
    adapter = ADAPTERS[inst.kind]
    ctx = dataclasses.replace(ctx, repeat=repeat)
    rec = ItemRecord(inst.id, repeat)
    recorder = _Recorder(verifier)
    t0 = time.perf_counter()
    try:
        if inst.kind == "spatial-maze":
            _run_maze(inst, rec, config, ctx, recorder)
        elif config.mode == "open":
            raw = recorder.complete(adapter.open_prompt(inst), ctx.images(inst), ctx.temperature,
                                    key=f"{inst.id}/open", repeat=repeat)
            rec.other_queries = 1
            rec.correct, rec.detail = adapter.score_open(inst, raw)
        else:
            cands = adapter.shortlist(inst, ctx)
            rec.candidates_before = len(cands)
            if not cands:
                rec.status = NO_CANDIDATE
            elif config.mode == "binary":
                res = run_protocol(
                    cands, recorder, config.resolution,
                    claim_query=lambda c, r: adapter.claim_query(inst, c, r, ctx),
                    mcq_query=lambda cs: adapter.mcq_query(inst, cs, ctx),
                    parallelism=config.parallelism if config.parallelism > 1 else 1,
                )
                by_id = {c.id: c for c in cands}
                rec.chosen = res.chosen
                rec.branch = res.branch.value
                rec.pattern = "".join("T" if v else "F" for _, v in res.first_pattern.verdicts)
                rec.candidates_after = res.candidates_after
                rec.claim_queries, rec.mcq_queries = res.claim_queries, res.mcq_queries
                rec.parse_failures = sum(len(ev.parse_failures) for ev in res.trace)
                rec.correct = adapter.is_correct(inst, by_id[res.chosen])
            else:
                n_votes = config.votes if config.mode == "mcq-mv" else 1
                temp = config.vote_temperature if config.mode == "mcq-mv" else ctx.temperature
                choices = []
                for j in range(n_votes):
                    q = adapter.mcq_query(inst, cands, ctx, temperature=temp,
                                          key_suffix=f"#v{j}" if n_votes > 1 else "")
                    try:
                        idx, _ = recorder.answer_mcq(q)
                    except UnparseableAnswerError:
                        rec.parse_failures += 1
                        idx = None
                    rec.mcq_queries += 1
                    if idx is not None:
                        choices.append(idx)
                if choices:
                    idx, rec.vote_tie = plurality(choices, len(cands))
                    rec.chosen = cands[idx].id
                    rec.correct = adapter.is_correct(inst, cands[idx])
                if n_votes > 1:
                    rec.votes = [cands[i].id for i in choices]
                rec.candidates_after = len(cands)
            if inst.kind == "rec" and rec.chosen is not None:
                box = next(c.payload for c in cands if c.id == rec.chosen)
                rec.detail["iou"] = float(score_rec(box, inst.ground_truth)[0])
    except BackendError as exc:
        rec.status, rec.error, rec.correct = ERRORED, str(exc), False
    rec.latency = time.perf_counter() - t0
    rec.interactions = recorder.events
    return rec


def run(config: RunConfig, instances: Sequence[TaskInstance], verifier, *,
        log_path: str | Path | None = None, paired: Sequence[ItemRecord] | None = None) -> RunReport:
    """Execute ``config.mode`` over every (item, repeat) and aggregate.

    Items run on a bounded thread pool; records come back in input order.
    When ``log_path`` is set every verifier exchange is written there as JSON
    lines.
    """
    kinds = {inst.kind for inst in instances}
    if len(kinds) > 1:
        raise InvalidInputError(f"instances mix task kinds {sorted(kinds)}")
    ctx = TaskContext(shortlist=config.shortlist, style=config.style,
                      certainty_policy=config.resolution.certainty_policy,
                      temperature=config.temperature, render=config.render)
    jobs = [(inst, r) for inst in instances for r in range(config.repeats)]
    if config.parallelism > 1:
        with ThreadPoolExecutor(max_workers=config.parallelism) as pool:
            records = list(pool.map(lambda j: run_item(j[0], j[1], config, verifier, ctx), jobs))
    else:
        records = [run_item(inst, r, config, verifier, ctx) for inst, r in jobs]
    if log_path is not None:
        p = Path(log_path)
        p.parent.mkdir(parents=True, exist_ok=True)
        with open(p, "w", encoding="utf-8") as f:
            for rec in records:
                for ev in rec.interactions:
                    f.write(json.dumps({"item": rec.item_id, **ev}, sort_keys=True) + "\n")
    report = RunReport(config.to_dict(), records, kind=next(iter(kinds), ""))
    report.aggregates = aggregate(records, paired=paired)
    return report


# --------------------------------------------------------------------------
# aggregation


def t_interval(values: Sequence[float], confidence: float = 0.95) -> tuple[float, float]:
    """Student-t confidence interval for the mean of ``values``."""
    x = np.asarray(values, dtype=float)
    n = len(x)
    mean = float(x.mean())
    if n < 2:
        return mean, mean
    half = float(stats.t.ppf(0.5 + confidence / 2, n - 1) * x.std(ddof=1) / math.sqrt(n))
    return mean - half, mean + half


def aggregate(records: Sequence[ItemRecord], paired: Sequence[ItemRecord] | None = None,
              confidence: float = 0.95) -> dict:
    """Accuracy, counts, per-branch breakdown and a t-based CI.

    Errored items are excluded from accuracy. Items without a candidate count
    as incorrect. Branch rows are conditioned on the first-round pattern;
    ``frequency`` is relative to all scored items, so branch frequencies plus
    the no-candidate fraction sum to 1. With ``paired`` (same items, another
    mode) each branch also reports that mode's accuracy on the same items.
    """
    counted = len(records)
    errored = sum(r.status == ERRORED for r in records)
    scored = [r for r in records if r.status != ERRORED]
    n = len(scored)
    correct = sum(r.correct for r in scored)
    no_cand = sum(r.status == NO_CANDIDATE for r in scored)
    out: dict[str, Any] = {
        "counted": counted, "scored": n, "correct": correct, "incorrect": n - correct - no_cand,
        "errored": errored, "no_candidate": no_cand,
        "accuracy": correct / n if n else float("nan"),
        "no_candidate_fraction": no_cand / n if n else float("nan"),
        "queries": {"claim": sum(r.claim_queries for r in records), "mcq": sum(r.mcq_queries for r in records),
                    "other": sum(r.other_queries for r in records)},
        "parse_failures": sum(r.parse_failures for r in records),
        "vote_ties": sum(r.vote_tie for r in records),
    }

    paired_by_key = {(p.item_id, p.repeat): p for p in paired} if paired is not None else None
    branches = {}
    for b in Branch:
        rows = [r for r in scored if r.branch == b.value]
        if not rows:
            continue
        entry = {
            "count": len(rows),
            "frequency": len(rows) / n,
            "candidates_before": float(np.mean([r.candidates_before for r in rows])),
            "candidates_after": float(np.mean([r.candidates_after for r in rows])),
            "accuracy": sum(r.correct for r in rows) / len(rows),
        }
        if paired_by_key is not None:
            matched = [paired_by_key[(r.item_id, r.repeat)] for r in rows if (r.item_id, r.repeat) in paired_by_key]
            matched = [m for m in matched if m.status != ERRORED]
            entry["paired_accuracy"] = sum(m.correct for m in matched) / len(matched) if matched else None
            entry["paired_count"] = len(matched)
        branches[b.value] = entry
    out["branches"] = branches

    per_item: dict[str, list[bool]] = {}
    for r in scored:
        per_item.setdefault(r.item_id, []).append(r.correct)
    means = [float(np.mean(v)) for v in per_item.values()]
    if means:
        lo, hi = t_interval(means, confidence)
        out["ci"] = {"level": confidence, "low": lo, "high": hi, "items": len(means), "method": CI_METHOD}
    return out


@dataclass
class RunReport:
    config: dict
    records: list[ItemRecord]
    aggregates: dict = field(default_factory=dict)
    kind: str = ""

    @property
    def accuracy(self) -> float:
        return self.aggregates["accuracy"]

    def to_dict(self, include_timing: bool = False) -> dict:
        return {"kind": self.kind, "config": self.config, "aggregates": self.aggregates,
                "records": [r.to_dict(include_timing) for r in self.records]}

    def to_json(self, include_timing: bool = False) -> str:
        return json.dumps(self.to_dict(include_timing), sort_keys=True, indent=2) + "\n"

    def save(self, path: str | Path, include_timing: bool = False) -> None:
        Path(path).write_text(self.to_json(include_timing), encoding="utf-8")

    @classmethod
    def load(cls, path: str | Path) -> RunReport:
        d = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(d.get("config", {}), [ItemRecord.from_dict(r) for r in d["records"]],
                   d.get("aggregates", {}), d.get("kind", ""))

    def breakdown_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["branch", "count", "frequency", "candidates_before", "candidates_after", "accuracy",
                    "paired_accuracy"])
        agg = self.aggregates
        for name, e in agg.get("branches", {}).items():
            w.writerow([name, e["count"], f"{e['frequency']:.6f}", f"{e['candidates_before']:.4f}",
                        f"{e['candidates_after']:.4f}", f"{e['accuracy']:.6f}",
                        "" if e.get("paired_accuracy") is None else f"{e['paired_accuracy']:.6f}"])
        if agg.get("no_candidate"):
            w.writerow(["no-candidate", agg["no_candidate"], f"{agg['no_candidate_fraction']:.6f}", "", "",
                        "0.000000", ""])
        w.writerow(["overall", agg["scored"], "1.000000", "", "", f"{agg['accuracy']:.6f}", ""])
        return buf.getvalue()

    def summary(self) -> str:
        a = self.aggregates
        lines = [f"{self.kind or 'run'} [{self.config.get('mode')}]: accuracy {100 * a['accuracy']:.1f}% "
                 f"({a['correct']}/{a['scored']} scored, {a['errored']} errored, {a['no_candidate']} no-candidate)"]
        if "ci" in a:
            lines.append(f"  95% CI (t, over {a['ci']['items']} items): "
                         f"[{100 * a['ci']['low']:.1f}, {100 * a['ci']['high']:.1f}]")
        for name, e in a.get("branches", {}).items():
            extra = "" if e.get("paired_accuracy") is None else f", paired {100 * e['paired_accuracy']:.1f}%"
            lines.append(f"  {name:14s} freq {100 * e['frequency']:5.1f}%  candidates "
                         f"{e['candidates_before']:.1f} -> {e['candidates_after']:.1f}  "
                         f"acc {100 * e['accuracy']:.1f}%{extra}")
        return "\n".join(lines)
