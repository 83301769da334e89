"""Deterministic resolution of per-candidate True/False verdicts.

Rules for one verification round over a shortlist:

* exactly one True   -> select it;
* two or more True   -> re-verify only the True subset while retries remain,
                        then a single-shot MCQ over that subset;
* all False          -> re-verify the full shortlist while retries remain,
                        then a single-shot MCQ over all of it.
"""

from __future__ import annotations

import enum
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Protocol, Sequence

from .errors import BackendError, ContractViolationError, InvalidInputError, UnparseableAnswerError
from .quantize import Candidate
from .verifiers import ClaimQuery, McqQuery, Verdict


class Branch(str, enum.Enum):
    SINGLE_TRUE = "single-true"
    MULTIPLE_TRUE = "multiple-true"
    ALL_FALSE = "all-false"


class Action(str, enum.Enum):
    SELECT = "select"
    RERUN_BINARY = "rerun-binary"
    FALLBACK_MCQ = "fallback-mcq"


@dataclass(frozen=True)
class BooleanPattern:
    verdicts: tuple[tuple[str, bool], ...]
    round: int = 0

    def __post_init__(self):
        object.__setattr__(self, "verdicts", tuple((str(i), bool(v)) for i, v in self.verdicts))
        ids = self.ids
        if len(set(ids)) != len(ids):
            raise ContractViolationError(f"duplicate ids in pattern: {ids}")
        if self.round < 0:
            raise InvalidInputError("round must be >= 0")

    @classmethod
    def of(cls, ids: Sequence[str], values: Sequence[bool], round: int = 0) -> BooleanPattern:
        if len(ids) != len(values):
            raise ContractViolationError("ids and verdict values differ in length")
        return cls(tuple(zip(ids, values)), round)

    @property
    def ids(self) -> list[str]:
        return [i for i, _ in self.verdicts]

    @property
    def true_ids(self) -> list[str]:
        return [i for i, v in self.verdicts if v]

    @property
    def popcount(self) -> int:
        return sum(v for _, v in self.verdicts)


@dataclass(frozen=True)
class ResolutionConfig:
    max_retries: int = 0
    certainty_policy: bool = False

    def __post_init__(self):
        if self.max_retries < 0:
            raise InvalidInputError("max_retries must be >= 0")


@dataclass(frozen=True)
class ResolutionOutcome:
    action: Action
    ids: tuple[str, ...]
    branch: Branch
    trace: tuple[BooleanPattern, ...] = ()

    @property
    def selected(self) -> str | None:
        return self.ids[0] if self.action is Action.SELECT else None


def resolve(pattern: BooleanPattern, shortlist: Sequence[Candidate],
            config: ResolutionConfig = ResolutionConfig(),
            trace: Sequence[BooleanPattern] = ()) -> ResolutionOutcome:
    if not shortlist:
        raise InvalidInputError("shortlist is empty")
    order = [c.id for c in shortlist]
    if pattern.ids != order:
        raise ContractViolationError(f"pattern covers {pattern.ids}, shortlist is {order}")
    if pattern.round > config.max_retries:
        raise ContractViolationError(f"round {pattern.round} exceeds max_retries={config.max_retries}")

    full_trace = tuple(trace) + (pattern,)
    true_ids = tuple(pattern.true_ids)
    retries_left = pattern.round < config.max_retries
    if len(true_ids) == 1:
        return ResolutionOutcome(Action.SELECT, true_ids, Branch.SINGLE_TRUE, full_trace)
    if true_ids:
        action = Action.RERUN_BINARY if retries_left else Action.FALLBACK_MCQ
        return ResolutionOutcome(action, true_ids, Branch.MULTIPLE_TRUE, full_trace)
    action = Action.RERUN_BINARY if retries_left else Action.FALLBACK_MCQ
    return ResolutionOutcome(action, tuple(order), Branch.ALL_FALSE, full_trace)


# --------------------------------------------------------------------------
# driving a verifier


class Verifier(Protocol):
    def verify(self, query: ClaimQuery) -> tuple[Verdict, str]: ...

    def answer_mcq(self, query: McqQuery) -> tuple[int, str]: ...


ClaimBuilder = Callable[[Candidate, int], ClaimQuery]
McqBuilder = Callable[[Sequence[Candidate]], McqQuery]


@dataclass
class TraceEvent:
    kind: str  # "binary" or "mcq"
    round: int
    ids: list[str]
    verdicts: list[str] = field(default_factory=list)
    raw: list[str] = field(default_factory=list)
    parse_failures: list[str] = field(default_factory=list)
    choice: str | None = None
    skipped: bool = False

    def to_dict(self) -> dict:
        return {k: v for k, v in self.__dict__.items()}


@dataclass
class ProtocolResult:
    """Final choice plus the full trace; ``branch`` classifies the first-round pattern."""

    chosen: str
    branch: Branch
    trace: list[TraceEvent]
    first_pattern: BooleanPattern
    claim_queries: int = 0
    mcq_queries: int = 0

    @property
    def candidates_before(self) -> int:
        return len(self.first_pattern.verdicts)

    @property
    def candidates_after(self) -> int:
        """Size of the set the final decision was made over."""
        last = self.trace[-1]
        return 1 if last.kind == "binary" else len(last.ids)


def default_claim_query(candidate: Candidate, round: int, certainty_policy: bool = False) -> ClaimQuery:
    return ClaimQuery(candidate.claim, certainty_policy=certainty_policy, key=f"{candidate.id}@{round}")


def default_mcq_query(candidates: Sequence[Candidate]) -> McqQuery:
    return McqQuery("Which option is correct?", tuple(c.claim for c in candidates))


def run_protocol(shortlist: Sequence[Candidate], verifier: Verifier,
                 config: ResolutionConfig = ResolutionConfig(), *,
                 claim_query: ClaimBuilder | None = None, mcq_query: McqBuilder | None = None,
                 parallelism: int = 1) -> ProtocolResult:
    """Verify every candidate, resolve the pattern and, if needed, run the fallback MCQ.

    ``claim_query(candidate, round)`` and ``mcq_query(candidates)`` turn
    candidates into backend queries; the defaults use the candidate claim text
    with no images. Unparseable verdicts count as False and are flagged in the
    trace. An unparseable fallback MCQ reply falls back to the first option of
    the subset, also flagged. A one-option fallback is answered without a query.
    A backend failure re-raises as :class:`BackendError` carrying the partial trace.
    """
    if not shortlist:
        raise InvalidInputError("shortlist is empty")
    if claim_query is None:
        claim_query = lambda c, r: default_claim_query(c, r, config.certainty_policy)  # noqa: E731
    if mcq_query is None:
        mcq_query = default_mcq_query

    by_id = {c.id: c for c in shortlist}
    if len(by_id) != len(shortlist):
        raise InvalidInputError("duplicate candidate ids in shortlist")

    events: list[TraceEvent] = []
    patterns: list[BooleanPattern] = []
    current = list(shortlist)
    n_claims = n_mcq = 0
    rnd = 0
    while True:
        queries = [claim_query(c, rnd) for c in current]
        try:
            if parallelism > 1 and len(queries) > 1:
                with ThreadPoolExecutor(max_workers=min(parallelism, len(queries))) as pool:
                    answers = list(pool.map(verifier.verify, queries))
            else:
                answers = [verifier.verify(q) for q in queries]
        except BackendError as exc:
            exc.trace = events
            raise
        except Exception as exc:
            raise BackendError(str(exc), trace=events) from exc
        n_claims += len(queries)
        ev = TraceEvent("binary", rnd, [c.id for c in current],
                        verdicts=[v.value for v, _ in answers], raw=[r for _, r in answers],
                        parse_failures=[c.id for c, (v, _) in zip(current, answers) if v is Verdict.UNPARSEABLE])
        events.append(ev)
        pattern = BooleanPattern.of(ev.ids, [v.as_bool() for v, _ in answers], rnd)
        outcome = resolve(pattern, current, config, patterns)
        patterns.append(pattern)
        if rnd == 0:
            first_branch = outcome.branch

        if outcome.action is Action.SELECT:
            return ProtocolResult(outcome.ids[0], first_branch, events, patterns[0], n_claims, n_mcq)
        subset = [by_id[i] for i in outcome.ids]
        if outcome.action is Action.RERUN_BINARY:
            current = subset
            rnd += 1
            continue

        mev = TraceEvent("mcq", rnd, [c.id for c in subset])
        events.append(mev)
        if len(subset) == 1:
            mev.choice, mev.skipped = subset[0].id, True
        else:
            query = mcq_query(subset)
            try:
                idx, raw = verifier.answer_mcq(query)
                mev.raw.append(raw)
            except UnparseableAnswerError as exc:
                idx = 0
                mev.raw.append(exc.raw)
                mev.parse_failures.append("mcq")
            except BackendError as exc:
                exc.trace = events
                raise
            except Exception as exc:
                raise BackendError(str(exc), trace=events) from exc
            n_mcq += 1
            mev.choice = subset[idx].id
        return ProtocolResult(mev.choice, first_branch, events, patterns[0], n_claims, n_mcq)
