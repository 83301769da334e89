"""Closed-form risk, information and accuracy calculators for binary verification.

Labels are integer indices ``0..K-1`` into ``DiscreteJoint.y_support``.
Logarithms are natural throughout, so information is in nats. Argmax ties go
to the lowest index everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import InvalidInputError, UndefinedThresholdError

MASS_TOL = 1e-12


@dataclass(frozen=True, eq=False)
class DiscreteJoint:
    """Joint pmf ``pmf[x, y] = P(X=x, Y=y)`` over finite evidence and label sets."""

    pmf: np.ndarray
    x_support: tuple = ()
    y_support: tuple = ()

    def __post_init__(self):
        pmf = np.asarray(self.pmf, dtype=np.float64)
        if pmf.ndim != 2 or pmf.size == 0:
            raise InvalidInputError("pmf must be a non-empty 2-D array")
        if np.any(pmf < 0):
            raise InvalidInputError("pmf has negative entries")
        if abs(pmf.sum() - 1.0) > MASS_TOL:
            raise InvalidInputError(f"pmf sums to {pmf.sum()!r}, not 1")
        object.__setattr__(self, "pmf", pmf)
        nx, ny = pmf.shape
        object.__setattr__(self, "x_support", tuple(self.x_support) or tuple(range(nx)))
        object.__setattr__(self, "y_support", tuple(self.y_support) or tuple(range(ny)))
        if len(self.x_support) != nx or len(self.y_support) != ny:
            raise InvalidInputError("support sizes do not match pmf shape")

    @classmethod
    def from_weights(cls, weights, **kw) -> DiscreteJoint:
        w = np.asarray(weights, dtype=np.float64)
        return cls(w / w.sum(), **kw)

    @property
    def n_labels(self) -> int:
        return self.pmf.shape[1]

    @property
    def n_evidence(self) -> int:
        return self.pmf.shape[0]


@dataclass(frozen=True)
class Partition:
    """Disjoint, covering cells of the label indices ``0..n_labels-1``."""

    cells: tuple[tuple[int, ...], ...]
    n_labels: int = field(default=0)

    def __post_init__(self):
        cells = tuple(tuple(sorted(int(a) for a in c)) for c in self.cells)
        n = self.n_labels or sum(len(c) for c in cells)
        flat = [a for c in cells for a in c]
        if any(len(c) == 0 for c in cells):
            raise InvalidInputError("partition has an empty cell")
        if sorted(flat) != list(range(n)):
            raise InvalidInputError(f"cells {cells} do not partition {n} labels")
        object.__setattr__(self, "cells", cells)
        object.__setattr__(self, "n_labels", n)

    def __len__(self):
        return len(self.cells)

    def membership(self) -> np.ndarray:
        """``(n_labels, n_cells)`` 0/1 matrix."""
        m = np.zeros((self.n_labels, len(self.cells)))
        for j, cell in enumerate(self.cells):
            m[list(cell), j] = 1.0
        return m

    def refines(self, other: Partition) -> bool:
        """True when every cell of self lies inside one cell of ``other``."""
        owner = {a: j for j, c in enumerate(other.cells) for a in c}
        return self.n_labels == other.n_labels and all(len({owner[a] for a in c}) == 1 for c in self.cells)

    @classmethod
    def finest(cls, n_labels: int) -> Partition:
        return cls(tuple((a,) for a in range(n_labels)), n_labels)

    @classmethod
    def mcq(cls, n_labels: int, subset: Sequence[int]) -> Partition:
        """Options in ``subset`` as singletons plus one merged cell for the rest (if any)."""
        subset = sorted(set(int(a) for a in subset))
        if not subset or subset[0] < 0 or subset[-1] >= n_labels:
            raise InvalidInputError(f"subset {subset} not inside 0..{n_labels - 1}")
        rest = tuple(a for a in range(n_labels) if a not in subset)
        cells = tuple((a,) for a in subset) + ((rest,) if rest else ())
        return cls(cells, n_labels)

    @classmethod
    def binary(cls, n_labels: int, designated: int) -> Partition:
        if not 0 <= designated < n_labels:
            raise InvalidInputError(f"designated label {designated} out of range")
        rest = tuple(a for a in range(n_labels) if a != designated)
        return cls(((designated,),) + ((rest,) if rest else ()), n_labels)


def _check(joint: DiscreteJoint, partition: Partition) -> None:
    if partition.n_labels != joint.n_labels:
        raise InvalidInputError(f"partition covers {partition.n_labels} labels, joint has {joint.n_labels}")


def cell_mass(joint: DiscreteJoint, partition: Partition) -> np.ndarray:
    """``P(X=x, Z=cell)`` as an ``(n_evidence, n_cells)`` array."""
    _check(joint, partition)
    return joint.pmf @ partition.membership()


def bayes_rule(joint: DiscreteJoint, partition: Partition) -> np.ndarray:
    """Cell index chosen for each evidence value by the MAP rule."""
    return np.argmax(cell_mass(joint, partition), axis=1)  # argmax returns the first maximum


def bayes_risk(joint: DiscreteJoint, partition: Partition) -> float:
    """Minimum 0-1 risk of predicting the partition cell of Y from X."""
    m = cell_mass(joint, partition)
    return float(1.0 - m.max(axis=1).sum())


def rule_risk(joint: DiscreteJoint, partition: Partition, rule: Sequence[int]) -> float:
    """0-1 risk of a deterministic rule mapping evidence index -> cell index."""
    m = cell_mass(joint, partition)
    rule = np.asarray(rule, dtype=int)
    return float(1.0 - m[np.arange(joint.n_evidence), rule].sum())


def default_mcq_subset(n_labels: int, m: int, designated: int) -> list[int]:
    """The designated label plus the lowest-indexed other labels, m in total."""
    others = [a for a in range(n_labels) if a != designated]
    return sorted([designated] + others[: m - 1])


def hardness_ladder(joint: DiscreteJoint, m: int, designated: int,
                    subset: Sequence[int] | None = None) -> tuple[float, float, float]:
    """Bayes risks ``(R_K, R_m, R_2)`` for K-way, m-option and one-vs-rest tasks.

    Each task predicts the cell of a partition of the labels: all singletons;
    the m options as singletons plus one merged "other" cell; and the
    designated label against the rest. The m-option set must contain the
    designated label, which makes the three partitions successively coarser.
    """
    K = joint.n_labels
    if not 2 <= m <= K:
        raise InvalidInputError(f"need 2 <= m <= K, got m={m}, K={K}")
    if subset is None:
        subset = default_mcq_subset(K, m, designated)
    subset = sorted(set(subset))
    if len(subset) != m or designated not in subset:
        raise InvalidInputError("subset must have m labels including the designated one")
    return (
        bayes_risk(joint, Partition.finest(K)),
        bayes_risk(joint, Partition.mcq(K, subset)),
        bayes_risk(joint, Partition.binary(K, designated)),
    )


def _xlogx_ratio(joint_xy: np.ndarray, px: np.ndarray, py: np.ndarray) -> float:
    outer = np.outer(px, py)
    nz = joint_xy > 0
    return float(np.sum(joint_xy[nz] * np.log(joint_xy[nz] / outer[nz])))


def partition_mi(joint: DiscreteJoint, partition: Partition) -> float:
    """I(Z; X) in nats where Z is the partition cell of Y."""
    m = cell_mass(joint, partition)
    return max(0.0, _xlogx_ratio(m, m.sum(axis=1), m.sum(axis=0)))


def posterior(joint: DiscreteJoint, x: int) -> np.ndarray:
    row = joint.pmf[x]
    total = row.sum()
    if total <= 0:
        raise InvalidInputError(f"evidence value {x} has zero probability")
    return row / total


def calibrated_argmax(joint: DiscreteJoint, x: int, subset: Sequence[int] | None = None) -> int:
    """Label with the largest posterior P(Y=a | X=x), optionally restricted to ``subset``."""
    if not 0 <= x < joint.n_evidence:
        raise InvalidInputError(f"evidence index {x} outside support")
    post = posterior(joint, x)
    if subset is None:
        return int(np.argmax(post))
    labels = sorted(set(int(a) for a in subset))
    if not labels or labels[0] < 0 or labels[-1] >= joint.n_labels:
        raise InvalidInputError(f"subset {subset} not inside the label alphabet")
    return labels[int(np.argmax(post[labels]))]


def calibrated_risk(joint: DiscreteJoint, subset: Sequence[int] | None = None) -> float:
    """Risk of deciding by :func:`calibrated_argmax` on every x.

    Without ``subset`` this is the K-way 0-1 risk. With ``subset`` it is the
    MCQ risk conditioned on the truth lying in the subset.
    """
    pmf = joint.pmf
    labels = list(range(joint.n_labels)) if subset is None else sorted(set(subset))
    mass_in = pmf[:, labels].sum()
    if mass_in <= 0:
        raise InvalidInputError("subset has zero prior mass")
    hit = 0.0
    for x in range(joint.n_evidence):
        if pmf[x].sum() <= 0:
            continue
        hit += pmf[x, calibrated_argmax(joint, x, subset)]
    return float(1.0 - hit / mass_in)


def mcq_bayes_risk(joint: DiscreteJoint, subset: Sequence[int]) -> float:
    """Optimal risk choosing among ``subset`` given the truth is in it."""
    labels = sorted(set(subset))
    sub = joint.pmf[:, labels]
    total = sub.sum()
    if total <= 0:
        raise InvalidInputError("subset has zero prior mass")
    return float(1.0 - sub.max(axis=1).sum() / total)


# --------------------------------------------------------------------------
# Fano envelopes


@dataclass(frozen=True)
class FanoInput:
    information: float
    cardinality: int

    def __post_init__(self):
        if self.information < 0:
            raise InvalidInputError("information must be >= 0")
        if self.cardinality < 2:
            raise InvalidInputError("cardinality must be >= 2")


def fano_bound(inp: FanoInput) -> float:
    """Lower bound ``1 - (I + ln 2) / ln(cardinality)`` on error, clamped to [0, 1].

    Valid as an error bound when the label is uniform over ``cardinality``
    values (the weak form of Fano's inequality).
    """
    raw = 1.0 - (inp.information + math.log(2)) / math.log(inp.cardinality)
    return min(1.0, max(0.0, raw))


# --------------------------------------------------------------------------
# two-hypothesis model


@dataclass(frozen=True)
class TwoHypParams:
    q1: float  # P(True | hypothesis is the correct one)
    q2: float  # P(True | hypothesis is the distractor)
    p: float   # P(single-shot two-way MCQ picks the correct one)

    def __post_init__(self):
        for name in ("q1", "q2", "p"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise InvalidInputError(f"{name}={v} outside [0, 1]")


def binary_accuracy(params: TwoHypParams) -> float:
    q1, q2, p = params.q1, params.q2, params.p
    return q1 * (1 - q2) + q1 * q2 * p + (1 - q1) * (1 - q2) * p


def mcq_accuracy(params: TwoHypParams) -> float:
    return params.p


def mcq_threshold(q1: float, q2: float) -> float:
    """MCQ accuracy p* at which MCQ and binary verification tie."""
    denom = q1 * (1 - q2) + q2 * (1 - q1)
    if denom <= 0:
        raise UndefinedThresholdError(f"threshold undefined for q1={q1}, q2={q2}")
    return 1.0 - q2 * (1 - q1) / denom


def simulate_two_hyp_protocol(params: TwoHypParams, trials: int, seed: int | None = 0) -> float:
    """Monte Carlo accuracy of one verification round plus MCQ fallback on two hypotheses."""
    if trials < 1:
        raise InvalidInputError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    u = rng.random((3, trials))
    true_says = u[0] < params.q1
    distractor_says = u[1] < params.q2
    mcq_right = u[2] < params.p
    accept_true = true_says & ~distractor_says
    fallback = true_says == distractor_says
    correct = accept_true | (fallback & mcq_right)
    return float(correct.mean())


def crossover_curve(q2: float, q1_values: Sequence[float]) -> list[tuple[float, float]]:
    """``(q1, p*)`` pairs for plotting the MCQ/binary break-even line."""
    return [(float(q1), mcq_threshold(q1, q2)) for q1 in q1_values]
