"""Conditional states, joint/conditional probabilities and the fine-grained steering sum S."""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Iterator, Sequence

import numpy as np

from .errors import OutOfRange, UndefinedConditional
from .quantum import (
    I2,
    NUMERICS,
    Array,
    Observable,
    TripartiteState,
    bloch_observable,
    born_distribution,
    pauli,
    projector,
    tensor3,
)

# (i, j, k) of the four terms, in order. Only the outcome labels vary between equivalent forms.
SETTINGS: tuple[tuple[int, int, int], ...] = ((0, 0, 0), (0, 1, 1), (1, 1, 0), (1, 0, 1))


@dataclass(frozen=True)
class Term:
    i: int
    j: int
    k: int
    a: int
    b: int
    c: int

    def __post_init__(self):
        for name in ("i", "j", "k", "a", "b", "c"):
            if getattr(self, name) not in (0, 1):
                raise ValueError(f"{name} must be 0 or 1")

    @property
    def setting(self) -> tuple[int, int, int]:
        return (self.i, self.j, self.k)

    @property
    def outcome(self) -> tuple[int, int, int]:
        return (self.a, self.b, self.c)

    def label(self) -> str:
        return f"P({self.c}_C{self.k}|{self.a}_A{self.i} {self.b}_B{self.j})"


@dataclass(frozen=True)
class OutcomePattern:
    terms: tuple[Term, Term, Term, Term]

    def __post_init__(self):
        if len(self.terms) != 4:
            raise ValueError("an outcome pattern has exactly four terms")
        if tuple(t.setting for t in self.terms) != SETTINGS:
            raise ValueError(f"term settings must be {SETTINGS}")

    @classmethod
    def from_labels(cls, labels: Sequence[Sequence[int]]) -> OutcomePattern:
        """Build a pattern from four (a, b, c) label triples."""
        terms = tuple(Term(*s, *map(int, o)) for s, o in zip(SETTINGS, labels, strict=True))
        return cls(terms)

    @property
    def labels(self) -> tuple[tuple[int, int, int], ...]:
        return tuple(t.outcome for t in self.terms)

    def __iter__(self) -> Iterator[Term]:
        return iter(self.terms)


DEFAULT_PATTERN = OutcomePattern.from_labels(((1, 1, 0), (0, 1, 0), (0, 1, 0), (0, 1, 0)))


@dataclass(frozen=True)
class MeasurementScenario:
    a0: Observable
    a1: Observable
    b0: Observable
    b1: Observable
    c0: Observable
    c1: Observable

    def alice(self, i: int) -> Observable:
        return (self.a0, self.a1)[i]

    def bob(self, j: int) -> Observable:
        return (self.b0, self.b1)[j]

    def charlie(self, k: int) -> Observable:
        return (self.c0, self.c1)[k]


def optimal_scenario(theta: float) -> MeasurementScenario:
    """Settings giving S = 4 on cos(theta)|000> + sin(theta)|111>."""
    if not 0.0 < theta < np.pi / 2:
        raise OutOfRange(f"theta={theta} outside the open interval (0, pi/2)")
    s, c = np.sin(2 * theta), np.cos(2 * theta)
    x, y = pauli("x"), pauli("y")
    return MeasurementScenario(
        a0=x,
        a1=y,
        b0=bloch_observable((s, 0.0, c)),
        b1=bloch_observable((0.0, s, c)),
        c0=x,
        c1=y,
    )


def _trace_out_first(op: Array, dim_rest: int) -> Array:
    d = op.shape[0] // dim_rest
    t = op.reshape(d, dim_rest, d, dim_rest)
    return np.einsum("iaib->ab", t)


def conditional_state_bc(state: TripartiteState, i: int, a: int, scenario: MeasurementScenario) -> Array:
    """Unnormalized BC state left after Alice measures A_i with outcome a."""
    pa = projector(scenario.alice(i), a).matrix
    op = np.kron(pa, np.eye(4)) @ state.density
    return _trace_out_first(op, 4)


def conditional_state_c(
    state: TripartiteState, i: int, a: int, j: int, b: int, scenario: MeasurementScenario
) -> Array:
    """Unnormalized Charlie state after outcomes a of A_i and b of B_j."""
    pa = projector(scenario.alice(i), a).matrix
    pb = projector(scenario.bob(j), b).matrix
    op = tensor3(pa, pb, I2) @ state.density
    return _trace_out_first(op, 2)


def assemblage(state: TripartiteState, scenario: MeasurementScenario) -> dict[tuple[int, int, int, int], Array]:
    """Map (i, j, a, b) to Charlie's unnormalized conditional operator."""
    return {
        (i, j, a, b): conditional_state_c(state, i, a, j, b, scenario)
        for i, j, a, b in itertools.product((0, 1), repeat=4)
    }


def joint_probability(
    state: TripartiteState, i: int, j: int, k: int, a: int, b: int, c: int, scenario: MeasurementScenario
) -> float:
    sigma = conditional_state_c(state, i, a, j, b, scenario)
    pc = projector(scenario.charlie(k), c).matrix
    return float(np.clip(np.real(np.trace(pc @ sigma)), 0.0, 1.0))


def setting_distribution(state: TripartiteState, scenario: MeasurementScenario, i: int, j: int, k: int) -> Array:
    """All eight outcome probabilities for one setting triple, indexed [a, b, c]."""
    p = born_distribution(state, scenario.alice(i), scenario.bob(j), scenario.charlie(k))
    return np.clip(p, 0.0, 1.0)


def conditional_probability(state: TripartiteState, term: Term, scenario: MeasurementScenario) -> float:
    """P(c | a b) for the settings of ``term``."""
    num = joint_probability(state, term.i, term.j, term.k, term.a, term.b, term.c, scenario)
    other = joint_probability(state, term.i, term.j, term.k, term.a, term.b, 1 - term.c, scenario)
    den = num + other
    if den < NUMERICS.denominator:
        raise UndefinedConditional(f"{term.label()}: P(ab) = {den:.3g} is zero", term)
    return num / den


@dataclass(frozen=True)
class TermValue:
    term: Term
    value: float


@dataclass(frozen=True)
class FgsiResult:
    s: float
    terms: tuple[TermValue, ...]

    def as_dict(self) -> dict:
        return {"S": self.s, "terms": {tv.term.label(): tv.value for tv in self.terms}}


def fgsi_value(
    state: TripartiteState, scenario: MeasurementScenario, pattern: OutcomePattern = DEFAULT_PATTERN
) -> FgsiResult:
    values = tuple(TermValue(t, conditional_probability(state, t, scenario)) for t in pattern)
    return FgsiResult(float(sum(v.value for v in values)), values)


def all_patterns() -> Iterator[OutcomePattern]:
    """Every assignment of (a, b, c) labels to the four terms (4096 patterns)."""
    per_term = list(itertools.product((0, 1), repeat=3))
    for labels in itertools.product(per_term, repeat=4):
        yield OutcomePattern.from_labels(labels)


@dataclass(frozen=True)
class PatternScan:
    maximum: float
    best: list[tuple[OutcomePattern, float]]
    evaluated: int
    excluded: list[tuple[OutcomePattern, str]]


def enumerate_max_patterns(
    state: TripartiteState, scenario: MeasurementScenario, atol: float = 1e-9
) -> PatternScan:
    """Scan all outcome patterns and return those attaining the largest S.

    Patterns with a zero-probability conditioning event are excluded, with the
    offending term recorded as the reason.
    """
    dists = [setting_distribution(state, scenario, *s) for s in SETTINGS]
    dens = [d.sum(axis=2) for d in dists]
    values: list[tuple[OutcomePattern, float]] = []
    excluded: list[tuple[OutcomePattern, str]] = []
    for pattern in all_patterns():
        total = 0.0
        reason = None
        for slot, t in enumerate(pattern):
            den = dens[slot][t.a, t.b]
            if den < NUMERICS.denominator:
                reason = f"{t.label()} has P(ab) = {den:.3g}"
                break
            total += dists[slot][t.a, t.b, t.c] / den
        if reason is None:
            values.append((pattern, float(total)))
        else:
            excluded.append((pattern, reason))
    if not values:
        return PatternScan(float("nan"), [], 0, excluded)
    top = max(v for _, v in values)
    best = [(p, v) for p, v in values if v >= top - atol]
    return PatternScan(top, best, len(values), excluded)
