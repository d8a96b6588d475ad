"""Classical side of the certification.

Fine-grained uncertainty game, the two analytic steering bounds, and hybrid
LHV-LHV-LHS models (deterministic Alice/Bob responses, a qubit state for
Charlie per hidden variable) used to probe those bounds.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

from .quantum import NUMERICS, Array, Observable, is_density, projector, qubit_density
from .steering import DEFAULT_PATTERN, OutcomePattern, Term

KNOWN_MEASUREMENT_BOUND = 2 + math.sqrt(2)
UNKNOWN_MEASUREMENT_BOUND = 3.0
ALGEBRAIC_MAX = 4.0
# Average winning probability over all observables; taken as given, not re-derived.
AVERAGE_WIN_PROBABILITY = 0.75
MAX_LAMBDA = 16


@dataclass(frozen=True)
class SteeringBounds:
    known_measurements: float = KNOWN_MEASUREMENT_BOUND
    unknown_measurements: float = UNKNOWN_MEASUREMENT_BOUND
    algebraic_max: float = ALGEBRAIC_MAX


@dataclass(frozen=True)
class GameResult:
    value: float
    bloch: Array


def _sign(outcome: int) -> float:
    return 1.0 if outcome == 0 else -1.0


def fine_grained_game_max(m0: Observable, m1: Observable, win_outcomes: Sequence[int] = (0, 0)) -> GameResult:
    """Best average winning probability over qubit states for the two-setting game.

    The player wins on setting ``x`` when ``m_x`` returns ``win_outcomes[x]``;
    settings are drawn with probability 1/2 each. The optimum is attained on
    the pure state along s0*n0 + s1*n1.
    """
    v = _sign(win_outcomes[0]) * m0.bloch + _sign(win_outcomes[1]) * m1.bloch
    norm = float(np.linalg.norm(v))
    if norm < NUMERICS.zero_vector:
        # every state wins with probability 1/2
        direction = _sign(win_outcomes[0]) * m0.bloch
    else:
        direction = v / norm
    return GameResult(0.5 + norm / 4, np.array(direction))


def steering_bound_known(c0: Observable, c1: Observable) -> float:
    """Classical bound on S when Alice and Bob know Charlie's two measurements."""
    best = max(fine_grained_game_max(c0, c1, (0, w)).value for w in (0, 1))
    return 2 * (2 * best)


def steering_bound_unknown() -> float:
    """Classical bound on S when Charlie's measurements are not disclosed."""
    return 2 * (AVERAGE_WIN_PROBABILITY + AVERAGE_WIN_PROBABILITY)


@dataclass(frozen=True)
class HybridLhsModel:
    """Hidden-variable model: weights[l], alice[l, i], bob[l, j], charlie[l] (2x2 density)."""

    weights: Array
    alice: Array
    bob: Array
    charlie: Array = field(repr=False)

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        alice = np.asarray(self.alice, dtype=int)
        bob = np.asarray(self.bob, dtype=int)
        rho = np.asarray(self.charlie, dtype=complex)
        n = w.shape[0]
        if w.ndim != 1 or alice.shape != (n, 2) or bob.shape != (n, 2) or rho.shape != (n, 2, 2):
            raise ValueError("inconsistent hidden-variable array shapes")
        if w.min() < 0 or abs(w.sum() - 1) > NUMERICS.hermitian:
            raise ValueError("weights must form a probability distribution")
        if not (np.isin(alice, (0, 1)).all() and np.isin(bob, (0, 1)).all()):
            raise ValueError("responses must be outcome labels 0/1")
        for r in rho:
            if not is_density(r):
                raise ValueError("Charlie states must be unit-trace PSD matrices")
        for name, val in (("weights", w), ("alice", alice), ("bob", bob), ("charlie", rho)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def size(self) -> int:
        return len(self.weights)


def _charlie_probs(model: HybridLhsModel, m: Observable, c: int) -> Array:
    pc = projector(m, c).matrix
    return np.real(np.einsum("ij,lji->l", pc, model.charlie))


def model_joint_probability(
    model: HybridLhsModel,
    i: int,
    j: int,
    k: int,
    a: int,
    b: int,
    c: int,
    charlie_measurements: Sequence[Observable],
) -> float:
    mask = (model.alice[:, i] == a) & (model.bob[:, j] == b)
    pc = _charlie_probs(model, charlie_measurements[k], c)
    return float(np.sum(model.weights * mask * pc))


def model_conditional(model: HybridLhsModel, term: Term, charlie_measurements: Sequence[Observable]) -> float | None:
    """P(c | a b) under the model, or None when P(ab) vanishes."""
    mask = (model.alice[:, term.i] == term.a) & (model.bob[:, term.j] == term.b)
    den = float(np.sum(model.weights * mask))
    if den < NUMERICS.denominator:
        return None
    pc = _charlie_probs(model, charlie_measurements[term.k], term.c)
    return float(np.sum(model.weights * mask * pc)) / den


def model_fgsi_value(
    model: HybridLhsModel,
    charlie_measurements: Sequence[Observable],
    pattern: OutcomePattern = DEFAULT_PATTERN,
) -> float | None:
    """S for the model, or None if any conditioning event has zero probability."""
    total = 0.0
    for term in pattern:
        p = model_conditional(model, term, charlie_measurements)
        if p is None:
            return None
        total += p
    return total


def random_bloch_ball(rng: np.random.Generator, size: int) -> Array:
    v = rng.normal(size=(size, 3))
    v /= np.linalg.norm(v, axis=1)[:, None]
    return v * rng.random(size)[:, None] ** (1 / 3)


def sample_models(count: int, lambda_count: int, seed: int) -> Iterator[HybridLhsModel]:
    """Reproducible stream of random hybrid models over ``lambda_count`` hidden values."""
    if count < 1:
        raise ValueError("count must be >= 1")
    if not 1 <= lambda_count <= MAX_LAMBDA:
        raise ValueError(f"lambda_count must lie in [1, {MAX_LAMBDA}]")
    rng = np.random.default_rng(seed)
    for _ in range(count):
        weights = rng.dirichlet(np.ones(lambda_count))
        alice = rng.integers(0, 2, size=(lambda_count, 2))
        bob = rng.integers(0, 2, size=(lambda_count, 2))
        charlie = np.array([qubit_density(r) for r in random_bloch_ball(rng, lambda_count)])
        yield HybridLhsModel(weights, alice, bob, charlie)


def saturating_model(
    c0: Observable, c1: Observable, pattern: OutcomePattern = DEFAULT_PATTERN
) -> HybridLhsModel:
    """Model reaching the known-measurement bound for ``pattern``.

    One hidden value per term, each producing that term's (a, b) event, all
    sharing the Charlie state that maximizes the summed winning probability.
    With a common Charlie state every conditional is just P(c | C_k, rho).
    """
    ms = (c0, c1)
    v = sum(_sign(t.c) * ms[t.k].bloch for t in pattern)
    norm = np.linalg.norm(v)
    r = v / norm if norm > NUMERICS.zero_vector else np.array([0.0, 0.0, 1.0])
    alice = np.zeros((4, 2), dtype=int)
    bob = np.zeros((4, 2), dtype=int)
    for lam, t in enumerate(pattern):
        alice[lam, t.i] = t.a
        bob[lam, t.j] = t.b
    rho = np.array([qubit_density(r)] * 4)
    return HybridLhsModel(np.full(4, 0.25), alice, bob, rho)


def per_term_model(c0: Observable, c1: Observable, pattern: OutcomePattern = DEFAULT_PATTERN) -> HybridLhsModel | None:
    """Deterministic model in which each hidden value triggers exactly one term's event.

    Each hidden value carries the Charlie eigenstate that wins its own term, so
    every conditional equals 1 and S reaches the algebraic maximum. Returns None
    when no response assignment isolates the four events.
    """
    ms = (c0, c1)
    chosen = []
    for t in pattern:
        for a0, a1, b0, b1 in np.ndindex(2, 2, 2, 2):
            resp_a, resp_b = (a0, a1), (b0, b1)
            hits = [resp_a[u.i] == u.a and resp_b[u.j] == u.b for u in pattern]
            if hits[pattern.terms.index(t)] and sum(hits) == 1:
                chosen.append((resp_a, resp_b, _sign(t.c) * ms[t.k].bloch))
                break
        else:
            return None
    alice = np.array([c[0] for c in chosen])
    bob = np.array([c[1] for c in chosen])
    rho = np.array([qubit_density(c[2]) for c in chosen])
    return HybridLhsModel(np.full(4, 0.25), alice, bob, rho)


@dataclass
class FalsificationSummary:
    samples: int
    undefined: int
    max_s: float
    exceed_known: int
    exceed_unknown: int
    bound: float
    argmax_model: HybridLhsModel | None = field(default=None, repr=False)

    def as_dict(self) -> dict:
        return {
            "samples": self.samples,
            "undefined": self.undefined,
            "defined": self.samples - self.undefined,
            "max_s": self.max_s,
            "known_bound": self.bound,
            "exceed_known": self.exceed_known,
            "exceed_unknown": self.exceed_unknown,
        }


def falsify(
    count: int,
    seed: int,
    charlie_measurements: Sequence[Observable],
    pattern: OutcomePattern = DEFAULT_PATTERN,
    lambda_counts: Sequence[int] = tuple(range(1, MAX_LAMBDA + 1)),
    tol: float = 1e-9,
) -> FalsificationSummary:
    """Sample ``count`` models, cycling through ``lambda_counts``, and track the largest S.

    Each lambda count gets its own stream seeded ``seed + index``. Models with
    an undefined S are counted and discarded.
    """
    bound = steering_bound_known(*charlie_measurements)
    per = [count // len(lambda_counts) + (idx < count % len(lambda_counts)) for idx in range(len(lambda_counts))]
    undefined = exceed_k = exceed_u = 0
    best = -math.inf
    best_model = None
    for idx, (lam, n) in enumerate(zip(lambda_counts, per)):
        if n == 0:
            continue
        for model in sample_models(n, lam, seed + idx):
            s = model_fgsi_value(model, charlie_measurements, pattern)
            if s is None:
                undefined += 1
                continue
            if s > bound + tol:
                exceed_k += 1
            if s > UNKNOWN_MEASUREMENT_BOUND + tol:
                exceed_u += 1
            if s > best:
                best, best_model = s, model
    return FalsificationSummary(count, undefined, best, exceed_k, exceed_u, bound, best_model)
