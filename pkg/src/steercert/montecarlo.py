"""Finite-statistics simulation of the coincidence-counting experiment.

Each of the four setting triples used by S is measured with a fixed event budget.
An event's outcome (a, b, c) is drawn from the exact Born distribution, may be
replaced by a uniformly random triple (dark-count substitution), and survives
only if all three photons are detected. Detector labels follow
(D_{1+a}, D_{3+b}, D_{5+c}); the trigger D7 always fires.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .lhs import KNOWN_MEASUREMENT_BOUND, UNKNOWN_MEASUREMENT_BOUND
from .quantum import TripartiteState, gghz_state
from .steering import (
    DEFAULT_PATTERN,
    SETTINGS,
    MeasurementScenario,
    OutcomePattern,
    Term,
    fgsi_value,
    optimal_scenario,
    setting_distribution,
)

CHUNK = 1 << 16
CSV_COLUMNS = (
    "theta",
    "setting_i",
    "setting_j",
    "setting_k",
    "a",
    "b",
    "c",
    "count",
    "p_hat",
    "stderr",
    "s_hat",
    "s_stderr",
)


@dataclass(frozen=True)
class ExperimentConfig:
    theta: float
    events_per_setting: int
    seed: int = 0
    detection_efficiency: float = 1.0
    dark_count_rate: float = 0.0

    def __post_init__(self):
        if int(self.events_per_setting) < 1:
            raise ValueError("events_per_setting must be >= 1")
        if not 0.0 < self.detection_efficiency <= 1.0:
            raise ValueError("detection_efficiency must lie in (0, 1]")
        if not 0.0 <= self.dark_count_rate < 1.0:
            raise ValueError("dark_count_rate must lie in [0, 1)")

    def as_dict(self) -> dict:
        return asdict(self)


def detectors(a: int, b: int, c: int) -> tuple[str, str, str, str]:
    return (f"D{1 + a}", f"D{3 + b}", f"D{5 + c}", "D7")


@dataclass
class CoincidenceCounts:
    """counts[(i, j, k)] is a (2, 2, 2) integer array indexed [a, b, c]."""

    counts: dict[tuple[int, int, int], np.ndarray]
    total_events: dict[tuple[int, int, int], int]
    theta: float | None = None

    def cell(self, setting: tuple[int, int, int], a: int, b: int, c: int) -> int:
        return int(self.counts[setting][a, b, c])

    def merge(self, other: CoincidenceCounts) -> CoincidenceCounts:
        keys = set(self.counts) | set(other.counts)
        zero = np.zeros((2, 2, 2), dtype=np.int64)
        return CoincidenceCounts(
            {s: self.counts.get(s, zero) + other.counts.get(s, zero) for s in keys},
            {s: self.total_events.get(s, 0) + other.total_events.get(s, 0) for s in keys},
            self.theta,
        )

    def records(self) -> list[dict]:
        out = []
        for (i, j, k), arr in sorted(self.counts.items()):
            for a, b, c in np.ndindex(2, 2, 2):
                out.append(
                    {
                        "theta": self.theta,
                        "setting_i": i,
                        "setting_j": j,
                        "setting_k": k,
                        "a": a,
                        "b": b,
                        "c": c,
                        "detectors": "".join(detectors(a, b, c)),
                        "count": int(arr[a, b, c]),
                    }
                )
        return out


def _sample_chunk(rng: np.random.Generator, probs: np.ndarray, size: int, config: ExperimentConfig) -> np.ndarray:
    # Draw order is fixed so runs with equal seeds are coupled across noise settings.
    outcome = np.searchsorted(np.cumsum(probs), rng.random(size) * probs.sum(), side="right")
    outcome = np.minimum(outcome, 7)
    dark_u = rng.random(size)
    dark_sub = rng.integers(0, 8, size)
    outcome = np.where(dark_u < config.dark_count_rate, dark_sub, outcome)
    detected = (rng.random((size, 3)) < config.detection_efficiency).all(axis=1)
    return np.bincount(outcome[detected], minlength=8).reshape(2, 2, 2)


def simulate_counts(
    state: TripartiteState,
    scenario: MeasurementScenario,
    config: ExperimentConfig,
    settings: Sequence[tuple[int, int, int]] = SETTINGS,
) -> CoincidenceCounts:
    """Sample coincidence counts for each setting triple.

    Every chunk of up to ``CHUNK`` events draws from its own stream keyed by
    (seed, setting index, chunk index), so results do not depend on how chunks
    are scheduled.
    """
    counts, totals = {}, {}
    n = int(config.events_per_setting)
    for s_idx, setting in enumerate(settings):
        probs = setting_distribution(state, scenario, *setting).reshape(8)
        probs = probs / probs.sum()
        acc = np.zeros((2, 2, 2), dtype=np.int64)
        for c_idx, start in enumerate(range(0, n, CHUNK)):
            rng = np.random.default_rng([int(config.seed), s_idx, c_idx])
            acc += _sample_chunk(rng, probs, min(CHUNK, n - start), config)
        counts[setting] = acc
        totals[setting] = n
    return CoincidenceCounts(counts, totals, config.theta)


@dataclass(frozen=True)
class TermEstimate:
    term: Term
    p_hat: float
    stderr: float
    numerator: int
    denominator: int


@dataclass(frozen=True)
class Discarded:
    term: Term
    reason: str = "no events in the conditioning branch"


def estimate_term(counts: CoincidenceCounts, term: Term) -> TermEstimate | Discarded:
    """Coincidence-ratio estimate N(a,b,c) / (N(a,b,c) + N(a,b,1-c))."""
    arr = counts.counts[term.setting]
    num = int(arr[term.a, term.b, term.c])
    den = num + int(arr[term.a, term.b, 1 - term.c])
    if den == 0:
        return Discarded(term)
    p = num / den
    se = math.sqrt(p * (1 - p) / den)
    if num in (0, den):
        # rule of three: the binomial formula degenerates at the boundary
        se = max(se, 3 / den)
    return TermEstimate(term, p, se, num, den)


@dataclass
class EstimationResult:
    terms: list[TermEstimate]
    s_hat: float
    s_stderr: float
    discarded_terms: list[Discarded] = field(default_factory=list)

    @property
    def partial(self) -> bool:
        return bool(self.discarded_terms)

    def as_dict(self) -> dict:
        return {
            "s_hat": self.s_hat,
            "s_stderr": self.s_stderr,
            "partial": self.partial,
            "terms": [
                {
                    "term": t.term.label(),
                    "setting": list(t.term.setting),
                    "outcome": list(t.term.outcome),
                    "p_hat": t.p_hat,
                    "stderr": t.stderr,
                    "numerator": t.numerator,
                    "denominator": t.denominator,
                }
                for t in self.terms
            ],
            "discarded_terms": [{"term": d.term.label(), "reason": d.reason} for d in self.discarded_terms],
        }


def estimate_s(counts: CoincidenceCounts, pattern: OutcomePattern = DEFAULT_PATTERN) -> EstimationResult:
    terms, dropped = [], []
    for term in pattern:
        est = estimate_term(counts, term)
        (dropped if isinstance(est, Discarded) else terms).append(est)
    s_hat = float(sum(t.p_hat for t in terms))
    s_err = math.sqrt(sum(t.stderr**2 for t in terms))
    return EstimationResult(terms, s_hat, s_err, dropped)


@dataclass(frozen=True)
class ScanRow:
    theta: float
    exact_s: float | None
    s_hat: float | None
    s_stderr: float | None
    bound_known: float = KNOWN_MEASUREMENT_BOUND
    bound_unknown: float = UNKNOWN_MEASUREMENT_BOUND
    note: str = ""

    def as_dict(self) -> dict:
        return {
            "theta": self.theta,
            "theta_over_pi": self.theta / math.pi,
            "exact_s": self.exact_s,
            "s_hat": self.s_hat,
            "s_stderr": self.s_stderr,
            "bound_known": self.bound_known,
            "bound_unknown": self.bound_unknown,
            "note": self.note,
        }


def scan_theta(
    theta_grid: Sequence[float],
    template: ExperimentConfig | None = None,
    pattern: OutcomePattern = DEFAULT_PATTERN,
) -> list[ScanRow]:
    """Exact S and (optionally) a Monte Carlo estimate for each theta.

    With ``template=None`` only the exact value is computed.
    """
    rows = []
    for theta in theta_grid:
        try:
            state, scenario = gghz_state(theta), optimal_scenario(theta)
            exact = fgsi_value(state, scenario, pattern).s
        except Exception as exc:  # annotate the row, keep scanning
            rows.append(ScanRow(theta, None, None, None, note=str(exc)))
            continue
        s_hat = s_err = None
        note = ""
        if template is not None:
            cfg = ExperimentConfig(
                theta,
                template.events_per_setting,
                template.seed,
                template.detection_efficiency,
                template.dark_count_rate,
            )
            est = estimate_s(simulate_counts(state, scenario, cfg), pattern)
            s_hat, s_err = est.s_hat, est.s_stderr
            if est.partial:
                note = "partial: " + ", ".join(d.term.label() for d in est.discarded_terms)
        rows.append(ScanRow(theta, exact, s_hat, s_err, note=note))
    return rows
