"""Jones-calculus model of the polarization measurement stations.

A station is a waveplate stack followed by a PBS. The PBS transmits |H> (outcome 0,
eigenvalue +1) and reflects |V>, so a stack with Jones matrix U realizes the
observable U^dagger sigma_z U.

Jones conventions
-----------------
hwp(phi) = [[cos 2phi, sin 2phi], [sin 2phi, -cos 2phi]]
qwp(phi) = [[cos^2 phi + i sin^2 phi, (1 - i) sin phi cos phi],
            [(1 - i) sin phi cos phi, sin^2 phi + i cos^2 phi]]
Global phases are dropped. Because published angle tables rarely state their
convention, :class:`JonesConvention` also offers the retardance-conjugate QWP and a
"rotation angle" reading in which a quoted HWP angle is twice the fast-axis angle.
"""

from __future__ import annotations

import csv
import enum
import io
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .errors import NoConvergence
from .quantum import PAULIS, SIGMA_Z, Array, Observable, bloch_observable, pauli

TABLE_RESOURCE = "table1.csv"


class PlateKind(str, enum.Enum):
    HWP = "HWP"
    QWP = "QWP"


def normalize_angle(angle: float) -> float:
    """Map an angle to (-pi/2, pi/2]; both plate types are pi-periodic."""
    a = math.remainder(angle, math.pi)
    if a <= -math.pi / 2:
        a += math.pi
    return a


@dataclass(frozen=True)
class JonesConvention:
    name: str
    retardance_sign: int = 1
    hwp_angle_scale: float = 1.0


FAST_AXIS = JonesConvention("fast-axis")
FAST_AXIS_CONJUGATE = JonesConvention("fast-axis-conjugate", retardance_sign=-1)
ROTATION_ANGLE = JonesConvention("rotation-angle", hwp_angle_scale=0.5)
ROTATION_ANGLE_CONJUGATE = JonesConvention("rotation-angle-conjugate", retardance_sign=-1, hwp_angle_scale=0.5)
DEFAULT_CONVENTION = FAST_AXIS
CONVENTIONS = (FAST_AXIS, FAST_AXIS_CONJUGATE, ROTATION_ANGLE, ROTATION_ANGLE_CONJUGATE)


def hwp_matrix(angle):
    """Half-wave plate with fast axis at ``angle`` (radians); broadcasts over arrays."""
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(2 * angle), np.sin(2 * angle)
    return np.stack([np.stack([c, s], -1), np.stack([s, -c], -1)], -2).astype(complex)


def qwp_matrix(angle, conjugate: bool = False):
    """Quarter-wave plate with fast axis at ``angle`` (radians); broadcasts over arrays."""
    angle = np.asarray(angle, dtype=float)
    c, s = np.cos(angle), np.sin(angle)
    off = (1 - 1j) * s * c
    m = np.stack([np.stack([c * c + 1j * s * s, off], -1), np.stack([off, s * s + 1j * c * c], -1)], -2)
    return m.conj() if conjugate else m


@dataclass(frozen=True)
class Waveplate:
    kind: PlateKind
    angle: float

    def __post_init__(self):
        object.__setattr__(self, "kind", PlateKind(self.kind))
        object.__setattr__(self, "angle", normalize_angle(float(self.angle)))

    def matrix(self, convention: JonesConvention = DEFAULT_CONVENTION) -> Array:
        if self.kind is PlateKind.HWP:
            return hwp_matrix(self.angle * convention.hwp_angle_scale)
        return qwp_matrix(self.angle, conjugate=convention.retardance_sign < 0)

    @property
    def degrees(self) -> float:
        return math.degrees(self.angle)


@dataclass(frozen=True)
class WaveplateSequence:
    """Plates in traversal order; the PBS follows the last one."""

    plates: tuple[Waveplate, ...]

    def __post_init__(self):
        plates = tuple(self.plates)
        if len(plates) not in (1, 3):
            raise ValueError("a measurement stack is a single HWP or a QWP-HWP-QWP sandwich")
        kinds = tuple(p.kind for p in plates)
        if len(plates) == 1 and kinds != (PlateKind.HWP,):
            raise ValueError("single-plate stacks must be a HWP")
        if len(plates) == 3 and kinds != (PlateKind.QWP, PlateKind.HWP, PlateKind.QWP):
            raise ValueError("three-plate stacks must be QWP-HWP-QWP")
        object.__setattr__(self, "plates", plates)

    @classmethod
    def single_hwp(cls, angle: float) -> WaveplateSequence:
        return cls((Waveplate(PlateKind.HWP, angle),))

    @classmethod
    def sandwich(cls, q1: float, h: float, q2: float) -> WaveplateSequence:
        return cls((Waveplate(PlateKind.QWP, q1), Waveplate(PlateKind.HWP, h), Waveplate(PlateKind.QWP, q2)))

    @classmethod
    def sandwich_degrees(cls, q1: float, h: float, q2: float) -> WaveplateSequence:
        return cls.sandwich(*map(math.radians, (q1, h, q2)))

    @property
    def angles(self) -> tuple[float, ...]:
        return tuple(p.angle for p in self.plates)

    @property
    def degrees(self) -> tuple[float, ...]:
        return tuple(p.degrees for p in self.plates)


def sequence_unitary(seq: WaveplateSequence, convention: JonesConvention = DEFAULT_CONVENTION) -> Array:
    u = np.eye(2, dtype=complex)
    for plate in seq.plates:
        u = plate.matrix(convention) @ u
    return u


def _realized_bloch(u: Array) -> Array:
    """Bloch vector(s) of U^dagger sigma_z U, broadcasting over leading axes."""
    m = np.swapaxes(u.conj(), -1, -2) @ SIGMA_Z @ u
    return np.stack([np.real(np.einsum("...ij,ji->...", m, p)) / 2 for p in PAULIS], -1)


def realized_observable(seq: WaveplateSequence, convention: JonesConvention = DEFAULT_CONVENTION) -> Observable:
    n = _realized_bloch(sequence_unitary(seq, convention))
    return bloch_observable(n / np.linalg.norm(n))


# --- angle solver -----------------------------------------------------------


def _conjugated_bloch(u: Array, n: Array) -> Array:
    """Bloch vector(s) of U (n . sigma) U^dagger."""
    op = n[..., 0, None, None] * PAULIS[0] + n[..., 1, None, None] * PAULIS[1] + n[..., 2, None, None] * PAULIS[2]
    m = u @ op @ np.swapaxes(u.conj(), -1, -2)
    return np.stack([np.real(np.einsum("...ij,ji->...", m, p)) / 2 for p in PAULIS], -1)


def _branches(n: Array, q2: Array, convention: JonesConvention) -> tuple[Array, Array, Array]:
    """All (q1, h) completing a sandwich for each q2; returns reported angles, NaN if infeasible.

    Output arrays have shape (2, len(q2)) for the two q1 branches.
    """
    conj = convention.retardance_sign < 0
    # the sandwich must send m = (state that the last QWP maps to |H>) back to n
    m = _realized_bloch(qwp_matrix(q2, conj))
    # (R_Q(q) n)_y = s r sin(alpha - 2q): 90 degree rotation about the equatorial axis at 2q
    s = _conjugated_bloch(qwp_matrix(0.0, conj), np.array([1.0, 0.0, 0.0]))[1]
    r = math.hypot(n[0], n[2])
    alpha = math.atan2(n[0], n[2])
    if r > 1e-12:
        with np.errstate(invalid="ignore"):
            beta = np.arcsin(-m[:, 1] / (s * r))
    else:
        # n = +-y: the first QWP leaves the y component at zero for every q1
        beta = np.where(np.abs(m[:, 1]) < 1e-12, 0.0, np.nan)
    q1s = np.stack([(alpha - beta) / 2, (alpha - np.pi + beta) / 2])
    q1s = np.remainder(q1s + np.pi / 2, np.pi) - np.pi / 2
    q1s = np.where(q1s <= -np.pi / 2, q1s + np.pi, q1s)

    w = _conjugated_bloch(qwp_matrix(np.nan_to_num(q1s), conj), np.broadcast_to(n, q1s.shape + (3,)))
    # a pi rotation about the equatorial axis at angle psi reflects the xz-plane angle phi -> 2 psi - phi
    phi_w = np.arctan2(w[..., 0], w[..., 2])
    phi_m = np.arctan2(m[..., 0], m[..., 2])[None]
    h_phys = (phi_w + phi_m) / 4
    # hwp(h + pi/2) = -hwp(h): choose the representative in (-pi/4, pi/4]
    h_phys = np.remainder(h_phys + np.pi / 4, np.pi / 2) - np.pi / 4
    h_phys = np.where(h_phys <= -np.pi / 4, h_phys + np.pi / 2, h_phys)
    h = h_phys / convention.hwp_angle_scale
    q1s = np.where(np.isnan(beta)[None], np.nan, q1s)
    return q1s, h, np.broadcast_to(q2, q1s.shape)


def _objective(q1: Array, h: Array, q2: Array) -> Array:
    return np.fmax(np.fmax(np.abs(q1), np.abs(h)), np.abs(q2))


def solve_angles(
    target: Observable,
    convention: JonesConvention = DEFAULT_CONVENTION,
    grid: int = 181,
    tol: float = 1e-9,
) -> WaveplateSequence:
    """QWP-HWP-QWP angles whose stack realizes ``target`` with +1 on the transmitted port.

    The first QWP and the HWP are solved in closed form for each value of the
    last QWP; the last QWP angle is then chosen to minimize the largest absolute
    angle (coarse grid followed by zoomed refinement). Ties are broken by
    lexicographic order on (q1, h, q2).
    """
    n = np.asarray(target.bloch, dtype=float)
    lo, hi = -np.pi / 2, np.pi / 2
    q2 = np.linspace(lo, hi, grid)
    q1s, hs, q2s = _branches(n, q2, convention)
    obj = np.where(np.isnan(q1s), np.inf, _objective(q1s, hs, q2s))
    best = float(np.min(obj))
    if not np.isfinite(best):
        raise NoConvergence("no feasible sandwich found on the search grid")
    step = q2[1] - q2[0]
    seeds = sorted(
        {(int(b), float(q2[k])) for b, k in zip(*np.nonzero(obj <= best + 1e-9))},
        key=lambda t: (t[1], t[0]),
    )[:4]

    candidates = []
    for branch, centre in seeds:
        width = step
        for _ in range(4):
            local = np.clip(np.linspace(centre - width, centre + width, 201), lo, hi)
            q1l, hl, q2l = _branches(n, local, convention)
            ol = np.where(np.isnan(q1l[branch]), np.inf, _objective(q1l[branch], hl[branch], q2l[branch]))
            k = int(np.argmin(ol))
            centre = float(local[k])
            width /= 50
        q1l, hl, _ = _branches(n, np.array([centre]), convention)
        if not np.isnan(q1l[branch, 0]):
            angles = (float(q1l[branch, 0]), float(hl[branch, 0]), normalize_angle(centre))
            candidates.append(angles)

    candidates.sort(key=lambda a: (round(max(map(abs, a)), 9), a))
    for q1, h, q2v in candidates:
        seq = _polish(WaveplateSequence.sandwich(q1, h, q2v), n, convention, tol)
        if seq is not None:
            return seq
    raise NoConvergence(f"sandwich residual above {tol} for target {n}")


def _polish(seq: WaveplateSequence, n: Array, convention: JonesConvention, tol: float) -> WaveplateSequence | None:
    """Return ``seq`` if it already meets ``tol``, else refine it with a derivative-free search."""
    def residual(angles):
        s = WaveplateSequence.sandwich(*angles)
        return float(np.linalg.norm(_realized_bloch(sequence_unitary(s, convention)) - n))

    if residual(seq.angles) < tol:
        return seq
    from scipy.optimize import minimize

    res = minimize(residual, np.array(seq.angles), method="Nelder-Mead", options={"xatol": 1e-13, "fatol": 1e-15})
    if res.fun < tol:
        return WaveplateSequence.sandwich(*res.x)
    return None


# --- angle table verification ------------------------------------------------


@dataclass(frozen=True)
class TableRow:
    theta: float
    b0_angles: tuple[float, float, float]
    b1_angles: tuple[float, float, float]

    @property
    def theta_over_pi(self) -> float:
        return self.theta / math.pi


def bob_targets(theta: float) -> tuple[Observable, Observable]:
    s, c = math.sin(2 * theta), math.cos(2 * theta)
    return bloch_observable((s, 0.0, c)), bloch_observable((0.0, s, c))


@dataclass(frozen=True)
class ObservableCheck:
    realized: Array
    deviation: float
    swapped_deviation: float


@dataclass(frozen=True)
class ConventionCheck:
    convention: str
    b0: ObservableCheck
    b1: ObservableCheck

    @property
    def score(self) -> float:
        return self.b0.deviation + self.b1.deviation


@dataclass(frozen=True)
class RowReport:
    row: TableRow
    tolerance: float
    best: ConventionCheck
    checks: tuple[ConventionCheck, ...] = field(repr=False)

    @property
    def b0_deviation(self) -> float:
        return self.best.b0.deviation

    @property
    def b1_deviation(self) -> float:
        return self.best.b1.deviation

    @property
    def pass_b0(self) -> bool:
        return self.b0_deviation <= self.tolerance

    @property
    def pass_b1(self) -> bool:
        return self.b1_deviation <= self.tolerance

    @property
    def passed(self) -> bool:
        return self.pass_b0 and self.pass_b1

    @property
    def swapped_b0(self) -> bool:
        return not self.pass_b0 and self.best.b0.swapped_deviation <= self.tolerance

    @property
    def swapped_b1(self) -> bool:
        return not self.pass_b1 and self.best.b1.swapped_deviation <= self.tolerance

    def status(self) -> str:
        if self.passed:
            return "pass"
        if (self.pass_b0 or self.swapped_b0) and (self.pass_b1 or self.swapped_b1):
            return "outcome-swapped"
        return "flag"

    def as_dict(self) -> dict:
        return {
            "theta_over_pi": round(self.row.theta_over_pi, 6),
            "b0_angles_deg": list(self.row.b0_angles),
            "b1_angles_deg": list(self.row.b1_angles),
            "convention": self.best.convention,
            "b0_deviation": self.b0_deviation,
            "b1_deviation": self.b1_deviation,
            "b0_swapped_deviation": self.best.b0.swapped_deviation,
            "b1_swapped_deviation": self.best.b1.swapped_deviation,
            "pass_b0": self.pass_b0,
            "pass_b1": self.pass_b1,
            "swapped_b0": self.swapped_b0,
            "swapped_b1": self.swapped_b1,
            "status": self.status(),
            "tolerance": self.tolerance,
            "per_convention": {
                c.convention: {"b0_deviation": c.b0.deviation, "b1_deviation": c.b1.deviation} for c in self.checks
            },
        }


def _check(angles_deg: Sequence[float], target: Observable, convention: JonesConvention) -> ObservableCheck:
    if any(not math.isfinite(a) for a in angles_deg):
        return ObservableCheck(np.full(3, np.nan), math.inf, math.inf)
    seq = WaveplateSequence.sandwich_degrees(*angles_deg)
    n = _realized_bloch(sequence_unitary(seq, convention))
    return ObservableCheck(n, float(np.linalg.norm(n - target.bloch)), float(np.linalg.norm(n + target.bloch)))


def verify_table_row(
    row: TableRow,
    tolerance: float = 0.02,
    conventions: Iterable[JonesConvention] = CONVENTIONS,
) -> RowReport:
    """Deviation of a printed angle row from the targets B0(theta), B1(theta)."""
    t0, t1 = bob_targets(row.theta)
    checks = tuple(
        ConventionCheck(c.name, _check(row.b0_angles, t0, c), _check(row.b1_angles, t1, c)) for c in conventions
    )
    rank = {"pass": 0, "outcome-swapped": 1, "flag": 2}
    reports = [RowReport(row, tolerance, c, checks) for c in checks]
    # best status, then most columns matched (directly, then up to sign), then smallest deviation
    return min(
        reports,
        key=lambda r: (
            rank[r.status()],
            -(r.pass_b0 + r.pass_b1),
            -(r.swapped_b0 + r.swapped_b1),
            r.best.score,
        ),
    )


def _parse_theta(text: str) -> float:
    text = text.strip()
    if text.endswith("pi"):
        return float(text[:-2] or 1.0) * math.pi
    return float(text)


def parse_table(text: str) -> list[TableRow]:
    """Parse the angle table: a CSV with theta (e.g. ``0.05pi``) and six angles in degrees.

    Lines starting with ``#`` are comments. Unparseable angle fields become NaN so
    that a damaged row is flagged without affecting its neighbours.
    """
    lines = [ln for ln in text.splitlines() if ln.strip() and not ln.lstrip().startswith("#")]
    rows = []
    for rec in csv.DictReader(io.StringIO("\n".join(lines))):
        def angle(key):
            try:
                return float(rec[key])
            except (TypeError, ValueError):
                return math.nan

        rows.append(
            TableRow(
                _parse_theta(rec["theta"]),
                (angle("b0_q1"), angle("b0_h"), angle("b0_q2")),
                (angle("b1_q1"), angle("b1_h"), angle("b1_q2")),
            )
        )
    return rows


def load_table(path: str | Path | None = None) -> list[TableRow]:
    if path is None:
        text = resources.files("steercert").joinpath("data", TABLE_RESOURCE).read_text(encoding="utf-8")
    else:
        text = Path(path).read_text(encoding="utf-8")
    return parse_table(text)


# Fixed settings for Alice and Charlie as printed in the experimental layout.
HWP_SIGMA_X = WaveplateSequence.single_hwp(math.radians(22.5))
SANDWICH_SIGMA_Y = WaveplateSequence.sandwich(0.0, math.pi / 4, math.pi / 2)
FIXED_TARGETS = {"sigma_x": pauli("x"), "sigma_y": pauli("y")}
