"""Named experimental protocols built on the measurement engines."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import minimize_scalar

from .elements import Arm, polaroid, quarter_wave_plate
from .models import (
    BellSource,
    CircularPair,
    JointDistribution,
    ModelKind,
    Source,
    StationSetting,
    analytic_joint,
    polaroid_joint,
)
from .states import BellKind, Handedness, PropagationAxis
from .stats import Tally, run_trials

RULE_TOL = 1e-12
HANDS = (Handedness.RIGHT, Handedness.LEFT)


def _check_grid(values: Sequence[float], name: str) -> tuple[float, ...]:
    grid = tuple(float(v) for v in values)
    if not grid:
        raise ValueError(f"{name} grid must not be empty")
    if any(not math.isfinite(v) for v in grid):
        raise ValueError(f"{name} grid must be finite")
    if any(b <= a for a, b in zip(grid, grid[1:])):
        raise ValueError(f"{name} grid must be strictly increasing")
    return grid


@dataclass(frozen=True)
class MonteCarlo:
    trials: int
    seed: int


# --- coincidence scan ------------------------------------------------------------

@dataclass(frozen=True)
class CoincidenceScan:
    source: Source
    model: ModelKind
    theta_a: float
    thetas_b: tuple[float, ...]
    monte_carlo: MonteCarlo | None = None

    def __post_init__(self):
        object.__setattr__(self, "thetas_b", _check_grid(self.thetas_b, "theta_b"))


@dataclass(frozen=True)
class ScanRow:
    theta_b: float
    joint: JointDistribution
    tally: Tally | None = None


def run_coincidence_scan(spec: CoincidenceScan) -> list[ScanRow]:
    rows = []
    set_a = StationSetting.polaroid(spec.theta_a)
    for i, tb in enumerate(spec.thetas_b):
        set_b = StationSetting.polaroid(tb)
        joint = analytic_joint(spec.model, spec.source, set_a, set_b)
        tally = None
        if spec.monte_carlo is not None:
            n = spec.monte_carlo.trials
            # grid point i owns trial indices i*n .. (i+1)*n - 1
            tally = run_trials(spec.model, spec.source, set_a, set_b, n,
                               spec.monte_carlo.seed, start=i * n)
        rows.append(ScanRow(tb, joint, tally))
    return rows


# --- orientation rules -----------------------------------------------------------

@dataclass(frozen=True)
class OrientationRule:
    """Perfect-correlation line ``theta_B = slope * theta_A + offset``."""

    slope: int
    offset: float

    def __post_init__(self):
        if self.slope not in (1, -1):
            raise ValueError("slope must be +1 or -1")
        off = math.fmod(self.offset, math.pi)
        if off < 0:
            off += math.pi
        if math.isclose(off, math.pi, abs_tol=1e-12):
            off = 0.0
        object.__setattr__(self, "offset", off)

    def theta_b(self, theta_a: float) -> float:
        return self.slope * theta_a + self.offset

    def same_as(self, other: OrientationRule, tol: float = 1e-9) -> bool:
        d = abs(self.offset - other.offset)
        return self.slope == other.slope and min(d, math.pi - d) <= tol

    def describe(self) -> str:
        if self.slope == 1 and abs(self.offset) < 1e-12:
            return "parallel"
        if self.slope == 1 and abs(self.offset - math.pi / 2) < 1e-12:
            return "perpendicular"
        sign = "" if self.slope == 1 else "-"
        if abs(self.offset) < 1e-12:
            return f"theta_B = {sign}theta_A"
        return f"theta_B = {sign}theta_A + {self.offset:.12g}"


# Relative orientations as conventionally listed for the four Bell states.
LISTED_RULES: dict[BellKind, OrientationRule] = {
    BellKind.PHI_PLUS: OrientationRule(1, 0.0),
    BellKind.PSI_PLUS: OrientationRule(1, math.pi / 2),
    BellKind.PHI_MINUS: OrientationRule(-1, 0.0),
    BellKind.PSI_MINUS: OrientationRule(-1, math.pi / 2),
}


def _perfect(joint: JointDistribution, tol: float) -> bool:
    return joint.p_pa <= tol and joint.p_ap <= tol


def _rule_holds(model: ModelKind, source: Source, rule: OrientationRule,
                thetas_a: Sequence[float], tol: float) -> bool:
    return all(
        _perfect(polaroid_joint(model, source, ta, rule.theta_b(ta)), tol) for ta in thetas_a
    )


def angle_grid(n: int, span: float = math.pi) -> list[float]:
    return [span * k / n for k in range(n)]


def search_orientation_rules(model: ModelKind, source: Source, *, coarse_points: int = 12,
                             fine_points: int = 48, tol: float = RULE_TOL) -> list[OrientationRule]:
    """All slope/offset lines (1 degree offset grid) on which the twins always agree."""
    coarse = angle_grid(coarse_points)
    fine = angle_grid(fine_points)
    found = []
    for slope in (1, -1):
        for deg in range(180):
            rule = OrientationRule(slope, deg * math.pi / 180)
            if _rule_holds(model, source, rule, coarse, 1e-9) and \
                    _rule_holds(model, source, rule, fine, tol):
                found.append(rule)
    return found


def find_orientation_rule(kind: BellKind, model: ModelKind = ModelKind.STANDARD_QM) -> OrientationRule:
    rules = search_orientation_rules(model, BellSource(kind))
    if len(rules) != 1:
        raise RuntimeError(
            f"expected exactly one orientation rule for {kind.value}, found {len(rules)}"
        )
    return rules[0]


@dataclass(frozen=True)
class RuleCheck:
    kind: BellKind
    found: OrientationRule
    listed: OrientationRule

    @property
    def agrees(self) -> bool:
        return self.found.same_as(self.listed)


def verify_rules(model: ModelKind = ModelKind.STANDARD_QM) -> list[RuleCheck]:
    """Brute-forced rule next to the listed one for every Bell state; disagreement is reported, not raised."""
    order = (BellKind.PHI_PLUS, BellKind.PHI_MINUS, BellKind.PSI_PLUS, BellKind.PSI_MINUS)
    return [RuleCheck(k, find_orientation_rule(k, model), LISTED_RULES[k]) for k in order]


# --- operational correlation -----------------------------------------------------

@dataclass(frozen=True)
class CorrelationWitness:
    correlated: bool
    theta_a: float
    theta_b: float
    conditional: float
    """P(B passes | A passes) at the witness configuration."""
    rule: OrientationRule | None = None


def _conditional(model: ModelKind, source: Source, ta: float, tb: float) -> float:
    j = polaroid_joint(model, source, ta, tb)
    return j.p_pp / j.marginal_a if j.marginal_a > 0 else 0.0


def operational_correlation_test(source: Source, model: ModelKind, *,
                                 grid_points: int = 36) -> CorrelationWitness:
    """Look for polaroid axes at which every twin of a passing photon also passes.

    A coarse grid over both axes locates the best configuration, which is then
    refined in ``theta_B``. When correlated, the line of such configurations
    is also reported as an :class:`OrientationRule`.
    """
    grid = angle_grid(grid_points)
    best = max(
        ((_conditional(model, source, ta, tb), ta, tb) for ta in grid for tb in grid),
        key=lambda t: t[0],
    )
    cond, ta, tb = best
    if cond < 1.0 - 1e-12:
        step = math.pi / grid_points
        res = minimize_scalar(lambda x: -_conditional(model, source, ta, x),
                              bounds=(tb - step, tb + step), method="bounded",
                              options={"xatol": 1e-12})
        if -res.fun > cond:
            cond, tb = -res.fun, float(res.x)
    correlated = cond >= 1.0 - 1e-9
    rule = None
    if correlated:
        rules = search_orientation_rules(model, source)
        rule = rules[0] if len(rules) == 1 else None
        if rule is not None:
            ta, tb = 0.0, rule.theta_b(0.0)
            cond = _conditional(model, source, ta, tb)
    return CorrelationWitness(correlated, ta, tb, cond, rule)


# --- quarter-wave-plate experiments ----------------------------------------------

def circular_detector(h: Handedness, axis: PropagationAxis = PropagationAxis.PLUS_Z,
                      plate_axis: float = 0.0) -> StationSetting:
    """Quarter-wave plate followed by a polaroid at +-pi/4 to its fast axis.

    Passes photons of handedness ``h`` (relative to travel along ``axis``)
    with certainty and blocks the opposite handedness.
    """
    plus = (h is Handedness.RIGHT) == (axis is PropagationAxis.PLUS_Z)
    offset = math.pi / 4 if plus else -math.pi / 4
    return StationSetting((quarter_wave_plate(plate_axis), polaroid(plate_axis + offset)))


@dataclass(frozen=True)
class QwpIntensityScan:
    thetas: tuple[float, ...]
    model: ModelKind = ModelKind.LOCAL_CIRCULAR
    source: Source = field(default_factory=CircularPair)
    arm: Arm = Arm.NU1
    plate_axis: float = 0.0
    monte_carlo: MonteCarlo | None = None

    def __post_init__(self):
        object.__setattr__(self, "thetas", _check_grid(self.thetas, "theta"))


@dataclass(frozen=True)
class IntensityRow:
    theta: float
    pass_probability: float
    frequency: float | None = None


def qwp_experiment_a(spec: QwpIntensityScan) -> list[IntensityRow]:
    """Single-beam pass probability through plate + polaroid as the polaroid turns.

    The polaroid angle ``theta`` is measured from the plate's fast axis.
    """
    rows = []
    for i, theta in enumerate(spec.thetas):
        station = StationSetting((quarter_wave_plate(spec.plate_axis),
                                  polaroid(spec.plate_axis + theta)))
        if spec.arm is Arm.NU1:
            set_a, set_b = station, StationSetting.open()
        else:
            set_a, set_b = StationSetting.open(), station
        joint = analytic_joint(spec.model, spec.source, set_a, set_b)
        p = joint.marginal_a if spec.arm is Arm.NU1 else joint.marginal_b
        freq = None
        if spec.monte_carlo is not None:
            n = spec.monte_carlo.trials
            t = run_trials(spec.model, spec.source, set_a, set_b, n, spec.monte_carlo.seed,
                           start=i * n)
            freq = (t.pass_a if spec.arm is Arm.NU1 else t.pass_b) / n
        rows.append(IntensityRow(theta, p, freq))
    return rows


@dataclass(frozen=True)
class QwpCoincidence:
    model: ModelKind = ModelKind.STANDARD_QM
    source: Source = field(default_factory=lambda: BellSource(BellKind.PHI_PLUS))
    plate_axis_a: float = 0.0
    plate_axis_b: float = 0.0
    monte_carlo: MonteCarlo | None = None


@dataclass(frozen=True)
class CircularCoincidence:
    """Coincidence probabilities indexed ``[A detector][B detector]`` over (R, L).

    ``matched`` labels each detector by the handedness it passes relative to
    its own photon's travel direction. ``lab`` labels B's detector by the
    lab-frame polaroid offset it shares with A's detector of the same name,
    which is the other handedness for a photon travelling along -z.
    """

    matched: np.ndarray
    lab: np.ndarray
    matched_tallies: tuple[tuple[Tally, ...], ...] | None = None


def qwp_experiment_b(spec: QwpCoincidence) -> CircularCoincidence:
    matched = np.zeros((2, 2))
    lab = np.zeros((2, 2))
    tallies = []
    for i, ha in enumerate(HANDS):
        det_a = circular_detector(ha, PropagationAxis.PLUS_Z, spec.plate_axis_a)
        row = []
        for k, hb in enumerate(HANDS):
            det_b = circular_detector(hb, PropagationAxis.MINUS_Z, spec.plate_axis_b)
            lab_b = circular_detector(hb.other, PropagationAxis.MINUS_Z, spec.plate_axis_b)
            matched[i, k] = analytic_joint(spec.model, spec.source, det_a, det_b).p_pp
            lab[i, k] = analytic_joint(spec.model, spec.source, det_a, lab_b).p_pp
            if spec.monte_carlo is not None:
                n = spec.monte_carlo.trials
                row.append(run_trials(spec.model, spec.source, det_a, det_b, n,
                                      spec.monte_carlo.seed, start=(2 * i + k) * n))
        tallies.append(tuple(row))
    matched.setflags(write=False)
    lab.setflags(write=False)
    return CircularCoincidence(matched, lab,
                               tuple(tallies) if spec.monte_carlo is not None else None)
