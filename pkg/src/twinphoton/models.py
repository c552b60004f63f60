"""Three interchangeable descriptions of a two-station polarization experiment.

``STANDARD_QM``
    Born rule on the pair state with collapse after the first measurement.
``CORRELATED_RULE``
    Each photon is in a definite state; the first station passes half the
    photons and the twin then passes the second station by Malus law
    relative to the partner orientation fixed by a per-Bell-state rule.
``LOCAL_CIRCULAR``
    Each pair carries a shared circular handedness fixed at emission; the
    two photons are then analyzed independently.

All three compile to a :class:`_Plan`, from which both the exact joint
distribution and sampled trials are read, so the two can never disagree.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence, Union

import numpy as np

from .elements import (
    Arm,
    ElementKind,
    ElementOperator,
    apply_matrix_to_arm,
    compose,
    identity,
    kraus_pair,
    polaroid,
    rotation,
)
from .rng import RngState, trial_uniforms
from .states import (
    BellKind,
    Handedness,
    PolarizationState,
    PropagationAxis,
    bell_state,
    circular_state,
    linear_state,
    projection_probability,
    same_handedness,
)

PROB_TOL = 1e-12
# probabilities this close to 0 or 1 are treated as exact
SNAP_TOL = 1e-13


class ModelKind(enum.Enum):
    STANDARD_QM = "standard-qm"
    CORRELATED_RULE = "correlated-rule"
    LOCAL_CIRCULAR = "local-circular"


class Outcome(enum.Enum):
    PASS = "pass"
    ABSORB = "absorb"


class ImpossibleOutcome(ValueError):
    """Conditioning on an outcome that has probability zero."""


@dataclass(frozen=True)
class BellSource:
    kind: BellKind

    @property
    def name(self) -> str:
        return self.kind.value


@dataclass(frozen=True)
class CircularPair:
    """Pairs that are both right- or both left-circular, 50/50."""

    @property
    def name(self) -> str:
        return "circular-pair"


Source = Union[BellSource, CircularPair]


def parse_source(name: str) -> Source:
    if name == "circular-pair":
        return CircularPair()
    try:
        return BellSource(BellKind(name))
    except ValueError:
        raise ValueError(f"unknown source {name!r}") from None


@dataclass(frozen=True, eq=False)
class StationSetting:
    """Element chain in front of a detector; the detector clicks iff the photon passes."""

    chain: tuple[ElementOperator, ...]

    def __post_init__(self):
        chain = tuple(self.chain)
        if not chain:
            raise ValueError("station chain must not be empty")
        if chain[-1].kind is not ElementKind.PROJECTOR:
            raise ValueError("station chain must end with a polaroid")
        object.__setattr__(self, "chain", chain)

    @classmethod
    def polaroid(cls, theta: float) -> StationSetting:
        return cls((polaroid(theta),))

    @classmethod
    def open(cls) -> StationSetting:
        """No analyzer: every photon reaching the station is detected."""
        return cls((identity(),))

    @cached_property
    def operator(self) -> ElementOperator:
        return compose(self.chain)

    @cached_property
    def polaroid_angle(self) -> float | None:
        """Axis angle when the station is one bare polaroid, else ``None``."""
        if len(self.chain) != 1 or self.chain[0].kind is not ElementKind.PROJECTOR:
            return None
        return self.chain[0].axis

    @property
    def is_open(self) -> bool:
        return bool(np.allclose(self.operator.m, np.eye(2), atol=1e-15, rtol=0))

    @property
    def label(self) -> str:
        return self.operator.label


@dataclass(frozen=True)
class JointDistribution:
    """Probabilities of (A outcome, B outcome), pass/absorb at each station."""

    p_pp: float
    p_pa: float
    p_ap: float
    p_aa: float

    def __post_init__(self):
        cells = self.cells()
        if any(not (-PROB_TOL <= p <= 1 + PROB_TOL) for p in cells):
            raise ValueError(f"probabilities out of range: {cells}")
        if abs(sum(cells) - 1.0) > PROB_TOL:
            raise ValueError(f"joint distribution sums to {sum(cells)!r}, not 1")

    def cells(self) -> tuple[float, float, float, float]:
        return (self.p_pp, self.p_pa, self.p_ap, self.p_aa)

    def as_array(self) -> np.ndarray:
        return np.array(self.cells())

    def cell(self, a: Outcome, b: Outcome) -> float:
        return self.cells()[_cell_index(a, b)]

    @property
    def marginal_a(self) -> float:
        return self.p_pp + self.p_pa

    @property
    def marginal_b(self) -> float:
        return self.p_pp + self.p_ap


CELL_NAMES = ("pp", "pa", "ap", "aa")


def _cell_index(a: Outcome, b: Outcome) -> int:
    return (0 if a is Outcome.PASS else 2) + (0 if b is Outcome.PASS else 1)


@dataclass(frozen=True)
class TrialRecord:
    hidden: Handedness | None
    outcome_a: Outcome
    outcome_b: Outcome


def _snap(p: float) -> float:
    if p < SNAP_TOL:
        return 0.0
    if p > 1.0 - SNAP_TOL:
        return 1.0
    return p


@dataclass(frozen=True)
class _Branch:
    """One hidden value: first-station pass probability and conditional second-station ones."""

    weight: float
    hidden: Handedness | None
    p_first: float
    p_second_if_pass: float
    p_second_if_absorb: float


@dataclass(frozen=True)
class _Plan:
    first: Arm
    branches: tuple[_Branch, ...] = field(default_factory=tuple)

    def joint(self) -> JointDistribution:
        # rows: first station, cols: second station
        t = np.zeros((2, 2))
        for br in self.branches:
            p1 = np.array([br.p_first, 1.0 - br.p_first])
            p2 = np.array(
                [
                    [br.p_second_if_pass, 1.0 - br.p_second_if_pass],
                    [br.p_second_if_absorb, 1.0 - br.p_second_if_absorb],
                ]
            )
            t += br.weight * p1[:, None] * p2
        if self.first is Arm.NU2:
            t = t.T
        return JointDistribution(*(float(x) for x in t.ravel()))

    def sample(self, u: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Outcomes for uniforms ``u`` of shape ``(n, 4)``.

        Slot 0 picks the hidden branch, slot 1 the first station, slot 2 the
        second. Returns ``(branch_index, pass_a, pass_b)``.
        """
        n = u.shape[0]
        if len(self.branches) == 1:
            idx = np.zeros(n, dtype=np.int64)
        else:
            cum = np.cumsum([br.weight for br in self.branches])[:-1]
            idx = np.searchsorted(cum, u[:, 0], side="right")
        p_first = np.array([br.p_first for br in self.branches])[idx]
        first = u[:, 1] < p_first
        p_pass = np.array([br.p_second_if_pass for br in self.branches])[idx]
        p_abs = np.array([br.p_second_if_absorb for br in self.branches])[idx]
        second = u[:, 2] < np.where(first, p_pass, p_abs)
        if self.first is Arm.NU1:
            return idx, first, second
        return idx, second, first


def _check_combination(model: ModelKind, source: Source) -> None:
    if model is ModelKind.STANDARD_QM and not isinstance(source, BellSource):
        raise ValueError("standard-qm needs a Bell-state source, not circular-pair")
    if not isinstance(source, (BellSource, CircularPair)):
        raise ValueError(f"unknown source {source!r}")


def _plan(model: ModelKind, source: Source, set_a: StationSetting, set_b: StationSetting,
          order: Arm = Arm.NU1) -> _Plan:
    _check_combination(model, source)
    if model is ModelKind.STANDARD_QM:
        return _standard_plan(source.kind, set_a, set_b, order)
    if model is ModelKind.LOCAL_CIRCULAR:
        return _local_circular_plan(source, set_a, set_b)
    return _correlated_plan(source, set_a, set_b)


# --- standard quantum mechanics -------------------------------------------------

def _standard_plan(kind: BellKind, set_a: StationSetting, set_b: StationSetting,
                   order: Arm) -> _Plan:
    psi = bell_state(kind)
    first_set, second_set = (set_a, set_b) if order is Arm.NU1 else (set_b, set_a)
    second_arm = Arm.NU2 if order is Arm.NU1 else Arm.NU1
    k_pass, k_abs = kraus_pair(first_set.operator)
    second_m = second_set.operator.m

    def second_given(k: np.ndarray) -> tuple[float, float]:
        collapsed = apply_matrix_to_arm(psi, order, k)
        if collapsed.is_zero:
            return 0.0, 0.0
        return collapsed.weight, apply_matrix_to_arm(collapsed.state, second_arm, second_m).weight

    w_pass, p2_pass = second_given(k_pass)
    _, p2_abs = second_given(k_abs)
    branch = _Branch(1.0, None, _snap(w_pass), _snap(p2_pass), _snap(p2_abs))
    return _Plan(order, (branch,))


def conditional_state(source: BellSource, set_a: StationSetting,
                      outcome: Outcome) -> tuple[PolarizationState, float]:
    """State of nu2 after station A records ``outcome``, and that outcome's probability."""
    if not isinstance(source, BellSource):
        raise ValueError("conditional states are defined for Bell-state sources")
    k_pass, k_abs = kraus_pair(set_a.operator)
    k = k_pass if outcome is Outcome.PASS else k_abs
    res = apply_matrix_to_arm(bell_state(source.kind), Arm.NU1, k)
    if res.is_zero or _snap(res.weight) == 0.0:
        raise ImpossibleOutcome(f"outcome {outcome.value} at A has probability zero")
    u, s, vh = np.linalg.svd(res.state.matrix())
    if s[1] > 1e-9:
        raise ValueError("nu2 is still entangled with nu1 after this outcome")
    return PolarizationState(vh[0]), res.weight


# --- local circular hidden variable ---------------------------------------------

def _source_same_handedness(source: Source) -> bool:
    return True if isinstance(source, CircularPair) else same_handedness(source.kind)


def _twin_handedness(source: Source, h: Handedness) -> Handedness:
    return h if _source_same_handedness(source) else h.other


def _local_circular_plan(source: Source, set_a: StationSetting, set_b: StationSetting) -> _Plan:
    branches = []
    for h in (Handedness.RIGHT, Handedness.LEFT):
        s1 = circular_state(h, PropagationAxis.PLUS_Z)
        s2 = circular_state(_twin_handedness(source, h), PropagationAxis.MINUS_Z)
        pa = _snap(set_a.operator.pass_probability(s1))
        pb = _snap(set_b.operator.pass_probability(s2))
        branches.append(_Branch(0.5, h, pa, pb, pb))
    return _Plan(Arm.NU1, tuple(branches))


# --- correlated-rule description --------------------------------------------------

@dataclass(frozen=True)
class PairingRule:
    """Orientation at which the twin is certain to pass: ``slope * theta + offset``."""

    slope: int
    offset: float

    def partner_angle(self, theta: float) -> float:
        return self.slope * theta + self.offset

    def partner_matrix(self) -> np.ndarray:
        """Real orthogonal map sending ``linear_state(t)`` to ``linear_state(partner_angle(t))``."""
        return rotation(self.offset) @ np.diag([1.0, float(self.slope)])


# Frozen from the standard joint of each Bell state (re-derived in the tests).
PAIRING_RULES: dict[BellKind, PairingRule] = {
    BellKind.PHI_PLUS: PairingRule(+1, 0.0),
    BellKind.PHI_MINUS: PairingRule(-1, 0.0),
    BellKind.PSI_PLUS: PairingRule(-1, math.pi / 2),
    BellKind.PSI_MINUS: PairingRule(+1, math.pi / 2),
}


def _rule_kind(source: Source) -> BellKind:
    # circular pairs are the phi+ pairing written in the circular basis
    return BellKind.PHI_PLUS if isinstance(source, CircularPair) else source.kind


def _analyzer_vector(op: ElementOperator) -> np.ndarray | None:
    """Unit vector ``v`` when the chain's pass effect is exactly ``|v><v|``."""
    w, v = np.linalg.eigh(op.effect())
    if abs(w[0]) < 1e-12 and abs(w[1] - 1.0) < 1e-12:
        return v[:, 1]
    return None


def _effect_prob(op: ElementOperator, vec: np.ndarray) -> float:
    return float(np.vdot(vec, op.effect() @ vec).real)


def _correlated_plan(source: Source, set_a: StationSetting, set_b: StationSetting) -> _Plan:
    rule = PAIRING_RULES[_rule_kind(source)]
    hidden = isinstance(source, CircularPair)

    if set_a.is_open or set_b.is_open:
        # one station open: the other sees a photon of definite but unknown
        # circular handedness, passing with the handedness-averaged probability
        p_a = 1.0 if set_a.is_open else _snap(float(np.trace(set_a.operator.effect()).real) / 2)
        p_b = 1.0 if set_b.is_open else _snap(float(np.trace(set_b.operator.effect()).real) / 2)
        return _Plan(Arm.NU1, (_Branch(1.0, None, p_a, p_b, p_b),))

    theta_a, theta_b = set_a.polaroid_angle, set_b.polaroid_angle
    if theta_a is not None and theta_b is not None:
        partner = rule.partner_angle(theta_a)
        p_pass = projection_probability(linear_state(partner), theta_b)
        p_abs = projection_probability(linear_state(partner + math.pi / 2), theta_b)
        return _rule_plan(Arm.NU1, set_a, 0.5, p_pass, p_abs, hidden)

    t = rule.partner_matrix()
    v_a = _analyzer_vector(set_a.operator)
    if v_a is not None:
        first, first_set, second_set, vec, tmap = Arm.NU1, set_a, set_b, v_a, t
    else:
        v_b = _analyzer_vector(set_b.operator)
        if v_b is None:
            raise ValueError(
                "correlated-rule needs at least one station to be a lossless analyzer"
            )
        # partner of a nu2 analyzer is reached by the inverse (transposed) map
        first, first_set, second_set, vec, tmap = Arm.NU2, set_b, set_a, v_b, t.T
    perp = np.array([-np.conj(vec[1]), np.conj(vec[0])])
    p_pass = _effect_prob(second_set.operator, tmap @ np.conj(vec))
    p_abs = _effect_prob(second_set.operator, tmap @ np.conj(perp))
    return _rule_plan(first, first_set, 0.5, p_pass, p_abs, hidden)


def _rule_plan(first: Arm, first_set: StationSetting, p_first: float, p_pass: float,
               p_abs: float, hidden: bool) -> _Plan:
    p_pass, p_abs = _snap(p_pass), _snap(p_abs)
    if not hidden:
        return _Plan(first, (_Branch(1.0, None, p_first, p_pass, p_abs),))
    axis = PropagationAxis.PLUS_Z if first is Arm.NU1 else PropagationAxis.MINUS_Z
    branches = tuple(
        _Branch(0.5, h, _snap(first_set.operator.pass_probability(circular_state(h, axis))),
                p_pass, p_abs)
        for h in (Handedness.RIGHT, Handedness.LEFT)
    )
    return _Plan(first, branches)


# --- public engine surface -------------------------------------------------------

def analytic_joint(model: ModelKind, source: Source, set_a: StationSetting,
                   set_b: StationSetting, order: Arm = Arm.NU1) -> JointDistribution:
    """Exact joint distribution of the two stations' outcomes.

    ``order`` selects which station measures first; it only matters for
    the standard description, where it sets the collapse sequence.
    """
    return _plan(model, source, set_a, set_b, order).joint()


def polaroid_joint(model: ModelKind, source: Source, theta_a: float,
                   theta_b: float) -> JointDistribution:
    return analytic_joint(model, source, StationSetting.polaroid(theta_a),
                          StationSetting.polaroid(theta_b))


def _records(plan: _Plan, idx: np.ndarray, pass_a: np.ndarray,
             pass_b: np.ndarray) -> list[TrialRecord]:
    hidden = [br.hidden for br in plan.branches]
    return [
        TrialRecord(
            hidden[i],
            Outcome.PASS if a else Outcome.ABSORB,
            Outcome.PASS if b else Outcome.ABSORB,
        )
        for i, a, b in zip(idx.tolist(), pass_a.tolist(), pass_b.tolist())
    ]


def sample_trial(model: ModelKind, source: Source, set_a: StationSetting,
                 set_b: StationSetting, rng: RngState) -> TrialRecord:
    plan = _plan(model, source, set_a, set_b)
    return _records(plan, *plan.sample(rng.uniforms()[None, :]))[0]


def sample_trials(model: ModelKind, source: Source, set_a: StationSetting,
                  set_b: StationSetting, seed: int, start: int, n: int) -> list[TrialRecord]:
    """Records of trials ``start..start+n-1``; trial ``i`` equals ``sample_trial`` at ``RngState(seed, i)``."""
    plan = _plan(model, source, set_a, set_b)
    return _records(plan, *plan.sample(trial_uniforms(seed, start, n)))


def sample_outcome_arrays(model: ModelKind, source: Source, set_a: StationSetting,
                          set_b: StationSetting, seed: int, start: int,
                          n: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Vectorized form of :func:`sample_trials`: ``(branch_index, pass_a, pass_b)``."""
    plan = _plan(model, source, set_a, set_b)
    return plan.sample(trial_uniforms(seed, start, n))


def hidden_labels(model: ModelKind, source: Source, set_a: StationSetting,
                  set_b: StationSetting) -> list[Handedness | None]:
    return [br.hidden for br in _plan(model, source, set_a, set_b).branches]


def conditional_joints(model: ModelKind, source: Source, set_a: StationSetting,
                       set_b: StationSetting) -> list[tuple[Handedness | None, float, JointDistribution]]:
    """Joint distribution within each hidden branch, with the branch weight."""
    plan = _plan(model, source, set_a, set_b)
    return [(br.hidden, br.weight, _Plan(plan.first, (_Branch(1.0, *_fields(br)),)).joint())
            for br in plan.branches]


def _fields(br: _Branch) -> tuple:
    return (br.hidden, br.p_first, br.p_second_if_pass, br.p_second_if_absorb)


def settings_from_angles(angles: Sequence[float]) -> list[StationSetting]:
    return [StationSetting.polaroid(a) for a in angles]
