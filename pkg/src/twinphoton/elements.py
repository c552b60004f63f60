"""Jones operators for polaroids and waveplates acting on one arm of a pair."""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np

from .states import PolarizationState, TwoPhotonState, _check_angle, linear_state

OP_TOL = 1e-12


class Arm(enum.Enum):
    NU1 = "nu1"
    NU2 = "nu2"


class ElementKind(enum.Enum):
    PROJECTOR = "projector"
    UNITARY = "unitary"
    GENERAL = "general"


_EYE = np.eye(2)


def _close(a: np.ndarray, b: np.ndarray) -> bool:
    return float(np.max(np.abs(a - b))) <= OP_TOL


def _is_unitary(m: np.ndarray) -> bool:
    return _close(m.conj().T @ m, _EYE)


def _is_projector(m: np.ndarray) -> bool:
    return _close(m @ m, m) and _close(m.conj().T, m)


@dataclass(frozen=True, eq=False)
class ElementOperator:
    """2x2 Jones matrix of an optical element, tagged by what it is."""

    m: np.ndarray
    kind: ElementKind
    label: str
    axis: float | None

    def __init__(self, m, kind: ElementKind = ElementKind.GENERAL, label: str = "element",
                 axis: float | None = None):
        arr = np.array(m, dtype=complex).reshape(2, 2)
        if not np.all(np.isfinite(arr)):
            raise ValueError("element matrix must be finite")
        if kind is ElementKind.UNITARY and not _is_unitary(arr):
            raise ValueError(f"{label}: matrix tagged unitary is not unitary")
        if kind is ElementKind.PROJECTOR and not _is_projector(arr):
            raise ValueError(f"{label}: matrix tagged projector is not a projector")
        arr.setflags(write=False)
        object.__setattr__(self, "m", arr)
        object.__setattr__(self, "kind", kind)
        object.__setattr__(self, "label", label)
        object.__setattr__(self, "axis", axis)

    def apply(self, state: PolarizationState) -> np.ndarray:
        """Unnormalized output Jones vector."""
        return self.m @ state.amps

    def pass_probability(self, state: PolarizationState) -> float:
        out = self.apply(state)
        return _clip01(float(np.vdot(out, out).real))

    def effect(self) -> np.ndarray:
        """Pass effect ``M^dagger M``: the Born-rule weight is ``<s|E|s>``."""
        return self.m.conj().T @ self.m

    def __repr__(self) -> str:
        return f"ElementOperator({self.label})"


def _clip01(p: float) -> float:
    return min(1.0, max(0.0, p))


def identity() -> ElementOperator:
    # Identity is both unitary and a projector; tagging it as a projector lets
    # it terminate a chain as an open detector port.
    return ElementOperator(np.eye(2), ElementKind.PROJECTOR, "open")


def polaroid(theta: float) -> ElementOperator:
    """Ideal polaroid with transmission axis at ``theta``."""
    v = linear_state(theta).amps
    return ElementOperator(np.outer(v, v.conj()), ElementKind.PROJECTOR, f"polaroid({theta:.12g})",
                           axis=float(theta))


def rotation(theta: float) -> np.ndarray:
    c, s = math.cos(theta), math.sin(theta)
    return np.array([[c, -s], [s, c]], dtype=complex)


def waveplate(retardance: float, axis: float) -> ElementOperator:
    """Linear retarder with fast axis at ``axis``.

    In the plate frame the matrix is ``diag(1, exp(-i*retardance))``: the
    slow axis is second and lags. With this sign a quarter-wave plate turns
    right-circular light into linear light at +pi/4 to the fast axis.
    """
    retardance = _check_angle(retardance)
    axis = _check_angle(axis)
    core = np.diag([1.0, np.exp(-1j * retardance)])
    r = rotation(axis)
    return ElementOperator(
        r @ core @ r.T, ElementKind.UNITARY, f"waveplate({retardance:.12g}, {axis:.12g})"
    )


def quarter_wave_plate(axis: float) -> ElementOperator:
    return waveplate(math.pi / 2, axis)


def compose(chain: Sequence[ElementOperator]) -> ElementOperator:
    """Single operator equivalent to ``chain`` applied first-to-last."""
    if len(chain) == 0:
        raise ValueError("cannot compose an empty element chain")
    if len(chain) == 1:
        return chain[0]
    m = np.eye(2, dtype=complex)
    for el in chain:
        m = el.m @ m
    if all(el.kind is ElementKind.UNITARY for el in chain):
        kind = ElementKind.UNITARY
    elif _is_projector(m):
        kind = ElementKind.PROJECTOR
    else:
        kind = ElementKind.GENERAL
    return ElementOperator(m, kind, " -> ".join(el.label for el in chain))


def kraus_pair(op: ElementOperator) -> tuple[np.ndarray, np.ndarray]:
    """Kraus operators for the (pass, absorb) outcomes of a detector chain.

    The absorb operator is ``sqrt(I - M^dagger M)``; for a polaroid this is
    the projector onto the orthogonal axis.
    """
    if op.kind is ElementKind.PROJECTOR:
        return op.m, np.eye(2) - op.m
    comp = np.eye(2) - op.effect()
    w, v = np.linalg.eigh(comp)
    if np.min(w) < -1e-9:
        raise ValueError(f"{op.label}: element amplifies light; not a valid detector chain")
    w = np.clip(w, 0.0, None)
    return op.m, (v * np.sqrt(w)) @ v.conj().T


class ArmResult(NamedTuple):
    """Outcome of acting on one arm: renormalized state (``None`` if zero) and weight."""

    state: TwoPhotonState | None
    weight: float

    @property
    def is_zero(self) -> bool:
        return self.state is None


ZERO_WEIGHT = 1e-15


def apply_matrix_to_arm(s: TwoPhotonState, arm: Arm, m: np.ndarray) -> ArmResult:
    # amplitudes as a 2x2 array indexed [nu1, nu2]; same as (m x I) or (I x m) on the vector
    c = s.matrix()
    m = np.asarray(m, dtype=complex)
    out = (m @ c if arm is Arm.NU1 else c @ m.T).reshape(4)
    weight = _clip01(float(np.vdot(out, out).real))
    if weight <= ZERO_WEIGHT:
        return ArmResult(None, 0.0)
    return ArmResult(TwoPhotonState(out / math.sqrt(weight)), weight)


def apply_arm(s: TwoPhotonState, arm: Arm, op: ElementOperator) -> ArmResult:
    """Apply ``op`` to one photon of the pair and renormalize (collapse)."""
    return apply_matrix_to_arm(s, arm, op.m)
