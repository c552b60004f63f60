"""Polarization state vectors for single photons and photon pairs.

Single-photon states are Jones vectors over the fixed linear basis
``{|x>, |y>}``. Two-photon states are 4-vectors over the product basis
``{xx, xy, yx, yy}`` with photon nu1 as the first factor.

Angles are in radians, measured from the lab x axis, counterclockwise as
seen looking toward the source from +z. Handedness of circular states is
defined relative to each photon's own direction of travel, so the lab-frame
vector of a right-circular photon moving along -z is the complex conjugate
of one moving along +z.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass

import numpy as np

NORM_TOL = 1e-9
_SQRT_HALF = 1.0 / math.sqrt(2.0)


class Handedness(enum.Enum):
    RIGHT = "R"
    LEFT = "L"

    @property
    def other(self) -> Handedness:
        return Handedness.LEFT if self is Handedness.RIGHT else Handedness.RIGHT


class PropagationAxis(enum.Enum):
    PLUS_Z = "+z"
    MINUS_Z = "-z"


class BellKind(enum.Enum):
    PSI_PLUS = "psi-plus"
    PSI_MINUS = "psi-minus"
    PHI_PLUS = "phi-plus"
    PHI_MINUS = "phi-minus"


def _frozen(values, size: int) -> np.ndarray:
    arr = np.array(values, dtype=complex).reshape(size)
    if not np.all(np.isfinite(arr)):
        raise ValueError("amplitudes must be finite")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class PolarizationState:
    """Jones vector ``(amp_x, amp_y)`` of one photon."""

    amps: np.ndarray

    def __init__(self, amps, *, check_norm: bool = True):
        arr = _frozen(amps, 2)
        if check_norm and abs(np.vdot(arr, arr).real - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized: {arr}")
        object.__setattr__(self, "amps", arr)

    @property
    def amp_x(self) -> complex:
        return complex(self.amps[0])

    @property
    def amp_y(self) -> complex:
        return complex(self.amps[1])

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def equals_up_to_phase(self, other: PolarizationState, tol: float = 1e-12) -> bool:
        return _phase_equal(self.amps, other.amps, tol)

    def __repr__(self) -> str:
        return f"PolarizationState({self.amp_x:.6g}, {self.amp_y:.6g})"


@dataclass(frozen=True, eq=False)
class TwoPhotonState:
    """Amplitudes ``(xx, xy, yx, yy)`` of a photon pair; nu1 is the first index."""

    amps: np.ndarray

    def __init__(self, amps, *, check_norm: bool = True):
        arr = _frozen(amps, 4)
        if check_norm and abs(np.vdot(arr, arr).real - 1.0) > NORM_TOL:
            raise ValueError(f"state is not normalized: {arr}")
        object.__setattr__(self, "amps", arr)

    @property
    def amp_xx(self) -> complex:
        return complex(self.amps[0])

    @property
    def amp_xy(self) -> complex:
        return complex(self.amps[1])

    @property
    def amp_yx(self) -> complex:
        return complex(self.amps[2])

    @property
    def amp_yy(self) -> complex:
        return complex(self.amps[3])

    def matrix(self) -> np.ndarray:
        """Amplitudes as a 2x2 array indexed ``[nu1, nu2]``."""
        return self.amps.reshape(2, 2)

    def norm(self) -> float:
        return float(np.linalg.norm(self.amps))

    def equals_up_to_phase(self, other: TwoPhotonState, tol: float = 1e-12) -> bool:
        return _phase_equal(self.amps, other.amps, tol)

    def __repr__(self) -> str:
        body = ", ".join(f"{a:.6g}" for a in self.amps)
        return f"TwoPhotonState({body})"


def _phase_equal(a: np.ndarray, b: np.ndarray, tol: float) -> bool:
    overlap = np.vdot(a, b)
    if abs(overlap) == 0.0:
        return bool(np.allclose(a, b, atol=tol, rtol=0))
    phase = overlap / abs(overlap)
    return bool(np.max(np.abs(a * phase - b)) <= tol)


def _check_angle(theta: float) -> float:
    theta = float(theta)
    if not math.isfinite(theta):
        raise ValueError(f"angle must be finite, got {theta!r}")
    return theta


def linear_state(theta: float) -> PolarizationState:
    """Linear polarization at angle ``theta``: ``(cos theta, sin theta)``."""
    theta = _check_angle(theta)
    return PolarizationState((math.cos(theta), math.sin(theta)))


def circular_state(h: Handedness, axis: PropagationAxis = PropagationAxis.PLUS_Z) -> PolarizationState:
    sign = 1.0 if h is Handedness.RIGHT else -1.0
    if axis is PropagationAxis.MINUS_Z:
        sign = -sign
    return PolarizationState((_SQRT_HALF, sign * 1j * _SQRT_HALF))


_BELL_AMPS = {
    BellKind.PHI_PLUS: (1.0, 0.0, 0.0, 1.0),
    BellKind.PHI_MINUS: (1.0, 0.0, 0.0, -1.0),
    BellKind.PSI_PLUS: (0.0, 1.0, 1.0, 0.0),
    BellKind.PSI_MINUS: (0.0, 1.0, -1.0, 0.0),
}


def bell_state(kind: BellKind) -> TwoPhotonState:
    return TwoPhotonState(np.array(_BELL_AMPS[kind]) * _SQRT_HALF)


def tensor(s1: PolarizationState, s2: PolarizationState) -> TwoPhotonState:
    return TwoPhotonState(np.kron(s1.amps, s2.amps))


def inner(s1, s2) -> complex:
    """``<s1|s2>``, conjugate-linear in ``s1``."""
    if type(s1) is not type(s2):
        raise ValueError(
            f"inner product needs states of equal arity, got {type(s1).__name__} "
            f"and {type(s2).__name__}"
        )
    return complex(np.vdot(s1.amps, s2.amps))


def projection_probability(state: PolarizationState, direction: float) -> float:
    """Probability that ``state`` passes an ideal polaroid at ``direction``."""
    p = abs(inner(linear_state(direction), state)) ** 2
    return min(1.0, max(0.0, p))


def decompose(state: PolarizationState, theta: float) -> tuple[complex, complex]:
    """Coordinates of ``state`` in the rotated basis ``{theta, theta + pi/2}``."""
    return (
        inner(linear_state(theta), state),
        inner(linear_state(theta + math.pi / 2), state),
    )


def same_handedness(kind: BellKind) -> bool:
    """Whether the two photons of a Bell pair share circular handedness.

    Each Bell state is an equal-weight superposition of two circular product
    states (handedness relative to each photon's own travel direction):
    phi+ and psi- pair R with R and L with L, phi- and psi+ pair R with L.
    """
    return kind in (BellKind.PHI_PLUS, BellKind.PSI_MINUS)
