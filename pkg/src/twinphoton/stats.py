"""Monte Carlo tallies and the estimators used to compare models with data."""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np
from scipy import stats as _sps

from .models import (
    CELL_NAMES,
    JointDistribution,
    ModelKind,
    Source,
    StationSetting,
    analytic_joint,
    sample_outcome_arrays,
)
from .rng import check_seed

DEFAULT_SHARD = 1 << 16
# a, a', b, b'
DEFAULT_CHSH_ANGLES = (0.0, math.pi / 4, math.pi / 8, 3 * math.pi / 8)
CLASSICAL_BOUND = 2.0


@dataclass(frozen=True)
class Tally:
    n_pp: int = 0
    n_pa: int = 0
    n_ap: int = 0
    n_aa: int = 0

    @property
    def n_total(self) -> int:
        return self.n_pp + self.n_pa + self.n_ap + self.n_aa

    def counts(self) -> tuple[int, int, int, int]:
        return (self.n_pp, self.n_pa, self.n_ap, self.n_aa)

    def count(self, cell: str) -> int:
        return self.counts()[CELL_NAMES.index(cell)]

    def frequencies(self) -> np.ndarray:
        return np.array(self.counts(), dtype=float) / self.n_total

    @property
    def pass_a(self) -> int:
        return self.n_pp + self.n_pa

    @property
    def pass_b(self) -> int:
        return self.n_pp + self.n_ap

    def __add__(self, other: Tally) -> Tally:
        return Tally(*(x + y for x, y in zip(self.counts(), other.counts())))

    @classmethod
    def from_outcomes(cls, pass_a: np.ndarray, pass_b: np.ndarray) -> Tally:
        code = 2 * (~pass_a).astype(np.int64) + (~pass_b).astype(np.int64)
        return cls(*(int(c) for c in np.bincount(code, minlength=4)))


def merge(tallies: Sequence[Tally]) -> Tally:
    total = Tally()
    for t in tallies:
        total = total + t
    return total


def _shard(model, source, set_a, set_b, seed, start, n) -> Tally:
    _, a, b = sample_outcome_arrays(model, source, set_a, set_b, seed, start, n)
    return Tally.from_outcomes(a, b)


def run_trials(model: ModelKind, source: Source, set_a: StationSetting, set_b: StationSetting,
               n: int, seed: int, *, start: int = 0, workers: int = 1,
               shard_size: int = DEFAULT_SHARD) -> Tally:
    """Simulate trials ``start..start+n-1`` and count joint outcomes.

    The result depends only on the inputs and ``seed``; ``workers`` and
    ``shard_size`` change scheduling, never counts.
    """
    if n < 1:
        raise ValueError("number of trials must be at least 1")
    if shard_size < 1:
        raise ValueError("shard size must be positive")
    check_seed(seed)
    bounds = [(s, min(shard_size, start + n - s)) for s in range(start, start + n, shard_size)]
    if workers <= 1 or len(bounds) == 1:
        parts = [_shard(model, source, set_a, set_b, seed, s, k) for s, k in bounds]
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda sk: _shard(model, source, set_a, set_b, seed, *sk), bounds))
    return merge(parts)


class Estimate(NamedTuple):
    frequency: float
    ci_low: float
    ci_high: float


def wilson_interval(k: int, n: int, confidence: float = 0.95) -> tuple[float, float]:
    if n < 1:
        raise ValueError("Wilson interval needs at least one trial")
    if not 0 <= k <= n:
        raise ValueError("successes must lie in [0, n]")
    z = float(_sps.norm.ppf(0.5 + confidence / 2))
    p = k / n
    denom = 1 + z * z / n
    center = (p + z * z / (2 * n)) / denom
    half = z * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n)) / denom
    low = 0.0 if k == 0 else max(0.0, min(p, center - half))
    high = 1.0 if k == n else min(1.0, max(p, center + half))
    return low, high


def estimate_cell(tally: Tally, cell: str, confidence: float = 0.95) -> Estimate:
    """Frequency of one joint cell (``"pp"``, ``"pa"``, ``"ap"``, ``"aa"``) with its Wilson interval."""
    n = tally.n_total
    if n < 1:
        raise ValueError("empty tally")
    k = tally.count(cell)
    return Estimate(k / n, *wilson_interval(k, n, confidence))


def correlation_E(j: JointDistribution | Tally) -> float:
    """Pass/absorb coded as +1/-1: ``E = p_pp + p_aa - p_pa - p_ap``."""
    if isinstance(j, Tally):
        pp, pa, ap, aa = j.frequencies()
    else:
        pp, pa, ap, aa = j.cells()
    return float(min(1.0, max(-1.0, pp + aa - pa - ap)))


@dataclass(frozen=True)
class ChshResult:
    e_ab: float
    e_ab2: float
    e_a2b: float
    e_a2b2: float
    s: float
    settings: tuple[float, float, float, float] = DEFAULT_CHSH_ANGLES

    @property
    def within_classical_bound(self) -> bool:
        return abs(self.s) <= CLASSICAL_BOUND + 1e-12


def chsh_combination(e_ab: float, e_ab2: float, e_a2b: float, e_a2b2: float) -> float:
    return e_ab - e_ab2 + e_a2b + e_a2b2


def chsh(model: ModelKind, source: Source, a: float, a2: float, b: float, b2: float, *,
         n: int | None = None, seed: int | None = None, workers: int = 1) -> ChshResult:
    """CHSH combination from analytic joints, or from ``n`` sampled trials per setting pair.

    Empirical runs give setting pair ``k`` the trial indices ``k*n .. (k+1)*n - 1``
    of ``seed``.
    """
    pairs = [(a, b), (a, b2), (a2, b), (a2, b2)]
    es = []
    for k, (ta, tb) in enumerate(pairs):
        sa, sb = StationSetting.polaroid(ta), StationSetting.polaroid(tb)
        if n is None:
            es.append(correlation_E(analytic_joint(model, source, sa, sb)))
        else:
            if seed is None:
                raise ValueError("empirical CHSH needs a seed")
            es.append(correlation_E(
                run_trials(model, source, sa, sb, n, seed, start=k * n, workers=workers)))
    return ChshResult(*es, chsh_combination(*es), settings=(a, a2, b, b2))


def no_signaling_deviation(model: ModelKind, source: Source,
                           settings_a: Sequence[StationSetting], set_b: StationSetting) -> float:
    """Largest shift of B's pass marginal as A's setting changes."""
    if len(settings_a) < 2:
        raise ValueError("need at least two A settings")
    marginals = [analytic_joint(model, source, sa, set_b).marginal_b for sa in settings_a]
    return max(abs(m - marginals[0]) for m in marginals)


class GofResult(NamedTuple):
    statistic: float
    dof: int
    violation: bool
    """Some cell the model forbids was observed."""

    @property
    def p_value(self) -> float:
        if self.violation:
            return 0.0
        if self.dof == 0:
            return 1.0
        return float(_sps.chi2.sf(self.statistic, self.dof))


def chi2_quantile(q: float, dof: int) -> float:
    return float(_sps.chi2.ppf(q, dof))


def chi_square_gof(tally: Tally, j: JointDistribution) -> GofResult:
    """Pearson statistic of ``tally`` against ``j`` over cells with non-zero probability.

    Counts in a zero-probability cell cannot come from ``j`` at all; they are
    reported through ``violation`` rather than as an infinite statistic.
    """
    n = tally.n_total
    if n < 1:
        raise ValueError("empty tally")
    stat = 0.0
    live = 0
    violation = False
    for obs, p in zip(tally.counts(), j.cells()):
        if p <= 0.0:
            violation = violation or obs > 0
            continue
        live += 1
        expected = n * p
        stat += (obs - expected) ** 2 / expected
    return GofResult(stat, max(live - 1, 0), violation)
