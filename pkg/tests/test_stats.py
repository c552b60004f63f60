import itertools
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import stats as sps
from statsmodels.stats.proportion import proportion_confint

from twinphoton.models import (
    BellSource,
    CircularPair,
    JointDistribution,
    ModelKind,
    StationSetting,
    polaroid_joint,
)
from twinphoton.rng import RngState, trial_uniforms
from twinphoton.states import BellKind
from twinphoton.stats import (
    Tally,
    chi2_quantile,
    chi_square_gof,
    chsh,
    correlation_E,
    estimate_cell,
    merge,
    no_signaling_deviation,
    run_trials,
    wilson_interval,
)

QM, CR, LC = ModelKind.STANDARD_QM, ModelKind.CORRELATED_RULE, ModelKind.LOCAL_CIRCULAR
PHI = BellSource(BellKind.PHI_PLUS)
P0, P45 = StationSetting.polaroid(0), StationSetting.polaroid(math.pi / 4)
tallies = st.builds(Tally, *[st.integers(0, 10_000)] * 4)


@given(tallies, tallies, tallies)
def test_merge_associative_commutative(a, b, c):
    assert (a + b) + c == a + (b + c)
    assert a + b == b + a
    assert merge([a, b, c]) == a + b + c


def test_shards_equal_single_run():
    one = run_trials(QM, PHI, P0, P45, 10_000, 5)
    many = run_trials(QM, PHI, P0, P45, 10_000, 5, workers=8, shard_size=333)
    assert one == many
    parts = [run_trials(QM, PHI, P0, P45, 2500, 5, start=s) for s in range(0, 10_000, 2500)]
    assert merge(parts) == one


def test_run_trials_validation():
    with pytest.raises(ValueError):
        run_trials(QM, PHI, P0, P45, 0, 5)
    with pytest.raises(ValueError):
        run_trials(QM, PHI, P0, P45, 10, -1)


def test_block_offset_matches_counter():
    block = trial_uniforms(42, 0, 100)
    for i in (0, 1, 37, 99):
        np.testing.assert_array_equal(block[i], RngState(42, i).uniforms())
    np.testing.assert_array_equal(trial_uniforms(42, 37, 10), block[37:47])
    assert block.min() >= 0 and block.max() < 1


def test_wilson_example():
    lo, hi = wilson_interval(50, 100)
    assert 0.39 < lo < 0.5 < hi < 0.61


def test_estimate_cell():
    e = estimate_cell(Tally(50, 0, 0, 50), "pp")
    assert e.frequency == 0.5
    assert 0.39 < e.ci_low and e.ci_high < 0.61
    e = estimate_cell(Tally(50, 0, 0, 50), "pa")
    assert e.frequency == 0 and e.ci_low == 0 and e.ci_high > 0
    with pytest.raises(ValueError):
        estimate_cell(Tally(), "pp")


@given(st.integers(1, 5000).flatmap(lambda n: st.tuples(st.integers(0, n), st.just(n))))
def test_wilson_matches_statsmodels(kn):
    k, n = kn
    lo, hi = wilson_interval(k, n)
    slo, shi = proportion_confint(k, n, alpha=0.05, method="wilson")
    assert lo == pytest.approx(slo, abs=1e-12)
    assert hi == pytest.approx(shi, abs=1e-12)
    assert lo <= k / n <= hi


def test_wilson_boundaries():
    assert wilson_interval(0, 10)[0] == 0.0
    assert wilson_interval(10, 10)[1] == 1.0
    with pytest.raises(ValueError):
        wilson_interval(11, 10)
    with pytest.raises(ValueError):
        wilson_interval(0, 0)


def test_wilson_coverage_calibration():
    p = polaroid_joint(QM, PHI, 0, math.pi / 3).p_pp
    hits = 0
    seeds = range(400)
    for s in seeds:
        lo, hi = wilson_interval(run_trials(QM, PHI, P0, StationSetting.polaroid(math.pi / 3),
                                            2000, s).n_pp, 2000)
        hits += lo <= p <= hi
    assert hits / len(seeds) >= 0.93


def test_correlation_E():
    assert correlation_E(polaroid_joint(QM, PHI, 0, 0)) == pytest.approx(1.0)
    assert correlation_E(polaroid_joint(QM, PHI, 0, math.pi / 2)) == pytest.approx(-1.0)
    assert correlation_E(polaroid_joint(LC, CircularPair(), 0, 0)) == pytest.approx(0.0, abs=1e-12)
    assert correlation_E(Tally(30, 10, 10, 50)) == pytest.approx(0.6)


def test_chsh_values():
    angles = (0, math.pi / 4, math.pi / 8, 3 * math.pi / 8)
    assert chsh(QM, PHI, *angles).s == pytest.approx(2 * math.sqrt(2), abs=1e-12)
    assert chsh(CR, CircularPair(), *angles).s == pytest.approx(2 * math.sqrt(2), abs=1e-12)
    r = chsh(LC, CircularPair(), *angles)
    assert r.s == pytest.approx(0.0, abs=1e-12) and r.within_classical_bound
    assert not chsh(QM, PHI, *angles).within_classical_bound


def test_chsh_empirical():
    angles = (0, math.pi / 4, math.pi / 8, 3 * math.pi / 8)
    r = chsh(QM, PHI, *angles, n=50_000, seed=1729)
    assert abs(r.s - 2 * math.sqrt(2)) < 0.05
    with pytest.raises(ValueError):
        chsh(QM, PHI, *angles, n=10)


def test_local_circular_respects_bound():
    grid = [math.pi * k / 12 for k in range(12)]
    e = {(a, b): correlation_E(polaroid_joint(LC, CircularPair(), a, b)) for a in grid for b in grid}
    worst = max(abs(e[a, b] - e[a, b2] + e[a2, b] + e[a2, b2])
                for a, a2, b, b2 in itertools.product(grid, repeat=4))
    assert worst <= 2 + 1e-12


def test_no_signaling():
    sets = [StationSetting.polaroid(t) for t in (0, 0.5, 1.1, 2.0)]
    for model, source in [(QM, PHI), (CR, CircularPair()), (LC, CircularPair())]:
        assert no_signaling_deviation(model, source, sets, P45) < 1e-12
    with pytest.raises(ValueError):
        no_signaling_deviation(QM, PHI, sets[:1], P45)


def test_chi_square_zero_for_exact_tally():
    j = JointDistribution(0.25, 0.25, 0.25, 0.25)
    r = chi_square_gof(Tally(25, 25, 25, 25), j)
    assert r.statistic == 0.0 and r.dof == 3 and not r.violation and r.p_value == 1.0


def test_chi_square_matches_scipy():
    j = polaroid_joint(QM, PHI, 0, 1.0)
    t = run_trials(QM, PHI, P0, StationSetting.polaroid(1.0), 4000, 8)
    ref = sps.chisquare(t.counts(), np.array(j.cells()) * t.n_total)
    r = chi_square_gof(t, j)
    assert r.statistic == pytest.approx(ref.statistic, rel=1e-12)
    assert r.p_value == pytest.approx(ref.pvalue, rel=1e-9)


def test_chi_square_self_sample_passes():
    j = polaroid_joint(QM, PHI, 0, 0.6)
    t = run_trials(QM, PHI, P0, StationSetting.polaroid(0.6), 100_000, 1729)
    r = chi_square_gof(t, j)
    assert r.statistic < chi2_quantile(0.999, r.dof)


def test_chi_square_divergence():
    t = run_trials(LC, CircularPair(), P0, P0, 100_000, 1729)
    r = chi_square_gof(t, polaroid_joint(QM, PHI, 0, 0))
    assert r.violation and r.p_value == 0.0
    assert r.statistic > chi2_quantile(0.999, max(r.dof, 1))


def test_chi_square_empty():
    with pytest.raises(ValueError):
        chi_square_gof(Tally(), JointDistribution(1, 0, 0, 0))
