import math

import numpy as np
import pytest

from evl_lab.escapes import (
    EscapeOffsets,
    annulus_rate,
    default_block_count,
    default_gap,
    escape_clustering_sum,
    escape_event,
    escape_matrix,
    escape_mixing_gap,
    no_escape_window,
    periodicity_report,
)
from evl_lab.observables import LevelSchedule, ObservableSpec, level_for_tau
from evl_lab.processes import Ensemble, ProcessSpec

AR1_OBS = ObservableSpec(family="distance", form="weibull", anchor=None)
MMA_OBS = ObservableSpec(family="distance", form="weibull", anchor=None)


def test_escape_event_definition():
    assert escape_event([0.99, 0.2], 0, 1, 0.9) is True
    assert escape_event([0.99, 0.95], 0, 1, 0.9) is False  # capture
    with pytest.raises(IndexError):
        escape_event([0.99], 0, 1, 0.9)


def test_escape_capture_partition():
    rng = np.random.default_rng(0)
    x = rng.random(500)
    u = 0.7
    for j in range(499):
        exceed = x[j] > u
        esc = escape_event(x, j, 1, u)
        cap = exceed and not esc
        assert exceed == (esc or cap)
        assert not (esc and cap)


def test_no_escape_window_cases():
    assert no_escape_window([0.1] * 20, 0, 10, 1, 0.9) is True
    x = [0.1] * 8 + [0.95, 0.1] + [0.1] * 5
    assert no_escape_window(x, 5, 8, 1, 0.9) is False
    assert no_escape_window(x, 0, 0, 1, 0.9) is True  # empty window


def test_no_escape_window_equals_brute_force():
    rng = np.random.default_rng(3)
    offs = EscapeOffsets((1,))
    for _ in range(200):
        x = rng.random(30)
        s, ln = rng.integers(0, 10), int(rng.integers(1, 12))
        u = float(rng.random() * 0.5 + 0.4)
        brute = not any(escape_event(x, j, offs, u) for j in range(s, s + ln))
        assert no_escape_window(x, s, ln, offs, u) == brute


def test_higher_order_escape_recursion():
    offs = EscapeOffsets((1, 3))
    x = np.array([0.99, 0.1, 0.99, 0.98, 0.1, 0.1, 0.1])
    e = x > 0.9
    q1 = escape_matrix(e[None, :], offs, depth=1)[0]
    q2 = escape_matrix(e[None, :], offs)[0]
    # q1 at 0 (exceed then drop), at 3; q2 at 0 requires q1 at 0 and not at 3
    assert bool(q1[0]) and bool(q1[3])
    assert not bool(q2[0])
    assert escape_event(x, 0, offs, 0.9) == bool(q2[0])


def test_ar1_periodicity_report_matches_exact_law():
    spec = ProcessSpec.ar1(2)
    levels = LevelSchedule(spec, AR1_OBS, tau=1.0)
    n = 2000
    ens = Ensemble(spec, 11, 30000, n, obs=AR1_OBS)
    rep = periodicity_report(ens, 1, 0.5, levels, n)
    p, se = rep.continuation
    assert abs(p - 0.5) <= max(3 * se, 0.01)
    for i, ratio, rse in rep.run_ratios[:8]:
        assert abs(ratio - 1.0) <= 4 * max(rse, 0.02), (i, ratio, rse)
    sums = [v for _, v in rep.chain_partial_sums]
    assert all(a <= b + 1e-12 for a, b in zip(sums, sums[1:]))


def test_mma2_periodicity_report():
    spec = ProcessSpec.mma2()
    levels = LevelSchedule(spec, MMA_OBS, tau=1.0)
    n = 2000
    ens = Ensemble(spec, 13, 30000, n, obs=MMA_OBS)
    rep = periodicity_report(ens, 2, 0.5, levels, n)
    p, se = rep.continuation
    assert abs(p - 0.5) <= 0.02
    (j1, sub1, sub_se) = rep.sub_period[0]
    assert j1 == 1 and sub1 <= 0.02


def test_doubling_continuation_probability():
    spec = ProcessSpec.doubling()
    obs = ObservableSpec(family="ball_measure", form="gumbel", anchor="0")
    levels = LevelSchedule(spec, obs, tau=1.0)
    n = 2000
    ens = Ensemble(spec, 29, 30000, n, obs=obs)
    rep = periodicity_report(ens, 1, 0.5, levels, n)
    p, se = rep.continuation
    assert abs(p - 0.5) <= 0.02


def test_annulus_rate_law():
    # n P(escape at a fixed index) -> theta tau for each built-in
    cases = [
        (ProcessSpec.doubling(), ObservableSpec(family="ball_measure", form="gumbel", anchor="0"), 1, 0.5),
        (ProcessSpec.ar1(2), AR1_OBS, 1, 0.5),
        (ProcessSpec.mma2(), MMA_OBS, 2, 0.5),
    ]
    tau = 1.0
    for spec, obs, p, theta in cases:
        levels = LevelSchedule(spec, obs, tau=tau)
        ens = Ensemble(spec, 37, 20000, 3000, obs=obs)
        rate, se = annulus_rate(ens, p, 3000, levels)
        assert abs(rate - theta * tau) <= 3 * se + 0.01, spec.label


def test_mma13_order2_rate_and_degradation():
    spec = ProcessSpec.mma13()
    tau = 1.0
    levels = LevelSchedule(spec, MMA_OBS, tau=tau)
    n = 3000
    ens = Ensemble(spec, 41, 30000, n, obs=MMA_OBS)
    rate2, se2 = annulus_rate(ens, EscapeOffsets((1, 3)), n, levels)
    assert abs(rate2 - tau / 3.0) <= 3 * se2 + 0.01
    # order-1 escape pairs do NOT vanish: the sum detects the lag-3 structure
    k_n = default_block_count(n)
    v1, se1, lags = escape_clustering_sum(ens, 1, n, k_n, levels)
    assert v1 > 0.2
    assert abs(v1 - tau / 3.0) <= 3 * se1 + 0.03
    # the lag-3 term carries it
    assert n * lags[3] > 0.2
    # order-2 escape pairs vanish
    v2, _, _ = escape_clustering_sum(ens, EscapeOffsets((1, 3)), n, k_n, levels)
    assert v2 < 0.05


def test_mma2_joint_escape_closed_form():
    # P(escape at 0 and j) = (1-a)^2 a^4 except j in {2, 4} where it is 0
    spec = ProcessSpec.mma2()
    tau = 2.0
    n = 500
    levels = LevelSchedule(spec, MMA_OBS, tau=tau)
    u = levels.u(n)
    a = u  # P(Y <= u)
    ens = Ensemble(spec, 43, 60000, n, obs=MMA_OBS)
    _, _, lags = escape_clustering_sum(ens, 2, n, n // 25, levels)
    expect = (1 - a) ** 2 * a**4
    for j in range(1, len(lags)):
        se = math.sqrt(expect / (60000 * n))
        if j in (2, 4):
            assert lags[j] <= 3 * se
        else:
            assert abs(lags[j] - expect) <= 4 * se, j


def test_ar1_clustering_sum_decreases():
    spec = ProcessSpec.ar1(2)
    tau = 1.0
    levels = LevelSchedule(spec, AR1_OBS, tau=tau)
    vals = {}
    for n, trials in ((1000, 30000), (10000, 30000)):
        ens = Ensemble(spec, 47, trials, n, obs=AR1_OBS)
        v, se, _ = escape_clustering_sum(ens, 1, n, default_block_count(n), levels)
        vals[n] = v
    assert vals[10000] < 0.05
    assert vals[10000] <= vals[1000] + 0.01


def test_mixing_gap_degenerate_window():
    spec = ProcessSpec.ar1(2)
    levels = LevelSchedule(spec, AR1_OBS, tau=1.0)
    ens = Ensemble(spec, 53, 1000, 500, obs=AR1_OBS)
    g, se = escape_mixing_gap(ens, 1, 500, 10, 0, levels)
    assert g == 0.0 and se == 0.0


def test_mixing_gap_mma2_independent_beyond_window():
    spec = ProcessSpec.mma2()
    levels = LevelSchedule(spec, MMA_OBS, tau=1.0)
    n = 1000
    ens = Ensemble(spec, 59, 40000, n, obs=MMA_OBS)
    g, se = escape_mixing_gap(ens, 2, n, 5, n // default_block_count(n), levels)
    assert g <= 3 * se + 1e-4


def test_mixing_gap_ar1_below_noise():
    spec = ProcessSpec.ar1(2)
    levels = LevelSchedule(spec, AR1_OBS, tau=1.0)
    n = 2000
    ens = Ensemble(spec, 61, 30000, n, obs=AR1_OBS)
    g, se = escape_mixing_gap(ens, 1, n, 40, n // default_block_count(n), levels)
    assert g <= 3 * se + 1e-4


def test_default_parameters():
    assert default_block_count(10000) == 100
    assert default_gap(10000) == 10
