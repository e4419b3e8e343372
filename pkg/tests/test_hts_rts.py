import math

import numpy as np
import pytest

from evl_lab import theory
from evl_lab.hts_rts import (
    TargetSet,
    TimeSampleSet,
    check_integral_relation,
    hitting_time,
    ks_distance,
    sample_hts,
    sample_rts,
)
from evl_lab.processes import DigitStream, ProcessSpec, ProcessState, sample_initial
from evl_lab.symbolic import champernowne_bits

DOUB = ProcessSpec.doubling()


def test_hitting_time_enters_at_step_three():
    # orbit digits 000110 000110 ...: the cylinder '11' is first entered at step 3
    st = ProcessState(DOUB, DigitStream.periodic(2, [0, 0, 0, 1, 1, 0]), 0)
    tgt = TargetSet.cylinder(DOUB, "11")
    assert hitting_time(DOUB, tgt, st, 50) == 3
    tgt1 = TargetSet.cylinder(DOUB, "111")
    assert hitting_time(DOUB, tgt1, st, 50) is None  # never three ones in a row


def test_hitting_time_start_in_target_censored():
    # state inside the cylinder '01' whose orbit never returns to it
    tail = DigitStream.periodic(2, [0])
    stream = DigitStream.with_prefix(2, [0, 1], tail)
    st = ProcessState(DOUB, stream, 0)
    tgt = TargetSet.cylinder(DOUB, "01")
    assert tgt.contains_state(st)
    assert hitting_time(DOUB, tgt, st, 200) is None


def test_hitting_time_matches_engine():
    tgt = TargetSet.ball(DOUB, "0", 2.0**-6)
    from evl_lab import rng
    from evl_lab.hts_rts import _first_hits_engine

    steps = _first_hits_engine(DOUB, tgt, 8, 55, 3000, rng.CH_ORBIT)
    for trial in range(8):
        st = sample_initial(DOUB, 55, trial=trial)
        assert hitting_time(DOUB, tgt, st, 3000) == int(steps[trial])


def test_kac_mean_return():
    tgt = TargetSet.ball(DOUB, "0", 2.0**-10)
    assert tgt.measure == pytest.approx(2.0**-9)
    rts = sample_rts(DOUB, tgt, 20000, seed=71, horizon_factor=60)
    mean = rts.times.mean() / tgt.measure  # raw steps
    se = rts.times.std(ddof=1) / tgt.measure / math.sqrt(rts.times.size)
    assert abs(mean - 512.0) <= 3 * se


def test_hts_law_doubling(ks):
    tgt = TargetSet.ball(DOUB, "0", 2.0**-10)
    hts = sample_hts(DOUB, tgt, 20000, seed=73)
    d = ks_distance(hts, theory.theoretical_cdf("hts", 0.5))
    assert d <= 0.02


def test_hts_radius_independence():
    vals = []
    for delta in (2.0**-8, 2.0**-10, 2.0**-12):
        tgt = TargetSet.ball(DOUB, "0", delta)
        hts = sample_hts(DOUB, tgt, 10000, seed=79)
        vals.append(ks_distance(hts, theory.theoretical_cdf("hts", 0.5)))
    assert max(vals) <= 0.025
    assert max(vals) - min(vals) <= 0.02


def test_hts_nonperiodic_anchor_is_unit_rate():
    word = str(champernowne_bits(24))
    tgt = TargetSet.ball(DOUB, word, 2.0**-10)
    hts = sample_hts(DOUB, tgt, 15000, seed=83)
    assert ks_distance(hts, theory.theoretical_cdf("hts", 1.0)) <= 0.02


def test_rts_law_periodic_anchor():
    spec = ProcessSpec.bernoulli_doubling(0.3)
    tgt = TargetSet.ball(spec, "01", 2.0**-10)
    rts = sample_rts(spec, tgt, 15000, seed=89)
    unc = ~rts.censored
    # returns at exactly p = 2 raw steps carry the capture mass 1 - theta
    raw = np.round(rts.times / tgt.measure).astype(int)
    at_p = float(((raw == 2) & unc).mean())
    assert abs(at_p - 0.21) <= 0.03
    atom = float(((rts.times <= 0.01) & unc).mean())
    assert abs(atom - 0.21) <= 0.03


def test_iid_control_rts_equals_hts_exponential():
    spec = ProcessSpec.iid_uniform()
    tgt = TargetSet.ball(spec, None, 2.0**-9)
    hts = sample_hts(spec, tgt, 15000, seed=97)
    rts = sample_rts(spec, tgt, 15000, seed=98)
    F = theory.theoretical_cdf("hts", 1.0)
    assert ks_distance(hts, F) <= 0.02
    assert ks_distance(rts, F) <= 0.02


def test_censoring_mass_matches_survival():
    tgt = TargetSet.ball(DOUB, "0", 2.0**-9)
    hts = sample_hts(DOUB, tgt, 50000, seed=91, horizon_factor=10)
    expect = math.exp(-0.5 * 10.0)
    se = math.sqrt(expect * (1 - expect) / 50000)
    assert abs(hts.censored.mean() - expect) <= 3 * se + 1e-3
    with pytest.raises(ValueError):
        sample_hts(DOUB, tgt, 100, seed=91, horizon_factor=3)


def test_ks_distance_quantile_construction():
    n = 1000
    q = (np.arange(1, n + 1) - 0.5) / n
    times = -np.log(1.0 - q)  # exact Exp(1) quantiles
    s = TimeSampleSet(times, np.zeros(n, dtype=bool), "hts", 50.0, 1e-3)
    assert ks_distance(s, lambda t: 1.0 - np.exp(-np.asarray(t))) <= 0.5 / n + 1e-12


def test_ks_distance_single_sample_at_median():
    s = TimeSampleSet(np.array([math.log(2.0)]), np.array([False]), "hts", 50.0, 1e-3)
    assert ks_distance(s, lambda t: 1.0 - np.exp(-np.asarray(t))) == pytest.approx(0.5)


def test_ks_distance_inverse_cdf_draws():
    from evl_lab import rng

    u = rng.uniforms(3, 3, [9], 0, 100000)[0]
    times = -np.log(1.0 - u) / 0.5
    s = TimeSampleSet(times, np.zeros_like(times, dtype=bool), "hts", 1e9, 1e-3)
    assert ks_distance(s, theory.theoretical_cdf("hts", 0.5)) <= 0.006


def test_ks_distance_empty_error():
    s = TimeSampleSet(np.array([1.0]), np.array([True]), "hts", 1.0, 1e-3)
    with pytest.raises(ValueError):
        ks_distance(s, lambda t: np.asarray(t))


def test_integral_relation_closed_forms_zero():
    # with exact quantile samples of both laws the relation closes to O(1/n)
    n = 20000
    q = (np.arange(1, n + 1) - 0.5) / n
    theta = 0.75
    g = theory.theoretical_cdf("hts", theta)
    hts_times = -np.log(1.0 - q) / theta
    rts_times = np.array([theory.rts_quantile(theta, x) for x in q])
    hts = TimeSampleSet(hts_times, np.zeros(n, dtype=bool), "hts", 1e9, 1e-4)
    rts = TimeSampleSet(rts_times, np.zeros(n, dtype=bool), "rts", 1e9, 1e-4)
    dev = check_integral_relation(hts, rts, np.linspace(0.1, 6.0, 30))
    assert dev <= 2e-3


def test_integral_relation_monte_carlo_pair():
    tgt = TargetSet.ball(DOUB, "0", 2.0**-10)
    hts = sample_hts(DOUB, tgt, 20000, seed=73)
    rts = sample_rts(DOUB, tgt, 20000, seed=74)
    dev = check_integral_relation(hts, rts, np.linspace(0.1, 5.0, 25))
    assert dev <= 0.03


def test_integral_relation_mismatched_pair_detected():
    # negative control: HTS from the unit-rate law against RTS from a
    # clustered law; closed forms give sup_t |e^{-3t/4} - e^{-t}| ~ 0.1055
    n = 20000
    q = (np.arange(1, n + 1) - 0.5) / n
    hts_times = -np.log(1.0 - q)  # theta = 1
    rts_times = np.array([theory.rts_quantile(0.75, x) for x in q])
    hts = TimeSampleSet(hts_times, np.zeros(n, dtype=bool), "hts", 1e9, 1e-4)
    rts = TimeSampleSet(rts_times, np.zeros(n, dtype=bool), "rts", 1e9, 1e-4)
    dev = check_integral_relation(hts, rts, np.linspace(0.1, 6.0, 40))
    assert dev >= 0.10


def test_integral_relation_grid_out_of_range():
    s = TimeSampleSet(np.array([0.5]), np.array([False]), "hts", 2.0, 1e-3)
    with pytest.raises(ValueError):
        check_integral_relation(s, s, np.array([5.0]))


def test_tsv_rows_format():
    s = TimeSampleSet(np.array([0.5, 2.0]), np.array([False, True]), "hts", 2.0, 1e-3)
    rows = list(s.tsv_rows())
    assert rows[0] == "0.5\t0" and rows[1] == "2.0\t1"


def test_rejection_cap_error(monkeypatch):
    import evl_lab.hts_rts as H
    from evl_lab.observables import ExceedanceEvent

    spec = ProcessSpec.mma2()
    tgt = TargetSet(spec, "ball", None, 1e-9, 1e-9, ExceedanceEvent("gt", u=1.0 - 1e-9))
    monkeypatch.setattr(H, "REJECTION_CAP", 40)
    with pytest.raises(RuntimeError):
        H._rts_prefix(spec, tgt, 4, seed=1)
