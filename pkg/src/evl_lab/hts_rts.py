"""Hitting- and return-time sampling to shrinking targets, with fit checks.

Hitting counts from step 1, so the Kac normalisation E[r | start in U] =
1/mu(U) holds exactly.  Return starts are drawn from the invariant measure
conditioned on the target: exactly, by digit construction, for cylinder and
interval targets of the symbolic kinds, and by rejection sampling for the
moving-maximum models.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import rng, symbolic
from .observables import (
    ExceedanceEvent,
    ObservableSpec,
    ball_event,
    ball_measure,
    ball_radius_for_measure,
)
from .processes import PRECISION, TIME_BLOCK, PathEngine, dyadic_jump_paths, evaluate_point

#: per-trial ceiling on conditional-start rejection attempts
REJECTION_CAP = 1_000_000


@dataclass(frozen=True)
class TargetSet:
    """Shrinking target: a metric ball around an anchor, or a cylinder."""

    spec: object
    kind: str                    # "ball" | "cylinder"
    anchor: str | None
    delta: float
    measure: float
    event: ExceedanceEvent

    @staticmethod
    def ball(spec, anchor, delta):
        obs = ObservableSpec(family="distance", form="weibull", anchor=anchor, alpha=1.0, d=1.0)
        mu = float(ball_measure(spec, obs, delta))
        if mu <= 0.0:
            raise ValueError("target has measure zero")
        ev = ball_event(spec, obs.anchor_point(spec), delta)
        return TargetSet(spec, "ball", anchor, delta, mu, ev)

    @staticmethod
    def ball_of_measure(spec, obs, measure):
        anchor = obs.anchor
        probe = ObservableSpec(family="distance", form="weibull", anchor=anchor, alpha=1.0, d=1.0)
        delta = ball_radius_for_measure(spec, probe, measure)
        return TargetSet.ball(spec, anchor, delta)

    @staticmethod
    def cylinder(spec, word):
        w = symbolic.SymbolicWord.parse(word, spec.base)
        mu = symbolic.cylinder_measure(w, spec.digit_weights)
        ev = ExceedanceEvent("cylinder", word=tuple(w.digits))
        return TargetSet(spec, "cylinder", str(w), 0.0, mu, ev)

    def contains_state(self, state):
        if self.kind == "cylinder":
            got = state.stream.block(state.cursor, state.cursor + len(self.event.word))
            return all(int(a) == b for a, b in zip(got, self.event.word))
        x = evaluate_point(self.spec, state)
        if self.spec.kind == "chebyshev":
            theta = sum(
                int(d) * 0.5 ** (i + 1)
                for i, d in enumerate(state.stream.block(state.cursor, state.cursor + PRECISION))
            )
            return bool(self.event.mask_native(np.asarray(theta)))
        return bool(self.event.mask_native(np.asarray(x)))


@dataclass
class TimeSampleSet:
    """Normalized hitting/return times (raw steps times mu(U)); censored
    entries are flagged and pinned at the horizon, never dropped."""

    times: np.ndarray
    censored: np.ndarray
    mode: str                    # "hts" | "rts"
    horizon: float               # normalized censoring horizon
    target_measure: float

    def tsv_rows(self):
        for t, c in zip(self.times, self.censored):
            yield f"{float(t)!r}\t{int(c)}"


def hitting_time(spec, target, state, horizon):
    """Least j in 1..horizon with the orbit in the target at step j, else None."""
    from .processes import step

    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    s = state
    for j in range(1, horizon + 1):
        s = step(spec, s)
        if target.contains_state(s):
            return j
    return None


def _first_hits_engine(spec, target, trials, seed, horizon, channel, prefix=None):
    """Vectorized first-hit steps (>= 1): trial-chunked, fixed-block alive sweep."""
    steps = np.full(trials, horizon + 1, dtype=np.int64)
    if spec.kind == "dyadic_jump":
        chunk = max(256, (96 << 20) // (16 * (horizon + 1)))
        for lo in range(0, trials, chunk):
            sub = np.arange(lo, min(lo + chunk, trials), dtype=np.uint64)
            sub_prefix = None if prefix is None else prefix[lo : lo + sub.size]
            pts = dyadic_jump_paths(spec, seed, sub, horizon + 1, channel, sub_prefix)
            m = target.event.mask_native(pts)
            m[:, 0] = False
            hit = m.any(axis=1)
            steps[lo : lo + sub.size][hit] = np.argmax(m[hit], axis=1)
        return steps
    per_step = 48 if spec.kind in ("mma2", "mma13", "iid_uniform") else 16
    chunk = max(256, (192 << 20) // (per_step * TIME_BLOCK))
    for lo in range(0, trials, chunk):
        ids = np.arange(lo, min(lo + chunk, trials), dtype=np.uint64)
        sub_prefix = None if prefix is None else prefix[lo : lo + ids.size]
        eng = PathEngine(spec, seed, ids, channel, sub_prefix)
        t = 0
        alive_rows = np.arange(lo, lo + ids.size)
        while t <= horizon and alive_rows.size:
            t1 = min(t + TIME_BLOCK, horizon + 1)
            if target.event.is_cylinder:
                word = np.asarray(target.event.word, dtype=np.uint8)
                k = word.size
                d = eng.digit_matrix(t, t1, lookahead=k - 1)
                m = np.ones((alive_rows.size, t1 - t), dtype=bool)
                for i in range(k):
                    m &= d[:, i : i + t1 - t] == word[i]
            else:
                m = eng.masks(t, t1, target.event)
            if t == 0:
                m[:, 0] = False
            hit = m.any(axis=1)
            first = np.argmax(m, axis=1)
            steps[alive_rows[hit]] = t + first[hit]
            keep = ~hit
            eng.select(keep)
            alive_rows = alive_rows[keep]
            t = t1
    return steps


def sample_hts(spec, target, trials, seed, horizon_factor=20, channel=rng.CH_HTS):
    """Normalized first hitting times from stationary starts."""
    if horizon_factor < 10:
        raise ValueError("horizon_factor must be >= 10 (truncation bias)")
    horizon = int(math.ceil(horizon_factor / target.measure))
    steps = _first_hits_engine(spec, target, trials, seed, horizon, channel)
    censored = steps > horizon
    times = np.where(censored, horizon, steps).astype(np.float64) * target.measure
    return TimeSampleSet(times, censored, "hts", horizon * target.measure, target.measure)


# ---------------------------------------------------------------------------
# conditional starts
# ---------------------------------------------------------------------------


def _bernoulli_cdf_vec(x, weights, depth=64):
    """Vectorized product-measure CDF (see observables.bernoulli_cdf)."""
    w = np.asarray(weights, dtype=np.float64)
    m = w.size
    cum = np.concatenate([[0.0], np.cumsum(w)])
    x = np.clip(np.asarray(x, dtype=np.float64), 0.0, 1.0).copy()
    acc = np.zeros_like(x)
    prod = np.where(x >= 1.0, 0.0, 1.0)
    acc[x >= 1.0] = 1.0
    for _ in range(depth):
        x *= m
        d = np.minimum(x.astype(np.int64), m - 1)
        x -= d
        acc += prod * cum[d]
        prod *= w[d]
    return acc + 0.5 * prod


def _interval_digit_prefix(spec, lo, hi, trials, seed, depth=PRECISION + 16):
    """Digits of points drawn from the invariant measure conditioned on the
    (possibly wrapped) open interval (lo, hi).

    Digit-by-digit conditional descent: each digit is drawn with its exact
    conditional mass given the interval (fresh entropy per digit); once a
    trial's cell lies inside the interval the conditional law coincides with
    the unconditional one, and the remaining digits are exactly the path's
    own unconditional stream digits.
    """
    w = spec.digit_weights
    m = w.size
    ids = np.arange(trials, dtype=np.uint64)
    uniform_measure = bool(np.allclose(w, 1.0 / m))
    F = (lambda t: np.clip(t, 0.0, 1.0)) if uniform_measure else (
        lambda t: _bernoulli_cdf_vec(t, w)
    )
    lo_m, hi_m = lo % 1.0, hi % 1.0
    rel_lo = np.empty(trials)
    rel_hi = np.empty(trials)
    if lo_m < hi_m:
        rel_lo.fill(lo_m)
        rel_hi.fill(hi_m)
    else:  # wrapped through 0: segment [0, hi_m) or [lo_m, 1)
        u_side = rng.uniforms(seed, rng.CH_INIT, ids, 0, 1)[:, 0]
        mass_hi = float(F(np.asarray([hi_m]))[0])
        mass_lo = 1.0 - float(F(np.asarray([lo_m]))[0])
        take_hi = u_side * (mass_lo + mass_hi) < mass_hi
        rel_lo[:] = np.where(take_hi, 0.0, lo_m)
        rel_hi[:] = np.where(take_hi, hi_m, 1.0)
    from .processes import _digit_block

    prefix = _digit_block(spec, seed, ids, 0, depth, rng.CH_ORBIT)
    active = np.flatnonzero((rel_lo > 0.0) | (rel_hi < 1.0))
    for k in range(depth):
        if active.size == 0:
            break
        rlo = m * rel_lo[active]
        rhi = m * rel_hi[active]
        cum_mass = np.zeros((active.size, m + 1))
        for d in range(m):
            a = F(np.clip(rlo - d, 0.0, 1.0))
            b = F(np.clip(rhi - d, 0.0, 1.0))
            cum_mass[:, d + 1] = cum_mass[:, d] + w[d] * (b - a)
        u = rng.uniforms(seed, rng.CH_INIT, ids[active], k + 1, k + 2)[:, 0]
        target = (u * cum_mass[:, m])[:, None]
        d_sel = (target >= cum_mass[:, 1:]).sum(axis=1).astype(np.int64)
        d_sel = np.minimum(d_sel, m - 1)
        prefix[active, k] = d_sel.astype(np.uint8)
        rel_lo[active] = np.clip(rlo - d_sel, 0.0, 1.0)
        rel_hi[active] = np.clip(rhi - d_sel, 0.0, 1.0)
        keep = (rel_lo[active] > 0.0) | (rel_hi[active] < 1.0)
        active = active[keep]
    return prefix


def _rts_prefix(spec, target, trials, seed):
    """Per-trial stream prefix realizing a start inside the target."""
    if target.kind == "cylinder":
        word = np.asarray(target.event.word, dtype=np.uint8)
        return np.tile(word, (trials, 1))
    ev = target.event
    if spec.kind in ("m_ary", "chebyshev"):
        return _interval_digit_prefix(spec, ev.lo, ev.hi, trials, seed)
    if spec.kind == "dyadic_jump":
        return _interval_digit_prefix(spec, max(ev.lo, 0.0), min(ev.hi, 1.0), trials, seed)
    if spec.kind == "ar1":
        # X_0 uniform conditioned on (u, 1]; engine stores its most
        # significant digit at position 63, so the descent is reversed.
        msb_first = _interval_digit_prefix(spec, ev.u, 1.0, trials, seed, depth=PRECISION)
        return msb_first[:, ::-1].copy()
    if spec.kind == "iid_uniform":
        u0 = ev.u + rng.uniforms(seed, rng.CH_INIT, np.arange(trials, dtype=np.uint64), 0, 1)[:, 0] * (1.0 - ev.u)
        return u0[:, None]
    # moving-maximum kinds: rejection sampling on the innovation window
    need = np.arange(trials, dtype=np.uint64)
    prefix = np.empty((trials, 4), dtype=np.float64)
    found = np.zeros(trials, dtype=bool)
    attempt = 0
    while not found.all():
        if attempt >= REJECTION_CAP:
            raise RuntimeError("rejection-sampling attempt cap exceeded")
        rem = np.flatnonzero(~found)
        cand = rng.uniforms(seed, rng.CH_INIT, need[rem], 4 * attempt, 4 * attempt + 4)
        x0 = np.maximum(cand[:, 1], cand[:, 3]) if spec.kind == "mma2" else np.maximum(
            np.maximum(cand[:, 0], cand[:, 1]), cand[:, 3]
        )
        ok = target.event.mask_native(x0)
        prefix[rem[ok]] = cand[ok]
        found[rem[ok]] = True
        attempt += 1
    return prefix


def sample_rts(spec, target, trials, seed, horizon_factor=20, channel=rng.CH_ORBIT):
    """Normalized return times: starts drawn from mu conditioned on the target."""
    if horizon_factor < 10:
        raise ValueError("horizon_factor must be >= 10 (truncation bias)")
    horizon = int(math.ceil(horizon_factor / target.measure))
    prefix = _rts_prefix(spec, target, trials, seed)
    steps = _first_hits_engine(spec, target, trials, seed, horizon, channel, prefix=prefix)
    censored = steps > horizon
    times = np.where(censored, horizon, steps).astype(np.float64) * target.measure
    return TimeSampleSet(times, censored, "rts", horizon * target.measure, target.measure)


# ---------------------------------------------------------------------------
# goodness of fit
# ---------------------------------------------------------------------------


def ks_distance(samples, cdf):
    """sup_t |empirical CDF - cdf(t)| up to the censoring horizon."""
    t = np.asarray(samples.times, dtype=np.float64)
    unc = ~np.asarray(samples.censored, dtype=bool)
    if not unc.any():
        raise ValueError("no uncensored samples")
    n = t.size
    x = np.sort(t[unc])
    fx = np.asarray(cdf(x), dtype=np.float64)
    hi = np.arange(1, x.size + 1) / n
    lo = np.arange(0, x.size) / n
    d = max(np.abs(hi - fx).max(), np.abs(lo - fx).max())
    return float(max(d, abs(x.size / n - float(cdf(samples.horizon)))))


def empirical_cdf(samples):
    t = np.asarray(samples.times, dtype=np.float64)
    unc = ~np.asarray(samples.censored, dtype=bool)
    x = np.sort(t[unc])
    n = t.size

    def F(grid):
        return np.searchsorted(x, np.asarray(grid, dtype=np.float64), side="right") / n

    return F


def check_integral_relation(hts, rts, grid):
    """sup over the grid of |G_hat(t) - integral_0^t (1 - Gtilde_hat)(s) ds|.

    The integral of the empirical survival is computed exactly (the survival
    is a step function); censored return times contribute their full sojourn.
    """
    grid = np.asarray(grid, dtype=np.float64)
    if grid.max() > min(hts.horizon, rts.horizon) + 1e-12:
        raise ValueError("grid exceeds the observed horizon")
    G = empirical_cdf(hts)
    s = np.asarray(rts.times, dtype=np.float64)
    n = s.size
    dev = 0.0
    for t in grid:
        integral = np.minimum(s, t).sum() / n  # = int_0^t (1 - Gtilde) exactly
        dev = max(dev, abs(float(G(t)) - integral))
    return dev
