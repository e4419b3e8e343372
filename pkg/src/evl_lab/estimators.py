"""Four independent extremal-index estimators.

MaxLaw inverts the limiting survival of the running maximum, EscapeLaw does
the same for the no-escape event (the two agree asymptotically around
repelling periodic structure), Runs reads the conditional non-continuation
probability at the period, and RtsAtom reads the weight of the at-zero atom
of the normalized return-time law.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .escapes import EscapeOffsets, escape_matrix, _RatioAcc
from .observables import exceedance_event, level_for_tau
from .processes import Ensemble


@dataclass(frozen=True)
class EIEstimate:
    """Extremal-index point estimate with its Monte Carlo standard error."""

    theta: float
    stderr: float
    method: str
    n: int = 0
    tau: float = 0.0
    trials: int = 0
    clamped: bool = False

    @staticmethod
    def clamp(theta, stderr, method, **kw):
        theta = float(theta)
        clipped = min(max(theta, 0.0), 1.0)
        return EIEstimate(clipped, float(stderr), method, clamped=clipped != theta, **kw)


def _binomial_se(p, trials):
    return math.sqrt(max(p * (1.0 - p), 1e-12) / trials)


def estimate_max_law(spec, obs, tau, n, trials, seed, channel=0):
    """(P(max of n steps <= u_n), stderr) over independent stationary paths."""
    if trials < 2:
        raise ValueError("need at least 2 trials")
    u = level_for_tau(spec, obs, n, tau)
    event = exceedance_event(spec, obs, u)
    ens = Ensemble(spec, seed, trials, n, channel)
    quiet = 0
    for _, e in ens.mask_chunks(event):
        quiet += int((~e[:, :n].any(axis=1)).sum())
    p = quiet / trials
    return p, _binomial_se(p, trials)


def estimate_escape_law(spec, obs, offsets, tau, n, trials, seed, channel=0):
    """(P(no order-i escape in [0, n)), stderr); tau = 0 gives exactly 1."""
    if isinstance(offsets, int):
        offsets = EscapeOffsets.single(offsets)
    u = level_for_tau(spec, obs, n, tau)
    if tau == 0.0:
        return 1.0, 0.0
    event = exceedance_event(spec, obs, u)
    ens = Ensemble(spec, seed, trials, n, channel)
    quiet = 0
    for _, e in ens.mask_chunks(event, extra=offsets.span):
        q = escape_matrix(e, offsets)
        quiet += int((~q[:, :n].any(axis=1)).sum())
    p = quiet / trials
    return p, _binomial_se(p, trials)


def ei_from_max(p_hat, tau, se=0.0, method="MaxLaw", **meta):
    """Invert exp(-theta * tau): theta = -log(p_hat)/tau, delta-method stderr."""
    if not 0.0 < p_hat <= 1.0:
        raise ValueError("survival probability must lie in (0, 1]")
    if tau <= 0:
        raise ValueError("tau must be positive")
    theta = -math.log(p_hat) / tau
    stderr = se / (p_hat * tau)
    return EIEstimate.clamp(theta, stderr, method, tau=tau, **meta)


def ei_runs(ensemble, p_or_offsets, u):
    """Runs estimator: fraction of (order-i-1) events not continued at lag p_i.

    For order 1 this is P(X_p <= u | X_0 > u), conditioning on every
    exceedance index of every path; stderr is cluster-robust (path-level).
    """
    offsets = (
        EscapeOffsets.single(p_or_offsets)
        if isinstance(p_or_offsets, int)
        else p_or_offsets
    )
    if ensemble.obs is None:
        raise ValueError("the ensemble must carry the observable defining exceedances")
    event = exceedance_event(ensemble.spec, ensemble.obs, u)
    n = ensemble.length
    num = _RatioAcc()
    for _, e in ensemble.mask_chunks(event, extra=offsets.span):
        parent = escape_matrix(e, offsets, depth=offsets.order - 1)
        child = escape_matrix(e, offsets)
        num.add(child[:, :n].sum(axis=1), parent[:, :n].sum(axis=1))
    if num.b < 100:
        raise ValueError(f"too few conditioning events ({int(num.b)}) for the runs estimator")
    return EIEstimate.clamp(
        num.ratio, num.stderr, "Runs", n=n, tau=0.0, trials=ensemble.trials
    )


def ei_runs_nested(ensemble, offsets, u):
    """Runs estimates for every escape order 1..i in one ensemble sweep.

    Element k estimates theta_{k+1} = P(no continuation at lag p_{k+1} given
    an order-k event); their product estimates the full extremal index.
    """
    if isinstance(offsets, int):
        offsets = EscapeOffsets.single(offsets)
    if ensemble.obs is None:
        raise ValueError("the ensemble must carry the observable defining exceedances")
    event = exceedance_event(ensemble.spec, ensemble.obs, u)
    n = ensemble.length
    accs = [_RatioAcc() for _ in range(offsets.order)]
    for _, e in ensemble.mask_chunks(event, extra=offsets.span):
        level = e
        for k, p in enumerate(offsets.offsets):
            child = level[:, :-p] & ~level[:, p:]
            accs[k].add(child[:, :n].sum(axis=1), level[:, :n].sum(axis=1))
            level = child
    out = []
    for k, acc in enumerate(accs):
        if acc.b < 100:
            raise ValueError(f"too few order-{k} conditioning events ({int(acc.b)})")
        out.append(
            EIEstimate.clamp(acc.ratio, acc.stderr, "Runs", n=n, trials=ensemble.trials)
        )
    return out


def ei_rts_atom(samples, eps=0.01):
    """Extremal index from the atom at zero of normalized return times.

    theta = 1 - mass(atom); the continuous part contributes
    theta * (1 - exp(-theta * eps)) inside [0, eps], removed by one
    fixed-point pass (bias below theta * eps).
    """
    times = np.asarray(samples.times, dtype=np.float64)
    if times.size == 0:
        raise ValueError("empty sample set")
    uncensored = ~np.asarray(samples.censored, dtype=bool)
    a = float(((times <= eps) & uncensored).sum()) / times.size
    theta0 = 1.0 - a
    theta1 = 1.0 - a + theta0 * (1.0 - math.exp(-theta0 * eps))
    se = _binomial_se(a, times.size)
    return EIEstimate.clamp(theta1, se, "RtsAtom", trials=times.size)


def survey_max_and_escapes(spec, obs, offsets, tau, n, trials, seed):
    """One pass over a shared ensemble: survival of the maximum, survival of
    the no-escape event, and the runs ratio, all on identical trajectories."""
    if isinstance(offsets, int):
        offsets = EscapeOffsets.single(offsets)
    u = level_for_tau(spec, obs, n, tau)
    event = exceedance_event(spec, obs, u)
    ens = Ensemble(spec, seed, trials, n)
    quiet_max = 0
    quiet_esc = 0
    runs = _RatioAcc()
    for _, e in ens.mask_chunks(event, extra=offsets.span):
        quiet_max += int((~e[:, :n].any(axis=1)).sum())
        q = escape_matrix(e, offsets)
        quiet_esc += int((~q[:, :n].any(axis=1)).sum())
        parent = escape_matrix(e, offsets, depth=offsets.order - 1)
        runs.add(q[:, :n].sum(axis=1), parent[:, :n].sum(axis=1))
    p_max = quiet_max / trials
    p_esc = quiet_esc / trials
    return {
        "u": u,
        "p_max": p_max,
        "se_max": _binomial_se(p_max, trials),
        "p_escape": p_esc,
        "se_escape": _binomial_se(p_esc, trials),
        "runs_theta": runs.ratio,
        "runs_se": runs.stderr,
        "exceedances": runs.b,
    }


def ball_annulus_gap(spec, obs, offsets, tau, n, trials, seed):
    """|P(M_n <= u_n) - P(no escape in [0,n))| on shared trajectories."""
    s = survey_max_and_escapes(spec, obs, offsets, tau, n, trials, seed)
    return abs(s["p_max"] - s["p_escape"]), s


def cylinder_ei(spec, word, tau, trials, seed):
    """Cylinder-mode extremal index: survival of the maximum over the horizon
    floor(tau / mu(Z_n)) with exceedance set the anchor cylinder itself."""
    from .observables import omega_for_cylinder
    from .observables import ExceedanceEvent as _EE
    from . import symbolic

    w = symbolic.SymbolicWord.parse(word, spec.base)
    omega = omega_for_cylinder(spec, w, tau)
    if omega < 1:
        raise ValueError("tau too small: empty observation window")
    mu = symbolic.cylinder_measure(w, spec.digit_weights)
    tau_eff = omega * mu
    event = _EE("cylinder", word=tuple(w.digits))
    ens = Ensemble(spec, seed, trials, omega)
    quiet = 0
    for _, e in ens.mask_chunks(event):
        quiet += int((~e.any(axis=1)).sum())
    p = quiet / trials
    return ei_from_max(p, tau_eff, _binomial_se(p, trials), "MaxLaw", n=omega, trials=trials)


def estimate_ei_bundle(
    spec,
    obs,
    offsets,
    tau,
    n,
    trials,
    seed,
    rts_measure=2.0**-10,
    rts_trials=None,
):
    """All four estimators on one configuration; MaxLaw, EscapeLaw and Runs
    share a single simulated ensemble, RtsAtom samples its own returns at a
    target of measure ``rts_measure``."""
    from . import hts_rts

    if isinstance(offsets, int):
        offsets = EscapeOffsets.single(offsets)
    s = survey_max_and_escapes(spec, obs, offsets, tau, n, trials, seed)
    out = [
        ei_from_max(s["p_max"], tau, s["se_max"], "MaxLaw", n=n, trials=trials),
        ei_from_max(s["p_escape"], tau, s["se_escape"], "EscapeLaw", n=n, trials=trials),
        EIEstimate.clamp(s["runs_theta"], s["runs_se"], "Runs", n=n, tau=tau, trials=trials),
    ]
    target = hts_rts.TargetSet.ball_of_measure(spec, obs, rts_measure)
    rts = hts_rts.sample_rts(spec, target, rts_trials or trials, seed + 1)
    out.append(ei_rts_atom(rts))
    return out
