"""Observables anchored at a point, exceedance geometry, and level schedules.

Three scaling families cover the classical max-domains of attraction:
``gumbel`` g(s) = -log s, ``frechet`` g(s) = s**(-1/alpha) and ``weibull``
g(s) = d - s**(1/alpha).  Each family can read the plain distance to the
anchor, the invariant measure of the ball of that radius (which uniformises
the tail), or the cylinder depth of the anchor word.  Levels u_n are solved
so that n * P(X_0 > u_n) = tau, analytically for every built-in pairing.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .processes import ProcessSpec
from . import symbolic

G_FORMS = ("gumbel", "frechet", "weibull")
FAMILIES = ("distance", "ball_measure", "cylinder")


def _g_apply(form, alpha, d, s):
    s = np.asarray(s, dtype=np.float64)
    with np.errstate(divide="ignore"):
        if form == "gumbel":
            return -np.log(s)
        if form == "frechet":
            return s ** (-1.0 / alpha)
        return d - s ** (1.0 / alpha)


def _g_inverse(form, alpha, d, u):
    if form == "gumbel":
        return math.exp(-u)
    if form == "frechet":
        return u ** (-alpha)
    return (d - u) ** alpha


@dataclass(frozen=True)
class ObservableSpec:
    """g-family observable anchored at ``anchor`` (a symbolic word, or None
    for the upper-endpoint anchor of the series models)."""

    family: str = "ball_measure"
    form: str = "gumbel"
    anchor: str | None = None
    alpha: float = 1.0
    d: float = 1.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown observable family {self.family!r}")
        if self.form not in G_FORMS:
            raise ValueError(f"unknown g form {self.form!r}")
        if self.alpha <= 0:
            raise ValueError("alpha must be > 0")

    def g(self, s):
        return _g_apply(self.form, self.alpha, self.d, s)

    def g_inverse(self, u):
        return _g_inverse(self.form, self.alpha, self.d, u)

    @property
    def top(self):
        """Essential sup of the observable (value of g at argument 0+)."""
        return self.d if self.form == "weibull" else math.inf

    def anchor_point(self, spec):
        """Exposed-space anchor point; None-anchored series sit at the endpoint."""
        if self.anchor is None:
            if spec.kind in ("m_ary", "dyadic_jump", "chebyshev"):
                raise ValueError("map kinds need a word anchor")
            return 1.0
        word = symbolic.SymbolicWord.parse(self.anchor, spec.base)
        y = word.periodic_value()
        if spec.kind == "chebyshev":
            return -math.cos(2.0 * math.pi * y)
        return y

    def apply(self, spec, points):
        """Observable values at exposed process points."""
        pts = np.asarray(points, dtype=np.float64)
        z = self.anchor_point(spec)
        if spec.kind == "m_ary":
            d = np.abs(pts - z)
            dist = np.minimum(d, 1.0 - d)  # circle metric
        else:
            dist = np.abs(pts - z)
        if self.family == "distance":
            return self.g(dist)
        if self.family == "ball_measure":
            return self.g(ball_measure(spec, self, dist))
        raise ValueError("cylinder observables are evaluated on digit states")


# ---------------------------------------------------------------------------
# measures of balls and marginals
# ---------------------------------------------------------------------------


def bernoulli_cdf(x, weights, depth=64):
    """CDF at x of the product measure with the given digit weights (base m)."""
    m = len(weights)
    x = float(x)
    if x <= 0.0:
        return 0.0
    if x >= 1.0:
        return 1.0
    acc, prod = 0.0, 1.0
    cum = np.concatenate([[0.0], np.cumsum(weights)])
    for _ in range(depth):
        x *= m
        d = min(int(x), m - 1)
        x -= d
        acc += prod * cum[d]
        prod *= weights[d]
        if prod == 0.0:
            break
    return acc + 0.5 * prod  # midpoint of the residual cell


def _circle_interval_measure(spec, lo, hi):
    """Invariant measure of the circle interval (lo, hi) for m_ary kinds."""
    w = spec.digit_weights
    lo, hi = lo % 1.0, hi % 1.0
    if all(abs(x - w[0]) < 1e-15 for x in w):
        return (hi - lo) % 1.0 if hi != lo else 1.0
    F = lambda t: bernoulli_cdf(t, w)
    if lo <= hi:
        return F(hi) - F(lo)
    return (1.0 - F(lo)) + F(hi)


def ball_measure(spec, obs, radius):
    """mu(ball of the given radius around the anchor), vectorized in radius."""
    z = obs.anchor_point(spec)
    r = np.asarray(radius, dtype=np.float64)
    scalar = r.ndim == 0
    r = np.atleast_1d(r)
    out = np.empty_like(r)
    if spec.kind == "m_ary":
        if all(abs(x - spec.weights[0] if spec.weights else x - 1.0 / spec.m) < 1e-15 for x in spec.digit_weights):
            out = np.minimum(2.0 * r, 1.0)
        else:
            for i, ri in enumerate(r):
                out[i] = _circle_interval_measure(spec, z - ri, z + ri) if ri < 0.5 else 1.0
    elif spec.kind == "dyadic_jump":
        out = np.clip(np.minimum(z + r, 1.0) - np.maximum(z - r, 0.0), 0.0, 1.0)
    elif spec.kind == "chebyshev":
        a = np.clip(np.maximum(z - r, -1.0), -1.0, 1.0)
        b = np.clip(np.minimum(z + r, 1.0), -1.0, 1.0)
        out = (np.arcsin(b) - np.arcsin(a)) / math.pi
    else:
        # series kinds anchored at the endpoint 1: ball = {X > 1 - r}
        out = marginal_tail(spec, 1.0 - r)
    return float(out[0]) if scalar else out


def ball_radius_for_measure(spec, obs, target):
    """Inverse of ball_measure: radius with mu(ball) = target (bisection)."""
    if target <= 0.0:
        return 0.0
    lo, hi = 0.0, {"chebyshev": 2.0}.get(spec.kind, 1.0)
    for _ in range(80):
        mid = 0.5 * (lo + hi)
        if ball_measure(spec, obs, mid) < target:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def marginal_cdf(spec, x):
    """CDF of the exposed stationary point of ``spec`` (for KS checks)."""
    x = np.asarray(x, dtype=np.float64)
    if spec.kind == "m_ary":
        w = spec.digit_weights
        if all(abs(v - w[0]) < 1e-15 for v in w):
            return np.clip(x, 0.0, 1.0)
        return np.vectorize(lambda t: bernoulli_cdf(t, w))(x)
    if spec.kind == "chebyshev":
        return 0.5 + np.arcsin(np.clip(x, -1.0, 1.0)) / math.pi
    if spec.kind == "mma2":
        return np.clip(x, 0.0, 1.0) ** 2
    if spec.kind == "mma13":
        return np.clip(x, 0.0, 1.0) ** 3
    return np.clip(x, 0.0, 1.0)  # dyadic_jump, ar1, iid_uniform: uniform


def marginal_tail(spec, u):
    return 1.0 - marginal_cdf(spec, u)


# ---------------------------------------------------------------------------
# exceedance geometry and tail probabilities
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ExceedanceEvent:
    """Exceedance set {X_0 > u} in the engine's native sweep coordinate.

    kind "circle": wrapped open interval on the unit circle (m_ary and the
    chebyshev doubling coordinate); "interval": open interval (dyadic_jump
    exposed points); "gt": open half line (series kinds); "cylinder": digit
    prefix match.
    """

    kind: str
    lo: float = 0.0
    hi: float = 0.0
    u: float = 0.0
    word: tuple = ()

    def mask_native(self, values, out=None):
        v = values
        if self.kind == "gt":
            return np.greater(v, self.u, out=out)
        if self.kind == "interval":
            res = np.less(v, self.hi, out=out)
            res &= v > self.lo
            return res
        if self.kind == "circle":
            if self.lo <= self.hi:
                res = np.less(v, self.hi, out=out)
                res &= v > self.lo
            else:  # wraps through 0
                res = np.greater(v, self.lo, out=out)
                res |= v < self.hi
            return res
        raise ValueError("cylinder events match digits, not points")

    @property
    def is_cylinder(self):
        return self.kind == "cylinder"


def ball_event(spec, anchor_point, radius):
    """Native-coordinate realization of the open metric ball around an anchor."""
    z = anchor_point
    if spec.kind == "m_ary":
        return ExceedanceEvent("circle", lo=(z - radius) % 1.0, hi=(z + radius) % 1.0)
    if spec.kind == "dyadic_jump":
        return ExceedanceEvent("interval", lo=z - radius, hi=z + radius)
    if spec.kind == "chebyshev":
        # x-ball (z-radius, z+radius) pulled back through x = -cos(2 pi theta):
        # theta in (t_lo, t_hi) on [0, 1/2], mirrored at 1 - theta.
        a, b = max(z - radius, -1.0), min(z + radius, 1.0)
        t_lo = math.acos(-a) / (2.0 * math.pi)
        t_hi = math.acos(-b) / (2.0 * math.pi)
        t_lo, t_hi = min(t_lo, t_hi), max(t_lo, t_hi)
        if t_lo <= 1e-15:  # anchor at x=-1: wrapped symmetric ball
            return ExceedanceEvent("circle", lo=1.0 - t_hi, hi=t_hi)
        if t_hi >= 0.5 - 1e-15:  # anchor at x=1: interval around theta=1/2
            return ExceedanceEvent("circle", lo=t_lo, hi=1.0 - t_lo)
        raise ValueError("chebyshev exceedance sets are supported at the endpoints")
    return ExceedanceEvent("gt", u=1.0 - radius)


def exceedance_event(spec, obs, u):
    """Native-coordinate realization of {X_0 > u} for the engine."""
    if obs.family == "cylinder":
        word = symbolic.SymbolicWord.parse(obs.anchor, spec.base)
        return ExceedanceEvent("cylinder", word=tuple(word.digits))
    if u >= obs.top:
        # above the essential sup: empty event
        return ExceedanceEvent("gt", u=math.inf)
    v = obs.g_inverse(u)
    radius = v if obs.family == "distance" else ball_radius_for_measure(spec, obs, v)
    return ball_event(spec, obs.anchor_point(spec), radius)


def tail_probability(spec, obs, u):
    """P(X_0 > u), analytic for every built-in pairing.

    Above the essential sup the probability is exactly 0 (use
    ``obs.top`` to detect that regime).
    """
    if obs.family == "cylinder":
        word = symbolic.SymbolicWord.parse(obs.anchor, spec.base)
        return symbolic.cylinder_measure(word, spec.digit_weights)
    if u >= obs.top:
        return 0.0
    if obs.family == "ball_measure":
        return min(obs.g_inverse(u), 1.0)  # ball-measure variable is Uniform(0,1)
    ev = exceedance_event(spec, obs, u)
    if ev.kind == "gt":
        return float(marginal_tail(spec, ev.u))
    return float(ball_measure(spec, obs, obs.g_inverse(u)))


def level_for_tau(spec, obs, n, tau):
    """u_n with n * P(X_0 > u_n) = tau (exact analytic inversion)."""
    if n < 1 or tau < 0:
        raise ValueError("need n >= 1 and tau >= 0")
    p = tau / n
    if p > 1.0:
        raise ValueError(f"tau/n = {p} > 1: no valid level")
    if tau == 0.0:
        return obs.top
    if obs.family == "ball_measure":
        return float(obs.g(p))
    # distance family: radius with mu(ball) = p, then u = g(radius)
    radius = ball_radius_for_measure(spec, obs, p)
    return float(obs.g(radius))


def empirical_level_for_tau(spec, obs, n, tau, seed, samples=10**6):
    """Quantile fallback: u_n from the empirical marginal of X_0."""
    from . import processes as proc

    pts = proc.point_values_at(spec, seed, np.arange(samples), [0], channel=3)[:, 0]
    xs = np.sort(obs.apply(spec, pts))
    q = 1.0 - tau / n
    pos = q * samples - 0.5
    i = int(np.clip(np.floor(pos), 0, samples - 2))
    frac = pos - i
    return float(xs[i] * (1.0 - frac) + xs[i + 1] * frac)


@dataclass
class LevelSchedule:
    """Cached map n -> u_n at fixed tau (write-once per n)."""

    spec: ProcessSpec
    obs: ObservableSpec
    tau: float
    source: str = "analytic"
    seed: int = 0
    _cache: dict = field(default_factory=dict)

    def u(self, n):
        if n not in self._cache:
            if self.source == "analytic":
                self._cache[n] = level_for_tau(self.spec, self.obs, n, self.tau)
            else:
                self._cache[n] = empirical_level_for_tau(
                    self.spec, self.obs, n, self.tau, self.seed
                )
        return self._cache[n]

    def omega(self, n):
        """Cylinder-mode time horizon floor(tau / mu(Z_n))."""
        word = symbolic.SymbolicWord.parse(self.obs.anchor, self.spec.base)
        return omega_for_cylinder(self.spec, word.prefix(n), self.tau)


def omega_for_cylinder(spec, word, tau):
    """Time horizon matched to the cylinder {X_0 > u_n} = Z_n[anchor]."""
    if isinstance(word, str):
        word = symbolic.SymbolicWord.parse(word, spec.base)
    if len(word.digits) == 0:
        raise ValueError("empty word")
    mu = symbolic.cylinder_measure(word, spec.digit_weights)
    return int(math.floor(tau / mu))
