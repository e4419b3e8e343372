"""Exact, reproducible simulation of the built-in stationary processes.

Interval maps are simulated symbolically on digit streams (naive floating-point
iteration of an expanding map destroys randomness after ~53 steps); the
quadratic map runs on its conjugate doubling coordinate theta with the point
exposed as x = -cos(2*pi*theta).  The AR(1) model is the same shift structure
read in reverse: each step prepends one base-r digit.  Moving-maximum models
keep a short window of i.i.d. innovations.

Every path is a pure function of (seed, trial index, step index) through the
counter-based generator in :mod:`evl_lab.rng`, so trial-chunked, blocked and
serial executions produce bit-identical results.
"""

from __future__ import annotations

from dataclasses import dataclass, replace
from fractions import Fraction

import numpy as np

from . import rng

MAP_KINDS = ("m_ary", "dyadic_jump", "chebyshev")
SERIES_KINDS = ("ar1", "mma2", "mma13", "iid_uniform")
KINDS = MAP_KINDS + SERIES_KINDS

#: digits kept when projecting a digit state to a float
PRECISION = 64

#: fixed time-block length for open-horizon sweeps; a constant (never adapted
#: to runtime conditions) so that blocked results are reproducible
TIME_BLOCK = 2048


@dataclass(frozen=True)
class ProcessSpec:
    """Which stationary process to simulate, with its parameters."""

    kind: str
    m: int = 2
    weights: tuple[float, ...] = ()
    r: int = 2
    label: str = ""

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown process kind {self.kind!r}")
        if self.kind == "m_ary":
            if self.m < 2:
                raise ValueError("m must be >= 2")
            w = self.weights or tuple([1.0 / self.m] * self.m)
            if len(w) != self.m:
                raise ValueError("weights length must equal m")
            if abs(sum(w) - 1.0) > 1e-12 or any(not 0.0 < x < 1.0 for x in w):
                raise ValueError("weights must lie in (0,1) and sum to 1")
            object.__setattr__(self, "weights", tuple(float(x) for x in w))
        if self.kind == "ar1" and self.r < 2:
            raise ValueError("r must be >= 2")
        if not self.label:
            object.__setattr__(self, "label", self._default_label())

    def _default_label(self):
        if self.kind == "m_ary":
            if all(abs(w - 1.0 / self.m) < 1e-12 for w in self.weights):
                return f"m_ary(m={self.m},uniform)"
            return f"m_ary(m={self.m},weights={','.join(f'{w:g}' for w in self.weights)})"
        if self.kind == "ar1":
            return f"ar1(r={self.r})"
        return self.kind

    # -- constructors -------------------------------------------------------
    @staticmethod
    def m_ary(m, weights=None):
        return ProcessSpec("m_ary", m=m, weights=tuple(weights) if weights else ())

    @staticmethod
    def doubling():
        return ProcessSpec.m_ary(2)

    @staticmethod
    def bernoulli_doubling(alpha):
        return ProcessSpec.m_ary(2, (alpha, 1.0 - alpha))

    @staticmethod
    def dyadic_jump():
        return ProcessSpec("dyadic_jump")

    @staticmethod
    def chebyshev():
        return ProcessSpec("chebyshev")

    @staticmethod
    def ar1(r):
        return ProcessSpec("ar1", r=r)

    @staticmethod
    def mma2():
        return ProcessSpec("mma2")

    @staticmethod
    def mma13():
        return ProcessSpec("mma13")

    @staticmethod
    def iid_uniform():
        return ProcessSpec("iid_uniform")

    # -- structure ----------------------------------------------------------
    @property
    def base(self):
        """Digit base of the symbolic representation (map kinds and ar1)."""
        if self.kind == "m_ary":
            return self.m
        if self.kind in ("dyadic_jump", "chebyshev"):
            return 2
        if self.kind == "ar1":
            return self.r
        raise ValueError(f"{self.kind} has no digit representation")

    @property
    def digit_weights(self):
        if self.kind == "m_ary":
            return np.asarray(self.weights)
        return np.full(self.base, 1.0 / self.base)

    @property
    def uses_digits(self):
        return self.kind in ("m_ary", "dyadic_jump", "chebyshev", "ar1")

    @property
    def state_space(self):
        return {"m_ary": (0.0, 1.0), "dyadic_jump": (0.0, 1.0), "chebyshev": (-1.0, 1.0)}.get(
            self.kind, (0.0, 1.0)
        )


# ---------------------------------------------------------------------------
# lazy deterministic streams (single-path API)
# ---------------------------------------------------------------------------


class _Stream:
    """Append-only lazily extended sequence; re-reading an index is stable."""

    def __init__(self, source, dtype):
        self._source = source
        self._buf = np.empty(0, dtype=dtype)

    def _ensure(self, n):
        if n > self._buf.size:
            grow = max(n, 2 * self._buf.size, 256)
            self._buf = np.concatenate([self._buf, self._source(self._buf.size, grow)])

    def block(self, lo, hi):
        self._ensure(hi)
        return self._buf[lo:hi].copy()

    def __getitem__(self, i):
        self._ensure(i + 1)
        return self._buf[i]


class DigitStream(_Stream):
    """Exact symbolic state: digits over {0..m-1}, immutable once generated."""

    def __init__(self, base, source):
        super().__init__(source, np.uint8)
        self.base = base

    @staticmethod
    def random(spec, seed, trial=0, channel=rng.CH_ORBIT):
        src = lambda lo, hi: _digit_block(spec, seed, [trial], lo, hi, channel)[0]
        return DigitStream(spec.base, src)

    @staticmethod
    def periodic(base, word_digits):
        w = np.asarray(word_digits, dtype=np.uint8)
        src = lambda lo, hi: w[np.arange(lo, hi) % w.size]
        return DigitStream(base, src)

    @staticmethod
    def with_prefix(base, prefix, tail_stream):
        p = np.asarray(prefix, dtype=np.uint8)

        def src(lo, hi):
            out = np.empty(hi - lo, dtype=np.uint8)
            for k, i in enumerate(range(lo, hi)):
                out[k] = p[i] if i < p.size else tail_stream[i]
            return out

        return DigitStream(base, src)


class UniformStream(_Stream):
    """Lazily extended i.i.d. Uniform(0,1) innovations."""

    def __init__(self, source):
        super().__init__(source, np.float64)

    @staticmethod
    def random(seed, trial=0, channel=rng.CH_ORBIT):
        return UniformStream(lambda lo, hi: rng.uniforms(seed, channel, [trial], lo, hi)[0])


@dataclass
class ProcessState:
    """Current simulation state: a stream plus a read cursor.

    Map kinds expose the orbit point as the digit tail at the cursor; ar1
    reads 64 digits most-significant-last; moving-maximum kinds read their
    innovation window from the cursor.
    """

    spec: ProcessSpec
    stream: object
    cursor: int = 0


def sample_initial(spec, seed, trial=0, channel=rng.CH_ORBIT):
    """State drawn from the invariant/stationary law of ``spec``."""
    if spec.uses_digits:
        return ProcessState(spec, DigitStream.random(spec, seed, trial, channel), 0)
    return ProcessState(spec, UniformStream.random(seed, trial, channel), 0)


def step(spec, state):
    """Advance one time step (pure: returns a new state on the same stream)."""
    if spec.kind == "dyadic_jump":
        c = state.cursor
        while state.stream[c] != 1:
            c += 1
        return replace(state, cursor=c + 1)
    return replace(state, cursor=state.cursor + 1)


def _digit_value(digits, base, K):
    digits = np.asarray(digits[:K], dtype=np.float64)
    return float(digits @ (float(base) ** -(np.arange(1, digits.size + 1, dtype=np.float64))))


def evaluate_point(spec, state, K=PRECISION):
    """Float projection of the state; error at most base**-K (float64 capped)."""
    if K < 1:
        raise ValueError("K must be >= 1")
    c = state.cursor
    if spec.kind in ("m_ary", "dyadic_jump"):
        return _digit_value(state.stream.block(c, c + K), spec.base, K)
    if spec.kind == "chebyshev":
        theta = _digit_value(state.stream.block(c, c + K), 2, K)
        return float(-np.cos(2.0 * np.pi * theta))
    if spec.kind == "ar1":
        msb_first = state.stream.block(c, c + 64)[::-1]
        return _digit_value(msb_first, spec.r, K)
    if spec.kind == "mma2":
        return float(max(state.stream[c + 1], state.stream[c + 3]))
    if spec.kind == "mma13":
        return float(max(state.stream[c], state.stream[c + 1], state.stream[c + 3]))
    return float(state.stream[state.cursor])


def exact_point(spec, state, K=PRECISION):
    """Exact rational projection of a digit state (for exactness checks)."""
    if not spec.uses_digits or spec.kind == "chebyshev":
        raise ValueError("exact_point requires a plain digit-stream kind")
    c = state.cursor
    if spec.kind == "ar1":
        digits = state.stream.block(c, c + 64)[::-1][:K]
    else:
        digits = state.stream.block(c, c + K)
    b = spec.base
    num = 0
    for d in digits:
        num = num * b + int(d)
    return Fraction(num, b ** len(digits))


def observe_path(spec, observable, seed, n, trial=0, channel=rng.CH_ORBIT):
    """Series (X_0, ..., X_{n-1}) of the observable along one stationary path."""
    if n < 1:
        raise ValueError("n must be >= 1")
    pts = point_values_range(spec, seed, [trial], 0, n, channel=channel)[0]
    return observable.apply(spec, pts)


# ---------------------------------------------------------------------------
# vectorized ensemble engine
# ---------------------------------------------------------------------------


def _digit_block(spec, seed, trials, lo, hi, channel, prefix=None):
    """Digits at positions [lo, hi) for many trials, honouring a fixed prefix."""
    base = spec.base
    w = spec.digit_weights
    if base == 2 and abs(w[0] - 0.5) < 1e-15:
        out = rng.bits(seed, channel, trials, lo, hi)
    else:
        out = rng.digits(seed, channel, trials, lo, hi, np.cumsum(w))
    if prefix is not None and lo < prefix.shape[1]:
        k = min(hi, prefix.shape[1])
        out[:, : k - lo] = prefix[:, lo:k]
    return out


def _uniform_block(spec, seed, trials, lo, hi, channel, prefix=None):
    out = rng.uniforms(seed, channel, trials, lo, hi)
    if prefix is not None and lo < prefix.shape[1]:
        k = min(hi, prefix.shape[1])
        out[:, : k - lo] = prefix[:, lo:k]
    return out


class PathEngine:
    """Sequential block sweep over an ensemble of paths of one process.

    ``masks``/``points`` must be called with contiguous increasing windows
    (the ar1 scan carries state across blocks).  ``select`` compacts the
    ensemble to the paths where ``keep`` is True, preserving per-path streams.
    """

    def __init__(self, spec, seed, trials, channel=rng.CH_ORBIT, prefix=None):
        self.spec = spec
        self.seed = seed
        self.trials = np.atleast_1d(np.asarray(trials, dtype=np.uint64))
        self.channel = channel
        self.prefix = prefix
        self._t = 0
        self._carry = None  # ar1 running value

    def _check_window(self, t0):
        if t0 != self._t:
            raise ValueError("engine windows must be contiguous and increasing")

    def select(self, keep):
        self.trials = self.trials[keep]
        if self.prefix is not None:
            self.prefix = self.prefix[keep]
        if self._carry is not None:
            self._carry = self._carry[keep]

    # -- map kinds: backward scan of the digit tail -------------------------
    def _map_theta_columns(self, t0, t1, consume):
        d = _digit_block(
            self.spec, self.seed, self.trials, t0, t1 + PRECISION, self.channel, self.prefix
        )
        inv = 1.0 / self.spec.base
        x = np.zeros(self.trials.size)
        cols = d.shape[1]
        buf = np.empty_like(x)
        for t in range(cols - 1, -1, -1):
            np.add(d[:, t], x, out=buf)
            np.multiply(buf, inv, out=x)
            if t < t1 - t0:
                consume(t, x)

    def _ar1_columns(self, t0, t1, consume):
        # X_t = (X_{t-1} + d_{t+63}) / r; X_0 built from digits [0, 64) with
        # the most significant digit at position 63.  The division contracts,
        # so float error stays bounded by ~2eps * r/(r-1).
        r = float(self.spec.r)
        if self._carry is None:  # t0 == 0 enforced by _check_window
            d0 = _digit_block(
                self.spec, self.seed, self.trials, 0, PRECISION, self.channel, self.prefix
            )
            x = np.zeros(self.trials.size)
            for j in range(PRECISION):
                x = (x + d0[:, j]) / r
            self._carry = x
            consume(0, x)
            lo = 1
        else:
            lo = t0
        if lo >= t1:
            return
        d = _digit_block(
            self.spec,
            self.seed,
            self.trials,
            lo + PRECISION - 1,
            t1 + PRECISION - 1,
            self.channel,
            self.prefix,
        )
        x = self._carry
        buf = np.empty_like(x)
        for k, t in enumerate(range(lo, t1)):
            np.add(x, d[:, k], out=buf)
            np.multiply(buf, 1.0 / r, out=x)
            consume(t - t0, x)
        self._carry = x

    def _series_values(self, t0, t1):
        spec = self.spec
        if spec.kind == "iid_uniform":
            return _uniform_block(spec, self.seed, self.trials, t0, t1, self.channel, self.prefix)
        u = _uniform_block(spec, self.seed, self.trials, t0, t1 + 3, self.channel, self.prefix)
        n = t1 - t0
        if spec.kind == "mma2":
            return np.maximum(u[:, 1 : n + 1], u[:, 3 : n + 3])
        return np.maximum(np.maximum(u[:, :n], u[:, 1 : n + 1]), u[:, 3 : n + 3])

    def masks(self, t0, t1, event):
        """Boolean exceedance matrix for steps [t0, t1)."""
        self._check_window(t0)
        n = t1 - t0
        out = np.empty((self.trials.size, n), dtype=bool)
        if self.spec.kind in ("m_ary", "chebyshev"):
            self._map_theta_columns(t0, t1, lambda t, x: event.mask_native(x, out=out[:, t]))
        elif self.spec.kind == "ar1":
            self._ar1_columns(t0, t1, lambda t, x: event.mask_native(x, out=out[:, t]))
        elif self.spec.kind in ("mma2", "mma13", "iid_uniform"):
            v = self._series_values(t0, t1)
            event.mask_native(v, out=out)
        else:
            raise ValueError("use dyadic_jump_paths for the jump map")
        self._t = t1
        return out

    def points(self, t0, t1):
        """Exposed process points at steps [t0, t1) (x-space for chebyshev)."""
        self._check_window(t0)
        n = t1 - t0
        if self.spec.kind in ("m_ary", "chebyshev"):
            out = np.empty((self.trials.size, n))
            self._map_theta_columns(t0, t1, lambda t, x: out.__setitem__((slice(None), t), x))
            if self.spec.kind == "chebyshev":
                out = -np.cos(2.0 * np.pi * out)
        elif self.spec.kind == "ar1":
            out = np.empty((self.trials.size, n))
            self._ar1_columns(t0, t1, lambda t, x: out.__setitem__((slice(None), t), x))
        else:
            out = self._series_values(t0, t1)
        self._t = t1
        return out

    def digit_matrix(self, t0, t1, lookahead=0):
        """Raw digits at [t0, t1+lookahead) for cylinder matching; the sweep
        cursor advances to t1 (digit positions are stateless, overlap is fine)."""
        self._check_window(t0)
        d = _digit_block(
            self.spec, self.seed, self.trials, t0, t1 + lookahead, self.channel, self.prefix
        )
        self._t = t1
        return d


def dyadic_jump_paths(spec, seed, trials, n_steps, channel=rng.CH_ORBIT, prefix=None):
    """Orbit points of the countable-branch jump map: (T, n_steps) values.

    Each step consumes the leading 0^(k-1)1 bit block; orbit points are the
    bit tails after each 1.  Geometric branch lengths mean ~2 bits per step.
    """
    trials = np.atleast_1d(np.asarray(trials, dtype=np.uint64))
    T = trials.size
    need = int(2 * n_steps + 8 * np.sqrt(n_steps) + PRECISION + 64)
    while True:
        b = rng.bits(seed, channel, trials, 0, need)
        if prefix is not None:
            k = min(need, prefix.shape[1])
            b[:, :k] = prefix[:, :k]
        if (b.sum(axis=1) - b[:, -PRECISION:].sum(axis=1)).min() >= n_steps:
            break
        need *= 2  # astronomically rare top-up, keeps positional determinism
    vals = np.empty((T, need), dtype=np.float64)
    x = np.zeros(T)
    for t in range(need - 1, -1, -1):
        x = (b[:, t] + x) * 0.5
        vals[:, t] = x
    out = np.empty((T, n_steps))
    out[:, 0] = vals[:, 0]
    rows, cols = np.nonzero(b[:, : need - PRECISION])
    counts = np.bincount(rows, minlength=T)
    starts = np.zeros(T, dtype=np.int64)
    np.cumsum(counts[:-1], out=starts[1:])
    for i in range(T):
        ones = cols[starts[i] : starts[i] + n_steps - 1]
        out[i, 1:] = vals[i, ones + 1]
    return out


def point_values_range(spec, seed, trials, t0, t1, channel=rng.CH_ORBIT, prefix=None):
    """Exposed points at steps [t0, t1) for many trials (one-shot sweep)."""
    if spec.kind == "dyadic_jump":
        if t0 != 0:
            raise ValueError("jump-map sweeps must start at step 0")
        return dyadic_jump_paths(spec, seed, trials, t1, channel)
    eng = PathEngine(spec, seed, trials, channel, prefix)
    if t0 > 0:
        if spec.kind == "ar1":
            eng.points(0, t0)  # warm the carried scan
        else:
            eng._t = t0
    return eng.points(t0, t1)


def point_values_at(spec, seed, trials, steps, channel=rng.CH_ORBIT):
    """Exposed points at the given steps only; cheap when steps are sparse."""
    steps = sorted(set(int(s) for s in steps))
    trials = np.atleast_1d(np.asarray(trials, dtype=np.uint64))
    if spec.kind in ("ar1", "dyadic_jump"):
        pts = point_values_range(spec, seed, trials, 0, max(steps) + 1, channel)
        return pts[:, steps]
    out = np.empty((trials.size, len(steps)))
    for j, s in enumerate(steps):
        out[:, j] = point_values_range(spec, seed, trials, s, s + 1, channel)[:, 0]
    return out


@dataclass(frozen=True)
class Ensemble:
    """Descriptor of `trials` independent stationary paths of length `length`.

    ``obs`` names the observable whose exceedances the consumer studies; it is
    carried here so estimator signatures can take the ensemble alone.
    """

    spec: ProcessSpec
    seed: int
    trials: int
    length: int
    channel: int = rng.CH_ORBIT
    obs: object = None

    def chunk_size(self, extra=0):
        per_step = 12 if self.spec.uses_digits and self.spec.base != 2 else 4
        if self.spec.kind in ("mma2", "mma13", "iid_uniform"):
            per_step = 36  # float64 innovations plus shifted-max temporaries
        budget = 192 << 20
        return max(256, int(budget / (per_step * (self.length + extra + 1))))

    def mask_chunks(self, event, extra=0):
        """Yield (trial_index_array, bool matrix (ct, length+extra)) chunks."""
        L = self.length + extra
        step = self.chunk_size(extra)
        for lo in range(0, self.trials, step):
            ids = np.arange(lo, min(lo + step, self.trials), dtype=np.uint64)
            eng = PathEngine(self.spec, self.seed, ids, self.channel)
            if event.is_cylinder:
                word = np.asarray(event.word, dtype=np.uint8)
                d = eng.digit_matrix(0, L, lookahead=word.size - 1)
                m = np.ones((ids.size, L), dtype=bool)
                for i in range(word.size):
                    m &= d[:, i : i + L] == word[i]
                yield ids, m
            elif self.spec.kind == "dyadic_jump":
                pts = dyadic_jump_paths(self.spec, self.seed, ids, L, self.channel)
                yield ids, event.mask_native(pts)
            else:
                yield ids, eng.masks(0, L, event)
