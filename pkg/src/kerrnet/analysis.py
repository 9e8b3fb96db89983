"""Statistics extracted from trajectories.

Jump rates between bistable states, autocorrelation decay rates, empirical
field distributions, propagation delays and ripple-counter error rates.
Partial results from independent trajectories merge associatively.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import curve_fit


class AnalysisError(ValueError):
    pass


# ---------------------------------------------------------------------------
# Jumps between two levels
# ---------------------------------------------------------------------------

@dataclass
class JumpStatistics:
    """Transition counts and rates of a two-level signal.

    ``states`` holds -1 before the first confirmed state, then 0 (low) or
    1 (high) per sample.  It is dropped when statistics are merged.
    """
    thresholds: tuple[float, float]
    n_up: int
    n_down: int
    time_low: float
    time_high: float
    total_time: float
    states: np.ndarray | None = None
    transition_times: np.ndarray | None = None

    @property
    def r_up(self) -> float:
        return self.n_up / self.time_low if self.time_low > 0 else math.nan

    @property
    def r_down(self) -> float:
        return self.n_down / self.time_high if self.time_high > 0 else math.nan

    @property
    def r_up_err(self) -> float:
        return math.sqrt(self.n_up) / self.time_low if self.time_low > 0 else math.nan

    @property
    def r_down_err(self) -> float:
        return math.sqrt(self.n_down) / self.time_high if self.time_high > 0 else math.nan

    @property
    def n_jumps(self) -> int:
        return self.n_up + self.n_down

    @property
    def rate(self) -> float:
        """All transitions per unit of classified time."""
        t = self.time_low + self.time_high
        return self.n_jumps / t if t > 0 else math.nan

    @property
    def rate_err(self) -> float:
        t = self.time_low + self.time_high
        return math.sqrt(self.n_jumps) / t if t > 0 else math.nan

    @property
    def rate_upper_bound(self) -> float:
        """``max(count, 1) / time``; bounds the rate when no jump was seen."""
        t = self.time_low + self.time_high
        return max(self.n_jumps, 1) / t if t > 0 else math.inf

    def merge(self, other: "JumpStatistics") -> "JumpStatistics":
        if not np.allclose(self.thresholds, other.thresholds):
            raise AnalysisError("cannot merge statistics taken with different thresholds")
        return JumpStatistics(self.thresholds, self.n_up + other.n_up,
                              self.n_down + other.n_down, self.time_low + other.time_low,
                              self.time_high + other.time_high,
                              self.total_time + other.total_time)


def _runs(zone: np.ndarray):
    """Start indices, lengths and values of constant runs."""
    if zone.size == 0:
        return np.zeros(0, int), np.zeros(0, int), zone
    change = np.flatnonzero(np.diff(zone)) + 1
    starts = np.concatenate(([0], change))
    lengths = np.diff(np.concatenate((starts, [zone.size])))
    return starts, lengths, zone[starts]


def detect_jumps(series, low: float, high: float, dt: float, lower_frac: float = 0.25,
                 upper_frac: float = 0.75, min_dwell: float | None = None,
                 keep_states: bool = True) -> JumpStatistics:
    """Count transitions with a dual-threshold hysteresis classifier.

    The thresholds sit at ``lower_frac`` and ``upper_frac`` of the way from
    ``low`` to ``high``.  A new state is confirmed once the signal stays past
    the opposite threshold for ``min_dwell`` (default ``10 * dt``); the
    transition is dated at the start of that excursion.  Dwells shorter
    than ``min_dwell`` are not resolved, so rates are biased low by roughly
    ``rate * min_dwell``.

    Args:
        series: real samples spaced ``dt`` apart (e.g. photon numbers).
        low, high: the two state levels, ``low < high``.
        dt: sample spacing.
    """
    x = np.asarray(series, float)
    if not (high > low and 0 <= lower_frac < upper_frac <= 1):
        raise AnalysisError("state levels must satisfy low < high with "
                            "0 <= lower_frac < upper_frac <= 1")
    lo_thr = low + lower_frac * (high - low)
    hi_thr = low + upper_frac * (high - low)
    min_dwell = 10 * dt if min_dwell is None else min_dwell
    need = max(1, int(math.ceil(min_dwell / dt - 1e-9)))
    zone = np.zeros(x.size, np.int8)
    zone[x > hi_thr] = 1
    zone[x < lo_thr] = -1
    starts, lengths, values = _runs(zone)
    keep = (values != 0) & (lengths >= need)
    c_starts, c_vals = starts[keep], values[keep]
    # Consecutive confirmations of the same level are one dwell.
    if c_vals.size:
        first = np.concatenate(([True], c_vals[1:] != c_vals[:-1]))
        c_starts, c_vals = c_starts[first], c_vals[first]
    states = np.full(x.size, -1, np.int8)
    for i, (s, v) in enumerate(zip(c_starts, c_vals)):
        end = c_starts[i + 1] if i + 1 < c_starts.size else x.size
        states[s:end] = 1 if v > 0 else 0
    ups = int(np.sum(c_vals[1:] > c_vals[:-1])) if c_vals.size > 1 else 0
    downs = int(np.sum(c_vals[1:] < c_vals[:-1])) if c_vals.size > 1 else 0
    return JumpStatistics(
        (lo_thr, hi_thr), ups, downs,
        float(np.sum(states == 0)) * dt, float(np.sum(states == 1)) * dt, x.size * dt,
        states if keep_states else None, c_starts[1:] * dt)


# ---------------------------------------------------------------------------
# Autocorrelation
# ---------------------------------------------------------------------------

@dataclass
class AutocorrFit:
    rate: float
    amplitude: float
    r_squared: float
    lags: np.ndarray
    acf: np.ndarray
    window: tuple[float, float]


def autocorrelation(series, max_lag: int | None = None) -> np.ndarray:
    """Normalized autocovariance magnitude ``|C(k)| / C(0)`` for ``k = 0..max_lag``."""
    z = np.asarray(series, complex)
    z = z - z.mean()
    n = z.size
    if n < 2:
        raise AnalysisError("need at least two samples")
    size = 1 << (2 * n - 1).bit_length()
    f = np.fft.fft(z, size)
    c = np.fft.ifft(f * np.conj(f))[:n] / np.arange(n, 0, -1)
    if c[0].real <= 0:
        raise AnalysisError("series has no variance")
    max_lag = n - 1 if max_lag is None else min(max_lag, n - 1)
    return np.abs(c[:max_lag + 1]) / c[0].real


def _exp(t, a, r):
    return a * np.exp(-r * t)


def autocorr_rate(series, dt: float, min_lag: float | None = None, max_lag: float | None = None,
                  min_r_squared: float = 0.9) -> AutocorrFit:
    """Decay rate of the field autocorrelation by a least-squares exponential fit.

    The lag window runs from ``min_lag`` (default one sample) to three times
    the decay time, first estimated from the 1/e point and then refitted once.
    For a symmetric two-state telegraph signal the rate is ``r_up + r_down``.

    Raises:
        AnalysisError: no resolvable correlation, or a poor fit.
    """
    x = np.asarray(series)
    limit = x.size // 4 if max_lag is None else int(max_lag / dt)
    acf = autocorrelation(x, max(limit, 4))
    lags = np.arange(acf.size) * dt
    start = 1 if min_lag is None else max(1, int(round(min_lag / dt)))
    below = np.flatnonzero(acf[start:] < 1 / math.e)
    if acf[start] < 1 / math.e or below.size == 0:
        raise AnalysisError("autocorrelation shows no resolvable exponential decay")
    tau = lags[start + below[0]]
    rate = amp = math.nan
    for _ in range(2):
        stop = min(acf.size, int(round(3 * tau / dt)) + 1)
        if stop - start < 3:
            raise AnalysisError("decay faster than the sampling allows")
        t, y = lags[start:stop], acf[start:stop]
        try:
            (amp, rate), _ = curve_fit(_exp, t, y, p0=(1.0, 1 / tau), maxfev=10000)
        except RuntimeError as exc:
            raise AnalysisError(f"exponential fit failed: {exc}") from None
        if not rate > 0:
            raise AnalysisError("fitted autocorrelation does not decay")
        tau = 1 / rate
    resid = y - _exp(t, amp, rate)
    r2 = 1 - np.sum(resid ** 2) / max(np.sum((y - y.mean()) ** 2), 1e-300)
    if r2 < min_r_squared:
        raise AnalysisError(f"exponential fit rejected (R^2 = {r2:.3f})")
    return AutocorrFit(float(rate), float(amp), float(r2), lags, acf, (float(t[0]), float(t[-1])))


# ---------------------------------------------------------------------------
# Field distributions
# ---------------------------------------------------------------------------

@dataclass
class FieldHistogram:
    """Counts of complex samples on a rectangular grid plus an overflow tally."""
    re_range: tuple[float, float]
    im_range: tuple[float, float]
    bins: tuple[int, int]
    counts: np.ndarray = None
    overflow: int = 0
    log_scale: bool = True

    def __post_init__(self):
        if self.counts is None:
            self.counts = np.zeros(self.bins, np.int64)
        if self.re_range[1] <= self.re_range[0] or self.im_range[1] <= self.im_range[0]:
            raise AnalysisError("histogram ranges must be increasing")

    @property
    def n_samples(self) -> int:
        return int(self.counts.sum()) + self.overflow

    @property
    def re_edges(self) -> np.ndarray:
        return np.linspace(*self.re_range, self.bins[0] + 1)

    @property
    def im_edges(self) -> np.ndarray:
        return np.linspace(*self.im_range, self.bins[1] + 1)

    def add(self, samples) -> "FieldHistogram":
        z = np.asarray(samples, complex).ravel()
        inside = ((z.real >= self.re_range[0]) & (z.real <= self.re_range[1])
                  & (z.imag >= self.im_range[0]) & (z.imag <= self.im_range[1]))
        h, _, _ = np.histogram2d(z.real[inside], z.imag[inside],
                                 bins=[self.re_edges, self.im_edges])
        self.counts += h.astype(np.int64)
        self.overflow += int(np.count_nonzero(~inside))
        return self

    def merge(self, other: "FieldHistogram") -> "FieldHistogram":
        if (self.re_range, self.im_range, tuple(self.bins)) != (
                other.re_range, other.im_range, tuple(other.bins)):
            raise AnalysisError("histogram grids differ")
        return FieldHistogram(self.re_range, self.im_range, self.bins,
                              self.counts + other.counts, self.overflow + other.overflow,
                              self.log_scale)

    def display(self) -> np.ndarray:
        """Counts, or their base-10 logarithm (empty bins as NaN) when ``log_scale``."""
        if not self.log_scale:
            return self.counts.astype(float)
        with np.errstate(divide="ignore"):
            out = np.log10(self.counts.astype(float))
        out[self.counts == 0] = np.nan
        return out

    def moments(self) -> tuple[complex, float, float]:
        """Mean and per-quadrature variances from bin centres."""
        re_c = 0.5 * (self.re_edges[1:] + self.re_edges[:-1])
        im_c = 0.5 * (self.im_edges[1:] + self.im_edges[:-1])
        w = self.counts / max(self.counts.sum(), 1)
        mr = float(np.sum(w.sum(axis=1) * re_c))
        mi = float(np.sum(w.sum(axis=0) * im_c))
        vr = float(np.sum(w.sum(axis=1) * (re_c - mr) ** 2))
        vi = float(np.sum(w.sum(axis=0) * (im_c - mi) ** 2))
        return complex(mr, mi), vr, vi

    def to_text(self) -> str:
        """Gnuplot ``matrix nonuniform`` block: imaginary axis down, real axis across."""
        data = self.display()
        re_c = 0.5 * (self.re_edges[1:] + self.re_edges[:-1])
        im_c = 0.5 * (self.im_edges[1:] + self.im_edges[:-1])
        lines = [" ".join([str(len(re_c))] + [repr(float(v)) for v in re_c])]
        for j, y in enumerate(im_c):
            lines.append(" ".join([repr(float(y))] + [repr(float(v)) for v in data[:, j]]))
        return "\n".join(lines) + "\n"


def accumulate_histogram(traj, resonator: str, re_range=(-15.0, 15.0), im_range=(-15.0, 15.0),
                         bins=(121, 121), hist: FieldHistogram | None = None,
                         log_scale: bool = True) -> FieldHistogram:
    """Bin every recorded sample of one resonator field.

    Raises:
        KeyError: ``resonator`` is not recorded in ``traj``.
    """
    if resonator not in traj.resonators:
        raise KeyError(f"unknown resonator {resonator!r}")
    if hist is None:
        hist = FieldHistogram(tuple(re_range), tuple(im_range), tuple(bins), log_scale=log_scale)
    return hist.add(traj.field(resonator))


# ---------------------------------------------------------------------------
# Propagation delay
# ---------------------------------------------------------------------------

@dataclass
class DelayMeasurement:
    edge_time: float
    crossing_time: float
    tau: float
    low: float
    high: float
    rising: bool
    measurable: bool = True
    degenerate: bool = False

    @property
    def mid_level(self) -> float:
        return 0.5 * (self.low + self.high)


def _crossings(t, y, level):
    """Interpolated times where ``y`` crosses ``level`` and their directions."""
    s = np.sign(y - level)
    idx = np.flatnonzero((s[:-1] != s[1:]) & (s[1:] != 0) | ((s[:-1] == 0) & (s[1:] != 0)))
    out = []
    for i in idx:
        y0, y1 = y[i], y[i + 1]
        frac = 0.0 if y1 == y0 else (level - y0) / (y1 - y0)
        out.append((t[i] + frac * (t[i + 1] - t[i]), y1 > y0))
    return out


def edge_times(times, stimulus, low: float | None = None, high: float | None = None):
    """Mid-level crossings of a stimulus trace as ``(time, rising)`` pairs."""
    t = np.asarray(times, float)
    y = np.abs(np.asarray(stimulus))
    low = float(y.min()) if low is None else low
    high = float(y.max()) if high is None else high
    return _crossings(t, y, 0.5 * (low + high))


def measure_delay(times, response, low: float, high: float, edges=None, stimulus=None
                  ) -> list[DelayMeasurement]:
    """Time from each stimulus edge to the response settling across its mid-level.

    The crossing used is the last one before the next edge, so a prompt
    glitch that crosses and returns does not count.  An edge after which the
    response ends on its starting side is reported as not measurable.

    Args:
        times: sample times of ``response``.
        response: output trace; magnitudes are used for complex input.
        low, high: steady response levels defining the mid-level.
        edges: ``(time, rising)`` pairs; derived from ``stimulus`` when omitted.
    """
    t = np.asarray(times, float)
    y = np.abs(np.asarray(response))
    if edges is None:
        if stimulus is None:
            raise AnalysisError("give either edges or a stimulus trace")
        edges = edge_times(t, stimulus)
    mid = 0.5 * (low + high)
    crossings = _crossings(t, y, mid)
    cross_t = np.array([c[0] for c in crossings])
    out = []
    for k, (te, rising) in enumerate(edges):
        t_next = edges[k + 1][0] if k + 1 < len(edges) else math.inf
        j0 = np.searchsorted(cross_t, te, side="left")
        j1 = np.searchsorted(cross_t, t_next, side="left")
        # an odd number of crossings means the response changed side
        if (j1 - j0) % 2 == 1:
            tc = float(cross_t[j1 - 1])
            tau = tc - te
            out.append(DelayMeasurement(te, tc, tau, low, high, rising, True, tau <= 0))
        else:
            out.append(DelayMeasurement(te, math.nan, math.nan, low, high, rising, False, False))
    return out


# ---------------------------------------------------------------------------
# Ripple counter
# ---------------------------------------------------------------------------

@dataclass
class CounterErrors:
    errors: int
    undecodable: int
    samples: int
    observed_time: float
    values: list = field(default_factory=list)
    sample_times: np.ndarray = field(default_factory=lambda: np.zeros(0))
    error_times: list = field(default_factory=list)

    @property
    def rate(self) -> float:
        return self.errors / self.observed_time if self.observed_time > 0 else math.nan

    @property
    def rate_err(self) -> float:
        return math.sqrt(self.errors) / self.observed_time if self.observed_time > 0 else math.nan


def decode_bits(levels, e_high: float, margin: float = 0.25):
    """Map output magnitudes to 0/1, or ``None`` inside the middle band."""
    m = np.abs(np.asarray(levels))
    lo, hi = margin * e_high, (1 - margin) * e_high
    return [None if lo <= v <= hi else int(v > hi) for v in m]


def counter_error_rate(times, bits, clock, e_high: float, t_min: float = 0.0,
                       margin: float = 0.25, modulus: int | None = None) -> CounterErrors:
    """Count departures of a ripple counter from the increment-by-one sequence.

    Bits (columns of ``bits``, least significant first) are sampled midway
    between consecutive falling clock edges after ``t_min``.  Each mismatch
    counts once and the expected sequence restarts from the observed value.
    Samples with a bit inside the middle band count as errors.
    """
    t = np.asarray(times, float)
    b = np.asarray(bits)
    if b.ndim == 1:
        b = b[:, None]
    modulus = modulus or 2 ** b.shape[1]
    falls = [te for te, rising in edge_times(t, clock, 0.0, e_high) if not rising]
    instants = [0.5 * (a + c) for a, c in zip(falls, falls[1:]) if a >= t_min]
    values, sample_times, error_times = [], [], []
    errors = undecodable = 0
    prev = None
    for ts in instants:
        i = min(int(np.searchsorted(t, ts)), t.size - 1)
        bs = decode_bits(b[i], e_high, margin)
        sample_times.append(t[i])
        if any(x is None for x in bs):
            values.append(None)
            errors += 1
            undecodable += 1
            error_times.append(t[i])
            prev = None
            continue
        v = sum(x << k for k, x in enumerate(bs))
        values.append(v)
        if prev is not None and v != (prev + 1) % modulus:
            errors += 1
            error_times.append(t[i])
        prev = v
    span = sample_times[-1] - sample_times[0] if len(sample_times) > 1 else 0.0
    return CounterErrors(errors, undecodable, len(values), float(span), values,
                         np.array(sample_times), error_times)


# ---------------------------------------------------------------------------
# Rate curves
# ---------------------------------------------------------------------------

@dataclass
class LogRateFit:
    """Quadratic fit of ``log10(rate)`` against drive amplitude."""
    coeffs: np.ndarray
    residual_norm: float

    def log_rate(self, e_high):
        return np.polyval(self.coeffs, e_high)

    def rate(self, e_high):
        return 10.0 ** self.log_rate(e_high)

    def solve(self, rate: float, above: float) -> float:
        """Smallest amplitude beyond ``above`` where the fitted rate equals ``rate``."""
        c = np.array(self.coeffs, float)
        c[-1] -= math.log10(rate)
        roots = np.roots(c)
        real = sorted(r.real for r in roots if abs(r.imag) < 1e-9 and r.real > above)
        if not real:
            raise AnalysisError(f"fitted curve never reaches rate {rate:g}")
        return float(real[0])


def fit_log_rate(e_high, rates, degree: int = 2) -> LogRateFit:
    e = np.asarray(e_high, float)
    r = np.asarray(rates, float)
    if np.any(~(r > 0)):
        raise AnalysisError("log-rate fit needs positive rates")
    y = np.log10(r)
    coeffs = np.polyfit(e, y, degree)
    resid = y - np.polyval(coeffs, e)
    return LogRateFit(coeffs, float(np.linalg.norm(resid)))


__all__ = [
    "AnalysisError", "AutocorrFit", "CounterErrors", "DelayMeasurement", "FieldHistogram",
    "JumpStatistics", "LogRateFit", "accumulate_histogram", "autocorr_rate", "autocorrelation",
    "counter_error_rate", "decode_bits", "detect_jumps", "edge_times", "fit_log_rate",
    "measure_delay",
]
