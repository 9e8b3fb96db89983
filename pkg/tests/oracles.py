"""Independent reference processes for the statistics tests."""
from dataclasses import dataclass

import numpy as np


@dataclass
class Telegraph:
    series: np.ndarray
    dt: float
    n_up: int
    n_down: int
    time_low: float
    time_high: float


def telegraph(r_up: float, r_down: float, dt: float, t_total: float, rng,
              noise: float = 0.1, low: float = 0.0, high: float = 1.0) -> Telegraph:
    """Two-level Markov signal sampled every ``dt`` with additive Gaussian noise.

    ``noise`` is the standard deviation as a fraction of ``high - low``.  The
    returned counts are those of the underlying process, not of the samples.
    """
    n_samples = int(round(t_total / dt))
    mean = 0.5 * (1 / r_up + 1 / r_down)
    n_dwell = int(2 * t_total / mean) + 50
    state0 = int(rng.random() < r_up / (r_up + r_down))
    rates = np.where((np.arange(n_dwell) + state0) % 2 == 0, r_up, r_down)
    ends = np.cumsum(rng.exponential(1 / rates))
    assert ends[-1] > t_total
    k = int(np.searchsorted(ends, t_total))
    times = np.arange(n_samples) * dt
    idx = np.searchsorted(ends[:k + 1], times, side="right")
    state = (idx + state0) % 2
    ups = sum(1 for i in range(k) if (i + state0) % 2 == 0)
    downs = k - ups
    bounds = np.concatenate(([0.0], ends[:k], [t_total]))
    lengths = np.diff(bounds)
    in_low = (np.arange(k + 1) + state0) % 2 == 0
    series = low + (high - low) * (state + noise * rng.standard_normal(n_samples))
    return Telegraph(series, dt, ups, downs, float(lengths[in_low].sum()),
                     float(lengths[~in_low].sum()))


def telegraph_coverage(rates, dt, expected_count, seeds, noise=0.1):
    """Fraction of rate estimates within two Poisson sigma of the true rates.

    Each process has ``r_down = 2 r_up`` and runs long enough to expect about
    ``expected_count`` upward jumps.  Returns ``(fraction, records)``.
    """
    from kerrnet.analysis import detect_jumps
    records = []
    for r in rates:
        for seed in seeds:
            rng = np.random.default_rng([seed, int(r * 1e6)])
            r_up, r_down = r, 2 * r
            t_total = expected_count * (1 / r_up + 1 / r_down)
            tg = telegraph(r_up, r_down, dt, t_total, rng, noise)
            js = detect_jumps(tg.series, 0.0, 1.0, dt, keep_states=False)
            for est, err, true in ((js.r_up, js.r_up_err, r_up),
                                   (js.r_down, js.r_down_err, r_down)):
                records.append((r, seed, est, err, true, abs(est - true) <= 2 * err))
    hits = sum(rec[-1] for rec in records)
    return hits / len(records), records
