"""Semiclassical integration of reduced Kerr-resonator circuits.

Each step applies the bare resonator dynamics and Kerr shift exactly through
an exponential and adds the linear couplings and inputs with an Euler term::

    alpha[n+1] = alpha[n] * exp((-i*detuning - kappa/2 - 2i*chi*|alpha[n]|^2) dt)
                 + (A alpha[n] + a + B beta_in[n]) dt

Every external input carries vacuum noise: independent Gaussian real and
imaginary parts with standard deviation ``1 / (2 sqrt(dt))`` per step.  The
same sample enters the state update and the output record.  Outputs use the
mean of the states before and after the step, which keeps the Wigner output
flux of a passive vacuum-driven circuit equal to the input flux.
"""
from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numba
import numpy as np
import scipy.sparse as sp

from .drives import Constant, Waveform
from .reduction import ReducedSystem

DIVERGENCE_LIMIT = 1e6
CHUNK_STEPS = 4096
SCHEMES = ("euler", "etd")


class DivergenceError(FloatingPointError):
    def __init__(self, resonator: str, step: int, time: float):
        super().__init__(f"field of {resonator!r} diverged at step {step} (t={time:.6g})")
        self.resonator = resonator
        self.step = step
        self.time = time


class DriveMismatchError(ValueError):
    pass


@dataclass
class SimConfig:
    """Integration settings.

    ``dt=None`` selects ``0.025 / max(detuning, kappa)``.  ``window`` is the
    boxcar averaging interval of the recorded traces (``None`` keeps every
    step).  ``scheme="euler"`` weights the coupling and input terms by ``dt``;
    ``"etd"`` weights them by ``(exp(z) - 1) / z * dt`` with ``z`` the
    exponent of the step, which makes noise-free fixed points exact.
    ``record`` and ``outputs`` select resonator and output traces by
    name; ``None`` records all resonators and all declared outputs.  Output
    names may also be internal connection fields ``<component>.out<j>``.
    """
    t_max: float
    dt: float | None = None
    seed: int = 0
    t_start: float = 0.0
    alpha0: np.ndarray | None = None
    window: float | None = None
    record: list[str] | None = None
    outputs: list[str] | None = None
    noise: bool = True
    wigner_correction: bool = False
    scheme: str = "euler"

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}; expected one of {SCHEMES}")

    def resolve_dt(self, sys: ReducedSystem) -> float:
        dt = sys.default_dt() if self.dt is None else float(self.dt)
        if not dt > 0:
            raise ValueError("dt must be positive")
        return dt

    def window_steps(self, dt: float) -> int:
        if self.window is None:
            return 1
        w = self.window / dt
        k = int(round(w))
        if k < 1 or abs(w - k) > 1e-6 * max(1.0, w):
            raise ValueError(f"averaging window {self.window} is not a multiple of dt={dt}")
        return k


@dataclass
class Trajectory:
    times: np.ndarray
    alpha: np.ndarray
    outputs: np.ndarray
    resonators: list[str]
    output_names: list[str]
    seed: int
    traj_index: int = 0
    dt: float = 0.0
    window_steps: int = 1
    final_alpha: np.ndarray = field(default_factory=lambda: np.zeros(0, complex))

    def field(self, name: str) -> np.ndarray:
        return self.alpha[:, self.resonators.index(name)]

    def output(self, name: str) -> np.ndarray:
        return self.outputs[:, self.output_names.index(name)]

    def photons(self, name: str) -> np.ndarray:
        return np.abs(self.field(name)) ** 2


# ---------------------------------------------------------------------------
# Noise
# ---------------------------------------------------------------------------

class NoiseSource:
    """One Philox stream per (seed, trajectory, input); steps advance the counter."""

    def __init__(self, seed: int, n_inputs: int, traj_index: int = 0):
        self.seed = seed
        self.traj_index = traj_index
        self.streams = [
            np.random.Generator(np.random.Philox(
                np.random.SeedSequence(seed, spawn_key=(traj_index, k))))
            for k in range(n_inputs)
        ]

    def increments(self, n_steps: int, dt: float) -> np.ndarray:
        """Complex noise samples of shape ``(n_inputs, n_steps)``."""
        sigma = 0.5 / np.sqrt(dt)
        out = np.empty((len(self.streams), n_steps), complex)
        for k, g in enumerate(self.streams):
            z = g.standard_normal((n_steps, 2))
            out[k].real = z[:, 0]
            out[k].imag = z[:, 1]
        return out * sigma


# ---------------------------------------------------------------------------
# Kernel
# ---------------------------------------------------------------------------

@numba.njit(cache=True)
def _integrate(alpha, u, bare, chi2, indptr, indices, data, dt, states, limit, etd):
    """Advance ``alpha`` through ``len(u)`` steps, storing the pre-step state.

    Returns -1 on success or the index ``n*n_res + j`` of the first
    diverging resonator.
    """
    n_res = alpha.shape[0]
    new = np.empty(n_res, np.complex128)
    for n in range(u.shape[0]):
        for j in range(n_res):
            states[n, j] = alpha[j]
        for j in range(n_res):
            x = alpha[j]
            mag2 = x.real * x.real + x.imag * x.imag
            acc = u[n, j]
            for p in range(indptr[j], indptr[j + 1]):
                acc += data[p] * alpha[indices[p]]
            rate = bare[j] - 1j * chi2[j] * mag2
            decay = np.exp(rate * dt)
            if etd:
                y = x * decay + acc * ((decay - 1) / rate)
            else:
                y = x * decay + acc * dt
            if not (abs(y) <= limit):
                return n * n_res + j
            new[j] = y
        for j in range(n_res):
            alpha[j] = new[j]
    return -1


def step(alpha, beta_in, sys: ReducedSystem, dt: float, wigner_correction: bool = False,
         scheme: str = "euler"):
    """Single integration step (reference form of the compiled kernel)."""
    alpha = np.asarray(alpha, complex)
    detuning = sys.detuning - 2 * sys.chi if wigner_correction else sys.detuning
    rate = -1j * detuning - sys.kappa / 2 - 2j * sys.chi * np.abs(alpha) ** 2
    decay = np.exp(rate * dt)
    weight = (decay - 1) / rate if scheme == "etd" else dt
    new = alpha * decay + (sys.A @ alpha + sys.a + sys.B @ beta_in) * weight
    bad = np.flatnonzero(~(np.abs(new) <= DIVERGENCE_LIMIT))
    if bad.size:
        raise DivergenceError(sys.resonators[bad[0]] if sys.resonators else str(bad[0]), 0, 0.0)
    return new


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

def input_means(sys: ReducedSystem, drives: dict[str, Waveform]) -> list[Waveform | None]:
    """Deterministic part of each external input; ``None`` for vacuum."""
    needed = {x.drive for x in sys.inputs if x.kind == "signal"}
    missing = sorted(needed - set(drives))
    if missing:
        raise DriveMismatchError(f"no drive given for input {missing[0]!r}")
    extra = sorted(set(drives) - needed)
    if extra:
        raise DriveMismatchError(f"drive {extra[0]!r} matches no circuit input")
    means = []
    for x in sys.inputs:
        if x.kind == "signal":
            means.append(drives[x.drive])
        elif x.kind == "coherent":
            means.append(Constant(x.value))
        else:
            means.append(None)
    return means


def _select(names_all, wanted, what):
    if wanted is None:
        return list(range(len(names_all)))
    idx = []
    for w in wanted:
        if w not in names_all:
            raise KeyError(f"unknown {what} {w!r}")
        idx.append(names_all.index(w))
    return idx


def run_trajectory(sys: ReducedSystem, drives: dict[str, Waveform], cfg: SimConfig,
                   traj_index: int = 0) -> Trajectory:
    """Integrate one noise realization over ``[t_start, t_start + t_max)``."""
    dt = cfg.resolve_dt(sys)
    w = cfg.window_steps(dt)
    n_steps = int(round(cfg.t_max / dt))
    n_steps -= n_steps % w
    means = input_means(sys, drives)
    res_idx = _select(sys.resonators, cfg.record, "resonator")
    declared = [o.name for o in sys.outputs if o.kind == "declared"]
    out_names = declared if cfg.outputs is None else list(cfg.outputs)

    n_in = sys.n_in
    const = sys.a.astype(complex).copy()
    varying = []
    for k, m in enumerate(means):
        if isinstance(m, Constant):
            const += sys.B[:, k] * complex(m.level)
        elif m is not None:
            varying.append(k)
    Bv = sys.B[:, varying]
    Asp = sp.csr_matrix(sys.A)
    Asp.sort_indices()
    B_op = sp.csr_matrix(sys.B) if sys.n_res > 32 else sys.B
    C_sel, c_sel, D_sel = sys.output_rows(out_names)
    D_op = sp.csr_matrix(D_sel) if n_in > 64 else D_sel
    detuning = sys.detuning - 2 * sys.chi if cfg.wigner_correction else sys.detuning
    bare = (-1j * detuning - sys.kappa / 2).astype(complex)
    chi2 = (2 * sys.chi).astype(float)
    noise = NoiseSource(cfg.seed, n_in, traj_index) if cfg.noise else None
    alpha = (np.zeros(sys.n_res, complex) if cfg.alpha0 is None
             else np.array(cfg.alpha0, complex).copy())
    if alpha.shape != (sys.n_res,):
        raise ValueError("alpha0 must have one entry per resonator")

    chunk = max(w, (CHUNK_STEPS // w) * w)
    n_win = n_steps // w
    times = np.empty(n_win)
    alpha_rec = np.empty((n_win, len(res_idx)), complex)
    out_rec = np.empty((n_win, len(out_names)), complex)
    pos = 0
    for start in range(0, n_steps, chunk):
        L = min(chunk, n_steps - start)
        t = cfg.t_start + (start + np.arange(L)) * dt
        beta = np.zeros((n_in, L), complex)
        for k in varying:
            beta[k] = means[k](t)
        if noise is not None:
            xi = noise.increments(L, dt)
            beta_noise = xi
        else:
            beta_noise = np.zeros((n_in, L), complex)
        u = (B_op @ beta_noise).T + (Bv @ beta[varying]).T + const
        u = np.ascontiguousarray(u)
        states = np.empty((L, sys.n_res), complex)
        bad = _integrate(alpha, u, bare, chi2, Asp.indptr, Asp.indices,
                         Asp.data.astype(complex), dt, states, DIVERGENCE_LIMIT,
                         cfg.scheme == "etd")
        if bad >= 0:
            n, j = divmod(bad, sys.n_res)
            raise DivergenceError(sys.resonators[j], start + n, t[n])
        full_in = beta_noise
        for k, m in enumerate(means):
            if m is not None:
                full_in[k] += beta[k] if k in varying else complex(m.level)
        # The output sees the state midway through the step, so the resonator
        # response to this step's noise sample is correlated with it.
        mid = states.copy()
        mid[:-1] += states[1:]
        mid[-1] += alpha
        mid *= 0.5
        outs = mid @ C_sel.T + (D_op @ full_in).T + c_sel
        m = L // w
        times[pos:pos + m] = t.reshape(m, w).mean(axis=1)
        alpha_rec[pos:pos + m] = states[:, res_idx].reshape(m, w, -1).mean(axis=1)
        out_rec[pos:pos + m] = outs.reshape(m, w, -1).mean(axis=1)
        pos += m
    return Trajectory(times, alpha_rec, out_rec,
                      [sys.resonators[i] for i in res_idx],
                      out_names,
                      cfg.seed, traj_index, dt, w, alpha.copy())


def _run_one(args):
    sys, drives, cfg, index, reducer = args
    traj = run_trajectory(sys, drives, cfg, traj_index=index)
    return reducer(traj) if reducer is not None else traj


def default_workers() -> int:
    env = os.environ.get("KERRNET_WORKERS")
    if env:
        return max(1, int(env))
    return os.cpu_count() or 1


def run_ensemble(sys: ReducedSystem, drives: dict[str, Waveform], cfg: SimConfig,
                 n_traj: int, workers: int | None = None, reducer=None) -> list:
    """Independent trajectories ``0..n_traj-1`` sharing the master seed.

    ``reducer`` maps each trajectory to a smaller summary inside the worker.
    Results are returned in trajectory order whatever the worker count.
    """
    if n_traj < 1:
        raise ValueError("n_traj must be >= 1")
    workers = default_workers() if workers is None else workers
    jobs = [(sys, drives, cfg, i, reducer) for i in range(n_traj)]
    if workers <= 1 or n_traj == 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_one, jobs))


def noise_free(cfg: SimConfig, **changes) -> SimConfig:
    return replace(cfg, noise=False, **changes)
