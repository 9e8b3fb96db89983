"""Deterministic coherent drive waveforms.

All waveforms are vectorized over time and use left-continuous edges: at the
exact instant of a transition the previous level is returned.

Drive-program text format, one waveform per driven input::

    clock square low=0 high=50 period=4 duty=0.5 offset=0
    data  triangle low=0 high=50 period=8
    bias  constant level=12.5+3j
    reset piecewise 0:50 2:0 4:50
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class DriveError(ValueError):
    pass


@dataclass(frozen=True)
class Constant:
    level: complex = 0j

    def __call__(self, t):
        return np.full(np.shape(t), complex(self.level))


@dataclass(frozen=True)
class Square:
    low: complex
    high: complex
    period: float
    duty: float = 0.5
    offset: float = 0.0

    def __post_init__(self):
        if self.period <= 0 or not 0 <= self.duty <= 1:
            raise DriveError("square wave needs period > 0 and 0 <= duty <= 1")

    def __call__(self, t):
        frac = np.mod(np.asarray(t, float) - self.offset, self.period) / self.period
        high = (frac > 0) & (frac <= self.duty)
        return np.where(high, complex(self.high), complex(self.low))


@dataclass(frozen=True)
class Triangle:
    low: complex
    high: complex
    period: float
    offset: float = 0.0

    def __post_init__(self):
        if self.period <= 0:
            raise DriveError("triangle wave needs period > 0")

    def __call__(self, t):
        frac = np.mod(np.asarray(t, float) - self.offset, self.period) / self.period
        ramp = 1 - np.abs(2 * frac - 1)
        return complex(self.low) + (complex(self.high) - complex(self.low)) * ramp


@dataclass(frozen=True)
class PiecewiseConstant:
    """Level ``v_i`` on ``(t_i, t_{i+1}]``; the first level also holds before ``t_0``."""
    breakpoints: tuple[tuple[float, complex], ...]

    def __post_init__(self):
        times = [b[0] for b in self.breakpoints]
        if not times or any(b <= a for a, b in zip(times, times[1:])):
            raise DriveError("piecewise breakpoints must be non-empty and increasing")

    def __call__(self, t):
        times = np.array([b[0] for b in self.breakpoints])
        levels = np.array([complex(b[1]) for b in self.breakpoints])
        idx = np.searchsorted(times, np.asarray(t, float), side="left") - 1
        return levels[np.clip(idx, 0, len(levels) - 1)]


Waveform = Constant | Square | Triangle | PiecewiseConstant


def _c(text: str) -> complex:
    return complex(text.strip("()"))


_KINDS = {
    "constant": (Constant, {"level": _c}),
    "square": (Square, {"low": _c, "high": _c, "period": float, "duty": float, "offset": float}),
    "triangle": (Triangle, {"low": _c, "high": _c, "period": float, "offset": float}),
}


def parse_waveform(tokens: list[str]) -> Waveform:
    kind, *rest = tokens
    if kind == "piecewise":
        pts = []
        for tok in rest:
            t, sep, v = tok.partition(":")
            if not sep:
                raise DriveError(f"bad breakpoint {tok!r}")
            pts.append((float(t), _c(v)))
        return PiecewiseConstant(tuple(pts))
    if kind not in _KINDS:
        raise DriveError(f"unknown waveform {kind!r}")
    cls, conv = _KINDS[kind]
    kwargs = {}
    for tok in rest:
        key, sep, val = tok.partition("=")
        if not sep or key not in conv:
            raise DriveError(f"bad {kind} parameter {tok!r}")
        kwargs[key] = conv[key](val)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise DriveError(f"{kind}: {exc}") from None


def parse_drives(text: str) -> dict[str, Waveform]:
    drives = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        toks = raw.split("#", 1)[0].split()
        if not toks:
            continue
        if len(toks) < 2:
            raise DriveError(f"line {lineno}: expected '<input> <waveform> ...'")
        if toks[0] in drives:
            raise DriveError(f"line {lineno}: duplicate drive {toks[0]!r}")
        try:
            drives[toks[0]] = parse_waveform(toks[1:])
        except (DriveError, ValueError) as exc:
            raise DriveError(f"line {lineno}: {exc}") from None
    return drives


def _fc(z) -> str:
    return repr(complex(z)).strip("()")


def format_waveform(w: Waveform) -> str:
    if isinstance(w, Constant):
        return f"constant level={_fc(w.level)}"
    if isinstance(w, Square):
        return (f"square low={_fc(w.low)} high={_fc(w.high)} period={w.period!r} "
                f"duty={w.duty!r} offset={w.offset!r}")
    if isinstance(w, Triangle):
        return (f"triangle low={_fc(w.low)} high={_fc(w.high)} period={w.period!r} "
                f"offset={w.offset!r}")
    return "piecewise " + " ".join(f"{t!r}:{_fc(v)}" for t, v in w.breakpoints)


def format_drives(drives: dict[str, Waveform]) -> str:
    return "".join(f"{name} {format_waveform(w)}\n" for name, w in drives.items())
