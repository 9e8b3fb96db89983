"""Drive waveforms and the drive-program text format."""
import numpy as np
import pytest
from hypothesis import given, strategies as st

from kerrnet.drives import (
    Constant, DriveError, PiecewiseConstant, Square, Triangle, format_drives, parse_drives,
)


def test_constant():
    np.testing.assert_array_equal(Constant(2 + 1j)(np.arange(3.0)), [2 + 1j] * 3)


def test_square_left_continuous():
    w = Square(0, 50, period=4, duty=0.5)
    # high on (0, 2], low on (2, 4]
    np.testing.assert_array_equal(w(np.array([0.0, 1e-9, 2.0, 2.0 + 1e-9, 4.0])),
                                  [0, 50, 50, 0, 0])


def test_square_offset():
    w = Square(0, 1, period=2, duty=0.5, offset=0.5)
    np.testing.assert_array_equal(w(np.array([0.4, 0.6, 1.5, 1.6])), [0, 1, 1, 0])


def test_triangle():
    w = Triangle(0, 10, period=4)
    np.testing.assert_allclose(w(np.array([0.0, 1.0, 2.0, 3.0, 4.0])), [0, 5, 10, 5, 0])


def test_piecewise_left_continuous():
    w = PiecewiseConstant(((0.0, 1), (2.0, 3), (5.0, -1j)))
    np.testing.assert_array_equal(w(np.array([-1.0, 0.0, 1.0, 2.0, 2.5, 5.0, 9.0])),
                                  [1, 1, 1, 1, 3, 3, -1j])


@pytest.mark.parametrize("bad", [
    lambda: Square(0, 1, period=0),
    lambda: Square(0, 1, period=1, duty=1.5),
    lambda: Triangle(0, 1, period=-1),
    lambda: PiecewiseConstant(()),
    lambda: PiecewiseConstant(((1.0, 0), (1.0, 1))),
])
def test_invalid_waveforms(bad):
    with pytest.raises(DriveError):
        bad()


def test_parse_program():
    text = ("clock square low=0 high=50 period=4 duty=0.5  # comment\n\n"
            "bias constant level=12.5+3j\nreset piecewise 0:50 2:0 4:50\n"
            "data triangle low=0 high=10 period=8\n")
    d = parse_drives(text)
    assert d["clock"] == Square(0, 50, 4.0, 0.5, 0.0)
    assert d["bias"] == Constant(12.5 + 3j)
    assert d["reset"] == PiecewiseConstant(((0.0, 50), (2.0, 0), (4.0, 50)))
    assert d["data"] == Triangle(0, 10, 8.0)


@pytest.mark.parametrize("text, fragment", [
    ("a sawtooth period=1\n", "unknown waveform"),
    ("a square lo=1 period=1\n", "bad square parameter"),
    ("a constant level=1\na constant level=2\n", "duplicate"),
    ("a\n", "expected"),
    ("a piecewise 0-1\n", "bad breakpoint"),
])
def test_parse_errors(text, fragment):
    with pytest.raises(DriveError, match=fragment):
        parse_drives(text)


_levels = st.complex_numbers(max_magnitude=1e3, allow_nan=False, allow_infinity=False)
_times = st.floats(0.01, 100, allow_nan=False)


@st.composite
def programs(draw):
    out = {}
    for i in range(draw(st.integers(1, 4))):
        kind = draw(st.sampled_from(["c", "s", "t", "p"]))
        if kind == "c":
            w = Constant(draw(_levels))
        elif kind == "s":
            w = Square(draw(_levels), draw(_levels), draw(_times), draw(st.floats(0, 1)),
                       draw(st.floats(-10, 10)))
        elif kind == "t":
            w = Triangle(draw(_levels), draw(_levels), draw(_times), draw(st.floats(-10, 10)))
        else:
            ts = sorted(set(draw(st.lists(st.floats(-50, 50), min_size=1, max_size=5))))
            w = PiecewiseConstant(tuple((t, draw(_levels)) for t in ts))
        out[f"in{i}"] = w
    return out


@given(programs())
def test_program_round_trip(prog):
    assert parse_drives(format_drives(prog)) == prog
