"""Semiclassical simulation of quantum noise in Kerr-resonator photonic circuits."""
from .netlist import Netlist, NetlistError, NetlistSyntaxError, parse_netlist, serialize
from .flatten import FlatCircuit, check_circuit, flatten
from .reduction import ReducedSystem, backprop_reduce, reduce_circuit
from .drives import Constant, PiecewiseConstant, Square, Triangle, parse_drives
from .sde import SimConfig, Trajectory, run_ensemble, run_trajectory
from .stdcells import CellSpec, build_cell, classical_response, switching_energy
from .analysis import (
    FieldHistogram, JumpStatistics, accumulate_histogram, autocorr_rate,
    counter_error_rate, detect_jumps, fit_log_rate, measure_delay,
)

__version__ = "0.1.0"
