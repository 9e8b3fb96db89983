"""A 4-bit ripple counter of 88 Kerr resonators counting clock edges.

Simulates 80 time units with vacuum noise at E_high = 50 and decodes the
four output bits after every clock period.  Run with
``python demos/ripple_counter.py``; a few minutes on one core.
"""
import time

from kerrnet import SimConfig, Square, build_cell, counter_error_rate, flatten, reduce_circuit
from kerrnet import run_trajectory


def main():
    e_high = 50.0
    system = reduce_circuit(flatten(build_cell("counter4", e_high)))
    print(f"{system.n_res} resonators, {system.n_in} inputs")
    clock = Square(0, e_high, 10, 0.5)
    start = time.perf_counter()
    tr = run_trajectory(system, {"clk": clock},
                        SimConfig(t_start=-20, t_max=100, dt=5e-4, seed=0, window=0.1))
    print(f"simulated in {time.perf_counter() - start:.0f} s")
    ce = counter_error_rate(tr.times, tr.outputs, clock(tr.times), e_high, t_min=0)
    for t, v in zip(ce.sample_times, ce.values):
        print(f"  t = {t:6.1f}  count {v}")
    print(f"{ce.errors} decode errors")


if __name__ == "__main__":
    main()
