"""Spontaneous jumps of a latch held with both inputs high.

Noise drives rare transitions between the two stored states.  Their rate
falls steeply with the drive amplitude, which is what makes the circuit
usable as memory.  Run with ``python demos/latch_hold.py``; about a minute.
"""
from kerrnet.cli import latch_hold_levels, latch_hold_rate


def main():
    for e_high in (14.0, 16.0, 18.0):
        low, high = latch_hold_levels(e_high)
        js = latch_hold_rate(e_high, t_max=2000.0, seed=0, n_traj=1, workers=1)
        print(f"E_high {e_high:4.1f}: hold photon numbers {low:6.1f} / {high:6.1f}, "
              f"{js.n_up} up and {js.n_down} down jumps, "
              f"rate {js.rate:.3g} +- {js.rate_err:.2g} per unit time")


if __name__ == "__main__":
    main()
