"""Classical levels and bistability of a single Kerr amplifier stage.

Run with ``python demos/amplifier_levels.py``.  Takes a few seconds.
"""
import math

import numpy as np

from kerrnet import (
    Constant, SimConfig, classical_response, flatten, parse_netlist, reduce_circuit,
    run_trajectory,
)

STAGE0 = """\
netlist amp0
comp bc source value=95
comp bs beamsplitter theta=0.3217505543966422 in=bc.0,input:signal
comp res resonator delta=50 chi=-0.5 kappa=25,25 in=bs.1
comp ps phaseshifter phi=-3.42 in=res.1
output q from ps.0
drop bs.0
drop res.0
"""


def main():
    system = reduce_circuit(flatten(parse_netlist(STAGE0)))
    print("stage-0 amplifier, noise-free")
    for signal in (0.0, 10.0):
        # the auxiliary drive and the signal meet at a 10/90 beamsplitter
        beta = 95 * math.sqrt(0.1) + signal * math.sqrt(0.9)
        (n,) = classical_response(50, -0.5, 50, 25, beta).photons
        for scheme in ("euler", "etd"):
            tr = run_trajectory(system, {"signal": Constant(signal)},
                                SimConfig(t_max=4.0, noise=False, scheme=scheme))
            print(f"  signal {signal:4.1f}  beta_in {beta:6.2f}  "
                  f"{scheme:5s} output {abs(tr.outputs[-1, 0]):6.2f}  "
                  f"exact {math.sqrt(25 * n):6.2f}")

    print("\nroot count against detuning (kappa = 50, chi = -0.5)")
    for ratio in (0.8, 0.85, 0.87, 0.9, 1.0):
        delta = 50 * ratio
        betas = np.linspace(0, 150, 30001)
        most = max(len(classical_response(delta, -0.5, 50, 25, b).photons) for b in betas)
        print(f"  delta/kappa {ratio:4.2f}: {'bistable' if most == 3 else 'single-valued'}")


if __name__ == "__main__":
    main()
