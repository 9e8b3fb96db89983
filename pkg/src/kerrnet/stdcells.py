"""Standard cells: amplifiers, gates, latch, flip-flop and ripple counter.

Every builder returns a top-level :class:`~kerrnet.netlist.Netlist` holding
the sub-cell definitions, one instance of the requested cell driven by
``input:<port>`` signals, its declared outputs and explicit drops.  Numeric
parameters come from the packaged ``data/cells.json`` file.

Signals are "high" at amplitude ``E_high`` (real, positive) and "low" at 0.
The latch inputs are active low: ``set = 0`` forces ``q`` high, ``reset = 0``
forces it low and both high holds the stored bit.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

import numpy as np

from .netlist import NetlistError, parse_netlist, Netlist

CELL_KINDS = ("amplifier_stage", "amplifier_chain", "and_gate", "fanout", "latch",
              "dflipflop", "counter4")

PORTS = {
    "and_gate": (("a", "b"), ("q",)),
    "fanout": (("a",), ("q1", "q2")),
    "latch": (("set", "reset"), ("q",)),
    "dflipflop": (("d", "clk"), ("q",)),
    "counter4": (("clk",), ("q0", "q1", "q2", "q3")),
}


@lru_cache(maxsize=None)
def cell_data() -> dict:
    """Parameter tables shipped with the package."""
    text = resources.files("kerrnet").joinpath("data/cells.json").read_text()
    return json.loads(text)


@dataclass(frozen=True)
class CellSpec:
    """What to build.

    Attributes:
        kind: one of :data:`CELL_KINDS`.
        e_high: design "high" input amplitude; gate parameters scale with it.
        stage: amplifier stage index (0-3) for ``amplifier_stage``.
        stages: number of cascaded stages for ``amplifier_chain``.
        inverting: selects the inverting amplifier table.
        overrides: replacement values for individual table entries of the
            selected gate, e.g. ``{"phi2": 0.1}``.
    """
    kind: str
    e_high: float = 50.0
    stage: int = 0
    stages: int = 4
    inverting: bool = False
    overrides: dict = field(default_factory=dict, hash=False, compare=False)

    def __post_init__(self):
        if self.kind not in CELL_KINDS:
            raise ValueError(f"unknown cell kind {self.kind!r}")
        if not self.e_high > 0:
            raise ValueError("E_high must be positive")
        if not 0 <= self.stage < 4:
            raise ValueError(f"unknown amplifier stage {self.stage}")
        if not 1 <= self.stages <= 4:
            raise ValueError("amplifier chains have 1 to 4 stages")


# ---------------------------------------------------------------------------
# Parameters
# ---------------------------------------------------------------------------

def gate_params(kind: str, e_high: float, overrides: dict | None = None) -> dict:
    """Table values for ``and``, ``fanout`` or ``latch`` scaled to ``e_high``."""
    p = dict(cell_data()["gates"][kind])
    p.update(overrides or {})
    p["chi"] = p["chi_scale"] / e_high ** 2
    if kind == "fanout":
        p["beta_c"] = p["beta_c_scale"] * e_high
    if kind == "latch":
        p["beta_c"] = p["beta_c_scale"] * np.exp(-1j * p["phi1"]) * e_high
    return p


def amplifier_params(stage: int, inverting: bool) -> dict:
    d = cell_data()["amplifier"]
    table = d["inverting" if inverting else "noninverting"]
    return {"t": d["t"], "chi": d["chi"][stage], "kappa1": d["kappa1"][stage],
            "kappa2": d["kappa2"][stage], "delta": d["delta"][stage],
            "beta_c": table["beta_c"][stage], "phi": table["phi"][stage],
            "design_in": tuple(table["design_in"][stage])}


# ---------------------------------------------------------------------------
# Netlist text generation
# ---------------------------------------------------------------------------

def _f(x: float) -> str:
    return repr(float(x))


def _z(z: complex) -> str:
    return repr(complex(z)).strip("()")


def _theta(t: float) -> str:
    return _f(math.acos(t))


def _resonator(name, p, source, kappa=None):
    kappa = kappa or p["kappa"]
    ks = ",".join(_f(k) for k in kappa)
    return f"comp {name} resonator delta={_f(p['delta'])} chi={_f(p['chi'])} kappa={ks} in={source}"


def _amp_stage_def(name: str, p: dict) -> list[str]:
    return [
        f"compound {name} {{",
        f"  comp bc source value={_z(p['beta_c'])}",
        f"  comp bs beamsplitter theta={_theta(p['t'])} in=bc.0,input:a",
        "  " + _resonator("res", p, "bs.1", (p["kappa1"], p["kappa2"])),
        f"  comp ps phaseshifter phi={_f(p['phi'])} in=res.1",
        "  output q from ps.0",
        "  drop bs.0",
        "  drop res.0",
        "} ports in=a out=q",
    ]


def _and_def(p: dict) -> list[str]:
    return [
        "compound and_gate {",
        f"  comp bs1 beamsplitter theta={_theta(p['t1'])} in=input:a,input:b",
        "  " + _resonator("res", p, "bs1.1"),
        f"  comp ps1 phaseshifter phi={_f(p['phi1'])} in=res.0",
        f"  comp bs2 beamsplitter theta={_theta(p['t2'])} in=ps1.0,res.1",
        f"  comp ps2 phaseshifter phi={_f(p['phi2'])} in=bs2.1",
        "  output q from ps2.0",
        "  drop bs1.0",
        "  drop bs2.0",
        "  drop res.2",
        "} ports in=a,b out=q",
    ]


def _fanout_def(p: dict) -> list[str]:
    return [
        "compound fanout {",
        f"  comp bc source value={_z(p['beta_c'])}",
        f"  comp bs1 beamsplitter theta={_theta(p['t1'])} in=bc.0,input:a",
        "  " + _resonator("res", p, "bs1.1"),
        f"  comp ps1 phaseshifter phi={_f(p['phi1'])} in=res.0",
        f"  comp bs2 beamsplitter theta={_theta(p['t2'])} in=ps1.0,res.1",
        f"  comp ps2 phaseshifter phi={_f(p['phi2'])} in=bs2.1",
        f"  comp bs3 beamsplitter theta={_theta(p['t3'])} in=ps2.0",
        "  output q1 from bs3.0",
        "  output q2 from bs3.1",
        "  drop bs1.0",
        "  drop bs2.0",
        "  drop res.2",
        "} ports in=a out=q1,q2",
    ]


def _latch_def(p: dict) -> list[str]:
    # Side j: the bias and the other resonator's kappa_2 output mix at t2,
    # then join the active-low input at t1 before entering resonator j.  The
    # spare mixer ports carry the same bias, so combining them at t3 cancels
    # it and leaves the difference of the two feedback fields.
    lines = ["compound latch {"]
    for j, other, port in ((1, 2, "set"), (2, 1, "reset")):
        lines += [
            f"  comp bc{j} source value={_z(p['beta_c'])}",
            f"  comp mix{j} beamsplitter theta={_theta(p['t2'])} in=bc{j}.0,r{other}.1",
            f"  comp ps{j} phaseshifter phi={_f(p['phi1'])} in=mix{j}.0",
            f"  comp in{j} beamsplitter theta={_theta(p['t1'])} in=ps{j}.0,input:{port}",
            "  " + _resonator(f"r{j}", p, f"in{j}.1"),
            f"  drop in{j}.0",
            f"  drop r{j}.0",
            f"  drop r{j}.2",
        ]
    lines += [
        f"  comp psc phaseshifter phi={_f(p['phi2'])} in=mix1.1",
        f"  comp comb beamsplitter theta={_theta(p['t3'])} in=psc.0,mix2.1",
        f"  comp psq phaseshifter phi={_f(p['phi3'])} in=comb.0",
        "  output q from psq.0",
        "  drop comb.1",
        "} ports in=set,reset out=q",
    ]
    return lines


def _dff_def() -> list[str]:
    # Master latch is transparent while clk is high, slave while clk is low.
    return [
        "compound dflipflop {",
        "  comp fa fanout in=input:clk",
        "  comp fb fanout in=fa.q1",
        "  comp fc fanout in=fa.q2",
        "  comp fd fanout in=fc.q1",
        "  drop fc.q2",
        "  comp fd1 fanout in=input:d",
        "  comp fd2 fanout in=fd1.q2",
        "  drop fd2.q2",
        "  comp am1 and_gate in=fd2.q1,fb.q1",
        "  comp am2 and_gate in=fd1.q1,fb.q2",
        "  comp nm1 fanout in=am1.q",
        "  comp nm2 fanout in=am2.q",
        "  drop nm1.q2",
        "  drop nm2.q2",
        "  comp master latch in=nm1.q1,nm2.q1",
        "  comp fm1 fanout in=master.q",
        "  comp fm2 fanout in=fm1.q2",
        "  drop fm2.q2",
        "  comp as1 and_gate in=fm2.q1,fd.q1",
        "  comp as2 and_gate in=fm1.q1,fd.q2",
        "  comp ns1 fanout in=as1.q",
        "  comp ns2 fanout in=as2.q",
        "  drop ns1.q2",
        "  drop ns2.q2",
        "  comp slave latch in=ns1.q1,ns2.q1",
        "  output q from slave.q",
        "} ports in=d,clk out=q",
    ]


def _counter_def() -> list[str]:
    # Bit k toggles on the falling edge of bit k-1; D_k is the complement of Q_k.
    lines = ["compound counter4 {"]
    for k in range(4):
        clk = "input:clk" if k == 0 else f"n{k - 1}b.q1"
        lines += [
            f"  comp ff{k} dflipflop in=n{k}a.q1,{clk}",
            f"  comp n{k}a fanout in=ff{k}.q",
            f"  comp n{k}b fanout in=n{k}a.q2",
        ]
    lines += [f"  output q{k} from n{k}b.q2" for k in range(4)]
    lines += ["  drop n3b.q1", "} ports in=clk out=q0,q1,q2,q3"]
    return lines


def _top(name: str, cell: str, ins, outs, defs: list[str]) -> Netlist:
    srcs = ",".join(f"input:{x}" for x in ins)
    lines = [f"netlist {name}", *defs, f"comp cell {cell} in={srcs}"]
    lines += [f"output {o} from cell.{o}" for o in outs]
    return parse_netlist("\n".join(lines) + "\n")


def build_cell(spec: CellSpec | str, e_high: float | None = None, **kw) -> Netlist:
    """Netlist for a standard cell.

    ``build_cell("latch", 50)`` is shorthand for
    ``build_cell(CellSpec("latch", 50))``.
    """
    if isinstance(spec, str):
        spec = CellSpec(spec, **({} if e_high is None else {"e_high": e_high}), **kw)
    k, e = spec.kind, spec.e_high
    if k in ("amplifier_stage", "amplifier_chain"):
        first = spec.stage if k == "amplifier_stage" else 0
        count = 1 if k == "amplifier_stage" else spec.stages
        if first + count > 4:
            raise ValueError("amplifier table has 4 stages")
        defs, lines = [], []
        src = "input:signal"
        for i in range(first, first + count):
            p = amplifier_params(i, spec.inverting)
            p.update(spec.overrides)
            defs += _amp_stage_def(f"stage{i}", p)
            lines.append(f"comp s{i} stage{i} in={src}")
            lines.append(f"output q{i} from s{i}.q")
            src = f"s{i}.q"
        # Intermediate stage outputs feed the next stage; only the last is declared.
        text = [f"netlist {k}", *defs] + [x for x in lines if not x.startswith("output")]
        text.append(f"output q from s{first + count - 1}.q")
        return parse_netlist("\n".join(text) + "\n")

    gates = {g: gate_params(g, e, spec.overrides if _owner(g, k) else None)
             for g in ("and", "fanout", "latch")}
    defs = {
        "and_gate": _and_def(gates["and"]),
        "fanout": _fanout_def(gates["fanout"]),
        "latch": _latch_def(gates["latch"]),
    }
    need = {"and_gate": ["and_gate"], "fanout": ["fanout"], "latch": ["latch"],
            "dflipflop": ["and_gate", "fanout", "latch"],
            "counter4": ["and_gate", "fanout", "latch"]}[k]
    body = [line for d in need for line in defs[d]]
    if k in ("dflipflop", "counter4"):
        body += _dff_def()
    if k == "counter4":
        body += _counter_def()
    ins, outs = PORTS[k]
    return _top(k, k, ins, outs, body)


def _owner(gate: str, kind: str) -> bool:
    return {"and": "and_gate", "fanout": "fanout", "latch": "latch"}[gate] == kind


# ---------------------------------------------------------------------------
# Classical steady state
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ClassicalResponse:
    photons: tuple[float, ...]

    @property
    def bistable(self) -> bool:
        return len(self.photons) == 3


def classical_response(detuning: float, chi: float, kappa: float, kappa1: float,
                       beta_in: complex) -> ClassicalResponse:
    """Non-negative steady photon numbers of a driven Kerr resonator.

    Solves ``kappa1 |beta|^2 = n [(kappa/2)^2 + (detuning + 2 chi n)^2]``.
    """
    if kappa1 > kappa:
        raise ValueError("kappa1 cannot exceed the total decay rate")
    drive = kappa1 * abs(beta_in) ** 2
    if drive == 0:
        return ClassicalResponse((0.0,))
    coeffs = [4 * chi ** 2, 4 * chi * detuning, detuning ** 2 + kappa ** 2 / 4, -drive]
    if chi == 0:
        return ClassicalResponse((drive / coeffs[2],))
    roots = np.roots(coeffs)
    scale = max(1.0, float(np.max(np.abs(roots))))
    real = sorted(float(r.real) for r in roots if abs(r.imag) <= 1e-7 * scale and r.real >= 0)
    return ClassicalResponse(tuple(real))


def inflection_photons(detuning: float, chi: float) -> float:
    """Photon number where the response curve has its inflection point."""
    return -detuning / (3 * chi)


def is_bistable_geometry(detuning: float, kappa: float, chi: float) -> bool:
    """Whether some drive strength gives three steady states."""
    return chi * detuning < 0 and abs(detuning) > math.sqrt(3) / 2 * kappa


def switching_energy(kappa: float, kappa1: float, chi: float) -> float:
    """Photons needed at the input port to switch: ``kappa^2 / (|chi| kappa1)``."""
    if kappa1 <= 0 or chi == 0:
        raise ValueError("need kappa1 > 0 and chi != 0")
    return kappa ** 2 / (abs(chi) * kappa1)


def optimal_coupling(kappa3: float) -> tuple[float, float]:
    """``(kappa1, U)`` minimizing the switching energy when ``kappa = 2 kappa1 + kappa3``."""
    k1 = kappa3 / 2
    return k1, (2 * k1 + kappa3) ** 2 / k1


__all__ = [
    "CELL_KINDS", "PORTS", "CellSpec", "ClassicalResponse", "NetlistError", "amplifier_params",
    "build_cell", "cell_data", "classical_response", "gate_params", "inflection_photons",
    "is_bistable_geometry", "optimal_coupling", "switching_energy",
]
