"""Parsing, validation, flattening and circuit statistics."""
import math

import pytest
from hypothesis import given, settings, strategies as st

from kerrnet import check_circuit, flatten, parse_netlist, serialize
from kerrnet.flatten import to_netlist
from kerrnet.netlist import (
    Beamsplitter, Entry, Netlist, NetlistError, NetlistSyntaxError, PhaseShifter,
    PortRef, Resonator, VACUUM,
)
from kerrnet.stdcells import build_cell


class TestParse:
    def test_single_resonator(self):
        n = parse_netlist("comp r resonator delta=50 chi=-0.5 kappa=25,25\n"
                          "drop r.0\ndrop r.1\n")
        assert len(n.entries) == 1
        r = n.entries[0].kind
        assert isinstance(r, Resonator)
        assert (r.detuning, r.chi, r.kappa) == (50.0, -0.5, (25.0, 25.0))
        assert r.psi == (-math.pi / 2, -math.pi / 2)

    def test_amplifier_stage_topology(self, amp_stage0):
        kinds = [type(e.kind).__name__ for e in amp_stage0.entries]
        assert kinds == ["Source", "Beamsplitter", "Resonator", "PhaseShifter"]
        assert amp_stage0.output_names == ("q",)
        assert len(amp_stage0.entries) + len(amp_stage0.outputs) == 5
        flat = flatten(amp_stage0)
        assert sorted(x.kind for x in flat.inputs) == ["coherent", "signal", "vacuum"]

    def test_comments_and_blank_lines(self):
        n = parse_netlist("# header\n\ncomp p phaseshifter phi=0.5 in=input:x  # trailing\n"
                          "output y from p.0\n")
        assert n.entries[0].kind == PhaseShifter(0.5)

    @pytest.mark.parametrize("text, fragment", [
        ("comp a phaseshifter phi=zz\n", "bad value"),
        ("comp a phaseshifter phi=0\ncomp a phaseshifter phi=0\n", "duplicate instance"),
        ("comp a phaseshifter\n", "phi"),
        ("comp a beamsplitter theta=1 bogus=2\n", "bogus"),
        ("frobnicate a\n", "frobnicate"),
        ("compound c {\n comp p phaseshifter phi=0\n", "compound"),
    ])
    def test_syntax_errors_carry_location(self, text, fragment):
        with pytest.raises(NetlistSyntaxError) as err:
            parse_netlist(text)
        assert err.value.line >= 1 and err.value.column >= 1
        assert fragment in str(err.value)

    def test_output_feeding_two_inputs_rejected(self):
        text = ("comp p phaseshifter phi=0 in=input:x\n"
                "comp a phaseshifter phi=0 in=p.0\ncomp b phaseshifter phi=0 in=p.0\n"
                "output y from a.0\noutput z from b.0\n")
        with pytest.raises(NetlistError, match="more than one input"):
            parse_netlist(text)

    def test_too_many_sources_rejected(self):
        with pytest.raises(NetlistError, match="2 sources"):
            parse_netlist("comp a phaseshifter phi=0 in=input:x,input:y\noutput y from a.0\n")

    def test_unresolved_compound(self):
        with pytest.raises(NetlistError, match="unresolved compound"):
            parse_netlist("comp a nothing in=input:x\n")

    def test_cyclic_compound(self):
        text = ("compound A {\n comp b B in=input:x\n output y from b.y\n} ports in=x out=y\n"
                "compound B {\n comp a A in=input:x\n output y from a.y\n} ports in=x out=y\n"
                "comp t A in=input:s\noutput q from t.y\n")
        with pytest.raises(NetlistError, match="cyclic"):
            flatten(parse_netlist(text))

    def test_compound_arity_mismatch(self):
        text = ("compound A {\n comp p phaseshifter phi=0 in=input:x\n output y from p.0\n"
                "} ports in=x out=y\ncomp t A in=input:s,input:u\noutput q from t.y\n")
        with pytest.raises(NetlistError, match="input ports"):
            parse_netlist(text)

    def test_invalid_resonator(self):
        with pytest.raises(NetlistError):
            parse_netlist("comp r resonator delta=1 chi=0 kappa=0,0\n")


class TestFlatten:
    def test_flat_netlist_only_gains_vacuum(self):
        n = parse_netlist("comp b beamsplitter theta=0.3 in=input:x\n"
                          "output y from b.0\noutput z from b.1\n")
        flat = flatten(n)
        assert list(flat.components) == ["b"]
        assert [(x.name, x.kind) for x in flat.inputs] == [("x", "signal"), ("b.in1", "vacuum")]

    def test_namespacing_and_rewiring(self):
        text = ("compound inner {\n comp p phaseshifter phi=0.1 in=input:a\n output o from p.0\n"
                "} ports in=a out=o\n"
                "compound outer {\n comp i1 inner in=input:a\n comp i2 inner in=i1.o\n"
                " output o from i2.o\n} ports in=a out=o\n"
                "comp top outer in=input:s\noutput q from top.o\n")
        flat = flatten(parse_netlist(text))
        assert sorted(flat.components) == ["top.i1.p", "top.i2.p"]
        assert flat.connections == [(("top.i1.p", 0), ("top.i2.p", 0))]
        assert flat.outputs[0].source == ("top.i2.p", 0)

    def test_dangling_output_reported(self):
        flat = flatten(parse_netlist("comp a phaseshifter phi=0 in=input:x\n"))
        report = check_circuit(flat)
        assert not report.ok
        assert report.violations == ["dangling output a.0"]

    def test_latch_counts(self):
        report = check_circuit(flatten(build_cell("latch", 50.0)))
        assert report.ok
        c = report.counts
        assert (c["resonators"], c["beamsplitters"], c["phaseshifters"]) == (2, 5, 4)
        assert (c["vacuum_inputs"], c["coherent_inputs"]) == (6, 2)

    @pytest.mark.parametrize("kind, expected", [
        ("dflipflop", (20, 54, 40, 54, 16)),
        ("counter4", (88, 240, 176, 233, 72)),
    ])
    def test_large_cell_counts(self, kind, expected):
        report = check_circuit(flatten(build_cell(kind, 50.0)))
        assert report.ok
        c = report.counts
        got = (c["resonators"], c["beamsplitters"], c["phaseshifters"],
               c["vacuum_inputs"], c["coherent_inputs"])
        assert got == expected

    @pytest.mark.parametrize("kind", ["and_gate", "fanout", "latch", "dflipflop"])
    def test_flatten_idempotent(self, kind):
        flat = flatten(build_cell(kind, 50.0))
        again = flatten(parse_netlist(serialize(to_netlist(flat))))
        assert again.components == flat.components
        assert sorted(again.connections) == sorted(flat.connections)
        assert [(x.kind, x.target, x.value) for x in again.inputs] == \
            [(x.kind, x.target, x.value) for x in flat.inputs]


def _nested(depth: int, width: int) -> str:
    """A chain of ``width`` copies of the previous level, ``depth`` levels deep."""
    lines = ["compound L0 {", " comp p phaseshifter phi=0.2 in=input:a",
             " comp b beamsplitter theta=0.4 in=p.0", " output o from b.0", " drop b.1",
             "} ports in=a out=o"]
    for d in range(1, depth + 1):
        lines.append(f"compound L{d} {{")
        prev = "input:a"
        for k in range(width):
            lines.append(f" comp c{k} L{d - 1} in={prev}")
            prev = f"c{k}.o"
        lines += [f" output o from {prev}", "} ports in=a out=o"]
    lines += [f"comp top L{depth} in=input:s", "output q from top.o"]
    return "\n".join(lines) + "\n"


@settings(max_examples=20, deadline=None)
@given(depth=st.integers(0, 3), width=st.integers(1, 3))
def test_nested_counts_multiply(depth, width):
    report = check_circuit(flatten(parse_netlist(_nested(depth, width))))
    copies = width ** depth
    assert report.counts["phaseshifters"] == copies
    assert report.counts["beamsplitters"] == copies
    # every beamsplitter brings one unbound input port
    assert report.counts["unbound_vacuum_inputs"] == copies
    assert report.ok


_angles = st.floats(-6.0, 6.0, allow_nan=False)


@st.composite
def chain_netlists(draw):
    n = Netlist(name="chain")
    prev = None
    for i in range(draw(st.integers(1, 6))):
        kind = draw(st.sampled_from(["ps", "bs", "res"]))
        src = prev if prev is not None else VACUUM
        if kind == "ps":
            n.entries.append(Entry(f"e{i}", PhaseShifter(draw(_angles)), (src,)))
            prev = PortRef(f"e{i}", "0")
        elif kind == "bs":
            n.entries.append(Entry(f"e{i}", Beamsplitter(draw(_angles)), (src, VACUUM)))
            n.drops.append(PortRef(f"e{i}", "1"))
            prev = PortRef(f"e{i}", "0")
        else:
            r = Resonator(draw(st.floats(-80, 80)), draw(st.floats(-1, 0)),
                          (draw(st.floats(1, 40)), draw(st.floats(0, 40))))
            n.entries.append(Entry(f"e{i}", r, (src, VACUUM)))
            n.drops.append(PortRef(f"e{i}", "0"))
            prev = PortRef(f"e{i}", "1")
    n.outputs.append(("out", prev))
    return n


@settings(max_examples=60, deadline=None)
@given(chain_netlists())
def test_parse_serialize_round_trip(n):
    again = parse_netlist(serialize(n))
    assert again.entries == n.entries
    assert again.outputs == n.outputs
    assert again.drops == n.drops
    assert serialize(again) == serialize(n)


@pytest.mark.parametrize("kind", ["and_gate", "fanout", "latch", "dflipflop", "counter4"])
def test_cell_netlists_round_trip(kind):
    n = build_cell(kind, 50.0)
    text = serialize(n)
    assert serialize(parse_netlist(text)) == text
