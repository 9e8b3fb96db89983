"""Hierarchical netlists of Kerr resonators and linear optics.

The text format is line oriented::

    # comment
    netlist amplifier
    compound stage {
      comp bs beamsplitter theta=0.3217505543966422 in=bc.0,input:a
      comp bc source value=95
      comp res resonator delta=50 chi=-0.5 kappa=25,25 in=bs.1
      comp ps phaseshifter phi=-3.42 in=res.1
      output q from ps.0
      drop bs.0
      drop res.0
    } ports in=a out=q
    comp s0 stage in=input:signal
    output q0 from s0.q

Sources are ``vacuum``, ``input:<name>`` (a compound input port, or a driven
signal at top level) or ``<instance>.<port>``.  Primitive output ports are
numbered from 0; compound ports carry the names given in ``ports``.  Input
ports left out of ``in=`` are bound to vacuum.  Every primitive output must be
consumed, declared with ``output`` or explicitly discarded with ``drop``.
"""
from __future__ import annotations

import math
import re
from collections import Counter
from dataclasses import dataclass, field
from typing import Union


class NetlistError(ValueError):
    """Structural problem in a netlist."""


class NetlistSyntaxError(NetlistError):
    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column


# ---------------------------------------------------------------------------
# Component kinds
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Resonator:
    """Single-mode Kerr resonator with one coupling port per entry of ``kappa``.

    ``detuning`` and the decay rates are in inverse time units, ``chi`` is the
    Kerr shift per photon.  Coupling phases default to -pi/2.
    """
    detuning: float
    chi: float
    kappa: tuple[float, ...]
    psi: tuple[float, ...] = ()

    def __post_init__(self):
        kappa = tuple(float(k) for k in self.kappa)
        psi = tuple(float(p) for p in self.psi) or (-math.pi / 2,) * len(kappa)
        if len(psi) != len(kappa):
            raise NetlistError("resonator needs one coupling phase per port")
        if any(k < 0 for k in kappa) or sum(kappa) <= 0:
            raise NetlistError("resonator decay rates must be >= 0 with positive total")
        object.__setattr__(self, "kappa", kappa)
        object.__setattr__(self, "psi", psi)

    @property
    def n_in(self) -> int:
        return len(self.kappa)

    n_out = n_in

    @property
    def kappa_total(self) -> float:
        return sum(self.kappa)


@dataclass(frozen=True)
class Beamsplitter:
    theta: float
    n_in = 2
    n_out = 2


@dataclass(frozen=True)
class PhaseShifter:
    phi: float
    n_in = 1
    n_out = 1


@dataclass(frozen=True)
class Displacement:
    beta: complex
    n_in = 1
    n_out = 1


@dataclass(frozen=True)
class Identity:
    n_in = 1
    n_out = 1


@dataclass(frozen=True)
class Source:
    """External input: vacuum, a fixed coherent amplitude, or a named drive."""
    value: complex | None = None
    drive: str | None = None
    n_in = 0
    n_out = 1

    def __post_init__(self):
        if self.value is not None and self.drive is not None:
            raise NetlistError("source takes either value= or drive=, not both")


@dataclass(frozen=True)
class CompoundRef:
    definition: str


Primitive = Union[Resonator, Beamsplitter, PhaseShifter, Displacement, Identity]
Kind = Union[Primitive, Source, CompoundRef]
PRIMITIVES = (Resonator, Beamsplitter, PhaseShifter, Displacement, Identity)

KIND_NAMES = {
    Resonator: "resonator",
    Beamsplitter: "beamsplitter",
    PhaseShifter: "phaseshifter",
    Displacement: "displacement",
    Identity: "identity",
    Source: "source",
}


# ---------------------------------------------------------------------------
# Port references
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Vacuum:
    def __str__(self):
        return "vacuum"


VACUUM = Vacuum()


@dataclass(frozen=True)
class PortRef:
    instance: str
    port: str

    def __str__(self):
        return f"{self.instance}.{self.port}"


@dataclass(frozen=True)
class InputRef:
    name: str

    def __str__(self):
        return f"input:{self.name}"


Ref = Union[Vacuum, PortRef, InputRef]


@dataclass(frozen=True)
class Entry:
    name: str
    kind: Kind
    sources: tuple[Ref, ...] = ()


@dataclass
class Netlist:
    """A circuit body.  Compound definitions are netlists with declared ports.

    ``inputs`` is ``None`` for the top level, where ``input:<name>`` denotes a
    driven external signal.
    """
    name: str = "circuit"
    entries: list[Entry] = field(default_factory=list)
    outputs: list[tuple[str, Ref]] = field(default_factory=list)
    drops: list[Ref] = field(default_factory=list)
    inputs: tuple[str, ...] | None = None
    definitions: dict[str, "Netlist"] = field(default_factory=dict)

    def entry(self, name: str) -> Entry:
        for e in self.entries:
            if e.name == name:
                return e
        raise KeyError(name)

    @property
    def output_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.outputs)

    def signal_names(self) -> list[str]:
        """Top-level drive names referenced through ``input:<name>``."""
        seen = []
        for e in self.entries:
            for s in e.sources:
                if isinstance(s, InputRef) and s.name not in seen:
                    seen.append(s.name)
        for _, s in self.outputs:
            if isinstance(s, InputRef) and s.name not in seen:
                seen.append(s.name)
        for e in self.entries:
            if isinstance(e.kind, Source) and e.kind.drive and e.kind.drive not in seen:
                seen.append(e.kind.drive)
        return seen


def n_ports(kind: Kind, definitions: dict[str, Netlist]) -> tuple[int, int]:
    if isinstance(kind, CompoundRef):
        d = definitions[kind.definition]
        return len(d.inputs or ()), len(d.outputs)
    return kind.n_in, kind.n_out


def output_port_names(kind: Kind, definitions: dict[str, Netlist]) -> tuple[str, ...]:
    if isinstance(kind, CompoundRef):
        return definitions[kind.definition].output_names
    return tuple(str(i) for i in range(kind.n_out))


def input_port_names(kind: Kind, definitions: dict[str, Netlist]) -> tuple[str, ...]:
    if isinstance(kind, CompoundRef):
        return tuple(definitions[kind.definition].inputs or ())
    return tuple(str(i) for i in range(kind.n_in))


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

_NAME = re.compile(r"^[A-Za-z_][A-Za-z0-9_.\[\]-]*$")


def _parse_float(text: str) -> float:
    return float(text)


def _parse_complex(text: str) -> complex:
    return complex(text.strip("()"))


def _parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v)


_PARAMS = {
    "resonator": {"delta": _parse_float, "chi": _parse_float,
                  "kappa": _parse_floats, "psi": _parse_floats},
    "beamsplitter": {"theta": _parse_float},
    "phaseshifter": {"phi": _parse_float},
    "displacement": {"beta": _parse_complex},
    "identity": {},
    "source": {"value": _parse_complex, "drive": str},
}
_REQUIRED = {
    "resonator": ("delta", "chi", "kappa"),
    "beamsplitter": ("theta",),
    "phaseshifter": ("phi",),
    "displacement": ("beta",),
}


def _make_kind(kind: str, params: dict):
    if kind == "resonator":
        return Resonator(params["delta"], params["chi"], params["kappa"],
                         params.get("psi", ()))
    if kind == "beamsplitter":
        return Beamsplitter(params["theta"])
    if kind == "phaseshifter":
        return PhaseShifter(params["phi"])
    if kind == "displacement":
        return Displacement(params["beta"])
    if kind == "identity":
        return Identity()
    return Source(params.get("value"), params.get("drive"))


def _parse_ref(text: str, lineno: int, col: int) -> Ref:
    if text in ("vacuum", "-"):
        return VACUUM
    if text.startswith("input:"):
        name = text[len("input:"):]
        if not name:
            raise NetlistSyntaxError("empty input name", lineno, col)
        return InputRef(name)
    inst, dot, port = text.rpartition(".")
    if not dot or not inst or not port:
        raise NetlistSyntaxError(f"bad source reference {text!r}", lineno, col)
    return PortRef(inst, port)


def _tokens(line: str) -> list[tuple[str, int]]:
    return [(m.group(), m.start() + 1) for m in re.finditer(r"\S+", line)]


def _parse_ports_spec(text: str) -> tuple[str, ...]:
    if text.isdigit():
        return tuple(str(i) for i in range(int(text)))
    return tuple(p for p in text.split(",") if p)


def parse_netlist(text: str) -> Netlist:
    """Parse netlist text; raises :class:`NetlistSyntaxError` or :class:`NetlistError`."""
    top = Netlist()
    current = top
    open_line = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0]
        toks = _tokens(line)
        if not toks:
            continue
        word, col = toks[0]
        if word == "netlist":
            if current is not top or len(toks) != 2:
                raise NetlistSyntaxError("netlist takes one name at top level", lineno, col)
            top.name = toks[1][0]
        elif word == "compound":
            if current is not top:
                raise NetlistSyntaxError("nested compound definition", lineno, col)
            if len(toks) != 3 or toks[2][0] != "{":
                raise NetlistSyntaxError("expected 'compound <name> {'", lineno, col)
            name = toks[1][0]
            if name in top.definitions or name in KIND_NAMES.values():
                raise NetlistSyntaxError(f"duplicate compound definition {name!r}",
                                         lineno, toks[1][1])
            current = Netlist(name=name)
            open_line = lineno
        elif word == "}":
            if current is top:
                raise NetlistSyntaxError("unmatched '}'", lineno, col)
            ins = outs = None
            if len(toks) < 2 or toks[1][0] != "ports":
                raise NetlistSyntaxError("expected '} ports in=... out=...'", lineno, col)
            for tok, c in toks[2:]:
                key, eq, val = tok.partition("=")
                if key == "in" and eq:
                    ins = _parse_ports_spec(val)
                elif key == "out" and eq:
                    outs = _parse_ports_spec(val)
                else:
                    raise NetlistSyntaxError(f"unexpected {tok!r}", lineno, c)
            if ins is None or outs is None:
                raise NetlistSyntaxError("ports needs in= and out=", lineno, col)
            current.inputs = ins
            if tuple(current.output_names) != outs:
                if sorted(current.output_names) != sorted(outs):
                    raise NetlistSyntaxError(
                        f"declared outputs {outs} do not match body {current.output_names}",
                        lineno, col)
                order = {n: i for i, n in enumerate(outs)}
                current.outputs.sort(key=lambda o: order[o[0]])
            top.definitions[current.name] = current
            current = top
        elif word == "comp":
            current.entries.append(_parse_comp(toks, lineno, current))
        elif word == "output":
            if len(toks) != 4 or toks[2][0] != "from":
                raise NetlistSyntaxError("expected 'output <name> from <source>'", lineno, col)
            name = toks[1][0]
            if name in current.output_names:
                raise NetlistSyntaxError(f"duplicate output {name!r}", lineno, toks[1][1])
            current.outputs.append((name, _parse_ref(toks[3][0], lineno, toks[3][1])))
        elif word == "drop":
            if len(toks) != 2:
                raise NetlistSyntaxError("expected 'drop <source>'", lineno, col)
            current.drops.append(_parse_ref(toks[1][0], lineno, toks[1][1]))
        else:
            raise NetlistSyntaxError(f"unknown statement {word!r}", lineno, col)
    if current is not top:
        raise NetlistSyntaxError(f"compound {current.name!r} not closed", open_line, 1)
    validate(top)
    return top


def _parse_comp(toks, lineno: int, scope: Netlist) -> Entry:
    if len(toks) < 3:
        raise NetlistSyntaxError("expected 'comp <name> <kind> ...'", lineno, toks[0][1])
    name, ncol = toks[1]
    kind_name, kcol = toks[2]
    if not _NAME.match(name):
        raise NetlistSyntaxError(f"bad instance name {name!r}", lineno, ncol)
    if any(e.name == name for e in scope.entries):
        raise NetlistSyntaxError(f"duplicate instance name {name!r}", lineno, ncol)
    params: dict = {}
    sources = None
    for tok, col in toks[3:]:
        key, eq, val = tok.partition("=")
        if not eq:
            raise NetlistSyntaxError(f"expected key=value, got {tok!r}", lineno, col)
        if key == "in":
            if sources is not None:
                raise NetlistSyntaxError(f"input ports of {name!r} given more than one source",
                                         lineno, col)
            sources = tuple(_parse_ref(v, lineno, col) for v in val.split(","))
            continue
        if kind_name not in _PARAMS:
            raise NetlistSyntaxError(f"compound instance takes no parameter {key!r}", lineno, col)
        if key not in _PARAMS[kind_name]:
            raise NetlistSyntaxError(f"unknown parameter {key!r} for {kind_name}", lineno, col)
        if key in params:
            raise NetlistSyntaxError(f"duplicate parameter {key!r}", lineno, col)
        try:
            params[key] = _PARAMS[kind_name][key](val)
        except ValueError as exc:
            raise NetlistSyntaxError(f"bad value for {key}: {exc}", lineno, col) from None
    if kind_name in _PARAMS:
        missing = [k for k in _REQUIRED.get(kind_name, ()) if k not in params]
        if missing:
            raise NetlistSyntaxError(f"{kind_name} missing {', '.join(missing)}", lineno, kcol)
        try:
            kind = _make_kind(kind_name, params)
        except NetlistError as exc:
            raise NetlistSyntaxError(str(exc), lineno, kcol) from None
    elif _NAME.match(kind_name):
        kind = CompoundRef(kind_name)
    else:
        raise NetlistSyntaxError(f"unknown component kind {kind_name!r}", lineno, kcol)
    return Entry(name, kind, sources or ())


def validate(n: Netlist) -> None:
    """Check references, arities and the single-consumer rule in every scope."""
    for d in n.definitions.values():
        if d.definitions:
            raise NetlistError(f"compound {d.name!r} holds nested definitions")
        _validate_scope(d, n.definitions)
    _validate_scope(n, n.definitions)


def _validate_scope(scope: Netlist, definitions: dict[str, Netlist]) -> None:
    where = f"in {scope.name!r}"
    names = [e.name for e in scope.entries]
    dup = [k for k, v in Counter(names).items() if v > 1]
    if dup:
        raise NetlistError(f"duplicate instance name {dup[0]!r} {where}")
    by_name = {e.name: e for e in scope.entries}
    for e in scope.entries:
        if isinstance(e.kind, CompoundRef) and e.kind.definition not in definitions:
            raise NetlistError(f"unresolved compound {e.kind.definition!r} "
                               f"for instance {e.name!r} {where}")
    consumed: Counter = Counter()

    def check(ref: Ref, user: str) -> None:
        if isinstance(ref, PortRef):
            if ref.instance not in by_name:
                raise NetlistError(f"{user} reads unknown instance {ref.instance!r} {where}")
            ports = output_port_names(by_name[ref.instance].kind, definitions)
            if ref.port not in ports:
                raise NetlistError(f"{user} reads unknown port {ref} {where}")
            consumed[ref] += 1
        elif isinstance(ref, InputRef):
            if scope.inputs is not None and ref.name not in scope.inputs:
                raise NetlistError(f"{user} reads undeclared input {ref.name!r} {where}")
            consumed[ref] += 1

    for e in scope.entries:
        n_in, _ = n_ports(e.kind, definitions)
        if len(e.sources) > n_in:
            raise NetlistError(f"{e.name!r} has {n_in} input ports but "
                               f"{len(e.sources)} sources {where}")
        for s in e.sources:
            check(s, repr(e.name))
    for name, s in scope.outputs:
        check(s, f"output {name!r}")
    for s in scope.drops:
        if not isinstance(s, PortRef):
            raise NetlistError(f"drop needs an instance port, got {s} {where}")
        check(s, "drop")
    over = [str(r) for r, c in consumed.items() if c > 1]
    if over:
        raise NetlistError(f"{over[0]} feeds more than one input {where}; "
                           "fan-out needs an explicit component")


# ---------------------------------------------------------------------------
# Serialization
# ---------------------------------------------------------------------------

def _fmt_float(x: float) -> str:
    return repr(float(x))


def _fmt_complex(z: complex) -> str:
    z = complex(z)
    return repr(z).strip("()")


def _format_entry(e: Entry) -> str:
    k = e.kind
    if isinstance(k, CompoundRef):
        head = f"comp {e.name} {k.definition}"
    else:
        head = f"comp {e.name} {KIND_NAMES[type(k)]}"
        if isinstance(k, Resonator):
            head += (f" delta={_fmt_float(k.detuning)} chi={_fmt_float(k.chi)}"
                     f" kappa={','.join(_fmt_float(x) for x in k.kappa)}"
                     f" psi={','.join(_fmt_float(x) for x in k.psi)}")
        elif isinstance(k, Beamsplitter):
            head += f" theta={_fmt_float(k.theta)}"
        elif isinstance(k, PhaseShifter):
            head += f" phi={_fmt_float(k.phi)}"
        elif isinstance(k, Displacement):
            head += f" beta={_fmt_complex(k.beta)}"
        elif isinstance(k, Source):
            if k.value is not None:
                head += f" value={_fmt_complex(k.value)}"
            if k.drive is not None:
                head += f" drive={k.drive}"
    if e.sources:
        head += " in=" + ",".join(str(s) for s in e.sources)
    return head


def _format_body(n: Netlist, indent: str) -> list[str]:
    lines = [indent + _format_entry(e) for e in n.entries]
    lines += [f"{indent}output {name} from {s}" for name, s in n.outputs]
    lines += [f"{indent}drop {s}" for s in n.drops]
    return lines


def serialize(n: Netlist) -> str:
    """Inverse of :func:`parse_netlist` for valid netlists."""
    lines = [f"netlist {n.name}"]
    for d in n.definitions.values():
        lines.append(f"compound {d.name} {{")
        lines += _format_body(d, "  ")
        ins = ",".join(d.inputs or ())
        outs = ",".join(d.output_names)
        lines.append(f"}} ports in={ins or 0} out={outs or 0}")
    lines += _format_body(n, "")
    return "\n".join(lines) + "\n"
