"""Expansion of hierarchical netlists into flat circuits of primitives."""
from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field

from .netlist import (
    VACUUM, Beamsplitter, CompoundRef, Displacement, Entry, Identity, InputRef,
    Netlist, NetlistError, PhaseShifter, PortRef, Primitive, Resonator, Source,
    Vacuum, input_port_names, serialize,
)

Port = tuple[str, int]


@dataclass(frozen=True)
class ExternalInput:
    """An input field entering the circuit from outside.

    ``kind`` is ``"vacuum"`` (unbound port), ``"signal"`` (deterministic part
    supplied by a drive program) or ``"coherent"`` (fixed amplitude ``value``
    declared in the netlist).
    """
    name: str
    kind: str
    target: Port
    value: complex = 0j
    drive: str | None = None


@dataclass(frozen=True)
class ExternalOutput:
    """``kind`` is ``"declared"``, ``"dropped"`` or ``"dangling"``."""
    name: str
    source: Port
    kind: str = "declared"


@dataclass
class FlatCircuit:
    components: dict[str, Primitive] = field(default_factory=dict)
    connections: list[tuple[Port, Port]] = field(default_factory=list)
    inputs: list[ExternalInput] = field(default_factory=list)
    outputs: list[ExternalOutput] = field(default_factory=list)
    name: str = "circuit"

    @property
    def resonators(self) -> list[str]:
        return [n for n, c in self.components.items() if isinstance(c, Resonator)]

    def input_index(self, name: str) -> int:
        for i, x in enumerate(self.inputs):
            if x.name == name:
                return i
        raise KeyError(name)

    def output_index(self, name: str) -> int:
        for i, x in enumerate(self.outputs):
            if x.name == name:
                return i
        raise KeyError(name)


class _Scope:
    def __init__(self, prefix: str, body: Netlist, parent: "_Scope | None", entry: Entry | None):
        self.prefix = prefix
        self.body = body
        self.parent = parent
        self.entry = entry
        self.by_name = {e.name: e for e in body.entries}
        self.children: dict[str, _Scope] = {}

    def path(self, name: str) -> str:
        return f"{self.prefix}.{name}" if self.prefix else name


def _build_scopes(top: Netlist) -> list[_Scope]:
    scopes = []

    def visit(scope: _Scope, stack: tuple[str, ...]):
        scopes.append(scope)
        for e in scope.body.entries:
            if isinstance(e.kind, CompoundRef):
                name = e.kind.definition
                if name in stack:
                    raise NetlistError("cyclic compound definition: "
                                       + " -> ".join(stack + (name,)))
                if name not in top.definitions:
                    raise NetlistError(f"unresolved compound {name!r}")
                d = top.definitions[name]
                n_in = len(d.inputs or ())
                if len(e.sources) > n_in:
                    raise NetlistError(f"port-arity mismatch at {scope.path(e.name)!r}: "
                                       f"{len(e.sources)} sources for {n_in} inputs")
                child = _Scope(scope.path(e.name), d, scope, e)
                scope.children[e.name] = child
                visit(child, stack + (name,))

    visit(_Scope("", top, None, None), ())
    return scopes


def _resolve(scope: _Scope, ref, seen=()):
    """Follow compound boundaries until a primitive port, source or vacuum."""
    key = (scope.prefix, ref)
    if key in seen:
        raise NetlistError(f"pass-through loop at {scope.path(str(ref))!r}")
    seen = seen + (key,)
    if isinstance(ref, Vacuum):
        return ("vacuum",)
    if isinstance(ref, InputRef):
        if scope.parent is None:
            return ("signal", ref.name)
        names = scope.body.inputs or ()
        idx = names.index(ref.name)
        srcs = scope.entry.sources
        outer = srcs[idx] if idx < len(srcs) else VACUUM
        return _resolve(scope.parent, outer, seen)
    entry = scope.by_name[ref.instance]
    if isinstance(entry.kind, CompoundRef):
        child = scope.children[entry.name]
        inner = dict(child.body.outputs)[ref.port]
        return _resolve(child, inner, seen)
    if isinstance(entry.kind, Source):
        return ("source", scope.path(entry.name), entry.kind)
    return ("port", scope.path(entry.name), int(ref.port))


def flatten(n: Netlist) -> FlatCircuit:
    """Expand compounds, namespace instances by path and bind vacuum inputs."""
    scopes = _build_scopes(n)
    flat = FlatCircuit(name=n.name)
    consumers: Counter = Counter()
    signal_inputs = []
    source_inputs = []
    vacuum_inputs = []

    def note(resolved, who: str):
        if resolved[0] in ("port", "source", "signal"):
            key = resolved[:3] if resolved[0] == "port" else resolved[:2]
            consumers[key] += 1
            if consumers[key] > 1:
                raise NetlistError(f"{'.'.join(map(str, resolved[1:3]))} feeds more than "
                                   f"one input (at {who}); fan-out needs an explicit component")

    for scope in scopes:
        for e in scope.body.entries:
            if isinstance(e.kind, (CompoundRef, Source)):
                continue
            flat.components[scope.path(e.name)] = e.kind
    for scope in scopes:
        for e in scope.body.entries:
            if isinstance(e.kind, (CompoundRef, Source)):
                continue
            name = scope.path(e.name)
            for i in range(e.kind.n_in):
                ref = e.sources[i] if i < len(e.sources) else VACUUM
                r = _resolve(scope, ref)
                note(r, f"{name}.in{i}")
                target = (name, i)
                if r[0] == "port":
                    flat.connections.append(((r[1], r[2]), target))
                elif r[0] == "vacuum":
                    vacuum_inputs.append(ExternalInput(f"{name}.in{i}", "vacuum", target))
                elif r[0] == "signal":
                    signal_inputs.append(ExternalInput(r[1], "signal", target, drive=r[1]))
                else:
                    src: Source = r[2]
                    if src.drive is not None:
                        x = ExternalInput(r[1], "signal", target, drive=src.drive)
                        signal_inputs.append(x)
                    elif src.value is not None:
                        source_inputs.append(ExternalInput(r[1], "coherent", target,
                                                           value=complex(src.value)))
                    else:
                        vacuum_inputs.append(ExternalInput(r[1], "vacuum", target))
    flat.inputs = signal_inputs + source_inputs + vacuum_inputs

    declared, dropped = [], []
    for name, ref in n.outputs:
        r = _resolve(scopes[0], ref)
        if r[0] != "port":
            raise NetlistError(f"output {name!r} must come from a component, got {ref}")
        note(r, f"output {name}")
        declared.append(ExternalOutput(name, (r[1], r[2]), "declared"))
    for scope in scopes:
        for ref in scope.body.drops:
            r = _resolve(scope, ref)
            if r[0] != "port":
                raise NetlistError(f"drop {scope.path(str(ref))} does not reach a component")
            note(r, "drop")
            dropped.append(ExternalOutput(f"{r[1]}.out{r[2]}", (r[1], r[2]), "dropped"))
    used = {c[0] for c in flat.connections} | {o.source for o in declared + dropped}
    dangling = [ExternalOutput(f"{name}.out{j}", (name, j), "dangling")
                for name, comp in flat.components.items()
                for j in range(comp.n_out) if (name, j) not in used]
    flat.outputs = declared + dropped + dangling
    unused = [src for (kind, src), c in _all_sources(scopes).items() if consumers[(kind, src)] == 0]
    if unused:
        raise NetlistError(f"source {unused[0]!r} feeds nothing")
    return flat


def _all_sources(scopes) -> Counter:
    out = Counter()
    for scope in scopes:
        for e in scope.body.entries:
            if isinstance(e.kind, Source):
                out[("source", scope.path(e.name))] += 1
    return out


# ---------------------------------------------------------------------------
# Diagnostics
# ---------------------------------------------------------------------------

@dataclass
class CircuitReport:
    counts: dict[str, int]
    violations: list[str]

    @property
    def ok(self) -> bool:
        return not self.violations

    def format(self) -> str:
        lines = [f"{k}: {v}" for k, v in self.counts.items()]
        lines += [f"violation: {v}" for v in self.violations] or ["violations: none"]
        return "\n".join(lines)


def check_circuit(flat: FlatCircuit) -> CircuitReport:
    """Component statistics plus every structural problem found.

    Input counting follows the convention that only netlist-fixed amplitudes
    make an input "coherent"; unbound ports and driven signal ports both count
    toward ``vacuum_inputs`` (their noise is vacuum noise, their mean is
    supplied at run time).
    """
    kinds = Counter(type(c).__name__ for c in flat.components.values())
    by_kind = Counter(x.kind for x in flat.inputs)
    counts = {
        "resonators": kinds["Resonator"],
        "beamsplitters": kinds["Beamsplitter"],
        "phaseshifters": kinds["PhaseShifter"],
        "displacements": kinds["Displacement"],
        "identities": kinds["Identity"],
        "vacuum_inputs": by_kind["vacuum"] + by_kind["signal"],
        "coherent_inputs": by_kind["coherent"],
        "signal_inputs": by_kind["signal"],
        "unbound_vacuum_inputs": by_kind["vacuum"],
        "outputs": sum(o.kind == "declared" for o in flat.outputs),
        "dropped_outputs": sum(o.kind == "dropped" for o in flat.outputs),
    }
    violations = []
    for o in flat.outputs:
        if o.kind == "dangling":
            violations.append(f"dangling output {o.source[0]}.{o.source[1]}")
    fed = Counter()
    for src, dst in flat.connections:
        fed[dst] += 1
        for (name, port), side in ((src, "n_out"), (dst, "n_in")):
            comp = flat.components.get(name)
            if comp is None:
                violations.append(f"connection to unknown component {name!r}")
            elif not 0 <= port < getattr(comp, side):
                violations.append(f"arity error: {name!r} has no port {port} ({side})")
    for x in flat.inputs:
        fed[x.target] += 1
    produced = Counter(src for src, _ in flat.connections)
    produced.update(o.source for o in flat.outputs)
    for name, comp in flat.components.items():
        for i in range(comp.n_in):
            if fed[(name, i)] != 1:
                violations.append(f"input {name}.{i} has {fed[(name, i)]} sources")
        for j in range(comp.n_out):
            if produced[(name, j)] > 1:
                violations.append(f"output {name}.{j} feeds {produced[(name, j)]} inputs")
    return CircuitReport(counts, violations)


def to_netlist(flat: FlatCircuit) -> Netlist:
    """Express a flat circuit as a single-level netlist (for round trips)."""
    incoming: dict[Port, object] = {}
    sources = []
    for src, dst in flat.connections:
        incoming[dst] = PortRef(src[0], str(src[1]))
    for x in flat.inputs:
        if x.kind == "vacuum" and x.name == f"{x.target[0]}.in{x.target[1]}":
            incoming[x.target] = VACUUM
        elif x.kind == "signal" and x.drive == x.name:
            incoming[x.target] = InputRef(x.name)
        else:
            kind = Source(value=x.value if x.kind == "coherent" else None,
                          drive=x.drive if x.kind == "signal" else None)
            sources.append(Entry(x.name, kind))
            incoming[x.target] = PortRef(x.name, "0")
    entries = []
    for name, comp in flat.components.items():
        entries.append(Entry(name, comp, tuple(incoming[(name, i)] for i in range(comp.n_in))))
    out = Netlist(name=flat.name, entries=sources + entries)
    for o in flat.outputs:
        ref = PortRef(o.source[0], str(o.source[1]))
        if o.kind == "declared":
            out.outputs.append((o.name, ref))
        elif o.kind == "dropped":
            out.drops.append(ref)
    return out


def flat_text(flat: FlatCircuit) -> str:
    return serialize(to_netlist(flat))


__all__ = [
    "ExternalInput", "ExternalOutput", "FlatCircuit", "CircuitReport", "flatten",
    "check_circuit", "to_netlist", "flat_text", "Beamsplitter", "PhaseShifter",
    "Displacement", "Identity",
]
