"""Compile flat circuits into the linear matrices of the resonator SDE system.

Every component obeys

    d(alpha)/dt = A alpha + a + A_NL(alpha) + B beta_in
    beta_out    = C alpha + c + D beta_in

Concatenating components gives block-diagonal matrices; connecting an output
to an input is equivalent to ``beta_in^I = beta_out^I`` and the internal fields
are eliminated through ``(1 - D^II)^-1``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .flatten import ExternalInput, ExternalOutput, FlatCircuit
from .netlist import (
    Beamsplitter, CompoundRef, Displacement, Identity, PhaseShifter, Resonator,
    Source,
)

COND_LIMIT = 1e12
SPARSE_THRESHOLD = 32


class ReductionError(ValueError):
    pass


class SingularLoopError(ReductionError):
    def __init__(self, message: str, loop: list):
        super().__init__(message)
        self.loop = loop


class StaticLoopError(ReductionError):
    pass


@dataclass
class ComponentBlock:
    A: np.ndarray
    a: np.ndarray
    B: np.ndarray
    C: np.ndarray
    c: np.ndarray
    D: np.ndarray
    detuning: np.ndarray = field(default_factory=lambda: np.zeros(0))
    kappa: np.ndarray = field(default_factory=lambda: np.zeros(0))
    chi: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def n_res(self) -> int:
        return self.A.shape[0]

    @property
    def n_in(self) -> int:
        return self.D.shape[1]

    @property
    def n_out(self) -> int:
        return self.D.shape[0]


def _empty(n_res: int, n_in: int, n_out: int) -> ComponentBlock:
    return ComponentBlock(
        A=np.zeros((n_res, n_res), complex), a=np.zeros(n_res, complex),
        B=np.zeros((n_res, n_in), complex), C=np.zeros((n_out, n_res), complex),
        c=np.zeros(n_out, complex), D=np.zeros((n_out, n_in), complex),
        detuning=np.zeros(n_res), kappa=np.zeros(n_res), chi=np.zeros(n_res))


def component_block(kind) -> ComponentBlock:
    """Matrices of a single primitive component."""
    if isinstance(kind, Resonator):
        n = kind.n_in
        blk = _empty(1, n, n)
        sk = np.sqrt(np.asarray(kind.kappa))
        psi = np.asarray(kind.psi)
        blk.A[0, 0] = -1j * kind.detuning - kind.kappa_total / 2
        blk.B[0, :] = -sk * np.exp(-1j * psi)
        blk.C[:, 0] = sk * np.exp(1j * psi)
        blk.D[:] = np.eye(n)
        blk.detuning[0] = kind.detuning
        blk.kappa[0] = kind.kappa_total
        blk.chi[0] = kind.chi
        return blk
    if isinstance(kind, Beamsplitter):
        blk = _empty(0, 2, 2)
        ct, st = math.cos(kind.theta), math.sin(kind.theta)
        blk.D[:] = [[ct, -st], [st, ct]]
        return blk
    if isinstance(kind, PhaseShifter):
        blk = _empty(0, 1, 1)
        blk.D[0, 0] = np.exp(1j * kind.phi)
        return blk
    if isinstance(kind, Displacement):
        blk = _empty(0, 1, 1)
        blk.D[0, 0] = 1
        blk.c[0] = kind.beta
        return blk
    if isinstance(kind, Identity):
        blk = _empty(0, 1, 1)
        blk.D[0, 0] = 1
        return blk
    if isinstance(kind, (CompoundRef, Source)):
        raise TypeError(f"{type(kind).__name__} is not a primitive component")
    raise TypeError(f"unknown component {kind!r}")


def _block_diag(mats, shape_fn):
    shapes = [shape_fn(m) for m in mats]
    rows = sum(s[0] for s in shapes)
    cols = sum(s[1] for s in shapes)
    out = np.zeros((rows, cols), complex)
    r = c = 0
    for m, (h, w) in zip(mats, shapes):
        out[r:r + h, c:c + w] = m
        r += h
        c += w
    return out


def concatenate(blocks: list[ComponentBlock]) -> ComponentBlock:
    """Block-diagonal stacking of components that only see external fields."""
    if not blocks:
        return _empty(0, 0, 0)
    return ComponentBlock(
        A=_block_diag([b.A for b in blocks], np.shape),
        a=np.concatenate([b.a for b in blocks]),
        B=_block_diag([b.B for b in blocks], np.shape),
        C=_block_diag([b.C for b in blocks], np.shape),
        c=np.concatenate([b.c for b in blocks]),
        D=_block_diag([b.D for b in blocks], np.shape),
        detuning=np.concatenate([b.detuning for b in blocks]),
        kappa=np.concatenate([b.kappa for b in blocks]),
        chi=np.concatenate([b.chi for b in blocks]),
    )


@dataclass
class ReducedSystem:
    """Linear SDE matrices over external ports.

    ``A`` holds only the couplings produced by interconnection; the bare
    resonator term ``-i*detuning - kappa/2`` lives in ``bare`` so the
    integrator can exponentiate it together with the Kerr shift.
    """
    A: np.ndarray
    a: np.ndarray
    B: np.ndarray
    C: np.ndarray
    c: np.ndarray
    D: np.ndarray
    detuning: np.ndarray
    kappa: np.ndarray
    chi: np.ndarray
    resonators: list[str] = field(default_factory=list)
    inputs: list[ExternalInput] = field(default_factory=list)
    outputs: list[ExternalOutput] = field(default_factory=list)
    probe_C: np.ndarray | None = None
    probe_c: np.ndarray | None = None
    probe_D: np.ndarray | None = None
    probes: list[str] = field(default_factory=list)

    @property
    def bare(self) -> np.ndarray:
        return -1j * self.detuning - self.kappa / 2

    @property
    def n_res(self) -> int:
        return self.A.shape[0]

    @property
    def n_in(self) -> int:
        return self.B.shape[1] if self.B.ndim == 2 else 0

    @property
    def n_out(self) -> int:
        return self.C.shape[0]

    def resonator_index(self, name: str) -> int:
        return self.resonators.index(name)

    def input_index(self, name: str) -> int:
        return [x.name for x in self.inputs].index(name)

    def output_index(self, name: str) -> int:
        return [x.name for x in self.outputs].index(name)

    def output_rows(self, names: list[str]):
        """``(C, c, D)`` rows for declared outputs or internal probes, in order."""
        ext = {o.name: i for i, o in enumerate(self.outputs)}
        probes = {p: i for i, p in enumerate(self.probes)}
        rows = []
        for name in names:
            if name in ext:
                i = ext[name]
                rows.append((self.C[i], self.c[i], self.D[i]))
            elif name in probes:
                i = probes[name]
                rows.append((self.probe_C[i], self.probe_c[i], self.probe_D[i]))
            else:
                raise KeyError(f"unknown output {name!r}")
        if not rows:
            return (np.zeros((0, self.n_res), complex), np.zeros(0, complex),
                    np.zeros((0, self.n_in), complex))
        C, c, D = zip(*rows)
        return np.array(C), np.array(c), np.array(D)

    def default_dt(self) -> float:
        scale = max(np.max(np.abs(self.detuning), initial=0.0),
                    np.max(self.kappa, initial=0.0))
        if scale <= 0:
            raise ReductionError("circuit has no resonators to set a timestep")
        return 0.025 / scale

    def full_A(self) -> np.ndarray:
        return self.A + np.diag(self.bare)


def _port_offsets(sizes):
    return np.concatenate([[0], np.cumsum(sizes)]).astype(int)


def circuit_block(flat: FlatCircuit):
    """Concatenated block plus global port bookkeeping for a flat circuit.

    Returns ``(block, names, connections, ext_in, ext_out)`` where the last
    three are expressed in global port indices of the concatenation.
    """
    names = list(flat.components)
    blocks = [component_block(flat.components[n]) for n in names]
    block = concatenate(blocks)
    in_off = dict(zip(names, _port_offsets([b.n_in for b in blocks])))
    out_off = dict(zip(names, _port_offsets([b.n_out for b in blocks])))
    connections = [(out_off[s[0]] + s[1], in_off[d[0]] + d[1]) for s, d in flat.connections]
    ext_in = [in_off[x.target[0]] + x.target[1] for x in flat.inputs]
    ext_out = [out_off[o.source[0]] + o.source[1] for o in flat.outputs]
    return block, names, connections, ext_in, ext_out


def eliminate_internal(block: ComponentBlock, connections, ext_in, ext_out,
                       sparse: bool | None = None) -> ReducedSystem:
    """Eliminate internal fields of a concatenated block.

    ``connections`` pairs global output-port indices with the input ports they
    feed.  ``ext_in``/``ext_out`` list the remaining ports in external order,
    so that ``ext_in + [dst for _, dst in connections]`` is the input
    permutation and likewise for outputs.
    """
    int_out = np.array([s for s, _ in connections], dtype=int)
    int_in = np.array([d for _, d in connections], dtype=int)
    ext_in = np.asarray(ext_in, dtype=int)
    ext_out = np.asarray(ext_out, dtype=int)
    if len(set(int_in) | set(ext_in)) != block.n_in or len(int_in) + len(ext_in) != block.n_in:
        raise ReductionError("input permutation does not cover every input port once")
    if len(set(int_out) | set(ext_out)) != block.n_out or len(int_out) + len(ext_out) != block.n_out:
        raise ReductionError("output permutation does not cover every output port once")
    BE, BI = block.B[:, ext_in], block.B[:, int_in]
    CE, CI = block.C[ext_out], block.C[int_out]
    cE, cI = block.c[ext_out], block.c[int_out]
    DEE = block.D[np.ix_(ext_out, ext_in)]
    DEI = block.D[np.ix_(ext_out, int_in)]
    DIE = block.D[np.ix_(int_out, ext_in)]
    DII = block.D[np.ix_(int_out, int_in)]
    m = len(int_in)
    if sparse is None:
        sparse = block.n_res > SPARSE_THRESHOLD
    rhs = np.hstack([CI, cI[:, None], DIE])
    if m == 0:
        X = np.zeros((0, rhs.shape[1]), complex)
    elif sparse:
        M = sp.csc_matrix(np.eye(m) - DII)
        lu = spla.splu(M)
        inv_norm = spla.onenormest(spla.LinearOperator(
            (m, m), matvec=lu.solve, rmatvec=lambda v: lu.solve(v, trans="H"),
            dtype=complex))
        if not np.isfinite(inv_norm) or spla.norm(M, 1) * inv_norm > COND_LIMIT:
            _raise_singular(np.eye(m) - DII, connections)
        X = lu.solve(rhs)
    else:
        M = np.eye(m) - DII
        if np.linalg.cond(M) > COND_LIMIT:
            _raise_singular(M, connections)
        X = np.linalg.solve(M, rhs)
    n = block.n_res
    XC, Xc, XD = X[:, :n], X[:, n], X[:, n + 1:]
    A = block.A + BI @ XC
    return ReducedSystem(
        A=A - np.diag(np.diag(block.A)),
        a=block.a + BI @ Xc,
        B=BE + BI @ XD,
        C=CE + DEI @ XC,
        c=cE + DEI @ Xc,
        D=DEE + DEI @ XD,
        detuning=block.detuning.copy(), kappa=block.kappa.copy(), chi=block.chi.copy(),
        probe_C=XC, probe_c=Xc, probe_D=XD,
    )


def _raise_singular(M, connections):
    _, _, vh = np.linalg.svd(M)
    null = np.abs(vh[-1])
    loop = [connections[i] for i in np.flatnonzero(null > 1e-3 * null.max())]
    raise SingularLoopError(
        f"(1 - D_II) is singular: lossless loop through {len(loop)} internal connections",
        loop)


def _attach(sys: ReducedSystem, flat: FlatCircuit, names: list[str]) -> ReducedSystem:
    sys.resonators = [n for n in names if isinstance(flat.components[n], Resonator)]
    sys.inputs = list(flat.inputs)
    sys.outputs = list(flat.outputs)
    if sys.probe_C is not None:
        sys.probes = [f"{s[0]}.out{s[1]}" for s, _ in flat.connections]
    return sys


def reduce_circuit(flat: FlatCircuit, sparse: bool | None = None) -> ReducedSystem:
    """Algebraic reduction of a flat circuit to its external-port system."""
    block, names, connections, ext_in, ext_out = circuit_block(flat)
    return _attach(eliminate_internal(block, connections, ext_in, ext_out, sparse), flat, names)


def backprop_reduce(flat: FlatCircuit) -> ReducedSystem:
    """Reduce by tracing each field back to resonators and external inputs.

    Independent of the matrix elimination; only valid when the static part of
    the circuit contains no loop.
    """
    names = list(flat.components)
    res_names = [n for n in names if isinstance(flat.components[n], Resonator)]
    res_idx = {n: i for i, n in enumerate(res_names)}
    blocks = {n: component_block(flat.components[n]) for n in names}
    feeder = {dst: src for src, dst in flat.connections}
    ext_feed = {x.target: k for k, x in enumerate(flat.inputs)}
    n_res, n_in = len(res_names), len(flat.inputs)
    memo: dict = {}
    active: set = set()

    def in_field(port):
        if port in ext_feed:
            v_a = np.zeros(n_res, complex)
            v_b = np.zeros(n_in, complex)
            v_b[ext_feed[port]] = 1
            return v_a, v_b, 0j
        return out_field(feeder[port])

    def out_field(port):
        if port in memo:
            return memo[port]
        if port in active:
            raise StaticLoopError(f"static loop through {port[0]}.{port[1]}")
        active.add(port)
        name, j = port
        blk = blocks[name]
        v_a = np.zeros(n_res, complex)
        v_b = np.zeros(n_in, complex)
        const = complex(blk.c[j])
        if name in res_idx:
            v_a[res_idx[name]] += blk.C[j, 0]
        for i in range(blk.n_in):
            if blk.D[j, i] != 0:
                fa, fb, fc = in_field((name, i))
                v_a += blk.D[j, i] * fa
                v_b += blk.D[j, i] * fb
                const += blk.D[j, i] * fc
        active.discard(port)
        memo[port] = (v_a, v_b, const)
        return memo[port]

    A = np.zeros((n_res, n_res), complex)
    a = np.zeros(n_res, complex)
    B = np.zeros((n_res, n_in), complex)
    for r, name in enumerate(res_names):
        blk = blocks[name]
        for i in range(blk.n_in):
            fa, fb, fc = in_field((name, i))
            A[r] += blk.B[0, i] * fa
            B[r] += blk.B[0, i] * fb
            a[r] += blk.B[0, i] * fc
    rows = [out_field(o.source) for o in flat.outputs]
    C = np.array([r[0] for r in rows]).reshape(len(rows), n_res)
    D = np.array([r[1] for r in rows]).reshape(len(rows), n_in)
    c = np.array([r[2] for r in rows], dtype=complex)
    params = [flat.components[n] for n in res_names]
    sys = ReducedSystem(
        A=A, a=a, B=B, C=C, c=c, D=D,
        detuning=np.array([p.detuning for p in params], dtype=float),
        kappa=np.array([p.kappa_total for p in params], dtype=float),
        chi=np.array([p.chi for p in params], dtype=float))
    return _attach(sys, flat, names)


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

def _fmt(z) -> str:
    z = complex(z)
    return f"{z.real:.17g},{z.imag:.17g}"


def format_reduced(sys: ReducedSystem) -> str:
    """Plain-text dump: dimensions, matrices as ``re,im`` pairs, index maps."""
    lines = [f"# reduced system",
             f"dims n_res={sys.n_res} n_in={sys.n_in} n_out={sys.n_out}"]
    for name in ("A", "a", "B", "C", "c", "D"):
        m = np.atleast_2d(getattr(sys, name))
        if name in ("a", "c"):
            m = m.reshape(1, -1)
        lines.append(f"matrix {name} {m.shape[0]} {m.shape[1]}")
        lines += [" ".join(_fmt(z) for z in row) for row in m]
    lines.append("resonators")
    for i, n in enumerate(sys.resonators):
        lines.append(f"{i} {n} delta={sys.detuning[i]:.17g} kappa={sys.kappa[i]:.17g} "
                     f"chi={sys.chi[i]:.17g} bare={_fmt(sys.bare[i])}")
    lines.append("inputs")
    for i, x in enumerate(sys.inputs):
        lines.append(f"{i} {x.name} {x.kind} value={_fmt(x.value)} drive={x.drive or '-'}")
    lines.append("outputs")
    for i, o in enumerate(sys.outputs):
        lines.append(f"{i} {o.name} {o.kind}")
    return "\n".join(lines) + "\n"


def parse_reduced(text: str) -> dict:
    """Read back the matrices and index maps written by :func:`format_reduced`."""
    lines = [ln for ln in text.splitlines() if ln and not ln.startswith("#")]
    out: dict = {}
    i = 1
    while i < len(lines) and lines[i].startswith("matrix"):
        _, name, r, c = lines[i].split()
        r, c = int(r), int(c)
        rows = []
        for row in lines[i + 1:i + 1 + r]:
            vals = [complex(float(p.split(",")[0]), float(p.split(",")[1]))
                    for p in row.split()] if c else []
            rows.append(vals)
        m = np.array(rows, dtype=complex).reshape(r, c)
        out[name] = m.ravel() if name in ("a", "c") else m
        i += 1 + r
    section = None
    maps = {"resonators": [], "inputs": [], "outputs": []}
    for ln in lines[i:]:
        if ln in maps:
            section = ln
            continue
        maps[section].append(ln.split()[1])
    out.update(maps)
    return out
