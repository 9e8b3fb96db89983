"""Command-line entry point.

Exit codes: 0 success, 1 I/O problem, 2 usage error, 3 validation failure,
4 numerical divergence.  Failures print one line ``error: <category>: <detail>``
on stderr.  Every file is written to a temporary name and renamed into place.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import sys
import tempfile
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .analysis import (AnalysisError, FieldHistogram, autocorr_rate, counter_error_rate,
                       detect_jumps, fit_log_rate, measure_delay)
from .drives import DriveError, Constant, format_drives, parse_drives
from .flatten import check_circuit, flatten
from .netlist import NetlistError, parse_netlist, serialize
from .reduction import ReductionError, backprop_reduce, format_reduced, reduce_circuit
from .sde import DivergenceError, DriveMismatchError, SimConfig, default_workers, run_ensemble
from .stdcells import CELL_KINDS, CellSpec, build_cell

EXIT_IO, EXIT_USAGE, EXIT_VALIDATION, EXIT_DIVERGENCE = 1, 2, 3, 4


class CliError(Exception):
    def __init__(self, category: str, detail: str, code: int):
        super().__init__(detail)
        self.category = category
        self.code = code


# ---------------------------------------------------------------------------
# Files
# ---------------------------------------------------------------------------

def write_atomic(path, data: str | bytes) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    mode = "wb" if isinstance(data, bytes) else "w"
    fd, tmp = tempfile.mkstemp(prefix=f".{path.name}.", dir=path.parent)
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def sha256(data: str | bytes) -> str:
    if isinstance(data, str):
        data = data.encode()
    return hashlib.sha256(data).hexdigest()


def _read(path) -> str:
    try:
        return Path(path).read_text()
    except OSError as exc:
        raise CliError("io", f"cannot read {path}: {exc.strerror}", EXIT_IO) from None


def _load_netlist(path):
    text = _read(path)
    try:
        n = parse_netlist(text)
        return n, flatten(n), text
    except NetlistError as exc:
        raise CliError("validation", f"{path}: {exc}", EXIT_VALIDATION) from None


def format_csv(times, columns: dict[str, np.ndarray]) -> str:
    """Time column then ``<name>.re`` and ``<name>.im`` columns, round-trip precision."""
    header = ["t"]
    data = [np.asarray(times, float)]
    for name, z in columns.items():
        z = np.asarray(z, complex)
        header += [f"{name}.re", f"{name}.im"]
        data += [z.real, z.imag]
    rows = [",".join(header)]
    mat = np.column_stack(data) if data else np.zeros((0, 0))
    rows += [",".join(repr(float(v)) for v in row) for row in mat]
    return "\n".join(rows) + "\n"


def read_csv(path) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    text = _read(path)
    lines = text.splitlines()
    header = lines[0].split(",")
    data = np.loadtxt(lines[1:], delimiter=",", ndmin=2) if len(lines) > 1 else np.zeros((0, len(header)))
    cols = {}
    for i, h in enumerate(header[1:], start=1):
        name, _, part = h.rpartition(".")
        z = cols.setdefault(name, np.zeros(data.shape[0], complex))
        if part == "re":
            z.real = data[:, i]
        else:
            z.imag = data[:, i]
    return data[:, 0], cols


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------

@dataclass
class RunManifest:
    netlist_path: str
    netlist_sha256: str
    drives_path: str | None
    drives_sha256: str | None
    config: dict
    n_traj: int
    tool_version: str = __version__
    runtime_s: float = 0.0
    outputs: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text: str) -> "RunManifest":
        return cls(**json.loads(text))


def _config_dict(cfg: SimConfig) -> dict:
    d = asdict(cfg)
    if d["alpha0"] is not None:
        d["alpha0"] = [[float(z.real), float(z.imag)] for z in np.asarray(cfg.alpha0, complex)]
    return d


def _config_from_dict(d: dict) -> SimConfig:
    d = dict(d)
    if d.get("alpha0") is not None:
        d["alpha0"] = np.array([complex(a, b) for a, b in d["alpha0"]])
    return SimConfig(**d)


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def cmd_check(args) -> int:
    _, flat, _ = _load_netlist(args.netlist)
    report = check_circuit(flat)
    print(report.format())
    if not report.ok:
        raise CliError("validation", f"{len(report.violations)} violation(s) in {args.netlist}",
                       EXIT_VALIDATION)
    return 0


def cmd_cell(args) -> int:
    try:
        spec = CellSpec(args.kind, args.ehigh, stage=args.stage, stages=args.stages,
                        inverting=args.inverting)
        text = serialize(build_cell(spec))
    except ValueError as exc:
        raise CliError("validation", str(exc), EXIT_VALIDATION) from None
    _emit(args.output, text)
    return 0


def cmd_reduce(args) -> int:
    _, flat, _ = _load_netlist(args.netlist)
    try:
        sys_ = backprop_reduce(flat) if args.oracle else reduce_circuit(flat)
    except ReductionError as exc:
        raise CliError("validation", str(exc), EXIT_VALIDATION) from None
    _emit(args.output, format_reduced(sys_))
    return 0


def _emit(path, text: str) -> None:
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        write_atomic(path, text)


def _simulation_inputs(args):
    """SimConfig and drive text with precedence flags > config file > defaults."""
    base = {}
    if args.config:
        try:
            base = json.loads(_read(args.config))
        except json.JSONDecodeError as exc:
            raise CliError("validation", f"{args.config}: {exc}", EXIT_VALIDATION) from None
    flags = {"t_max": args.tmax, "dt": args.dt, "seed": args.seed, "t_start": args.tstart,
             "window": args.avg, "record": args.trace, "outputs": args.output_trace,
             "scheme": args.scheme}
    merged = {**base, **{k: v for k, v in flags.items() if v is not None}}
    if args.no_noise:
        merged["noise"] = False
    if args.wigner_correction:
        merged["wigner_correction"] = True
    merged.setdefault("record", [])
    if "t_max" not in merged:
        raise CliError("usage", "simulate needs --tmax (or t_max in --config)", EXIT_USAGE)
    try:
        return _config_from_dict(merged)
    except (TypeError, ValueError) as exc:
        raise CliError("validation", f"bad configuration: {exc}", EXIT_VALIDATION) from None


def cmd_simulate(args) -> int:
    if args.from_manifest:
        m = RunManifest.from_json(_read(args.from_manifest))
        args.netlist, args.drives = m.netlist_path, m.drives_path
        cfg, n_traj = _config_from_dict(m.config), m.n_traj
    else:
        if args.netlist is None:
            raise CliError("usage", "simulate needs a netlist", EXIT_USAGE)
        cfg, n_traj = _simulation_inputs(args), args.ntraj
    _, flat, net_text = _load_netlist(args.netlist)
    drive_text = _read(args.drives) if args.drives else ""
    if args.from_manifest and (sha256(net_text) != m.netlist_sha256
                               or (drive_text and sha256(drive_text) != m.drives_sha256)):
        raise CliError("validation", "input files changed since the manifest was written",
                       EXIT_VALIDATION)
    try:
        drives = parse_drives(drive_text)
        system = reduce_circuit(flat)
        start = time.perf_counter()
        trajs = run_ensemble(system, drives, cfg, n_traj, workers=args.workers)
        runtime = time.perf_counter() - start
    except (DriveError, DriveMismatchError, ReductionError, KeyError, ValueError) as exc:
        detail = exc.args[0] if isinstance(exc, KeyError) and exc.args else str(exc)
        raise CliError("validation", str(detail), EXIT_VALIDATION) from None
    except DivergenceError as exc:
        raise CliError("divergence", str(exc), EXIT_DIVERGENCE) from None
    out_dir = Path(args.output)
    names = []
    for tr in trajs:
        cols = {name: tr.output(name) for name in tr.output_names}
        cols.update({name: tr.field(name) for name in tr.resonators})
        fname = f"traj_{tr.traj_index:04d}.csv"
        write_atomic(out_dir / fname, format_csv(tr.times, cols))
        names.append(fname)
    manifest = RunManifest(str(Path(args.netlist).resolve()), sha256(net_text),
                           str(Path(args.drives).resolve()) if args.drives else None,
                           sha256(drive_text) if args.drives else None,
                           _config_dict(cfg), n_traj, runtime_s=runtime, outputs=names)
    write_atomic(out_dir / "manifest.json", manifest.to_json())
    print(f"wrote {len(names)} trajectories to {out_dir} in {runtime:.3f} s")
    return 0


def _column(cols, name):
    if name not in cols:
        raise CliError("validation", f"no column {name!r} (have {', '.join(cols)})",
                       EXIT_VALIDATION)
    return cols[name]


def cmd_analyze(args) -> int:
    t, cols = read_csv(args.trajectory)
    if t.size < 2:
        raise CliError("validation", "trajectory has fewer than two samples", EXIT_VALIDATION)
    dt = float(t[1] - t[0])
    report: dict = {"file": str(args.trajectory), "samples": int(t.size)}
    try:
        if args.jumps:
            x = np.abs(_column(cols, args.jumps)) ** (2 if args.photons else 1)
            if args.low is None or args.high is None:
                raise CliError("usage", "--jumps needs --low and --high", EXIT_USAGE)
            js = detect_jumps(x, args.low, args.high, dt, min_dwell=args.min_dwell,
                              keep_states=False)
            report["jumps"] = {"thresholds": list(js.thresholds), "n_up": js.n_up,
                               "n_down": js.n_down, "time_low": js.time_low,
                               "time_high": js.time_high, "r_up": js.r_up,
                               "r_up_err": js.r_up_err, "r_down": js.r_down,
                               "r_down_err": js.r_down_err, "rate": js.rate,
                               "rate_err": js.rate_err}
        if args.autocorr:
            fit = autocorr_rate(_column(cols, args.autocorr), dt)
            report["autocorr"] = {"rate": fit.rate, "amplitude": fit.amplitude,
                                  "r_squared": fit.r_squared, "window": list(fit.window)}
        if args.hist:
            r = args.range
            h = FieldHistogram((-r, r), (-r, r), (args.bins, args.bins),
                               log_scale=not args.linear)
            h.add(_column(cols, args.hist))
            report["hist"] = {"samples": h.n_samples, "overflow": h.overflow}
            if args.hist_out:
                write_atomic(args.hist_out, h.to_text())
        if args.delay:
            if args.stimulus is None or args.low is None or args.high is None:
                raise CliError("usage", "--delay needs --stimulus, --low and --high", EXIT_USAGE)
            ds = measure_delay(t, _column(cols, args.delay), args.low, args.high,
                               stimulus=_column(cols, args.stimulus))
            report["delay"] = [{"edge": d.edge_time, "tau": d.tau, "rising": d.rising,
                                "measurable": d.measurable} for d in ds]
        if args.counter:
            if args.ehigh is None or args.clock_drives is None:
                raise CliError("usage", "--counter needs --ehigh and --clock-drives", EXIT_USAGE)
            drives = parse_drives(_read(args.clock_drives))
            clock = drives[args.clock](t)
            bits = np.column_stack([_column(cols, f"q{k}") for k in range(4)])
            ce = counter_error_rate(t, bits, clock, args.ehigh, t_min=args.tmin)
            report["counter"] = {"errors": ce.errors, "undecodable": ce.undecodable,
                                 "samples": ce.samples, "observed_time": ce.observed_time,
                                 "rate": ce.rate, "values": ce.values}
    except (AnalysisError, DriveError, KeyError) as exc:
        raise CliError("validation", str(exc), EXIT_VALIDATION) from None
    _emit(args.output, json.dumps(_finite(report), indent=2, default=_json_default,
                                  allow_nan=False) + "\n")
    return 0


def _finite(x):
    """Replace NaN and infinities by None so the report is strict JSON."""
    if isinstance(x, dict):
        return {k: _finite(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_finite(v) for v in x]
    if isinstance(x, (float, np.floating)) and not math.isfinite(x):
        return None
    return x


def _json_default(x):
    if isinstance(x, np.generic):
        return x.item()
    raise TypeError(type(x))


def latch_hold_rate(e_high: float, t_max: float, seed: int, dt: float | None = None,
                    settle: float = 10.0, workers: int | None = None, n_traj: int = 1):
    """Jump statistics of a latch held with both inputs high.

    The first ``settle`` time units are discarded.  State levels are the
    noise-free hold photon numbers of the first resonator.
    """
    system = reduce_circuit(flatten(build_cell("latch", e_high)))
    name = system.resonators[0]
    drives = {"set": Constant(e_high), "reset": Constant(e_high)}
    low, high = latch_hold_levels(e_high, dt)
    cfg = SimConfig(t_max=t_max + settle, dt=dt, seed=seed, window=0.01, record=[name],
                    outputs=[])

    def reduce(tr):
        keep = tr.times >= tr.times[0] + settle
        return detect_jumps(np.abs(tr.field(name)[keep]) ** 2, low, high, 0.01,
                            keep_states=False)

    parts = run_ensemble(system, drives, cfg, n_traj, workers=workers, reducer=reduce)
    total = parts[0]
    for p in parts[1:]:
        total = total.merge(p)
    return total


def latch_hold_levels(e_high: float, dt: float | None = None) -> tuple[float, float]:
    """Noise-free photon numbers of the first latch resonator in its two hold states."""
    from .drives import PiecewiseConstant
    system = reduce_circuit(flatten(build_cell("latch", e_high)))
    e = e_high
    setw = PiecewiseConstant(((0.0, 0), (2.0, e)))
    rstw = PiecewiseConstant(((0.0, e), (4.0, 0), (6.0, e)))
    cfg = SimConfig(t_max=8.0, dt=dt, noise=False, window=0.01, outputs=[])
    from .sde import run_trajectory
    tr = run_trajectory(system, {"set": setw, "reset": rstw}, cfg)
    n = np.abs(tr.field(system.resonators[0])) ** 2
    low = float(n[np.searchsorted(tr.times, 3.9)])
    high = float(n[np.searchsorted(tr.times, 7.9)])
    return low, high


def cmd_sweep(args) -> int:
    if args.cell != "latch":
        raise CliError("usage", "only --cell latch is supported", EXIT_USAGE)
    rows = ["e_high,n_up,n_down,time_low,time_high,rate,rate_err"]
    es, rates = [], []
    try:
        for e in args.ehigh_list:
            js = latch_hold_rate(e, args.tmax, args.seed, args.dt, workers=args.workers,
                                 n_traj=args.ntraj)
            rows.append(",".join(repr(float(v)) if isinstance(v, float) else str(v) for v in
                                 (e, js.n_up, js.n_down, js.time_low, js.time_high,
                                  js.rate, js.rate_err)))
            if js.n_jumps > 0:
                es.append(e)
                rates.append(js.rate)
    except DivergenceError as exc:
        raise CliError("divergence", str(exc), EXIT_DIVERGENCE) from None
    text = "\n".join(rows) + "\n"
    if len(es) >= 3:
        fit = fit_log_rate(es, rates)
        text += "# log10 fit coefficients " + " ".join(repr(float(c)) for c in fit.coeffs)
        text += f"\n# residual norm {fit.residual_norm!r}\n"
    _emit(args.output, text)
    return 0


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------

def _floats(text: str) -> list[float]:
    try:
        return [float(x) for x in text.split(",") if x]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: usage: {message}\n")
        raise SystemExit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="kerrnet", description="Semiclassical Kerr-resonator circuit simulator")
    p.add_argument("--version", action="version", version=__version__)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    c = sub.add_parser("check", help="validate a netlist and print component counts")
    c.add_argument("netlist")
    c.set_defaults(func=cmd_check)

    c = sub.add_parser("cell", help="write a standard cell netlist")
    c.add_argument("kind", choices=CELL_KINDS)
    c.add_argument("--ehigh", type=float, default=50.0)
    c.add_argument("--stage", type=int, default=0)
    c.add_argument("--stages", type=int, default=4)
    c.add_argument("--inverting", action="store_true")
    c.add_argument("-o", "--output", default="-")
    c.set_defaults(func=cmd_cell)

    c = sub.add_parser("reduce", help="write the reduced linear system of a netlist")
    c.add_argument("netlist")
    c.add_argument("--oracle", action="store_true", help="use back-propagation instead")
    c.add_argument("-o", "--output", default="-")
    c.set_defaults(func=cmd_reduce)

    c = sub.add_parser("simulate", help="integrate trajectories and write CSV traces")
    c.add_argument("netlist", nargs="?")
    c.add_argument("--drives")
    c.add_argument("--config", help="JSON file with SimConfig fields")
    c.add_argument("--from-manifest", help="repeat the run described by a manifest")
    c.add_argument("--tmax", type=float)
    c.add_argument("--tstart", type=float)
    c.add_argument("--dt", type=float)
    c.add_argument("--seed", type=int)
    c.add_argument("--avg", type=float, help="averaging window")
    c.add_argument("--trace", nargs="+", help="resonators to record")
    c.add_argument("--output-trace", nargs="+", help="outputs to record (default: declared)")
    c.add_argument("--ntraj", type=int, default=1)
    c.add_argument("--workers", type=int, default=None)
    c.add_argument("--no-noise", action="store_true")
    c.add_argument("--wigner-correction", action="store_true")
    c.add_argument("--scheme", choices=("euler", "etd"),
                   help="weighting of the coupling terms (default euler)")
    c.add_argument("-o", "--output", required=True, help="output directory")
    c.set_defaults(func=cmd_simulate)

    c = sub.add_parser("analyze", help="statistics of a trajectory CSV")
    c.add_argument("trajectory")
    c.add_argument("--jumps", metavar="TRACE")
    c.add_argument("--photons", action="store_true", help="use |x|^2 for --jumps")
    c.add_argument("--low", type=float)
    c.add_argument("--high", type=float)
    c.add_argument("--min-dwell", type=float)
    c.add_argument("--autocorr", metavar="TRACE")
    c.add_argument("--hist", metavar="TRACE")
    c.add_argument("--range", type=float, default=15.0)
    c.add_argument("--bins", type=int, default=121)
    c.add_argument("--linear", action="store_true")
    c.add_argument("--hist-out")
    c.add_argument("--delay", metavar="TRACE")
    c.add_argument("--stimulus", metavar="TRACE")
    c.add_argument("--counter", action="store_true")
    c.add_argument("--ehigh", type=float)
    c.add_argument("--clock-drives")
    c.add_argument("--clock", default="clk")
    c.add_argument("--tmin", type=float, default=0.0)
    c.add_argument("-o", "--output", default="-")
    c.set_defaults(func=cmd_analyze)

    c = sub.add_parser("sweep", help="latch hold jump rates against E_high")
    c.add_argument("--cell", default="latch")
    c.add_argument("--ehigh-list", type=_floats, required=True)
    c.add_argument("--tmax", type=float, required=True)
    c.add_argument("--dt", type=float)
    c.add_argument("--seed", type=int, default=0)
    c.add_argument("--ntraj", type=int, default=1)
    c.add_argument("--workers", type=int, default=None)
    c.add_argument("-o", "--output", default="-")
    c.set_defaults(func=cmd_sweep)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "workers", None) is None and hasattr(args, "workers"):
        args.workers = default_workers()
    try:
        return args.func(args)
    except CliError as exc:
        sys.stderr.write(f"error: {exc.category}: {exc}\n")
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
