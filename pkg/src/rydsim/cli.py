"""Experiment runner: subcommands, deterministic outputs, run reports.

Subcommands (each takes ``--config PATH``, optional ``--seed N``,
``--out DIR``, ``--quiet``)::

    rydsim gate     --config cfg.yaml    # pulse-level gate + extraction
    rydsim sweep    --config cfg.yaml    # adiabatic state preparation
    rydsim spectrum --config cfg.yaml    # ground-state detuning scan
    rydsim quench   --config cfg.yaml    # sudden-quench dynamics
    rydsim bench    --config cfg.yaml    # achievable-depth estimates
    rydsim optimize --config cfg.yaml    # derivative-free pulse tuning
    rydsim validate --config cfg.yaml    # parse-only; echo resolved config

The subcommand must match the config's task block.  Exit codes: 0
success, 2 config/validation error, 3 numerical failure during the run.
Errors from simulator modules are reported as ``[module] message``.

Every run writes its CSV outputs plus a ``report.txt`` (YAML, schema
version 1) into the output directory; the report references the config
by content hash.  For a fixed config and seed all CSV outputs are
bit-identical between runs; concurrent runs must use distinct output
directories.  One master seed feeds the run; each task derives its own
stream from (seed, task name), and shot-level streams are derived
further down.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
import traceback
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import yaml

from . import __version__
from .config import (ConfigError, ExperimentConfig, build_model,
                     build_noise, build_register, config_hash, gate_params,
                     load_config, serialize_config, task_seed)
from .gates import build_protocol, extract_process, ideal_gate
from .hamiltonian import PulseSchedule
from .metrology import dsquare, write_depth_csv
from .optimize import (OptimizationProblem, gate_objective, minimize,
                       sweep_objective, write_trace_csv)
from .sweeps import (RampSchedule, adiabatic_sweep, detuning_scan,
                     quench_dynamics, write_correlation_csv,
                     write_pattern_csv, write_quench_csv, write_sweep_csv)

__all__ = ["RunReport", "run", "schedule_text", "main"]

_REPORT_SCHEMA = 1


# ---------------------------------------------------------------------------
# Run report
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RunReport:
    """Provenance record of one run (written as report.txt)."""

    version: str
    config_hash: str
    task: str
    seed: int
    outputs: tuple[str, ...]
    wall_clock_s: float
    status: str

    def as_text(self) -> str:
        return yaml.safe_dump(
            {
                "schema_version": _REPORT_SCHEMA,
                "tool_version": self.version,
                "config_hash": self.config_hash,
                "task": self.task,
                "seed": self.seed,
                "outputs": list(self.outputs),
                "wall_clock_s": round(self.wall_clock_s, 6),
                "status": self.status,
            },
            sort_keys=True, default_flow_style=False)


def schedule_text(schedule: PulseSchedule) -> str:
    """Byte-stable plain-text form of a pulse schedule.

    One line per step followed by one line per segment; floats are
    written with ``repr`` so equal schedules serialize identically.
    """
    lines = ["# pulse schedule v1",
             "# durations us; omega/delta rad_per_us; phi rad",
             f"n_steps={len(schedule.steps)}"]
    for i, step in enumerate(schedule.steps):
        lines.append(f"step={i} duration={step.duration!r} "
                     f"interactions={int(step.interactions_active)}")
        for seg in step.segments:
            tail = ""
            if seg.omega_end is not None:
                tail += f" omega_end={seg.omega_end!r}"
            if seg.delta_end is not None:
                tail += f" delta_end={seg.delta_end!r}"
            lines.append(
                "segment targets=" + ",".join(str(t) for t in seg.targets)
                + f" transition={seg.transition[0]}:{seg.transition[1]}"
                + f" omega={seg.omega!r} delta={seg.delta!r}"
                + f" phi={seg.phi!r}{tail}")
    return "\n".join(lines) + "\n"


def _write_text(path: Path, text: str) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(text)


def _csv_cell(value) -> str:
    if isinstance(value, bool):
        return str(int(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def _write_rows(path: Path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for row in rows:
            writer.writerow([_csv_cell(v) for v in row])


def _sites_pair(spec: dict) -> dict:
    return {"controls": tuple(spec.get("controls", ())),
            "targets": tuple(spec.get("targets", ()))}


def _q(node) -> float:
    return float(node["value"])


# ---------------------------------------------------------------------------
# Task runners.  Each returns (output file names, summary lines).
# ---------------------------------------------------------------------------


def _run_gate(config: ExperimentConfig, outdir: Path):
    spec = config.task_block
    register = build_register(config)
    protocol = build_protocol(spec["name"], gate_params(spec), register,
                              _sites_pair(spec["sites"]))
    report = extract_process(protocol, register, build_noise(config),
                             seed=task_seed(config.seed, "gate"))
    rows = [(f"phase_{label}", report.phases[label], "rad")
            for label in sorted(report.phases)]
    rows += [("fidelity", report.fidelity, "dimensionless"),
             ("leakage", report.leakage, "dimensionless"),
             ("tau_g", report.tau_g, "us")]
    _write_rows(outdir / "gate_report.csv", ["quantity", "value", "unit"],
                rows)
    _write_text(outdir / "schedule.txt", schedule_text(protocol.schedule))
    phases = ", ".join(f"{k}={report.phases[k]:+.6f}"
                       for k in sorted(report.phases))
    return ["gate_report.csv", "schedule.txt"], [
        f"gate {spec['name']}: fidelity={report.fidelity:.6f} "
        f"leakage={report.leakage:.3e} tau_g={report.tau_g:.4f} us",
        f"phases [rad]: {phases}",
    ]


def _run_sweep(config: ExperimentConfig, outdir: Path):
    spec = config.task_block
    register = build_register(config)
    model = build_model(config, register)
    ramp = RampSchedule.standard(
        _q(spec["duration"]), _q(spec["omega_max"]),
        _q(spec["delta_start"]), _q(spec["delta_end"]),
        ramp_fraction=float(spec["ramp_fraction"]))
    result = adiabatic_sweep(
        model, register, ramp, build_noise(config),
        seed=task_seed(config.seed, "sweep"), q=int(spec["q"]),
        n_records=int(spec["n_records"]), initial=spec.get("initial"),
        method=spec["method"], n_trajectories=int(spec["n_trajectories"]))
    write_sweep_csv(result, outdir / "sweep_trace.csv")
    write_correlation_csv(result.correlations, outdir / "correlations.csv")
    write_pattern_csv(result.pattern_probabilities, outdir / "patterns.csv")
    order = ", ".join(f"m{q}={m:.4f}" for q, m in sorted(result.order.items()))
    return ["sweep_trace.csv", "correlations.csv", "patterns.csv"], [
        f"sweep: ordered probability (q={spec['q']}) = "
        f"{result.ordered_probability:.6f}; {order}",
    ]


def _run_spectrum(config: ExperimentConfig, outdir: Path):
    spec = config.task_block
    register = build_register(config)
    model = build_model(config, register)
    deltas = np.linspace(_q(spec["delta_start"]), _q(spec["delta_end"]),
                         int(spec["n_points"]))
    rows = detuning_scan(model, deltas, omega=_q(spec["omega"]),
                         solver=spec["solver"],
                         qs=tuple(int(q) for q in spec["qs"]))
    header = list(rows[0].keys())
    _write_rows(outdir / "spectrum.csv", header,
                ([row[k] for k in header] for row in rows))
    labels = [row["label"] for row in rows]
    return ["spectrum.csv"], [
        f"spectrum: {len(rows)} points, phases encountered: "
        + " ".join(sorted(set(labels), key=labels.index)),
    ]


def _run_quench(config: ExperimentConfig, outdir: Path):
    spec = config.task_block
    register = build_register(config)
    model = build_model(config, register, omega=_q(spec["omega"]),
                        delta=_q(spec["delta"]))
    result = quench_dynamics(model, register, spec["initial"],
                             _q(spec["duration"]),
                             n_points=int(spec["n_points"]))
    write_quench_csv(result, outdir / "quench.csv")
    t_rev, p_rev = result.first_revival()
    revival = (f"first revival at t={t_rev:.4f} us, P={p_rev:.4f}"
               if np.isfinite(t_rev) else "no revival found")
    return ["quench.csv"], [f"quench from {spec['initial']}: {revival}"]


def _run_bench(config: ExperimentConfig, outdir: Path):
    spec = config.task_block
    estimates, lines = [], []
    for entry in spec["sources"]:
        source = entry["source"]
        if source == "digital":
            est = dsquare("digital", fidelity=float(entry["fidelity"]))
        elif source == "analog":
            est = dsquare("analog", v_max=_q(entry["v_max"]),
                          t_coh=_q(entry["t_coh"]))
        elif source == "lifetime":
            est = dsquare("lifetime", tau_cum=_q(entry["tau_cum"]),
                          t1=_q(entry["t1"]))
        else:
            est = dsquare("loss", n_atoms=float(entry["n_atoms"]),
                          tau_g=_q(entry["tau_g"]),
                          t_trap=_q(entry["t_trap"]))
        estimates.append(est)
        lines.append(f"bench {est.source}: epsilon={est.epsilon:.6e} "
                     f"dsquare={est.dsquare} n_gates={est.n_gates:g}")
    write_depth_csv(estimates, outdir / "depth.csv")
    return ["depth.csv"], lines


def _run_optimize(config: ExperimentConfig, outdir: Path):
    spec = config.task_block
    register = build_register(config)
    names = tuple(v["name"] for v in spec["vary"])
    bounds = tuple((float(v["low"]), float(v["high"]))
                   for v in spec["vary"])
    periodic = tuple(bool(v["periodic"]) for v in spec["vary"])
    start = tuple(float(v["start"]) for v in spec["vary"]) \
        if all("start" in v for v in spec["vary"]) else None
    seed = task_seed(config.seed, "optimize")
    if spec["objective"] == "gate":
        gspec = spec["gate"]
        target = ideal_gate(spec["target"]) if "target" in spec else None
        objective = gate_objective(
            gspec["name"], register, _sites_pair(gspec["sites"]), names,
            base_params=gate_params(gspec),
            leakage_weight=float(spec["leakage_weight"]), target=target,
            noise=build_noise(config), seed=seed)
    else:
        model = build_model(config, register)
        objective = sweep_objective(
            model, register, _q(spec["duration"]), target=spec["target"],
            q=int(spec["q"]), step_scale=float(spec["step_scale"]))
    problem = OptimizationProblem(
        names, bounds, objective, budget=int(spec["budget"]), seed=seed,
        restarts=int(spec["restarts"]), periodic=periodic, start=start)
    result = minimize(problem)
    write_trace_csv(result, outdir / "trace.csv")
    best = ", ".join(f"{n}={v:.6g}" for n, v in result.as_dict().items())
    return ["trace.csv"], [
        f"optimize: best cost {result.cost:.6e} after "
        f"{result.evaluations} evaluations ({result.status})",
        f"best parameters: {best}",
    ]


_RUNNERS = {
    "gate": _run_gate,
    "sweep": _run_sweep,
    "spectrum": _run_spectrum,
    "quench": _run_quench,
    "bench": _run_bench,
    "optimize": _run_optimize,
}


def run(config: ExperimentConfig, *, quiet: bool = False) -> RunReport:
    """Execute the config's task; write outputs and report.txt.

    Deterministic for a fixed config and seed: every CSV written is
    bit-identical between repeated runs.
    """
    outdir = Path(config.outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    outputs, lines = _RUNNERS[config.task](config, outdir)
    report = RunReport(
        version=__version__, config_hash=config_hash(config),
        task=config.task, seed=config.seed, outputs=tuple(outputs),
        wall_clock_s=time.perf_counter() - started, status="ok")
    _write_text(outdir / "report.txt", report.as_text())
    if not quiet:
        for line in lines:
            print(line)
        print(f"wrote {', '.join(outputs)} and report.txt to {outdir}")
    return report


# ---------------------------------------------------------------------------
# Command-line entry point
# ---------------------------------------------------------------------------


def _module_tag(exc: BaseException) -> str:
    """Name of the innermost package module in the traceback."""
    tag = "cli"
    for frame in traceback.extract_tb(exc.__traceback__):
        parts = Path(frame.filename).parts
        if "rydsim" in parts:
            name = Path(frame.filename).stem
            if name != "__init__":
                tag = name
    return tag


def _apply_overrides(config: ExperimentConfig, seed, out) -> ExperimentConfig:
    if seed is None and out is None:
        return config
    data = config.data
    if seed is not None:
        data["seed"] = int(seed)
    if out is not None:
        data["outdir"] = str(out)
    return ExperimentConfig(data)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="rydsim",
        description="Pulse-level simulator and benchmark toolkit for "
                    "Rydberg-interacting qubit arrays.")
    parser.add_argument("--version", action="version",
                        version=f"rydsim {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, doc in (
            ("gate", "run a gate protocol and extract the process"),
            ("sweep", "run an adiabatic preparation sweep"),
            ("spectrum", "scan ground-state order vs detuning"),
            ("quench", "run sudden-quench dynamics"),
            ("bench", "compute achievable-depth estimates"),
            ("optimize", "tune pulse parameters"),
            ("validate", "parse and echo a config without running")):
        p = sub.add_parser(name, help=doc)
        p.add_argument("--config", required=True, metavar="PATH",
                       help="YAML experiment config")
        p.add_argument("--seed", type=int, default=None, metavar="N",
                       help="override the config's master seed")
        p.add_argument("--out", default=None, metavar="DIR",
                       help="override the config's output directory")
        p.add_argument("--quiet", action="store_true",
                       help="suppress the stdout summary")
    args = parser.parse_args(argv)

    try:
        config = load_config(args.config)
    except ConfigError as exc:
        print(str(exc), file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2

    if args.command == "validate":
        if not args.quiet:
            print(f"# valid: task={config.task} "
                  f"hash={config_hash(config)}")
            sys.stdout.write(serialize_config(config))
        return 0

    if config.task != args.command:
        print(f"config defines a '{config.task}' task but the "
              f"'{args.command}' subcommand was invoked", file=sys.stderr)
        return 2

    config = _apply_overrides(config, args.seed, args.out)
    try:
        run(config, quiet=args.quiet)
    except Exception as exc:  # noqa: BLE001 - boundary: tag and report
        print(f"[{_module_tag(exc)}] {exc}", file=sys.stderr)
        return 3
    return 0


if __name__ == "__main__":
    sys.exit(main())
