"""Declarative experiment configuration: parsing, validation, hashing.

Configs are YAML mappings.  Every dimensionful scalar must carry an
explicit unit tag, written either as a mapping ``{value: 2.0, unit:
rad_per_us}`` or as the compact string ``"2.0 rad_per_us"``:

============  ========================  =========================
dimension     accepted tags             native unit (stored)
============  ========================  =========================
frequency     rad_per_us, MHz_2pi       rad_per_us  (x 2pi per MHz)
rate          rad_per_us, MHz_2pi       1/us        (same numbers)
length        um                        um
time          us                        us
============  ========================  =========================

Bare numbers are accepted only for dimensionless fields (ratios,
counts, angles in rad, seeds).  Parsing validates the whole tree and
reports *all* errors at once; unknown keys are errors, not warnings.

The parsed form is a canonical mapping: defaults materialized, units
normalized to the native column above.  Serialization emits that
mapping, so ``parse(serialize(parse(text)))`` equals ``parse(text)``,
and the config hash (sha256 of the canonical YAML) is invariant under
whitespace-only or unit-spelling-only edits of the source.

Top-level keys::

    geometry:      kind, n_sites | shape, spacing, [offset, tilt_rad]
    levels:        scheme  (gr | gg_r | gg_rr)
    interactions:  model, kind, v_nn, [levels, anisotropy]
    noise:         [t1, branch_to_ground, dephasing_gamma,
                    gamma_a, gamma_b, sigma_doppler]
    seed:          master seed (int, default 0)
    outdir:        output directory (default "runs")
    <task>:        exactly one of gate | sweep | spectrum | quench |
                   bench | optimize

``interactions.v_nn`` is the interaction strength at the separation of
sites (0, 1); the full power-law table is derived from it.  Task-block
fields are documented in the README and docs/ CSV schemas.  Optimizer
search-space bounds (``optimize.vary``) are plain numbers in the
objective's native units (rad/us for ramp knobs, protocol-native for
gate parameters) since they delimit abstract coordinates, not physical
inputs.
"""

from __future__ import annotations

import copy
import hashlib
import math
from dataclasses import dataclass

import numpy as np
import yaml

from .register import GG_R, GG_RR, GR, LevelScheme, Register, build_lattice
from .interactions import coupling_table
from .hamiltonian import ManyBodyModel
from .dynamics import NoiseModel
from .gates import coupling_for

__all__ = [
    "ConfigError", "ExperimentConfig", "parse_config", "load_config",
    "serialize_config", "config_hash", "build_register", "build_noise",
    "build_model", "SCHEMES", "TASKS",
]

_TWO_PI = 2.0 * math.pi

#: frequency-like tags -> factor to rad/us (rates share the tags: 1/us)
_FREQ_UNITS = {"rad_per_us": 1.0, "MHz_2pi": _TWO_PI}
_LEN_UNITS = {"um": 1.0, "µm": 1.0}
_TIME_UNITS = {"us": 1.0, "µs": 1.0}

_DIMENSIONS = {
    "frequency": (_FREQ_UNITS, "rad_per_us"),
    "length": (_LEN_UNITS, "um"),
    "time": (_TIME_UNITS, "us"),
}

SCHEMES: dict[str, LevelScheme] = {"gr": GR, "gg_r": GG_R, "gg_rr": GG_RR}

TASKS = ("gate", "sweep", "spectrum", "quench", "bench", "optimize")

_GATE_NAMES = ("CUxy", "pCUxy", "CPHASE", "CZ", "pCZ", "XY", "CkZ",
               "CNOT", "Toffoli")
_LATTICE_KINDS = ("chain", "ring", "square", "triangular",
                  "staggered_chain")
_COUPLING_KINDS = ("diagonal_vdw", "exchange_dipolar", "diagonal_cross")
_MANYBODY_MODELS = ("ising", "pxp", "xy", "xxz")
_BENCH_SOURCES = ("digital", "analog", "lifetime", "loss")


class ConfigError(ValueError):
    """All validation problems of one config, collected."""

    def __init__(self, errors):
        self.errors = tuple(errors)
        super().__init__("invalid config:\n" + "\n".join(
            f"  - {e}" for e in self.errors))


class _Collector:
    def __init__(self):
        self.errors: list[str] = []

    def add(self, path: str, message: str) -> None:
        self.errors.append(f"{path}: {message}")


# ---------------------------------------------------------------------------
# Field extractors.  Each pops its key from the working dict so leftover
# keys can be reported as unknown.
# ---------------------------------------------------------------------------


def _quantity(node, path: str, dim: str, err: _Collector) -> float | None:
    """Resolve a tagged quantity to its native unit."""
    units, native = _DIMENSIONS[dim]
    if isinstance(node, str):
        parts = node.split()
        if len(parts) != 2:
            err.add(path, f"expected 'VALUE UNIT', got {node!r}")
            return None
        try:
            value = float(parts[0])
        except ValueError:
            err.add(path, f"non-numeric value {parts[0]!r}")
            return None
        unit = parts[1]
    elif isinstance(node, dict):
        extra = sorted(set(node) - {"value", "unit"})
        if extra or "value" not in node or "unit" not in node:
            err.add(path, "quantity needs exactly the keys 'value' and "
                          f"'unit' (got {sorted(node)})")
            return None
        value, unit = node["value"], node["unit"]
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            err.add(path + ".value", f"expected a number, got {value!r}")
            return None
        value = float(value)
    elif isinstance(node, (int, float)) and not isinstance(node, bool):
        err.add(path, f"missing unit tag (expected one of "
                      f"{sorted(units)}, e.g. '{node} {native}')")
        return None
    else:
        err.add(path, f"expected a tagged quantity, got {node!r}")
        return None
    if unit not in units:
        err.add(path + ".unit", f"unknown unit {unit!r} for {dim}; "
                                f"expected one of {sorted(units)}")
        return None
    if not math.isfinite(value):
        err.add(path, "value must be finite")
        return None
    return value * units[unit]


def _tagged(value: float, dim: str) -> dict:
    """Canonical form of a resolved quantity."""
    return {"value": float(value), "unit": _DIMENSIONS[dim][1]}


def _take(block: dict, key: str):
    return block.pop(key) if key in block else None


def _take_quantity(block: dict, key: str, path: str, dim: str,
                   err: _Collector, *, default: float | None = None,
                   required: bool = False) -> float | None:
    node = _take(block, key)
    if node is None:
        if required:
            err.add(f"{path}.{key}", "required field is missing")
        return default
    return _quantity(node, f"{path}.{key}", dim, err)


def _take_number(block: dict, key: str, path: str, err: _Collector, *,
                 default=None, required=False, integer=False,
                 minimum=None, maximum=None):
    node = _take(block, key)
    if node is None:
        if required:
            err.add(f"{path}.{key}", "required field is missing")
        return default
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        err.add(f"{path}.{key}", f"expected a number, got {node!r}")
        return default
    if integer and int(node) != node:
        err.add(f"{path}.{key}", f"expected an integer, got {node!r}")
        return default
    value = int(node) if integer else float(node)
    if not integer and not math.isfinite(value):
        err.add(f"{path}.{key}", "value must be finite")
        return default
    if minimum is not None and value < minimum:
        err.add(f"{path}.{key}", f"must be >= {minimum}, got {value}")
        return default
    if maximum is not None and value > maximum:
        err.add(f"{path}.{key}", f"must be <= {maximum}, got {value}")
        return default
    return value


def _take_choice(block: dict, key: str, path: str, choices, err: _Collector,
                 *, default=None, required=False):
    node = _take(block, key)
    if node is None:
        if required:
            err.add(f"{path}.{key}", "required field is missing")
        return default
    if node not in choices:
        err.add(f"{path}.{key}",
                f"unknown value {node!r}; expected one of {list(choices)}")
        return default
    return node


def _take_string(block: dict, key: str, path: str, err: _Collector, *,
                 default=None, required=False):
    node = _take(block, key)
    if node is None:
        if required:
            err.add(f"{path}.{key}", "required field is missing")
        return default
    if not isinstance(node, str):
        err.add(f"{path}.{key}", f"expected a string, got {node!r}")
        return default
    return node


def _take_bool(block: dict, key: str, path: str, err: _Collector, *,
               default=False):
    node = _take(block, key)
    if node is None:
        return default
    if not isinstance(node, bool):
        err.add(f"{path}.{key}", f"expected true/false, got {node!r}")
        return default
    return node


def _reject_unknown(block: dict, path: str, err: _Collector) -> None:
    for key in sorted(block):
        err.add(f"{path}.{key}", "unknown key")


def _as_block(node, path: str, err: _Collector) -> dict | None:
    if node is None:
        return {}
    if not isinstance(node, dict):
        err.add(path, f"expected a mapping, got {node!r}")
        return None
    return dict(node)


def _int_list(node, path: str, err: _Collector, *, minimum=0) -> list | None:
    if not isinstance(node, (list, tuple)):
        err.add(path, f"expected a list, got {node!r}")
        return None
    out = []
    for i, v in enumerate(node):
        if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
            err.add(f"{path}[{i}]", f"expected an integer >= {minimum}, "
                                    f"got {v!r}")
            return None
        out.append(int(v))
    return out


# ---------------------------------------------------------------------------
# Block parsers -> canonical sub-mappings
# ---------------------------------------------------------------------------


def _parse_geometry(node, err: _Collector, inferred_sites: int | None):
    path = "geometry"
    block = _as_block(node, path, err)
    if block is None:
        return None
    kind = _take_choice(block, "kind", path, _LATTICE_KINDS, err,
                        default="chain")
    spacing = _take_quantity(block, "spacing", path, "length", err,
                             default=6.0)
    if spacing is not None and spacing <= 0:
        err.add(f"{path}.spacing", "must be positive")
    out = {"kind": kind, "spacing": _tagged(spacing or 6.0, "length")}
    if kind in ("square", "triangular") and "shape" in block:
        shape = _int_list(block.pop("shape"), f"{path}.shape", err, minimum=1)
        if shape is not None and len(shape) != 2:
            err.add(f"{path}.shape", "expected [nx, ny]")
        elif shape is not None:
            out["shape"] = shape
    n_sites = _take_number(block, "n_sites", path, err, integer=True,
                           minimum=1)
    if n_sites is None and "shape" in out:
        n_sites = out["shape"][0] * out["shape"][1]
    if n_sites is None:
        n_sites = inferred_sites
    if n_sites is None:
        err.add(f"{path}.n_sites", "required field is missing")
    else:
        out["n_sites"] = int(n_sites)
    if kind == "staggered_chain":
        offset = _take_quantity(block, "offset", path, "length", err)
        if offset is not None:
            out["offset"] = _tagged(offset, "length")
        tilt = _take_number(block, "tilt_rad", path, err)
        if tilt is not None:
            out["tilt_rad"] = tilt
    _reject_unknown(block, path, err)
    return out


def _parse_levels(node, err: _Collector, default_scheme: str):
    path = "levels"
    block = _as_block(node, path, err)
    if block is None:
        return None
    scheme = _take_choice(block, "scheme", path, sorted(SCHEMES), err,
                          default=default_scheme)
    _reject_unknown(block, path, err)
    return {"scheme": scheme}


def _parse_interactions(node, err: _Collector):
    path = "interactions"
    block = _as_block(node, path, err)
    if block is None or not block and node is None:
        return None
    model = _take_choice(block, "model", path, _MANYBODY_MODELS, err,
                         default="ising")
    kind = _take_choice(block, "kind", path, _COUPLING_KINDS, err,
                        default="diagonal_vdw")
    v_nn = _take_quantity(block, "v_nn", path, "frequency", err,
                          required=True)
    out = {"model": model, "kind": kind,
           "v_nn": _tagged(v_nn if v_nn is not None else 0.0, "frequency")}
    levels = _take(block, "levels")
    if levels is not None:
        if (not isinstance(levels, (list, tuple)) or len(levels) != 2
                or not all(isinstance(s, str) for s in levels)):
            err.add(f"{path}.levels", "expected a pair of level labels")
        else:
            out["levels"] = [str(s) for s in levels]
    anis = _take_number(block, "anisotropy", path, err)
    if anis is not None:
        out["anisotropy"] = anis
    truncate = _take_number(block, "truncate", path, err,
                            minimum=0.0, maximum=1.0)
    # pxp needs a blockade graph, not magnitudes: keep NN bonds only
    # unless told otherwise
    out["truncate"] = truncate if truncate is not None else (
        0.5 if model == "pxp" else 0.0)
    _reject_unknown(block, path, err)
    return out


def _parse_noise(node, err: _Collector):
    path = "noise"
    block = _as_block(node, path, err)
    if block is None:
        return None
    out = {}
    t1 = _take_quantity(block, "t1", path, "time", err)
    if t1 is not None:
        if t1 <= 0:
            err.add(f"{path}.t1", "must be positive")
        out["t1"] = _tagged(t1, "time")
    branch = _take_number(block, "branch_to_ground", path, err,
                          minimum=0.0, maximum=1.0)
    if branch is not None:
        out["branch_to_ground"] = branch
    for key in ("dephasing_gamma", "gamma_a", "gamma_b", "sigma_doppler"):
        rate = _take_quantity(block, key, path, "frequency", err)
        if rate is not None:
            if rate < 0:
                err.add(f"{path}.{key}", "must be non-negative")
            out[key] = _tagged(rate, "frequency")
    _reject_unknown(block, path, err)
    return out or None


def _parse_sites(node, path: str, err: _Collector):
    block = _as_block(node, path, err)
    if block is None:
        return None
    out = {}
    for role, fallback in (("controls", [0]), ("targets", [1])):
        raw = _take(block, role)
        if raw is None:
            out[role] = fallback
            continue
        sites = _int_list(raw, f"{path}.{role}", err)
        if sites is not None:
            out[role] = sites
    _reject_unknown(block, path, err)
    return out


def _parse_gate_spec(block: dict, path: str, err: _Collector) -> dict | None:
    """Shared by the gate task and the optimizer's gate objective."""
    name = _take_choice(block, "name", path, _GATE_NAMES, err, required=True)
    sites = _parse_sites(block.pop("sites", None), f"{path}.sites", err)
    omega = _take_quantity(block, "omega", path, "frequency", err,
                           default=1.0)
    if omega is not None and omega <= 0:
        err.add(f"{path}.omega", "must be positive")
    out = {"name": name or "CZ", "sites": sites or {},
           "omega": _tagged(omega or 1.0, "frequency")}
    v = _take_quantity(block, "v", path, "frequency", err)
    ratio = _take_number(block, "v_over_omega", path, err)
    if v is not None and ratio is not None:
        err.add(f"{path}.v", "give either v or v_over_omega, not both")
    if v is not None:
        out["v"] = _tagged(v, "frequency")
    else:
        out["v_over_omega"] = 200.0 if ratio is None else ratio
    params = _take(block, "params")
    if params is not None:
        if not isinstance(params, dict):
            err.add(f"{path}.params", "expected a mapping")
        else:
            clean = {}
            for key in sorted(params):
                val = params[key]
                ok = isinstance(val, bool) or (
                    isinstance(val, (int, float)) and math.isfinite(val))
                if not isinstance(key, str) or not ok:
                    err.add(f"{path}.params.{key}",
                            "protocol parameters must be finite scalars")
                else:
                    clean[key] = val
            if clean:
                out["params"] = clean
    return out


def _parse_gate(node, err: _Collector):
    path = "gate"
    block = _as_block(node, path, err)
    if block is None:
        return None
    out = _parse_gate_spec(block, path, err)
    _reject_unknown(block, path, err)
    return out


def _parse_sweep(node, err: _Collector):
    path = "sweep"
    block = _as_block(node, path, err)
    if block is None:
        return None
    duration = _take_quantity(block, "duration", path, "time", err,
                              required=True)
    if duration is not None and duration <= 0:
        err.add(f"{path}.duration", "must be positive")
    omega_max = _take_quantity(block, "omega_max", path, "frequency", err,
                               required=True)
    if omega_max is not None and omega_max <= 0:
        err.add(f"{path}.omega_max", "must be positive")
    out = {
        "duration": _tagged(duration or 1.0, "time"),
        "omega_max": _tagged(omega_max or 1.0, "frequency"),
        "delta_start": _tagged(_take_quantity(
            block, "delta_start", path, "frequency", err, required=True)
            or 0.0, "frequency"),
        "delta_end": _tagged(_take_quantity(
            block, "delta_end", path, "frequency", err, required=True)
            or 0.0, "frequency"),
        "ramp_fraction": _take_number(block, "ramp_fraction", path, err,
                                      default=0.2, minimum=0.0, maximum=0.5),
        "q": _take_number(block, "q", path, err, default=2, integer=True,
                          minimum=1),
        "n_records": _take_number(block, "n_records", path, err, default=50,
                                  integer=True, minimum=0),
        "method": _take_choice(block, "method", path,
                               ("auto", "unitary"), err, default="auto"),
        "n_trajectories": _take_number(block, "n_trajectories", path, err,
                                       default=200, integer=True, minimum=1),
    }
    initial = _take_string(block, "initial", path, err)
    if initial is not None:
        if set(initial) - {"0", "1"}:
            err.add(f"{path}.initial", "pattern must be a 0/1 string")
        else:
            out["initial"] = initial
    _reject_unknown(block, path, err)
    return out


def _parse_spectrum(node, err: _Collector):
    path = "spectrum"
    block = _as_block(node, path, err)
    if block is None:
        return None
    out = {
        "omega": _tagged(_take_quantity(block, "omega", path, "frequency",
                                        err, default=0.0) or 0.0,
                         "frequency"),
        "delta_start": _tagged(_take_quantity(
            block, "delta_start", path, "frequency", err, required=True)
            or 0.0, "frequency"),
        "delta_end": _tagged(_take_quantity(
            block, "delta_end", path, "frequency", err, required=True)
            or 0.0, "frequency"),
        "n_points": _take_number(block, "n_points", path, err, default=21,
                                 integer=True, minimum=1),
        "solver": _take_choice(block, "solver", path,
                               ("auto", "dense", "sparse"), err,
                               default="auto"),
    }
    qs = _take(block, "qs")
    if qs is None:
        out["qs"] = [2, 3, 4]
    else:
        parsed = _int_list(qs, f"{path}.qs", err, minimum=2)
        out["qs"] = parsed if parsed else [2, 3, 4]
    _reject_unknown(block, path, err)
    return out


def _parse_quench(node, err: _Collector):
    path = "quench"
    block = _as_block(node, path, err)
    if block is None:
        return None
    initial = _take_string(block, "initial", path, err, required=True)
    if initial is not None and set(initial) - {"0", "1"}:
        err.add(f"{path}.initial", "pattern must be a 0/1 string")
        initial = None
    duration = _take_quantity(block, "duration", path, "time", err,
                              required=True)
    if duration is not None and duration <= 0:
        err.add(f"{path}.duration", "must be positive")
    omega = _take_quantity(block, "omega", path, "frequency", err,
                           required=True)
    if omega is not None and omega <= 0:
        err.add(f"{path}.omega", "must be positive")
    out = {
        "initial": initial or "",
        "duration": _tagged(duration or 1.0, "time"),
        "omega": _tagged(omega or 1.0, "frequency"),
        "delta": _tagged(_take_quantity(block, "delta", path, "frequency",
                                        err, default=0.0) or 0.0,
                         "frequency"),
        "n_points": _take_number(block, "n_points", path, err, default=201,
                                 integer=True, minimum=2),
    }
    _reject_unknown(block, path, err)
    return out


def _parse_bench(node, err: _Collector):
    path = "bench"
    block = _as_block(node, path, err)
    if block is None:
        return None
    raw = _take(block, "sources")
    _reject_unknown(block, path, err)
    if not isinstance(raw, (list, tuple)) or not raw:
        err.add(f"{path}.sources", "expected a non-empty list of sources")
        return None
    sources = []
    for i, item in enumerate(raw):
        spath = f"{path}.sources[{i}]"
        sblock = _as_block(item, spath, err)
        if sblock is None:
            continue
        source = _take_choice(sblock, "source", spath, _BENCH_SOURCES, err,
                              required=True)
        entry = {"source": source or "digital"}
        if source == "digital":
            entry["fidelity"] = _take_number(
                sblock, "fidelity", spath, err, required=True,
                minimum=0.0, maximum=1.0)
        elif source == "analog":
            entry["v_max"] = _tagged(_take_quantity(
                sblock, "v_max", spath, "frequency", err, required=True)
                or 1.0, "frequency")
            entry["t_coh"] = _tagged(_take_quantity(
                sblock, "t_coh", spath, "time", err, required=True)
                or 1.0, "time")
        elif source == "lifetime":
            entry["tau_cum"] = _tagged(_take_quantity(
                sblock, "tau_cum", spath, "time", err, required=True)
                or 1.0, "time")
            entry["t1"] = _tagged(_take_quantity(
                sblock, "t1", spath, "time", err, required=True)
                or 1.0, "time")
        elif source == "loss":
            entry["n_atoms"] = _take_number(sblock, "n_atoms", spath, err,
                                            required=True, integer=True,
                                            minimum=1)
            entry["tau_g"] = _tagged(_take_quantity(
                sblock, "tau_g", spath, "time", err, required=True)
                or 1.0, "time")
            entry["t_trap"] = _tagged(_take_quantity(
                sblock, "t_trap", spath, "time", err, required=True)
                or 1.0, "time")
        _reject_unknown(sblock, spath, err)
        sources.append(entry)
    return {"sources": sources}


def _parse_optimize(node, err: _Collector):
    path = "optimize"
    block = _as_block(node, path, err)
    if block is None:
        return None
    objective = _take_choice(block, "objective", path, ("gate", "sweep"),
                             err, required=True)
    out = {
        "objective": objective or "gate",
        "budget": _take_number(block, "budget", path, err, default=200,
                               integer=True, minimum=3),
        "restarts": _take_number(block, "restarts", path, err, default=1,
                                 integer=True, minimum=1),
    }
    raw_vary = _take(block, "vary")
    vary = []
    if not isinstance(raw_vary, (list, tuple)) or not raw_vary:
        err.add(f"{path}.vary", "expected a non-empty list of parameters")
    else:
        for i, item in enumerate(raw_vary):
            vpath = f"{path}.vary[{i}]"
            vblock = _as_block(item, vpath, err)
            if vblock is None:
                continue
            name = _take_string(vblock, "name", vpath, err, required=True)
            low = _take_number(vblock, "low", vpath, err, required=True)
            high = _take_number(vblock, "high", vpath, err, required=True)
            if low is not None and high is not None and not low < high:
                err.add(vpath, f"low must be < high (got {low}, {high})")
            entry = {"name": name or f"x{i}", "low": low or 0.0,
                     "high": high if high is not None else 1.0,
                     "periodic": _take_bool(vblock, "periodic", vpath, err)}
            start = _take_number(vblock, "start", vpath, err)
            if start is not None:
                entry["start"] = start
            _reject_unknown(vblock, vpath, err)
            vary.append(entry)
        names = [v["name"] for v in vary]
        if len(set(names)) != len(names):
            err.add(f"{path}.vary", "parameter names must be unique")
        if out["budget"] < len(vary) + 2:
            err.add(f"{path}.budget",
                    f"must be >= dim + 2 = {len(vary) + 2}")
        if any("start" in v for v in vary) and \
                not all("start" in v for v in vary):
            err.add(f"{path}.vary", "give start for all parameters or none")
    out["vary"] = vary
    if out["objective"] == "gate":
        gblock = _as_block(block.pop("gate", None), f"{path}.gate", err)
        if gblock is None or not gblock:
            err.add(f"{path}.gate", "gate objective needs a gate block")
        else:
            out["gate"] = _parse_gate_spec(gblock, f"{path}.gate", err)
            _reject_unknown(gblock, f"{path}.gate", err)
        out["leakage_weight"] = _take_number(
            block, "leakage_weight", path, err, default=1.0, minimum=0.0)
        target = _take_string(block, "target", path, err)
        if target is not None:
            out["target"] = target
    else:
        out["duration"] = _tagged(_take_quantity(
            block, "duration", path, "time", err, required=True) or 1.0,
            "time")
        out["target"] = _take_choice(block, "target", path,
                                     ("ghz", "ordered"), err, default="ghz")
        out["q"] = _take_number(block, "q", path, err, default=2,
                                integer=True, minimum=1)
        out["step_scale"] = _take_number(block, "step_scale", path, err,
                                         default=1.0, minimum=0.01)
    _reject_unknown(block, path, err)
    return out


_TASK_PARSERS = {
    "gate": _parse_gate,
    "sweep": _parse_sweep,
    "spectrum": _parse_spectrum,
    "quench": _parse_quench,
    "bench": _parse_bench,
    "optimize": _parse_optimize,
}

#: tasks that operate on a register / many-body model
_MANYBODY_TASKS = ("sweep", "spectrum", "quench")


# ---------------------------------------------------------------------------
# ExperimentConfig
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExperimentConfig:
    """Canonical, fully validated experiment description.

    ``data`` is the canonical mapping (defaults materialized, units
    native); two configs are equal iff their canonical mappings are.
    """

    data: dict

    def __post_init__(self):
        object.__setattr__(self, "data", copy.deepcopy(self.data))

    def __eq__(self, other):
        if not isinstance(other, ExperimentConfig):
            return NotImplemented
        return self.data == other.data

    @property
    def task(self) -> str:
        return next(k for k in TASKS if k in self.data)

    @property
    def task_block(self) -> dict:
        return copy.deepcopy(self.data[self.task])

    @property
    def seed(self) -> int:
        return int(self.data["seed"])

    @property
    def outdir(self) -> str:
        return str(self.data["outdir"])

    def block(self, name: str) -> dict | None:
        node = self.data.get(name)
        return copy.deepcopy(node) if node is not None else None


def _value(node) -> float:
    """Numeric value of a canonical tagged quantity."""
    return float(node["value"])


def parse_config(text: str) -> ExperimentConfig:
    """Parse and validate config text; collects *all* errors.

    Raises
    ------
    ConfigError
        Listing every problem found (unknown keys, missing unit tags,
        unresolved names, out-of-range values).
    """
    err = _Collector()
    try:
        root = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        raise ConfigError([f"(syntax): {exc}"]) from exc
    if root is None:
        root = {}
    if not isinstance(root, dict):
        raise ConfigError(["(top level): expected a mapping"])
    root = dict(root)

    tasks_present = [k for k in TASKS if k in root]
    if len(tasks_present) != 1:
        err.add("(top level)",
                f"expected exactly one task block out of {list(TASKS)}, "
                f"found {tasks_present or 'none'}")
        raise ConfigError(err.errors)
    task = tasks_present[0]

    data: dict = {}
    task_node = root.pop(task)
    parsed_task = _TASK_PARSERS[task](task_node, err)
    if parsed_task is not None:
        data[task] = parsed_task

    # number of sites referenced by a gate task, for geometry defaults
    inferred = None
    if task == "gate" and parsed_task and parsed_task.get("sites"):
        sites = parsed_task["sites"]
        allsites = list(sites.get("controls", ())) + \
            list(sites.get("targets", ()))
        if allsites:
            inferred = max(allsites) + 1
    if task == "optimize" and parsed_task and parsed_task.get("gate"):
        sites = parsed_task["gate"].get("sites", {})
        allsites = list(sites.get("controls", ())) + \
            list(sites.get("targets", ()))
        if allsites:
            inferred = max(allsites) + 1
    if task == "quench" and parsed_task and parsed_task.get("initial"):
        inferred = len(parsed_task["initial"])

    needs_register = task in _MANYBODY_TASKS or task == "gate" or (
        task == "optimize")
    geometry = None
    if needs_register:
        geometry = _parse_geometry(root.pop("geometry", None), err, inferred)
        if geometry is not None:
            data["geometry"] = geometry
    elif "geometry" in root:
        geometry = _parse_geometry(root.pop("geometry"), err, inferred)
        if geometry is not None:
            data["geometry"] = geometry

    default_scheme = "gg_r" if task in ("gate", "optimize") else "gr"
    if needs_register or "levels" in root:
        levels = _parse_levels(root.pop("levels", None), err, default_scheme)
        if levels is not None:
            data["levels"] = levels

    needs_interactions = task in _MANYBODY_TASKS or (
        task == "optimize" and parsed_task
        and parsed_task.get("objective") == "sweep")
    if "interactions" in root:
        inter = _parse_interactions(root.pop("interactions"), err)
        if inter is not None:
            data["interactions"] = inter
    elif needs_interactions:
        err.add("interactions", "required block is missing for this task")

    if "noise" in root:
        noise = _parse_noise(root.pop("noise"), err)
        if noise is not None:
            data["noise"] = noise

    data["seed"] = _take_number(root, "seed", "(top level)", err, default=0,
                                integer=True, minimum=0)
    data["outdir"] = _take_string(root, "outdir", "(top level)", err,
                                  default="runs")
    _reject_unknown(root, "(top level)", err)

    # cross-block resolution checks
    if geometry and "n_sites" in geometry:
        n = geometry["n_sites"]
        if inferred is not None and task != "quench" and inferred > n:
            err.add("geometry.n_sites",
                    f"task references site {inferred - 1} but the lattice "
                    f"has only {n} sites")
        if task == "quench" and parsed_task and parsed_task.get("initial") \
                and len(parsed_task["initial"]) != n:
            err.add("quench.initial",
                    f"pattern length {len(parsed_task['initial'])} != "
                    f"n_sites {n}")
        if task == "sweep" and parsed_task and parsed_task.get("q", 0) >= n:
            err.add("sweep.q", f"q must be < n_sites = {n}")
        if task == "spectrum" and parsed_task and \
                any(q >= n for q in parsed_task.get("qs", [])):
            err.add("spectrum.qs", f"every q must be < n_sites = {n}")

    if err.errors:
        raise ConfigError(err.errors)
    return ExperimentConfig(data)


def load_config(path) -> ExperimentConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_config(fh.read())


def serialize_config(config: ExperimentConfig) -> str:
    """Canonical YAML; ``parse_config(serialize_config(c)) == c``."""
    return yaml.safe_dump(config.data, sort_keys=True,
                          default_flow_style=False, allow_unicode=True)


def config_hash(config: ExperimentConfig) -> str:
    """sha256 of the canonical serialization (whitespace-invariant)."""
    digest = hashlib.sha256(
        serialize_config(config).encode("utf-8")).hexdigest()
    return f"sha256:{digest}"


# ---------------------------------------------------------------------------
# Builders: canonical mapping -> simulator objects
# ---------------------------------------------------------------------------


def build_register(config: ExperimentConfig) -> Register:
    geo = config.block("geometry")
    if geo is None:
        raise ValueError("config has no geometry block")
    scheme = SCHEMES[(config.block("levels") or {"scheme": "gr"})["scheme"]]
    counts = tuple(geo["shape"]) if "shape" in geo else geo["n_sites"]
    extra = {}
    if "offset" in geo:
        extra["offset"] = _value(geo["offset"])
    if "tilt_rad" in geo:
        extra["tilt"] = float(geo["tilt_rad"])
    return build_lattice(geo["kind"], counts, _value(geo["spacing"]),
                         scheme=scheme, **extra)


def build_noise(config: ExperimentConfig) -> NoiseModel | None:
    block = config.block("noise")
    if not block:
        return None
    kwargs = {}
    if "t1" in block:
        kwargs["t1"] = _value(block["t1"])
    if "branch_to_ground" in block:
        kwargs["branch_to_ground"] = float(block["branch_to_ground"])
    for key in ("dephasing_gamma", "gamma_a", "gamma_b", "sigma_doppler"):
        if key in block:
            kwargs[key] = _value(block[key])
    return NoiseModel(**kwargs)


def build_model(config: ExperimentConfig, register: Register,
                *, omega: float = 0.0, delta: float = 0.0) -> ManyBodyModel:
    """Many-body model with the configured power-law coupling table.

    ``interactions.v_nn`` fixes the channel strength at the separation
    of sites (0, 1); all other pairs follow the physical power law.
    Couplings weaker than ``truncate * v_nn`` are dropped (the pxp
    default keeps nearest neighbours only, defining the blockade
    graph).
    """
    inter = config.block("interactions")
    if inter is None:
        raise ValueError("config has no interactions block")
    if register.n_sites < 2:
        raise ValueError("interacting model needs at least two sites")
    levels = tuple(inter.get("levels", ("r", "r")))
    v_nn = _value(inter["v_nn"])
    cp = coupling_for(register, 0, 1, v_nn, kind=inter["kind"],
                      levels=levels)
    table = coupling_table(register, cp)
    cut = float(inter.get("truncate", 0.0)) * abs(v_nn)
    if cut > 0.0:
        table = np.where(np.abs(table) >= cut, table, 0.0)
    return ManyBodyModel(inter["model"], table, omega=omega, delta=delta,
                         anisotropy=float(inter.get("anisotropy", 0.0)))


def task_seed(master_seed: int, task: str) -> int:
    """Stable per-task stream label derived from the master seed."""
    digest = hashlib.sha256(f"{master_seed}:{task}".encode()).digest()
    return int.from_bytes(digest[:4], "big")


def gate_params(spec: dict) -> dict:
    """Protocol parameter mapping of a canonical gate sub-config."""
    omega = _value(spec["omega"])
    params = {"omega": omega}
    if "v" in spec:
        params["v"] = _value(spec["v"])
    else:
        params["v"] = float(spec["v_over_omega"]) * omega
    params.update(spec.get("params", {}))
    return params
