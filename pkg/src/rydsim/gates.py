"""Named gate protocols, ideal gate matrices, and process extraction.

Protocols are pulse-schedule constructors for the native entangling
gates of Rydberg-interacting qubits: blockade-conditioned rotations
(CUxy and its parallel variant), the phase-accumulation and blockade
controlled-phase gates, the two-pulse parallel CZ, the dipolar-exchange
XY family, the asymmetric-blockade CkZ, and the derived CNOT/Toffoli
constructions.  ``extract_process`` propagates computational basis
states through a protocol and reports the realized operator, diagonal
phases, leakage, and process fidelity.

Conventions: qubit order in extracted operators is controls before
targets (matching the control-first basis of the ideal matrices);
reported diagonal phases are relative to the all-zeros state, i.e.
Phi_{0...0} = 0 by definition.
"""

from __future__ import annotations

import cmath
import math
import warnings
from dataclasses import dataclass, field
from typing import Mapping, NamedTuple, Sequence

import numpy as np
import scipy.linalg

from . import operators as ops
from .dynamics import (HamiltonianContext, NoiseModel, QuantumState,
                       _space_symbols, propagate)
from .hamiltonian import DriveSegment, PulseSchedule, ScheduleStep
from .interactions import PairCoupling, pair_interaction
from .register import Register, pair_geometry

__all__ = [
    "GateProtocol",
    "GateReport",
    "PhaseEquivalence",
    "single_qubit_unitary",
    "u_xy",
    "rz_matrix",
    "hadamard_matrix",
    "ideal_gate",
    "build_protocol",
    "extract_process",
    "equivalent_up_to_phases",
    "coupling_for",
    "population_trace",
]

#: protocols warn (not fail) below this blockade ratio V/Omega
MIN_BLOCKADE_RATIO = 10.0

PROTOCOL_NAMES = ("CUxy", "pCUxy", "CPHASE", "CZ", "pCZ", "XY", "CkZ",
                  "CNOT", "Toffoli")


# ---------------------------------------------------------------------------
# single-qubit matrices


def single_qubit_unitary(omega: float, delta: float, phi: float,
                         tau: float) -> np.ndarray:
    """Exact 2x2 evolution of a constant drive for time tau.

    Equals ``exp(i*delta*tau/2) * exp(-i*(W*tau/2) v.sigma)`` with the
    generalized Rabi frequency ``W = sqrt(omega^2 + delta^2)`` and axis
    ``v = (omega*cos(phi), -omega*sin(phi), delta)/W``.
    """
    if tau < 0:
        raise ValueError("tau must be non-negative")
    w = math.hypot(omega, delta)
    if w == 0.0:
        return np.eye(2, dtype=complex)
    half = 0.5 * w * tau
    vx = omega * math.cos(phi) / w
    vy = -omega * math.sin(phi) / w
    vz = delta / w
    axis = vx * ops.PAULI_X + vy * ops.PAULI_Y + vz * ops.PAULI_Z
    u = math.cos(half) * np.eye(2) - 1j * math.sin(half) * axis
    return cmath.exp(0.5j * delta * tau) * u


def u_xy(theta: float, phi: float) -> np.ndarray:
    """Resonant rotation U_xy(theta, phi) about an equatorial axis."""
    c = math.cos(0.5 * theta)
    s = math.sin(0.5 * theta)
    return np.array([[c, -1j * s * cmath.exp(1j * phi)],
                     [-1j * s * cmath.exp(-1j * phi), c]])


def rz_matrix(theta: float) -> np.ndarray:
    """diag(e^{-i theta/2}, e^{i theta/2}), realized by the composite
    U_xy(pi/2, pi/2) U_xy(theta, 0) U_xy(pi/2, -pi/2) up to global phase."""
    return np.diag([cmath.exp(-0.5j * theta), cmath.exp(0.5j * theta)])


def hadamard_matrix() -> np.ndarray:
    return np.array([[1, 1], [1, -1]], dtype=complex) / math.sqrt(2)


# composite pulse decompositions, listed in execution (time) order
_RZ_COMPOSITE = lambda theta: ((math.pi / 2, -math.pi / 2), (theta, 0.0),
                               (math.pi / 2, math.pi / 2))
_HADAMARD_COMPOSITE = ((math.pi / 2, -math.pi / 2), (math.pi, 0.0))


# ---------------------------------------------------------------------------
# ideal gates


def ideal_gate(name: str, params: Mapping | None = None) -> np.ndarray:
    """Exact matrix of a named gate in the control-first product basis."""
    p = dict(params or {})
    if name == "CUxy":
        theta, phi = p.get("theta", math.pi), p.get("phi", 0.0)
        out = np.eye(4, dtype=complex)
        out[:2, :2] = u_xy(theta, phi)
        return out
    if name == "pCUxy":
        theta, phi = p.get("theta", math.pi), p.get("phi", 0.0)
        s = -1j * math.sin(0.5 * theta) / math.sqrt(2)
        c2 = math.cos(0.25 * theta) ** 2
        s2 = math.sin(0.25 * theta) ** 2
        return np.array([
            [math.cos(0.5 * theta), s * cmath.exp(1j * phi),
             s * cmath.exp(1j * phi), 0],
            [s * cmath.exp(-1j * phi), c2, -s2, 0],
            [s * cmath.exp(-1j * phi), -s2, c2, 0],
            [0, 0, 0, 1]])
    if name == "CPHASE":
        phases = [p.get("phi00", 0.0), p.get("phi01", 0.0),
                  p.get("phi10", 0.0), p.get("phi11", 0.0)]
        return np.diag([cmath.exp(1j * x) for x in phases])
    if name == "CZ":
        return np.diag([1.0, 1.0, 1.0, -1.0]).astype(complex)
    if name == "CkZ":
        k = int(p.get("k", 2))
        if k < 1:
            raise ValueError("k must be at least 1")
        d = 2 ** (k + 1)
        out = np.eye(d, dtype=complex)
        out[d - 1, d - 1] = -1.0
        return out
    if name == "XY":
        theta = p.get("theta", math.pi)
        c = math.cos(0.5 * theta)
        s = -1j * math.sin(0.5 * theta)
        out = np.eye(4, dtype=complex)
        out[1, 1] = out[2, 2] = c
        out[1, 2] = out[2, 1] = s
        return out
    if name == "CNOT":
        out = np.eye(4, dtype=complex)
        out[2:, 2:] = np.array([[0, 1], [1, 0]])
        return out
    if name == "Toffoli":
        out = np.eye(8, dtype=complex)
        out[6:, 6:] = np.array([[0, 1], [1, 0]])
        return out
    raise ValueError(f"unknown gate {name!r}")


# ---------------------------------------------------------------------------
# protocols


@dataclass(frozen=True)
class GateProtocol:
    """A named pulse sequence acting on specific register sites.

    ``controls`` and ``targets`` fix the qubit order of the extracted
    operator (controls first).  ``couplings`` lists the interaction
    channels the protocol requires; ``pair_overrides`` replaces the
    channel list for specific site pairs (an empty tuple switches a
    pair off, modelling an engineered asymmetric blockade).
    """

    name: str
    params: Mapping
    schedule: PulseSchedule
    couplings: tuple[PairCoupling, ...]
    controls: tuple[int, ...]
    targets: tuple[int, ...]
    pair_overrides: Mapping[tuple[int, int], tuple[PairCoupling, ...]] = \
        field(default_factory=dict)

    def __post_init__(self):
        if any(st.duration < 0 for st in self.schedule.steps):
            raise ValueError("schedule durations must be non-negative")
        if not self.qubits:
            raise ValueError("protocol involves no qubits")

    @property
    def qubits(self) -> tuple[int, ...]:
        return self.controls + self.targets

    @property
    def tau_g(self) -> float:
        return self.schedule.total_duration


@dataclass(frozen=True)
class GateReport:
    """Extraction result for one protocol run.

    ``operator`` is the realized map restricted to the computational
    subspace, global phase fixed so the all-zeros diagonal entry is
    real positive.  ``phases`` maps computational basis strings to the
    diagonal phase relative to the all-zeros state.  ``leakage`` is the
    population left outside the computational subspace, averaged over
    basis inputs.
    """

    name: str
    operator: np.ndarray
    phases: Mapping[str, float]
    fidelity: float
    leakage: float
    tau_g: float

    def __post_init__(self):
        if not -1e-9 <= self.fidelity <= 1.0 + 1e-9:
            raise ValueError(f"fidelity {self.fidelity} outside [0, 1]")
        if not -1e-9 <= self.leakage <= 1.0 + 1e-9:
            raise ValueError(f"leakage {self.leakage} outside [0, 1]")

    def phase(self, label: str) -> float:
        return self.phases[label]


def coupling_for(register: Register, site_a: int, site_b: int, v: float,
                 kind: str = "diagonal_vdw",
                 levels: tuple[str, str] = ("r", "r")) -> PairCoupling:
    """Coupling whose strength at the (a, b) separation equals ``v``.

    ``v`` is the interaction energy in rad/us at the current distance;
    the returned channel keeps the physical power law, so other pairs
    in the register see the corresponding scaled interaction.
    """
    p = 3 if kind == "exchange_dipolar" else 6
    r, _ = pair_geometry(register, site_a, site_b)
    return PairCoupling(kind, -v * r ** p, p, levels=tuple(levels))


def _normalize_sites(sites) -> tuple[tuple[int, ...], tuple[int, ...]]:
    if isinstance(sites, Mapping):
        controls = tuple(sites.get("controls", ()))
        targets = tuple(sites.get("targets", ()))
    else:
        controls, targets = tuple(sites[0]), tuple(sites[1])
    if set(controls) & set(targets):
        raise ValueError("control and target sets overlap")
    return controls, targets


def _require_levels(register: Register, site: int, labels: Sequence[str]):
    for lab in labels:
        register.schemes[site].index(lab)


def _resolve_coupling(params: Mapping, register: Register, site_a: int,
                      site_b: int, omega: float, *,
                      kind: str = "diagonal_vdw",
                      levels: tuple[str, str] = ("r", "r")) -> PairCoupling:
    """Coupling from params: explicit instance, or strength ``v``."""
    if "coupling" in params:
        return params["coupling"]
    if "v" not in params:
        raise ValueError("params needs either 'coupling' or 'v'")
    cp = coupling_for(register, site_a, site_b, float(params["v"]), kind,
                      levels)
    if kind != "exchange_dipolar":
        r, _ = pair_geometry(register, site_a, site_b)
        ratio = abs(pair_interaction(cp, (r, 0.0))) / max(abs(omega), 1e-30)
        if ratio < MIN_BLOCKADE_RATIO:
            warnings.warn(
                f"blockade ratio V/Omega = {ratio:.3g} below "
                f"{MIN_BLOCKADE_RATIO}", stacklevel=3)
    return cp


def _composite_steps(site: int, pulses, omega: float,
                     transition=("g0", "g1")) -> list[ScheduleStep]:
    """One schedule step per (theta, phi) resonant pulse on one site."""
    steps = []
    for theta, phi in pulses:
        steps.append(ScheduleStep((DriveSegment(
            (site,), transition, omega, 0.0, phi, theta / omega),)))
    return steps


def build_protocol(name: str, params: Mapping, register: Register,
                   sites) -> GateProtocol:
    """Construct the pulse schedule of a named gate protocol.

    Parameters
    ----------
    name : str
        One of ``CUxy, pCUxy, CPHASE, CZ, pCZ, XY, CkZ, CNOT, Toffoli``.
        ``CPHASE`` builds the transfer-wait-transfer phase-accumulation
        sequence; ``CZ`` the three-pulse blockade sequence; ``pCZ`` the
        two-pulse parallel blockade gate with the published parameter
        set.
    params : mapping
        Protocol parameters.  All protocols take ``omega`` (rad/us).
        Interaction strength comes from ``coupling`` (a PairCoupling)
        or ``v`` (rad/us at the participating pair's separation).
    register : Register
    sites : mapping or (controls, targets) pair
        Participating sites, e.g. ``{"controls": (0,), "targets": (1,)}``.

    Returns
    -------
    GateProtocol
    """
    params = dict(params)
    controls, targets = _normalize_sites(sites)
    omega = float(params.get("omega", 1.0))
    if omega <= 0:
        raise ValueError("omega must be positive")

    if name == "CUxy":
        (c,), (t,) = controls, targets
        theta = float(params.get("theta", math.pi))
        phi = float(params.get("phi", 0.0))
        _require_levels(register, t, ("g0", "r"))
        _require_levels(register, c, ("r",))
        tau_g = theta / omega
        if params.get("compensate_phase", True) and "coupling" not in params \
                and "v" not in params:
            ratio = float(params.get("min_blockade_ratio", 50.0))
            m = int(params.get("m", 0)) or max(
                1, math.ceil(ratio * theta / (2 * math.pi)))
            params["v"] = 2 * math.pi * m / tau_g
        cp = _resolve_coupling(params, register, c, t, omega)
        seg = DriveSegment((t,), ("g0", "r"), omega, 0.0, phi, tau_g)
        schedule = PulseSchedule((ScheduleStep((seg,)),))
        return GateProtocol(name, params, schedule, (cp,), (c,), (t,))

    if name == "pCUxy":
        qubits = controls + targets
        if len(qubits) != 2:
            raise ValueError("pCUxy acts on exactly two sites")
        a, b = qubits
        theta = float(params.get("theta", math.pi))
        phi = float(params.get("phi", 0.0))
        for q in qubits:
            _require_levels(register, q, ("g0", "r"))
        tau_g = theta / (math.sqrt(2) * omega)
        if params.get("compensate_phase", True) and "coupling" not in params \
                and "v" not in params:
            ratio = float(params.get("min_blockade_ratio", 50.0))
            m = int(params.get("m", 0)) or max(
                1, math.ceil(ratio * omega * tau_g / (2 * math.pi)))
            params["v"] = 2 * math.pi * m / tau_g
        cp = _resolve_coupling(params, register, a, b, omega)
        seg = DriveSegment(qubits, ("g0", "r"), omega, 0.0, phi, tau_g)
        schedule = PulseSchedule((ScheduleStep((seg,)),))
        return GateProtocol(name, params, schedule, (cp,), controls, targets)

    if name == "CPHASE":
        qubits = controls + targets
        if len(qubits) != 2:
            raise ValueError("CPHASE acts on exactly two sites")
        a, b = qubits
        tau_2 = float(params["tau_2"])
        ideal_transfer = bool(params.get("ideal_transfer", True))
        for q in qubits:
            _require_levels(register, q, ("g1", "r"))
        cp = _resolve_coupling(params, register, a, b, omega)
        tau_1 = math.pi / omega
        pi_pulse = DriveSegment(qubits, ("r", "g1"), omega, 0.0, 0.0, tau_1)
        wait = DriveSegment(qubits, ("r", "g1"), 0.0, 0.0, 0.0, tau_2)
        schedule = PulseSchedule((
            ScheduleStep((pi_pulse,), interactions_active=not ideal_transfer),
            ScheduleStep((wait,), interactions_active=True),
            ScheduleStep((pi_pulse,), interactions_active=not ideal_transfer),
        ))
        return GateProtocol(name, params, schedule, (cp,), controls, targets)

    if name == "CZ":
        (c,), (t,) = controls, targets
        for q in (c, t):
            _require_levels(register, q, ("g1", "r"))
        cp = _resolve_coupling(params, register, c, t, omega)
        tau_1 = math.pi / omega
        schedule = PulseSchedule((
            ScheduleStep((DriveSegment((c,), ("r", "g1"), omega, 0.0, 0.0,
                                       tau_1),)),
            ScheduleStep((DriveSegment((t,), ("r", "g1"), omega, 0.0, 0.0,
                                       2 * tau_1),)),
            ScheduleStep((DriveSegment((c,), ("r", "g1"), omega, 0.0, 0.0,
                                       tau_1),)),
        ))
        return GateProtocol(name, params, schedule, (cp,), (c,), (t,))

    if name == "pCZ":
        qubits = controls + targets
        if len(qubits) != 2:
            raise ValueError("pCZ acts on exactly two sites")
        a, b = qubits
        for q in qubits:
            _require_levels(register, q, ("g1", "r"))
        delta = float(params.get("delta_over_omega", 0.377)) * omega
        phi2 = float(params.get("phi", 3.90242))
        tau_g = float(params.get("tau_g", 2.7328 * math.pi / omega))
        cp = _resolve_coupling(params, register, a, b, omega)
        half = 0.5 * tau_g
        schedule = PulseSchedule((
            ScheduleStep((DriveSegment(qubits, ("r", "g1"), omega, delta,
                                       0.0, half),)),
            ScheduleStep((DriveSegment(qubits, ("r", "g1"), omega, delta,
                                       phi2, half),)),
        ))
        return GateProtocol(name, params, schedule, (cp,), controls, targets)

    if name == "XY":
        qubits = controls + targets
        if len(qubits) != 2:
            raise ValueError("XY acts on exactly two sites")
        a, b = qubits
        theta = float(params.get("theta", math.pi))
        if theta <= 0:
            raise ValueError("theta must be positive")
        for q in qubits:
            _require_levels(register, q, ("g0", "g1", "r", "rp"))
        cp = _resolve_coupling(params, register, a, b, omega,
                               kind="exchange_dipolar", levels=("r", "rp"))
        r, th = pair_geometry(register, a, b)
        v = pair_interaction(cp, (r, th))
        if v <= 0:
            raise ValueError("XY protocol needs a positive exchange strength")
        tau_2 = theta / v
        m = int(params.get("m", 0)) or max(1, math.ceil(2 * theta / math.pi))
        omega_2 = 2 * math.pi * m / tau_2
        tau_1 = math.pi / omega
        schedule = PulseSchedule((
            ScheduleStep((DriveSegment(qubits, ("r", "g0"), omega, 0.0,
                                       math.pi, tau_1),)),
            ScheduleStep((DriveSegment(qubits, ("rp", "g1"), omega_2, 0.0,
                                       math.pi, tau_2),)),
            ScheduleStep((DriveSegment(qubits, ("rp", "g1"), omega_2, 0.0,
                                       0.0, tau_2),)),
            ScheduleStep((DriveSegment(qubits, ("r", "g0"), omega, 0.0,
                                       0.0, tau_1),)),
        ))
        params.setdefault("m", m)
        return GateProtocol(name, params, schedule, (cp,), controls, targets)

    if name == "CkZ":
        (t,) = targets
        if not controls:
            raise ValueError("CkZ needs at least one control")
        for q in controls:
            _require_levels(register, q, ("g0", "r"))
        _require_levels(register, t, ("g1", "r"))
        cp = _resolve_coupling(params, register, controls[0], t, omega)
        overrides = {}
        if params.get("asymmetric", True):
            for i, ci in enumerate(controls):
                for cj in controls[i + 1:]:
                    overrides[(min(ci, cj), max(ci, cj))] = ()
        tau_1 = math.pi / omega
        up = ScheduleStep(tuple(
            DriveSegment((c,), ("r", "g0"), omega, 0.0, 0.0, tau_1)
            for c in controls))
        down = ScheduleStep(tuple(
            DriveSegment((c,), ("r", "g0"), omega, 0.0, math.pi, tau_1)
            for c in controls))
        mid = ScheduleStep((DriveSegment((t,), ("r", "g1"), omega, 0.0, 0.0,
                                         2 * tau_1),))
        schedule = PulseSchedule((up, mid, down))
        return GateProtocol(name, params, schedule, (cp,), controls, (t,),
                            overrides)

    if name == "CNOT":
        (c,), (t,) = controls, targets
        variant = params.get("variant", "hadamard")
        if variant == "hadamard":
            base = build_protocol("CZ", params, register, ((c,), (t,)))
            h_t = _composite_steps(t, _HADAMARD_COMPOSITE,
                                   float(params.get("omega", 1.0)))
            z_both = _composite_steps(c, _RZ_COMPOSITE(math.pi), omega) + \
                _composite_steps(t, _RZ_COMPOSITE(math.pi), omega)
            steps = tuple(h_t) + base.schedule.steps + tuple(z_both) + \
                tuple(h_t)
            schedule = PulseSchedule(steps)
            return GateProtocol(name, params, schedule, base.couplings,
                                (c,), (t,))
        if variant == "swap":
            for q in (c, t):
                _require_levels(register, q, ("g0", "g1", "r"))
            cp = _resolve_coupling(params, register, c, t, omega)
            tau_1 = math.pi / omega
            schedule = PulseSchedule((
                ScheduleStep((DriveSegment((c,), ("r", "g0"), omega, 0.0,
                                           0.0, tau_1),)),
                ScheduleStep((DriveSegment((t,), ("r", "g1"), omega, 0.0,
                                           0.0, tau_1),)),
                ScheduleStep((DriveSegment((t,), ("r", "g0"), omega, 0.0,
                                           0.0, tau_1),)),
                ScheduleStep((DriveSegment((t,), ("r", "g1"), omega, 0.0,
                                           0.0, tau_1),)),
                ScheduleStep((DriveSegment((c,), ("r", "g0"), omega, 0.0,
                                           0.0, tau_1),)),
            ))
            return GateProtocol(name, params, schedule, (cp,), (c,), (t,))
        raise ValueError(f"unknown CNOT variant {variant!r}")

    if name == "Toffoli":
        if len(controls) != 2 or len(targets) != 1:
            raise ValueError("Toffoli needs two controls and one target")
        t = targets[0]
        base = build_protocol("CkZ", {**params, "k": 2}, register,
                              (controls, targets))
        h_t = _composite_steps(t, _HADAMARD_COMPOSITE, omega)
        schedule = PulseSchedule(tuple(h_t) + base.schedule.steps +
                                 tuple(h_t))
        return GateProtocol(name, params, schedule, base.couplings,
                            controls, targets, base.pair_overrides)

    raise ValueError(f"unknown protocol {name!r}")


# ---------------------------------------------------------------------------
# process extraction


#: diagonal entries below this magnitude carry no meaningful phase
_DIAG_MIN = 0.1


def _wrap_angle(x: float) -> float:
    return (x + math.pi) % (2 * math.pi) - math.pi


def _diagonal_phases(diag: np.ndarray, labels: Sequence[str]) -> dict:
    """Diagonal phases relative to the all-zeros entry when it survives."""
    ref = cmath.phase(diag[0]) if abs(diag[0]) > _DIAG_MIN else 0.0
    return {lab: _wrap_angle(cmath.phase(diag[b]) - ref)
            for b, lab in enumerate(labels) if abs(diag[b]) > _DIAG_MIN}


def _basis_indices(register: Register, qubits: Sequence[int],
                   dims: tuple[int, ...]) -> np.ndarray:
    """Product-space index of every computational basis state.

    Non-participating sites sit in their first listed level.
    """
    n_q = len(qubits)
    out = np.empty(2 ** n_q, dtype=int)
    for b in range(2 ** n_q):
        idx = [0] * register.n_sites
        for i, q in enumerate(qubits):
            bit = (b >> (n_q - 1 - i)) & 1
            idx[q] = register.schemes[q].computational[bit]
        out[b] = ops.index_of(idx, dims)
    return out


def _ideal_target(protocol: GateProtocol, phases: Mapping[str, float],
                  register: Register) -> np.ndarray | None:
    """Reference matrix used for the fidelity entry of the report."""
    name, p = protocol.name, dict(protocol.params)
    if name in ("CUxy", "pCUxy", "XY"):
        return ideal_gate(name, p)
    if name == "CZ":
        return ideal_gate("CPHASE", {"phi00": 0.0, "phi01": math.pi,
                                     "phi10": math.pi, "phi11": math.pi})
    if name == "CPHASE":
        a, b = protocol.qubits
        v = pair_interaction(protocol.couplings[0],
                             pair_geometry(register, a, b))
        return ideal_gate("CPHASE", {"phi00": 0.0, "phi01": math.pi,
                                     "phi10": math.pi,
                                     "phi11": -v * float(p["tau_2"])})
    if name == "pCZ":
        phi1 = 0.5 * (phases.get("01", 0.0) + phases.get("10", 0.0))
        return ideal_gate("CPHASE", {"phi00": 0.0, "phi01": phi1,
                                     "phi10": phi1,
                                     "phi11": 2 * phi1 - math.pi})
    if name == "CkZ":
        return ideal_gate("CkZ", {"k": len(protocol.controls)})
    if name == "CNOT":
        return ideal_gate("CNOT")
    if name == "Toffoli":
        return ideal_gate("Toffoli")
    return None


def extract_process(protocol: GateProtocol, register: Register,
                    noise: NoiseModel | None = None, *,
                    seed: int = 0) -> GateReport:
    """Propagate computational basis states and characterize the gate.

    Noiseless runs build the exact subspace operator from the basis
    columns (cross-checked against the propagated uniform
    superposition) and report the leakage-normalized process fidelity
    ``|Tr(U_ideal^dag U_sub)|^2 / (d * Tr(U_sub^dag U_sub))``.

    With noise, the channel's action on every basis coherence is
    reconstructed from propagated pure-state preparations, giving the
    tomographic process fidelity; the reported operator is then the
    near-unitary coherence reconstruction (meaningful for channels
    close to a unitary).
    """
    qubits = protocol.qubits
    n_q = len(qubits)
    d = 2 ** n_q
    has_sink = noise is not None and noise.needs_sink
    context = HamiltonianContext(register, protocol.couplings,
                                 pair_overrides=protocol.pair_overrides)
    dims = context.space_dims(has_sink)
    basis_idx = _basis_indices(register, qubits, dims)
    full_dim = ops.total_dim(dims)

    def prepare(vec_amplitudes) -> QuantumState:
        vec = np.zeros(full_dim, dtype=complex)
        vec[basis_idx] = vec_amplitudes
        return QuantumState.from_vector(vec, register, has_sink=has_sink)

    def run(state: QuantumState) -> QuantumState:
        return propagate(state, protocol.schedule, context, noise, seed=seed)

    labels = [format(b, f"0{n_q}b") for b in range(d)]

    if noise is None or not noise.has_jumps:
        columns = []
        leak = []
        for b in range(d):
            amp = np.zeros(d, dtype=complex)
            amp[b] = 1.0
            out = run(prepare(amp)).data
            col = out[basis_idx]
            columns.append(col)
            leak.append(1.0 - float(np.sum(np.abs(col) ** 2)))
        u_sub = np.stack(columns, axis=1)
        # linearity cross-check through the uniform superposition
        plus = run(prepare(np.full(d, 1.0 / math.sqrt(d)))).data[basis_idx]
        err = float(np.linalg.norm(plus - u_sub @ np.full(d, 1 / math.sqrt(d))))
        if err > 1e-8:
            raise RuntimeError(
                f"superposition propagation deviates from linearity by {err}")
        # fix the global phase on the dominant diagonal entry (falling
        # back to the largest matrix element for off-diagonal gates)
        dmag = np.abs(np.diag(u_sub))
        if dmag.max() > _DIAG_MIN:
            anchor = u_sub[int(np.argmax(dmag)), int(np.argmax(dmag))]
        else:
            anchor = u_sub.flat[int(np.argmax(np.abs(u_sub)))]
        u_sub = u_sub * cmath.exp(-1j * cmath.phase(anchor))
        phases = _diagonal_phases(np.diag(u_sub), labels)
        ideal = _ideal_target(protocol, phases, register)
        if ideal is None:
            fidelity = float("nan")
        else:
            num = abs(np.trace(ideal.conj().T @ u_sub)) ** 2
            den = d * float(np.real(np.trace(u_sub.conj().T @ u_sub)))
            fidelity = min(1.0, num / den)
        return GateReport(protocol.name, u_sub, phases, fidelity,
                          float(np.mean(leak)), protocol.tau_g)

    # --- noisy: reconstruct the channel action on basis coherences -------
    rho_out = {}
    for b in range(d):
        amp = np.zeros(d, dtype=complex)
        amp[b] = 1.0
        rho_out[(b, b)] = run(prepare(amp)).data
    for a in range(d):
        for b in range(a + 1, d):
            amp = np.zeros(d, dtype=complex)
            amp[a] = amp[b] = 1.0 / math.sqrt(2)
            rho_p = run(prepare(amp)).data
            amp[b] = 1j / math.sqrt(2)
            rho_y = run(prepare(amp)).data
            e_ab = rho_p + 1j * rho_y \
                - 0.5 * (1 + 1j) * (rho_out[(a, a)] + rho_out[(b, b)])
            rho_out[(a, b)] = e_ab
            rho_out[(b, a)] = e_ab.conj().T

    phases = {}
    ref_mag = float(np.real(rho_out[(0, 0)][basis_idx[0], basis_idx[0]]))
    for b, lab in enumerate(labels):
        coh = rho_out[(b, 0)][basis_idx[b], basis_idx[0]]
        if abs(coh) > _DIAG_MIN * max(ref_mag, 1e-6):
            phases[lab] = _wrap_angle(cmath.phase(coh))
    ideal = _ideal_target(protocol, phases, register)
    # operator reconstruction relative to the |0...0> column
    a_mat = np.zeros((d, d), dtype=complex)
    for b in range(d):
        a_mat[:, b] = rho_out[(b, 0)][basis_idx, basis_idx[0]]
    scale = float(np.linalg.norm(a_mat[:, 0]))
    operator = a_mat / scale if scale > 1e-12 else a_mat
    leak = [1.0 - float(np.real(np.trace(
        rho_out[(b, b)][np.ix_(basis_idx, basis_idx)]))) for b in range(d)]
    if ideal is None:
        fidelity = float("nan")
    else:
        psi = [ideal[:, b] for b in range(d)]
        total = 0.0 + 0.0j
        for a in range(d):
            for b in range(d):
                block = rho_out[(a, b)][np.ix_(basis_idx, basis_idx)]
                total += np.conj(psi[a]) @ block @ psi[b]
        comp_trace = np.mean([1.0 - l for l in leak])
        fidelity = float(np.real(total)) / (d * d * comp_trace)
        fidelity = min(1.0, max(0.0, fidelity))
    return GateReport(protocol.name, operator, phases, fidelity,
                      float(np.mean(leak)), protocol.tau_g)


# ---------------------------------------------------------------------------
# equivalence up to phases


class PhaseEquivalence(NamedTuple):
    equivalent: bool
    global_phase: float
    qubit_phases: tuple[float, ...]
    residual: float


def equivalent_up_to_phases(u: np.ndarray, v: np.ndarray, n_qubits: int,
                            tol: float = 1e-6,
                            unitary_tol: float = 1e-2) -> PhaseEquivalence:
    """Test whether u = e^{i a} (prod_j Rz_j) v for some phases.

    Finds the global phase ``a`` and per-qubit Z phases ``z_j`` (a
    phase ``z_j`` applied when qubit j is in |1>) minimizing the
    Frobenius distance; both inputs are polar-projected to the nearest
    unitary first (inputs further than ``unitary_tol`` from unitary
    raise).  Returns the equivalence flag (residual below ``tol``), the
    phases, and the residual ``|u - e^{ia} D v|_F / sqrt(d)``.
    """
    d = 2 ** n_qubits
    u = np.asarray(u, dtype=complex)
    v = np.asarray(v, dtype=complex)
    if u.shape != (d, d) or v.shape != (d, d):
        raise ValueError(f"operators must be {d}x{d} for {n_qubits} qubits")
    for mat in (u, v):
        dev = float(np.max(np.abs(mat.conj().T @ mat - np.eye(d))))
        if dev > unitary_tol:
            raise ValueError(f"input deviates from unitarity by {dev}")
    u, _ = scipy.linalg.polar(u)
    v, _ = scipy.linalg.polar(v)

    m = np.diag(u @ v.conj().T).copy()
    bits = np.array([[(b >> (n_qubits - 1 - j)) & 1 for j in range(n_qubits)]
                     for b in range(d)])

    z = np.zeros(n_qubits)
    for j in range(n_qubits):
        idx = 1 << (n_qubits - 1 - j)
        if abs(m[idx]) > 1e-12 and abs(m[0]) > 1e-12:
            z[j] = cmath.phase(m[idx]) - cmath.phase(m[0])

    def score(zv):
        c = m * np.exp(-1j * (bits @ zv))
        return abs(np.sum(c))

    best = score(z)
    for _ in range(200):
        improved = False
        for j in range(n_qubits):
            mask = bits[:, j] == 1
            c = m * np.exp(-1j * (bits @ z))
            c_j = c * np.exp(1j * z[j] * bits[:, j])  # strip qubit j
            s0 = np.sum(c_j[~mask])
            s1 = np.sum(c_j[mask])
            if abs(s1) < 1e-15:
                continue
            new = cmath.phase(s1) - (cmath.phase(s0) if abs(s0) > 1e-15
                                     else 0.0)
            z_try = z.copy()
            z_try[j] = new
            s_try = score(z_try)
            if s_try > best + 1e-15:
                z = z_try
                best = s_try
                improved = True
        if not improved:
            break

    c = m * np.exp(-1j * (bits @ z))
    alpha = cmath.phase(np.sum(c)) if abs(np.sum(c)) > 1e-15 else 0.0
    diag = np.exp(1j * (alpha + bits @ z))
    residual = float(np.linalg.norm(u - diag[:, None] * v) / math.sqrt(d))
    z_wrapped = tuple(float((x + math.pi) % (2 * math.pi) - math.pi)
                      for x in z)
    return PhaseEquivalence(residual < tol, float(alpha), z_wrapped, residual)


# ---------------------------------------------------------------------------
# time-resolved populations


def population_trace(protocol: GateProtocol, register: Register,
                     initial: Sequence[str] | str,
                     points_per_step: int = 40):
    """Basis-state populations sampled through the protocol schedule.

    Returns ``(times, populations)`` where ``populations`` maps each
    product basis label to an array over the sample times (closed
    system only).
    """
    context = HamiltonianContext(register, protocol.couplings,
                                 pair_overrides=protocol.pair_overrides)
    state = QuantumState.from_labels(register, initial)
    times = [0.0]
    pops = [state.populations()]
    t = 0.0
    for st in protocol.schedule.steps:
        n = max(1, points_per_step)
        sub = st.duration / n
        for i in range(n):
            seg_step = ScheduleStep(
                tuple(_segment_slice(s, i / n, sub) for s in st.segments),
                st.interactions_active)
            state = propagate(state, PulseSchedule((seg_step,)), context)
            t += sub
            times.append(t)
            pops.append(state.populations())
    arr = np.stack(pops, axis=0)
    labels = {}
    syms = _space_symbols(register, False)
    dims = tuple(s.dim for s in register.schemes)
    for idx in range(arr.shape[1]):
        lab = "".join(syms[site][lvl]
                      for site, lvl in enumerate(ops.levels_of(idx, dims)))
        labels[lab] = arr[:, idx]
    return np.array(times), labels


def _segment_slice(seg: DriveSegment, s0: float, duration: float) -> DriveSegment:
    """A sub-interval of a segment, preserving ramp endpoints."""
    if not seg.is_ramped:
        return DriveSegment(seg.targets, seg.transition, seg.omega, seg.delta,
                            seg.phi, duration)
    om0, dl0 = seg.values_at(s0)
    om1, dl1 = seg.values_at(s0 + duration / seg.duration)
    return DriveSegment(seg.targets, seg.transition, om0, dl0, seg.phi,
                        duration, omega_end=om1, delta_end=dl1)
