"""Fidelity estimators and benchmark calculators.

Parity-oscillation analysis and Bell/GHZ fidelity bounds quantify
entanglement from population and coherence data; truth-table fidelity
scores classical gate action; coherence conversions relate damping
rates to usable pulse counts; and the achievable-depth calculator turns
an error budget into the largest executable square circuit
``D = floor(eps^{-1/2})`` with ``N_g = D^2/2`` two-qubit gates.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from typing import Mapping, NamedTuple, Sequence

import numpy as np

from . import operators as ops
from .dynamics import QuantumState, lindblad_evolve
from .operators import rng_stream

__all__ = [
    "ParityScan",
    "DepthEstimate",
    "InfiniteDepthError",
    "TruthTableFidelity",
    "parity_scan",
    "bell_fidelity_estimate",
    "bell_overlap",
    "truth_table_fidelity",
    "ghz_parity",
    "ghz_fidelity_bound",
    "staggered_coherence",
    "coherence_conversions",
    "dsquare",
    "rabi_damping_time",
    "echo_contrast",
    "write_depth_csv",
]


# ---------------------------------------------------------------------------
# state normalization helpers


def _as_density(state, n_qubits: int | None = None) -> np.ndarray:
    """Coerce vector / density / QuantumState to a density matrix."""
    if isinstance(state, QuantumState):
        if any(d != 2 for d in state.dims):
            raise ValueError("estimator expects two-level (qubit) sites")
        rho = state.density()
    else:
        arr = np.asarray(state, dtype=complex)
        if arr.ndim == 1:
            arr = arr / np.linalg.norm(arr)
            rho = np.outer(arr, arr.conj())
        elif arr.ndim == 2 and arr.shape[0] == arr.shape[1]:
            rho = arr
        else:
            raise ValueError("state must be a vector or square matrix")
    dim = rho.shape[0]
    n = int(round(math.log2(dim)))
    if 2 ** n != dim:
        raise ValueError(f"dimension {dim} is not a power of two")
    if n_qubits is not None and n != n_qubits:
        raise ValueError(f"expected {n_qubits} qubits, got {n}")
    return rho


def _populations_vector(populations, d: int) -> np.ndarray:
    """Coerce a population mapping/sequence to a length-d vector."""
    if isinstance(populations, Mapping):
        vec = np.zeros(d)
        n = int(round(math.log2(d)))
        for key, val in populations.items():
            vec[int(key, 2)] = float(val)
            if len(key) != n:
                raise ValueError(f"population key {key!r} needs {n} bits")
    else:
        vec = np.asarray(populations, dtype=float)
        if vec.shape != (d,):
            raise ValueError(f"need {d} populations")
    if vec.min() < -1e-9 or vec.sum() > 1 + 1e-6:
        raise ValueError("populations must be in [0,1] and sum to at most 1")
    return vec


# ---------------------------------------------------------------------------
# parity oscillations


@dataclass(frozen=True)
class ParityScan:
    """Parity signal versus analysis-pulse angle with its cosine fit.

    ``contrast`` is the amplitude of the ``cos(2 theta + phase_offset)``
    component; ``offset`` the fitted constant term.
    """

    thetas: np.ndarray
    values: np.ndarray
    contrast: float
    phase_offset: float
    offset: float

    def __post_init__(self):
        if np.max(np.abs(self.values)) > 1 + 1e-9:
            raise ValueError("parity values must lie in [-1, 1]")
        if not -1e-9 <= self.contrast <= 1 + 1e-9:
            raise ValueError("contrast must lie in [0, 1]")

    @property
    def residual(self) -> float:
        fit = self.offset + self.contrast * np.cos(
            2 * self.thetas + self.phase_offset)
        return float(np.max(np.abs(fit - self.values)))


def _uxy_theta(theta: float) -> np.ndarray:
    c, s = math.cos(0.5 * theta), math.sin(0.5 * theta)
    return np.array([[c, -1j * s], [-1j * s, c]])


def _analysis_pulse(phase: float) -> np.ndarray:
    """Fixed-area pi/2 analysis rotation about the axis set by phase."""
    inv = math.sqrt(0.5)
    return np.array([[inv, -1j * inv * cmath.exp(1j * phase)],
                     [-1j * inv * cmath.exp(-1j * phase), inv]])


def parity_scan(state, thetas: Sequence[float],
                components: tuple[str, str] = ("01", "10")) -> ParityScan:
    """Analysis-rotation parity signal of a two-qubit state.

    For each scan angle a fixed-area pi/2 rotation is applied to both
    qubits, with the angle entering as the rotation-axis phase
    (co-rotating on qubits whose target-component bits match, counter-
    rotating otherwise, so the scan addresses the coherence between the
    requested Bell components — default (|01>, |10>)).  The parity
    ``P00 + P11 - P01 - P10`` is fitted by linear least squares on
    ``cos 2theta``, ``sin 2theta`` and a constant; the contrast equals
    exactly twice the target coherence magnitude.  Scanning the axis
    phase rather than the pulse area keeps diagonal (classical)
    populations out of the oscillating quadrature entirely: product and
    fully dephased states give zero contrast, so the contrast witnesses
    coherence alone.
    """
    thetas = np.asarray(list(thetas), dtype=float)
    if thetas.size < 4:
        raise ValueError("need at least 4 analysis angles")
    a, b = components
    if len(a) != 2 or len(b) != 2 or any(x == y for x, y in zip(a, b)):
        raise ValueError("components must be two complementary bit pairs")
    signs = [1.0 if a[j] == a[0] else -1.0 for j in range(2)]
    rho = _as_density(state, n_qubits=2)
    zz = np.diag([1.0, -1.0, -1.0, 1.0])
    values = np.empty(thetas.size)
    for i, th in enumerate(thetas):
        u = np.kron(_analysis_pulse(signs[0] * th),
                    _analysis_pulse(signs[1] * th))
        values[i] = float(np.real(np.trace(zz @ u @ rho @ u.conj().T)))
    design = np.column_stack([np.cos(2 * thetas), np.sin(2 * thetas),
                              np.ones_like(thetas)])
    (a, b, c), *_ = np.linalg.lstsq(design, values, rcond=None)
    contrast = float(np.hypot(a, b))
    phase = float(math.atan2(-b, a))
    return ParityScan(thetas, values, min(contrast, 1.0), phase, float(c))


def bell_fidelity_estimate(populations, contrast: float,
                           components: tuple[str, str] = ("01", "10")
                           ) -> float:
    """Bell fidelity bound from populations plus parity contrast.

    ``F = (P_a + P_b)/2 + C/2`` where a, b are the two bit strings of
    the target Bell state and C the parity-oscillation contrast (which
    equals twice the coherence magnitude between them).
    """
    d = 2 ** len(components[0])
    vec = _populations_vector(populations, d)
    pa = vec[int(components[0], 2)]
    pb = vec[int(components[1], 2)]
    return float(np.clip(0.5 * (pa + pb) + 0.5 * contrast, 0.0, 1.0))


def bell_overlap(state, components: tuple[str, str] = ("01", "10")) -> float:
    """Exact overlap with the Bell state (|a> + |b>)/sqrt(2)."""
    rho = _as_density(state, n_qubits=len(components[0]))
    psi = np.zeros(rho.shape[0], dtype=complex)
    psi[int(components[0], 2)] = 1 / math.sqrt(2)
    psi[int(components[1], 2)] = 1 / math.sqrt(2)
    return float(np.real(psi.conj() @ rho @ psi))


# ---------------------------------------------------------------------------
# truth tables


class TruthTableFidelity(NamedTuple):
    fidelity: float
    survival: float


def truth_table_fidelity(populations: np.ndarray,
                         ideal: np.ndarray) -> TruthTableFidelity:
    """Classical-action fidelity of a permutation-like gate.

    ``populations[i, j]`` is the probability of measuring output basis
    state j given input basis state i; rows may sum to less than one
    (atom loss).  Lost shots are excluded per input and the average
    survival fraction reported alongside.
    """
    p = np.asarray(populations, dtype=float)
    if p.ndim != 2 or p.shape[0] != p.shape[1]:
        raise ValueError("populations must be a square matrix")
    d = p.shape[0]
    if p.min() < -1e-9 or np.any(p.sum(axis=1) > 1 + 1e-6):
        raise ValueError("rows must be sub-normalized probabilities")
    ideal = np.asarray(ideal, dtype=complex)
    if ideal.shape != (d, d):
        raise ValueError("ideal gate dimension mismatch")
    outputs = []
    for i in range(d):
        col = np.abs(ideal[:, i])
        j = int(np.argmax(col))
        if col[j] ** 2 < 0.99 * float(col @ col):
            raise ValueError(
                "ideal gate must map basis states to basis states")
        outputs.append(j)
    survival = p.sum(axis=1)
    if np.any(survival <= 0):
        raise ValueError("an input row has zero surviving population")
    fid = float(np.mean([p[i, outputs[i]] / survival[i] for i in range(d)]))
    return TruthTableFidelity(fid, float(np.mean(survival)))


# ---------------------------------------------------------------------------
# GHZ diagnostics


def _staggered_patterns(n: int) -> tuple[int, int]:
    p1 = int("".join("01"[j % 2] for j in range(n)), 2)
    p2 = int("".join("10"[j % 2] for j in range(n)), 2)
    return p1, p2


def ghz_parity(state, phi: float) -> float:
    """X-basis parity after site-staggered phase rotations.

    Each site j is rotated by ``exp(-i phi (-1)^j Z/2)`` and the parity
    ``<X ... X>`` read out; for the staggered GHZ state the signal
    oscillates as ``cos(N phi + const)``.
    """
    rho = _as_density(state)
    n = int(round(math.log2(rho.shape[0])))
    rot = np.ones(1, dtype=complex)
    x_all = np.ones((1, 1), dtype=complex)
    for j in range(n):
        sign = 1.0 if j % 2 == 0 else -1.0
        rot = np.kron(rot, np.array([cmath.exp(-0.5j * sign * phi),
                                     cmath.exp(0.5j * sign * phi)]))
        x_all = np.kron(x_all, ops.PAULI_X)
    rho_rot = (rot[:, None] * rho) * rot.conj()[None, :]
    return float(np.real(np.trace(x_all @ rho_rot)))


def staggered_coherence(state) -> float:
    """|<0101...|rho|1010...>| coherence between the two GHZ patterns."""
    rho = _as_density(state)
    n = int(round(math.log2(rho.shape[0])))
    p1, p2 = _staggered_patterns(n)
    return float(abs(rho[p1, p2]))


def ghz_fidelity_bound(state) -> float:
    """GHZ fidelity ``(P1 + P2)/2 + |coherence|`` for staggered patterns."""
    rho = _as_density(state)
    n = int(round(math.log2(rho.shape[0])))
    p1, p2 = _staggered_patterns(n)
    pops = 0.5 * float(np.real(rho[p1, p1] + rho[p2, p2]))
    return min(1.0, pops + staggered_coherence(state))


# ---------------------------------------------------------------------------
# coherence conversions


def coherence_conversions(gamma: float | None = None,
                          t2: float | None = None,
                          t_rabi: float | None = None,
                          omega: float | None = None) -> dict:
    """Relate dephasing rate, T2, usable Rabi time, and pi-pulse error.

    Exactly one of ``gamma``, ``t2``, ``t_rabi`` is given; the others
    follow from ``T2 = 2/gamma`` and ``T_Rabi = 2 T2``.  With ``omega``
    the error per pi pulse ``eps_pi = pi / (2 omega T_Rabi)`` is added.
    """
    given = [x for x in (gamma, t2, t_rabi) if x is not None]
    if len(given) != 1:
        raise ValueError("give exactly one of gamma, t2, t_rabi")
    if given[0] <= 0 or (omega is not None and omega <= 0):
        raise ValueError("inputs must be positive")
    if gamma is not None:
        t2 = 2.0 / gamma
    elif t2 is not None:
        gamma = 2.0 / t2
    else:
        t2 = 0.5 * t_rabi
        gamma = 2.0 / t2
    t_rabi = 2.0 * t2
    out = {"gamma": gamma, "t2": t2, "t_rabi": t_rabi}
    if omega is not None:
        out["eps_pi"] = math.pi / (2.0 * omega * t_rabi)
    return out


# ---------------------------------------------------------------------------
# achievable depth


class InfiniteDepthError(ValueError):
    """Raised when the error model predicts no errors at all."""


@dataclass(frozen=True)
class DepthEstimate:
    """Largest square circuit before one error is expected."""

    source: str
    epsilon: float
    dsquare: int
    n_gates: float

    def __post_init__(self):
        if not 0 < self.epsilon <= 1:
            raise ValueError("epsilon must lie in (0, 1]")


def _depth_from_epsilon(source: str, eps: float) -> DepthEstimate:
    if eps <= 0:
        raise InfiniteDepthError(
            f"{source} error rate is zero; depth unbounded")
    # the tiny factor keeps exact cases like eps=0.01 -> D=10 from
    # falling through the floor on binary rounding
    d = int(math.floor((1 + 1e-12) / math.sqrt(eps)))
    return DepthEstimate(source, eps, d, d * d / 2)


def dsquare(source: str, **params) -> DepthEstimate:
    """Achievable circuit depth for one error source.

    sources and their parameters (any consistent time unit):
      - ``digital``: ``fidelity`` of a two-qubit gate; eps = 1 - F
      - ``analog``: ``v_max``, ``t_coh``; eps = pi / (v_max t_coh) per
        half interaction cycle
      - ``lifetime``: ``tau_cum``, ``t1``; eps = tau_cum / t1 for the
        cumulative Rydberg dwell time per gate
      - ``loss``: ``n_atoms``, ``tau_g``, ``t_trap``; eps =
        2 n tau_g / t_trap, the chance that any of the stored atoms is
        lost while one gate (plus its matched rearrangement window)
        runs sequentially
    """
    if source == "digital":
        f = float(params.pop("fidelity"))
        _no_extras(params)
        if not 0 <= f <= 1:
            raise ValueError("fidelity must lie in [0, 1]")
        if f == 1.0:
            raise InfiniteDepthError("perfect fidelity; depth unbounded")
        return _depth_from_epsilon(source, 1.0 - f)
    if source == "analog":
        v_max, t_coh = float(params.pop("v_max")), float(params.pop("t_coh"))
        _no_extras(params)
        if v_max <= 0 or t_coh <= 0:
            raise ValueError("v_max and t_coh must be positive")
        return _depth_from_epsilon(source, math.pi / (v_max * t_coh))
    if source == "lifetime":
        tau, t1 = float(params.pop("tau_cum")), float(params.pop("t1"))
        _no_extras(params)
        if tau <= 0 or t1 <= 0:
            raise ValueError("tau_cum and t1 must be positive")
        return _depth_from_epsilon(source, tau / t1)
    if source == "loss":
        n = float(params.pop("n_atoms"))
        tau_g = float(params.pop("tau_g"))
        t_trap = float(params.pop("t_trap"))
        _no_extras(params)
        if n <= 0 or tau_g <= 0 or t_trap <= 0:
            raise ValueError("n_atoms, tau_g, t_trap must be positive")
        return _depth_from_epsilon(source, 2.0 * n * tau_g / t_trap)
    raise ValueError(f"unknown error source {source!r}")


def _no_extras(params: dict):
    if params:
        raise TypeError(f"unexpected parameters {sorted(params)}")


def write_depth_csv(estimates: Sequence[DepthEstimate], path) -> None:
    """CSV rows (source, epsilon, dsquare, ngates) for the bench task."""
    import csv
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["source", "epsilon", "dsquare", "ngates"])
        for est in estimates:
            writer.writerow([est.source, repr(est.epsilon), est.dsquare,
                             repr(est.n_gates)])


# ---------------------------------------------------------------------------
# simulated coherence benchmarks


def rabi_damping_time(omega: float, gamma: float, cycles: int = 8) -> float:
    """Fitted 1/e envelope time of a dephased resonant Rabi oscillation.

    Evolves one driven two-level atom under pure Rydberg dephasing at
    rate ``gamma`` and fits the log envelope of ``|2 P_r - 1|`` at the
    oscillation extrema; for weak dephasing the result approaches
    ``2 T2 = 4 / gamma``.
    """
    if omega <= 0 or gamma <= 0:
        raise ValueError("omega and gamma must be positive")
    h = 0.5 * omega * ops.PAULI_X.astype(complex)
    jump = math.sqrt(gamma) * np.diag([0.0, 1.0]).astype(complex)
    rho = np.diag([1.0, 0.0]).astype(complex)
    dt = math.pi / omega          # extremum spacing
    ts, env = [], []
    for k in range(1, 2 * cycles + 1):
        rho = lindblad_evolve(h, [jump], rho, dt)
        ts.append(k * dt)
        env.append(abs(2.0 * float(np.real(rho[1, 1])) - 1.0))
    ts, env = np.array(ts), np.array(env)
    keep = env > 1e-12
    slope, _ = np.polyfit(ts[keep], np.log(env[keep]), 1)
    return float(-1.0 / slope)


def echo_contrast(sigma: float, tau: float, *, omega: float | None = None,
                  n_draws: int = 64, seed: int = 0) -> float:
    """Ramsey-echo coherence under quasi-static detuning disorder.

    Each draw evolves ``pi/2 - wait tau/2 - pi - wait tau/2`` with one
    Gaussian detuning offset of width ``sigma`` held fixed for the
    whole sequence; the returned contrast is twice the magnitude of the
    disorder-averaged coherence.  With ``omega`` given the pulses are
    simulated at that finite Rabi frequency (picking up a small
    detuning error per pulse); otherwise they are ideal rotations, and
    the echo cancels the disorder exactly.
    """
    if sigma < 0 or tau <= 0:
        raise ValueError("sigma must be >= 0 and tau positive")
    deltas = rng_stream(seed, "doppler").normal(0.0, sigma, n_draws)
    rho_sum = np.zeros((2, 2), dtype=complex)
    for delta in deltas:
        if omega is None:
            p_half = _uxy_theta(math.pi / 2)
            p_pi = _uxy_theta(math.pi)
        else:
            from .gates import single_qubit_unitary
            p_half = single_qubit_unitary(omega, delta, 0.0,
                                          0.5 * math.pi / omega)
            p_pi = single_qubit_unitary(omega, delta, 0.0, math.pi / omega)
        free = np.diag([1.0, cmath.exp(1j * delta * tau / 2)])
        psi = free @ (p_pi @ (free @ (p_half @ np.array([1.0, 0.0],
                                                        dtype=complex))))
        rho_sum += np.outer(psi, psi.conj())
    rho = rho_sum / n_draws
    return float(2.0 * abs(rho[0, 1]))
