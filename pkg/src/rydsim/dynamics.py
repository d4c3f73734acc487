"""Time evolution of pulse schedules with and without dissipation.

States live on the tensor product of the per-site level schemes; when a
noise model can lose population (Rydberg decay branching away from the
qubit, intermediate-state scattering) every site gains one absorbing
sink level appended after the scheme levels, reported as ``L`` in
measurement records.

Closed-system propagation exponentiates each constant schedule step
exactly (spectral decomposition up to dim 256, scaled-and-squared
beyond); ramped segments use a fourth-order commutator-free integrator.
Open-system propagation uses the vectorized Lindblad generator for
small spaces, a fixed-step fourth-order Runge-Kutta integration of the
master equation for larger ones, and an optional quantum-trajectory
mode for cross-validation.  All stochastic sampling draws from
counter-based generators keyed by (seed, purpose) so results are
reproducible shot by shot.
"""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg
import scipy.sparse

from . import operators as ops
from .hamiltonian import PulseSchedule, ScheduleStep, segment_local_matrix
from .interactions import PairCoupling, pair_interaction
from .register import LOST_SYMBOL, Register, pair_geometry

__all__ = [
    "QuantumState",
    "NoiseModel",
    "HamiltonianContext",
    "propagate",
    "expectation",
    "sample_measurements",
    "sample_disorder",
    "lindblad_evolve",
    "trajectory_evolve",
]

#: states this small keep density matrices through the vectorized generator
_SUPEROP_DIM_LIMIT = 64
#: substeps per 2*pi/||H|| when integrating ramped segments
_RAMP_STEPS_PER_PERIOD = 4
#: minimum substeps for any ramped segment
_RAMP_MIN_STEPS = 64


def _space_dims(register: Register, has_sink: bool) -> tuple[int, ...]:
    pad = 1 if has_sink else 0
    return tuple(s.dim + pad for s in register.schemes)


def _space_symbols(register: Register, has_sink: bool) -> tuple[tuple[str, ...], ...]:
    out = []
    for scheme in register.schemes:
        syms = [scheme.symbol(i) for i in range(scheme.dim)]
        if has_sink:
            syms.append(LOST_SYMBOL)
        out.append(tuple(syms))
    return tuple(out)


# ---------------------------------------------------------------------------
# states


@dataclass
class QuantumState:
    """A pure state or density matrix on a labelled product space.

    Parameters
    ----------
    data : ndarray
        Vector (pure) or square matrix (density); normalized to unit
        norm / unit trace within 1e-9.
    dims : tuple of int
        Local dimension per site, in site order, including the sink
        level when ``has_sink``.
    representation : {"pure", "density"}
    basis : {"full", "constrained"}
        ``constrained`` states store amplitudes over an explicit list
        of product-basis indices (e.g. a blockade-restricted subspace).
    basis_states : tuple of int, optional
        Product-space indices spanning a constrained basis.
    has_sink : bool
        Whether each site's last level is the absorbing loss sink.
    site_symbols : tuple of tuple of str, optional
        Measurement symbol per level per site; filled in by the
        register-aware constructors and carried through propagation.
    """

    data: np.ndarray
    dims: tuple[int, ...]
    representation: str = "pure"
    basis: str = "full"
    basis_states: tuple[int, ...] | None = None
    has_sink: bool = False
    site_symbols: tuple[tuple[str, ...], ...] | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data, dtype=complex)
        self.dims = tuple(int(d) for d in self.dims)
        if self.representation not in ("pure", "density"):
            raise ValueError(f"unknown representation {self.representation!r}")
        if self.basis not in ("full", "constrained"):
            raise ValueError(f"unknown basis {self.basis!r}")
        if self.basis == "constrained":
            if self.basis_states is None:
                raise ValueError("constrained basis needs basis_states")
            self.basis_states = tuple(int(i) for i in self.basis_states)
            expected = len(self.basis_states)
        else:
            expected = ops.total_dim(self.dims)
        if self.representation == "pure":
            if self.data.shape != (expected,):
                raise ValueError(
                    f"pure state needs shape ({expected},), got {self.data.shape}")
            norm = float(np.linalg.norm(self.data))
            if abs(norm - 1.0) > 1e-9:
                raise ValueError(f"state norm {norm} deviates from 1 by >1e-9")
        else:
            if self.data.shape != (expected, expected):
                raise ValueError(
                    f"density matrix needs shape ({expected},{expected})")
            tr = complex(np.trace(self.data))
            if abs(tr - 1.0) > 1e-9:
                raise ValueError(f"trace {tr} deviates from 1 by >1e-9")
        if self.site_symbols is not None:
            self.site_symbols = tuple(tuple(s) for s in self.site_symbols)
            if tuple(len(s) for s in self.site_symbols) != self.dims:
                raise ValueError("site_symbols shape does not match dims")

    # -- constructors ------------------------------------------------------

    @classmethod
    def from_labels(cls, register: Register, labels: Sequence[str],
                    has_sink: bool = False) -> "QuantumState":
        """Product state from per-site level labels.

        ``labels`` may be a list of labels or a compact string of
        single-character symbols (``0``, ``1``, ``r``, ``p``).
        """
        if isinstance(labels, str):
            labels = list(labels)
        if len(labels) != register.n_sites:
            raise ValueError(
                f"need {register.n_sites} labels, got {len(labels)}")
        symbol_map = {"0": "g0", "1": "g1", "r": "r", "p": "rp"}
        dims = _space_dims(register, has_sink)
        idx = []
        for j, lab in enumerate(labels):
            lab = symbol_map.get(lab, lab)
            idx.append(register.schemes[j].index(lab))
        vec = np.zeros(ops.total_dim(dims), dtype=complex)
        vec[ops.index_of(idx, dims)] = 1.0
        return cls(vec, dims, has_sink=has_sink,
                   site_symbols=_space_symbols(register, has_sink))

    @classmethod
    def from_vector(cls, vec: np.ndarray, register: Register,
                    has_sink: bool = False) -> "QuantumState":
        dims = _space_dims(register, has_sink)
        vec = np.asarray(vec, dtype=complex)
        n = float(np.linalg.norm(vec))
        if n == 0:
            raise ValueError("zero vector")
        return cls(vec / n, dims, has_sink=has_sink,
                   site_symbols=_space_symbols(register, has_sink))

    # -- views -------------------------------------------------------------

    @property
    def dim(self) -> int:
        return self.data.shape[0]

    def to_density(self) -> "QuantumState":
        if self.representation == "density":
            return self
        rho = np.outer(self.data, self.data.conj())
        return QuantumState(rho, self.dims, representation="density",
                            basis=self.basis, basis_states=self.basis_states,
                            has_sink=self.has_sink,
                            site_symbols=self.site_symbols)

    def density(self) -> np.ndarray:
        """Density matrix view of the data regardless of representation."""
        if self.representation == "density":
            return self.data
        return np.outer(self.data, self.data.conj())

    def populations(self) -> np.ndarray:
        """Probability of every basis state."""
        if self.representation == "pure":
            return np.abs(self.data) ** 2
        return np.real(np.diag(self.data)).copy()

    def overlap(self, other: "QuantumState") -> complex:
        if self.representation != "pure" or other.representation != "pure":
            raise ValueError("overlap is defined between pure states")
        return complex(np.vdot(self.data, other.data))

    def fidelity(self, other: "QuantumState") -> float:
        """|<self|other>|^2, or <psi|rho|psi> against a density matrix."""
        if self.representation == "pure" and other.representation == "pure":
            return float(abs(np.vdot(self.data, other.data)) ** 2)
        if self.representation == "pure":
            return float(np.real(self.data.conj() @ other.data @ self.data))
        if other.representation == "pure":
            return other.fidelity(self)
        raise ValueError("fidelity between two density matrices not supported")


# ---------------------------------------------------------------------------
# noise


@dataclass(frozen=True)
class NoiseModel:
    """Dissipation and quasi-static disorder channels.

    Parameters
    ----------
    t1 : float, optional
        Radiative lifetime of each Rydberg level in us; decay rate
        1/t1 split between a branch back to |0> and a branch into the
        absorbing sink.
    branch_to_ground : float
        Fraction of Rydberg decay returning to |0>; the remainder is
        lost to the sink (out-of-qubit hyperfine states, ionization).
    dephasing_gamma : float
        Pure dephasing rate gamma in 1/us acting on every Rydberg
        population projector, so ground-Rydberg coherences decay at
        gamma/2 (Ramsey T2 = 2/gamma).
    gamma_a, gamma_b : float
        Photon-scattering loss rates (1/us) of the lower/upper level of
        an effective two-photon drive, routed into the sink.
    sigma_doppler : float
        Standard deviation (rad/us) of the quasi-static per-site,
        per-shot detuning offset on ground-Rydberg transitions.
    """

    t1: float | None = None
    branch_to_ground: float = 1.0
    dephasing_gamma: float = 0.0
    gamma_a: float = 0.0
    gamma_b: float = 0.0
    sigma_doppler: float = 0.0

    def __post_init__(self):
        if self.t1 is not None and self.t1 <= 0:
            raise ValueError("t1 must be positive")
        if not 0.0 <= self.branch_to_ground <= 1.0:
            raise ValueError("branch_to_ground must lie in [0, 1]")
        for name in ("dephasing_gamma", "gamma_a", "gamma_b", "sigma_doppler"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")

    @property
    def needs_sink(self) -> bool:
        """Whether any channel moves population out of the scheme levels."""
        if self.gamma_a > 0 or self.gamma_b > 0:
            return True
        return self.t1 is not None and self.branch_to_ground < 1.0

    @property
    def has_jumps(self) -> bool:
        return (self.t1 is not None or self.dephasing_gamma > 0
                or self.gamma_a > 0 or self.gamma_b > 0)

    def jump_operators(self, register: Register,
                       has_sink: bool) -> list[scipy.sparse.csr_matrix]:
        """Collapse operators on the (possibly sink-padded) product space."""
        dims = _space_dims(register, has_sink)
        jumps: list[scipy.sparse.csr_matrix] = []
        for j, scheme in enumerate(register.schemes):
            d = dims[j]
            sink = d - 1 if has_sink else None
            rydberg = [lv for lv in scheme.labels if lv in ("r", "rp")]
            if self.t1 is not None:
                rate = 1.0 / self.t1
                for lv in rydberg:
                    k = scheme.index(lv)
                    g = scheme.index(scheme.labels[0])
                    if self.branch_to_ground > 0:
                        m = np.zeros((d, d), dtype=complex)
                        m[g, k] = math.sqrt(rate * self.branch_to_ground)
                        jumps.append(ops.embed_site(m, j, dims, sparse=True))
                    if self.branch_to_ground < 1.0:
                        if sink is None:
                            raise ValueError(
                                "decay branches to the sink but the state "
                                "space has none")
                        m = np.zeros((d, d), dtype=complex)
                        m[sink, k] = math.sqrt(rate * (1 - self.branch_to_ground))
                        jumps.append(ops.embed_site(m, j, dims, sparse=True))
            if self.dephasing_gamma > 0:
                for lv in rydberg:
                    k = scheme.index(lv)
                    m = np.zeros((d, d), dtype=complex)
                    m[k, k] = math.sqrt(self.dephasing_gamma)
                    jumps.append(ops.embed_site(m, j, dims, sparse=True))
            if self.gamma_a > 0 or self.gamma_b > 0:
                if sink is None:
                    raise ValueError(
                        "scattering loss needs a sink level in the state space")
                pair = scheme.computational
                for rate, k in ((self.gamma_a, pair[0]), (self.gamma_b, pair[1])):
                    if rate > 0:
                        m = np.zeros((d, d), dtype=complex)
                        m[sink, k] = math.sqrt(rate)
                        jumps.append(ops.embed_site(m, j, dims, sparse=True))
        return jumps


# ---------------------------------------------------------------------------
# Hamiltonian assembly


@dataclass(frozen=True)
class HamiltonianContext:
    """Register plus interaction channels; builds step Hamiltonians.

    Parameters
    ----------
    register : Register
    couplings : sequence of PairCoupling
        Interaction channels applied to every site pair whose schemes
        declare the channel's levels (and species, if restricted).
    detuning_offsets : ndarray, optional
        Per-site static additions to the ground-Rydberg detuning (e.g.
        one disorder draw); they enter as ``-offset * |r><r|_j`` for
        every Rydberg level at site j, in every step.
    pair_overrides : mapping, optional
        Channel lists replacing ``couplings`` for specific site pairs,
        keyed by ordered pair ``(min, max)``.  An empty tuple removes
        the interaction between that pair (engineered asymmetric
        couplings).
    """

    register: Register
    couplings: tuple[PairCoupling, ...] = ()
    detuning_offsets: np.ndarray | None = None
    pair_overrides: Mapping[tuple[int, int], tuple[PairCoupling, ...]] = \
        dataclasses.field(default_factory=dict)

    def __post_init__(self):
        object.__setattr__(self, "couplings", tuple(self.couplings))
        if self.detuning_offsets is not None:
            off = np.asarray(self.detuning_offsets, dtype=float)
            if off.shape != (self.register.n_sites,):
                raise ValueError(
                    f"need {self.register.n_sites} detuning offsets")
            object.__setattr__(self, "detuning_offsets", off)
        for key in self.pair_overrides:
            j, k = key
            if not (0 <= j < k < self.register.n_sites):
                raise ValueError(f"override pair {key} must be ordered and "
                                 "within the register")

    def with_offsets(self, offsets: np.ndarray) -> "HamiltonianContext":
        return HamiltonianContext(self.register, self.couplings, offsets,
                                  self.pair_overrides)

    def space_dims(self, has_sink: bool) -> tuple[int, ...]:
        return _space_dims(self.register, has_sink)

    def interaction_operator(self, has_sink: bool) -> scipy.sparse.csr_matrix:
        """Static pair-interaction operator on the product space."""
        reg = self.register
        dims = _space_dims(reg, has_sink)
        dim = ops.total_dim(dims)
        total = scipy.sparse.csr_matrix((dim, dim), dtype=complex)
        for j in range(reg.n_sites):
            for k in range(j + 1, reg.n_sites):
                geo = pair_geometry(reg, j, k)
                channels = self.pair_overrides.get((j, k), self.couplings)
                for cp in channels:
                    if not cp.applies_to(reg.species[j], reg.species[k]):
                        continue
                    la, lb = cp.levels
                    v = pair_interaction(cp, geo)
                    if cp.kind == "exchange_dipolar":
                        # one ordering suffices: hop + hop^dag covers
                        # both directions of the pair flip-flop
                        for (sa, sb) in ((la, lb), (lb, la)):
                            try:
                                ia = reg.schemes[j].index(sa)
                                ib = reg.schemes[k].index(sb)
                                ja = reg.schemes[j].index(sb)
                                jb = reg.schemes[k].index(sa)
                            except ValueError:
                                continue
                            da, db = dims[j], dims[k]
                            ma = np.zeros((da, da), dtype=complex)
                            mb = np.zeros((db, db), dtype=complex)
                            ma[ja, ia] = 1.0
                            mb[jb, ib] = 1.0
                            hop = ops.embed_two_site(
                                ma, mb, j, k, dims, sparse=True)
                            total = total + 0.5 * v * (hop + hop.conj().T)
                            break
                        continue
                    for (sa, sb) in {(la, lb), (lb, la)}:
                        try:
                            ia = reg.schemes[j].index(sa)
                            ib = reg.schemes[k].index(sb)
                        except ValueError:
                            continue
                        pa = np.zeros((dims[j], dims[j]), dtype=complex)
                        pb = np.zeros((dims[k], dims[k]), dtype=complex)
                        pa[ia, ia] = 1.0
                        pb[ib, ib] = 1.0
                        total = total + v * ops.embed_two_site(
                            pa, pb, j, k, dims, sparse=True)
        return total.tocsr()

    def offset_operator(self, has_sink: bool) -> scipy.sparse.csr_matrix | None:
        """Static disorder term: -offset_j on every Rydberg projector."""
        if self.detuning_offsets is None or not np.any(self.detuning_offsets):
            return None
        reg = self.register
        dims = _space_dims(reg, has_sink)
        dim = ops.total_dim(dims)
        total = scipy.sparse.csr_matrix((dim, dim), dtype=complex)
        for j, scheme in enumerate(reg.schemes):
            off = self.detuning_offsets[j]
            if off == 0.0:
                continue
            for lv in scheme.labels:
                if lv not in ("r", "rp"):
                    continue
                d = dims[j]
                m = np.zeros((d, d), dtype=complex)
                m[scheme.index(lv), scheme.index(lv)] = -off
                total = total + ops.embed_site(m, j, dims, sparse=True)
        return total.tocsr()

    def step_hamiltonian(self, step: ScheduleStep, s: float,
                         has_sink: bool,
                         static: scipy.sparse.csr_matrix | None) -> np.ndarray:
        """Dense Hamiltonian of one schedule step at fractional time s."""
        reg = self.register
        dims = _space_dims(reg, has_sink)
        dim = ops.total_dim(dims)
        h = np.zeros((dim, dim), dtype=complex)
        pad = 1 if has_sink else 0
        for seg in step.segments:
            for t in seg.targets:
                local = segment_local_matrix(reg.schemes[t], seg, s, pad=pad)
                h += ops.embed_site(local, t, dims, sparse=False)
        if static is not None:
            h += static.toarray()
        return h


# ---------------------------------------------------------------------------
# propagation


def _step_substeps(step: ScheduleStep, h0: np.ndarray, h1: np.ndarray) -> int:
    """Substep count for a ramped step: a few per Hamiltonian period."""
    scale = max(float(np.linalg.norm(h0, 2)), float(np.linalg.norm(h1, 2)), 1e-12)
    period = 2.0 * math.pi / scale
    n = int(math.ceil(step.duration / period * _RAMP_STEPS_PER_PERIOD))
    return max(_RAMP_MIN_STEPS, n)


def _evolve_pure_step(psi: np.ndarray, step: ScheduleStep,
                      context: HamiltonianContext, has_sink: bool,
                      static: scipy.sparse.csr_matrix | None,
                      step_scale: float) -> np.ndarray:
    if step.duration == 0.0:
        return psi
    if not step.is_ramped:
        h = context.step_hamiltonian(step, 0.0, has_sink, static)
        return ops.apply_expm_hermitian(h, step.duration, psi)
    h0 = context.step_hamiltonian(step, 0.0, has_sink, static)
    h1 = context.step_hamiltonian(step, 1.0, has_sink, static)
    n = max(1, int(round(_step_substeps(step, h0, h1) * step_scale)))
    dt = step.duration / n
    for i in range(n):
        s0 = i / n

        def h_of(local_s, _s0=s0, _w=1.0 / n):
            return context.step_hamiltonian(step, _s0 + local_s * _w,
                                            has_sink, static)

        psi = ops.cf4_step(h_of, dt, psi)
    return psi


def propagate(state: QuantumState, schedule: PulseSchedule,
              context: HamiltonianContext,
              noise: NoiseModel | None = None, *,
              method: str = "auto", n_trajectories: int = 200,
              seed: int = 0, step_scale: float = 1.0) -> QuantumState:
    """Evolve a state through a pulse schedule.

    Parameters
    ----------
    state : QuantumState
        Initial state; its space must match the context register (plus
        a sink level per site whenever the noise model can lose atoms).
    schedule : PulseSchedule
    context : HamiltonianContext
    noise : NoiseModel, optional
        ``None`` gives closed-system evolution.  Quasi-static disorder
        is not applied here: draw offsets with ``sample_disorder`` and
        attach them via ``context.with_offsets`` per shot.
    method : {"auto", "unitary", "density", "trajectory"}
        ``auto`` picks unitary when there are no jump channels and
        the master equation otherwise.
    n_trajectories : int
        Trajectory count for ``method="trajectory"``.
    seed : int
        Base seed; trajectory i draws from the stream (seed, "traj:i"),
        so every trajectory is reproducible in isolation.
    step_scale : float
        Multiplies the default substep count of ramped segments (2.0
        doubles the steps; used by convergence checks).

    Returns
    -------
    QuantumState
        Pure for unitary evolution, a density matrix otherwise.

    Notes
    -----
    Unitary steps conserve the norm to 1e-9 by construction; master
    equation steps must conserve the trace to 1e-7 or the call raises.
    """
    has_jumps = noise is not None and noise.has_jumps
    if method == "auto":
        method = "density" if has_jumps else "unitary"
    if method == "unitary" and has_jumps:
        raise ValueError("unitary propagation cannot apply jump channels")

    has_sink = state.has_sink
    if noise is not None and noise.needs_sink and not has_sink:
        raise ValueError(
            "noise model loses population: build the state with has_sink=True")
    if state.dims != context.space_dims(has_sink):
        raise ValueError("state dimensions do not match the context register")
    if state.basis != "full":
        raise ValueError("propagate acts on full product-space states")

    interactions = None
    if any(st.interactions_active for st in schedule.steps):
        interactions = context.interaction_operator(has_sink)
    offsets = context.offset_operator(has_sink)

    def step_static(step: ScheduleStep):
        # disorder acts in every step; interactions only where active
        if step.interactions_active and interactions is not None:
            if offsets is None:
                return interactions
            return interactions + offsets
        return offsets

    symbols = state.site_symbols or _space_symbols(context.register, has_sink)

    if method == "unitary":
        psi = state.data.copy()
        for st in schedule.steps:
            psi = _evolve_pure_step(psi, st, context, has_sink,
                                    step_static(st), step_scale)
        nrm = float(np.linalg.norm(psi))
        if abs(nrm - 1.0) > 1e-9:
            raise RuntimeError(f"norm drifted to {nrm}")
        return QuantumState(psi / nrm, state.dims, has_sink=has_sink,
                            site_symbols=symbols)

    jumps = noise.jump_operators(context.register, has_sink) if noise else []

    if method == "density":
        rho = state.density().copy()
        for st in schedule.steps:
            rho = _evolve_density_step(rho, st, context, has_sink,
                                       step_static(st), jumps, step_scale)
        tr = float(np.real(np.trace(rho)))
        if abs(tr - 1.0) > 1e-7:
            raise RuntimeError(f"trace drifted to {tr}")
        rho = 0.5 * (rho + rho.conj().T) / tr
        return QuantumState(rho, state.dims, representation="density",
                            has_sink=has_sink, site_symbols=symbols)

    if method == "trajectory":
        if state.representation != "pure":
            raise ValueError("trajectory mode starts from a pure state")
        dim = state.dim
        acc = np.zeros((dim, dim), dtype=complex)
        for i in range(n_trajectories):
            rng = ops.rng_stream(seed, f"traj:{i}")
            psi = _run_trajectory(state.data.copy(), schedule, context,
                                  has_sink, step_static, jumps, rng)
            acc += np.outer(psi, psi.conj())
        acc /= n_trajectories
        return QuantumState(acc, state.dims, representation="density",
                            has_sink=has_sink, site_symbols=symbols)

    raise ValueError(f"unknown method {method!r}")


# -- master equation --------------------------------------------------------


def _liouvillian(h: np.ndarray,
                 jumps: Sequence[scipy.sparse.spmatrix]) -> np.ndarray:
    """Vectorized generator: d vec(rho)/dt = L vec(rho), row-major vec."""
    d = h.shape[0]
    ident = np.eye(d)
    # with row-major flattening, vec(A rho B) = (A kron B^T) vec(rho)
    lio = -1j * (np.kron(h, ident) - np.kron(ident, h.T))
    for jop in jumps:
        jd = jop.toarray() if scipy.sparse.issparse(jop) else np.asarray(jop)
        jdj = jd.conj().T @ jd
        lio += np.kron(jd, jd.conj())
        lio -= 0.5 * (np.kron(jdj, ident) + np.kron(ident, jdj.T))
    return lio


def lindblad_evolve(h: np.ndarray, jumps: Sequence[np.ndarray],
                    rho: np.ndarray, duration: float, *,
                    steps: int | None = None) -> np.ndarray:
    """Evolve a density matrix under a constant Lindblad generator.

    Uses the exact exponential of the vectorized generator when the
    Hilbert space dimension is at most 64, otherwise fixed-step
    fourth-order Runge-Kutta.
    """
    d = rho.shape[0]
    if duration == 0.0:
        return rho.copy()
    if d <= _SUPEROP_DIM_LIMIT and steps is None:
        lio = _liouvillian(h, jumps)
        prop = scipy.linalg.expm(lio * duration)
        return (prop @ rho.reshape(-1)).reshape(d, d)
    return _rk4_lindblad(h, jumps, rho, duration, steps)


def _rk4_lindblad(h, jumps, rho, duration, steps=None):
    dense = [j.toarray() if scipy.sparse.issparse(j) else np.asarray(j)
             for j in jumps]
    pre = [(jd, jd.conj().T, jd.conj().T @ jd) for jd in dense]
    rate_scale = sum(float(np.linalg.norm(j, 2)) ** 2 for j in dense)
    h_scale = float(np.linalg.norm(h, 2))
    if steps is None:
        # resolve both the coherent period and the fastest decay
        dt_target = 0.05 / max(h_scale, rate_scale, 1e-12)
        steps = max(32, int(math.ceil(duration / dt_target)))
    dt = duration / steps

    def rhs(r):
        out = -1j * (h @ r - r @ h)
        for jd, jdag, jdj in pre:
            out += jd @ r @ jdag - 0.5 * (jdj @ r + r @ jdj)
        return out

    for _ in range(steps):
        k1 = rhs(rho)
        k2 = rhs(rho + 0.5 * dt * k1)
        k3 = rhs(rho + 0.5 * dt * k2)
        k4 = rhs(rho + dt * k3)
        rho = rho + (dt / 6.0) * (k1 + 2 * k2 + 2 * k3 + k4)
    return rho


def _evolve_density_step(rho, step, context, has_sink, static, jumps,
                         step_scale):
    if step.duration == 0.0:
        return rho
    if not step.is_ramped:
        h = context.step_hamiltonian(step, 0.0, has_sink, static)
        return lindblad_evolve(h, jumps, rho, step.duration)
    h0 = context.step_hamiltonian(step, 0.0, has_sink, static)
    h1 = context.step_hamiltonian(step, 1.0, has_sink, static)
    n = max(1, int(round(_step_substeps(step, h0, h1) * step_scale)))
    dt = step.duration / n
    for i in range(n):
        h = context.step_hamiltonian(step, (i + 0.5) / n, has_sink, static)
        rho = lindblad_evolve(h, jumps, rho, dt)
    return rho


# -- quantum trajectories ----------------------------------------------------


def trajectory_evolve(h: np.ndarray, jumps: Sequence[np.ndarray],
                      psi: np.ndarray, duration: float,
                      rng: np.random.Generator, *,
                      dt: float | None = None) -> np.ndarray:
    """One quantum-trajectory segment under a constant Hamiltonian.

    Normalizes the input, evolves with the non-Hermitian effective
    Hamiltonian until the squared norm crosses a uniform threshold,
    applies a collapse chosen by instantaneous channel weights, and
    repeats.  Returns the (unnormalized) state; its squared norm is the
    no-jump weight accumulated since the last collapse.  Drawing a
    fresh threshold per segment on the renormalized state reproduces
    the correct jump statistics because the no-jump survival
    probability factorizes over segments.
    """
    dense = [j.toarray() if scipy.sparse.issparse(j) else np.asarray(j)
             for j in jumps]
    psi = psi / np.linalg.norm(psi)
    if not dense:
        return ops.apply_expm_hermitian(h, duration, psi)
    h_eff = np.asarray(h, dtype=complex).copy()
    for jd in dense:
        h_eff -= 0.5j * (jd.conj().T @ jd)
    rate = sum(float(np.linalg.norm(jd, 2)) ** 2 for jd in dense)
    scale = max(float(np.linalg.norm(h, 2)), rate, 1e-12)
    if dt is None:
        dt = min(0.05 / scale, duration)
    n = max(1, int(math.ceil(duration / dt)))
    dt = duration / n
    prop = scipy.linalg.expm(-1j * h_eff * dt)
    threshold = rng.random()
    for _ in range(n):
        psi = prop @ psi
        nrm2 = float(np.real(np.vdot(psi, psi)))
        if nrm2 <= threshold:
            weights = np.array([np.linalg.norm(jd @ psi) ** 2 for jd in dense])
            total = float(weights.sum())
            if total == 0.0:
                break
            pick = rng.choice(len(dense), p=weights / total)
            psi = dense[pick] @ psi
            psi = psi / np.linalg.norm(psi)
            threshold = rng.random()
    return psi


def _run_trajectory(psi, schedule, context, has_sink, step_static, jumps, rng):
    for st in schedule.steps:
        if st.duration == 0.0:
            continue
        if st.is_ramped:
            h0 = context.step_hamiltonian(st, 0.0, has_sink, step_static(st))
            h1 = context.step_hamiltonian(st, 1.0, has_sink, step_static(st))
            n = _step_substeps(st, h0, h1)
            dt = st.duration / n
            for i in range(n):
                h = context.step_hamiltonian(st, (i + 0.5) / n, has_sink,
                                             step_static(st))
                psi = trajectory_evolve(h, jumps, psi, dt, rng)
        else:
            h = context.step_hamiltonian(st, 0.0, has_sink, step_static(st))
            psi = trajectory_evolve(h, jumps, psi, st.duration, rng)
    nrm = float(np.linalg.norm(psi))
    return psi / nrm if nrm > 0 else psi


# ---------------------------------------------------------------------------
# observables and sampling


def expectation(state: QuantumState, operator) -> float:
    """Real expectation value <O>; raises if Im <O> exceeds 1e-10."""
    if scipy.sparse.issparse(operator):
        if state.representation == "pure":
            val = complex(np.vdot(state.data, operator @ state.data))
        else:
            val = complex((operator @ state.data).diagonal().sum())
    else:
        op = np.asarray(operator)
        if state.representation == "pure":
            val = complex(np.vdot(state.data, op @ state.data))
        else:
            val = complex(np.trace(op @ state.data))
    if abs(val.imag) > 1e-10 * max(1.0, abs(val.real)):
        raise ValueError(
            f"expectation has imaginary residue {val.imag}; operator is "
            "probably not Hermitian")
    return float(val.real)


def sample_measurements(state: QuantumState, n_shots: int,
                        seed: int = 0) -> dict[str, int]:
    """Multinomial site-resolved measurement record.

    Returns
    -------
    dict
        Maps basis strings (one symbol per site, ``L`` marking a lost
        atom) to counts; zero-count outcomes are omitted and keys are
        sorted for stable output.
    """
    if state.basis != "full":
        raise ValueError("sampling needs a full product-space state")
    if state.site_symbols is None:
        raise ValueError(
            "state carries no site symbols; build it through the "
            "register-aware constructors")
    probs = np.clip(state.populations(), 0.0, None)
    total = probs.sum()
    if abs(total - 1.0) > 1e-7:
        raise ValueError(f"probabilities sum to {total}")
    probs = probs / total
    rng = ops.rng_stream(seed, "measurements")
    counts = rng.multinomial(n_shots, probs)
    out: dict[str, int] = {}
    for idx in np.nonzero(counts)[0]:
        key = "".join(
            state.site_symbols[site][lvl]
            for site, lvl in enumerate(ops.levels_of(int(idx), state.dims)))
        out[key] = int(counts[idx])
    return dict(sorted(out.items()))


def sample_disorder(noise: NoiseModel, register: Register,
                    seed: int = 0) -> np.ndarray:
    """One quasi-static disorder draw: per-site detuning offsets (rad/us).

    Offsets are Gaussian with standard deviation ``sigma_doppler`` and
    stay fixed for an entire experimental shot, so a perfect echo
    sequence cancels them exactly.
    """
    rng = ops.rng_stream(seed, "disorder")
    return rng.normal(0.0, noise.sigma_doppler, size=register.n_sites)
