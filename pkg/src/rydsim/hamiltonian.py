"""Hamiltonian builders: drive terms, two-photon reduction, spin models.

Drive convention (hbar = 1): a segment on transition ``(a, b)`` adds, at
every target site,

    H = (Omega/2) e^{i phi} |a><b| + h.c. - Delta |b><b|

i.e. the detuning acts on the *second* listed level.  The single-qubit
rotation U_xy and all gate protocols are built on this convention.

Spin models use Z|0> = +|0>, occupation n = (1 - Z)/2, and the sign
convention V_jk = -C_p/R^p of the interactions module.
"""

from __future__ import annotations

import csv
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp
from scipy.special import zeta

from . import operators as ops
from .register import Register, BlockadeGraph


# ---------------------------------------------------------------------------
# Drive segments and schedules
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class DriveSegment:
    """One coherent drive on a set of target sites.

    ``omega_end``/``delta_end`` enable linear ramps across the segment;
    when None the value is held constant.
    """

    targets: tuple[int, ...]
    transition: tuple[str, str]
    omega: float
    delta: float = 0.0
    phi: float = 0.0
    duration: float = 0.0
    omega_end: float | None = None
    delta_end: float | None = None

    def __post_init__(self):
        if not self.targets:
            raise ValueError("segment needs at least one target site")
        object.__setattr__(self, "targets", tuple(sorted(set(self.targets))))
        if len(self.transition) != 2 or self.transition[0] == self.transition[1]:
            raise ValueError("transition must be an ordered pair of distinct levels")
        if self.duration < 0:
            raise ValueError("duration must be non-negative")
        if self.omega < 0 or (self.omega_end is not None and self.omega_end < 0):
            raise ValueError("Rabi frequency is non-negative; the phase carries sign")

    def values_at(self, s: float) -> tuple[float, float]:
        """(Omega, Delta) at fractional position s in [0, 1] of the segment."""
        om = self.omega if self.omega_end is None else \
            (1.0 - s) * self.omega + s * self.omega_end
        dl = self.delta if self.delta_end is None else \
            (1.0 - s) * self.delta + s * self.delta_end
        return om, dl

    @property
    def is_ramped(self) -> bool:
        return self.omega_end is not None or self.delta_end is not None


@dataclass(frozen=True)
class ScheduleStep:
    """Simultaneous segments of equal duration, with interactions on/off."""

    segments: tuple[DriveSegment, ...]
    interactions_active: bool = True

    def __post_init__(self):
        segs = tuple(self.segments)
        if not segs:
            raise ValueError("a step needs at least one segment")
        d0 = segs[0].duration
        if any(abs(s.duration - d0) > 1e-12 * max(1.0, d0) for s in segs):
            raise ValueError("segments within a step must share one duration")
        seen = {}
        for s in segs:
            for t in s.targets:
                key = (t, frozenset(s.transition))
                if key in seen and seen[key] != (s.omega, s.delta, s.phi):
                    raise ValueError(
                        f"conflicting segments on site {t} transition {s.transition}")
                seen[key] = (s.omega, s.delta, s.phi)
        object.__setattr__(self, "segments", segs)

    @property
    def duration(self) -> float:
        return self.segments[0].duration

    @property
    def is_ramped(self) -> bool:
        return any(s.is_ramped for s in self.segments)


@dataclass(frozen=True)
class PulseSchedule:
    """Ordered steps; each step runs its segments simultaneously."""

    steps: tuple[ScheduleStep, ...]

    def __post_init__(self):
        object.__setattr__(self, "steps", tuple(self.steps))

    @property
    def total_duration(self) -> float:
        return float(sum(s.duration for s in self.steps))

    @staticmethod
    def sequential(segments: Sequence[DriveSegment],
                   interactions_active: bool = True) -> "PulseSchedule":
        """Schedule with one segment per step, in order."""
        return PulseSchedule(tuple(
            ScheduleStep((s,), interactions_active) for s in segments))


def segment_local_matrix(scheme, segment: DriveSegment, s: float = 0.0,
                         pad: int = 0) -> np.ndarray:
    """Single-site drive matrix for one target's level scheme.

    ``pad`` appends that many inert levels (used for the loss sink).
    """
    om, dl = segment.values_at(s)
    try:
        a = scheme.index(segment.transition[0])
        b = scheme.index(segment.transition[1])
    except ValueError as err:
        raise ValueError(
            f"scheme {scheme.labels} does not declare transition "
            f"{segment.transition}") from err
    d = scheme.dim + pad
    local = np.zeros((d, d), dtype=complex)
    local[a, b] = 0.5 * om * np.exp(1j * segment.phi)
    local[b, a] = 0.5 * om * np.exp(-1j * segment.phi)
    local[b, b] -= dl
    return local


def drive_operator(segment: DriveSegment, register: Register,
                   s: float = 0.0) -> np.ndarray:
    """Full-space Hermitian drive operator at fractional time s of the segment."""
    dims = register.dims
    total = None
    for t in segment.targets:
        local = segment_local_matrix(register.schemes[t], segment, s)
        term = ops.embed_site(local, t, dims, sparse=False)
        total = term if total is None else total + term
    return total


def effective_two_photon(omega_a: float, omega_b: float, delta_e: float,
                         delta_2ph: float = 0.0, gamma_e: float = 0.0
                         ) -> tuple[float, float, float, float]:
    """Two-photon ladder reduced to an effective two-level drive.

    Returns (Omega_eff, Delta_eff, gamma_a, gamma_b): the effective Rabi
    frequency and detuning after adiabatic elimination of the
    intermediate state, plus the off-resonant scattering rates of the
    lower and upper qubit level.
    """
    if delta_e == 0:
        raise ValueError("intermediate-state detuning must be nonzero")
    if abs(delta_e) < 10.0 * max(abs(omega_a), abs(omega_b)):
        warnings.warn("two-photon reduction marginal: |delta_e| is not large "
                      "compared to the single-photon Rabi frequencies",
                      stacklevel=2)
    omega_eff = omega_a * omega_b / (2.0 * delta_e)
    delta_eff = delta_2ph + (omega_a**2 - omega_b**2) / (4.0 * delta_e)
    gamma_a = omega_a**2 * gamma_e / (4.0 * delta_e**2)
    gamma_b = omega_b**2 * gamma_e / (4.0 * delta_e**2)
    return omega_eff, delta_eff, gamma_a, gamma_b


# ---------------------------------------------------------------------------
# Many-body spin models
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ManyBodyModel:
    """Named spin model with a symmetric coupling table.

    ``couplings[j, k]`` is V_jk (ising/pxp) or J_jk (xy/xxz) in rad/us;
    ``omega``/``delta`` are global or per-site drive parameters;
    ``anisotropy`` is the XXZ delta.
    """

    model: str
    couplings: np.ndarray
    omega: float | np.ndarray = 0.0
    delta: float | np.ndarray = 0.0
    anisotropy: float = 0.0

    def __post_init__(self):
        if self.model not in ("ising", "pxp", "xy", "xxz"):
            raise ValueError(f"unknown model {self.model!r}")
        v = np.asarray(self.couplings, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1]:
            raise ValueError("coupling table must be square")
        if not np.allclose(v, v.T, atol=1e-12):
            raise ValueError("coupling table must be symmetric")
        v = 0.5 * (v + v.T)
        np.fill_diagonal(v, 0.0)
        object.__setattr__(self, "couplings", v)

    @property
    def n_sites(self) -> int:
        return self.couplings.shape[0]

    def site_values(self, which: str) -> np.ndarray:
        val = getattr(self, which)
        return np.broadcast_to(np.asarray(val, dtype=float),
                               (self.n_sites,)).copy()


def _occupation_table(n: int) -> np.ndarray:
    """(2^n, n) bit table, site 0 most significant."""
    idx = np.arange(1 << n, dtype=np.int64)
    return np.stack([(idx >> (n - 1 - j)) & 1 for j in range(n)], axis=1)


def _x_flip_matrix(n: int, omega: np.ndarray, sparse: bool):
    """Sum_j (omega_j / 2) X_j as sparse COO / dense."""
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    rows, cols, vals = [], [], []
    for j in range(n):
        rows.append(idx ^ (1 << (n - 1 - j)))
        cols.append(idx)
        vals.append(np.full(dim, 0.5 * omega[j]))
    m = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(dim, dim)).tocsr()
    return m if sparse else m.toarray()


def ising_hamiltonian(model: ManyBodyModel, register: Register | None = None,
                      sparse: bool | None = None):
    """Transverse-field Ising spin form.

    (1/2) sum_j [Omega_j X_j + (Delta_j - I_j) Z_j] + sum_{j<k} (V_jk/4) Z_j Z_k
    with the site shift I_j = sum_{k != j} V_jk / 2.  Equals the
    drive+projector form  sum_j [(Omega_j/2) X_j - Delta_j n_j]
    + sum_{j<k} V_jk n_j n_k  up to a multiple of the identity.
    """
    if model.model != "ising":
        raise ValueError("model tag must be 'ising'")
    n = model.n_sites
    if sparse is None:
        sparse = (1 << n) > ops.DENSE_DIM_LIMIT
    bits = _occupation_table(n)
    z = 1.0 - 2.0 * bits                      # Z eigenvalue per site
    v = model.couplings
    om = model.site_values("omega")
    dl = model.site_values("delta")
    shift = v.sum(axis=1) / 2.0               # I_j
    diag = 0.5 * (z @ (dl - shift))
    diag = diag + 0.25 * np.einsum("bj,jk,bk->b", z, np.triu(v, 1), z)
    h = _x_flip_matrix(n, om, sparse)
    if sparse:
        return h + sp.diags(diag)
    return h + np.diag(diag)


def ising_projector_form(model: ManyBodyModel, sparse: bool | None = None):
    """sum_j [(Omega_j/2) X_j - Delta_j n_j] + sum_{j<k} V_jk n_j n_k."""
    n = model.n_sites
    if sparse is None:
        sparse = (1 << n) > ops.DENSE_DIM_LIMIT
    bits = _occupation_table(n)
    om = model.site_values("omega")
    dl = model.site_values("delta")
    diag = -bits @ dl + 0.5 * np.einsum(
        "bj,jk,bk->b", bits, model.couplings, bits)
    h = _x_flip_matrix(n, om, sparse)
    if sparse:
        return h + sp.diags(diag)
    return h + np.diag(diag)


def pxp_hamiltonian(register_or_n, graph: BlockadeGraph,
                    omega: float | np.ndarray = 1.0
                    ) -> tuple[np.ndarray, list[int]]:
    """Blockade-constrained drive on the independent-set basis.

    (1/2) sum_j Omega_j P0 X_j P0 restricted to configurations with no
    two blockaded neighbours excited; open ends use one-sided projectors
    (a site flips whenever all its graph neighbours are unexcited).

    Returns (H, basis) where basis lists occupation bitmasks (site 0 is
    the most significant bit) indexing the rows of H.
    """
    n = graph.n_sites if hasattr(graph, "n_sites") else int(register_or_n)
    if hasattr(register_or_n, "n_sites"):
        n = register_or_n.n_sites
    basis = ops.independent_set_basis(n, graph.sorted_edges())
    pos = {b: i for i, b in enumerate(basis)}
    om = np.broadcast_to(np.asarray(omega, dtype=float), (n,))
    h = np.zeros((len(basis), len(basis)))
    for b in basis:
        i = pos[b]
        for j in range(n):
            b2 = b ^ (1 << (n - 1 - j))
            i2 = pos.get(b2)
            if i2 is not None:
                h[i2, i] += 0.5 * om[j]
    return h, basis


def xy_hamiltonian(model: ManyBodyModel, register: Register | None = None,
                   sparse: bool | None = None):
    """Flip-flop model:
    (1/2) sum_j [Omega_j X_j + Delta_j Z_j]
    + sum_{j<k} (J_jk/4)(X_j X_k + Y_j Y_k).

    The pair term equals (J_jk/2)(|01><10| + h.c.) on each bond, so two
    sites at coupling J exchange population with period 2 pi / J.
    """
    if model.model not in ("xy", "xxz"):
        raise ValueError("model tag must be 'xy' (or 'xxz' via xxz_hamiltonian)")
    n = model.n_sites
    if sparse is None:
        sparse = (1 << n) > ops.DENSE_DIM_LIMIT
    bits = _occupation_table(n)
    z = 1.0 - 2.0 * bits
    om = model.site_values("omega")
    dl = model.site_values("delta")
    diag = 0.5 * (z @ dl)
    h = _x_flip_matrix(n, om, sparse=True).tocoo()
    rows = [h.row]; cols = [h.col]; vals = [h.data]
    dim = 1 << n
    idx = np.arange(dim, dtype=np.int64)
    for j in range(n):
        for k in range(j + 1, n):
            if model.couplings[j, k] == 0.0:
                continue
            bj = (idx >> (n - 1 - j)) & 1
            bk = (idx >> (n - 1 - k)) & 1
            sel = idx[bj != bk]
            flip = sel ^ ((1 << (n - 1 - j)) | (1 << (n - 1 - k)))
            rows.append(flip); cols.append(sel)
            vals.append(np.full(len(sel), 0.5 * model.couplings[j, k]))
    m = sp.coo_matrix((np.concatenate(vals),
                       (np.concatenate(rows), np.concatenate(cols))),
                      shape=(dim, dim)).tocsr()
    m = m + sp.diags(diag)
    return m if sparse else m.toarray()


def xxz_hamiltonian(model: ManyBodyModel, register: Register | None = None,
                    sparse: bool | None = None):
    """XY model plus anisotropic ZZ coupling delta * J_jk.

    Adds sum_{j<k} (delta J_jk / 4) Z_j Z_k and the site shift
    I_j = sum_{k != j} delta J_jk applied as -(1/2) I_j Z_j.  With
    delta = 0 this is exactly the XY operator.
    """
    if model.model != "xxz":
        raise ValueError("model tag must be 'xxz'")
    base = xy_hamiltonian(ManyBodyModel("xy", model.couplings, model.omega,
                                        model.delta), register, sparse)
    d = model.anisotropy
    if d == 0.0:
        return base
    n = model.n_sites
    bits = _occupation_table(n)
    z = 1.0 - 2.0 * bits
    dj = d * model.couplings
    shift = dj.sum(axis=1)                    # I_j = sum_k delta J_jk
    diag = -0.5 * (z @ shift) + 0.25 * np.einsum(
        "bj,jk,bk->b", z, np.triu(dj, 1), z)
    if sp.issparse(base):
        return base + sp.diags(diag)
    return base + np.diag(diag)


def phase_boundaries(v_nn: float, p: int, q_max: int) -> list[float]:
    """Classical crystal boundaries delta_q for 1/R^p couplings.

    delta_q = V zeta(p) ((q+1)/q^p - q/(q+1)^p): the detuning where the
    density-1/q and density-1/(q+1) crystals are degenerate; the Z_q
    ordered phase sits in delta_q < Delta < delta_{q-1}.
    """
    if q_max < 1:
        raise ValueError("q_max must be >= 1")
    if p < 2:
        raise ValueError("power p must be >= 2")
    zp = float(zeta(p, 1))
    return [v_nn * zp * ((q + 1) / q**p - q / (q + 1) ** p)
            for q in range(1, q_max + 1)]


def write_operator_csv(op, path) -> None:
    """Dump operator nonzeros as (row, col, re, im) triplet CSV."""
    m = sp.coo_matrix(op)
    order = np.lexsort((m.col, m.row))
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "col", "re_rad_per_us", "im_rad_per_us"])
        for i in order:
            w.writerow([int(m.row[i]), int(m.col[i]),
                        repr(float(np.real(m.data[i]))),
                        repr(float(np.imag(m.data[i])))])
