"""Pair interactions: van der Waals and resonant-dipolar couplings.

Sign convention (used consistently by the many-body builders):

    V_jk = -C_p / R_jk^p  (optionally times the dipolar angular factor)

so a repulsive Rydberg-Rydberg shift corresponds to C_6 < 0.  Resonant
dipolar exchange between pair states |r rp> and |rp r> enters the
Hamiltonian as (V/2)(|r rp><rp r| + h.c.); the matching coefficient for
transition dipoles mu_ac, mu_bd is C_3 = -2 mu_ac mu_bd.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

KINDS = ("diagonal_vdw", "exchange_dipolar", "diagonal_cross")


@dataclass(frozen=True)
class PairCoupling:
    """One interaction channel between two (possibly equal) levels.

    Parameters
    ----------
    kind : {"diagonal_vdw", "exchange_dipolar", "diagonal_cross"}
        Diagonal shift of |a b> (vdW within one Rydberg state or the
        cross shift between different ones), or off-diagonal exchange
        |a b> <-> |b a>.
    c_p : float
        Coefficient in rad/us * um^p, sign carried explicitly.
    p : int
        Power law; 3 only for (and always for) dipolar exchange.
    angular : {"isotropic", "dipolar"}
        ``dipolar`` multiplies by (1 - 3 cos^2 theta).
    levels : (str, str)
        Level labels the channel acts on, e.g. ("r", "r") for vdW,
        ("r", "rp") for exchange or the cross shift.
    species : (str, str), optional
        Restrict the channel to this unordered species pair; ``None``
        applies it to every pair.  Lets heteronuclear registers carry
        independent constants per species combination.
    """

    kind: str
    c_p: float
    p: int
    angular: str = "isotropic"
    levels: tuple[str, str] = ("r", "r")
    species: tuple[str, str] | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown coupling kind {self.kind!r}")
        if self.p not in (3, 6):
            raise ValueError("power p must be 3 or 6")
        if (self.p == 3) != (self.kind == "exchange_dipolar"):
            raise ValueError("p=3 if and only if kind is exchange_dipolar")
        if self.angular not in ("isotropic", "dipolar"):
            raise ValueError(f"unknown angular flag {self.angular!r}")
        if not np.isfinite(self.c_p):
            raise ValueError("coefficient must be finite")
        if self.kind == "exchange_dipolar" and self.levels[0] == self.levels[1]:
            raise ValueError("exchange needs two distinct levels")

    def applies_to(self, species_a: str, species_b: str) -> bool:
        """Whether this channel acts between the two species (unordered)."""
        if self.species is None:
            return True
        return {species_a, species_b} == set(self.species)


@dataclass(frozen=True)
class PairStateParams:
    """Dipole-coupled pair states |ab> and |cd> with a Foerster defect.

    ``mu_ac * mu_bd / R^3`` is the off-diagonal coupling in rad/us.
    """

    mu_ac: float
    mu_bd: float
    foerster_defect: float

    def __post_init__(self):
        if self.mu_ac < 0 or self.mu_bd < 0:
            raise ValueError("dipole factors must be non-negative here")
        for v in (self.mu_ac, self.mu_bd, self.foerster_defect):
            if not np.isfinite(v):
                raise ValueError("parameters must be finite")


def pair_state_hamiltonian(params: PairStateParams, r: float) -> np.ndarray:
    """2x2 Hamiltonian on {|ab>, |cd>}: off-diagonal mu mu / R^3, defect on |cd>."""
    if r <= 0:
        raise ValueError("distance must be positive")
    w = params.mu_ac * params.mu_bd / r**3
    return np.array([[0.0, w], [w, params.foerster_defect]])


def vdw_coefficient(params: PairStateParams) -> float:
    """Second-order (van der Waals) C6 = mu_ac^2 mu_bd^2 / Delta_F.

    Raises for zero defect: that is the resonant regime where the
    exchange form must be used instead.
    """
    if params.foerster_defect == 0.0:
        raise ValueError("resonant pair (Delta_F = 0): use exchange coupling")
    return (params.mu_ac**2) * (params.mu_bd**2) / params.foerster_defect


def exchange_coefficient(params: PairStateParams) -> float:
    """C3 for the resonant symmetric/antisymmetric splitting.

    The exchange operator is (V/2)(|r rp><rp r| + h.c.) with
    V = -C_3/R^3 = 2 mu_ac mu_bd / R^3, hence C_3 = -2 mu_ac mu_bd.
    """
    return -2.0 * params.mu_ac * params.mu_bd


def angular_factor(theta: float) -> float:
    """Dipolar anisotropy 1 - 3 cos^2(theta); zero at the magic angle."""
    return 1.0 - 3.0 * np.cos(theta) ** 2


def pair_interaction(coupling: PairCoupling, geometry: tuple[float, float]) -> float:
    """Interaction strength V_jk (rad/us) for a pair at (R, theta)."""
    r, theta = geometry
    if r <= 0:
        raise ValueError("distance must be positive")
    v = -coupling.c_p / r**coupling.p
    if coupling.angular == "dipolar":
        v *= angular_factor(theta)
    return float(v)


def blockade_radius(c_p: float, omega: float, p: int = 6) -> float:
    """R_b = |C_p / Omega|^(1/p): interaction exceeds the drive inside R_b."""
    if omega == 0:
        raise ValueError("drive strength must be nonzero")
    return float(abs(c_p / omega) ** (1.0 / p))


def coupling_table(register, coupling: PairCoupling) -> np.ndarray:
    """Symmetric matrix V_jk over all site pairs of a register."""
    from .register import pair_geometry

    n = register.n_sites
    v = np.zeros((n, n))
    for j in range(n):
        for k in range(j + 1, n):
            if not coupling.applies_to(register.species[j],
                                       register.species[k]):
                continue
            v[j, k] = v[k, j] = pair_interaction(
                coupling, pair_geometry(register, j, k))
    return v


def write_coupling_csv(register, coupling: PairCoupling, path) -> None:
    """Write all pair strengths as CSV with unit-tagged headers."""
    v = coupling_table(register, coupling)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["site_j", "site_k", "V_rad_per_us"])
        for j in range(register.n_sites):
            for k in range(j + 1, register.n_sites):
                w.writerow([j, k, repr(float(v[j, k]))])
