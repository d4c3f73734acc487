"""Pair-state couplings, power laws, and angular structure."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from rydsim.interactions import (
    PairCoupling,
    PairStateParams,
    angular_factor,
    blockade_radius,
    coupling_table,
    exchange_coefficient,
    pair_interaction,
    pair_state_hamiltonian,
    vdw_coefficient,
    write_coupling_csv,
)
from rydsim.register import build_lattice, pair_geometry


# ---------------------------------------------------------------------------
# two-level pair-state model


def test_pair_state_hamiltonian_structure():
    params = PairStateParams(mu_ac=2.0, mu_bd=3.0, foerster_defect=5.0)
    h = pair_state_hamiltonian(params, r=2.0)
    w = 2.0 * 3.0 / 8.0
    assert np.allclose(h, [[0.0, w], [w, 5.0]])
    with pytest.raises(ValueError):
        pair_state_hamiltonian(params, r=0.0)


def test_pair_state_resonant_splitting():
    # zero defect: eigenvalues are the symmetric/antisymmetric pair
    params = PairStateParams(mu_ac=2.0, mu_bd=2.0, foerster_defect=0.0)
    vals = np.linalg.eigvalsh(pair_state_hamiltonian(params, r=2.0))
    assert vals == pytest.approx([-0.5, 0.5])


def test_vdw_coefficient_example():
    # mu_ac = mu_bd = 2, defect 8  ->  C6 = 16/8 = 2
    params = PairStateParams(mu_ac=2.0, mu_bd=2.0, foerster_defect=8.0)
    assert vdw_coefficient(params) == pytest.approx(2.0)
    # sign follows the defect
    flipped = PairStateParams(mu_ac=2.0, mu_bd=2.0, foerster_defect=-8.0)
    assert vdw_coefficient(flipped) == pytest.approx(-2.0)
    with pytest.raises(ValueError):
        vdw_coefficient(PairStateParams(2.0, 2.0, 0.0))


def test_vdw_matches_exact_diagonalization_far_off_resonance():
    # perturbative shift -C6/R^6 vs the exact lower eigenvalue
    params = PairStateParams(mu_ac=1.0, mu_bd=1.5, foerster_defect=400.0)
    r = 1.0
    h = pair_state_hamiltonian(params, r)
    exact_shift = np.linalg.eigvalsh(h)[0]          # repelled |ab> branch
    c6 = vdw_coefficient(params)
    assert exact_shift == pytest.approx(-c6 / r**6, rel=1e-4)


def test_exchange_coefficient_convention():
    # V_exchange = -C3/R^3 = 2 mu mu / R^3
    params = PairStateParams(mu_ac=2.0, mu_bd=3.0, foerster_defect=0.0)
    assert exchange_coefficient(params) == pytest.approx(-12.0)
    cp = PairCoupling("exchange_dipolar", exchange_coefficient(params), 3,
                      levels=("r", "rp"))
    assert pair_interaction(cp, (2.0, math.pi / 2)) == pytest.approx(12.0 / 8.0)


def test_params_validation():
    with pytest.raises(ValueError):
        PairStateParams(-1.0, 2.0, 1.0)
    with pytest.raises(ValueError):
        PairStateParams(1.0, 2.0, float("nan"))


# ---------------------------------------------------------------------------
# angular factor


def test_angular_factor_landmarks():
    assert angular_factor(math.pi / 2) == pytest.approx(1.0)
    assert angular_factor(0.0) == pytest.approx(-2.0)
    magic = math.acos(1.0 / math.sqrt(3.0))
    assert abs(angular_factor(magic)) < 1e-12


def test_angular_factor_solid_angle_average_vanishes():
    # (1 - 3 cos^2) integrates to zero over the sphere
    val, _ = quad(lambda t: angular_factor(t) * math.sin(t), 0.0, math.pi)
    assert abs(val) < 1e-10


# ---------------------------------------------------------------------------
# pair interaction and blockade radius


def test_pair_interaction_power_laws():
    vdw = PairCoupling("diagonal_vdw", c_p=-64.0, p=6)
    assert pair_interaction(vdw, (1.0, 0.0)) == pytest.approx(64.0)
    assert pair_interaction(vdw, (2.0, 0.0)) == pytest.approx(1.0)
    dip = PairCoupling("exchange_dipolar", c_p=-8.0, p=3, angular="dipolar",
                       levels=("r", "rp"))
    assert pair_interaction(dip, (2.0, math.pi / 2)) == pytest.approx(1.0)
    assert pair_interaction(dip, (2.0, 0.0)) == pytest.approx(-2.0)
    with pytest.raises(ValueError):
        pair_interaction(vdw, (0.0, 0.0))


@given(st.floats(min_value=0.5, max_value=50.0),
       st.floats(min_value=0.5, max_value=50.0))
@settings(max_examples=25, deadline=None)
def test_pair_interaction_log_slope(r1, r2):
    vdw = PairCoupling("diagonal_vdw", c_p=-10.0, p=6)
    v1 = pair_interaction(vdw, (r1, 0.0))
    v2 = pair_interaction(vdw, (r2, 0.0))
    if abs(math.log(r2 / r1)) > 1e-3:
        slope = math.log(v2 / v1) / math.log(r2 / r1)
        assert slope == pytest.approx(-6.0, abs=1e-6)


def test_blockade_radius_examples():
    # V(R) = C6/R^6 crosses Omega at R_b = (C6/Omega)^(1/6)
    assert blockade_radius(64.0, 1.0) == pytest.approx(2.0)
    assert blockade_radius(64.0, 64.0) == pytest.approx(1.0)
    assert blockade_radius(-8.0, 1.0, p=3) == pytest.approx(2.0)
    with pytest.raises(ValueError):
        blockade_radius(64.0, 0.0)


def test_blockade_radius_scaling_with_drive():
    # doubling Omega shrinks R_b by 2^(1/6)
    r1 = blockade_radius(100.0, 1.0)
    r2 = blockade_radius(100.0, 2.0)
    assert r1 / r2 == pytest.approx(2.0 ** (1.0 / 6.0))


# ---------------------------------------------------------------------------
# coupling tables


def test_coupling_table_symmetric_zero_diagonal():
    reg = build_lattice("ring", 5, 4.0)
    cp = PairCoupling("diagonal_vdw", c_p=-64.0 * 4.0**6, p=6)
    table = coupling_table(reg, cp)
    assert table.shape == (5, 5)
    assert np.allclose(table, table.T)
    assert np.allclose(np.diag(table), 0.0)
    # nearest neighbours of a ring all see the same strength
    assert table[0, 1] == pytest.approx(64.0)
    assert table[1, 2] == pytest.approx(table[0, 1])


def test_coupling_table_power_law_falloff():
    reg = build_lattice("chain", 3, 2.0)
    cp = PairCoupling("diagonal_vdw", c_p=-2.0**6, p=6)
    table = coupling_table(reg, cp)
    assert table[0, 1] == pytest.approx(1.0)
    assert table[0, 2] == pytest.approx(1.0 / 64.0)


def test_coupling_table_species_restriction():
    reg = build_lattice("chain", 3, 2.0,
                        species=("Rb", "Cs", "Rb"))
    cp = PairCoupling("diagonal_vdw", c_p=-2.0**6, p=6,
                      species=("Rb", "Cs"))
    table = coupling_table(reg, cp)
    assert table[0, 1] != 0.0 and table[1, 2] != 0.0
    assert table[0, 2] == 0.0  # Rb-Rb pair is not covered by this channel


def test_coupling_table_dipolar_angle():
    # sites along z: theta = 0 so the dipolar factor is -2
    import numpy as np
    from rydsim.register import Register
    reg = Register(sites=np.array([(0.0, 0.0, 0.0), (0.0, 0.0, 2.0)]))
    cp = PairCoupling("exchange_dipolar", c_p=-8.0, p=3, angular="dipolar",
                      levels=("r", "rp"))
    table = coupling_table(reg, cp)
    assert table[0, 1] == pytest.approx(-2.0)


def test_write_coupling_csv(tmp_path):
    reg = build_lattice("chain", 2, 2.0)
    cp = PairCoupling("diagonal_vdw", c_p=-2.0**6, p=6)
    path = tmp_path / "coupling.csv"
    write_coupling_csv(reg, cp, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "site_j,site_k,V_rad_per_us"
    assert lines[1] == "0,1,1.0"
