"""Drive schedules, many-body Hamiltonians, and two-photon reduction."""

import math
import warnings

import numpy as np
import pytest
import scipy.linalg
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from rydsim.hamiltonian import (
    DriveSegment,
    ManyBodyModel,
    PulseSchedule,
    ScheduleStep,
    drive_operator,
    effective_two_photon,
    ising_hamiltonian,
    ising_projector_form,
    phase_boundaries,
    pxp_hamiltonian,
    segment_local_matrix,
    write_operator_csv,
    xxz_hamiltonian,
    xy_hamiltonian,
)
from rydsim.register import GR, GG_R, blockade_graph, build_lattice
from rydsim.operators import independent_set_basis


def nn_chain_model(model, n, v_nn, omega=0.0, delta=0.0, **kw):
    table = np.zeros((n, n))
    for j in range(n - 1):
        table[j, j + 1] = table[j + 1, j] = v_nn
    return ManyBodyModel(model, table, omega, delta, **kw)


def dense(h):
    return h.toarray() if sp.issparse(h) else np.asarray(h)


# ---------------------------------------------------------------------------
# drive segments and schedules


def test_drive_segment_validation():
    DriveSegment(targets=(0,), transition=("g0", "r"), omega=1.0)
    with pytest.raises(ValueError):
        DriveSegment(targets=(), transition=("g0", "r"), omega=1.0)
    with pytest.raises(ValueError):
        DriveSegment(targets=(0,), transition=("g0", "g0"), omega=1.0)
    with pytest.raises(ValueError):
        DriveSegment(targets=(0,), transition=("g0", "r"), omega=-1.0)


def test_schedule_step_guards():
    seg = DriveSegment(targets=(0,), transition=("g0", "r"), omega=1.0,
                       duration=1.0)
    step = ScheduleStep(segments=(seg,))
    assert step.duration == pytest.approx(1.0)
    # steps synchronize: segments must share one duration
    other = DriveSegment(targets=(1,), transition=("g0", "r"), omega=1.0,
                         duration=2.0)
    with pytest.raises(ValueError):
        ScheduleStep(segments=(seg, other))
    # same site+transition with different parameters conflicts
    clash = DriveSegment(targets=(0,), transition=("g0", "r"), omega=2.0,
                         duration=1.0)
    with pytest.raises(ValueError):
        ScheduleStep(segments=(seg, clash))
    with pytest.raises(ValueError):
        ScheduleStep(segments=())


def test_schedule_step_allows_simultaneous_distinct_transitions():
    a = DriveSegment(targets=(0,), transition=("g0", "g1"), omega=1.0,
                     duration=1.0)
    b = DriveSegment(targets=(0,), transition=("g1", "r"), omega=1.0,
                     duration=1.0)
    step = ScheduleStep(segments=(a, b))
    assert len(step.segments) == 2


def test_pulse_schedule_duration():
    def seg(d):
        return DriveSegment(targets=(0,), transition=("g0", "r"),
                            omega=1.0, duration=d)
    sched = PulseSchedule(steps=(
        ScheduleStep(segments=(seg(1.5),)),
        ScheduleStep(segments=(seg(0.5),)),
    ))
    assert sched.total_duration == pytest.approx(2.0)
    one_per_step = PulseSchedule.sequential([seg(1.0), seg(2.0)])
    assert len(one_per_step.steps) == 2
    assert one_per_step.total_duration == pytest.approx(3.0)


def test_segment_local_matrix_convention():
    # H = (Omega/2) e^{i phi} |a><b| + h.c. - Delta |b><b|
    seg = DriveSegment(targets=(0,), transition=("g0", "r"),
                       omega=2.0, delta=3.0, phi=0.7)
    m = segment_local_matrix(GR, seg)
    assert m[0, 1] == pytest.approx(np.exp(1j * 0.7))
    assert m[1, 0] == pytest.approx(np.exp(-1j * 0.7))
    assert m[1, 1] == pytest.approx(-3.0)
    assert m[0, 0] == pytest.approx(0.0)
    assert np.allclose(m, m.conj().T)


def test_segment_ramp_interpolation():
    seg = DriveSegment(targets=(0,), transition=("g0", "r"),
                       omega=1.0, omega_end=3.0, delta=0.0, delta_end=-4.0)
    m0 = segment_local_matrix(GR, seg, s=0.0)
    m1 = segment_local_matrix(GR, seg, s=1.0)
    mh = segment_local_matrix(GR, seg, s=0.5)
    assert m0[0, 1] == pytest.approx(0.5)
    assert m1[0, 1] == pytest.approx(1.5)
    assert mh[0, 1] == pytest.approx(1.0)
    assert mh[1, 1] == pytest.approx(2.0)


def test_drive_operator_pi_pulse_is_minus_i_x():
    reg = build_lattice("chain", 1, 4.0, scheme=GR)
    seg = DriveSegment(targets=(0,), transition=("g0", "r"), omega=2.0)
    h = drive_operator(seg, reg)
    u = scipy.linalg.expm(-1j * h * (math.pi / 2.0))  # Omega t = pi
    assert np.allclose(u, [[0, -1j], [-1j, 0]], atol=1e-12)


def test_drive_operator_embeds_on_targets_only():
    reg = build_lattice("chain", 2, 4.0, scheme=GR)
    seg = DriveSegment(targets=(1,), transition=("g0", "r"), omega=2.0)
    h = drive_operator(seg, reg)
    # acts as identity on site 0: block structure I (x) h_local
    local = segment_local_matrix(GR, seg)
    assert np.allclose(h, np.kron(np.eye(2), local))


# ---------------------------------------------------------------------------
# Ising / PXP


def test_ising_projector_form_two_site_matrix():
    model = nn_chain_model("ising", 2, v_nn=5.0, omega=2.0, delta=3.0)
    h = dense(ising_projector_form(model))
    # drive (Omega/2) X_j, detuning -Delta n_j, interaction V n_j n_k
    expect = np.zeros((4, 4), dtype=complex)
    for idx, (n0, n1) in enumerate([(0, 0), (0, 1), (1, 0), (1, 1)]):
        expect[idx, idx] = -3.0 * (n0 + n1) + 5.0 * (n0 * n1)
    expect[0, 1] = expect[1, 0] = 1.0  # site 1 flip
    expect[0, 2] = expect[2, 0] = 1.0  # site 0 flip
    expect[1, 3] = expect[3, 1] = 1.0
    expect[2, 3] = expect[3, 2] = 1.0
    assert np.allclose(h, expect)


def test_ising_spin_form_equals_projector_form_up_to_identity():
    model = nn_chain_model("ising", 3, v_nn=4.0, omega=1.3, delta=-0.7)
    diff = dense(ising_hamiltonian(model)) - dense(ising_projector_form(model))
    off = diff - np.diag(np.diag(diff))
    assert np.allclose(off, 0.0, atol=1e-12)
    d = np.diag(diff)
    assert np.allclose(d, d[0], atol=1e-12)  # constant energy offset only


def test_ising_per_site_fields():
    table = np.zeros((2, 2))
    model = ManyBodyModel("ising", table,
                          omega=np.array([2.0, 0.0]),
                          delta=np.array([0.0, 7.0]))
    h = dense(ising_hamiltonian(model))
    # site 0 is the most significant bit: its flips connect 0<->2, 1<->3
    assert h[0, 2] == pytest.approx(1.0)   # site 0 driven at Omega/2
    assert h[1, 3] == pytest.approx(1.0)
    assert h[0, 1] == pytest.approx(0.0)   # site 1 not driven
    assert h[2, 3] == pytest.approx(0.0)
    hp = dense(ising_projector_form(model))
    assert hp[1, 1] == pytest.approx(-7.0)  # detuning only on site 1


def test_ising_zero_drive_is_diagonal_classical_energy():
    model = nn_chain_model("ising", 3, v_nn=2.0, omega=0.0, delta=1.0)
    h = dense(ising_projector_form(model))
    assert np.allclose(h, np.diag(np.diag(h)))
    # |111> energy: -3 Delta + 2 V_nn
    assert h[-1, -1] == pytest.approx(-3.0 + 4.0)


def test_pxp_dimension_follows_fibonacci():
    # open chain with nearest-neighbour blockade: dim = F(n+2)
    fib = [1, 1]
    while len(fib) < 20:
        fib.append(fib[-1] + fib[-2])
    for n in (1, 2, 3, 6, 10):
        reg = build_lattice("chain", n, 5.0)
        graph = blockade_graph(reg, 6.0)
        h, basis = pxp_hamiltonian(n, graph)
        assert len(basis) == fib[n + 1], n
    # n = 3 explicitly: states 000, 001, 010, 100, 101
    reg = build_lattice("chain", 3, 5.0)
    h, basis = pxp_hamiltonian(3, blockade_graph(reg, 6.0))
    assert len(basis) == 5


def test_pxp_hamiltonian_action():
    # N=2, blockaded pair: basis {00, 01, 10}; flips couple 00 <-> 01, 10
    reg = build_lattice("chain", 2, 5.0)
    h, basis = pxp_hamiltonian(2, blockade_graph(reg, 6.0), omega=2.0)
    assert basis == [0, 1, 2]
    expect = np.array([[0, 1, 1], [1, 0, 0], [1, 0, 0]], dtype=float)
    assert np.allclose(dense(h), expect)


def test_pxp_respects_independent_set_basis():
    reg = build_lattice("ring", 6, 5.0)
    graph = blockade_graph(reg, 6.0)
    h, basis = pxp_hamiltonian(6, graph)
    assert basis == independent_set_basis(6, graph.edges)
    hm = dense(h)
    assert np.allclose(hm, hm.conj().T)


# ---------------------------------------------------------------------------
# XY / XXZ


def test_xy_flip_flop_transfer():
    model = nn_chain_model("xy", 2, v_nn=3.0)
    h = dense(xy_hamiltonian(model))
    # |01> and |10> exchange with matrix element J/2
    assert h[1, 2] == pytest.approx(1.5)
    assert h[2, 1] == pytest.approx(1.5)
    # full transfer after t = pi / J
    psi = np.zeros(4, dtype=complex)
    psi[1] = 1.0
    u = scipy.linalg.expm(-1j * h * (math.pi / 3.0))
    assert abs((u @ psi)[2]) == pytest.approx(1.0, abs=1e-12)


def test_xy_conserves_excitation_number():
    model = nn_chain_model("xy", 3, v_nn=2.0, delta=0.5)
    h = dense(xy_hamiltonian(model))
    n_op = np.zeros((8, 8))
    for idx in range(8):
        n_op[idx, idx] = bin(idx).count("1")
    assert np.allclose(h @ n_op, n_op @ h)


def test_xxz_reduces_to_xy_at_zero_anisotropy():
    m_xy = nn_chain_model("xy", 3, v_nn=2.0, delta=0.3)
    m_xxz = nn_chain_model("xxz", 3, v_nn=2.0, delta=0.3, anisotropy=0.0)
    assert np.allclose(dense(xy_hamiltonian(m_xy)),
                       dense(xxz_hamiltonian(m_xxz)))


def test_xxz_anisotropy_adds_zz_with_site_shift():
    m0 = nn_chain_model("xxz", 2, v_nn=4.0, anisotropy=0.0)
    m1 = nn_chain_model("xxz", 2, v_nn=4.0, anisotropy=0.5)
    dh = dense(xxz_hamiltonian(m1)) - dense(xxz_hamiltonian(m0))
    # (delta J / 4) Z Z plus the per-site shift -(1/2) I_j Z_j with
    # I_j = sum_k delta J_jk; here delta J = 2, so I = 2 per site
    zz = 0.5 * np.diag([1.0, -1.0, -1.0, 1.0])
    shift = -1.0 * np.diag([2.0, 0.0, 0.0, -2.0])
    assert np.allclose(dh, zz + shift)
    # the difference is diagonal: anisotropy never touches flip terms
    assert np.allclose(dh - np.diag(np.diag(dh)), 0.0)


def test_model_validation():
    with pytest.raises(ValueError):
        ManyBodyModel("heisenberg", np.zeros((2, 2)))
    with pytest.raises(ValueError):
        ManyBodyModel("ising", np.array([[0.0, 1.0], [2.0, 0.0]]))
    with pytest.raises(ValueError):
        ManyBodyModel("ising", np.zeros((2, 3)))


@given(st.integers(min_value=2, max_value=4),
       st.sampled_from(["ising", "xy", "xxz"]),
       st.floats(min_value=-5, max_value=5),
       st.floats(min_value=0, max_value=5))
@settings(max_examples=30, deadline=None)
def test_many_body_hamiltonians_hermitian(n, name, delta, omega):
    rng = np.random.default_rng(41)
    table = rng.normal(size=(n, n))
    table = table + table.T
    np.fill_diagonal(table, 0.0)
    model = ManyBodyModel(name, table, omega=omega, delta=delta,
                          anisotropy=0.3)
    builder = {"ising": ising_hamiltonian, "xy": xy_hamiltonian,
               "xxz": xxz_hamiltonian}[name]
    h = dense(builder(model))
    assert np.allclose(h, h.conj().T, atol=1e-12)


# ---------------------------------------------------------------------------
# crystal phase boundaries


def test_phase_boundaries_reference_values():
    # delta_q = V zeta(6) ((q+1)/q^6 - q/(q+1)^6) for 1/R^6 couplings
    zeta6 = 1.0173430619844491
    vals = phase_boundaries(1.0, 6, 3)
    expect1 = zeta6 * (2.0 - 1.0 / 64.0)
    expect2 = zeta6 * (3.0 / 64.0 - 2.0 / 729.0)
    expect3 = zeta6 * (4.0 / 729.0 - 3.0 / 4096.0)
    assert vals[0] == pytest.approx(expect1, rel=1e-12)
    assert vals[1] == pytest.approx(expect2, rel=1e-12)
    assert vals[2] == pytest.approx(expect3, rel=1e-12)
    assert vals[0] == pytest.approx(2.0188, abs=2e-4)
    assert vals[1] == pytest.approx(0.044897, abs=2e-5)
    assert vals[2] == pytest.approx(0.004837, abs=2e-6)


def test_phase_boundaries_scale_and_order():
    vals = phase_boundaries(3.0, 6, 4)
    ones = phase_boundaries(1.0, 6, 4)
    assert np.allclose(vals, 3.0 * np.asarray(ones))
    assert all(a > b > 0 for a, b in zip(vals, vals[1:]))
    with pytest.raises(ValueError):
        phase_boundaries(1.0, 6, 0)
    with pytest.raises(ValueError):
        phase_boundaries(1.0, 1, 2)


# ---------------------------------------------------------------------------
# two-photon reduction


def test_effective_two_photon_formulas():
    om, de, ga, gb = effective_two_photon(1.0, 1.5, 100.0, delta_2ph=0.2,
                                          gamma_e=0.4)
    assert om == pytest.approx(1.0 * 1.5 / 200.0)
    assert de == pytest.approx(0.2 + (1.0**2 - 1.5**2) / 400.0)
    assert ga == pytest.approx(1.0**2 * 0.4 / (4 * 100.0**2))
    assert gb == pytest.approx(1.5**2 * 0.4 / (4 * 100.0**2))


def test_effective_two_photon_symmetric_drive_has_no_light_shift():
    _, de, _, _ = effective_two_photon(2.0, 2.0, 50.0)
    assert de == pytest.approx(0.0)


def test_effective_two_photon_guards():
    with pytest.raises(ValueError):
        effective_two_photon(1.0, 1.0, 0.0)
    with pytest.warns(UserWarning):
        effective_two_photon(1.0, 1.0, 5.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        effective_two_photon(1.0, 1.0, 100.0)  # well separated: no warning


# ---------------------------------------------------------------------------
# output


def test_write_operator_csv(tmp_path):
    model = nn_chain_model("ising", 2, v_nn=2.0, omega=0.0, delta=-1.0)
    path = tmp_path / "op.csv"
    write_operator_csv(ising_projector_form(model), path)
    lines = path.read_text().splitlines()
    assert lines[0] == "row,col,re_rad_per_us,im_rad_per_us"
    # diagonal entries: |01>, |10> at +1, |11> at 2 + 2 = 4
    assert "1,1,1.0,0.0" in lines
    assert "3,3,4.0,0.0" in lines
