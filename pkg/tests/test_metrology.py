"""Fidelity estimators, coherence conversions, and depth metric."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rydsim.metrology import (
    DepthEstimate,
    InfiniteDepthError,
    bell_fidelity_estimate,
    bell_overlap,
    coherence_conversions,
    dsquare,
    echo_contrast,
    ghz_fidelity_bound,
    ghz_parity,
    parity_scan,
    rabi_damping_time,
    staggered_coherence,
    truth_table_fidelity,
    write_depth_csv,
)


def bell_state(components=("01", "10")):
    n = len(components[0])
    psi = np.zeros(2 ** n, dtype=complex)
    psi[int(components[0], 2)] = 1 / math.sqrt(2)
    psi[int(components[1], 2)] = 1 / math.sqrt(2)
    return psi


def dephased_bell(p, components=("01", "10")):
    """p * |Bell><Bell| + (1 - p) * diagonal part."""
    psi = bell_state(components)
    rho = np.outer(psi, psi.conj())
    return p * rho + (1 - p) * np.diag(np.diag(rho))


def ghz(n):
    psi = np.zeros(2 ** n, dtype=complex)
    pat1 = int("10" * (n // 2) + "1" * (n % 2), 2)
    pat2 = int("01" * (n // 2) + "0" * (n % 2), 2)
    psi[pat1] = psi[pat2] = 1 / math.sqrt(2)
    return psi


# ---------------------------------------------------------------------------
# parity scans and Bell fidelity


def test_parity_scan_bell_state_contrast():
    thetas = np.linspace(0.0, 2 * math.pi, 81)
    scan = parity_scan(bell_state(), thetas)
    assert scan.contrast == pytest.approx(1.0, abs=1e-6)
    assert scan.residual < 1e-7
    # parity oscillates at 2 theta: values repeat with period pi
    half = parity_scan(bell_state(), thetas + math.pi)
    assert np.allclose(scan.values, half.values, atol=1e-9)
    assert np.max(np.abs(scan.values)) <= 1 + 1e-9


def test_parity_scan_product_state_flat():
    psi = np.zeros(4, dtype=complex)
    psi[1] = 1.0  # |01>
    scan = parity_scan(psi, np.linspace(0, math.pi, 41))
    assert scan.contrast == pytest.approx(0.0, abs=1e-9)


def test_parity_contrast_tracks_coherence():
    thetas = np.linspace(0, math.pi, 61)
    for p in (0.0, 0.3, 0.8, 1.0):
        scan = parity_scan(dephased_bell(p), thetas)
        assert scan.contrast == pytest.approx(p, abs=1e-7), p


def test_bell_fidelity_estimate_formula():
    pops = {"01": 0.5, "10": 0.5}
    assert bell_fidelity_estimate(pops, 1.0) == pytest.approx(1.0)
    assert bell_fidelity_estimate(pops, 0.0) == pytest.approx(0.5)
    uneven = {"01": 0.4, "10": 0.4}
    assert bell_fidelity_estimate(uneven, 0.6) == pytest.approx(0.7)


def test_bell_estimator_matches_exact_overlap_on_dephased_family():
    thetas = np.linspace(0, math.pi, 61)
    for p in np.linspace(0.0, 1.0, 11):
        rho = dephased_bell(p)
        pops = {"01": float(np.real(rho[1, 1])),
                "10": float(np.real(rho[2, 2]))}
        contrast = parity_scan(rho, thetas).contrast
        estimate = bell_fidelity_estimate(pops, contrast)
        assert estimate == pytest.approx(bell_overlap(rho), abs=1e-9), p


def test_fully_dephased_bell_fidelity_half():
    assert bell_overlap(dephased_bell(0.0)) == pytest.approx(0.5)


@given(st.floats(min_value=0.0, max_value=1.0))
@settings(max_examples=20, deadline=None)
def test_parity_values_bounded(p):
    scan = parity_scan(dephased_bell(p), np.linspace(0, 2 * math.pi, 31))
    assert np.all(np.abs(scan.values) <= 1 + 1e-9)
    assert 0 <= scan.contrast <= 1 + 1e-9


# ---------------------------------------------------------------------------
# truth tables


def test_truth_table_perfect_permutation():
    ideal = np.abs(np.array([[1, 0], [0, 1]], dtype=float))
    tt = truth_table_fidelity(np.eye(2), ideal)
    assert tt.fidelity == pytest.approx(1.0)
    assert tt.survival == pytest.approx(1.0)


def test_truth_table_uniform_output():
    ideal = np.eye(4)
    tt = truth_table_fidelity(np.full((4, 4), 0.25), ideal)
    assert tt.fidelity == pytest.approx(0.25)


def test_truth_table_loss_excluded_from_fidelity():
    # half the shots lose the atom but the surviving ones are perfect
    tt = truth_table_fidelity(0.5 * np.eye(2), np.eye(2))
    assert tt.fidelity == pytest.approx(1.0)
    assert tt.survival == pytest.approx(0.5)
    with pytest.raises(ValueError):
        truth_table_fidelity(np.full((2, 2), 0.9), np.eye(2))


# ---------------------------------------------------------------------------
# GHZ witnesses


def test_ghz_parity_oscillates_at_n_fold_frequency():
    n = 4
    psi = ghz(n)
    phis = np.linspace(0, 2 * math.pi, 201)
    signal = np.array([ghz_parity(psi, p) for p in phis])
    spectrum = np.abs(np.fft.rfft(signal - signal.mean()))
    assert int(np.argmax(spectrum)) == n  # dominant harmonic at N phi
    assert np.max(np.abs(signal)) == pytest.approx(1.0, abs=1e-9)


def test_ghz_parity_product_state_has_no_n_component():
    psi = np.zeros(16, dtype=complex)
    psi[0] = 1.0
    phis = np.linspace(0, 2 * math.pi, 201)
    signal = np.array([ghz_parity(psi, p) for p in phis])
    spectrum = np.abs(np.fft.rfft(signal - signal.mean()))
    assert spectrum[4] < 1e-9


def test_ghz_fidelity_bound_and_coherence():
    psi = ghz(4)
    assert staggered_coherence(psi) == pytest.approx(0.5)
    assert ghz_fidelity_bound(psi) == pytest.approx(1.0)
    rho = np.outer(psi, psi.conj())
    mixed = 0.6 * rho + 0.4 * np.diag(np.diag(rho))
    assert staggered_coherence(mixed) == pytest.approx(0.3)
    assert ghz_fidelity_bound(mixed) == pytest.approx(0.8)


# ---------------------------------------------------------------------------
# coherence conversions


def test_coherence_conversion_chain():
    out = coherence_conversions(gamma=0.5)
    assert out["t2"] == pytest.approx(4.0)
    assert out["t_rabi"] == pytest.approx(8.0)
    # inverse direction
    back = coherence_conversions(t_rabi=8.0)
    assert back["gamma"] == pytest.approx(0.5)


def test_pi_pulse_error_example():
    # Omega = 4 pi rad/us with T_Rabi = 6 us -> eps_pi = 1/48
    out = coherence_conversions(t_rabi=6.0, omega=4 * math.pi)
    assert out["eps_pi"] == pytest.approx(1.0 / 48.0, rel=1e-12)
    assert out["eps_pi"] == pytest.approx(0.0208, abs=1e-4)


def test_coherence_conversions_guards():
    with pytest.raises(ValueError):
        coherence_conversions()
    with pytest.raises(ValueError):
        coherence_conversions(gamma=0.5, t2=4.0)
    with pytest.raises(ValueError):
        coherence_conversions(gamma=-1.0)


def test_rabi_damping_time_matches_t2():
    gamma = 0.05
    t_fit = rabi_damping_time(omega=10.0, gamma=gamma)
    assert t_fit == pytest.approx(4.0 / gamma, rel=0.1)


def test_echo_cancels_quasistatic_disorder():
    c = echo_contrast(sigma=0.5, tau=4.0)
    assert c > 0.999
    # without the echo the same disorder dephases a plain Ramsey decay:
    # contrast exp(-(sigma tau)^2 / 2) would be ~0.14 at these values
    finite = echo_contrast(sigma=0.5, tau=4.0, omega=50.0)
    assert finite > 0.99


# ---------------------------------------------------------------------------
# achievable depth


def test_dsquare_digital_example():
    est = dsquare("digital", fidelity=0.99)
    assert est.dsquare == 10
    assert est.n_gates == pytest.approx(50.0)
    assert est.epsilon == pytest.approx(0.01)


def test_dsquare_lifetime_examples():
    # 50 ns Rydberg time per gate, T1 = 5 us
    est = dsquare("lifetime", tau_cum=0.05, t1=5.0)
    assert est.epsilon == pytest.approx(0.01)
    assert (est.dsquare, est.n_gates) == (10, 50.0)
    # improved lifetime T1 = 100 us
    est = dsquare("lifetime", tau_cum=0.05, t1=100.0)
    assert (est.dsquare, est.n_gates) == (44, 968.0)


def test_dsquare_loss_example():
    # 1000 atoms, 50 ns gate, 100 s trap lifetime (times in us)
    est = dsquare("loss", n_atoms=1000, tau_g=0.05, t_trap=100e6)
    assert est.epsilon == pytest.approx(1e-6)
    assert est.dsquare == 1000
    assert est.n_gates == pytest.approx(5e5)


def test_dsquare_analog_source():
    est = dsquare("analog", v_max=2 * math.pi, t_coh=50.0)
    assert est.epsilon == pytest.approx(0.01)
    assert est.dsquare == 10


def test_dsquare_guards():
    with pytest.raises(InfiniteDepthError):
        dsquare("digital", fidelity=1.0)
    with pytest.raises(ValueError):
        dsquare("digital", fidelity=1.2)
    with pytest.raises(ValueError):
        dsquare("entropy", fidelity=0.9)
    with pytest.raises(TypeError):
        dsquare("digital", fidelity=0.9, extra=1.0)


@given(st.floats(min_value=1e-6, max_value=0.5),
       st.floats(min_value=1e-6, max_value=0.5))
@settings(max_examples=40, deadline=None)
def test_dsquare_monotone_in_error(e1, e2):
    lo, hi = sorted((e1, e2))
    d_lo = dsquare("digital", fidelity=1.0 - lo).dsquare
    d_hi = dsquare("digital", fidelity=1.0 - hi).dsquare
    assert d_lo >= d_hi


def test_write_depth_csv(tmp_path):
    est = dsquare("digital", fidelity=0.99)
    path = tmp_path / "depth.csv"
    write_depth_csv([est], path)
    lines = path.read_text().splitlines()
    assert lines[0] == "source,epsilon,dsquare,ngates"
    assert lines[1] == "digital,0.010000000000000009,10,50.0"
