"""Shared fixtures: small registers and interaction helpers."""

import numpy as np
import pytest

from rydsim.register import GR, GG_R, Register, build_lattice
from rydsim.gates import coupling_for


@pytest.fixture
def pair_gr():
    """Two-site chain, ground-Rydberg scheme, 4 um apart."""
    return build_lattice("chain", 2, 4.0, scheme=GR)


@pytest.fixture
def pair_gg_r():
    """Two-site chain, two ground states + one Rydberg, 4 um apart."""
    return build_lattice("chain", 2, 4.0, scheme=GG_R)


@pytest.fixture
def triple_gg_r():
    """Three-site chain for multi-qubit gates."""
    return build_lattice("chain", 3, 4.0, scheme=GG_R)


def vdw_for(register: Register, v_nn: float):
    """Van der Waals channel normalized to v_nn at the first pair."""
    return coupling_for(register, 0, 1, v_nn)
