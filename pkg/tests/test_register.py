"""Geometry, level schemes, and blockade-graph behaviour."""

import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from rydsim.register import (
    GR,
    GG_R,
    GG_RR,
    BlockadeGraph,
    LevelScheme,
    Register,
    blockade_graph,
    build_lattice,
    pair_geometry,
    write_positions_csv,
)
from rydsim.operators import independent_set_basis


# ---------------------------------------------------------------------------
# lattices


def test_chain_positions():
    reg = build_lattice("chain", 3, 5.0)
    assert np.allclose(reg.sites, [(0, 0, 0), (5, 0, 0), (10, 0, 0)])


def test_ring_chords_equal_spacing():
    reg = build_lattice("ring", 4, 4.0)
    for j in range(4):
        r, _ = pair_geometry(reg, j, (j + 1) % 4)
        assert r == pytest.approx(4.0, abs=1e-12)
    # the diagonal of a square ring is sqrt(2) times the side
    r, _ = pair_geometry(reg, 0, 2)
    assert r == pytest.approx(4.0 * math.sqrt(2.0), rel=1e-12)


def test_square_grid_counts_and_spacing():
    reg = build_lattice("square", (3, 2), 6.0)
    assert reg.n_sites == 6
    r, _ = pair_geometry(reg, 0, 3)
    assert r == pytest.approx(6.0)


def test_triangular_row_offset():
    reg = build_lattice("triangular", (2, 2), 4.0)
    # second row is shifted by half a spacing and sqrt(3)/2 rows up,
    # so every neighbour distance equals the spacing
    for j, k in ((0, 1), (0, 2), (1, 2), (1, 3), (2, 3)):
        r, _ = pair_geometry(reg, j, k)
        assert r == pytest.approx(4.0, rel=1e-12)


def test_staggered_chain_offset_and_tilt():
    reg = build_lattice("staggered_chain", 4, 6.0, offset=2.0, tilt=0.3)
    # same-sublattice separations stay collinear with the chain axis
    r02, th02 = pair_geometry(reg, 0, 2)
    assert r02 == pytest.approx(6.0, rel=1e-12)
    assert th02 == pytest.approx(0.3, abs=1e-12)
    # the second sublattice sits transverse to the axis
    r01, th01 = pair_geometry(reg, 0, 1)
    assert r01 == pytest.approx(2.0, rel=1e-12)
    assert th01 == pytest.approx(math.pi / 2 - 0.3, abs=1e-12)
    r12, _ = pair_geometry(reg, 1, 2)
    assert r12 == pytest.approx(math.hypot(6.0, 2.0), rel=1e-12)


def test_build_lattice_rejects_bad_input():
    with pytest.raises(ValueError):
        build_lattice("chain", 3, 0.0)
    with pytest.raises(ValueError):
        build_lattice("chain", 0, 5.0)
    with pytest.raises(ValueError):
        build_lattice("banana", 3, 5.0)


@given(n=st.integers(min_value=2, max_value=12),
       spacing=st.floats(min_value=0.5, max_value=20.0))
@settings(max_examples=30, deadline=None)
def test_ring_neighbour_chords_property(n, spacing):
    reg = build_lattice("ring", n, spacing)
    for j in range(n):
        r, _ = pair_geometry(reg, j, (j + 1) % n)
        assert r == pytest.approx(spacing, rel=1e-9)


# ---------------------------------------------------------------------------
# pair geometry


def test_pair_geometry_theta_convention():
    reg = Register(sites=np.array([(0.0, 0.0, 0.0), (3.0, 0.0, 0.0),
                                   (0.0, 0.0, 7.0)]))
    r, theta = pair_geometry(reg, 0, 1)
    assert r == pytest.approx(3.0)
    assert theta == pytest.approx(math.pi / 2)  # in-plane: perpendicular
    r, theta = pair_geometry(reg, 0, 2)
    assert r == pytest.approx(7.0)
    assert theta == pytest.approx(0.0)          # along quantization axis


def test_pair_geometry_symmetric_and_guards():
    reg = build_lattice("ring", 5, 4.0)
    for j in range(5):
        for k in range(j + 1, 5):
            assert pair_geometry(reg, j, k) == pair_geometry(reg, k, j)
    with pytest.raises(ValueError):
        pair_geometry(reg, 2, 2)


def test_theta_folded_into_first_quadrant():
    # antiparallel displacements describe the same physical pair, so
    # theta always lands in [0, pi/2]
    reg = Register(sites=np.array([(0.0, 0.0, 0.0), (1.0, 0.0, -2.0)]))
    _, theta = pair_geometry(reg, 0, 1)
    assert 0.0 <= theta <= math.pi / 2 + 1e-12


# ---------------------------------------------------------------------------
# register validation


def test_register_rejects_duplicate_positions():
    with pytest.raises(ValueError):
        Register(sites=np.array([(0.0, 0.0, 0.0), (0.0, 0.0, 0.0)]))


def test_register_per_site_schemes_and_species():
    reg = build_lattice("chain", 2, 5.0, scheme=GG_R, species="Rb")
    assert all(s == "Rb" for s in reg.species)
    assert all(sch is GG_R for sch in reg.schemes)


# ---------------------------------------------------------------------------
# level schemes


def test_level_scheme_labels_and_symbols():
    assert GR.labels == ("g0", "r")
    assert GG_R.labels == ("g0", "g1", "r")
    assert GG_RR.labels == ("g0", "g1", "r", "rp")
    # computational pair as local indices under the declared encoding
    assert GR.computational == (0, 1)
    assert GG_R.computational == (0, 1)
    assert [GG_R.symbol(i) for i in range(3)] == ["0", "1", "r"]
    assert GG_RR.symbol(3) == "p"


def test_level_scheme_index_and_alias():
    scheme = LevelScheme(("g0", "g1", "r", "r'"), "gg")
    assert scheme.labels[-1] == "rp"      # r' normalizes to rp
    assert scheme.index("rp") == 3
    assert scheme.index("r'") == 3
    assert scheme.dim == 4
    with pytest.raises(ValueError):
        scheme.index("g7")


def test_level_scheme_validation():
    with pytest.raises(ValueError):
        LevelScheme(("g0", "g0"), "gg")          # duplicate labels
    with pytest.raises(ValueError):
        LevelScheme(("g0", "x"), "gg")           # unknown label
    with pytest.raises(ValueError):
        LevelScheme(("g0", "r"), "gg")           # encoding needs g1
    with pytest.raises(ValueError):
        LevelScheme(("g0", "g1"), "xx")          # unknown encoding


# ---------------------------------------------------------------------------
# blockade graph


def test_blockade_graph_nearest_neighbour_window():
    reg = build_lattice("chain", 5, 5.0)
    g = blockade_graph(reg, 6.0)
    assert g.sorted_edges() == [(0, 1), (1, 2), (2, 3), (3, 4)]
    g2 = blockade_graph(reg, 11.0)
    assert (0, 2) in g2.edges and (0, 3) not in g2.edges


def test_blockade_graph_strict_inequality():
    # pairs exactly at the radius are NOT blockaded
    reg = build_lattice("chain", 3, 5.0)
    g = blockade_graph(reg, 5.0)
    assert g.edges == frozenset()


def test_blockade_graph_neighbors_and_selfedge_guard():
    g = BlockadeGraph(4, frozenset({(1, 0), (1, 2)}))
    assert g.neighbors(1) == (0, 2)
    assert g.neighbors(3) == ()
    with pytest.raises(ValueError):
        BlockadeGraph(3, frozenset({(1, 1)}))


def test_chain_independent_set_count_is_fibonacci():
    reg = build_lattice("chain", 10, 5.0)
    g = blockade_graph(reg, 6.0)
    basis = independent_set_basis(10, g.edges)
    assert len(basis) == 144


@given(st.floats(min_value=0.1, max_value=30.0),
       st.floats(min_value=0.1, max_value=30.0))
@settings(max_examples=40, deadline=None)
def test_blockade_graph_monotone_in_radius(r1, r2):
    reg = build_lattice("ring", 6, 5.0)
    small, large = sorted((r1, r2))
    g_small = blockade_graph(reg, small)
    g_large = blockade_graph(reg, large)
    assert g_small.edges <= g_large.edges


# ---------------------------------------------------------------------------
# output


def test_write_positions_csv(tmp_path):
    reg = build_lattice("chain", 2, 2.5)
    path = tmp_path / "pos.csv"
    write_positions_csv(reg, path)
    lines = path.read_text().splitlines()
    assert lines[0] == "site_index,x_um,y_um,z_um"
    assert lines[1] == "0,0.0,0.0,0.0"
    assert lines[2] == "1,2.5,0.0,0.0"
