"""Tests for lattice geometry and loop bases."""

import networkx as nx
import numpy as np
import pytest

from svilc.exceptions import LatticeError
from svilc.lattice import (
    barrier_columns,
    build_lattice,
    LatticeSpec,
    plaquette_loop_basis,
    site_ring,
    winding_number,
)
from svilc.utils import wrap_angle


def test_square_lattice_counts():
    graph = build_lattice(LatticeSpec(nx=3, ny=3))
    basis = plaquette_loop_basis(graph)
    assert graph.n_sites == 9
    assert graph.n_bonds == 12
    assert basis.n_loops == 4
    assert np.allclose(basis.areas, 1.0)
    assert np.allclose(basis.centroids[0], [1.5, 1.5])
    assert np.allclose(basis.centroids[-1], [2.5, 2.5])
    assert len(basis.boundary) == 8


def test_loops_are_closed_under_gradient():
    graph = build_lattice(LatticeSpec(nx=4, ny=3))
    basis = plaquette_loop_basis(graph)
    product = (basis.incidence @ graph.gradient).toarray()
    assert np.allclose(product, 0.0)
    assert np.allclose(graph.gradient @ np.ones(graph.n_sites), 0.0)


def test_cycle_rank_matches_networkx():
    barriers = barrier_columns([3], [2, 3]) | {(5, 5)}
    graph = build_lattice(LatticeSpec(nx=6, ny=5, barrier_sites=barriers))
    basis = plaquette_loop_basis(graph)
    reference = nx.Graph()
    reference.add_nodes_from(range(graph.n_sites))
    reference.add_edges_from(graph.bonds.tolist())
    assert basis.n_loops == len(nx.cycle_basis(reference))
    assert basis.n_loops == graph.n_bonds - graph.n_sites + 1


def random_lattices(seed, count):
    """Connected lattices with a few randomly placed barrier sites."""
    rng = np.random.default_rng(seed)
    graphs = []
    while len(graphs) < count:
        width, height = (int(v) for v in rng.integers(3, 7, size=2))
        n_barriers = int(rng.integers(0, width * height // 5 + 1))
        barriers = {
            (int(rng.integers(1, width + 1)), int(rng.integers(1, height + 1)))
            for _ in range(n_barriers)
        }
        spec = LatticeSpec(nx=width, ny=height, barrier_sites=frozenset(barriers))
        try:
            graphs.append(build_lattice(spec))
        except LatticeError:
            continue
    return graphs


def test_random_masks_keep_loop_invariants():
    rng = np.random.default_rng(11)
    for graph in random_lattices(seed=3, count=40):
        basis = plaquette_loop_basis(graph)
        reference = nx.Graph()
        reference.add_nodes_from(range(graph.n_sites))
        reference.add_edges_from(graph.bonds.tolist())
        assert basis.n_loops == len(nx.cycle_basis(reference))
        assert basis.n_loops == graph.n_bonds - graph.n_sites + 1
        if basis.n_loops:
            product = (basis.incidence @ graph.gradient).toarray()
            assert np.allclose(product, 0.0)

        # Interior bonds cancel between faces, leaving the outer boundary
        for _ in range(5):
            angles = rng.uniform(-np.pi, np.pi, size=graph.n_sites)
            windings = [winding_number(angles, loop, graph) for loop in basis.loops]
            assert sum(windings) == winding_number(angles, basis.boundary)
            if basis.n_loops:
                bond_twists = wrap_angle(graph.gradient @ angles)
                circulations = basis.incidence @ bond_twists
                assert np.allclose(circulations, 2 * np.pi * np.array(windings))


def test_vortex_winds_only_its_plaquette():
    for graph in random_lattices(seed=5, count=20):
        basis = plaquette_loop_basis(graph)
        unit = [k for k in range(basis.n_loops) if np.isclose(basis.areas[k], 1.0)]
        if not unit:
            continue
        x, y = graph.coordinates[:, 0], graph.coordinates[:, 1]
        first, last = basis.centroids[unit[0]], basis.centroids[unit[-1]]
        single = np.arctan2(y - first[1], x - first[0])
        windings = [winding_number(single, loop) for loop in basis.loops]
        expected = np.zeros(basis.n_loops, dtype=int)
        expected[unit[0]] = 1
        assert np.array_equal(windings, expected)
        assert winding_number(single, basis.boundary) == 1
        assert basis.loop_at(first) == unit[0]

        # Windings of superposed angle fields add loop by loop
        pair = single - np.arctan2(y - last[1], x - last[0])
        windings = [winding_number(pair, loop) for loop in basis.loops]
        expected[unit[-1]] -= 1
        assert np.array_equal(windings, expected)
        assert winding_number(pair, basis.boundary) == 0


def test_barrier_face_merges_plaquettes():
    graph = build_lattice(
        LatticeSpec(nx=5, ny=4, barrier_sites=barrier_columns([3], [2, 3]))
    )
    basis = plaquette_loop_basis(graph)
    assert graph.n_sites == 18
    assert graph.n_bonds == 24
    assert basis.n_loops == 7
    index = basis.loop_at((3.0, 2.5))
    assert len(basis.loops[index]) == 10
    assert basis.areas[index] == pytest.approx(6.0)


def test_disconnecting_barrier_raises():
    spec = LatticeSpec(nx=5, ny=3, barrier_sites=barrier_columns([3], [1, 2, 3]))
    with pytest.raises(LatticeError, match="disconnected"):
        build_lattice(spec)


def test_invalid_spec_raises():
    with pytest.raises(LatticeError):
        LatticeSpec(nx=0, ny=3)
    with pytest.raises(LatticeError):
        LatticeSpec(nx=3, ny=3, barrier_sites=frozenset({(4, 1)}))


def test_site_index_of_barrier_raises():
    graph = build_lattice(LatticeSpec(nx=3, ny=3, barrier_sites=frozenset({(2, 3)})))
    assert not graph.has_site((2, 3))
    with pytest.raises(LatticeError):
        graph.site_index((2, 3))


def test_site_rings():
    graph = build_lattice(LatticeSpec(nx=3, ny=3))
    assert site_ring(graph, (1.5, 1.5)) == (0, 1, 4, 3)
    ring = site_ring(graph, (2, 2))
    assert len(ring) == 8
    assert 4 not in ring


def test_winding_numbers():
    graph = build_lattice(LatticeSpec(nx=3, ny=3))
    x, y = graph.coordinates[:, 0], graph.coordinates[:, 1]
    angles = np.arctan2(y - 2, x - 2)
    assert winding_number(angles, site_ring(graph, (2, 2)), graph) == 1
    assert winding_number(-angles, site_ring(graph, (2, 2)), graph) == -1
    assert winding_number(angles, site_ring(graph, (1.5, 1.5)), graph) == 0

    ring = list(site_ring(graph, (2, 2)))
    assert winding_number(angles, ring + ring[:1]) == 1


def test_open_loop_raises():
    graph = build_lattice(LatticeSpec(nx=3, ny=3))
    with pytest.raises(LatticeError, match="not closed"):
        winding_number(np.zeros(9), [0, 1, 8], graph)


def test_wrap_angle_branch():
    assert wrap_angle(-np.pi) == pytest.approx(np.pi)
    assert wrap_angle(3 * np.pi) == pytest.approx(np.pi)
    assert np.allclose(wrap_angle(np.array([0.1, 2 * np.pi + 0.1])), [0.1, 0.1])
