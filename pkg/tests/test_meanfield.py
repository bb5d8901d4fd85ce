"""Tests for the Hartree-Fock mean field."""

import numpy as np
import pytest

from svilc.exceptions import PatternError
from svilc.lattice import build_lattice, LatticeSpec, plaquette_loop_basis
from svilc.meanfield import (
    bond_signs_from_texture,
    build_svq_texture,
    hf_hamiltonian,
    HubbardParams,
    scf_solve,
    SpinField,
    texture_windings,
)
from svilc.qubit import desk_layout, svq_vortices


def collinear_uhf_energy(
    graph, t, U, n_electrons, polarization=0.0, tol=1e-12, max_iter=5000
):
    """Dense unrestricted Hartree-Fock with collinear spins."""
    n = graph.n_sites
    hopping = -t * graph.adjacency_matrix().toarray()
    x, y = graph.coordinates[:, 0], graph.coordinates[:, 1]
    stagger = np.where((x + y) % 2 == 0, 1.0, -1.0)
    n_up = 0.5 + 0.3 * stagger + polarization
    n_down = 0.5 - 0.3 * stagger - polarization
    for _ in range(max_iter):
        e_up, c_up = np.linalg.eigh(hopping + U * np.diag(n_down))
        e_down, c_down = np.linalg.eigh(hopping + U * np.diag(n_up))
        energies = np.concatenate([e_up, e_down])
        order = np.argsort(energies, kind="stable")[:n_electrons]
        up = order[order < n]
        down = order[order >= n] - n
        new_up = np.sum(c_up[:, up] ** 2, axis=1)
        new_down = np.sum(c_down[:, down] ** 2, axis=1)
        change = max(np.max(np.abs(new_up - n_up)), np.max(np.abs(new_down - n_down)))
        energy = np.sum(energies[order]) - U * np.sum(n_up * n_down)
        n_up = 0.5 * n_up + 0.5 * new_up
        n_down = 0.5 * n_down + 0.5 * new_down
        if change < tol:
            return energy
    raise RuntimeError("Oracle did not converge.")


def test_half_filled_energy_matches_collinear_oracle():
    graph = build_lattice(LatticeSpec(nx=4, ny=4))
    t = 130.0
    params = HubbardParams(t=t, U=8 * t, n_electrons=16)
    initial = build_svq_texture(graph, [], n_electrons=16)
    solution = scf_solve(params, initial, graph, tol=1e-11, max_iter=2000)
    reference = collinear_uhf_energy(graph, t, 8 * t, 16)
    assert solution.converged
    assert solution.total_energy == pytest.approx(reference, rel=1e-8)
    assert np.sum(solution.fields.density) == pytest.approx(16)

def test_on_site_blocks_have_hubbard_eigenvalues():
    graph = build_lattice(LatticeSpec(nx=2, ny=2))
    U = 5.0
    params = HubbardParams(t=1.0, U=U, n_electrons=4)
    rng = np.random.default_rng(0)
    fields = SpinField(
        density=np.array([1.0, 1.0, 2.0, 0.0]),
        magnitude=np.array([0.5, 0.5, 0.0, 0.0]),
        azimuth=rng.uniform(-np.pi, np.pi, size=4),
        polar=rng.uniform(0.0, np.pi, size=4),
    )
    h = hf_hamiltonian(params, fields, graph)
    expected = [[0.0, U], [0.0, U], [U, U], [0.0, 0.0]]
    for site in range(graph.n_sites):
        rows = slice(2 * site, 2 * site + 2)
        block = h[rows, rows]
        assert np.allclose(np.linalg.eigvalsh(block), expected[site])


def test_one_hole_plaquette_matches_collinear_oracle():
    graph = build_lattice(LatticeSpec(nx=2, ny=2))
    t = 130.0
    x, y = graph.coordinates[:, 0], graph.coordinates[:, 1]
    stagger = np.where((x + y) % 2 == 0, 1.0, -1.0)
    # Same start as the oracle, tilted so the two spin species never tie
    polarization = 0.05
    initial = SpinField.from_components(
        np.ones(4), 0.3 * stagger + polarization, np.zeros(4), np.zeros(4)
    )
    params = HubbardParams(t=t, U=8 * t, n_electrons=3)
    solution = scf_solve(params, initial, graph, tol=1e-11, max_iter=5000, mixing=0.5)
    reference = collinear_uhf_energy(graph, t, 8 * t, 3, polarization=polarization)
    assert solution.converged
    assert solution.total_energy == pytest.approx(reference, rel=1e-8)
    assert np.sum(solution.fields.density) == pytest.approx(3)


def test_desk_quartet_keeps_its_windings():
    layout = desk_layout()
    graph = build_lattice(layout.lattice)
    basis = plaquette_loop_basis(graph)
    n_electrons = layout.electrons(graph)
    assert n_electrons == 60
    t = 130.0
    params = HubbardParams(t=t, U=8 * t, n_electrons=n_electrons)
    initial = build_svq_texture(graph, layout.vortices, n_electrons=n_electrons)
    solution = scf_solve(params, initial, graph, basis=basis)

    expected = np.zeros(basis.n_loops, dtype=int)
    for point, w in layout.vortices:
        expected[basis.loop_at(point)] = w
    assert np.array_equal(texture_windings(graph, basis, initial.azimuth), expected)
    windings = texture_windings(graph, basis, solution.fields.azimuth)
    assert np.array_equal(windings, expected)
    assert np.sum(solution.fields.density) == pytest.approx(n_electrons)
    assert np.allclose(solution.fields.polar, np.pi / 2)



def test_half_filled_texture_is_staggered():
    graph = build_lattice(LatticeSpec(nx=4, ny=4))
    params = HubbardParams(t=130.0, U=8 * 130.0, n_electrons=16)
    initial = build_svq_texture(graph, [], n_electrons=16)
    solution = scf_solve(params, initial, graph, tol=1e-10, max_iter=2000)
    x, y = graph.coordinates[:, 0], graph.coordinates[:, 1]
    stagger = np.where((x + y) % 2 == 0, 1.0, -1.0)
    sx = solution.fields.sx
    assert np.all(np.sign(sx) == np.sign(sx[0]) * stagger)
    assert np.allclose(solution.fields.sz, 0.0)
    magnitude = solution.fields.magnitude.reshape(4, 4)
    assert np.allclose(magnitude, magnitude[:, ::-1])
    assert np.allclose(magnitude, magnitude[::-1, :])


def test_noninteracting_solution_is_immediate():
    graph = build_lattice(LatticeSpec(nx=3, ny=3))
    params = HubbardParams(t=1.0, U=0.0, n_electrons=6)
    initial = build_svq_texture(graph, [], n_electrons=6)
    solution = scf_solve(params, initial, graph)
    assert solution.converged
    assert solution.iterations == 1
    assert solution.residual == 0.0
    assert not solution.degenerate
    assert solution.orbitals.orthonormality_error() < 1e-12
    assert solution.total_energy == pytest.approx(
        2 * (-2 * np.sqrt(2) - 2 * np.sqrt(2))
    )
    assert np.allclose(solution.bond_signs, 1.0)


def test_hamiltonian_is_hermitian():
    graph = build_lattice(LatticeSpec(nx=4, ny=4))
    fields = build_svq_texture(graph, svq_vortices((2.5, 2.5), 1.0))
    h = hf_hamiltonian(HubbardParams(n_electrons=12), fields, graph)
    assert np.allclose(h, h.conj().T)


def test_texture_windings_and_sign_parity():
    graph = build_lattice(LatticeSpec(nx=8, ny=8))
    basis = plaquette_loop_basis(graph)
    vortices = svq_vortices((4.5, 4.5), 1.0)
    fields = build_svq_texture(graph, vortices)
    windings = texture_windings(graph, basis, fields.azimuth)
    expected = np.zeros(basis.n_loops, dtype=int)
    for point, w in vortices:
        expected[basis.loop_at(point)] = w
    assert np.array_equal(windings, expected)

    signs = bond_signs_from_texture(graph, fields.azimuth)
    negative = abs(basis.incidence) @ (signs < 0).astype(float)
    assert np.array_equal(np.rint(negative).astype(int) % 2, np.abs(expected) % 2)


def test_unbalanced_texture_raises():
    graph = build_lattice(LatticeSpec(nx=3, ny=3))
    with pytest.raises(PatternError):
        build_svq_texture(graph, [((1.5, 1.5), 1)])
    fields = build_svq_texture(graph, [((1.5, 1.5), 1)], allow_unbalanced=True)
    assert fields.n_sites == 9
    assert np.sum(fields.density) == pytest.approx(8)


def test_spin_field_vector_round_trip():
    fields = SpinField.from_components([1.0, 0.8], [0.3, 0.0], [0.0, -0.2], [0.0, 0.1])
    restored = SpinField.from_vector(fields.as_vector())
    assert np.allclose(restored.sx, fields.sx)
    assert np.allclose(restored.sy, fields.sy)
    assert np.allclose(restored.sz, fields.sz)


def test_invalid_settings_raise():
    graph = build_lattice(LatticeSpec(nx=2, ny=2))
    initial = build_svq_texture(graph, [], n_electrons=4)
    with pytest.raises(ValueError):
        HubbardParams(t=-1.0)
    with pytest.raises(ValueError):
        scf_solve(HubbardParams(n_electrons=4), initial, graph, mixing=1.5)
    with pytest.raises(ValueError):
        scf_solve(HubbardParams(n_electrons=9), initial, graph)
