"""Tests for the constrained phase-field solver."""

import numpy as np
import pytest

from svilc.chi import (
    check_feed_capacity,
    ChiField,
    chi_energy,
    combine_feeds,
    current_distribution,
    dressed_orbitals,
    enumerate_patterns,
    FeedSpec,
    loop_background,
    loop_parities,
    multiplier_currents,
    node_divergence,
    site_gauge,
    solve_chi,
    solve_patterns,
    WindingPattern,
)
from svilc.exceptions import (
    FeedError,
    InfeasibleFeedError,
    LatticeError,
    PatternError,
)
from svilc.lattice import build_lattice, LatticeSpec, plaquette_loop_basis
from svilc.meanfield import build_svq_texture, HubbardParams, scf_solve


def plaquette_meanfield(t=130.0):
    """Four electrons on a single plaquette threaded by half a flux quantum."""
    graph = build_lattice(LatticeSpec(nx=2, ny=2))
    params = HubbardParams(t=t, U=0.0, n_electrons=4)
    initial = build_svq_texture(
        graph, [((1.5, 1.5), 1)], n_electrons=4, allow_unbalanced=True
    )
    meanfield = scf_solve(params, initial, graph, bond_signs=[-1.0, 1.0, 1.0, 1.0])
    return meanfield, plaquette_loop_basis(graph)


def open_meanfield():
    """Six electrons on a 3x3 lattice without spin vortices."""
    graph = build_lattice(LatticeSpec(nx=3, ny=3))
    params = HubbardParams(t=1.0, U=0.0, n_electrons=6)
    initial = build_svq_texture(graph, [], n_electrons=6)
    return scf_solve(params, initial, graph), plaquette_loop_basis(graph)


def random_vortex_meanfield(rng):
    """One spin vortex on a random masked lattice with random repulsion."""
    while True:
        width, height = (int(v) for v in rng.integers(3, 5, size=2))
        barriers = {
            (int(rng.integers(1, width + 1)), int(rng.integers(1, height + 1)))
            for _ in range(int(rng.integers(0, 3)))
        }
        spec = LatticeSpec(nx=width, ny=height, barrier_sites=frozenset(barriers))
        try:
            graph = build_lattice(spec)
        except LatticeError:
            continue
        basis = plaquette_loop_basis(graph)
        unit = [k for k in range(basis.n_loops) if np.isclose(basis.areas[k], 1.0)]
        if unit:
            break
    center = tuple(float(c) for c in basis.centroids[rng.choice(unit)])
    n_electrons = graph.n_sites - 1
    U = float(rng.choice([0.0, 1.0, 2.0]))
    params = HubbardParams(t=1.0, U=U, n_electrons=n_electrons)
    initial = build_svq_texture(
        graph, [(center, 1)], n_electrons=n_electrons, allow_unbalanced=True
    )
    return scf_solve(params, initial, graph), basis


def test_plaquette_bond_density():
    meanfield, basis = plaquette_meanfield()
    assert np.array_equal(loop_parities(meanfield, basis), [1])
    assert np.allclose(meanfield.bond_density, 1 / np.sqrt(2))


def test_plaquette_energy_and_scan():
    t = 130.0
    meanfield, basis = plaquette_meanfield(t)
    state = solve_chi(meanfield, basis, WindingPattern((1,), label="+"))
    assert state.converged
    assert state.energy == pytest.approx(-4 * t, rel=1e-10)
    assert np.allclose(np.abs(state.bond_currents), 0.5)
    assert np.allclose(state.chi.circulations(basis), [2 * np.pi])
    assert np.allclose(node_divergence(meanfield.graph, state.bond_currents), 0.0)

    background = loop_background(basis, [1])
    direction = meanfield.graph.gradient.toarray()[:, 1]
    scan = np.linspace(-np.pi, np.pi, 2001)
    energies = np.array(
        [
            chi_energy(
                ChiField(delta=background + s * direction, phases=[s]), meanfield
            )
            for s in scan
        ]
    )
    assert scan[np.argmin(energies)] == pytest.approx(0.0, abs=np.pi / 1000)
    assert energies.min() == pytest.approx(state.energy, rel=1e-6)


def test_reversed_winding_has_same_energy():
    meanfield, basis = plaquette_meanfield()
    patterns = enumerate_patterns(meanfield, basis)
    assert [p.label for p in patterns] == ["+", "-"]
    up, down = solve_patterns(meanfield, basis, patterns, n_jobs=1)
    assert up.energy == pytest.approx(down.energy, rel=1e-10)
    assert np.allclose(up.bond_currents, -down.bond_currents)


def test_parity_violation_raises():
    meanfield, basis = plaquette_meanfield()
    with pytest.raises(PatternError):
        solve_chi(meanfield, basis, WindingPattern((0,)))
    with pytest.raises(PatternError):
        solve_chi(meanfield, basis, WindingPattern((1, 0)))


def test_feed_beyond_capacity_raises():
    meanfield, basis = plaquette_meanfield()
    feed = FeedSpec.uniform([(1, 1)], [(2, 2)], magnitude=5.0)
    with pytest.raises(InfeasibleFeedError):
        solve_chi(meanfield, basis, WindingPattern((1,)), feed)


@pytest.mark.parametrize("magnitude", [30.0, 1e3])
def test_large_feeds_are_bounded_by_the_lattice(magnitude):
    meanfield, _ = plaquette_meanfield()
    graph = meanfield.graph
    feed = FeedSpec.uniform([(1, 1)], [(2, 2)], magnitude=magnitude)
    with pytest.raises(InfeasibleFeedError, match="capacity 1.4142"):
        check_feed_capacity(meanfield, feed.injections(graph))

    small = FeedSpec.uniform([(1, 1)], [(2, 2)], magnitude=0.5)
    assert check_feed_capacity(meanfield, small.injections(graph)) == pytest.approx(
        0.5
    )


def test_feed_conservation_and_current_consistency():
    meanfield, basis = open_meanfield()
    graph = meanfield.graph
    pattern = WindingPattern((0,) * basis.n_loops)
    rng = np.random.default_rng(7)
    sites = [tuple(int(v) for v in site) for site in graph.coordinates]
    for _ in range(25):
        source, drain = rng.choice(len(sites), size=2, replace=False)
        feed = FeedSpec.uniform(
            [sites[source]], [sites[drain]], magnitude=rng.uniform(0.01, 0.1)
        )
        state = solve_chi(meanfield, basis, pattern, feed)
        currents = state.bond_currents
        scale = np.max(np.abs(currents))

        divergence = node_divergence(graph, currents)
        assert np.allclose(divergence, feed.injections(graph), atol=1e-9)
        assert np.allclose(state.chi.circulations(basis), 0.0, atol=1e-10)
        assert np.max(
            np.abs(multiplier_currents(state, basis, meanfield) - currents)
        ) <= 1e-6 * scale
        assert np.max(
            np.abs(current_distribution(state, meanfield) - currents)
        ) <= 1e-6 * scale


def test_random_vortex_feeds_conserve_current():
    rng = np.random.default_rng(2024)
    n_checked = 0
    for _ in range(20):
        meanfield, basis = random_vortex_meanfield(rng)
        graph = meanfield.graph
        patterns = enumerate_patterns(meanfield, basis)
        assert len(patterns) == 2
        sites = [tuple(int(v) for v in site) for site in graph.coordinates]
        for _ in range(5):
            pattern = patterns[int(rng.integers(len(patterns)))]
            source, drain = rng.choice(len(sites), size=2, replace=False)
            feed = FeedSpec.uniform(
                [sites[source]], [sites[drain]], magnitude=rng.uniform(0.005, 0.03)
            )
            state = solve_chi(meanfield, basis, pattern, feed)
            currents = state.bond_currents
            scale = np.max(np.abs(currents))

            divergence = node_divergence(graph, currents)
            assert np.allclose(divergence, feed.injections(graph), atol=1e-9)
            assert np.allclose(
                state.chi.circulations(basis), 2 * np.pi * pattern.array, atol=1e-9
            )
            assert np.max(
                np.abs(multiplier_currents(state, basis, meanfield) - currents)
            ) <= 1e-6 * scale
            assert np.max(
                np.abs(current_distribution(state, meanfield) - currents)
            ) <= 1e-6 * scale
            n_checked += 1
    assert n_checked == 100


@pytest.mark.parametrize("case", ["vortex", "feed"])
def test_bond_twist_changes_energy_by_the_current(case):
    if case == "vortex":
        meanfield, basis = plaquette_meanfield(t=1.0)
        feed = FeedSpec()
        state = solve_chi(meanfield, basis, WindingPattern((1,)))
    else:
        meanfield, basis = open_meanfield()
        feed = FeedSpec.uniform([(1, 1)], [(3, 3)], magnitude=0.05)
        state = solve_chi(meanfield, basis, WindingPattern((0,) * 4), feed)
    graph = meanfield.graph
    t = meanfield.params.t
    phases = state.chi.phases
    distributed = current_distribution(state, meanfield)
    assert np.max(np.abs(state.bond_currents)) > 0.01

    def slope(direction, eps=1e-5):
        energies = [
            chi_energy(ChiField(state.chi.delta + s * direction, phases), meanfield)
            for s in (eps, -eps)
        ]
        return (energies[0] - energies[1]) / (2 * eps)

    for bond in range(graph.n_bonds):
        twist = np.zeros(graph.n_bonds)
        twist[bond] = 1.0
        assert slope(twist) == pytest.approx(-t * state.bond_currents[bond], abs=1e-7)
        assert slope(twist) == pytest.approx(-t * distributed[bond], abs=1e-7)

    # Moving one site phase costs exactly the work done by the feed there
    injections = feed.injections(graph)
    gradient = graph.gradient.toarray()
    for site in range(graph.n_sites):
        assert slope(gradient[:, site]) == pytest.approx(t * injections[site], abs=1e-6)


def test_global_phase_shift_leaves_state_unchanged():
    meanfield, basis = random_vortex_meanfield(np.random.default_rng(5))
    graph = meanfield.graph
    pattern = enumerate_patterns(meanfield, basis)[0]
    sites = [tuple(int(v) for v in site) for site in graph.coordinates]
    feed = FeedSpec.uniform([sites[0]], [sites[-1]], magnitude=0.02)
    injections = feed.injections(graph)
    state = solve_chi(meanfield, basis, pattern, feed)

    background = loop_background(basis, pattern.windings)
    assert np.allclose(background + graph.gradient @ state.chi.phases, state.chi.delta)
    for shift in (0.3, -2.0, np.pi):
        phases = state.chi.phases + shift
        shifted = ChiField(delta=background + graph.gradient @ phases, phases=phases)
        assert np.allclose(shifted.delta, state.chi.delta, atol=1e-10)
        assert chi_energy(shifted, meanfield) == pytest.approx(state.energy, abs=1e-10)
        assert injections @ phases == pytest.approx(
            injections @ state.chi.phases, abs=1e-10
        )

    gauge = site_gauge(graph, state.chi.delta, meanfield.bond_signs)
    i, j = graph.bonds[:, 0], graph.bonds[:, 1]
    expected = meanfield.bond_signs * np.exp(-0.5j * state.chi.delta)
    assert np.allclose(gauge[i].conj() * gauge[j], expected)

    coefficients = dressed_orbitals(state, meanfield)
    n_occupied = coefficients.shape[1]
    assert np.allclose(coefficients.conj().T @ coefficients, np.eye(n_occupied))
    rotated = np.exp(0.7j) * coefficients
    overlap = np.linalg.det(coefficients.conj().T @ rotated)
    assert abs(overlap) == pytest.approx(1.0)


def test_zero_feed_without_vortices_carries_no_current():
    meanfield, basis = open_meanfield()
    state = solve_chi(meanfield, basis, WindingPattern((0,) * basis.n_loops))
    assert np.allclose(state.bond_currents, 0.0)
    assert state.energy == pytest.approx(meanfield.kinetic_energy)
    assert state.total_energy == pytest.approx(meanfield.total_energy)


def test_feed_spec_validation():
    with pytest.raises(FeedError, match="balance"):
        FeedSpec(sources=(((1, 1), 1.0),), drains=(((2, 2), 0.5),))
    with pytest.raises(FeedError):
        FeedSpec(sources=(((1, 1), -1.0),), drains=(((2, 2), -1.0),))


def test_scaled_feed_swaps_direction():
    feed = FeedSpec.uniform([(1, 1)], [(3, 3)])
    reversed_feed = feed.scaled(-0.5)
    assert reversed_feed.sources == (((3, 3), 0.5),)
    assert reversed_feed.drains == (((1, 1), 0.5),)
    assert feed.scaled(2.0).total == pytest.approx(2.0)


def test_combine_feeds():
    feeds = {
        "A": FeedSpec.uniform([(1, 1)], [(3, 1)]),
        "B": FeedSpec.uniform([(1, 3)], [(3, 3)]),
    }
    combined = combine_feeds(feeds, {"A": 0.2, "B": -0.1})
    assert combined.total == pytest.approx(0.3)
    assert set(combined.sites) == {(1, 1), (3, 1), (1, 3), (3, 3)}
    assert combine_feeds(feeds, {"A": 0.0}).total == 0.0
    with pytest.raises(FeedError):
        combine_feeds(feeds, {"C": 1.0})


def test_feed_site_outside_lattice_raises():
    graph = build_lattice(LatticeSpec(nx=3, ny=3))
    with pytest.raises(FeedError):
        FeedSpec.uniform([(0, 0)], [(3, 3)]).injections(graph)
