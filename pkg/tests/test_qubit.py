"""Tests for qubit layouts, labels, crossings and curvature fits."""

from dataclasses import replace

import numpy as np
import pytest

from svilc.chi import ChiField, CurrentState, FeedSpec, WindingPattern
from svilc.data import THREE_QUBIT_LABELS
from svilc.exceptions import LayoutError
from svilc.lattice import build_lattice, plaquette_loop_basis
from svilc.qubit import (
    assemble_layout,
    column_bonds,
    Crossing,
    dcq_patterns,
    desk_layout,
    find_crossings,
    fit_parabolas,
    label_sort_key,
    label_states,
    ParabolaFit,
    qubit_coupling,
    refine_crossings,
    SpectrumSweep,
    svq_vortices,
    SweepSpec,
    three_dcq_layout,
)


def synthetic_state(currents, label=""):
    n = len(currents)
    return CurrentState(
        winding=WindingPattern((), label=label),
        feed=FeedSpec(),
        chi=ChiField(delta=np.zeros(n), phases=np.zeros(1)),
        multipliers=np.zeros(0),
        bond_currents=np.asarray(currents, dtype=float),
        energy=0.0,
        interaction_energy=0.0,
        converged=True,
        regularized=False,
        iterations=0,
        stationarity=0.0,
    )


def test_svq_vortices_balance():
    vortices = svq_vortices((4.5, 4.5), 1.0)
    assert sum(w for _, w in vortices) == 0
    assert ((3.5, 5.5), 1) in vortices
    assert ((5.5, 3.5), 1) in vortices


def test_three_dcq_layout():
    layout = assemble_layout("paper-3dcq")
    spec = layout.lattice
    assert (spec.nx, spec.ny) == (112, 15)
    assert layout.n_qubits == 3
    assert len(layout.vortices) == 12
    assert {x for x, _ in spec.barrier_sites} == {30, 32, 82, 84}
    assert {y for _, y in spec.barrier_sites} == set(range(2, 15))
    assert (30, 1) not in spec.barrier_sites
    assert (30, 15) not in spec.barrier_sites
    assert layout.feeds["J4"].drains == (((31, 1), 1.0), ((37, 15), 1.0))
    assert set(layout.feeds) == {"J1", "J2", "J3", "J4", "J5"}


def test_three_dcq_layout_with_fewer_rows_moves_feeds():
    layout = assemble_layout("paper-3dcq", ny=14)
    assert layout.lattice.ny == 14
    assert ((6, 14), 1.0) in layout.feeds["J1"].sources
    assert all(site[1] <= 14 for feed in layout.feeds.values() for site in feed.sites)


def test_three_dcq_patterns():
    layout = three_dcq_layout()
    graph = build_lattice(layout.lattice)
    basis = plaquette_loop_basis(graph)
    patterns = dcq_patterns(layout, basis)
    assert len(patterns) == 8
    assert len({p.windings for p in patterns}) == 8
    for pattern in patterns:
        assert np.count_nonzero(pattern.array) == 12
        assert np.sum(pattern.array) == 0
    assert layout.electrons(graph) == graph.n_sites - 12


def test_desk_layout_patterns():
    layout = assemble_layout("desk-1svq")
    graph = build_lattice(layout.lattice)
    basis = plaquette_loop_basis(graph)
    patterns = dcq_patterns(layout, basis)
    assert [p.label for p in patterns] == ["+", "-"]
    plus = patterns[0].array
    assert plus[basis.loop_at((3.5, 5.5))] == 1
    assert plus[basis.loop_at((3.5, 3.5))] == 1
    assert plus[basis.loop_at((5.5, 5.5))] == -1
    assert plus[basis.loop_at((5.5, 3.5))] == -1
    assert np.array_equal(patterns[1].array, -plus)
    assert layout.electrons(graph) == 60


def test_unknown_preset_raises():
    with pytest.raises(LayoutError):
        assemble_layout("five-qubits")


def test_feed_on_barrier_raises():
    layout = three_dcq_layout()
    feeds = dict(layout.feeds)
    feeds["bad"] = FeedSpec.uniform([(2, 1)], [(30, 5)])
    with pytest.raises(LayoutError, match="barrier"):
        assemble_layout(replace(layout, feeds=feeds))


def test_vortex_ring_outside_lattice_raises():
    layout = replace(desk_layout(), svq_centers=((1.5, 4.5),), half_spacing=1.0)
    with pytest.raises(LayoutError, match="outside"):
        assemble_layout(layout)


def test_duplicate_feed_site_raises():
    layout = desk_layout()
    feeds = {"J1": FeedSpec.uniform([(3, 1), (3, 1)], [(6, 1), (3, 8)])}
    with pytest.raises(LayoutError, match="more than once"):
        assemble_layout(replace(layout, feeds=feeds))


def test_label_sort_order():
    labels = sorted(
        ["UUU", "DDD", "UDU", "DDU", "UUD", "DUU", "UDD", "DUD"], key=label_sort_key
    )
    assert tuple(labels) == THREE_QUBIT_LABELS
    assert sorted(["D", "U"], key=label_sort_key) == ["U", "D"]


def test_label_states_from_column_currents():
    layout = desk_layout()
    graph = build_lattice(layout.lattice)
    bonds = column_bonds(graph, (4.5, 4.5), 1.0)
    assert len(bonds) == 2
    for bond in bonds:
        (x1, y1), (x2, y2) = graph.coordinates[graph.bonds[bond]]
        assert x1 == x2 and x1 in (4, 5)
        assert (y1, y2) == (4, 5)

    up = np.zeros(graph.n_bonds)
    up[bonds] = 0.3
    states = [
        synthetic_state(up, "+"),
        synthetic_state(-up, "-"),
        synthetic_state(np.zeros(graph.n_bonds), "0"),
    ]
    labels = label_states(states, layout, graph)
    assert [label.label for label in labels] == ["U", "D", "?"]
    assert labels[0].currents == pytest.approx((0.3,))
    assert labels[2].ambiguous


def test_sweep_values():
    single = SweepSpec(name="J4", parameter="J4", grid=(0.0, 0.1), fixed={"J1": 0.2})
    assert single.values_at(0.1) == {"J1": 0.2, "J4": 0.1}
    assert single.feed_names == {"J1", "J4"}

    locked = SweepSpec(
        name="split",
        parameter="J",
        grid=(0.0, 0.1),
        ratios={"J1": 1.0, "J2": 2.0, "J3": 4.0},
    )
    assert locked.values_at(0.1) == pytest.approx({"J1": 0.1, "J2": 0.2, "J3": 0.4})
    assert locked.feed_names == {"J1", "J2", "J3"}


def test_find_crossing_of_linear_levels():
    for grid in (np.linspace(0, 1, 11), np.linspace(0, 1, 10)):
        energies = np.column_stack([grid, 1 - grid])
        (crossing,) = find_crossings(grid, energies, ["A", "B"])
        assert crossing.value == pytest.approx(0.5)
        assert crossing.labels == ("A", "B")


def test_no_crossing_of_parallel_levels():
    grid = np.linspace(0, 1, 11)
    energies = np.column_stack([grid, grid + 1, grid ** 2 + 3])
    assert find_crossings(grid, energies, ["A", "B", "C"]) == []


def test_touching_levels_do_not_cross():
    grid = np.linspace(-1, 1, 5)
    energies = np.column_stack([grid ** 2, np.zeros(5)])
    assert find_crossings(grid, energies, ["A", "B"]) == []


def test_crossings_skip_failed_points():
    grid = np.linspace(0, 1, 11)
    energies = np.column_stack([grid, 1 - grid])
    energies[5] = np.nan
    (crossing,) = find_crossings(grid, energies, ["A", "B"])
    assert crossing.value == pytest.approx(0.5)
    assert crossing.index == 4


def synthetic_sweep(grid, energies, labels):
    spec = SweepSpec(name="test", parameter="J1", grid=tuple(grid))
    return SpectrumSweep(
        spec=spec,
        labels=tuple(labels),
        energies=energies,
        vectors=[None] * len(grid),
    )


def test_fit_parabolas():
    grid = np.linspace(-0.2, 0.2, 9)
    energies = np.column_stack(
        [3.0 * grid ** 2 - grid + 2.0, np.full(9, 5.0), -2.0 * grid ** 2]
    )
    energies[2, 2] = np.nan
    fits = fit_parabolas(synthetic_sweep(grid, energies, ["U", "D", "?"]))
    assert fits["U"].coefficients == pytest.approx((3.0, -1.0, 2.0))
    assert fits["U"].r_squared == pytest.approx(1.0)
    assert fits["D"].r_squared == 1.0
    assert fits["?"].curvature == pytest.approx(-2.0)

    frame = synthetic_sweep(grid, energies, ["U", "D", "?"]).frame()
    assert list(frame.columns) == [
        "J1 (2et/hbar)",
        "E_U (meV)",
        "E_D (meV)",
        "E_? (meV)",
    ]


def test_fit_parabolas_needs_three_points():
    grid = np.array([0.0, 0.1])
    with pytest.raises(ValueError):
        fit_parabolas(synthetic_sweep(grid, np.zeros((2, 1)), ["U"]))


def test_qubit_coupling_from_curvatures():
    def fit(label, curvature):
        return ParabolaFit(label, (curvature, 0.0, 0.0), 1.0)

    signs = {"U": 1, "D": -1}
    fits = {
        label: fit(label, 1.0 + 0.5 * signs[label[0]] * signs[label[1]])
        for label in ("UU", "UD", "DU", "DD")
    }
    fits["U?"] = fit("U?", 100.0)
    assert qubit_coupling(fits, 0, 1) == pytest.approx(0.5)


def test_crossing_without_later_solved_point_is_kept():
    grid = np.linspace(0, 1, 5)
    energies = np.column_stack([grid, 1 - grid])
    energies[3:] = np.nan
    sweep = synthetic_sweep(grid, energies, ["A", "B"])
    crossing = Crossing(("A", "B"), 0.5, 2)
    # Nothing is solved when no bracket exists, so no system is needed
    (kept,) = refine_crossings(None, sweep, [crossing])  # type: ignore[arg-type]
    assert kept == crossing
    assert not kept.refined
