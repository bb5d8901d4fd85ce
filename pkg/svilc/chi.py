"""Phase-field minimization under winding-number and feed-current constraints."""

from __future__ import annotations

from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass
import itertools
from typing import Optional

from joblib import delayed, Parallel
from loguru import logger
import numpy as np
from scipy.optimize import minimize
from scipy.sparse import csr_matrix, diags, identity
from scipy.sparse.csgraph import breadth_first_order, maximum_flow
from scipy.sparse.linalg import spsolve

from svilc import config
from svilc.exceptions import (
    ConvergenceError,
    FeedError,
    InfeasibleFeedError,
    PatternError,
)
from svilc.lattice import BondGraph, LoopBasis
from svilc.meanfield import MeanFieldSolution
from svilc.typing import Array1D, Array2D, Site


@dataclass(frozen=True)
class WindingPattern:
    """Target winding numbers of the phase field, one per basis loop."""

    windings: tuple[int, ...]
    label: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "windings", tuple(int(w) for w in self.windings))

    @property
    def array(self) -> Array1D:
        return np.array(self.windings, dtype=int)

    def reversed(self) -> WindingPattern:
        return WindingPattern(tuple(-w for w in self.windings), label=self.label)


@dataclass(frozen=True)
class FeedSpec:
    """External currents fed at sources and drained at drains.

    Args:
        sources: Sites and magnitudes (2et/hbar) of injected current
        drains: Sites and magnitudes (2et/hbar) of drained current

    Raises:
        FeedError: When a magnitude is negative or sources and drains do not balance
    """

    sources: tuple[tuple[Site, float], ...] = ()
    drains: tuple[tuple[Site, float], ...] = ()

    def __post_init__(self) -> None:
        for name in ("sources", "drains"):
            entries = tuple(
                ((int(site[0]), int(site[1])), float(magnitude))
                for site, magnitude in getattr(self, name)
            )
            if any(magnitude < 0 for _, magnitude in entries):
                raise FeedError(f"Feed {name} magnitudes must be non-negative.")
            object.__setattr__(self, name, entries)
        total_in = sum(m for _, m in self.sources)
        total_out = sum(m for _, m in self.drains)
        if abs(total_in - total_out) > 1e-12 * max(1.0, total_in):
            raise FeedError(
                f"Sources ({total_in}) and drains ({total_out}) do not balance."
            )

    @classmethod
    def uniform(
        cls, sources: Iterable[Site], drains: Iterable[Site], magnitude: float = 1.0
    ) -> FeedSpec:
        """Returns a feed with the same magnitude at every site."""
        return cls(
            sources=tuple((site, magnitude) for site in sources),
            drains=tuple((site, magnitude) for site in drains),
        )

    @property
    def total(self) -> float:
        return float(sum(m for _, m in self.sources))

    @property
    def sites(self) -> tuple[Site, ...]:
        return tuple(site for site, _ in self.sources + self.drains)

    def scaled(self, factor: float) -> FeedSpec:
        if factor < 0:
            return FeedSpec(
                sources=tuple((s, -factor * m) for s, m in self.drains),
                drains=tuple((s, -factor * m) for s, m in self.sources),
            )
        return FeedSpec(
            sources=tuple((s, factor * m) for s, m in self.sources),
            drains=tuple((s, factor * m) for s, m in self.drains),
        )

    def combined(self, other: FeedSpec) -> FeedSpec:
        return FeedSpec(
            sources=self.sources + other.sources, drains=self.drains + other.drains
        )

    def injections(self, graph: BondGraph) -> Array1D:
        """Returns the injected current per site, positive at sources.

        Raises:
            FeedError: When a feed site is not an active site
        """
        injections = np.zeros(graph.n_sites)
        for sign, entries in ((1.0, self.sources), (-1.0, self.drains)):
            for site, magnitude in entries:
                if not graph.has_site(site):
                    raise FeedError(f"Feed site {site} is not an active lattice site.")
                injections[graph.site_index(site)] += sign * magnitude
        return injections


def combine_feeds(
    feeds: Mapping[str, FeedSpec], values: Mapping[str, float]
) -> FeedSpec:
    """Returns the sum of named unit feeds scaled by their current values.

    Raises:
        FeedError: When a value refers to an undeclared feed
    """
    combined = FeedSpec()
    for name, value in values.items():
        if name not in feeds:
            raise FeedError(f"Feed {name!r} is not declared.")
        if value != 0:
            combined = combined.combined(feeds[name].scaled(value))
    return combined


@dataclass(frozen=True, eq=False)
class ChiField:
    """Phase differences per bond.

    Args:
        delta: chi_j - chi_i on each bond (i, j) (rad)
        phases: Gauge-reduced site variables on top of the loop background (rad)
    """

    delta: Array1D
    phases: Array1D

    def circulations(self, basis: LoopBasis) -> Array1D:
        circulations: Array1D = basis.incidence @ self.delta
        return circulations


@dataclass(frozen=True, eq=False)
class CurrentState:
    """Solved current-carrying state.

    Args:
        winding: Winding pattern
        feed: External feed
        chi: Phase field
        multipliers: Lagrange multiplier per basis loop (meV)
        bond_currents: Current i -> j per bond (2et/hbar)
        energy: Phase-dependent kinetic energy (meV)
        interaction_energy: Phase-independent Hartree-Fock energy (meV)
        converged: Whether the stationarity tolerance was reached
        regularized: Whether zero-stiffness bonds required a diagonal shift
        iterations: Minimizer iterations
        stationarity: Largest node-current imbalance (2et/hbar)
    """

    winding: WindingPattern
    feed: FeedSpec
    chi: ChiField
    multipliers: Array1D
    bond_currents: Array1D
    energy: float
    interaction_energy: float
    converged: bool
    regularized: bool
    iterations: int
    stationarity: float

    @property
    def label(self) -> str:
        return self.winding.label

    @property
    def total_energy(self) -> float:
        return self.energy + self.interaction_energy


def loop_parities(meanfield: MeanFieldSolution, basis: LoopBasis) -> Array1D:
    """Returns the parity of the spin-texture winding of every basis loop."""
    negative = (meanfield.bond_signs < 0).astype(float)
    counts = abs(basis.incidence) @ negative
    parities: Array1D = np.rint(counts).astype(int) % 2
    return parities


def check_parity(
    meanfield: MeanFieldSolution, basis: LoopBasis, winding: WindingPattern
) -> None:
    """Checks that winding + texture winding is even on every basis loop.

    Raises:
        PatternError: When the pattern length or parity is wrong
    """
    if len(winding.windings) != basis.n_loops:
        raise PatternError(
            f"Pattern has {len(winding.windings)} windings for {basis.n_loops} loops."
        )
    odd = np.flatnonzero((winding.array + loop_parities(meanfield, basis)) % 2)
    if len(odd) > 0:
        raise PatternError(
            f"Winding pattern {winding.label!r} breaks single-valuedness on loops "
            f"{odd.tolist()}."
        )


def enumerate_patterns(
    meanfield: MeanFieldSolution,
    basis: LoopBasis,
    vortex_loops: Optional[Sequence[int]] = None,
) -> list[WindingPattern]:
    """Returns all sign assignments of unit windings on the vortex loops.

    Every other loop gets winding 0. Labels list the signs in loop order.

    Args:
        meanfield: Mean-field solution
        basis: Loop basis
        vortex_loops: Indices of the vortex loops, the odd-parity loops by default

    Returns:
        patterns: 2**n_vortices patterns

    Raises:
        PatternError: When the vortex loops do not match the texture parities
    """
    parities = loop_parities(meanfield, basis)
    odd = set(np.flatnonzero(parities).tolist())
    if vortex_loops is None:
        vortex_loops = sorted(odd)
    vortex_loops = [int(k) for k in vortex_loops]
    missing = odd - set(vortex_loops)
    if missing:
        raise PatternError(f"Odd-parity loops {sorted(missing)} are not vortex loops.")
    even = [k for k in vortex_loops if k not in odd]
    if even:
        raise PatternError(f"Vortex loops {even} have even texture winding.")

    patterns = []
    for signs in itertools.product((1, -1), repeat=len(vortex_loops)):
        windings = np.zeros(basis.n_loops, dtype=int)
        windings[vortex_loops] = signs
        label = "".join("+" if s > 0 else "-" for s in signs)
        patterns.append(WindingPattern(tuple(windings.tolist()), label=label))
    logger.debug(f"Enumerated {len(patterns)} winding patterns.")

    return patterns


def loop_background(basis: LoopBasis, windings: Sequence[int]) -> Array1D:
    """Returns the minimum-norm bond phases with circulation 2 pi w on every loop."""
    n_bonds = basis.graph.n_bonds
    windings = np.asarray(windings, dtype=float)
    if basis.n_loops == 0 or not np.any(windings):
        return np.zeros(n_bonds)
    C = basis.incidence
    y = np.atleast_1d(spsolve(csr_matrix(C @ C.T).tocsc(), 2 * np.pi * windings))
    background: Array1D = C.T @ y
    return background


def bond_currents(delta: Array1D, meanfield: MeanFieldSolution) -> Array1D:
    """Returns the current i -> j on every bond (2et/hbar)."""
    currents: Array1D = np.imag(np.exp(-0.5j * delta) * meanfield.bond_density)
    return currents


def chi_energy(chi: ChiField, meanfield: MeanFieldSolution) -> float:
    """Returns the phase-dependent kinetic energy (meV).

    Phase-independent terms are in MeanFieldSolution.interaction_energy.
    """
    z = np.exp(-0.5j * chi.delta) * meanfield.bond_density
    return float(-2 * meanfield.params.t * np.sum(z.real))


def feed_path_flow(graph: BondGraph, injections: Array1D) -> Array1D:
    """Returns the unit-conductance potential flow carrying the feed."""
    if not np.any(injections):
        return np.zeros(graph.n_bonds)
    laplacian = graph.laplacian()[1:, 1:].tocsc()
    potential = np.concatenate(
        [[0.0], np.atleast_1d(spsolve(laplacian, injections[1:]))]
    )
    flow: Array1D = -(graph.gradient @ potential)
    return flow


def check_feed_capacity(meanfield: MeanFieldSolution, injections: Array1D) -> float:
    """Returns the maximum feed the bond densities can carry.

    The current on a bond never exceeds the modulus of its bond density, so the
    max flow with these capacities bounds any feasible feed.

    Raises:
        InfeasibleFeedError: When the requested feed exceeds the bound
    """
    graph = meanfield.graph
    n = graph.n_sites
    density = np.abs(meanfield.bond_density)
    # Integer capacities must stay within int32
    largest = max(
        float(np.max(density, initial=0.0)), float(np.sum(np.abs(injections)))
    )
    scale = config.FLOW_CAPACITY_SCALE
    if largest * scale > config.FLOW_CAPACITY_LIMIT:
        scale = config.FLOW_CAPACITY_LIMIT / largest
    sources = np.flatnonzero(injections > 0)
    drains = np.flatnonzero(injections < 0)
    capacity = np.floor(density * scale)
    i, j = graph.bonds[:, 0], graph.bonds[:, 1]
    rows = np.concatenate([i, j, np.full(len(sources), n), drains])
    cols = np.concatenate([j, i, sources, np.full(len(drains), n + 1)])
    data = np.concatenate(
        [
            capacity,
            capacity,
            np.ceil(injections[sources] * scale),
            np.ceil(-injections[drains] * scale),
        ]
    ).astype(np.int32)
    network = csr_matrix((data, (rows, cols)), shape=(n + 2, n + 2))
    network.sum_duplicates()
    capacity_max = maximum_flow(network, n, n + 1).flow_value / scale
    total = float(np.sum(injections[sources]))
    if total > capacity_max * (1 + 1e-9):
        raise InfeasibleFeedError(
            f"Feed of {total:.6f} exceeds the lattice capacity {capacity_max:.6f} "
            "(2et/hbar)."
        )
    return float(capacity_max)


def solve_chi(  # noqa: C901
    meanfield: MeanFieldSolution,
    basis: LoopBasis,
    winding: WindingPattern,
    feed: Optional[FeedSpec] = None,
    tol: float = config.CHI_GTOL,
    max_iter: int = config.CHI_MAX_ITER,
) -> CurrentState:
    """Minimizes the energy over phase fields with prescribed windings and feed.

    The phase differences are parametrized as delta = eta + G chi where eta is
    the minimum-norm one-form with the prescribed loop circulations and G the
    bond-site incidence, so loop constraints hold for every iterate. The feed
    enters as -t sum_j I_j chi_j, whose stationarity is Kirchhoff's law with
    the injected currents.

    Args:
        meanfield: Mean-field solution, held fixed
        basis: Loop basis
        winding: Winding pattern
        feed: External feed, none by default
        tol: Tolerance on the largest node-current imbalance (2et/hbar)
        max_iter: Maximum number of minimizer iterations

    Returns:
        state: Solved current state

    Raises:
        PatternError: When the pattern violates the parity constraint
        InfeasibleFeedError: When the feed cannot be carried
        ConvergenceError: When the minimizer does not converge
    """
    graph = meanfield.graph
    check_parity(meanfield, basis, winding)
    if feed is None:
        feed = FeedSpec()
    injections = feed.injections(graph)
    if np.any(injections):
        check_feed_capacity(meanfield, injections)

    rho = meanfield.bond_density
    background = loop_background(basis, winding.windings)
    G = graph.gradient[:, 1:].tocsr()
    injections_reduced = injections[1:]
    shift = config.KKT_REGULARIZATION
    regularized = False

    def delta_of(x: Array1D) -> Array1D:
        delta: Array1D = background + G @ x
        return delta

    def fun(x: Array1D) -> float:
        z = np.exp(-0.5j * delta_of(x)) * rho
        return float(-2 * np.sum(z.real) - injections_reduced @ x)

    def jac(x: Array1D) -> Array1D:
        currents = np.imag(np.exp(-0.5j * delta_of(x)) * rho)
        gradient: Array1D = -(G.T @ currents) - injections_reduced
        return gradient

    def stiffness(x: Array1D) -> Array1D:
        stiffness: Array1D = 0.5 * np.real(np.exp(-0.5j * delta_of(x)) * rho)
        return stiffness

    def hessp(x: Array1D, p: Array1D) -> Array1D:
        nonlocal regularized
        h = stiffness(x)
        product: Array1D = G.T @ (h * (G @ p))
        if np.min(np.abs(h), initial=np.inf) <= shift:
            regularized = True
            product = product + shift * p
        return product

    def hessian(x: Array1D) -> csr_matrix:
        nonlocal regularized
        h = stiffness(x)
        matrix = csr_matrix(G.T @ diags(h) @ G)
        if np.min(np.abs(h), initial=np.inf) <= shift:
            regularized = True
            matrix = csr_matrix(matrix + shift * identity(matrix.shape[0]))
        return matrix

    def imbalance(x: Array1D) -> float:
        return float(np.max(np.abs(jac(x)), initial=0.0))

    x = np.zeros(graph.n_sites - 1)
    iterations = 0
    if len(x) > 0:
        result = minimize(
            fun,
            x,
            jac=jac,
            hessp=hessp,
            method="trust-ncg",
            options={"gtol": tol, "maxiter": max_iter},
        )
        x, iterations = result.x, int(result.nit)

        # Newton polish when trust-ncg stalls short of the tolerance
        for _ in range(config.NEWTON_POLISH_STEPS):
            error = imbalance(x)
            if error <= tol:
                break
            step = np.atleast_1d(spsolve(hessian(x).tocsc(), -jac(x)))
            if not np.all(np.isfinite(step)) or imbalance(x + step) >= error:
                break
            x = x + step
            iterations += 1

        if imbalance(x) > tol:
            logger.warning(
                f"trust-ncg stalled at imbalance {imbalance(x):.3e}, "
                "falling back to conjugate gradients."
            )
            result = minimize(
                fun,
                x,
                jac=jac,
                method="CG",
                options={"gtol": tol, "maxiter": 50 * max_iter},
            )
            if np.all(np.isfinite(result.x)) and imbalance(result.x) < imbalance(x):
                x = result.x
            iterations += int(result.nit)

    error = imbalance(x) if len(x) > 0 else 0.0
    if not np.isfinite(error) or error > tol:
        message = (
            f"Phase field for pattern {winding.label!r} not converged: "
            f"node-current imbalance {error:.3e}."
        )
        if np.any(injections):
            raise InfeasibleFeedError(message + f" Feed total {feed.total:.4f}.")
        raise ConvergenceError(message)

    delta = delta_of(x)
    chi = ChiField(delta=delta, phases=np.concatenate([[0.0], x]))
    currents = bond_currents(delta, meanfield)
    t = meanfield.params.t

    # Multipliers from the divergence-free part of the current
    flow = feed_path_flow(graph, injections)
    if basis.n_loops > 0:
        C = basis.incidence
        multipliers = np.atleast_1d(
            spsolve(csr_matrix(C @ C.T).tocsc(), C @ (t * (currents - flow)))
        )
    else:
        multipliers = np.zeros(0)

    if regularized:
        logger.warning(f"Pattern {winding.label!r}: zero-stiffness bonds regularized.")
    state = CurrentState(
        winding=winding,
        feed=feed,
        chi=chi,
        multipliers=multipliers,
        bond_currents=currents,
        energy=chi_energy(chi, meanfield),
        interaction_energy=meanfield.interaction_energy,
        converged=True,
        regularized=regularized,
        iterations=iterations,
        stationarity=error,
    )
    logger.debug(
        f"Pattern {winding.label!r}: energy {state.energy:.8f} meV, "
        f"{iterations} iterations, imbalance {error:.2e}."
    )

    return state


def solve_patterns(
    meanfield: MeanFieldSolution,
    basis: LoopBasis,
    patterns: Sequence[WindingPattern],
    feed: Optional[FeedSpec] = None,
    tol: float = config.CHI_GTOL,
    n_jobs: int = config.N_JOBS,
) -> list[CurrentState]:
    """Solves independent patterns in parallel, returned in input order."""
    states: list[CurrentState] = Parallel(n_jobs=n_jobs)(
        delayed(solve_chi)(meanfield, basis, pattern, feed, tol) for pattern in patterns
    )
    return states


def multiplier_currents(
    state: CurrentState, basis: LoopBasis, meanfield: MeanFieldSolution
) -> Array1D:
    """Returns bond currents rebuilt from loop multipliers and the feed path flow."""
    graph = meanfield.graph
    flow = feed_path_flow(graph, state.feed.injections(graph))
    if basis.n_loops == 0:
        return flow
    currents: Array1D = basis.incidence.T @ state.multipliers / meanfield.params.t
    return currents + flow


def site_gauge(
    graph: BondGraph, delta: Array1D, bond_signs: Array1D
) -> Array1D:
    """Returns unit phases g_j with conj(g_i) g_j = s_ij exp(-i delta_ij / 2).

    Built along a breadth-first spanning tree from site 0; consistent on the
    remaining bonds when every loop satisfies the parity constraint.
    """
    order, predecessors = breadth_first_order(
        graph.adjacency_matrix(), 0, directed=False, return_predecessors=True
    )
    gauge = np.ones(graph.n_sites, dtype=complex)
    for v in order[1:]:
        u = predecessors[v]
        bond, orientation = graph.bond_index(int(u), int(v))
        phase = bond_signs[bond] * np.exp(-0.5j * delta[bond])
        gauge[v] = gauge[u] * (phase if orientation > 0 else np.conj(phase))
    return gauge


def dressed_orbitals(state: CurrentState, meanfield: MeanFieldSolution) -> Array2D:
    """Returns the occupied orbitals multiplied by the phase-field gauge factors."""
    gauge = site_gauge(meanfield.graph, state.chi.delta, meanfield.bond_signs)
    coefficients: Array2D = (
        np.repeat(gauge, 2)[:, None] * meanfield.orbitals.coefficients
    )
    return coefficients


def current_distribution(
    state: CurrentState, meanfield: MeanFieldSolution
) -> Array1D:
    """Returns bond currents as current-operator expectations of the dressed state.

    Args:
        state: Solved state
        meanfield: Mean-field solution the state was solved with

    Returns:
        currents: Current i -> j per bond (2et/hbar)
    """
    coefficients = dressed_orbitals(state, meanfield)
    graph = meanfield.graph
    i, j = graph.bonds[:, 0], graph.bonds[:, 1]
    up, down = coefficients[0::2], coefficients[1::2]
    hopping = np.einsum("bg,bg->b", up[i].conj(), up[j]) + np.einsum(
        "bg,bg->b", down[i].conj(), down[j]
    )
    currents: Array1D = hopping.imag
    return currents


def node_divergence(graph: BondGraph, currents: Array1D) -> Array1D:
    """Returns the net current flowing out of every site."""
    divergence: Array1D = -(graph.gradient.T @ currents)
    return divergence
