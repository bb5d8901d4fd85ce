"""Hartree-Fock mean field of the Hubbard model with in-plane spin textures."""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass, field
from functools import cached_property
from typing import Literal, Optional

from loguru import logger
import numpy as np

from svilc import config
from svilc.data import TRANSFER_INTEGRAL_MEV, U_OVER_T
from svilc.exceptions import ChargeConservationError, ConvergenceError, PatternError
from svilc.lattice import BondGraph, LoopBasis, winding_number
from svilc.typing import Array1D, Array2D, ArrayLike1D, Point
from svilc.utils import wrap_angle


@dataclass(frozen=True)
class HubbardParams:
    """Parameters of the Hubbard model.

    Args:
        t: Transfer integral (meV)
        U: On-site repulsion (meV)
        n_electrons: Number of electrons
        zeta_fixed: Polar angle enforced at every site (rad), None to leave free

    Raises:
        ValueError: When a parameter is out of range
    """

    t: float = TRANSFER_INTEGRAL_MEV
    U: float = U_OVER_T * TRANSFER_INTEGRAL_MEV
    n_electrons: int = 0
    zeta_fixed: Optional[float] = np.pi / 2

    def __post_init__(self) -> None:
        if self.t <= 0:
            raise ValueError(f"t must be positive, got {self.t}.")
        if self.U < 0:
            raise ValueError(f"U must be non-negative, got {self.U}.")
        if self.n_electrons < 0:
            raise ValueError(
                f"n_electrons must be non-negative, got {self.n_electrons}."
            )


@dataclass(frozen=True, eq=False)
class SpinField:
    """Occupations and spins per site.

    Spin components follow S^x = S sin(zeta) cos(xi), S^y = S sin(zeta) sin(xi)
    and S^z = S cos(zeta).
    """

    density: Array1D
    magnitude: Array1D
    azimuth: Array1D
    polar: Array1D

    @classmethod
    def from_components(
        cls,
        density: ArrayLike1D,
        sx: ArrayLike1D,
        sy: ArrayLike1D,
        sz: ArrayLike1D,
    ) -> SpinField:
        sx, sy, sz = np.asarray(sx), np.asarray(sy), np.asarray(sz)
        in_plane = np.hypot(sx, sy)
        return cls(
            density=np.asarray(density, dtype=float),
            magnitude=np.sqrt(in_plane ** 2 + sz ** 2),
            azimuth=np.arctan2(sy, sx),
            polar=np.arctan2(in_plane, sz),
        )

    @classmethod
    def from_vector(cls, vector: Array1D) -> SpinField:
        density, sx, sy, sz = np.split(np.asarray(vector, dtype=float), 4)
        return cls.from_components(density, sx, sy, sz)

    @property
    def n_sites(self) -> int:
        return len(self.density)

    @property
    def sx(self) -> Array1D:
        return self.magnitude * np.sin(self.polar) * np.cos(self.azimuth)

    @property
    def sy(self) -> Array1D:
        return self.magnitude * np.sin(self.polar) * np.sin(self.azimuth)

    @property
    def sz(self) -> Array1D:
        cos_polar = np.cos(self.polar)
        cos_polar[np.isclose(self.polar, np.pi / 2, rtol=0, atol=1e-15)] = 0.0
        return self.magnitude * cos_polar

    def projected(self, zeta: float) -> SpinField:
        """Returns the field with the polar angle fixed and |S| kept."""
        return SpinField(
            density=self.density.copy(),
            magnitude=self.magnitude.copy(),
            azimuth=self.azimuth.copy(),
            polar=np.full(self.n_sites, float(zeta)),
        )

    def as_vector(self) -> Array1D:
        return np.concatenate([self.density, self.sx, self.sy, self.sz])


@dataclass(frozen=True, eq=False)
class OrbitalSet:
    """Occupied single-particle states.

    Args:
        coefficients: Occupied orbital amplitudes (2 n_sites, n_occupied), row 2j+sigma
        energies: All single-particle energies in ascending order (meV)
        n_occupied: Number of filled orbitals
    """

    coefficients: Array2D
    energies: Array1D
    n_occupied: int

    @property
    def up(self) -> Array2D:
        return self.coefficients[0::2]

    @property
    def down(self) -> Array2D:
        return self.coefficients[1::2]

    @property
    def occupied(self) -> Array1D:
        return np.arange(self.n_occupied)

    def orthonormality_error(self) -> float:
        overlap = self.coefficients.conj().T @ self.coefficients
        return float(np.max(np.abs(overlap - np.eye(self.n_occupied)), initial=0.0))


@dataclass(frozen=True, eq=False)
class MeanFieldSolution:
    """Self-consistent Hartree-Fock solution.

    Args:
        params: Hubbard parameters
        graph: Bond graph
        fields: Converged occupations and spins
        orbitals: Occupied orbitals of the final Hamiltonian
        total_energy: Hartree-Fock energy (meV)
        residual: Largest field change in the final iteration
        converged: Whether the residual reached the tolerance
        iterations: Number of iterations
        degenerate: Whether the highest occupied level is degenerate
        bond_signs: Branch-cut signs of the half-angle phase per bond
        energy_history: Energy per iteration (meV)
    """

    params: HubbardParams
    graph: BondGraph
    fields: SpinField
    orbitals: OrbitalSet
    total_energy: float
    residual: float
    converged: bool
    iterations: int
    degenerate: bool
    bond_signs: Array1D
    energy_history: tuple[float, ...] = field(default_factory=tuple)

    @cached_property
    def bond_density(self) -> Array1D:
        """Sign-dressed bond density s_ij sum_sigma <c_i^dag c_j> per bond (complex)."""
        i, j = self.graph.bonds[:, 0], self.graph.bonds[:, 1]
        up, down = self.orbitals.up, self.orbitals.down
        rho = np.einsum("bg,bg->b", up[i].conj(), up[j]) + np.einsum(
            "bg,bg->b", down[i].conj(), down[j]
        )
        bond_density: Array1D = self.bond_signs * rho
        return bond_density

    @property
    def kinetic_energy(self) -> float:
        return float(-2 * self.params.t * np.sum(self.bond_density.real))

    @property
    def interaction_energy(self) -> float:
        """Hartree-Fock on-site energy, independent of the phase field (meV)."""
        fields = self.fields
        return float(
            self.params.U * np.sum((fields.density / 2) ** 2 - fields.magnitude ** 2)
        )


def texture_angles(graph: BondGraph, azimuth: ArrayLike1D) -> Array1D:
    """Returns the azimuth with the antiferromagnetic pi(x+y) background removed."""
    x, y = graph.coordinates[:, 0], graph.coordinates[:, 1]
    angles: Array1D = wrap_angle(np.asarray(azimuth) - np.pi * (x + y))
    return angles


def texture_windings(
    graph: BondGraph, basis: LoopBasis, azimuth: ArrayLike1D
) -> Array1D:
    """Returns the spin-texture winding number of every basis loop."""
    angles = texture_angles(graph, azimuth)
    return np.array([winding_number(angles, loop) for loop in basis.loops], dtype=int)


def bond_signs_from_texture(graph: BondGraph, azimuth: ArrayLike1D) -> Array1D:
    """Returns the signs picked up by the half-angle factor exp(-i xi/2) on each bond.

    A bond crossing a branch cut of the texture angle flips sign, so the product
    of signs around a loop is (-1) to the power of its texture winding.
    """
    angles = texture_angles(graph, azimuth)
    raw = angles[graph.bonds[:, 1]] - angles[graph.bonds[:, 0]]
    cuts = np.rint((raw - wrap_angle(raw)) / (2 * np.pi)).astype(int)
    signs: Array1D = np.where(cuts % 2 == 0, 1.0, -1.0)
    return signs


def build_svq_texture(
    graph: BondGraph,
    vortex_centers: Sequence[tuple[Point, int]],
    n_electrons: Optional[int] = None,
    magnitude: float = config.SEED_MAGNITUDE,
    allow_unbalanced: bool = False,
    noise: float = 0.0,
    seed: Optional[int] = None,
) -> SpinField:
    """Returns an antiferromagnetic spin texture with vortices as SCF seed.

    Args:
        graph: Bond graph
        vortex_centers: Vortex centers and winding numbers
        n_electrons: Number of electrons, one hole per vortex by default
        magnitude: Initial spin magnitude
        allow_unbalanced: Accept a nonzero winding sum
        noise: Standard deviation of random azimuth noise (rad)
        seed: Seed for the noise

    Returns:
        fields: Initial fields with polar angle pi/2

    Raises:
        PatternError: When the winding sum is nonzero and not allowed
    """
    vortex_centers = [((float(c[0]), float(c[1])), int(w)) for c, w in vortex_centers]
    total = sum(w for _, w in vortex_centers)
    if total != 0:
        message = f"Vortex windings sum to {total}."
        if not allow_unbalanced:
            raise PatternError(message + " Pass allow_unbalanced=True to override.")
        logger.warning(message)

    centers = np.array([c for c, _ in vortex_centers], dtype=float).reshape(-1, 2)
    windings = np.array([w for _, w in vortex_centers], dtype=int)
    for k in range(len(centers)):
        distances = np.linalg.norm(centers - centers[k], axis=1)
        distances[k] = np.inf
        if len(centers) > 1 and windings[np.argmin(distances)] == windings[k]:
            logger.warning(
                f"Vortex at {tuple(centers[k])} has the same winding as its "
                "nearest neighbor."
            )

    x, y = graph.coordinates[:, 0], graph.coordinates[:, 1]
    azimuth = np.pi * (x + y).astype(float)
    for (cx, cy), w in vortex_centers:
        azimuth += w * np.arctan2(y - cy, x - cx)
    if noise > 0:
        rng = np.random.default_rng(seed)
        azimuth += noise * rng.standard_normal(graph.n_sites)

    if n_electrons is None:
        n_electrons = graph.n_sites - len(vortex_centers)
    n_sites = graph.n_sites

    return SpinField(
        density=np.full(n_sites, n_electrons / n_sites),
        magnitude=np.full(n_sites, magnitude),
        azimuth=azimuth,
        polar=np.full(n_sites, np.pi / 2),
    )


def hf_hamiltonian(
    params: HubbardParams,
    fields: SpinField,
    graph: BondGraph,
    bond_signs: Optional[ArrayLike1D] = None,
) -> Array2D:
    """Returns the Hartree-Fock one-body matrix.

    Basis index 2j + sigma with sigma = 0 (up), 1 (down).

    Args:
        params: Hubbard parameters
        fields: Occupations and spins
        graph: Bond graph
        bond_signs: Hopping signs per bond, all +1 by default

    Returns:
        h: Hermitian matrix (2 n_sites, 2 n_sites) in meV
    """
    n_sites = graph.n_sites
    if bond_signs is None:
        bond_signs = np.ones(graph.n_bonds)
    bond_signs = np.asarray(bond_signs, dtype=float)
    h = np.zeros((2 * n_sites, 2 * n_sites), dtype=complex)

    i, j = graph.bonds[:, 0], graph.bonds[:, 1]
    for sigma in (0, 1):
        h[2 * i + sigma, 2 * j + sigma] = -params.t * bond_signs
        h[2 * j + sigma, 2 * i + sigma] = -params.t * bond_signs

    U = params.U
    n_half = fields.density / 2
    sx, sy, sz = fields.sx, fields.sy, fields.sz
    up = 2 * np.arange(n_sites)
    down = up + 1
    h[up, up] = U * (n_half - sz)
    h[down, down] = U * (n_half + sz)
    h[up, down] = -U * (sx - 1j * sy)
    h[down, up] = -U * (sx + 1j * sy)

    return h


def fields_from_orbitals(coefficients: Array2D) -> SpinField:
    """Returns occupations and spins of occupied orbitals (2 n_sites, n_occupied)."""
    up, down = coefficients[0::2], coefficients[1::2]
    n_up = np.sum(np.abs(up) ** 2, axis=1)
    n_down = np.sum(np.abs(down) ** 2, axis=1)
    s_plus = np.sum(up.conj() * down, axis=1)
    return SpinField.from_components(
        n_up + n_down, s_plus.real, s_plus.imag, 0.5 * (n_up - n_down)
    )


def _diagonalize(h: Array2D) -> tuple[Array1D, Array2D]:
    if not np.any(h.imag):
        return np.linalg.eigh(h.real)
    return np.linalg.eigh(h)


def _anderson_step(
    inputs: list[Array1D], residuals: list[Array1D], mixing: float
) -> Array1D:
    x, f = inputs[-1], residuals[-1]
    if len(inputs) < 2:
        return x + mixing * f
    delta_x = np.column_stack([b - a for a, b in zip(inputs[:-1], inputs[1:])])
    delta_f = np.column_stack([b - a for a, b in zip(residuals[:-1], residuals[1:])])
    gamma = np.linalg.lstsq(delta_f, f, rcond=None)[0]
    x_next: Array1D = x + mixing * f - (delta_x + mixing * delta_f) @ gamma
    return x_next


def scf_solve(  # noqa: C901
    params: HubbardParams,
    initial: SpinField,
    graph: BondGraph,
    tol: float = config.SCF_TOL,
    max_iter: int = config.SCF_MAX_ITER,
    mixing: float = config.SCF_MIXING,
    scheme: Literal["linear", "anderson"] = "linear",
    history: int = config.ANDERSON_HISTORY,
    bond_signs: Optional[ArrayLike1D] = None,
    basis: Optional[LoopBasis] = None,
    raise_on_failure: bool = False,
) -> MeanFieldSolution:
    """Solves the Hartree-Fock equations self-consistently.

    Each iteration diagonalizes the one-body matrix, fills the lowest
    n_electrons orbitals, recomputes occupations and spins, projects the polar
    angle and mixes.

    Args:
        params: Hubbard parameters
        initial: Initial fields
        graph: Bond graph
        tol: Tolerance on the largest field change
        max_iter: Maximum number of iterations
        mixing: Mixing parameter
        scheme: 'linear' or 'anderson'
        history: Number of previous iterates used by Anderson mixing
        bond_signs: Hopping signs, derived from the initial texture by default
        basis: Loop basis used to check that texture windings are retained
        raise_on_failure: Raise instead of returning the best iterate

    Returns:
        solution: Converged solution, or the best iterate flagged non-converged

    Raises:
        ValueError: When the solver settings are invalid
        ChargeConservationError: When the electron count drifts
        ConvergenceError: When not converged and raise_on_failure is True
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}.")
    if not 0 < mixing <= 1:
        raise ValueError(f"mixing must be in (0, 1], got {mixing}.")
    if scheme not in ("linear", "anderson"):
        raise ValueError(f"Mixing scheme {scheme!r} not supported.")
    n_electrons = params.n_electrons
    if n_electrons > 2 * graph.n_sites:
        raise ValueError(
            f"{n_electrons} electrons do not fit on {graph.n_sites} sites."
        )

    if bond_signs is None:
        bond_signs = bond_signs_from_texture(graph, initial.azimuth)
    bond_signs = np.asarray(bond_signs, dtype=float)
    zeta = params.zeta_fixed

    fields = initial
    charge = float(np.sum(fields.density))
    if abs(charge - n_electrons) > config.CHARGE_TOL:
        logger.warning(
            f"Initial occupations sum to {charge:.6f}, rescaling to {n_electrons}."
        )
        fields = SpinField(
            density=fields.density * n_electrons / max(charge, 1e-300),
            magnitude=fields.magnitude,
            azimuth=fields.azimuth,
            polar=fields.polar,
        )
    if zeta is not None:
        fields = fields.projected(zeta)

    inputs: list[Array1D] = []
    residuals: list[Array1D] = []
    energies: list[float] = []
    best: Optional[MeanFieldSolution] = None
    solution: Optional[MeanFieldSolution] = None
    for iteration in range(1, max_iter + 1):
        h = hf_hamiltonian(params, fields, graph, bond_signs)
        eigenvalues, eigenvectors = _diagonalize(h)
        occupied = eigenvectors[:, :n_electrons]
        fields_out = fields_from_orbitals(occupied)
        if zeta is not None:
            fields_out = fields_out.projected(zeta)

        drift = abs(float(np.sum(fields_out.density)) - n_electrons)
        if drift > config.CHARGE_TOL:
            raise ChargeConservationError(
                f"Electron count drifted by {drift:.3e} in iteration {iteration}."
            )

        energy = float(np.sum(eigenvalues[:n_electrons])) - params.U * float(
            np.sum((fields.density / 2) ** 2 - fields.magnitude ** 2)
        )
        x_in, x_out = fields.as_vector(), fields_out.as_vector()
        residual = 0.0 if params.U == 0 else float(np.max(np.abs(x_out - x_in)))
        logger.debug(
            f"SCF iteration {iteration:4d} energy {energy:16.8f} "
            f"residual {residual:.3e}"
        )
        if energies and energy > energies[-1] + 1e-10 * max(1.0, abs(energies[-1])):
            logger.warning(
                f"SCF energy increased by {energy - energies[-1]:.3e} meV "
                f"in iteration {iteration}."
            )
        energies.append(energy)

        degenerate = bool(
            0 < n_electrons < len(eigenvalues)
            and eigenvalues[n_electrons] - eigenvalues[n_electrons - 1]
            < config.DEGENERACY_TOL
        )
        candidate = MeanFieldSolution(
            params=params,
            graph=graph,
            fields=fields_out,
            orbitals=OrbitalSet(
                coefficients=occupied, energies=eigenvalues, n_occupied=n_electrons
            ),
            total_energy=energy,
            residual=residual,
            converged=residual <= tol,
            iterations=iteration,
            degenerate=degenerate,
            bond_signs=bond_signs,
            energy_history=tuple(energies),
        )
        if best is None or residual < best.residual:
            best = candidate
        if candidate.converged:
            solution = candidate
            break

        inputs.append(x_in)
        residuals.append(x_out - x_in)
        inputs, residuals = inputs[-(history + 1):], residuals[-(history + 1):]
        if scheme == "anderson":
            x_next = _anderson_step(inputs, residuals, mixing)
        else:
            x_next = x_in + mixing * (x_out - x_in)
        fields = SpinField.from_vector(x_next)
        if zeta is not None:
            fields = fields.projected(zeta)
        drift = abs(float(np.sum(fields.density)) - n_electrons)
        if drift > config.CHARGE_TOL:
            raise ChargeConservationError(
                f"Mixing changed the electron count by {drift:.3e}."
            )

    if solution is None:
        assert best is not None
        message = (
            f"SCF not converged after {max_iter} iterations, "
            f"best residual {best.residual:.3e}."
        )
        if raise_on_failure:
            raise ConvergenceError(message)
        logger.warning(message)
        solution = best
    else:
        logger.info(
            f"SCF converged in {solution.iterations} iterations, "
            f"energy {solution.total_energy:.8f} meV."
        )

    if solution.degenerate:
        logger.warning("Highest occupied level is degenerate; filled by orbital index.")
    if basis is not None:
        seed_windings = texture_windings(graph, basis, initial.azimuth)
        final_windings = texture_windings(graph, basis, solution.fields.azimuth)
        changed = np.flatnonzero(seed_windings != final_windings)
        if len(changed) > 0:
            logger.warning(
                f"Spin texture windings changed on loops {changed.tolist()}; "
                "bond signs keep the seed parity."
            )

    return solution
