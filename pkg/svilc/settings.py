"""Run configuration read from YAML."""

from __future__ import annotations

from collections.abc import Callable, Mapping
import dataclasses
from dataclasses import dataclass
from os import PathLike
from pathlib import Path
from typing import Any, Optional, Union

import numpy as np
import yaml

from svilc import config
from svilc.chi import FeedSpec
from svilc.data import TRANSFER_INTEGRAL_MEV, U_OVER_T
from svilc.exceptions import ConfigError, LatticeError, LayoutError
from svilc.lattice import barrier_columns, LatticeSpec
from svilc.observables import FieldPolynomial
from svilc.qubit import (
    assemble_layout,
    DCQ_NY,
    PRESETS,
    QubitLayout,
    svq_vortices,
    SweepSpec,
)
from svilc.utils import content_hash

Lines = Mapping[str, int]


def _float(value: Any) -> float:
    if isinstance(value, bool):
        raise TypeError("expected a number")
    return float(value)


def _int(value: Any) -> int:
    if isinstance(value, bool) or float(value) != int(value):
        raise TypeError("expected an integer")
    return int(value)


def _optional_int(value: Any) -> Optional[int]:
    return None if value is None else _int(value)


def _optional_float(value: Any) -> Optional[float]:
    return None if value is None else _float(value)


def _bool(value: Any) -> bool:
    if not isinstance(value, bool):
        raise TypeError("expected true or false")
    return value


def _str(value: Any) -> str:
    if not isinstance(value, str):
        raise TypeError("expected a string")
    return value


def _ints(value: Any) -> tuple[int, ...]:
    return tuple(_int(v) for v in value)


def _optional_ints(value: Any) -> Optional[tuple[int, ...]]:
    return None if value is None else _ints(value)


def _sites(value: Any) -> tuple[tuple[int, int], ...]:
    sites = []
    for entry in value:
        if len(entry) != 2:
            raise TypeError("expected [x, y] pairs")
        sites.append((_int(entry[0]), _int(entry[1])))
    return tuple(sites)


def _points(value: Any) -> tuple[tuple[float, float], ...]:
    points = []
    for entry in value:
        if len(entry) != 2:
            raise TypeError("expected [x, y] pairs")
        points.append((_float(entry[0]), _float(entry[1])))
    return tuple(points)


def _feed_entries(value: Any) -> tuple[tuple[int, int, float], ...]:
    entries = []
    for entry in value:
        if len(entry) not in (2, 3):
            raise TypeError("expected [x, y] or [x, y, magnitude]")
        magnitude = _float(entry[2]) if len(entry) == 3 else 1.0
        entries.append((_int(entry[0]), _int(entry[1]), magnitude))
    return tuple(entries)


def _float_map(value: Any) -> dict[str, float]:
    if not isinstance(value, Mapping):
        raise TypeError("expected a mapping")
    return {_str(k): _float(v) for k, v in value.items()}


def _grid(value: Any) -> tuple[float, ...]:
    if isinstance(value, Mapping):
        unknown = set(value) - {"start", "stop", "num"}
        if unknown:
            raise TypeError(f"unknown grid keys {sorted(unknown)}")
        grid = np.linspace(
            _float(value["start"]), _float(value["stop"]), _int(value["num"])
        )
        return tuple(float(x) for x in grid)
    return tuple(_float(x) for x in value)


def _lookup(lines: Optional[Lines], key: str) -> Optional[int]:
    if lines is None:
        return None
    while key:
        if key in lines:
            return lines[key]
        key = key.rpartition(".")[0]
    return None


def _build(
    cls: type,
    data: Any,
    key: str,
    converters: Mapping[str, Callable[[Any], Any]],
    lines: Optional[Lines],
) -> Any:
    """Builds a section dataclass from a mapping, naming the key on errors."""
    if data is None:
        data = {}
    if not isinstance(data, Mapping):
        raise ConfigError(key, "expected a mapping", _lookup(lines, key))
    names = {f.name for f in dataclasses.fields(cls)}
    unknown = sorted(set(data) - names)
    if unknown:
        bad = f"{key}.{unknown[0]}" if key else str(unknown[0])
        raise ConfigError(bad, "unknown key", _lookup(lines, bad))
    kwargs = {}
    for name, value in data.items():
        path = f"{key}.{name}" if key else name
        try:
            kwargs[name] = converters[name](value)
        except (TypeError, ValueError, KeyError) as e:
            raise ConfigError(
                path, str(e) or "invalid value", _lookup(lines, path)
            ) from e
    return cls(**kwargs)


@dataclass(frozen=True)
class LatticeSection:
    """Lattice size and barrier atoms.

    Barrier columns cover barrier_rows, rows 2..ny-1 when not given.
    """

    nx: int = 8
    ny: int = 8
    lattice_constant: float = 0.4
    barrier_columns: tuple[int, ...] = ()
    barrier_rows: Optional[tuple[int, ...]] = None
    barrier_sites: tuple[tuple[int, int], ...] = ()

    CONVERTERS = {
        "nx": _int,
        "ny": _int,
        "lattice_constant": _float,
        "barrier_columns": _ints,
        "barrier_rows": _optional_ints,
        "barrier_sites": _sites,
    }

    @property
    def rows(self) -> tuple[int, ...]:
        if self.barrier_rows is None:
            return tuple(range(2, self.ny))
        return self.barrier_rows

    def barriers(self) -> frozenset[tuple[int, int]]:
        return barrier_columns(self.barrier_columns, self.rows) | frozenset(
            self.barrier_sites
        )


@dataclass(frozen=True)
class PhysicsSection:
    """Hubbard parameters. n_electrons None leaves one hole per vortex."""

    t: float = TRANSFER_INTEGRAL_MEV
    U: float = U_OVER_T * TRANSFER_INTEGRAL_MEV
    n_electrons: Optional[int] = None
    zeta_fixed: Optional[float] = float(np.pi / 2)

    CONVERTERS = {
        "t": _float,
        "U": _float,
        "n_electrons": _optional_int,
        "zeta_fixed": _optional_float,
    }


@dataclass(frozen=True)
class QubitSection:
    svq_centers: tuple[tuple[float, float], ...] = ((4.5, 4.5),)
    half_spacing: float = 1.0

    CONVERTERS = {"svq_centers": _points, "half_spacing": _float}


@dataclass(frozen=True)
class FieldSection:
    """Field polynomial coefficients (T, x and y in a)."""

    c_xx: float = 0.0
    c_x: float = 0.0
    c_yy: float = 0.0
    c_y: float = 0.0
    c0: float = 0.0
    gauge_offset: float = 0.0

    CONVERTERS = {
        "c_xx": _float,
        "c_x": _float,
        "c_yy": _float,
        "c_y": _float,
        "c0": _float,
        "gauge_offset": _float,
    }

    def polynomial(self) -> FieldPolynomial:
        return FieldPolynomial(**dataclasses.asdict(self))


@dataclass(frozen=True)
class FeedSection:
    """Feed sites as (x, y, magnitude) with magnitudes in 2et/hbar."""

    sources: tuple[tuple[int, int, float], ...] = ()
    drains: tuple[tuple[int, int, float], ...] = ()

    CONVERTERS = {"sources": _feed_entries, "drains": _feed_entries}

    def spec(self) -> FeedSpec:
        return FeedSpec(
            sources=tuple(((x, y), m) for x, y, m in self.sources),
            drains=tuple(((x, y), m) for x, y, m in self.drains),
        )


@dataclass(frozen=True)
class SweepSection:
    """Feed sweep. grid is a list or {start, stop, num}."""

    name: str = ""
    parameter: str = ""
    grid: tuple[float, ...] = ()
    fixed: dict[str, float] = dataclasses.field(default_factory=dict)
    ratios: dict[str, float] = dataclasses.field(default_factory=dict)

    CONVERTERS = {
        "name": _str,
        "parameter": _str,
        "grid": _grid,
        "fixed": _float_map,
        "ratios": _float_map,
    }

    def spec(self) -> SweepSpec:
        return SweepSpec(
            name=self.name,
            parameter=self.parameter,
            grid=self.grid,
            fixed=dict(self.fixed),
            ratios=dict(self.ratios),
        )


@dataclass(frozen=True)
class SolverSection:
    scf_tol: float = config.SCF_TOL
    scf_max_iter: int = config.SCF_MAX_ITER
    mixing: float = config.SCF_MIXING
    scheme: str = "linear"
    anderson_history: int = config.ANDERSON_HISTORY
    seed_magnitude: float = config.SEED_MAGNITUDE
    seed_noise: float = 0.0
    chi_tol: float = config.CHI_GTOL
    chi_max_iter: int = config.CHI_MAX_ITER
    overlap_threshold: float = config.OVERLAP_THRESHOLD
    label_threshold: float = config.LABEL_THRESHOLD
    tracking_overlap: float = config.TRACKING_OVERLAP
    refine_levels: int = config.CROSSING_REFINE_LEVELS
    hamiltonian: str = "field"
    use_overlap: bool = config.USE_OVERLAP

    CONVERTERS = {
        "scf_tol": _float,
        "scf_max_iter": _int,
        "mixing": _float,
        "scheme": _str,
        "anderson_history": _int,
        "seed_magnitude": _float,
        "seed_noise": _float,
        "chi_tol": _float,
        "chi_max_iter": _int,
        "overlap_threshold": _float,
        "label_threshold": _float,
        "tracking_overlap": _float,
        "refine_levels": _int,
        "hamiltonian": _str,
        "use_overlap": _bool,
    }


@dataclass(frozen=True)
class OutputSection:
    directory: str = "results"
    export_currents: bool = True

    CONVERTERS = {"directory": _str, "export_currents": _bool}


@dataclass(frozen=True)
class RunConfig:
    """Complete run configuration.

    Args:
        name: Layout name
        preset: Preset the configuration started from
        seed: Random seed for the initial texture noise
        lattice: Lattice section
        physics: Physics section
        qubit: Spin-vortex quartet placement
        field: Field polynomial
        feeds: Named unit feeds
        sweeps: Feed sweeps
        solver: Solver settings
        output: Output settings
    """

    name: str = "custom"
    preset: Optional[str] = None
    seed: Optional[int] = None
    lattice: LatticeSection = dataclasses.field(default_factory=LatticeSection)
    physics: PhysicsSection = dataclasses.field(default_factory=PhysicsSection)
    qubit: QubitSection = dataclasses.field(default_factory=QubitSection)
    field: FieldSection = dataclasses.field(default_factory=FieldSection)
    feeds: dict[str, FeedSection] = dataclasses.field(default_factory=dict)
    sweeps: tuple[SweepSection, ...] = ()
    solver: SolverSection = dataclasses.field(default_factory=SolverSection)
    output: OutputSection = dataclasses.field(default_factory=OutputSection)

    SECTIONS = {
        "lattice": LatticeSection,
        "physics": PhysicsSection,
        "qubit": QubitSection,
        "field": FieldSection,
        "solver": SolverSection,
        "output": OutputSection,
    }

    @classmethod
    def from_dict(
        cls, data: Mapping[str, Any], lines: Optional[Lines] = None
    ) -> RunConfig:
        """Builds a configuration from a mapping.

        Raises:
            ConfigError: When a key is unknown or a value has the wrong type
        """
        if not isinstance(data, Mapping):
            raise ConfigError("<root>", "expected a mapping", _lookup(lines, ""))
        top = {"name", "preset", "seed", "feeds", "sweeps"} | set(cls.SECTIONS)
        unknown = sorted(set(data) - top)
        if unknown:
            raise ConfigError(unknown[0], "unknown key", _lookup(lines, unknown[0]))

        kwargs: dict[str, Any] = {}
        for name, section in cls.SECTIONS.items():
            if name in data:
                kwargs[name] = _build(
                    section, data[name], name, section.CONVERTERS, lines
                )
        for name, converter in (
            ("name", _str),
            ("preset", lambda v: None if v is None else _str(v)),
            ("seed", _optional_int),
        ):
            if name in data:
                try:
                    kwargs[name] = converter(data[name])
                except (TypeError, ValueError) as e:
                    raise ConfigError(name, str(e), _lookup(lines, name)) from e

        feeds = data.get("feeds") or {}
        if not isinstance(feeds, Mapping):
            raise ConfigError("feeds", "expected a mapping", _lookup(lines, "feeds"))
        kwargs["feeds"] = {
            str(name): _build(
                FeedSection, entry, f"feeds.{name}", FeedSection.CONVERTERS, lines
            )
            for name, entry in feeds.items()
        }
        sweeps = data.get("sweeps") or []
        if isinstance(sweeps, (str, Mapping)):
            raise ConfigError("sweeps", "expected a list", _lookup(lines, "sweeps"))
        kwargs["sweeps"] = tuple(
            _build(SweepSection, entry, f"sweeps.{k}", SweepSection.CONVERTERS, lines)
            for k, entry in enumerate(sweeps)
        )
        return cls(**kwargs)

    def to_dict(self) -> dict[str, Any]:
        """Returns plain YAML-serializable data that from_dict reads back."""

        def plain(value: Any) -> Any:
            if isinstance(value, tuple):
                return [plain(v) for v in value]
            if isinstance(value, dict):
                return {k: plain(v) for k, v in value.items()}
            return value

        data: dict[str, Any] = {
            "name": self.name,
            "preset": self.preset,
            "seed": self.seed,
        }
        for name in self.SECTIONS:
            section = getattr(self, name)
            data[name] = {
                f.name: plain(getattr(section, f.name))
                for f in dataclasses.fields(section)
            }
        data["feeds"] = {
            name: {"sources": plain(feed.sources), "drains": plain(feed.drains)}
            for name, feed in self.feeds.items()
        }
        data["sweeps"] = [
            {f.name: plain(getattr(sweep, f.name)) for f in dataclasses.fields(sweep)}
            for sweep in self.sweeps
        ]
        return data

    @property
    def hash(self) -> str:
        return content_hash(self.to_dict())

    def layout(self) -> QubitLayout:
        """Returns the validated qubit layout.

        Raises:
            LatticeError: When the lattice geometry is invalid
            LayoutError: When a vortex or feed site is invalid
        """
        section = self.lattice
        vortex_points = frozenset(
            point
            for center in self.qubit.svq_centers
            for point, _ in svq_vortices(center, self.qubit.half_spacing)
        )
        spec = LatticeSpec(
            nx=section.nx,
            ny=section.ny,
            lattice_constant=section.lattice_constant,
            barrier_sites=section.barriers(),
            hole_sites=vortex_points,
        )
        layout = QubitLayout(
            name=self.name,
            lattice=spec,
            svq_centers=self.qubit.svq_centers,
            half_spacing=self.qubit.half_spacing,
            field=self.field.polynomial(),
            feeds={name: feed.spec() for name, feed in self.feeds.items()},
            n_electrons=self.physics.n_electrons,
        )
        return assemble_layout(layout)


def preset_config(name: str, ny: Optional[int] = None) -> RunConfig:
    """Returns the configuration of a preset layout with its standard sweeps.

    Raises:
        ConfigError: When the preset is unknown
    """
    if name not in PRESETS:
        raise ConfigError(
            "preset", f"{name!r} not supported, choose from {sorted(PRESETS)}"
        )
    layout = assemble_layout(name, ny=ny)
    spec = layout.lattice
    field_ = layout.field
    feeds = {
        feed_name: FeedSection(
            sources=tuple((x, y, m) for (x, y), m in feed.sources),
            drains=tuple((x, y, m) for (x, y), m in feed.drains),
        )
        for feed_name, feed in layout.feeds.items()
    }
    if name == "paper-3dcq":
        lattice = LatticeSection(
            nx=spec.nx,
            ny=spec.ny,
            lattice_constant=spec.lattice_constant,
            barrier_columns=(30, 32, 82, 84),
        )
        weak = {"J1": 0.002, "J2": 0.004, "J3": 0.008}
        strong = {"J1": 0.02, "J2": 0.04, "J3": 0.08}
        coupling_grid = _grid({"start": 0, "stop": 1.4, "num": 15})
        split_grid = _grid({"start": 0, "stop": 0.1, "num": 11})
        sweeps: tuple[SweepSection, ...] = (
            SweepSection(name="J4", parameter="J4", grid=coupling_grid),
            SweepSection(name="J5", parameter="J5", grid=coupling_grid),
            SweepSection(
                name="J4-J5",
                parameter="J",
                grid=_grid({"start": 0, "stop": 0.7, "num": 15}),
                ratios={"J4": 2.0, "J5": 1.0},
            ),
            SweepSection(
                name="split-124",
                parameter="J",
                grid=_grid({"start": 0, "stop": 0.3, "num": 7}),
                ratios={"J1": 1.0, "J2": 2.0, "J3": 4.0},
            ),
            SweepSection(
                name="J4-weak-split",
                parameter="J4",
                grid=split_grid,
                fixed=dict(weak),
            ),
            SweepSection(
                name="J5-strong-split",
                parameter="J5",
                grid=split_grid,
                fixed=dict(strong),
            ),
            SweepSection(
                name="J4-J5-strong-split",
                parameter="J",
                grid=split_grid,
                fixed=dict(strong),
                ratios={"J4": 1.0, "J5": 2.0},
            ),
        )
    else:
        lattice = LatticeSection(nx=spec.nx, ny=spec.ny)
        sweeps = (
            SweepSection(
                name="J1",
                parameter="J1",
                grid=_grid({"start": -0.2, "stop": 0.2, "num": 9}),
            ),
        )
    return RunConfig(
        name=name,
        preset=name,
        lattice=lattice,
        physics=PhysicsSection(n_electrons=layout.n_electrons),
        qubit=QubitSection(
            svq_centers=tuple(layout.svq_centers), half_spacing=layout.half_spacing
        ),
        field=FieldSection(
            c_xx=field_.c_xx, c_x=field_.c_x, c_yy=field_.c_yy, c_y=field_.c_y
        ),
        feeds=feeds,
        sweeps=sweeps,
    )


def line_map(text: str) -> dict[str, int]:
    """Returns the 1-based line of every dotted key path in a YAML document."""
    lines: dict[str, int] = {}

    def visit(node: yaml.Node, path: str) -> None:
        lines[path] = node.start_mark.line + 1
        if isinstance(node, yaml.MappingNode):
            for key_node, value_node in node.value:
                child = f"{path}.{key_node.value}" if path else str(key_node.value)
                visit(value_node, child)
                lines[child] = key_node.start_mark.line + 1
        elif isinstance(node, yaml.SequenceNode):
            for k, item in enumerate(node.value):
                visit(item, f"{path}.{k}" if path else str(k))

    root = yaml.compose(text)
    if root is not None:
        visit(root, "")
    return lines


def _merge(base: dict[str, Any], override: Mapping[str, Any]) -> dict[str, Any]:
    merged = dict(base)
    for key, value in override.items():
        if key in ("feeds", "sweeps"):
            merged[key] = value
        elif isinstance(value, Mapping) and isinstance(merged.get(key), Mapping):
            merged[key] = _merge(merged[key], value)
        else:
            merged[key] = value
    return merged


def load_config(
    source: Union[str, PathLike, Mapping[str, Any], None] = None,
    preset: Optional[str] = None,
) -> RunConfig:
    """Reads and validates a run configuration.

    A preset, given here or under 'preset:' in the file, provides the base that
    the file overrides section by section. Feeds and sweeps given in the file
    replace those of the preset.

    Args:
        source: YAML file, mapping, or None for the preset alone
        preset: Preset name

    Returns:
        run_config: Validated configuration

    Raises:
        ConfigError: When the configuration is invalid
    """
    lines: Optional[dict[str, int]] = None
    if source is None:
        data: dict[str, Any] = {}
    elif isinstance(source, Mapping):
        data = dict(source)
    else:
        text = Path(source).read_text()
        try:
            data = yaml.safe_load(text) or {}
        except yaml.YAMLError as e:
            mark = getattr(e, "problem_mark", None)
            raise ConfigError(
                "<document>", "invalid YAML", None if mark is None else mark.line + 1
            ) from e
        if not isinstance(data, Mapping):
            raise ConfigError("<root>", "expected a mapping", 1)
        lines = line_map(text)

    preset = preset or data.get("preset")
    if preset is not None:
        if not isinstance(preset, str) or preset not in PRESETS:
            raise ConfigError(
                "preset",
                f"{preset!r} not supported, choose from {sorted(PRESETS)}",
                _lookup(lines, "preset"),
            )
        ny = (data.get("lattice") or {}).get("ny")
        base = preset_config(preset, ny=None if ny in (None, DCQ_NY) else ny)
        data = _merge(base.to_dict(), data)

    run_config = RunConfig.from_dict(data, lines)
    validate_config(run_config, lines)
    return run_config


def validate_config(run_config: RunConfig, lines: Optional[Lines] = None) -> None:
    """Checks ranges and cross references.

    Raises:
        ConfigError: When a value is out of range or a reference is undeclared
    """

    def fail(key: str, message: str) -> None:
        raise ConfigError(key, message, _lookup(lines, key))

    lattice = run_config.lattice
    for key in ("nx", "ny"):
        if getattr(lattice, key) < 1:
            fail(f"lattice.{key}", "must be positive")
    if lattice.lattice_constant <= 0:
        fail("lattice.lattice_constant", "must be positive")
    for k, column in enumerate(lattice.barrier_columns):
        if not 1 <= column <= lattice.nx:
            fail(
                f"lattice.barrier_columns.{k}",
                f"column {column} outside 1..{lattice.nx}",
            )
    for k, row in enumerate(lattice.rows if lattice.barrier_rows is not None else ()):
        if not 1 <= row <= lattice.ny:
            fail(f"lattice.barrier_rows.{k}", f"row {row} outside 1..{lattice.ny}")
    for k, (x, y) in enumerate(lattice.barrier_sites):
        if not (1 <= x <= lattice.nx and 1 <= y <= lattice.ny):
            fail(f"lattice.barrier_sites.{k}", f"site {(x, y)} outside the lattice")

    physics = run_config.physics
    if physics.t <= 0:
        fail("physics.t", "must be positive")
    if physics.U < 0:
        fail("physics.U", "must be non-negative")
    if physics.n_electrons is not None and not (
        0 <= physics.n_electrons <= 2 * lattice.nx * lattice.ny
    ):
        fail("physics.n_electrons", "out of range")

    solver = run_config.solver
    for key in ("scf_tol", "chi_tol", "overlap_threshold", "label_threshold"):
        if getattr(solver, key) <= 0:
            fail(f"solver.{key}", "must be positive")
    for key in ("scf_max_iter", "chi_max_iter", "anderson_history"):
        if getattr(solver, key) < 1:
            fail(f"solver.{key}", "must be at least 1")
    if not 0 < solver.mixing <= 1:
        fail("solver.mixing", "must be in (0, 1]")
    if solver.scheme not in ("linear", "anderson"):
        fail("solver.scheme", "must be 'linear' or 'anderson'")
    if solver.hamiltonian not in ("field", "total"):
        fail("solver.hamiltonian", "must be 'field' or 'total'")
    if not 0 < solver.tracking_overlap < 1:
        fail("solver.tracking_overlap", "must be in (0, 1)")
    for key in ("refine_levels", "seed_noise"):
        if getattr(solver, key) < 0:
            fail(f"solver.{key}", "must be non-negative")

    barriers = lattice.barriers()
    for name, feed in run_config.feeds.items():
        for kind in ("sources", "drains"):
            for k, (x, y, magnitude) in enumerate(getattr(feed, kind)):
                key = f"feeds.{name}.{kind}.{k}"
                if not (1 <= x <= lattice.nx and 1 <= y <= lattice.ny):
                    fail(key, f"feed site {(x, y)} outside the lattice")
                if (x, y) in barriers:
                    fail(key, f"feed site {(x, y)} is a barrier site")
                if magnitude < 0:
                    fail(key, "magnitude must be non-negative")
        total_in = sum(m for _, _, m in feed.sources)
        total_out = sum(m for _, _, m in feed.drains)
        if not np.isclose(total_in, total_out):
            fail(
                f"feeds.{name}",
                f"sources ({total_in}) and drains ({total_out}) do not balance",
            )

    names = set()
    for k, sweep in enumerate(run_config.sweeps):
        key = f"sweeps.{k}"
        if not sweep.name:
            fail(f"{key}.name", "missing")
        if sweep.name in names:
            fail(f"{key}.name", f"duplicate sweep {sweep.name!r}")
        names.add(sweep.name)
        if len(sweep.grid) < 2:
            fail(f"{key}.grid", "needs at least two points")
        if np.any(np.diff(sweep.grid) <= 0):
            fail(f"{key}.grid", "must be strictly increasing")
        for feed_name in sweep.spec().feed_names:
            if feed_name not in run_config.feeds:
                part = "ratios" if feed_name in sweep.ratios else "fixed"
                if feed_name == sweep.parameter and not sweep.ratios:
                    part = "parameter"
                fail(f"{key}.{part}", f"feed {feed_name!r} is not declared")

    try:
        run_config.layout()
    except (LatticeError, LayoutError) as e:
        key = "qubit" if "vortex" in str(e).lower() else "lattice"
        fail(key, str(e))


def dump_config(run_config: RunConfig, path: Union[str, PathLike, None] = None) -> str:
    """Returns the configuration as YAML, also written to path if given."""
    text = yaml.safe_dump(
        run_config.to_dict(), sort_keys=False, default_flow_style=None
    )
    if path is not None:
        Path(path).write_text(text)
    return text
