"""Command-line interface."""

from __future__ import annotations

import argparse
from collections.abc import Sequence
from pathlib import Path
import sys
from typing import Optional

from loguru import logger

from svilc import __version__, config
from svilc.io import finalize
from svilc.qubit import PRESETS
from svilc.settings import dump_config, load_config, RunConfig
from svilc.workflow import (
    Outputs,
    prepare,
    run_dipoles,
    run_patterns,
    run_scf,
    run_spectrum,
    run_sweeps,
    run_system,
    write_checkpoint_output,
    write_scf,
    write_states,
)

SUBCOMMANDS = ("scf", "patterns", "chi", "spectrum", "sweep", "dipoles", "dump-config")

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_SOLVER = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="svilc",
        description="Spin-vortex-induced loop current qubits on the CuO2 plane.",
    )
    parser.add_argument("--version", action="version", version=f"svilc {__version__}")
    subparsers = parser.add_subparsers(dest="command", required=True)
    helps = {
        "scf": "solve the Hartree-Fock mean field",
        "patterns": "solve all winding patterns allowed by the spin texture",
        "chi": "solve and label the dipole-current states",
        "spectrum": "diagonalize the states in the magnetic field",
        "sweep": "sweep feed currents and detect level crossings",
        "dipoles": "compute dipole moments between spectrum states",
        "dump-config": "print the effective configuration as YAML",
    }
    for command in SUBCOMMANDS:
        sub = subparsers.add_parser(command, help=helps[command])
        sub.add_argument("--config", type=Path, help="YAML run configuration")
        sub.add_argument("--preset", choices=sorted(PRESETS), help="preset layout")
        if command == "dump-config":
            continue
        sub.add_argument(
            "--threads", type=int, default=config.N_JOBS, help="parallel workers"
        )
        sub.add_argument("--out", type=Path, help="output directory")
        sub.add_argument(
            "--checkpoint", type=Path, help="mean-field file to reuse or create"
        )
        sub.add_argument("--verbose", action="store_true", help="debug logging")
    return parser


def setup_logging(directory: Optional[Path], verbose: bool) -> None:
    logger.remove()
    logger.add(sys.stderr, level="DEBUG" if verbose else "INFO")
    if directory is not None:
        directory.mkdir(parents=True, exist_ok=True)
        logger.add(
            directory / "svilc.log",
            format="{message}",
            level="DEBUG" if verbose else "INFO",
            mode="w",
        )


def execute(command: str, run_config: RunConfig, args: argparse.Namespace) -> Outputs:
    """Runs a subcommand, writing results under their partial names."""
    directory = Path(args.out or run_config.output.directory)
    outputs = Outputs(directory=directory, config_hash=run_config.hash)
    n_jobs = args.threads
    logger.info(
        f"svilc {__version__} {command}: layout {run_config.name!r}, "
        f"config hash {run_config.hash[:12]}, {n_jobs} workers."
    )

    prepared = prepare(run_config)
    meanfield = run_scf(prepared, args.checkpoint)
    if command == "scf":
        write_scf(meanfield, outputs)
        if args.checkpoint is None:
            write_checkpoint_output(meanfield, outputs)
        return outputs
    if command == "patterns":
        run_patterns(prepared, meanfield, outputs, n_jobs)
        return outputs

    system = run_system(prepared, meanfield, n_jobs)
    if command == "chi":
        write_states(system, outputs, export=run_config.output.export_currents)
    elif command == "spectrum":
        run_spectrum(system, run_config, outputs, n_jobs)
    elif command == "sweep":
        run_sweeps(system, run_config, outputs, n_jobs)
    elif command == "dipoles":
        spectrum = run_spectrum(system, run_config, outputs, n_jobs)
        run_dipoles(system, spectrum, run_config, outputs, n_jobs)
    return outputs


def main(argv: Optional[Sequence[str]] = None) -> int:
    """Runs the command line and returns the exit status.

    Validation errors exit with 1 and solver failures with 2. Files of a failed
    run keep their .partial suffix.
    """
    args = build_parser().parse_args(argv)
    command = args.command

    if command == "dump-config":
        logger.remove()
        logger.add(sys.stderr, level="WARNING")
        try:
            run_config = load_config(args.config, args.preset)
        except ValueError as e:
            logger.error(f"Invalid configuration: {e}")
            return EXIT_VALIDATION
        sys.stdout.write(dump_config(run_config))
        return EXIT_OK

    setup_logging(args.out, args.verbose)
    if args.config is None and args.preset is None:
        logger.error("Give --config or --preset.")
        return EXIT_VALIDATION
    if args.threads < 1 and args.threads != -1:
        logger.error(f"--threads must be positive or -1, got {args.threads}.")
        return EXIT_VALIDATION

    outputs: Optional[Outputs] = None
    try:
        run_config = load_config(args.config, args.preset)
        if args.out is None:
            setup_logging(Path(run_config.output.directory), args.verbose)
        outputs = execute(command, run_config, args)
    except ValueError as e:
        logger.error(f"Validation failed: {e}")
        return EXIT_VALIDATION
    except RuntimeError as e:
        logger.error(f"Solver failed: {e}")
        logger.error("Partial results are kept with the .partial suffix.")
        return EXIT_SOLVER

    written = finalize(outputs.paths)
    for path in written:
        logger.info(f"Wrote {path}.")
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
