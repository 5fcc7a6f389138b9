#!/usr/bin/env python3

"""Keller-Segel simulation and verification tool.

Unified command-line interface for simulating the physical and rescaled
Keller-Segel systems, solving self-similar profiles, computing linearized
spectra, checking functional inequalities and running verification scenarios.
"""

import argparse
import dataclasses
import json
import logging
import os
import sys
from pathlib import Path
from typing import Any
from typing import Dict
from typing import List
from typing import Optional

import numpy as np
from scipy import fft as sp_fft

from . import __version__
from .dynamics import SimConfig
from .dynamics import run
from .dynamics import save_summary
from .experiments import SCENARIO_NAMES
from .experiments import load_scenario
from .experiments import mass_tag
from .experiments import parse_config
from .experiments import random_mixture
from .experiments import run_scenario
from .fields import DEFAULT_RADIAL_NODES
from .fields import gaussian_datum
from .fields import make_grid
from .fields import make_radial_grid
from .fields import save_radial
from .functionals import check_inequalities
from .linearization import spectrum_for_modes
from .potential import KERNELS
from .potential import log_kernel_convolve
from .profile import DEFAULT_MAX_ITERS
from .profile import DEFAULT_OMEGA
from .profile import DEFAULT_TOL
from .profile import envelope_check
from .profile import profile_ladder
from .profile import solve_profile
from .visualization import KSVisualizer


OUT_ENV = "KSLAB_OUT"
MIXTURE_HALF_WIDTH = 12.0

# CLI flag -> SimConfig field
SIM_FLAGS = {
    "mass": "mass",
    "n": "n",
    "half_width": "half_width",
    "sigma": "sigma",
    "dt": "dt",
    "t_end": "t_end",
    "kernel": "kernel",
    "record_every": "record_every",
    "seed": "seed",
}


def setup_logging(verbosity: int) -> None:
    """Setup logging configuration."""
    log_fmt = "%(levelname)s - %(module)s - " "%(funcName)s @%(lineno)d: %(message)s"
    logging.basicConfig(
        filename=None, format=log_fmt, level=logging.getLevelName(verbosity)
    )


def output_root(flag: Optional[str], configured: Optional[str] = None) -> Path:
    """``--out``, else the configured directory, else ``$KSLAB_OUT``, else ``out``."""
    if flag:
        return Path(flag)
    if configured:
        return Path(configured)
    return Path(os.environ.get(OUT_ENV) or "out")


def _add_out(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "-o",
        "--out",
        default=None,
        help=f"Output directory (default: ${OUT_ENV} or out)",
    )


def _add_no_plot(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--no-plot", action="store_true", help="Do not write PNG figures"
    )


def _add_simulation_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("-c", "--config", help="JSON run configuration")
    parser.add_argument("--mass", type=float, help="Total mass M")
    parser.add_argument("--n", type=int, help="Cells per side (power of two)")
    parser.add_argument("--half-width", type=float, help="Box half width L")
    parser.add_argument("--sigma", type=float, help="Gaussian datum width")
    parser.add_argument("--dt", type=float, help="Time step")
    parser.add_argument("--t-end", type=float, help="Integration time")
    parser.add_argument("--kernel", choices=KERNELS, help="Log-kernel convolution")
    parser.add_argument("--record-every", type=int, help="Steps between samples")
    parser.add_argument("--seed", type=int, help="Random seed")
    parser.add_argument(
        "--jobs", type=int, default=1, help="FFT threads for the run (-1: all cores)"
    )
    _add_out(parser)
    _add_no_plot(parser)


def parse_command_line(argv: Optional[List[str]] = None) -> Dict[str, Any]:
    """Parse command line arguments."""
    parser = argparse.ArgumentParser(
        description="Simulate and verify the 2D Keller-Segel system",
        prog="kslab",
    )

    parser.add_argument(
        "-V", "--version", action="version", version=f"%(prog)s {__version__}"
    )

    parser.add_argument(
        "-v",
        "--verbose",
        action="count",
        default=0,
        dest="verbosity",
        help="Verbose output (use -vv for more verbose)",
    )

    subparsers = parser.add_subparsers(
        dest="command", help="Available commands", required=True
    )

    simulate_parser = subparsers.add_parser(
        "simulate", help="Integrate the physical system"
    )
    _add_simulation_flags(simulate_parser)

    rescaled_parser = subparsers.add_parser(
        "rescaled", help="Integrate the self-similar rescaled system"
    )
    _add_simulation_flags(rescaled_parser)

    profile_parser = subparsers.add_parser(
        "profile", help="Solve self-similar profiles by Picard iteration"
    )
    profile_parser.add_argument(
        "--mass", type=float, nargs="+", required=True, help="Mass or mass ladder"
    )
    profile_parser.add_argument(
        "--omega", type=float, default=DEFAULT_OMEGA, help="Damping factor"
    )
    profile_parser.add_argument(
        "--tol", type=float, default=DEFAULT_TOL, help="L1 residual tolerance"
    )
    profile_parser.add_argument(
        "--max-iters", type=int, default=DEFAULT_MAX_ITERS, help="Iteration cap"
    )
    profile_parser.add_argument(
        "--nodes", type=int, default=DEFAULT_RADIAL_NODES, help="Radial nodes"
    )
    profile_parser.add_argument("--r-max", type=float, help="Outer radius")
    profile_parser.add_argument("--jobs", type=int, default=1, help="Processes")
    _add_out(profile_parser)
    _add_no_plot(profile_parser)

    spectrum_parser = subparsers.add_parser(
        "spectrum", help="Eigenvalues of the linearized operator per angular mode"
    )
    spectrum_parser.add_argument("--mass", type=float, required=True, help="Mass")
    spectrum_parser.add_argument(
        "--modes", default="0,1,2", help="Comma-separated modes (default: 0,1,2)"
    )
    spectrum_parser.add_argument(
        "--count", type=int, default=6, help="Eigenvalues per mode (default: 6)"
    )
    spectrum_parser.add_argument(
        "--nodes", type=int, default=1024, help="Radial nodes (default: 1024)"
    )
    spectrum_parser.add_argument("--r-max", type=float, help="Outer radius")
    spectrum_parser.add_argument("--jobs", type=int, default=1, help="Processes")
    _add_out(spectrum_parser)
    _add_no_plot(spectrum_parser)

    verify_parser = subparsers.add_parser(
        "verify-inequalities", help="Check functional inequalities on densities"
    )
    verify_parser.add_argument("-c", "--config", help="JSON run configuration")
    verify_parser.add_argument("--mass", type=float, help="Gaussian mass")
    verify_parser.add_argument("--sigma", type=float, help="Gaussian width")
    verify_parser.add_argument(
        "--mixtures", type=int, default=0, help="Random Gaussian mixtures instead"
    )
    verify_parser.add_argument("--seed", type=int, help="Random seed")
    _add_out(verify_parser)

    scenario_parser = subparsers.add_parser(
        "scenario", help="Run a verification scenario"
    )
    scenario_parser.add_argument("name", choices=SCENARIO_NAMES, help="Scenario")
    scenario_parser.add_argument("-c", "--config", help="JSON scenario overrides")
    scenario_parser.add_argument("--jobs", type=int, help="Processes")
    scenario_parser.add_argument("--seed", type=int, help="Random seed")
    _add_out(scenario_parser)
    _add_no_plot(scenario_parser)

    args = vars(parser.parse_args(argv))
    args["verbosity"] = max(0, 30 - 10 * args["verbosity"])

    return args


def build_sim_config(args: Dict[str, Any], regime: str) -> SimConfig:
    """Defaults, then the config file, then command-line flags."""
    config = SimConfig()
    if args.get("config"):
        parsed = parse_config(args["config"])
        if not isinstance(parsed, SimConfig):
            raise ValueError(f"{args['config']} describes a scenario, not a run")
        config = parsed
    changes = {
        field: args[flag]
        for flag, field in SIM_FLAGS.items()
        if args.get(flag) is not None
    }
    changes["regime"] = regime
    return config.replace(**changes)


def _write_json(data: Any, path: Path) -> Path:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        json.dump(data, fh, indent=2)
    logging.info(f"Results saved to {path}")
    return path


def handle_simulate_command(args: Dict[str, Any]) -> int:
    """Handle the simulate and rescaled commands."""
    regime = "rescaled" if args["command"] == "rescaled" else "physical"
    try:
        config = build_sim_config(args, regime)
        out = output_root(args.get("out"))
        out.mkdir(parents=True, exist_ok=True)
        if args.get("jobs") == 0:
            raise ValueError("jobs must be nonzero")
        with sp_fft.set_workers(args.get("jobs") or 1):
            record = run(config, out_dir=out)
        record.to_csv(out / "trajectory.csv")
        save_summary(record, out / "summary.json")
        if not args.get("no_plot"):
            visualizer = KSVisualizer(output_dir=str(out))
            visualizer.plot_trajectory(
                record.to_frame(), blowup_time=record.blowup_time
            )
            if record.final_state is not None:
                visualizer.plot_density(record.final_state.f, name="final_density")

        final = record.rows[-1]
        blowup = (
            f" | Blow-up: {record.blowup_reason} at t={record.blowup_time:.6g}"
            if record.blowup_time is not None
            else ""
        )
        print(
            f"Run: {regime} | M: {config.mass:.6g} | t: {final['t']:.6g} | "
            f"M2: {final['m2']:.6g} | F: {final['F']:.6g} | "
            f"max f: {final['linf']:.6g}{blowup}"
        )
        logging.info(f"Simulation complete. Results saved to {out}")
        return 0

    except Exception as e:
        logging.error(f"Simulation failed: {e}")
        return 1


def handle_profile_command(args: Dict[str, Any]) -> int:
    """Handle the profile command."""
    try:
        masses = [float(m) for m in args["mass"]]
        out = output_root(args.get("out"))
        rgrid = make_radial_grid(
            max(masses), r_max=args.get("r_max"), size=args["nodes"]
        )
        options = {
            "omega": args["omega"],
            "tol": args["tol"],
            "max_iters": args["max_iters"],
        }
        if len(masses) > 1:
            results = profile_ladder(masses, rgrid, jobs=args["jobs"], **options)
        else:
            results = [solve_profile(masses[0], rgrid, **options)]

        for result in results:
            tag = mass_tag(result.mass)
            summary = result.summary()
            summary["envelope"] = envelope_check(result, 0.1).to_dict()
            _write_json(summary, out / f"profile_{tag}.json")
            save_radial(result.G, out / f"profile_{tag}_G")
            print(
                f"Profile: M={result.mass:.6g} | "
                f"G(0): {summary['center_value']:.6g} | "
                f"M2: {result.m2:.6g} | Iterations: {result.picard_iters} | "
                f"Residual: {result.residual_l1:.3e}"
            )
        if not args.get("no_plot"):
            KSVisualizer(output_dir=str(out)).plot_profile(results)

        logging.info(f"Profiles complete. Results saved to {out}")
        return 0

    except Exception as e:
        logging.error(f"Profile solve failed: {e}")
        return 1


def handle_spectrum_command(args: Dict[str, Any]) -> int:
    """Handle the spectrum command."""
    try:
        modes = [int(m) for m in str(args["modes"]).split(",") if m.strip()]
        if not modes or min(modes) < 0:
            raise ValueError(
                f"modes must be nonnegative integers, got {args['modes']}"
            )
        mass = float(args["mass"])
        out = output_root(args.get("out"))
        rgrid = make_radial_grid(mass, r_max=args.get("r_max"), size=args["nodes"])
        profile = solve_profile(mass, rgrid)
        spectra = spectrum_for_modes(profile, modes, args["count"], args["jobs"])

        _write_json([s.summary() for s in spectra], out / "spectrum.json")
        for spectrum in spectra:
            for j, vector in enumerate(spectrum.eigenvectors):
                save_radial(vector, out / f"eigvec_m{spectrum.mode}_{j}")
            values = ", ".join(f"{v:.6f}" for v in spectrum.eigenvalues)
            print(f"Mode {spectrum.mode} | M={mass:.6g} | Eigenvalues: {values}")
        if not args.get("no_plot"):
            KSVisualizer(output_dir=str(out)).plot_spectrum(spectra)

        logging.info(f"Spectrum complete. Results saved to {out}")
        return 0

    except Exception as e:
        logging.error(f"Spectrum failed: {e}")
        return 1


def handle_verify_command(args: Dict[str, Any]) -> int:
    """Handle the verify-inequalities command; exit code 1 if a bound fails."""
    try:
        flags = {k: args.get(k) for k in ("config", "mass", "sigma", "seed")}
        if args["mixtures"] > 0 and not args.get("config"):
            flags["half_width"] = MIXTURE_HALF_WIDTH
        config = build_sim_config(flags, "physical")
        out = output_root(args.get("out"))
        grid = make_grid(config.n, config.half_width)
        if args["mixtures"] > 0:
            rng = np.random.default_rng(config.seed)
            densities = [
                random_mixture(grid, rng, label=f"mixture-{i}")
                for i in range(args["mixtures"])
            ]
        else:
            densities = [
                gaussian_datum(grid, config.mass, config.sigma, config.center)
            ]

        reports: List[Dict[str, Any]] = []
        for f in densities:
            pot = log_kernel_convolve(f, config.kernel)
            reports.extend(r.to_dict() for r in check_inequalities(f, pot))
        _write_json(reports, out / "inequalities.json")
        print(json.dumps(reports, indent=2))

        failed = [r for r in reports if not r["passed"]]
        if failed:
            logging.error(f"{len(failed)} inequality checks failed")
            return 1
        return 0

    except Exception as e:
        logging.error(f"Inequality check failed: {e}")
        return 1


def handle_scenario_command(args: Dict[str, Any]) -> int:
    """Handle the scenario command; exit code 0 iff every check passed."""
    try:
        scenario = load_scenario(args["name"], args.get("config"))
        configured = scenario.out_dir if args.get("config") else None
        changes: Dict[str, Any] = {
            "out_dir": str(output_root(args.get("out"), configured)),
            "plot": not args.get("no_plot"),
        }
        for key in ("jobs", "seed"):
            if args.get(key) is not None:
                changes[key] = args[key]
        scenario = dataclasses.replace(scenario, **changes).validate()

        outcome = run_scenario(scenario)
        status = "PASSED" if outcome.passed else "FAILED"
        print(
            f"Scenario: {outcome.name} | {status} | Checks: {len(outcome.checks)} | "
            f"Elapsed: {outcome.elapsed:.1f}s"
        )
        if not outcome.passed:
            print(json.dumps(outcome.failed_checks(), indent=2))
            return 1
        return 0

    except Exception as e:
        logging.error(f"Scenario failed: {e}")
        return 1


def main() -> int:
    """Main entry point."""
    try:
        args = parse_command_line()
        setup_logging(args["verbosity"])

        logging.info(f"Starting command: {args['command']}")
        logging.info(f"Arguments: {args}")

        handlers = {
            "simulate": handle_simulate_command,
            "rescaled": handle_simulate_command,
            "profile": handle_profile_command,
            "spectrum": handle_spectrum_command,
            "verify-inequalities": handle_verify_command,
            "scenario": handle_scenario_command,
        }
        handler = handlers.get(args["command"])
        if handler is None:
            logging.error(f"Unknown command: {args['command']}")
            return 1
        result = handler(args)
        logging.info(f"{args['command']} command completed with result: {result}")
        return result
    except Exception as e:
        logging.error(f"Main function failed: {e}")
        import traceback

        traceback.print_exc()
        return 1


if __name__ == "__main__":
    try:
        sys.exit(main())
    except KeyboardInterrupt:
        print("\nExited by user")
        sys.exit(1)
