"""Command-line interface.

Subcommands: analyze, synthesize, covering, simulate.  Exit codes: 0 on
success (an INCONCLUSIVE verdict is still a successful analysis), 2 on
input or validation errors, 3 when the synthesis precondition fails.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .expr import ParseError
from .hautus import format_eigenvalue
from .openness import CoveringGrid, empirical_covering_modulus
from .report import build_report, report_json, report_text
from .sim import (
    estimate_decay,
    integrate_closed_loop,
    iterate_closed_loop,
    make_feedback,
    trajectory_csv,
    verify_local_stability,
)
from .synthesis import FeedbackGain, PlacementError, UncontrollableError, synthesize
from .system import CONTINUOUS, SystemFormatError, SystemValidationError, load_system
from .verdict import POSITIVE_DECISIONS, AnalysisConfig, analyze


def _add_tolerance_flags(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--tol-rank", type=float, default=None,
                     help="rank cutoff for singular values (default: adaptive)")
    sub.add_argument("--tol-class", type=float, default=1e-8,
                     help="spectral classification tolerance")
    sub.add_argument("--margin", type=float, default=0.0,
                     help="extra margin demanded by the sufficiency tests")
    sub.add_argument("--span-radius", type=float, default=0.1,
                     help="sampling radius for the affine span estimate")
    sub.add_argument("--span-samples", type=int, default=64,
                     help="sample count for the affine span estimate")
    sub.add_argument("--seed", type=int, default=0, help="seed for seeded numerics")


def _config_from(args: argparse.Namespace) -> AnalysisConfig:
    return AnalysisConfig(
        tol_rank=args.tol_rank,
        tol_class=args.tol_class,
        margin=args.margin,
        span_radius=args.span_radius,
        span_samples=args.span_samples,
        assume_bounded_perturbation=getattr(args, "assume_bounded_perturbation", False),
        seed=args.seed,
    )


def _parse_pole_list(text: str) -> list[complex]:
    try:
        return [complex(tok.strip()) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"could not parse pole list {text!r}") from None


def _parse_float_list(text: str) -> list[float]:
    try:
        return [float(tok.strip()) for tok in text.split(",") if tok.strip()]
    except ValueError:
        raise ValueError(f"could not parse number list {text!r}") from None


def cmd_analyze(args: argparse.Namespace) -> int:
    system = load_system(args.path)
    analysis = analyze(system, _config_from(args))
    doc = build_report(analysis, seed=args.seed)
    if args.json:
        sys.stdout.write(report_json(doc))
    else:
        sys.stdout.write(report_text(analysis))
    return 0


def cmd_synthesize(args: argparse.Namespace) -> int:
    system = load_system(args.path)
    cfg = _config_from(args)
    analysis = analyze(system, cfg)
    positive = analysis.verdict.decision in POSITIVE_DECISIONS
    if not positive:
        if not analysis.hautus.holds:
            joined = ", ".join(format_eigenvalue(v) for v in analysis.hautus.failures)
            sys.stderr.write(f"error: uncontrollable unstable mode at lambda={joined}\n")
            return 3
        if not args.force:
            sys.stderr.write(
                f"error: verdict is {analysis.verdict.decision}; "
                "pass --force to synthesize from the linearization anyway\n"
            )
            return 3
    poles = _parse_pole_list(args.poles) if args.poles else None
    gain = synthesize(system, poles=poles, seed=args.seed, tol=cfg.tol_rank)
    validation = None
    if args.validate:
        validation = verify_local_stability(
            system, gain, delta=args.delta, samples=args.samples,
            horizon=args.horizon, dt=args.dt, steps=args.steps,
        )
    doc = build_report(analysis, gain=gain, validation=validation, seed=args.seed)
    if args.json:
        sys.stdout.write(report_json(doc))
    else:
        sys.stdout.write(report_text(analysis, gain=gain, validation=validation))
    return 0


def cmd_covering(args: argparse.Namespace) -> int:
    system = load_system(args.path)
    radii = _parse_float_list(args.radius)
    if not radii:
        raise ValueError("--radius expects at least one value")
    grid = CoveringGrid(
        directions=args.directions,
        radial_levels=args.levels,
        axis_points=args.axis_points,
    )
    sys.stdout.write(f"{'r':>14} {'kappa':>16} {'kappa/r':>16}\n")
    ratios = []
    for r in radii:
        kappa = empirical_covering_modulus(system, radius=r, grid=grid)
        ratio = kappa / r
        ratios.append(ratio)
        sys.stdout.write(f"{r:>14.9g} {kappa:>16.9g} {ratio:>16.9g}\n")
    if len(ratios) >= 2:
        vanishing = ratios[-1] <= 0.0 or (ratios[0] / ratios[-1] > 2.0)
        if vanishing:
            sys.stdout.write(
                "suspect: kappa/r decreased by more than 2x across the sweep; "
                "openness at a linear rate is doubtful at these scales\n"
            )
    return 0


def _load_gain_file(path: str, system) -> FeedbackGain:
    doc = json.loads(Path(path).read_text())
    payload = doc.get("gain") if isinstance(doc, dict) and "gain" in doc else doc
    if not isinstance(payload, dict) or "k" not in payload or payload is None:
        raise ValueError(f"{path} does not contain a gain matrix under 'k'")
    k = np.asarray(payload["k"], dtype=float)
    if k.shape != (system.m, system.n):
        raise ValueError(
            f"gain shape {k.shape} does not match the system ({system.m}, {system.n})"
        )
    return FeedbackGain(k=k, target_poles=(), achieved_poles=(), mode=system.mode)


def cmd_simulate(args: argparse.Namespace) -> int:
    system = load_system(args.path)
    x0 = _parse_float_list(args.x0)
    if len(x0) != system.n:
        raise ValueError(f"--x0 needs {system.n} values, got {len(x0)}")
    if args.gain:
        feedback = make_feedback(system, _load_gain_file(args.gain, system))
    else:
        parts = [p.strip() for p in args.feedback.split(";") if p.strip()]
        feedback = make_feedback(system, parts)
    if system.mode == CONTINUOUS:
        traj = integrate_closed_loop(system, feedback, x0, horizon=args.horizon, dt=args.dt)
    else:
        traj = iterate_closed_loop(system, feedback, x0, steps=args.steps)
    csv = trajectory_csv(traj)
    if args.out:
        Path(args.out).write_text(csv)
        summary_stream = sys.stdout
    else:
        sys.stdout.write(csv)
        summary_stream = sys.stderr
    final_norm = float(np.linalg.norm(traj.states[-1]))
    summary_stream.write(
        f"samples={len(traj.times)} final_norm={final_norm:.12g} "
        f"diverged={'yes' if traj.diverged else 'no'}\n"
    )
    if not traj.diverged:
        fit = estimate_decay(traj)
        summary_stream.write(
            f"alpha_hat={fit.alpha_hat:.12g} m_hat={fit.m_hat:.12g} "
            f"residual={fit.residual:.12g} certified={'yes' if fit.certified else 'no'}\n"
        )
    if not feedback.smooth:
        summary_stream.write(
            "note: feedback is not recognized as continuously differentiable\n"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="stabkit",
        description="Stabilizability analysis and feedback synthesis "
                    "for smooth control systems",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_analyze = sub.add_parser("analyze", help="analyze a system file")
    p_analyze.add_argument("path")
    p_analyze.add_argument("--json", action="store_true", help="emit the JSON report")
    p_analyze.add_argument("--assume-bounded-perturbation", action="store_true",
                           help="assert the perturbation is bounded (informational note)")
    _add_tolerance_flags(p_analyze)
    p_analyze.set_defaults(func=cmd_analyze)

    p_synth = sub.add_parser("synthesize", help="synthesize a stabilizing gain")
    p_synth.add_argument("path")
    p_synth.add_argument("--json", action="store_true", help="emit the JSON report")
    p_synth.add_argument("--poles", default=None,
                         help="comma-separated desired poles for the controllable block")
    p_synth.add_argument("--force", action="store_true",
                         help="synthesize even when the verdict is not positive "
                              "(the Hautus test must still hold)")
    p_synth.add_argument("--validate", action="store_true",
                         help="run the local stability verification on the result")
    p_synth.add_argument("--delta", type=float, default=0.05,
                         help="shell radius for --validate")
    p_synth.add_argument("--samples", type=int, default=100,
                         help="sample count for --validate")
    p_synth.add_argument("--horizon", type=float, default=20.0,
                         help="integration horizon for --validate (continuous)")
    p_synth.add_argument("--dt", type=float, default=1e-3,
                         help="integration step for --validate (continuous)")
    p_synth.add_argument("--steps", type=int, default=200,
                         help="iteration count for --validate (discrete)")
    _add_tolerance_flags(p_synth)
    p_synth.set_defaults(func=cmd_synthesize)

    p_cov = sub.add_parser("covering", help="empirical covering-rate sweep")
    p_cov.add_argument("path")
    p_cov.add_argument("--radius", required=True,
                       help="comma-separated ball radii, largest first")
    p_cov.add_argument("--directions", type=int, default=48,
                       help="target directions per shell")
    p_cov.add_argument("--levels", type=int, default=4, help="radial shells per target ball")
    p_cov.add_argument("--axis-points", type=int, default=15,
                       help="coarse grid points per axis")
    p_cov.set_defaults(func=cmd_covering)

    p_sim = sub.add_parser("simulate", help="simulate a closed loop and emit CSV")
    p_sim.add_argument("path")
    source = p_sim.add_mutually_exclusive_group(required=True)
    source.add_argument("--gain", default=None,
                        help="JSON file with a gain matrix (a report or a bare {'k': ...})")
    source.add_argument("--feedback", default=None,
                        help="semicolon-separated feedback expressions in x1..xn")
    p_sim.add_argument("--x0", required=True, help="comma-separated initial state")
    p_sim.add_argument("--horizon", type=float, default=20.0,
                       help="integration horizon (continuous)")
    p_sim.add_argument("--dt", type=float, default=1e-3, help="integration step (continuous)")
    p_sim.add_argument("--steps", type=int, default=200, help="iteration count (discrete)")
    p_sim.add_argument("--out", default=None, help="write CSV here instead of stdout")
    p_sim.set_defaults(func=cmd_simulate)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UncontrollableError as err:
        sys.stderr.write(f"error: {err}\n")
        return 3
    except PlacementError as err:
        sys.stderr.write(f"error: {err}\n")
        return 2
    except (ParseError, SystemFormatError, SystemValidationError) as err:
        sys.stderr.write(f"error: {err}\n")
        return 2
    except (FileNotFoundError, IsADirectoryError, PermissionError) as err:
        sys.stderr.write(f"error: {err}\n")
        return 2
    except (ValueError, json.JSONDecodeError) as err:
        sys.stderr.write(f"error: {err}\n")
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
