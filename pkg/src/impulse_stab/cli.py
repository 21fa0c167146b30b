"""Command line interface: JSON-configured runs with machine-readable records."""

import argparse
import csv
import logging
import sys
import time
from collections.abc import Callable
from pathlib import Path

import numpy as np

from . import __version__
from .battery import VerdictBattery
from .config import Settings
from .exceptions import (
    ConfigurationError,
    DimensionMismatchError,
    InvalidParameterError,
    ScheduleError,
    StabilizationError,
    VerdictDisagreementError,
)
from .models.heat import HeatConfig
from .models.riccati import NotStabilizable
from .models.run import ResultRecord, RunConfig
from .models.system import FeedbackLaw, ImpulseSystem, PeriodicSchedule, Trajectory
from .stabilizer import Stabilizer

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_NEGATIVE = 2
EXIT_USAGE = 64

CSV_COLUMNS = ("j", "t_j", "norm_pre", "norm_post")

Outcome = tuple[ResultRecord, int, Trajectory | None]


class _Parser(argparse.ArgumentParser):
    """ArgumentParser exiting with the usage code on bad arguments."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(
        prog="impulse-stab",
        description="Synthesize and verify periodic impulse feedback laws",
    )
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    subcommands = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    for name, help_text in (
        ("synthesize", "solve the periodic Riccati equation and derive the feedback"),
        ("simulate", "simulate the closed loop and fit its decay rate"),
        ("check-obs", "weak observability constants and optional steering"),
        ("heat-analyze", "rank tests, decomposition and schedule class of a coupled heat system"),
        ("battery", "randomized agreement battery of the stabilizability verdicts"),
    ):
        sub = subcommands.add_parser(name, help=help_text)
        sub.add_argument("--config", type=Path, required=name != "battery", help="Run config (JSON)")
        sub.add_argument("--out", type=Path, help="Write the result record here instead of stdout")
        sub.add_argument("--csv", type=Path, help="Trajectory CSV (synthesize, simulate)")
        sub.add_argument("--tol", type=float, help="Riccati convergence tolerance")
        sub.add_argument("--max-periods", type=int, help="Value iteration period budget")
        sub.add_argument("--seed", type=int, help="Seed for random starts and instances")
        sub.add_argument("--mode", choices=("search", "sufficient"), help="Weak observability mode")
        sub.add_argument(
            "--log-level", choices=("DEBUG", "INFO", "WARNING", "ERROR"), help="Logging level"
        )
    return parser


def _settings(cfg: RunConfig, args: argparse.Namespace) -> Settings:
    """Settings with config knobs applied first and command line flags last."""
    knobs = cfg.solver
    overrides = {
        "RICCATI_TOL": knobs.tol,
        "MAX_PERIODS": knobs.max_periods,
        "RANK_THRESHOLD": knobs.rank_threshold,
        "K_MAX": knobs.K_max,
        "SEED": knobs.seed,
    }
    flags = {
        "RICCATI_TOL": args.tol,
        "MAX_PERIODS": args.max_periods,
        "SEED": args.seed,
        "LOG_LEVEL": args.log_level,
    }
    overrides.update({key: value for key, value in flags.items() if value is not None})
    return Settings(**{key: value for key, value in overrides.items() if value is not None})


def _heat_schedule(stab: Stabilizer, cfg: RunConfig, heat: HeatConfig) -> PeriodicSchedule:
    spec = cfg.heat
    if spec is not None and spec.times is not None:
        try:
            schedule = PeriodicSchedule(times=spec.times)
        except ScheduleError as e:
            raise ConfigurationError(f"Invalid heat schedule: {e.message}") from e
        if schedule.hbar != heat.hbar:
            raise ConfigurationError(f"heat schedule has {schedule.hbar} instants for {heat.hbar} controls")
        return schedule
    period_hint = spec.period_hint if spec is not None else 1.0
    return stab.heat.generate_admissible_schedule(heat.S, heat.Dcat, heat.hbar, period_hint)


def _system(stab: Stabilizer, cfg: RunConfig) -> ImpulseSystem:
    if cfg.kind == "heat":
        heat = cfg.build_heat()
        return stab.heat.build_heat_system(heat, _heat_schedule(stab, cfg, heat))
    return cfg.build_system()


def _trajectory_scalars(stab: Stabilizer, trajectory: Trajectory) -> dict[str, float]:
    fit = stab.dynamics.decay_rate_fit(trajectory)
    return {"decay_rate": fit.mu, "decay_C": fit.C, "final_norm": trajectory.norms_post[-1]}


def run_synthesize(stab: Stabilizer, cfg: RunConfig) -> Outcome:
    """Periodic Riccati solve, feedback synthesis and a closed-loop decay fit."""
    system = _system(stab, cfg)
    weights = cfg.build_weights(system)
    solution, feedback = stab.synthesize(system, weights)

    if isinstance(solution, NotStabilizable):
        record = ResultRecord(
            task="synthesize",
            verdicts={"stabilizable": False, "reason": solution.reason},
            scalars={
                "periods": solution.periods,
                "growth_rate": solution.growth_rate,
                "last_norm": solution.last_norm,
            },
            details={"message": solution.message},
        )
        return record, EXIT_NEGATIVE, None

    monodromy = stab.dynamics.monodromy(system, feedback)
    radius = stab.dynamics.spectral_radius(monodromy)
    x0 = cfg.x0(system.state_dim)
    trajectory = stab.dynamics.simulate_closed_loop(system, feedback, x0, cfg.task.periods)
    record = ResultRecord(
        task="synthesize",
        verdicts={"stabilizable": True, "closed_loop_stable": radius < 1.0},
        scalars={
            "residual": solution.residual,
            "iterations": solution.iterations,
            "spectral_radius": radius,
            "P_max_eigenvalue": [float(np.linalg.eigvalsh(P).max()) for P in solution.anchors],
            **_trajectory_scalars(stab, trajectory),
        },
        details={
            "P": [P.tolist() for P in solution.anchors],
            "F": [F.tolist() for F in feedback.gains],
            "state_dim": system.state_dim,
            "hbar": system.hbar,
        },
    )
    return record, EXIT_OK, trajectory


def run_simulate(stab: Stabilizer, cfg: RunConfig) -> Outcome:
    """Closed loop under synthesized, zero or explicit gains."""
    system = _system(stab, cfg)
    feedback = cfg.build_feedback(system)
    if feedback is None:
        solution, feedback = stab.synthesize(system, cfg.build_weights(system))
        if feedback is None:
            logger.warning(f"System is not stabilizable ({solution.reason}); simulating with zero gains")
            feedback = FeedbackLaw.zero(system)

    x0 = cfg.x0(system.state_dim)
    trajectory = stab.dynamics.simulate_closed_loop(system, feedback, x0, cfg.task.periods)
    scalars = _trajectory_scalars(stab, trajectory)
    radius = stab.dynamics.spectral_radius(stab.dynamics.monodromy(system, feedback))
    stable = radius < 1.0
    record = ResultRecord(
        task="simulate",
        verdicts={"decays": stable},
        scalars={"spectral_radius": radius, **scalars},
        details={"feedback": cfg.task.feedback, "steps": trajectory.steps},
    )
    return record, EXIT_OK if stable else EXIT_NEGATIVE, trajectory


def run_check_obs(stab: Stabilizer, cfg: RunConfig) -> Outcome:
    """Weak observability in both modes, Hoelder check and steering on request."""
    system = _system(stab, cfg)
    task = cfg.task
    pair = stab.observability.build_observability_pair(system, task.K, task.observation_range)
    reports = {
        mode: stab.observability.weak_obs_minimal_C(pair, task.sigma, mode)
        for mode in ("search", "sufficient")
    }
    primary = reports[task.mode]

    scalars = {f"C_{mode}": report.C for mode, report in reports.items()}
    verdicts = {f"feasible_{mode}": report.feasible for mode, report in reports.items()}
    details = {
        "K": task.K,
        "sigma": task.sigma,
        "observation_range": task.observation_range,
        "blocks": pair.n_blocks,
        "witness": primary.witness.tolist() if primary.witness is not None else None,
    }

    if task.theta is not None:
        holder = stab.observability.holder_obs_check(pair, task.theta)
        verdicts["holder_feasible"] = holder.feasible
        scalars["C_holder"] = holder.C

    if task.steer and primary.feasible:
        if task.K % system.hbar:
            raise ConfigurationError(f"steering needs K a multiple of hbar = {system.hbar}, got {task.K}")
        # Steering bounds hold for the constant of the exclusive pair
        steering_C = reports["sufficient"].C
        if task.observation_range != "exclusive":
            exclusive = stab.observability.build_observability_pair(system, task.K, "exclusive")
            steering_C = stab.observability.weak_obs_minimal_C(exclusive, task.sigma, "sufficient").C
        result = stab.observability.steering_control(
            system,
            cfg.x0(system.state_dim),
            task.K // system.hbar,
            task.sigma,
            task.eps,
            C=steering_C,
        )
        scalars["C_steering"] = steering_C
        scalars["achieved_norm"] = result.achieved_norm
        scalars["control_norm"] = result.control_norm
        details["controls"] = result.u.values.tolist()

    record = ResultRecord(task="check-obs", verdicts=verdicts, scalars=scalars, details=details)
    return record, EXIT_OK if primary.feasible else EXIT_NEGATIVE, None


def run_heat_analyze(stab: Stabilizer, cfg: RunConfig) -> Outcome:
    """Rank tests, decomposition, schedule class and the optional verdict cross-check."""
    if cfg.kind != "heat":
        raise ConfigurationError("heat-analyze needs kind = 'heat'")
    heat = cfg.build_heat()
    schedule = _heat_schedule(stab, cfg, heat)
    hautus = stab.heat.hautus_verdict(heat.S, heat.Dcat)
    decomposition = stab.heat.kalman_decomposition(heat.S, heat.Dcat)
    window = stab.heat.schedule_in_class(schedule, heat.S, heat.Dcat)

    verdicts = {"stabilizable": hautus.stabilizable, "schedule_admissible": window.admissible}
    scalars = {
        "kalman_rank": stab.heat.kalman_rank(heat.S, heat.Dcat),
        "n1": decomposition.n1,
        "d_S": window.d_E,
        "q": window.q_EF,
        "min_window_count": window.min_window_count,
        "required": window.required,
    }
    details = {
        "times": schedule.times,
        "witness": [hautus.witness.real, hautus.witness.imag] if hautus.witness is not None else None,
        "S3": decomposition.S3.tolist(),
        "N": heat.N,
    }
    code = EXIT_OK if hautus.stabilizable else EXIT_NEGATIVE

    if cfg.task.cross_check:
        system = stab.heat.build_heat_system(heat, schedule)
        check = stab.heat.verdict_cross_check(heat, schedule, cfg.build_weights(system))
        verdicts["cross_check_agree"] = check.agree
        scalars.update(
            spectral_radius=check.spectral_radius,
            decay_rate=check.decay_rate,
            growth_rate=check.growth_rate,
            expected_growth_rate=check.expected_growth_rate,
        )
        if not check.agree:
            raise VerdictDisagreementError(check.message or "heat verdicts disagree", details=scalars)

    record = ResultRecord(task="heat-analyze", verdicts=verdicts, scalars=scalars, details=details)
    return record, code, None


def run_battery(stab: Stabilizer, cfg: RunConfig) -> Outcome:
    """Randomized verdict agreement; failing instances are serialized for replay."""
    report = VerdictBattery(stab, cfg.battery).run()
    record = ResultRecord(
        task="battery",
        verdicts={"all_agree": report.all_agree},
        scalars={
            "count": report.count,
            "disagreements": len(report.failures),
            "riccati_positive": sum(result.riccati for result in report.results),
        },
        details={
            "agreement": report.agreement,
            "strata": {
                stratum: sum(result.instance.stratum == stratum for result in report.results)
                for stratum in cfg.battery.strata
            },
            "failures": [failure.model_dump(mode="json") for failure in report.failures],
        },
    )
    return record, EXIT_OK if report.all_agree else EXIT_FAILURE, None


COMMANDS: dict[str, Callable[[Stabilizer, RunConfig], Outcome]] = {
    "synthesize": run_synthesize,
    "simulate": run_simulate,
    "check-obs": run_check_obs,
    "heat-analyze": run_heat_analyze,
    "battery": run_battery,
}


def write_csv(path: Path, trajectory: Trajectory) -> None:
    """One row per impulse: index, instant and the norms around it."""
    with path.open("w", newline="", encoding="utf-8") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_COLUMNS)
        for j, (t, pre, post) in enumerate(
            zip(trajectory.times, trajectory.norms_pre, trajectory.norms_post, strict=True), start=1
        ):
            writer.writerow((j, float(t), pre, post))


def execute(args: argparse.Namespace) -> int:
    """Run one parsed command and emit its record; returns the exit code."""
    cfg = RunConfig.load(args.config) if args.config is not None else RunConfig()
    if args.mode is not None:
        cfg = cfg.model_copy(update={"task": cfg.task.model_copy(update={"mode": args.mode})})

    settings = _settings(cfg, args)
    stab = Stabilizer(settings=settings)

    start = time.perf_counter()
    record, code, trajectory = COMMANDS[args.command](stab, cfg)
    elapsed = time.perf_counter() - start

    record = record.model_copy(
        update={
            "timing": {"seconds": elapsed},
            "provenance": {"config_digest": cfg.digest(), "seed": stab.engine.seed, "version": __version__},
        }
    )
    if args.csv is not None and trajectory is not None:
        write_csv(args.csv, trajectory)
        logger.info(f"Trajectory written to {args.csv}")

    text = record.to_json()
    if args.out is not None:
        args.out.write_text(text + "\n", encoding="utf-8")
        logger.info(f"Record written to {args.out}")
    else:
        print(text)
    return code


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return execute(args)
    except (ConfigurationError, InvalidParameterError, DimensionMismatchError, ScheduleError) as e:
        logger.error(f"Invalid run: {e.message}")
        print(f"impulse-stab: {e.message}", file=sys.stderr)
        return EXIT_USAGE
    except VerdictDisagreementError as e:
        logger.error(f"Verdicts disagree: {e.message}")
        return EXIT_FAILURE
    except StabilizationError as e:
        logger.error(f"Run failed: {e.message}")
        return EXIT_FAILURE
