"""Command-line front end: ``leray-alpha <command> [--config FILE] [--output DIR]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

from .config import (
    ConfigError,
    ConfigFileMissing,
    ConfigParseError,
    RunConfig,
    build_initial,
    load_config,
)
from .control import control_bound_report
from .dynamics import (
    OseenDrift,
    PropertyFailure,
    SimulationError,
    regularization_times,
    simulate_leray,
)
from .experiments import SweepConfig, alpha_sweep, uniformity_check
from .io import RunResult, _now, atomic_write, write_artifacts
from .nonlinear import control_to_trajectory, fixed_point_control, large_time_control

__all__ = ["main", "run_command"]

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_NOT_CONVERGED = 2
EXIT_PROPERTY = 3
EXIT_MISSING_FILE = 4
EXIT_PARSE = 5

log = logging.getLogger("leray_alpha")


def _simulate(cfg, out):
    basis, g = cfg.basis(), cfg.time_grid()
    y0 = cfg.initial_state(basis)
    tr = simulate_leray(y0, None, cfg.physics.alpha, g)
    rec = {"alpha": cfg.physics.alpha, "terminal_norm": float(tr.terminal.norm()),
           "initial_norm": float(y0.norm())}
    if y0.norm() > 0:
        # raises PropertyFailure if the regularization-set bound fails
        reg = regularization_times(tr, 2.0, g.T / 2)
        rec.update({"regularization_measure": reg["measure"], "regularization_bound": reg["bound"]})
    write_artifacts([RunResult("simulate", tr, None, cfg.physics.alpha, record=rec)], cfg, out)
    return EXIT_OK


def _control(cfg, out):
    basis, g, mask = cfg.basis(), cfg.time_grid(), cfg.mask()
    y0 = cfg.initial_state(basis)
    res = fixed_point_control(y0, cfg.physics.alpha, cfg.fixed_point_config(), mask, g)
    rec = res.record()
    rec["history"] = res.history
    # the last Oseen problem of the loop, in the null-control record layout
    hum = res.hum.record()
    hum["epsilon"] = cfg.control.epsilon
    hum["fitted_K"] = (control_bound_report(res.control, OseenDrift(g, basis, res.drift), y0)["fitted_K"]
                       if y0.norm() > 0 else None)
    rec["null_control"] = hum
    write_artifacts([RunResult("control", res.trajectory, res.control, cfg.physics.alpha,
                               record=rec)], cfg, out)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _track(cfg, out):
    basis, g, mask = cfg.basis(), cfg.time_grid(), cfg.mask()
    alpha = cfg.physics.alpha
    target0 = build_initial(cfg.track.target, basis)
    target = simulate_leray(target0, None, alpha, g)
    y0 = target0 + build_initial(cfg.track.perturbation, basis)
    res = control_to_trajectory(y0, target, alpha, cfg.fixed_point_config(cfg.track.epsilon), mask, g)
    gap = (y0 - target0).norm()
    rec = {"alpha": alpha, "iters": res.iters, "converged": res.converged,
           "tracking_error": res.tracking_error, "initial_gap": gap,
           "control_linf_l2": res.control.linf_l2()}
    write_artifacts([RunResult("track", res.trajectory, res.control, alpha, record=rec),
                     RunResult("target", target, None, alpha)], cfg, out)
    return EXIT_OK if res.converged else EXIT_NOT_CONVERGED


def _largetime(cfg, out):
    basis, g, mask = cfg.basis(), cfg.time_grid(), cfg.mask()
    y0 = cfg.initial_state(basis)
    res = large_time_control(y0, cfg.physics.alpha, cfg.largetime.threshold,
                             cfg.fixed_point_config(), mask, g, max_coast=cfg.largetime.max_coast)
    rec = res.record()
    rec["decay_curve_final"] = float(res.decay_curve[-1])
    write_artifacts([RunResult("largetime", res.trajectory, res.control, cfg.physics.alpha,
                               record=rec)], cfg, out)
    return EXIT_OK if res.succeeded else EXIT_NOT_CONVERGED


def _sweep(cfg, out):
    basis, g, mask = cfg.basis(), cfg.time_grid(), cfg.mask()
    y0 = cfg.initial_state(basis)
    rep = alpha_sweep(SweepConfig(y0, mask, g, cfg.fixed_point_config()), cfg.sweep.alphas)
    rec = {"rows": rep.records()}
    flagged = [r.alpha for r in rep.rows if not r.converged]
    rec["flagged"] = flagged
    if len(rep.converged_rows) >= 2:
        rec["uniformity"] = uniformity_check(rep)
    # ||v_alpha(t) - v_0(t)||_{L2(omega)} per grid time, reported only
    rec["control_gap"] = {f"{r.alpha:g}": r.control_gap.tolist() for r in rep.rows
                          if r.control_gap is not None}
    results = [RunResult("sweep", sweep=rep, record=rec)]
    for r in rep.rows:
        if r.result is not None:
            results.append(RunResult(f"alpha_{r.alpha:g}", r.result.trajectory, r.result.control, r.alpha))
    write_artifacts(results, cfg, out)
    return EXIT_NOT_CONVERGED if flagged else EXIT_OK


def _verify(cfg, out, tags=None):
    from .acceptance import run_suite

    started = _now()
    records = run_suite(None, tags)
    for r in records:
        print(r.line())
    payload = [r.to_dict() for r in records]
    out = Path(out)
    atomic_write(out / "acceptance.json", (json.dumps(payload, indent=2) + "\n").encode())
    write_artifacts([RunResult("verify", record={"criteria": payload})], cfg, out, started=started)
    return EXIT_OK if all(r.passed for r in records) else EXIT_PROPERTY


COMMANDS = {
    "simulate": _simulate,
    "control": _control,
    "track": _track,
    "largetime": _largetime,
    "sweep": _sweep,
    "verify": _verify,
}


def _parser():
    p = argparse.ArgumentParser(prog="leray-alpha", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        s = sub.add_parser(name)
        s.add_argument("--config", help="JSON run configuration (defaults when omitted)")
        s.add_argument("--output", help="override output.directory")
        if name == "verify":
            s.add_argument("--tags", nargs="*", help="only run criteria carrying one of these tags")
    return p


def run_command(argv):
    """Run one subcommand; returns the process exit code."""
    try:
        args = _parser().parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config) if args.config else RunConfig()
    except ConfigFileMissing as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_MISSING_FILE
    except ConfigParseError as exc:
        print(f"error: cannot parse config: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    out = args.output or cfg.output.directory
    cfg = replace(cfg, output=replace(cfg.output, directory=str(out)))
    try:
        if args.command == "verify":
            return _verify(cfg, out, args.tags)
        return COMMANDS[args.command](cfg, out)
    except PropertyFailure as exc:
        print(f"property failure: {exc}", file=sys.stderr)
        return EXIT_PROPERTY
    except SimulationError as exc:
        print(f"simulation failed at step {exc.step}: {exc}", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


def main():
    sys.exit(run_command(sys.argv[1:]))


if __name__ == "__main__":
    main()
