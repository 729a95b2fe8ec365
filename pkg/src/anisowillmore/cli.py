"""Command line driver: ``anisowillmore {run, convergence, verify}``.

Exit codes: 0 success, 1 failed verification checks, 2 configuration error,
3 solver nonconvergence (or a degenerate mesh during a run), 4 I/O error.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .analysis import energy_report, run_convergence_study
from .config import RunConfig, StudyConfig, describe_model
from .errors import InvalidConfigError, InvalidInputError, NearSingularError, NonconvergenceError
from .fdcheck import verification_suite
from .geometry import write_snapshot_csv
from .solver import FlowTrajectory, run_flow

EXIT_OK, EXIT_CHECKS, EXIT_CONFIG, EXIT_NONCONVERGENCE, EXIT_IO = 0, 1, 2, 3, 4

log = logging.getLogger("anisowillmore")


def _out_dir(args, configured: str | None, default: str) -> Path:
    out = Path(args.out or configured or default)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _step_stats(traj: FlowTrajectory) -> list[dict]:
    rows = []
    for r in traj.records:
        d = r.diagnostics
        rows.append(
            {
                "step": r.step,
                "time": r.time,
                "energy_out": d.energy_out,
                "energy_out_trivial": d.energy_out_trivial,
                "area": d.area,
                "willmore": d.willmore,
                "newton_iterations": d.newton_iterations,
                "residual": d.residual,
                "continuation_stages": d.continuation_stages,
            }
        )
    return rows


def cmd_run(args) -> int:
    cfg = RunConfig.from_file(args.config)
    out = _out_dir(args, cfg.out, "out")
    X0 = cfg.initial.build(cfg.model)
    solver_cfg = cfg.solver_config(X0)
    snaps = set(cfg.snapshots)
    log.info("run: %s, %d vertices, tau=%.4g, tau~=%.4g, %d steps", cfg.model.kind, X0.n_vertices,
             solver_cfg.tau, solver_cfg.tau_tilde, solver_cfg.steps)

    # the initial curve is written up front so it survives a failing first inner solve
    if 0 in snaps:
        write_snapshot_csv(out / "snapshot_0.csv", X0)

    def on_step(rec):
        if rec.step in snaps and rec.step > 0:
            write_snapshot_csv(out / f"snapshot_{rec.step}.csv", rec.surface)
        partial.records.append(rec)

    partial = FlowTrajectory()
    status, code = "ok", EXIT_OK
    try:
        run_flow(cfg.model, X0, solver_cfg, callback=on_step)
    except (NonconvergenceError, NearSingularError) as exc:
        status, code = f"failed: {exc}", EXIT_NONCONVERGENCE
        print(f"error: {exc}", file=sys.stderr)

    exact = cfg.wants_exact_error()
    report = energy_report(partial, cfg.model, cfg.initial.radius if exact else None)
    (out / "diagnostics.csv").write_text(report.to_csv())
    summary = {
        "config": cfg.mapping,
        "model": describe_model(cfg.model),
        "vertices": X0.n_vertices,
        "h0": cfg.h0_of(X0),
        "tau": solver_cfg.tau,
        "tau_tilde": solver_cfg.tau_tilde,
        "status": status,
        "steps": _step_stats(partial),
    }
    (out / "run.json").write_text(json.dumps(summary, indent=1) + "\n")
    return code


def cmd_convergence(args) -> int:
    cfg = StudyConfig.from_file(args.config)
    out = _out_dir(args, cfg.out, "out")
    study = run_convergence_study(cfg.spec(), workers=args.threads)
    text = study.to_csv()
    (out / "study.csv").write_text(text)
    sys.stdout.write(text)
    return EXIT_OK


def cmd_verify(args) -> int:
    sizes = tuple(int(s) for s in args.sizes.split(",") if s.strip())
    if not sizes or min(sizes) < 3:
        raise InvalidConfigError("--sizes needs polygon sizes >= 3")
    if args.tol_scale < 0:
        raise InvalidConfigError("--tol-scale must be non-negative")
    results = verification_suite(seed=args.seed, sizes=sizes, tol_scale=args.tol_scale, instances=args.instances)
    failed = 0
    lines = []
    for r in results:
        failed += not r.passed
        lines.append(f"{'PASS' if r.passed else 'FAIL'}  {r.deviation:.3e} <= {r.tolerance:.1e}  {r.name}")
    lines.append(f"{len(results) - failed}/{len(results)} checks passed")
    text = "\n".join(lines) + "\n"
    sys.stdout.write(text)
    if args.out:
        _out_dir(args, None, "out").joinpath("verify.txt").write_text(text)
    return EXIT_CHECKS if failed else EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="flat key = value config file (or a run.json)")
    common.add_argument("--out", help="output directory (overrides output.dir)")
    common.add_argument("--seed", type=int, default=0, help="random seed (verify)")
    common.add_argument("--threads", type=int, default=1, help="worker processes (convergence rows)")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="anisowillmore", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    sub.add_parser("run", parents=[common], help="run one flow, write snapshots and diagnostics")
    sub.add_parser("convergence", parents=[common], help="convergence study against expanding Wulff shapes")
    v = sub.add_parser("verify", parents=[common], help="finite-difference derivative checks")
    v.add_argument("--sizes", default="8", help="comma separated polygon sizes")
    v.add_argument("--tol-scale", type=float, default=1.0, help="multiply every tolerance by this factor")
    v.add_argument("--instances", type=int, default=20, help="random instances per check")
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    if args.command in ("run", "convergence") and not args.config:
        print("error: --config is required", file=sys.stderr)
        return EXIT_CONFIG
    if args.threads < 1:
        print("error: --threads must be >= 1", file=sys.stderr)
        return EXIT_CONFIG
    handler = {"run": cmd_run, "convergence": cmd_convergence, "verify": cmd_verify}[args.command]
    try:
        return handler(args)
    except InvalidConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NonconvergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (OSError, InvalidInputError) as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
