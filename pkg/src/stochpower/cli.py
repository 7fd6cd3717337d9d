"""Command-line entry point.

Subcommands write CSV data files, a JSON summary and a JSON manifest into
``--out``.  Exit codes: 0 success, 2 configuration or usage error, 3
simulation fault (buffer starvation under the ``error`` policy), 4
infeasible management plan.
"""

from __future__ import annotations

import argparse
import copy
import csv
import hashlib
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .bitstream import value
from .cases import VERIFICATION_CASES, Case, get_case, normalization_base, run_case
from .config import POLICIES, RunConfig, load_config, parse_config
from .errors import (ConfigError, DegenerateSampleError, DomainError, InfeasiblePlanError,
                     SimulationFault)
from .management import run_management
from .network import build, run
from .router import Operation, write_trace_csv
from .stats import TTestReport, collect_trials, t_critical, t_test, write_report_csv

EXIT_OK, EXIT_CONFIG, EXIT_FAULT, EXIT_INFEASIBLE = 0, 2, 3, 4
SMALL_SAMPLE = 30


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _write_manifest(out: Path, command: str, cfg: RunConfig, params: dict, files: list[str]) -> None:
    _write_json(out / "manifest.json", {
        "command": command,
        "parameters": params,
        "config_digest": cfg.digest(),
        "master_seed": cfg.seed,
        "tool_version": __version__,
        "outputs": [{"file": f, "sha256": _sha256(out / f)} for f in files],
    })


def _effective_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else parse_config({})
    canonical = copy.deepcopy(cfg.canonical)
    if args.seed is not None:
        if args.seed < 0:
            raise ConfigError("--seed must be non-negative")
        cfg = replace(cfg, seed=args.seed)
        canonical["seed"] = args.seed
    if getattr(args, "buffer", None):
        cfg = replace(cfg, buffer=replace(cfg.buffer, kind=args.buffer))
        canonical["buffer"]["kind"] = args.buffer
    if getattr(args, "waveform", None):
        cfg = replace(cfg, waveform=replace(cfg.waveform, kind=args.waveform))
        canonical["waveform"]["kind"] = args.waveform
    return replace(cfg, canonical=canonical)


def _buffer_summary(buf) -> dict:
    return {"kind": buf.kind.value, "charge_final": buf.charge, "charges": buf.charges,
            "outputs": buf.outputs, "overflow_discards": buf.overflow_discards,
            "starvations": buf.starvations}


def cmd_case(args) -> int:
    cfg = _effective_config(args)
    if args.case is not None:
        case = get_case(args.case)
    elif args.mode is not None:
        if args.pf is None or args.pb is None:
            raise ConfigError("--mode needs both --pf and --pb")
        case = Case(None, Operation(args.mode), args.pf, args.pb, args.pmux)
    else:
        raise ConfigError("give either --case or --mode/--pf/--pb")
    if args.duration <= 0:
        raise ConfigError("--duration must be positive")
    n = cfg.electrical.slots_in(args.duration)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    result = run_case(case, n, cfg.seed, (), cfg.electrical, cfg.waveform, cfg.buffer.build())
    load = result.load
    base = normalization_base(n, cfg.electrical, cfg.waveform)
    average = load.mean()
    normalized = average / base
    write_trace_csv(result.traces, out / "trace.csv")
    load.to_csv(out / "power.csv")
    summary = {
        "case": case.label,
        "mode": case.op.value,
        "p_f": case.p_f,
        "p_b": case.p_b,
        "p_mux": case.p_mux,
        "duration_s": args.duration,
        "n_slots": n,
        "master_seed": cfg.seed,
        "average_w": average,
        "base_w": base,
        "normalized_average": normalized,
        "output_density": float(value(result.output)) if n else None,
        "target": case.target,
        "deviation": normalized - case.target,
        "buffer": _buffer_summary(result.router.buffer),
    }
    _write_json(out / "summary.json", summary)
    params = {"case": case.label, "mode": case.op.value, "p_f": case.p_f, "p_b": case.p_b,
              "p_mux": case.p_mux, "duration_s": args.duration}
    _write_manifest(out, "case", cfg, params, ["trace.csv", "power.csv", "summary.json"])
    print(f"case {case.label}: normalized average {normalized:.4f} "
          f"(target {case.target:.4f}, deviation {normalized - case.target:+.4f})")
    return EXIT_OK


def cmd_trials(args) -> int:
    cfg = _effective_config(args)
    cases = [get_case(i) for i in args.case] if args.case else list(VERIFICATION_CASES)
    if args.trials < 2:
        raise ConfigError("--trials must be at least 2")
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    rows: list[tuple[str, TTestReport]] = []
    per_case = []
    with open(out / "samples.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["case", "trial", "sample"])
        for case in cases:
            results = collect_trials(case, args.trials, args.window, cfg.seed,
                                     cfg.electrical, cfg.waveform)
            samples = [r.mean_normalized_power for r in results]
            try:
                report = t_test(samples, case.target, args.alpha)
                degenerate = False
            except DegenerateSampleError:
                # every trial produced the same window mean
                degenerate = True
                report = TTestReport(len(samples), float(np.mean(samples)), 0.0, case.target,
                                     math.nan, args.alpha, t_critical(len(samples) - 1, args.alpha),
                                     False)
            for i, r in enumerate(results):
                w.writerow([case.label, i, repr(r.mean_normalized_power)])
            rows.append((case.label, report))
            per_case.append({
                "case": case.label, "target": case.target, "mean": report.mean,
                "unbiased_variance": report.variance,
                "statistic": None if degenerate else report.statistic,
                "critical": report.critical, "accepted": report.accepted,
                "degenerate": degenerate,
                "small_sample": args.trials < SMALL_SAMPLE,
                "standard_error": math.sqrt(report.variance / report.n),
            })
    write_report_csv(rows, out / "report.csv")
    summary = {"n_trials": args.trials, "window_s": args.window, "alpha": args.alpha,
               "master_seed": cfg.seed, "all_accepted": all(r.accepted for _, r in rows),
               "cases": per_case}
    _write_json(out / "summary.json", summary)
    params = {"cases": [c.label for c in cases], "n_trials": args.trials, "window_s": args.window,
              "alpha": args.alpha}
    _write_manifest(out, "trials", cfg, params, ["report.csv", "samples.csv", "summary.json"])

    print(f"{'case':>5} {'mean':>9} {'variance':>9} {'statistic':>10} {'critical':>9}  accepted")
    for label, r in rows:
        print(f"{label:>5} {r.mean:9.6f} {r.variance:9.6f} {r.statistic:10.6f} {r.critical:9.6f}  "
              f"{'yes' if r.accepted else 'NO'}")
    if args.trials < SMALL_SAMPLE:
        print(f"warning: only {args.trials} trials per case; variance estimates are wide",
              file=sys.stderr)
    return EXIT_OK


def cmd_manage(args) -> int:
    cfg = _effective_config(args)
    out = Path(args.out)
    mcfg = cfg.management
    if not mcfg.schedule:
        raise ConfigError("the management schedule is empty")
    result = run_management(mcfg, cfg.seed, cfg.electrical, cfg.waveform, cfg.buffer.build(),
                            POLICIES[cfg.policy])
    out.mkdir(parents=True, exist_ok=True)

    with open(out / "plan.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["segment", "p_tar", "hold_s", "feasible_mul", "feasible_add", "op", "p_int"])
        for k, (seg, step) in enumerate(zip(mcfg.schedule, result.plan)):
            w.writerow([k, seg.p_tar, seg.hold_s, int(step.feasible_mul), int(step.feasible_add),
                        step.chosen_op.value, repr(float(step.p_int))])

    series = result.output
    stride = max(1, int(round(cfg.tracking_dt / series.dt)))
    times = series.times[::stride]
    vals = series.samples[::stride]
    ends = np.array([e for _, e in result.segment_bounds])
    seg_idx = np.minimum(np.searchsorted(ends, times - 1e-12), len(ends) - 1)
    targets = np.array([float(s.p_tar) for s in mcfg.schedule])[seg_idx]
    with open(out / "tracking.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "target", "output"])
        for t, tg, v in zip(times.tolist(), targets.tolist(), vals.tolist()):
            w.writerow([repr(t), repr(tg), repr(v)])

    segments = [{"segment": k, "p_tar": float(s.p_tar), "op": st.chosen_op.value,
                 "p_int": float(st.p_int), "max_tracking_error": err}
                for k, (s, st, err) in enumerate(zip(mcfg.schedule, result.plan, result.tracking_error))]
    summary = {"p_ext": mcfg.p_ext, "moving_avg_s": mcfg.moving_avg_s, "policy": cfg.policy,
               "master_seed": cfg.seed, "base_w": result.base_power, "segments": segments,
               "max_tracking_error": max(result.tracking_error)}
    _write_json(out / "summary.json", summary)
    _write_manifest(out, "manage", cfg, {}, ["plan.csv", "tracking.csv", "summary.json"])
    for s in segments:
        print(f"segment {s['segment']}: p_tar={s['p_tar']:.3f} op={s['op']} p_int={s['p_int']:.4f} "
              f"max error {s['max_tracking_error']:.4f}")
    return EXIT_OK


def cmd_network(args) -> int:
    cfg = _effective_config(args)
    if not cfg.nodes:
        raise ConfigError("the config defines no [[network.nodes]]")
    n = args.slots if args.slots is not None else cfg.n_slots
    if n < 0:
        raise ConfigError("--slots must be non-negative")
    net = build(cfg.nodes)
    result = run(net, n, cfg.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    files = []
    for nid, traces in result.traces.items():
        name = f"trace_{nid}.csv"
        write_trace_csv(traces, out / name)
        files.append(name)
    summary = {"n_slots": n, "master_seed": cfg.seed, "order": list(net.order),
               "values": result.values(), "terminal": net.load_id,
               "terminal_value": float(value(result.terminal)) if n else None}
    _write_json(out / "summary.json", summary)
    files.append("summary.json")
    _write_manifest(out, "network", cfg, {"n_slots": n}, files)
    for nid, v in summary["values"].items():
        print(f"{nid}: {v:.5f}")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="stochpower", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, sim=True):
        sp.add_argument("--config", help="TOML configuration file")
        sp.add_argument("--seed", type=int, help="master seed (overrides the config)")
        sp.add_argument("--out", default="out", help="output directory")
        sp.add_argument("--waveform", choices=["rect", "rc"])
        if sim:
            sp.add_argument("--buffer", choices=["ideal", "ledger"])

    c = sub.add_parser("case", help="run one verification case")
    common(c)
    c.add_argument("--case", type=int, help="case index 0..15")
    c.add_argument("--mode", choices=["mul", "add"])
    c.add_argument("--pf", type=float)
    c.add_argument("--pb", type=float)
    c.add_argument("--pmux", type=float, default=0.5)
    c.add_argument("--duration", type=float, default=0.4, help="seconds (default 0.4)")
    c.set_defaults(func=cmd_case)

    t = sub.add_parser("trials", help="multi-seed t-test report")
    common(t, sim=False)
    t.add_argument("--case", type=int, action="append", help="case index (repeatable; default all)")
    t.add_argument("--trials", type=int, default=200)
    t.add_argument("--window", type=float, default=1e-3, help="seconds per trial (default 0.001)")
    t.add_argument("--alpha", type=float, default=0.05)
    t.set_defaults(func=cmd_trials)

    m = sub.add_parser("manage", help="two-subsystem power management scenario")
    common(m)
    m.set_defaults(func=cmd_manage)

    n = sub.add_parser("network", help="run a network described in the config")
    common(n)
    n.add_argument("--slots", type=int)
    n.set_defaults(func=cmd_network)
    return p


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        return args.func(args)
    except InfeasiblePlanError as exc:
        print(f"error: infeasible plan: {exc}", file=sys.stderr)
        return EXIT_INFEASIBLE
    except SimulationFault as exc:
        print(f"error: simulation fault: {exc}", file=sys.stderr)
        return EXIT_FAULT
    except (ConfigError, DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
