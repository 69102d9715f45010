"""Command-line front end: run, sweep, check, replay.

Exit codes: 0 success, 1 a run stalled or a property assertion failed
(the report is still written), 2 configuration problems.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import statistics
import sys
from typing import List, Optional

from .metrics import scaling_fit, write_csv
from .simnet import ConfigError, SimConfig, load_scenario, replay_trace, sim_run

log = logging.getLogger("slimabc")


def _setup_logging() -> None:
    level = os.environ.get("SLIM_ABC_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")


def _apply_overrides(cfg: SimConfig, args: argparse.Namespace) -> SimConfig:
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
    if getattr(args, "policy", None) is not None:
        cfg.policy = args.policy
    if getattr(args, "instances", None) is not None:
        cfg.instances = args.instances
    cfg.validate()
    return cfg


def cmd_run(args: argparse.Namespace) -> int:
    cfg = _apply_overrides(load_scenario(args.scenario), args)
    report = sim_run(cfg, trace_path=args.trace)
    payload = report.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(payload + "\n")
    else:
        print(payload)
    if not report.ok:
        log.warning("run failed: %s", "; ".join(report.failures) or "stalled")
        return 1
    return 0


def cmd_check(args: argparse.Namespace) -> int:
    cfg = load_scenario(args.scenario)
    base_seed = cfg.seed
    failed: List[tuple] = []
    counts: dict = {}
    for k in range(args.seeds):
        cfg.seed = base_seed + k
        report = sim_run(cfg)
        for name, ok in report.assertions.items():
            passed, total = counts.get(name, (0, 0))
            counts[name] = (passed + (1 if ok else 0), total + 1)
        if not report.ok:
            failed.append((cfg.seed, report.failures or ["stalled"]))
    for name in sorted(counts):
        passed, total = counts[name]
        print(f"{name}: {passed}/{total}")
    if failed:
        seed, reasons = failed[0]
        print(f"FAIL first at seed {seed}: {reasons[0]}")
        return 1
    print(f"OK {args.seeds} seeds")
    return 0


def _parse_int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError as e:
        raise ConfigError(f"bad integer list {text!r}") from e


def cmd_sweep(args: argparse.Namespace) -> int:
    base = load_scenario(args.scenario) if args.scenario else SimConfig(n=4, f=1)
    ns = _parse_int_list(args.n_list)
    rows = []
    mean_messages = []
    mean_bytes = []
    for n in ns:
        f = (n - 1) // 3
        if n != 3 * f + 1 or f < 1:
            raise ConfigError(f"n={n} is not 3f+1")
        per_run = []
        per_bytes = []
        for k in range(args.seeds):
            cfg = SimConfig(
                n=n, f=f, seed=base.seed + k, instances=base.instances,
                policy=base.policy, policy_params=dict(base.policy_params),
                pool_size=base.pool_size, batch_size=base.batch_size,
                request_size=base.request_size, overlap=base.overlap,
                max_steps=base.max_steps,
            )
            report = sim_run(cfg)
            if not report.ok:
                print(f"run n={n} seed={cfg.seed} failed", file=sys.stderr)
                return 1
            per_run.append(report.messages)
            per_bytes.append(report.bytes)
            rows.append({
                "n": n, "f": f, "seed": cfg.seed,
                "batch_bytes": cfg.batch_size * cfg.request_size,
                "messages": report.messages, "bytes": report.bytes,
                "steps": report.steps,
            })
        mean_messages.append(statistics.fmean(per_run))
        mean_bytes.append(statistics.fmean(per_bytes))
    summary = {"n_list": ns, "mean_messages": mean_messages, "mean_bytes": mean_bytes}
    if len(ns) >= 2:
        summary["message_exponent_vs_n"] = scaling_fit(ns, mean_messages)
    # Least-squares c for messages = c*n^2 over the means, padded 25% so it is
    # a per-run bound claim, not a trend line; the max observed ratio ships too.
    ls_c = sum(m * n * n for n, m in zip(ns, mean_messages)) / sum(n ** 4 for n in ns)
    summary["message_c_quadratic"] = round(1.25 * ls_c, 4)
    summary["message_c_max_run"] = round(
        max(r["messages"] / (r["n"] ** 2) for r in rows), 4
    )
    if args.l_list:
        ls = _parse_int_list(args.l_list)
        n = ns[-1]
        f = (n - 1) // 3
        per_l = []
        for l in ls:
            vals = []
            for k in range(args.seeds):
                cfg = SimConfig(
                    n=n, f=f, seed=base.seed + k, instances=base.instances,
                    policy=base.policy, pool_size=base.pool_size,
                    batch_size=base.batch_size, request_size=l,
                    overlap=base.overlap, max_steps=base.max_steps,
                )
                report = sim_run(cfg)
                if not report.ok:
                    print(f"run n={n} l={l} seed={cfg.seed} failed", file=sys.stderr)
                    return 1
                vals.append(report.bytes)
                rows.append({
                    "n": n, "f": f, "seed": cfg.seed,
                    "batch_bytes": cfg.batch_size * l,
                    "messages": report.messages, "bytes": report.bytes,
                    "steps": report.steps,
                })
            per_l.append(statistics.fmean(vals))
        summary["l_list"] = ls
        summary["mean_bytes_vs_l"] = per_l
        summary["bytes_exponent_vs_l"] = scaling_fit(
            [base.batch_size * l for l in ls], per_l
        )
    if args.csv:
        write_csv(args.csv, rows)
    print(json.dumps(summary, sort_keys=True))
    return 0


def cmd_replay(args: argparse.Namespace) -> int:
    ok, step, detail = replay_trace(args.trace)
    if ok:
        print("replay OK")
        return 0
    print(f"replay diverged at step {step}: {detail}")
    return 1


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="slimabc",
        description="committee-based asynchronous atomic broadcast under a "
                    "deterministic adversarial network simulator",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one scenario and print its report")
    p_run.add_argument("--scenario", required=True)
    p_run.add_argument("--seed", type=int)
    p_run.add_argument("--policy")
    p_run.add_argument("--instances", type=int)
    p_run.add_argument("--out", help="write the JSON report here instead of stdout")
    p_run.add_argument("--trace", help="write a step-by-step replay trace (JSONL)")
    p_run.set_defaults(fn=cmd_run)

    p_check = sub.add_parser("check", help="run a scenario across seeds, report per-property")
    p_check.add_argument("--scenario", required=True)
    p_check.add_argument("--seeds", type=int, default=10)
    p_check.set_defaults(fn=cmd_check)

    p_sweep = sub.add_parser("sweep", help="scaling sweep over n (and optionally payload size)")
    p_sweep.add_argument("--scenario", help="base parameters (defaults: n=4 fifo honest)")
    p_sweep.add_argument("--n-list", default="4,7,10,13")
    p_sweep.add_argument("--l-list", help="request sizes for the payload scaling fit")
    p_sweep.add_argument("--seeds", type=int, default=3)
    p_sweep.add_argument("--csv", help="write per-run rows to this CSV file")
    p_sweep.set_defaults(fn=cmd_sweep)

    p_rep = sub.add_parser("replay", help="re-execute a trace and verify it matches")
    p_rep.add_argument("--trace", required=True)
    p_rep.set_defaults(fn=cmd_replay)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.fn(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return 2
    except OSError as e:
        print(f"io error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
