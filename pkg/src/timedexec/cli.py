"""Command-line front end: ``timedexec run | sr | trace``.

Exit status is 0 unless the input fails validation; a schedule that fails
inside the simulation is reported as data.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import replace
from typing import Sequence

from .adversary import ScenarioOutcome, run_scenario
from .analytics import SRParams, rows_to_csv, standard_grid, sweep
from .config import ConfigError, ScenarioConfig, instance_a, instance_b, load_config
from .ledger import replay

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_INVALID = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="timedexec", description="Simulate and analyse privacy-preserving timed execution.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def scenario_flags(p: argparse.ArgumentParser) -> None:
        src = p.add_mutually_exclusive_group()
        src.add_argument("--config", help="scenario TOML file")
        src.add_argument("--instance", choices=("a", "b"), help="built-in test instance (default: a)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out", help="write output here instead of stdout")
        p.add_argument("--format", choices=("text", "csv"), default="text")

    run = sub.add_parser("run", help="run scenarios and summarise their outcomes")
    scenario_flags(run)
    run.add_argument("--runs", type=int, help="number of consecutive seeds (overrides the config)")
    run.add_argument("--workers", type=int, default=1, help="processes for --runs > 1")

    trace = sub.add_parser("trace", help="export the transaction trace of one scenario")
    scenario_flags(trace)

    sr = sub.add_parser("sr", help="closed-form success rate, optionally with Monte Carlo")
    sr.add_argument("--l", default="3", help="layers, comma-separated list allowed")
    sr.add_argument("--m", default="2", help="thresholds, comma-separated or 'all' for 1..n")
    sr.add_argument("--n", default="5", help="shares, comma-separated list allowed")
    sr.add_argument("--p-im", type=float, default=0.05, dest="p_im")
    sr.add_argument("--grid", choices=("standard",), help="the standard n in {5,10}, l in {3,4,5} grid")
    sr.add_argument("--mc", type=int, default=0, metavar="RUNS", help="Monte Carlo runs per cell")
    sr.add_argument("--seed", type=int, default=0)
    sr.add_argument("--workers", type=int, default=1)
    sr.add_argument("--out")
    sr.add_argument("--format", choices=("text", "csv"), default="text")
    return parser


def _int_list(text: str, name: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--{name} expects comma-separated integers, got {text!r}") from None


def _scenario_config(args) -> ScenarioConfig:
    if args.config:
        config = load_config(args.config)
    else:
        config = instance_b() if args.instance == "b" else instance_a()
    if args.seed is not None:
        config = config.with_seed(args.seed)
    runs = getattr(args, "runs", None)
    if runs is not None:
        if runs < 1:
            raise ConfigError("--runs must be at least 1")
        config = replace(config, runs=runs)
    return config


def _summary(config: ScenarioConfig, outcome: ScenarioOutcome) -> list[str]:
    lines = [
        f"seed: {outcome.seed}",
        f"executed: {str(outcome.executed).lower()}, slashes: {len(outcome.slashes)}",
        f"phase: {outcome.phase.value}",
        f"parameters: l={config.l} m={config.m} n={config.n} pool={config.pool_size}",
    ]
    if outcome.failure:
        lines.append(f"failure: {outcome.failure}")
    for r in outcome.slashes:
        lines.append(f"slash: {r.kind.value} tid={r.tid} violator={r.violator} award={r.award} refund={r.refund}")
    lines.append(f"state_hash: 0x{outcome.state_hash.hex()}")
    lines.append("record: " + json.dumps(outcome.to_record(), sort_keys=True))
    return lines


def _run_one(config: ScenarioConfig) -> tuple[ScenarioConfig, dict, list[str]]:
    outcome = run_scenario(config)
    return config, outcome.to_record(), _summary(config, outcome)


def cmd_run(args) -> str:
    config = _scenario_config(args)
    configs = [config.with_seed(config.seed + i) for i in range(config.runs)]
    if args.workers > 1 and len(configs) > 1:
        with ProcessPoolExecutor(max_workers=args.workers) as pool:
            results = list(pool.map(_run_one, configs))
    else:
        results = [_run_one(c) for c in configs]

    if args.format == "csv":
        buf = io.StringIO()
        writer = csv.writer(buf, lineterminator="\n")
        writer.writerow(["seed", "executed", "phase", "slashes", "failure", "state_hash"])
        for _, record, _ in results:
            writer.writerow(
                [record["seed"], str(record["executed"]).lower(), record["phase"], len(record["slashes"]),
                 record["failure"] or "", record["state_hash"]]
            )
        return buf.getvalue()
    blocks = ["\n".join(summary) for _, _, summary in results]
    if len(results) > 1:
        executed = sum(record["executed"] for _, record, _ in results)
        blocks.append(f"total: {executed}/{len(results)} executed")
    return "\n\n".join(blocks) + "\n"


def cmd_trace(args) -> str:
    config = _scenario_config(args)
    outcome = run_scenario(config)
    ledger = outcome.ledger
    body = "\n".join(ledger.trace_lines()) + "\n"
    if args.format == "csv":
        return body
    replayed = replay(ledger.genesis_balances, ledger.submitted, ledger.clock)
    ok = replayed.state_hash() == ledger.state_hash() and replayed.trace_lines() == ledger.trace_lines()
    extra = ["", "# invocation counts"]
    extra += [f"{name},{count}" for name, count in sorted(ledger.invocation_counts().items())]
    extra += ["", f"# state_hash 0x{ledger.state_hash().hex()}", f"# replay {'ok' if ok else 'MISMATCH'}"]
    return body + "\n".join(extra) + "\n"


def cmd_sr(args) -> str:
    if args.grid == "standard":
        grid = standard_grid(p_im=args.p_im)
    else:
        grid = []
        for n in _int_list(args.n, "n"):
            ms = range(1, n + 1) if args.m.strip() == "all" else _int_list(args.m, "m")
            for l in _int_list(args.l, "l"):
                for m in ms:
                    try:
                        grid.append(SRParams(l, m, n, args.p_im))
                    except ValueError as exc:
                        raise ConfigError(str(exc)) from None
    if args.mc < 0:
        raise ConfigError("--mc must be non-negative")
    try:
        rows = sweep(grid, mc_runs=args.mc, seed=args.seed, workers=args.workers)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    if args.format == "csv":
        return rows_to_csv(rows)
    header = f"{'l':>3} {'m':>3} {'n':>3} {'p_IM':>6} {'SR':>10}"
    if args.mc:
        header += f" {'SR_mc':>10} {'stderr':>9}"
    lines = [header]
    for row in rows:
        p = row.params
        line = f"{p.l:>3} {p.m:>3} {p.n:>3} {p.p_im:>6g} {row.sr_analytic:>10.6f}"
        if row.mc is not None:
            line += f" {row.mc.estimate:>10.6f} {row.mc.stderr:>9.2e}"
        lines.append(line)
    return "\n".join(lines) + "\n"


COMMANDS = {"run": cmd_run, "trace": cmd_trace, "sr": cmd_sr}


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        text = COMMANDS[args.command](args)
        if args.out:
            with open(args.out, "w", encoding="utf-8", newline="") as fh:
                fh.write(text)
        else:
            sys.stdout.write(text)
    except (_UsageError, ConfigError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID
    return EXIT_OK
