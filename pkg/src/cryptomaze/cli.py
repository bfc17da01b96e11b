"""``bench`` command line: run experiments, shared-edge statistics and attack demos.

Exit status is 0 on success, 1 for bad configuration and 2 for runtime failures.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from dataclasses import asdict

from .adversary import LinkabilityGame, InvalidColluderPlacement, InsufficientTrials, wormhole_attempt
from .baselines import DEFAULT_PROOF_BYTES
from .bench import (
    CSV_COLUMNS, PROTOCOLS, ConfigError, ExperimentConfig, load_graph, run_experiment,
    shared_edge_report,
)
from .engine import SimConfig
from .pcn import InvalidParam, ParseError, ValidationError, coins

CONFIG_ERRORS = (ConfigError, ParseError, ValidationError, InvalidParam, InvalidColluderPlacement,
                 InsufficientTrials)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("cryptomaze.bench")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def _amounts(text: str) -> list[int]:
    try:
        return [coins(a) for a in text.split(",") if a.strip()]
    except (ValueError, ArithmeticError) as exc:
        raise argparse.ArgumentTypeError(f"bad amount list {text!r}") from exc


def _protocols(text: str) -> tuple[str, ...]:
    names = tuple(p.strip() for p in text.split(",") if p.strip())
    bad = [p for p in names if p not in PROTOCOLS]
    if bad:
        raise argparse.ArgumentTypeError(f"unknown protocol(s) {', '.join(bad)}")
    return names


def _pair(text: str) -> tuple[int, int]:
    try:
        a, b = (int(x) for x in text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError("expected two node ids, e.g. 2,5") from exc
    return a, b


def _sim_args(p):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--delta", type=int, default=1, help="message latency in ticks")
    p.add_argument("--Delta", type=int, default=10, help="timeout gap between adjacent contracts")
    p.add_argument("--tend", type=int, default=None, help="receiver-side timeout (default: derived)")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bench", description="Multi-path payment protocol experiments.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    run = sub.add_parser("run", help="compare protocols on random payments")
    run.add_argument("--graph", required=True, help="snapshot JSON, ba:n,m or fixture:diamond")
    run.add_argument("--amounts", type=_amounts, required=True, help="comma-separated coin amounts")
    run.add_argument("--trials", type=int, default=1)
    run.add_argument("--protocols", type=_protocols, default=("cryptomaze",))
    _sim_args(run)
    run.add_argument("--out", default=None, help="CSV output (default: stdout)")
    run.add_argument("--workers", type=int, default=1)
    run.add_argument("--lock-mechanism", choices=("point", "ecdsa"), default="point")
    run.add_argument("--proof-bytes", type=int, default=DEFAULT_PROOF_BYTES)
    run.add_argument("--max-paths", type=int, default=16)
    run.add_argument("--tick-ms", type=float, default=0.0,
                     help="network latency per simulated tick, reported as latency_ms")
    run.add_argument("--pair", type=_pair, default=None, help="fixed payer,payee for every trial")

    shared = sub.add_parser("shared-edges", help="how often routes share channels")
    shared.add_argument("--graph", required=True)
    shared.add_argument("--amounts", type=_amounts, required=True)
    shared.add_argument("--trials", type=int, default=100)
    shared.add_argument("--seed", type=int, default=0)
    shared.add_argument("--out", default=None, help="JSON output (default: stdout)")

    attack = sub.add_parser("attack", help="wormhole or linkability demonstration")
    attack.add_argument("--kind", choices=("wormhole", "linkability"), required=True)
    attack.add_argument("--protocol", choices=("cryptomaze", "htlc"), default="cryptomaze")
    attack.add_argument("--hops", type=int, default=7, help="chain length for the wormhole demo")
    attack.add_argument("--colluders", type=_pair, default=(2, 5))
    attack.add_argument("--variant", choices=("cryptomaze", "strawman"), default="cryptomaze")
    attack.add_argument("--trials", type=int, default=1000)
    _sim_args(attack)
    attack.add_argument("--out", default=None, help="JSON report (default: stdout)")
    return parser


def _emit(text: str, path: str | None) -> None:
    if path:
        with open(path, "w") as fh:
            fh.write(text + "\n")
    else:
        print(text)


def _cmd_run(args) -> int:
    cfg = ExperimentConfig(graph=args.graph, amounts=args.amounts, trials=args.trials,
                           protocols=args.protocols, seed=args.seed, delta=args.delta,
                           Delta=args.Delta, t_end=args.tend, out=args.out, workers=args.workers,
                           lock_mechanism=args.lock_mechanism, proof_bytes=args.proof_bytes,
                           max_paths=args.max_paths, pair=args.pair,
                           tick_ms=args.tick_ms)
    load_graph(cfg.graph, cfg.seed)  # surface graph errors as configuration errors
    rows = run_experiment(cfg)
    if not args.out:
        w = csv.DictWriter(sys.stdout, fieldnames=CSV_COLUMNS)
        w.writeheader()
        for row in rows:
            w.writerow(asdict(row))
    log.info("%d rows", len(rows))
    return EXIT_OK


def _cmd_shared(args) -> int:
    if args.trials < 1:
        raise ConfigError("trials must be at least 1")
    graph = load_graph(args.graph, args.seed)
    report = [shared_edge_report(graph, a, args.trials, args.seed).to_dict() for a in args.amounts]
    _emit(json.dumps(report, indent=2), args.out)
    return EXIT_OK


def _cmd_attack(args) -> int:
    try:
        config = SimConfig(delta=args.delta, Delta=args.Delta, t_end=args.tend, seed=args.seed)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    if args.kind == "wormhole":
        from .fixtures import chain_graph
        if args.hops < 3:
            raise ConfigError("wormhole demo needs at least three hops")
        outcome = wormhole_attempt(chain_graph(args.hops), 0, args.hops, coins("1"),
                                   args.colluders, args.protocol, config)
        report = {"test": f"wormhole-{args.protocol}", "trials": 1,
                  "statistic": outcome.stolen, "threshold": 0, "pass": outcome.blocked}
    else:
        report = LinkabilityGame(config=config, variant=args.variant).play(args.trials, args.seed).to_dict()
    _emit(json.dumps(report), args.out)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    handler = {"run": _cmd_run, "shared-edges": _cmd_shared, "attack": _cmd_attack}[args.command]
    try:
        return handler(args)
    except CONFIG_ERRORS as exc:
        print(f"bench: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # anything else is a runtime failure
        print(f"bench: runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
