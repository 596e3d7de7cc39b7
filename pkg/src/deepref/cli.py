"""Command-line entry point.

    deepref prepare   --config exp.conf
    deepref train     --config exp.conf --edge 0 [--policy drqn]
    deepref eval      --config exp.conf --edge 0 [--policy belady] [--capacity 10]
    deepref transfer  --config exp.conf --edge 0 [--target 2]
    deepref report    --config exp.conf [--no-figures]

Exit codes: 0 success; 1 usage or config error; 2 missing/invalid data;
3 unexpected runtime failure.
"""

from __future__ import annotations

import argparse
import sys

from .commands import (
    DataError,
    LEARNED_POLICIES,
    cmd_eval,
    cmd_prepare,
    cmd_report,
    cmd_train,
    cmd_transfer,
)
from .config import ALL_POLICIES, ConfigError, load_config
from .net.checkpoint import CheckpointError
from .trace_prep import TracePrepError

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_RUNTIME = 3


class _Parser(argparse.ArgumentParser):
    """argparse that reports usage problems with exit code 1."""

    def error(self, message: str):
        self.print_usage(sys.stderr)
        raise _UsageError(message)


class _UsageError(Exception):
    pass


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="deepref", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, edge=False, capacity=False, policy=False):
        p.add_argument("--config", help="experiment config file (key = value lines)")
        p.add_argument("--seed", type=int, help="override the config's seed and seeds")
        p.add_argument("--out", help="override the config's output directory")
        if edge:
            p.add_argument("--edge", type=int, help="edge id (default: all training edges)")
        if capacity:
            p.add_argument("--capacity", type=int, help="restrict to one edge capacity")
        if policy:
            p.add_argument("--policy", help="restrict to one policy name")

    common(sub.add_parser("prepare", help="ingest, cluster, split the trace data"))
    common(
        sub.add_parser("train", help="train learned policies on an edge's train split"),
        edge=True, capacity=True, policy=True,
    )
    common(
        sub.add_parser("eval", help="evaluate policies on an edge's test split"),
        edge=True, capacity=True, policy=True,
    )
    transfer = sub.add_parser(
        "transfer", help="evaluate source-trained agents on another edge, zero-shot"
    )
    common(transfer, edge=True, capacity=True, policy=True)
    transfer.add_argument(
        "--target", type=int, help="target edge id (default: the config's transfer edge)"
    )
    report = sub.add_parser("report", help="pivot results into tables and figures")
    common(report)
    report.add_argument(
        "--no-figures", action="store_true", help="skip figure rendering"
    )
    return parser


def _apply_overrides(cfg, args):
    if getattr(args, "seed", None) is not None:
        cfg.seed = args.seed
        cfg.seeds = [args.seed]
    if getattr(args, "out", None):
        cfg.out_dir = args.out
    return cfg


def _policy_filter(args) -> list[str] | None:
    policy = getattr(args, "policy", None)
    if policy is None:
        return None
    if policy not in ALL_POLICIES:
        raise ConfigError(
            f"unknown policy {policy!r}; valid: {', '.join(ALL_POLICIES)}"
        )
    return [policy]


def _capacity_filter(args) -> list[int] | None:
    capacity = getattr(args, "capacity", None)
    if capacity is None:
        return None
    if capacity < 1:
        raise ConfigError("capacity must be >= 1")
    return [capacity]


def _edges_to_touch(cfg, args) -> list[int]:
    edge = getattr(args, "edge", None)
    if edge is not None:
        return [edge]
    return [e for e in range(cfg.edges) if e != cfg.transfer_edge]


def _run(args) -> int:
    cfg = _apply_overrides(load_config(args.config), args)
    if args.command == "prepare":
        prepared = cmd_prepare(cfg)
        print(f"prepared data written under {prepared}")
        return EXIT_OK
    if args.command == "train":
        policies = _policy_filter(args)
        if policies is not None:
            bad = [p for p in policies if p not in LEARNED_POLICIES]
            if bad:
                raise ConfigError(f"not trainable: {bad}; trainable: dqn, drqn")
        capacities = _capacity_filter(args)
        if capacities is not None:
            cfg.capacities = capacities
        for edge in _edges_to_touch(cfg, args):
            outputs = cmd_train(cfg, edge, archs=policies)
            for path in outputs:
                print(f"wrote {path}")
        return EXIT_OK
    if args.command == "eval":
        for edge in _edges_to_touch(cfg, args):
            rows = cmd_eval(
                cfg, edge, policies=_policy_filter(args),
                capacities=_capacity_filter(args),
            )
            print(f"eval edge {edge}: {len(rows)} result rows appended")
        return EXIT_OK
    if args.command == "transfer":
        for edge in _edges_to_touch(cfg, args):
            rows = cmd_transfer(
                cfg, edge, target_edge=args.target,
                policies=_policy_filter(args),
                capacities=_capacity_filter(args),
            )
            print(f"transfer from edge {edge}: {len(rows)} result rows appended")
        return EXIT_OK
    if args.command == "report":
        outputs = cmd_report(cfg, figures=not args.no_figures)
        for path in outputs:
            print(f"wrote {path}")
        return EXIT_OK
    raise ConfigError(f"unknown command {args.command!r}")


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except _UsageError as exc:
        print(f"deepref: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        return _run(args)
    except (ConfigError, _UsageError) as exc:
        print(f"deepref: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, TracePrepError, CheckpointError, FileNotFoundError) as exc:
        print(f"deepref: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except KeyboardInterrupt:
        print("deepref: interrupted", file=sys.stderr)
        return EXIT_RUNTIME
    except Exception as exc:  # the CLI boundary: anything else is a runtime failure
        print(f"deepref: runtime failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
