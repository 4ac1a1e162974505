"""Command-line front end: run, check, bench, fuzz, demo.

Exit codes: 0 success, 1 usage or operational error, 2 non-linearizable
history / failed check, 3 monitor violation, 4 demo timeout. All
randomness flows from --seed; output files are written atomically.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
import tempfile
from pathlib import Path

from .harness import (
    DEMO_EXPECTED,
    DemoProtocolError,
    DemoTimeout,
    RunFailure,
    WorkloadSpec,
    bench,
    client_demo,
    run_recorded,
)
from .linz import History, HistoryError, check
from .monitor import GhostMonitor, MonitorViolation
from .runtime import Jitter

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_NOT_LINEARIZABLE = 2
EXIT_MONITOR_VIOLATION = 3
EXIT_DEMO_TIMEOUT = 4

log = logging.getLogger("lockcouple")


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on usage errors by default; the contract here is 1
    def error(self, message: str):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _parse_keys(text: str) -> tuple[int, int]:
    lo, _, hi = text.partition(":")
    return int(lo), int(hi)


def _parse_mix(text: str) -> tuple[int, int, int]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ValueError(f"mix must be I:L:D, got {text!r}")
    i, l, d = (int(p) for p in parts)
    return i, l, d


def atomic_write(path: Path, data: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w") as f:
            f.write(data)
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def _spec_from_args(args: argparse.Namespace) -> WorkloadSpec:
    lo, hi = _parse_keys(args.keys)
    return WorkloadSpec(
        seed=args.seed,
        threads=args.threads,
        ops_per_thread=args.ops,
        key_lo=lo,
        key_hi=hi,
        mix=_parse_mix(args.mix),
        value_len=args.value_len,
    ).validate()


def _add_workload_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--target", choices=("hoh", "cg"), default="hoh")
    p.add_argument("--threads", type=int, default=4)
    p.add_argument("--ops", type=int, default=8, help="operations per thread")
    p.add_argument("--seed", type=int, default=1)
    p.add_argument("--keys", default="0:7", help="key space as LO:HI")
    p.add_argument("--mix", default="40:40:20", help="insert:lookup:delete percentages")
    p.add_argument("--value-len", type=int, default=8)
    p.add_argument("--monitor", action="store_true", help="attach the ghost monitor")
    p.add_argument("--jitter", action="store_true", help="seeded sleeps around lock acquisitions")
    p.add_argument("--inject-bug", choices=("release-before-acquire",), default=None)
    p.add_argument("--timeout-sec", type=float, default=60.0)


def _run_once(args: argparse.Namespace, spec: WorkloadSpec, out_path: Path | None) -> int:
    """One recorded run + check (+ quiescent check); shared by run and fuzz."""
    monitor = GhostMonitor() if args.monitor else None
    jitter = Jitter(spec.seed) if args.jitter else None
    try:
        history, handle = run_recorded(
            args.target,
            spec,
            monitor=monitor,
            jitter=jitter,
            inject_bug=args.inject_bug,
            timeout_sec=args.timeout_sec,
        )
    except RunFailure as f:
        payload = {"error": str(f)}
        if isinstance(f.cause, MonitorViolation):
            payload["diagnostic"] = f.cause.to_json()
            print(json.dumps(payload))
            return EXIT_MONITOR_VIOLATION
        print(json.dumps(payload))
        return EXIT_USAGE
    if out_path is not None:
        atomic_write(out_path, history.to_jsonl())
    verdict = check(history)
    if out_path is not None:
        atomic_write(out_path.with_suffix(out_path.suffix + ".verdict.json"), json.dumps(verdict.to_json(), indent=2) + "\n")
    print(json.dumps(verdict.to_json()))
    if monitor is not None:
        report = monitor.quiescent_check(handle)
        if not report.ok:
            print(json.dumps(report.to_json()))
            return EXIT_MONITOR_VIOLATION
        try:
            handle.destroy()
        except MonitorViolation as v:
            print(json.dumps(v.to_json()))
            return EXIT_MONITOR_VIOLATION
    return EXIT_OK if verdict.linearizable else EXIT_NOT_LINEARIZABLE


def cmd_run(args: argparse.Namespace) -> int:
    try:
        spec = _spec_from_args(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    out = Path(args.out) if args.out else Path("history.jsonl")
    return _run_once(args, spec, out)


def cmd_fuzz(args: argparse.Namespace) -> int:
    try:
        base = _spec_from_args(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    out_dir = Path(args.out) if args.out else Path("fuzz_out")
    for i in range(args.iterations):
        seed = base.seed + i
        spec = WorkloadSpec(
            seed=seed,
            threads=base.threads,
            ops_per_thread=base.ops_per_thread,
            key_lo=base.key_lo,
            key_hi=base.key_hi,
            mix=base.mix,
            value_len=base.value_len,
        )
        code = _run_once(args, spec, out_dir / f"iter{i:05d}.jsonl")
        if code != EXIT_OK:
            atomic_write(out_dir / "failing_seed.txt", f"{seed}\n")
            print(f"fuzz: failure at iteration {i} (seed {seed}), exit {code}", file=sys.stderr)
            return code
    print(f"fuzz: {args.iterations} iterations clean")
    return EXIT_OK


def cmd_check(args: argparse.Namespace) -> int:
    try:
        text = Path(args.history).read_text()
        history = History.from_jsonl(text)
        if not history.complete:
            raise HistoryError("history has pending operations")
    except (OSError, HistoryError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    verdict = check(history)
    print(json.dumps(verdict.to_json()))
    return EXIT_OK if verdict.linearizable else EXIT_NOT_LINEARIZABLE


def cmd_bench(args: argparse.Namespace) -> int:
    try:
        spec = _spec_from_args(args)
    except ValueError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_USAGE
    report = bench(
        args.target, spec, duration_sec=args.duration_sec, partition_keys=args.partition_keys
    )
    if args.format == "csv":
        text = report.CSV_HEADER + "\n" + report.to_csv_row() + "\n"
    else:
        text = json.dumps(report.to_json(), indent=2) + "\n"
    if args.out:
        atomic_write(Path(args.out), text)
    print(text, end="")
    return EXIT_OK


def cmd_demo(args: argparse.Namespace) -> int:
    jitter = Jitter(args.seed) if args.jitter else None
    try:
        value = client_demo(seed=args.seed, jitter=jitter, timeout_sec=args.timeout_sec)
    except DemoTimeout as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_DEMO_TIMEOUT
    except (DemoProtocolError, RunFailure) as e:
        print(f"error: {e}", file=sys.stderr)
        if isinstance(getattr(e, "cause", None), MonitorViolation):
            return EXIT_MONITOR_VIOLATION
        return EXIT_MONITOR_VIOLATION
    print(value)
    return EXIT_OK if value == DEMO_EXPECTED else EXIT_NOT_LINEARIZABLE


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lockcouple", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="recorded concurrent run + linearizability check")
    _add_workload_flags(p_run)
    p_run.add_argument("--out", default=None, help="history output path (JSONL)")
    p_run.set_defaults(func=cmd_run)

    p_fuzz = sub.add_parser("fuzz", help="repeated runs with derived seeds; stop at first failure")
    _add_workload_flags(p_fuzz)
    p_fuzz.add_argument("--iterations", type=int, default=100)
    p_fuzz.add_argument("--out", default=None, help="output directory for histories")
    p_fuzz.set_defaults(func=cmd_fuzz)

    p_check = sub.add_parser("check", help="re-verdict a stored history")
    p_check.add_argument("history", help="history file (JSONL)")
    p_check.set_defaults(func=cmd_check)

    p_bench = sub.add_parser("bench", help="timed run without recording")
    _add_workload_flags(p_bench)
    p_bench.add_argument("--duration-sec", type=float, default=None)
    p_bench.add_argument("--partition-keys", action="store_true")
    p_bench.add_argument("--out", default=None)
    p_bench.add_argument("--format", choices=("json", "csv"), default="json")
    p_bench.set_defaults(func=cmd_bench)

    p_demo = sub.add_parser("demo", help="producer/consumer handoff; prints the retrieved value")
    p_demo.add_argument("--seed", type=int, default=0)
    p_demo.add_argument("--jitter", action="store_true")
    p_demo.add_argument("--timeout-sec", type=float, default=30.0)
    p_demo.set_defaults(func=cmd_demo)

    return parser


def main(argv: list[str] | None = None) -> int:
    level = os.environ.get("LOCKCOUPLE_LOG", "warning").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING))
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MonitorViolation as v:
        print(json.dumps(v.to_json()), file=sys.stderr)
        return EXIT_MONITOR_VIOLATION


if __name__ == "__main__":
    sys.exit(main())
