"""Workload generation, recorded stress runs, benchmarks, and the client demo."""

from __future__ import annotations

import random
import statistics
import threading
import time
from dataclasses import dataclass, field

from .coarse import CoarseMap
from .hoh import HandOverHandMap
from .linz import History, Recorder
from .monitor import GhostMonitor
from .oracle import Delete, Found, Insert, Lookup, Operation
from .runtime import Jitter, RunAborted

TARGETS = ("hoh", "cg")


class RunFailure(RuntimeError):
    """A recorded run did not complete: worker crash, violation, or timeout."""

    def __init__(self, message: str, cause: BaseException | None = None):
        super().__init__(message)
        self.cause = cause


class DemoTimeout(RuntimeError):
    """The demo consumer never observed the handoff value."""


class DemoProtocolError(RuntimeError):
    """The demo observed a value outside the allowed state progression."""


@dataclass(frozen=True)
class WorkloadSpec:
    seed: int
    threads: int
    ops_per_thread: int
    key_lo: int = 0
    key_hi: int = 1023
    mix: tuple[int, int, int] = (40, 40, 20)  # insert / lookup / delete percentages
    value_len: int = 8

    def validate(self) -> "WorkloadSpec":
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.ops_per_thread < 1:
            raise ValueError("ops per thread must be >= 1")
        if self.key_lo > self.key_hi:
            raise ValueError("empty key space")
        if len(self.mix) != 3 or any(p < 0 for p in self.mix) or sum(self.mix) != 100:
            raise ValueError(f"mix must be three percentages summing to 100, got {self.mix}")
        if not 0 <= self.value_len <= 64:
            raise ValueError("value_len must be in [0, 64]")
        return self

    def echo(self) -> dict:
        return {
            "seed": self.seed,
            "threads": self.threads,
            "ops_per_thread": self.ops_per_thread,
            "keys": [self.key_lo, self.key_hi],
            "mix": list(self.mix),
            "value_len": self.value_len,
        }


def generate(spec: WorkloadSpec) -> list[list[Operation]]:
    """Per-thread operation lists; a pure function of the spec."""
    spec.validate()
    plans: list[list[Operation]] = []
    ins, look, _ = spec.mix
    for t in range(spec.threads):
        rng = random.Random(spec.seed * 0x9E3779B1 + t)
        ops: list[Operation] = []
        for _ in range(spec.ops_per_thread):
            k = rng.randint(spec.key_lo, spec.key_hi)
            roll = rng.randrange(100)
            if roll < ins:
                ops.append(Insert(k, rng.randbytes(spec.value_len)))
            elif roll < ins + look:
                ops.append(Lookup(k))
            else:
                ops.append(Delete(k))
        plans.append(ops)
    return plans


def make_map(
    target: str,
    *,
    monitor: GhostMonitor | None = None,
    jitter: Jitter | None = None,
    abort_event: threading.Event | None = None,
    inject_bug: str | None = None,
):
    if target == "hoh":
        return HandOverHandMap(
            monitor, jitter=jitter, abort_event=abort_event, inject_bug=inject_bug
        )
    if target == "cg":
        if inject_bug is not None:
            raise ValueError("bug injection only applies to the hoh target")
        return CoarseMap(monitor, jitter=jitter, abort_event=abort_event)
    raise ValueError(f"unknown target {target!r} (expected one of {TARGETS})")


def _call(handle, op: Operation):
    if isinstance(op, Insert):
        return handle.insert(op.key, op.value)
    if isinstance(op, Lookup):
        return handle.lookup(op.key)
    return handle.delete(op.key)


def run_recorded(
    target: str,
    spec: WorkloadSpec,
    *,
    monitor: GhostMonitor | None = None,
    jitter: Jitter | None = None,
    inject_bug: str | None = None,
    timeout_sec: float = 60.0,
) -> tuple[History, object]:
    """Run the workload on a fresh map, recording every call in a history.

    Returns the complete history and the (still live) map handle so the
    caller can run quiescent checks and destroy it. Worker failures and
    timeouts raise RunFailure.
    """
    plans = generate(spec)
    abort = threading.Event()
    handle = make_map(
        target, monitor=monitor, jitter=jitter, abort_event=abort, inject_bug=inject_bug
    )
    recorder = Recorder()
    start = threading.Barrier(spec.threads)
    failures: list[tuple[int, BaseException]] = []
    fail_lock = threading.Lock()

    def worker(tid: int, ops: list[Operation]) -> None:
        try:
            start.wait()
            for op in ops:
                recorder.record_invoke(tid, op)
                result = _call(handle, op)
                recorder.record_return(tid, result)
        except BaseException as exc:  # noqa: BLE001 - surfaced via RunFailure
            abort.set()
            with fail_lock:
                failures.append((tid, exc))

    threads = [
        threading.Thread(target=worker, args=(t, plans[t]), daemon=True)
        for t in range(spec.threads)
    ]
    for th in threads:
        th.start()
    deadline = time.monotonic() + timeout_sec
    for th in threads:
        th.join(max(0.0, deadline - time.monotonic()))
    if any(th.is_alive() for th in threads):
        abort.set()
        for th in threads:
            th.join(5.0)
        raise RunFailure(f"run timed out after {timeout_sec}s")
    if failures:
        primary = next((f for f in failures if not isinstance(f[1], RunAborted)), failures[0])
        raise RunFailure(f"worker {primary[0]} failed: {primary[1]}", cause=primary[1])
    return recorder.history(), handle


@dataclass
class BenchReport:
    target: str
    threads: int
    total_ops: int
    elapsed_sec: float
    throughput_ops_per_sec: float
    p50_ns: int
    p99_ns: int
    spec: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "target": self.target,
            "threads": self.threads,
            "total_ops": self.total_ops,
            "elapsed_sec": self.elapsed_sec,
            "throughput_ops_per_sec": self.throughput_ops_per_sec,
            "p50_ns": self.p50_ns,
            "p99_ns": self.p99_ns,
            "spec": self.spec,
        }

    CSV_HEADER = "target,threads,ops,mix,throughput,p50_ns,p99_ns,seed"

    def to_csv_row(self) -> str:
        mix = ":".join(str(p) for p in self.spec.get("mix", []))
        return (
            f"{self.target},{self.threads},{self.total_ops},{mix},"
            f"{self.throughput_ops_per_sec:.1f},{self.p50_ns},{self.p99_ns},{self.spec.get('seed')}"
        )


def bench(
    target: str,
    spec: WorkloadSpec,
    *,
    duration_sec: float | None = None,
    partition_keys: bool = False,
) -> BenchReport:
    """Timed run with no history recording or monitor on the hot path.

    partition_keys gives each thread a disjoint contiguous slice of the
    key space (the low-contention regime for the fine-grained map).
    """
    spec.validate()
    if partition_keys:
        span = (spec.key_hi - spec.key_lo + 1) // spec.threads or 1
        plans = []
        for t in range(spec.threads):
            lo = spec.key_lo + t * span
            sub = WorkloadSpec(
                seed=spec.seed + t,
                threads=1,
                ops_per_thread=spec.ops_per_thread,
                key_lo=lo,
                key_hi=max(lo, lo + span - 1),
                mix=spec.mix,
                value_len=spec.value_len,
            )
            plans.append(generate(sub)[0])
    else:
        plans = generate(spec)

    handle = make_map(target)
    start = threading.Barrier(spec.threads + 1)
    lat_per_thread: list[list[int]] = [[] for _ in range(spec.threads)]
    done_per_thread = [0] * spec.threads

    def worker(tid: int, ops: list[Operation]) -> None:
        lats = lat_per_thread[tid]
        start.wait()
        deadline = time.monotonic() + duration_sec if duration_sec else None
        for i, op in enumerate(ops):
            t0 = time.perf_counter_ns()
            _call(handle, op)
            lats.append(time.perf_counter_ns() - t0)
            if deadline is not None and (i & 63) == 63 and time.monotonic() > deadline:
                break
        done_per_thread[tid] = len(lats)

    threads = [
        threading.Thread(target=worker, args=(t, plans[t]), daemon=True)
        for t in range(spec.threads)
    ]
    for th in threads:
        th.start()
    start.wait()
    t0 = time.monotonic()
    for th in threads:
        th.join()
    elapsed = time.monotonic() - t0
    lats = [x for per in lat_per_thread for x in per]
    total = len(lats)
    lats.sort()
    p50 = lats[len(lats) // 2] if lats else 0
    p99 = lats[min(len(lats) - 1, (len(lats) * 99) // 100)] if lats else 0
    return BenchReport(
        target=target,
        threads=spec.threads,
        total_ops=total,
        elapsed_sec=elapsed,
        throughput_ops_per_sec=total / elapsed if elapsed > 0 else 0.0,
        p50_ns=p50,
        p99_ns=p99,
        spec=spec.echo(),
    )


# -- producer/consumer client demo ----------------------------------------------
#
# The producer writes 1->1, 2->2, 1->3, 2->4 in program order; the consumer
# polls key 2 until it decodes 4, then reads key 1, which by then must be 3.
# Key 2 acts as the message flag: across the whole run its value goes
# absent -> 2 -> 4 and never anything else.

DEMO_EXPECTED = 3


def encode_i64(n: int) -> bytes:
    return n.to_bytes(8, "little", signed=True)


def decode_i64(b: bytes) -> int:
    return int.from_bytes(b, "little", signed=True)


def client_demo(
    *,
    target: str = "hoh",
    seed: int = 0,
    jitter: Jitter | None = None,
    timeout_sec: float = 30.0,
) -> int:
    monitor = GhostMonitor()
    abort = threading.Event()
    handle = make_map(target, monitor=monitor, jitter=jitter, abort_event=abort)
    failures: list[BaseException] = []
    out: dict[str, int] = {}

    def producer() -> None:
        try:
            for k, v in ((1, 1), (2, 2), (1, 3), (2, 4)):
                handle.insert(k, encode_i64(v))
        except BaseException as exc:  # noqa: BLE001
            abort.set()
            failures.append(exc)

    def consumer() -> None:
        try:
            deadline = time.monotonic() + timeout_sec
            stage = 0  # 0: nothing seen, 1: saw 2, 2: saw 4
            while True:
                r = handle.lookup(2)
                if isinstance(r, Found):
                    v = decode_i64(r.value)
                    if v not in (2, 4):
                        raise DemoProtocolError(f"key 2 held unexpected value {v}")
                    new_stage = 1 if v == 2 else 2
                    if new_stage < stage:
                        raise DemoProtocolError("key 2 regressed from 4 to 2")
                    stage = new_stage
                    if stage == 2:
                        break
                if time.monotonic() > deadline:
                    raise DemoTimeout(f"key 2 never reached 4 within {timeout_sec}s")
            r1 = handle.lookup(1)
            if not isinstance(r1, Found):
                raise DemoProtocolError("key 1 absent after handoff")
            out["value"] = decode_i64(r1.value)
        except BaseException as exc:  # noqa: BLE001
            abort.set()
            failures.append(exc)

    threads = [threading.Thread(target=producer, daemon=True), threading.Thread(target=consumer, daemon=True)]
    for th in threads:
        th.start()
    for th in threads:
        th.join(timeout_sec + 10.0)
    if any(th.is_alive() for th in threads):
        abort.set()
        raise DemoTimeout("demo threads failed to join")
    for exc in failures:
        if isinstance(exc, (DemoTimeout, DemoProtocolError)):
            raise exc
    if failures:
        raise RunFailure(f"demo worker failed: {failures[0]}", cause=failures[0])

    _verify_demo_progression(monitor)
    report = monitor.quiescent_check(handle)
    if not report.ok:
        raise RunFailure(f"demo left the monitor dirty: {report.violations}")
    handle.destroy()
    return out["value"]


def _verify_demo_progression(monitor: GhostMonitor) -> None:
    """Replay the witness order: key 2's value must step absent -> 2 -> 4 only."""
    m: dict[int, bytes] = {}
    stage = 0
    stages = {None: 0, 2: 1, 4: 2}
    for rec in monitor.linearization_log():
        if isinstance(rec.op, Insert):
            m[rec.op.key] = rec.op.value
        elif isinstance(rec.op, Delete):
            m.pop(rec.op.key, None)
        v = m.get(2)
        decoded = decode_i64(v) if v is not None else None
        if decoded not in stages:
            raise DemoProtocolError(f"key 2 passed through unexpected value {decoded}")
        if stages[decoded] < stage:
            raise DemoProtocolError("key 2 state machine moved backwards")
        stage = stages[decoded]
    if stage != 2:
        raise DemoProtocolError("run ended before key 2 reached its final state")
