"""Closed-loop multi-threaded benchmarks: FIFO queue, LRU container, YCSB.

Every worker thread replays an operation sequence generated up front from
its own seeded stream, so a fixed seed gives identical sequences across
runs. Timing covers the replay only. After each run the structure is
checked: FIFO conserves the pushed values and per-producer order, the LRU
stays within capacity with its list and map in agreement, YCSB records are
never torn. A failed check raises :class:`SanityError`.
"""

from __future__ import annotations

import csv
import gc
import io
import logging
import os
import threading
import time
import uuid
from collections import Counter
from dataclasses import asdict, dataclass, field
from functools import lru_cache

import numpy as np

from .catalog import CATALOG, get_entry
from .executor import forget_namespace
from .runtime.storage import OFFSET_MASK, REGISTRY
from .values import Out

log = logging.getLogger(__name__)

CSV_HEADER = ("structure", "threads", "distribution", "theta", "read_ratio", "ops",
              "commits", "aborts", "seconds", "throughput")


class SanityError(AssertionError):
    """A benchmark run left the structure in an impossible state."""


class ConfigError(ValueError):
    """An invalid benchmark configuration."""


# ============================================================
# CONFIGURATION AND RESULTS
# ============================================================


@dataclass
class BenchConfig:
    structure: str = "fifo"
    threads: int = 1
    ops_per_thread: int = 100_000
    distribution: str = "uniform"
    theta: float = 0.4
    key_domain: int = 1 << 20
    capacity: int = 1 << 10
    read_ratio: float = 0.5
    num_columns: int = 10
    records_per_worker: int = 100_000
    seed: int = 42
    pin: bool = True

    def validate(self) -> BenchConfig:
        if self.structure not in CATALOG:
            raise ConfigError(f"unknown structure {self.structure!r}")
        if self.threads < 1:
            raise ConfigError("threads must be at least 1")
        if self.ops_per_thread < 0:
            raise ConfigError("ops per thread cannot be negative")
        if self.distribution not in ("uniform", "zipf"):
            raise ConfigError("distribution is uniform or zipf")
        if not 0 < self.theta < 1:
            raise ConfigError("theta must lie strictly between 0 and 1")
        if not 0 <= self.read_ratio <= 1:
            raise ConfigError("read ratio must lie in [0, 1]")
        if not 1 <= self.num_columns <= 10:
            raise ConfigError("YCSB records have 1 to 10 columns")
        if self.key_domain < 1 or self.capacity < 1 or self.records_per_worker < 1:
            raise ConfigError("key domain, capacity and record count must be positive")
        return self


@dataclass
class BenchResult:
    structure: str
    threads: int
    distribution: str
    theta: float
    read_ratio: float
    ops: int
    commits: int
    aborts: int
    seconds: float
    throughput: float
    extra: dict = field(default_factory=dict)

    def row(self) -> list:
        d = asdict(self)
        return [d[k] for k in CSV_HEADER]


def to_csv(results, header: bool = True) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header:
        w.writerow(CSV_HEADER)
    for r in results:
        w.writerow(r.row())
    return buf.getvalue()


# ============================================================
# KEY DISTRIBUTIONS
# ============================================================


class Zipfian:
    """Zipf(theta) over ranks ``0..n-1``: rank ``i`` has mass
    ``(i+1)**-theta / zeta(n, theta)``.

    Draws invert the exact cumulative distribution built once from the
    precomputed normalization, so every rank gets precisely its mass.
    (The closed-form YCSB approximation overweights ranks 3 to 10 by 2-8%.)
    """

    def __init__(self, n: int, theta: float):
        if n < 1 or not 0 < theta < 1:
            raise ConfigError("Zipfian needs n >= 1 and 0 < theta < 1")
        self.n = n
        self.theta = theta
        weights = np.arange(1, n + 1, dtype=np.float64) ** -theta
        self.zeta = float(weights.sum())
        self.cdf = np.cumsum(weights) / self.zeta
        self.cdf[-1] = 1.0

    def pmf(self, rank):
        """Analytic mass of a 0-based rank (scalar or array)."""
        return (np.asarray(rank, dtype=np.float64) + 1) ** -self.theta / self.zeta

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        u = rng.random(size)
        return np.minimum(np.searchsorted(self.cdf, u, side="right"), self.n - 1)


@lru_cache(maxsize=8)
def zipfian(n: int, theta: float) -> Zipfian:
    return Zipfian(n, theta)


def draw_keys(cfg: BenchConfig, rng: np.random.Generator, n: int, size: int) -> np.ndarray:
    if cfg.distribution == "zipf":
        return zipfian(n, cfg.theta).sample(rng, size)
    return rng.integers(0, n, size)


def _streams(cfg: BenchConfig) -> list:
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.threads)
    return [np.random.default_rng(s) for s in seqs]


# ============================================================
# THREAD PLACEMENT
# ============================================================


def core_order() -> list:
    """CPUs ordered first physical cores, then their hyper-thread siblings."""
    try:
        cpus = sorted(os.sched_getaffinity(0))
    except (AttributeError, OSError):
        return []
    first, rest = [], []
    for c in cpus:
        path = f"/sys/devices/system/cpu/cpu{c}/topology/thread_siblings_list"
        try:
            with open(path) as fh:
                sib = fh.read().strip().replace("-", ",").split(",")
            primary = int(sib[0])
        except (OSError, ValueError):
            primary = c
        (first if primary == c else rest).append(c)
    return first + rest


def _pin(index: int, order: list):
    if not order:
        return
    try:
        os.sched_setaffinity(0, {order[index % len(order)]})
    except (AttributeError, OSError) as e:
        log.warning("thread pinning unavailable: %s", e)


# ============================================================
# HARNESS
# ============================================================


def _run_threads(cfg: BenchConfig, work) -> float:
    """Start ``cfg.threads`` workers, release them together, return seconds."""
    order = core_order() if cfg.pin else []
    if cfg.pin and not order:
        log.warning("cannot read CPU affinity; threads run unpinned")
    start = threading.Barrier(cfg.threads + 1)
    errors = []

    def body(i):
        _pin(i, order)
        start.wait()
        try:
            work(i)
        except BaseException as e:  # reported after join
            errors.append(e)

    threads = [threading.Thread(target=body, args=(i,), daemon=True) for i in range(cfg.threads)]
    for t in threads:
        t.start()
    gc_was = gc.isenabled()
    gc.disable()  # row lists are GC-tracked; full collections would dominate timings
    try:
        start.wait()
        t0 = time.perf_counter()
        for t in threads:
            t.join()
        seconds = time.perf_counter() - t0
    finally:
        if gc_was:
            gc.enable()
    if errors:
        raise errors[0]
    return seconds


def _result(cfg: BenchConfig, inst, seconds: float, commits0: int, aborts0: int, **extra) -> BenchResult:
    ops = cfg.threads * cfg.ops_per_thread
    commits = inst.commits - commits0
    if commits != ops:
        raise SanityError(f"{commits} commits for {ops} operations")
    return BenchResult(
        structure=cfg.structure, threads=cfg.threads, distribution=cfg.distribution,
        theta=cfg.theta if cfg.distribution == "zipf" else 0.0, read_ratio=cfg.read_ratio,
        ops=ops, commits=commits, aborts=inst.aborts - aborts0, seconds=seconds,
        throughput=ops / seconds if seconds > 0 else float("inf"), extra=extra,
    )


def _namespace(cfg: BenchConfig) -> str:
    return f"bench-{cfg.structure}-{uuid.uuid4().hex[:8]}"


def _cleanup(inst):
    inst.destroy()
    forget_namespace(inst.namespace)


# -- FIFO ---------------------------------------------------------------------


def run_fifo_bench(cfg: BenchConfig, keep: bool = False) -> BenchResult:
    """Each thread pushes or pops with equal probability."""
    cfg.validate()
    if cfg.structure not in ("fifo", "dll"):
        raise ConfigError("the FIFO benchmark drives fifo or dll")
    inst = get_entry(cfg.structure).deploy(_namespace(cfg), bench=True)
    n = cfg.ops_per_thread
    plans = [rng.random(n) < 0.5 for rng in _streams(cfg)]
    popped = [[] for _ in range(cfg.threads)]

    def work(i):
        invoke = inst.invoke
        out = Out()
        got = popped[i]
        base = i * n
        for j, push in enumerate(plans[i].tolist()):
            if push:
                invoke("push", base + j)
            elif invoke("pop", out):
                got.append(out.value)

    c0, a0 = inst.commits, inst.aborts
    seconds = _run_threads(cfg, work)
    result = _result(cfg, inst, seconds, c0, a0)
    _check_fifo(inst, plans, popped, n)
    if not keep:
        _cleanup(inst)
    return result


def _check_fifo(inst, plans, popped, n):
    pushed = Counter()
    for i, plan in enumerate(plans):
        pushed.update(int(i * n + j) for j in np.flatnonzero(plan))
    rest = []
    out = Out()
    while inst.invoke("pop", out):
        rest.append(out.value)
    seen = Counter(v for got in popped for v in got) + Counter(rest)
    if seen != pushed:
        raise SanityError("popped and remaining values differ from the pushed values")
    for got in popped + [rest]:
        last = {}
        for v in got:
            producer = v // n
            if v <= last.get(producer, -1):
                raise SanityError(f"producer {producer}: {v} popped after a later value")
            last[producer] = v


# -- LRU -----------------------------------------------------------------------


def lru_state(inst) -> tuple[int, int, int]:
    """(list length, map entries, size attribute) read from storage."""
    layouts = inst.program.layouts
    lru, klist, knode = layouts["LRU"], layouts["KList"], layouts["KNode"]
    row = lru.table.rows[inst.root & OFFSET_MASK]
    entries = len(REGISTRY.indexes[row[lru.columns["map"]]])
    size = row[lru.columns["size"]]
    lst = klist.table.rows[row[lru.columns["list"]] & OFFSET_MASK]
    ref, length = lst[klist.columns["head"]], 0
    nxt = knode.columns["next"]
    while ref:
        length += 1
        ref = knode.table.rows[ref & OFFSET_MASK][nxt]
        if length > entries + 1:
            break
    return length, entries, size


def run_lru_bench(cfg: BenchConfig, keep: bool = False) -> BenchResult:
    """Each thread inserts keys drawn from the configured distribution."""
    cfg.validate()
    if cfg.structure not in ("lru", "lru-coarse"):
        raise ConfigError("the LRU benchmark drives lru or lru-coarse")
    inst = get_entry(cfg.structure).deploy(_namespace(cfg), capacity=cfg.capacity)
    keys = [draw_keys(cfg, rng, cfg.key_domain, cfg.ops_per_thread).tolist() for rng in _streams(cfg)]

    def work(i):
        invoke = inst.invoke
        for k in keys[i]:
            invoke("insert", k, k)

    c0, a0 = inst.commits, inst.aborts
    seconds = _run_threads(cfg, work)
    result = _result(cfg, inst, seconds, c0, a0)
    length, entries, size = lru_state(inst)
    if not (length == entries == size <= cfg.capacity):
        raise SanityError(f"LRU list={length} map={entries} size={size} capacity={cfg.capacity}")
    if not keep:
        _cleanup(inst)
    return result


# -- YCSB ---------------------------------------------------------------------


def run_ycsb_bench(cfg: BenchConfig, keep: bool = False) -> BenchResult:
    """Per op: one record, read or update every column per the read ratio."""
    cfg.validate()
    if cfg.structure not in ("ycsb", "ycsb-coarse"):
        raise ConfigError("the YCSB benchmark drives ycsb or ycsb-coarse")
    records = cfg.records_per_worker * cfg.threads
    inst = get_entry(cfg.structure).deploy(_namespace(cfg), num_columns=cfg.num_columns,
                                           num_records=records)
    k = cfg.num_columns
    plans = []
    for rng in _streams(cfg):
        idx = draw_keys(cfg, rng, records, cfg.ops_per_thread).tolist()
        reads = (rng.random(cfg.ops_per_thread) < cfg.read_ratio).tolist()
        plans.append((idx, reads))
    torn = []

    def work(i):
        invoke = inst.invoke
        outs = [Out() for _ in range(k)]
        tag = (i + 1) << 32
        idx, reads = plans[i]
        for j in range(len(idx)):
            if reads[j]:
                invoke("read_record", idx[j], *outs)
                first = outs[0].value
                for o in outs:
                    if o.value != first:
                        torn.append(idx[j])
                        break
            else:
                v = tag | j
                invoke("update_record", idx[j], *([v] * k))

    c0, a0 = inst.commits, inst.aborts
    seconds = _run_threads(cfg, work)
    result = _result(cfg, inst, seconds, c0, a0)
    if torn:
        raise SanityError(f"{len(torn)} reads saw a torn record")
    _check_ycsb(inst, records)
    if not keep:
        _cleanup(inst)
    return result


def _check_ycsb(inst, records: int):
    lay = inst.program.layouts["YCSB"]
    item = inst.program.layouts["YCSB_ITEM"]
    base = lay.table.rows[inst.root & OFFSET_MASK][lay.columns["items"]]
    rows = item.table.rows
    for r in range(records):
        row = rows[(base + r) & OFFSET_MASK]
        if any(v != row[0] for v in row):
            raise SanityError(f"record {r} holds values from different writers")


RUNNERS = {
    "fifo": run_fifo_bench, "dll": run_fifo_bench,
    "lru": run_lru_bench, "lru-coarse": run_lru_bench,
    "ycsb": run_ycsb_bench, "ycsb-coarse": run_ycsb_bench,
}


def run(cfg: BenchConfig) -> BenchResult:
    cfg.validate()
    return RUNNERS[cfg.structure](cfg)


def median_throughput(cfg: BenchConfig, runs: int = 5) -> tuple[float, list]:
    """Median throughput over ``runs`` repetitions, plus all results."""
    results = [run(cfg) for _ in range(runs)]
    return float(np.median([r.throughput for r in results])), results


__all__ = [
    "BenchConfig", "BenchResult", "CSV_HEADER", "ConfigError", "SanityError",
    "Zipfian", "core_order", "draw_keys", "lru_state", "median_throughput",
    "run", "run_fifo_bench", "run_lru_bench", "run_ycsb_bench", "to_csv", "zipfian",
]
