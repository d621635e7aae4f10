import random
import threading
from collections import Counter

import pytest

from catalog_traces import TRACES, model_run, run
from dcds import (
    CoarseInstance, Instance, Out, build_doubly_linked_list, build_fifo_mycds,
    destroy, inject_cc, instantiate, invoke, lowered_source, optimize,
)
from dcds.catalog import get_entry
from dcds.errors import ArityOrTypeMismatch, InvalidState, SpecTypeError, UnknownMethod


def _fifo(ns):
    return instantiate(inject_cc(optimize(build_fifo_mycds())[0]), ns)


class _Script:
    """Stands in for the manager's RNG: yields scripted draws, then 1.0."""

    def __init__(self, draws):
        self.draws = list(draws)

    def random(self):
        return self.draws.pop(0) if self.draws else 1.0


def test_push_pop_order(ns):
    q = _fifo(ns)
    for v in (3, 1, 4):
        assert invoke(q, "push", (v,)) is None
    out = Out()
    got = []
    while q.invoke("pop", out):
        got.append(out.value)
    assert got == [3, 1, 4]


def test_pop_on_empty_returns_false_and_leaves_out_alone(ns):
    q = _fifo(ns)
    out = Out(7)
    assert q.invoke("pop", out) is False
    assert out.value == 7


def test_single_injected_conflict_is_retried(ns):
    q = _fifo(ns)
    q.push(10)
    q.manager.fault_rate = 0.5
    q.manager.rng = _Script([0.0])  # fail the first real lock acquisition only
    out = Out()
    assert q.pop(out) is True and out.value == 10
    assert q.manager.injected_faults == 1
    assert (q.commits, q.aborts) == (2, 1)
    q.manager.fault_rate = 0.0
    assert q.pop(out) is False


@pytest.mark.parametrize("name", ["dll", "fifo", "lru", "ycsb"])
def test_concurrent_instance_matches_model(name, ns):
    trace = TRACES[name]
    entry = get_entry(name)
    rng = random.Random(name)
    for i in range(20):
        ops = list(trace.ops(rng, 80))
        inst = entry.deploy(ns, **trace.params)
        # every few runs, inject conflicts so bodies abort half way through
        inst.manager.fault_rate = 0.3 if i % 2 else 0.0
        assert run(inst, ops, trace.observe) == model_run(name, ops)
        inst.manager.fault_rate = 0.0
        inst.destroy()


def test_destroy_frees_every_record(ns):
    q = _fifo(ns)
    for v in range(100):
        q.push(v)
    node = q.program.layouts["Node"].table
    assert node.live_rows() == 100
    # wrapper root, embedded list, 100 nodes
    assert destroy(q) == 102
    assert node.live_rows() == 0
    assert all(t.table.live_rows() == 0 for t in q.program.layouts.values())


def test_invoke_after_destroy(ns):
    q = _fifo(ns)
    q.destroy()
    with pytest.raises(InvalidState):
        q.push(1)
    with pytest.raises(InvalidState):
        q.destroy()


def test_unknown_method_and_bad_arguments(ns):
    q = _fifo(ns)
    with pytest.raises(UnknownMethod):
        q.invoke("push_front", 1)
    with pytest.raises(ArityOrTypeMismatch):
        q.invoke("push")
    with pytest.raises(ArityOrTypeMismatch):
        q.invoke("push", "1")
    with pytest.raises(ArityOrTypeMismatch):
        q.invoke("push", 2**63)
    with pytest.raises(ArityOrTypeMismatch):
        q.invoke("pop", 5)  # out-parameter needs an Out cell
    assert (q.commits, q.aborts) == (0, 0)


def test_instance_needs_injected_spec(ns):
    spec = build_doubly_linked_list()
    with pytest.raises(SpecTypeError):
        Instance(spec, ns)
    with pytest.raises(SpecTypeError):
        CoarseInstance(inject_cc(spec), ns)


def test_instances_share_tables(ns):
    cspec = inject_cc(optimize(build_fifo_mycds())[0])
    a, b = instantiate(cspec, ns), instantiate(cspec, ns)
    assert a.program is b.program and a.root != b.root
    a.push(1)
    b.push(2)
    b.push(3)
    assert a.program.layouts["Node"].table.live_rows() == 3
    out = Out()
    assert a.pop(out) and out.value == 1
    assert not a.pop(out)
    assert b.pop(out) and out.value == 2


def test_lru_layout(ns):
    inst = get_entry("lru").deploy(ns, capacity=4)
    assert set(inst.program.layouts) == {"LRU", "KList", "KNode"}
    assert inst.program.layouts["KNode"].table.live_rows() == 0
    # the map starts empty and is reported missing on lookup
    out = Out()
    assert inst.find(3, out) is False
    assert inst.insert(3, 9) is True
    assert inst.find(3, out) is True and out.value == 3


def test_generated_code_is_inspectable():
    src = lowered_source(inject_cc(optimize(build_fifo_mycds())[0]), "inspect")
    assert "def " in src and "txn.lock" in src
    compile(src, "<check>", "exec")


def test_threads_preserve_multiset(ns):
    q = _fifo(ns)
    popped = [[] for _ in range(4)]

    def worker(i):
        rng = random.Random(i)
        out = Out()
        for k in range(1000):
            if rng.random() < 0.5:
                q.push(i * 1000 + k)
            elif q.pop(out):
                popped[i].append(out.value)

    ts = [threading.Thread(target=worker, args=(i,)) for i in range(4)]
    for t in ts:
        t.start()
    for t in ts:
        t.join()
    # replay each worker's RNG stream to recover what it pushed
    expected = Counter()
    for i in range(4):
        rng = random.Random(i)
        for k in range(1000):
            if rng.random() < 0.5:
                expected[i * 1000 + k] += 1
    out = Out()
    rest = []
    while q.pop(out):
        rest.append(out.value)
    got = Counter(v for p in popped for v in p) + Counter(rest)
    assert got == expected
    # per-producer FIFO order survives among values each consumer saw
    for p in popped + [rest]:
        for i in range(4):
            mine = [v for v in p if v // 1000 == i]
            assert mine == sorted(mine)
