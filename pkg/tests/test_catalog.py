import random

import pytest

from catalog_traces import TRACES, model_run, run
from dcds import CATALOG, Out, SerialInstance, build_coarse_lru, build_lru, build_ycsb, get_entry
from dcds.errors import IndexOutOfBounds, SpecTypeError
from dcds.executor import CoarseInstance, Instance
from dcds.runtime.storage import OFFSET_BITS, TABLES


@pytest.mark.parametrize("name", ["dll", "fifo", "lru", "ycsb"])
def test_serial_spec_matches_model(name):
    trace = TRACES[name]
    spec = get_entry(name).serial_spec(**trace.params)
    rng = random.Random(f"serial-{name}")
    for _ in range(50):
        ops = list(trace.ops(rng, 100))
        assert run(SerialInstance(spec), ops, trace.observe) == model_run(name, ops)


def test_lru_capacity_two_by_hand(ns):
    lru = get_entry("lru").deploy(ns, capacity=2)
    k = Out()
    assert lru.insert(1, 10) and lru.insert(2, 20)
    assert lru.find(1, k) and k.value == 1   # 1 becomes most recent
    assert lru.insert(3, 30)                 # evicts 2
    assert not lru.find(2, k)
    assert lru.find(1, k) and lru.find(3, k)
    assert not lru.insert(3, 99)             # already present
    assert lru.program.layouts["KNode"].table.live_rows() == 2


def test_coarse_lru_matches_transactional(ns):
    trace = TRACES["lru"]
    rng = random.Random(3)
    make = build_coarse_lru(trace.params["capacity"])
    for _ in range(10):
        ops = list(trace.ops(rng, 200))
        coarse = make(ns + "c")
        fine = get_entry("lru").deploy(ns, **trace.params)
        assert isinstance(coarse, CoarseInstance) and isinstance(fine, Instance)
        assert run(coarse, ops, trace.observe) == run(fine, ops, trace.observe) == model_run("lru", ops)
        coarse.destroy()
        fine.destroy()


def test_coarse_entries_deploy_serial_specs(ns):
    for name in ("lru-coarse", "ycsb-coarse"):
        inst = get_entry(name).deploy(ns + name)
        assert isinstance(inst, CoarseInstance)
        assert not inst.spec.cc_injected


def test_ycsb_out_of_range(ns):
    y = get_entry("ycsb").deploy(ns, num_columns=2, num_records=3)
    for idx in (-1, 3, 2**40):
        with pytest.raises(IndexOutOfBounds):
            y.update_record(idx, 1, 2)
        with pytest.raises(IndexOutOfBounds):
            y.read_record(idx, Out(), Out())
    assert y.aborts == 6 and y.commits == 0
    a, b = Out(), Out()
    assert y.update_record(2, 5, 6) and y.read_record(2, a, b)
    assert (a.value, b.value) == (5, 6)


def test_ycsb_update_takes_one_exclusive_row_lock(ns):
    y = get_entry("ycsb").deploy(ns, num_columns=10, num_records=4)
    mgr = y.manager
    mgr.trace = True
    y.update_record(1, *range(10))
    y.read_record(1, *[Out() for _ in range(10)])
    (_, o1, ev1), (_, o2, ev2) = mgr.traces
    assert o1 == o2 == "commit"
    item = y.program.layouts["YCSB_ITEM"].table
    assert [e[0] for e in ev1] == ["X", "R"] and [e[0] for e in ev2] == ["S", "R"]
    assert ev1[0][1] == ev2[0][1]
    assert TABLES[ev1[0][1] >> OFFSET_BITS] is item


def test_ycsb_parameter_validation():
    for cols in (0, 11):
        with pytest.raises(SpecTypeError):
            build_ycsb(num_columns=cols)
    with pytest.raises(SpecTypeError):
        build_ycsb(num_records=0)
    assert len(build_ycsb(1, 1).composed["YCSB_ITEM"].attributes) == 1


def test_lru_capacity_validation():
    with pytest.raises(SpecTypeError):
        build_lru(0)


@pytest.mark.parametrize("name", [n for n, e in CATALOG.items() if e.shape])
def test_declared_shapes_hold(name):
    specs = get_entry(name).serial_spec().all_specs()
    for sname, shape in get_entry(name).shape.items():
        s = specs[sname]
        assert {a.name for a in s.attributes} == shape["attributes"]
        assert set(s.functions) == shape["functions"]


def test_unknown_structure():
    with pytest.raises(KeyError):
        get_entry("skiplist")
