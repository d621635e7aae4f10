import random
import threading
import time

import pytest

from dcds.errors import (
    IndexOutOfBounds, InvalidColumn, InvalidRef, InvalidState,
    LockProtocolViolation, SchemaConflict,
)
from dcds.ir import I64, record_ptr
from dcds.runtime import (
    EXCLUSIVE, REGISTRY, SHARED, Column, IndexResult, LockResult, Outcome,
    TxnStatus, array_element_ref, begin_txn, decode_ref, delete_record,
    encode_ref, end_txn, get_or_create_txn_manager, index_erase, index_insert,
    index_lookup, insert_record, read_field, try_lock, write_field,
)

COLS = (Column("a", I64), Column("b", I64), Column("p", record_ptr("T")))


@pytest.fixture
def table(ns):
    return REGISTRY.register(ns, "T", COLS)


@pytest.fixture
def mgr(ns):
    return get_or_create_txn_manager(ns)


def _committed_row(mgr, table, values):
    txn = begin_txn(mgr)
    ref = insert_record(table, values, txn)
    end_txn(mgr, txn, Outcome.COMMIT)
    return ref


# -- record references -----------------------------------------------------------


def test_ref_layout():
    assert encode_ref(3, 7) == 0x0003_0000_0000_0007
    assert decode_ref(0x0003_0000_0000_0007) == (3, 7)
    assert decode_ref(encode_ref(65535, 2**48 - 1)) == (65535, 2**48 - 1)
    assert encode_ref(0, 0) == 0


@pytest.mark.parametrize("tid,off", [(-1, 0), (65536, 0), (0, -1), (0, 2**48)])
def test_ref_out_of_range(tid, off):
    with pytest.raises(InvalidRef):
        encode_ref(tid, off)


# -- managers and registry --------------------------------------------------------


def test_managers_are_per_namespace(ns):
    assert get_or_create_txn_manager(ns) is get_or_create_txn_manager(ns)
    assert get_or_create_txn_manager(ns + "x") is not get_or_create_txn_manager(ns + "y")


def test_concurrent_manager_creation(ns):
    seen = []
    barrier = threading.Barrier(8)

    def grab():
        barrier.wait()
        seen.append(get_or_create_txn_manager(ns + "race"))

    threads = [threading.Thread(target=grab) for _ in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert len({id(m) for m in seen}) == 1


def test_registration_idempotent_and_schema_checked(ns, table):
    assert REGISTRY.register(ns, "T", COLS) is table
    assert table.name == f"{ns}.T"
    with pytest.raises(SchemaConflict):
        REGISTRY.register(ns, "T", COLS[:2])


def test_record_size_is_sum_of_widths(table):
    assert table.record_size == 24
    ref = table.ref_base | table.allocate([1, 2, 0])
    assert len(table.row_bytes(ref & (2**48 - 1))) == 24


# -- transactions --------------------------------------------------------------------


def test_empty_commit(mgr):
    txn = begin_txn(mgr)
    assert end_txn(mgr, txn, Outcome.COMMIT) is TxnStatus.COMMITTED
    assert not txn.locks and not txn.undo
    with pytest.raises(InvalidState):
        end_txn(mgr, txn, Outcome.ABORT)


def test_abort_restores_field(mgr, table):
    ref = _committed_row(mgr, table, [5, 0, 0])
    before = table.row_bytes(ref & (2**48 - 1))
    txn = begin_txn(mgr)
    assert try_lock(txn, ref, EXCLUSIVE) is LockResult.ACQUIRED
    write_field(ref, "a", 9, txn)
    assert read_field(ref, "a", txn) == 9
    end_txn(mgr, txn, Outcome.ABORT)
    assert table.row_bytes(ref & (2**48 - 1)) == before
    assert not txn.locks and table.locks[ref & (2**48 - 1)] == 0


def test_aborted_create_frees_slot_for_reuse(mgr, table):
    txn = begin_txn(mgr)
    ref = insert_record(table, None, txn)
    end_txn(mgr, txn, Outcome.ABORT)
    txn = begin_txn(mgr)
    assert insert_record(table, None, txn) == ref
    end_txn(mgr, txn, Outcome.COMMIT)


def test_delete_then_abort_restores_bytes(mgr, table):
    ref = _committed_row(mgr, table, [11, 22, 0])
    slot = ref & (2**48 - 1)
    before = table.row_bytes(slot)
    txn = begin_txn(mgr)
    try_lock(txn, ref, EXCLUSIVE)
    delete_record(ref, txn)
    assert table.rows[slot] is None
    end_txn(mgr, txn, Outcome.ABORT)
    assert table.row_bytes(slot) == before


def test_delete_commit_frees_slot(mgr, table):
    ref = _committed_row(mgr, table, [1, 2, 0])
    live = table.live_rows()
    txn = begin_txn(mgr)
    try_lock(txn, ref, EXCLUSIVE)
    delete_record(ref, txn)
    end_txn(mgr, txn, Outcome.COMMIT)
    assert table.live_rows() == live - 1
    assert (ref & (2**48 - 1)) in table.free


def test_mixed_abort_is_byte_identical(mgr, table, ns):
    """Random writes, creates, deletes and index ops all roll back."""
    rng = random.Random(7)
    refs = [_committed_row(mgr, table, [i, -i, 0]) for i in range(20)]
    idx = REGISTRY.new_index(I64)
    txn = begin_txn(mgr)
    for k in range(5):
        index_insert(idx, k, refs[k], txn)
    end_txn(mgr, txn, Outcome.COMMIT)
    image = {r: table.row_bytes(r & (2**48 - 1)) for r in refs}
    entries = dict(idx.entries)
    for _ in range(50):
        txn = begin_txn(mgr)
        live = list(refs)
        for _ in range(rng.randint(1, 12)):
            op = rng.randrange(5)
            r = rng.choice(live)
            if op == 0:
                try_lock(txn, r, EXCLUSIVE)
                write_field(r, rng.randrange(2), rng.randrange(-99, 99), txn)
            elif op == 1:
                insert_record(table, [1, 1, r], txn)
            elif op == 2 and len(live) > 1:
                try_lock(txn, r, EXCLUSIVE)
                delete_record(r, txn)
                live.remove(r)
            elif op == 3:
                index_insert(idx, rng.randrange(10), r, txn)
            else:
                index_erase(idx, rng.randrange(10), txn)
        end_txn(mgr, txn, Outcome.ABORT)
        assert {r: table.row_bytes(r & (2**48 - 1)) for r in refs} == image
        assert idx.entries == entries
        assert table.live_rows() == len(refs)
        assert all(w == 0 for w in table.locks[:table._top])


def test_column_checks(mgr, table):
    ref = _committed_row(mgr, table, [1, 2, 0])
    txn = begin_txn(mgr)
    with pytest.raises(InvalidColumn):
        read_field(ref, 3, txn)
    with pytest.raises(InvalidColumn):
        read_field(ref, "zz", txn)
    end_txn(mgr, txn, Outcome.COMMIT)


def test_debug_mode_checks_lock_protocol(mgr, table):
    ref = _committed_row(mgr, table, [1, 2, 0])
    mgr.debug = True
    try:
        txn = begin_txn(mgr)
        with pytest.raises(LockProtocolViolation):
            read_field(ref, 0, txn)
        try_lock(txn, ref, SHARED)
        assert read_field(ref, 0, txn) == 1
        with pytest.raises(LockProtocolViolation):
            write_field(ref, 0, 3, txn)
        end_txn(mgr, txn, Outcome.ABORT)
    finally:
        mgr.debug = False


# -- locking -------------------------------------------------------------------------


def test_no_wait_conflicts(mgr, table):
    ref = _committed_row(mgr, table, [0, 0, 0])
    t1, t2 = begin_txn(mgr), begin_txn(mgr)
    assert try_lock(t1, ref, EXCLUSIVE) is LockResult.ACQUIRED
    start = time.perf_counter()
    assert try_lock(t2, ref, SHARED) is LockResult.CONFLICT
    assert time.perf_counter() - start < 0.01
    assert try_lock(t1, ref, SHARED) is LockResult.ACQUIRED  # already stronger
    end_txn(mgr, t1, Outcome.COMMIT)
    assert try_lock(t2, ref, SHARED) is LockResult.ACQUIRED
    end_txn(mgr, t2, Outcome.COMMIT)


def test_upgrade_rules(mgr, table):
    ref = _committed_row(mgr, table, [0, 0, 0])
    t1, t2 = begin_txn(mgr), begin_txn(mgr)
    try_lock(t1, ref, SHARED)
    assert try_lock(t1, ref, EXCLUSIVE) is LockResult.ACQUIRED  # sole sharer
    end_txn(mgr, t1, Outcome.COMMIT)
    t1 = begin_txn(mgr)
    try_lock(t1, ref, SHARED)
    try_lock(t2, ref, SHARED)
    assert try_lock(t1, ref, EXCLUSIVE) is LockResult.CONFLICT
    end_txn(mgr, t1, Outcome.ABORT)
    end_txn(mgr, t2, Outcome.COMMIT)
    assert table.locks[ref & (2**48 - 1)] == 0


def test_lock_unknown_ref(mgr, table):
    txn = begin_txn(mgr)
    with pytest.raises(InvalidRef):
        try_lock(txn, table.ref_base | 12345, SHARED)
    with pytest.raises(InvalidRef):
        try_lock(txn, encode_ref(65535, 0), SHARED)
    end_txn(mgr, txn, Outcome.ABORT)


def test_crossed_locks_cannot_deadlock(mgr, table):
    a = _committed_row(mgr, table, [0, 0, 0])
    b = _committed_row(mgr, table, [0, 0, 0])
    step = threading.Barrier(2)
    outcomes = []

    def run(first, second):
        txn = begin_txn(mgr)
        assert try_lock(txn, first, EXCLUSIVE) is LockResult.ACQUIRED
        step.wait()  # both hold their first lock before requesting the second
        got = try_lock(txn, second, EXCLUSIVE)
        step.wait()
        end_txn(mgr, txn, Outcome.COMMIT if got is LockResult.ACQUIRED else Outcome.ABORT)
        outcomes.append(got)

    threads = [threading.Thread(target=run, args=(a, b)), threading.Thread(target=run, args=(b, a))]
    start = time.perf_counter()
    for t in threads:
        t.start()
    for t in threads:
        t.join(1.0)
    assert not any(t.is_alive() for t in threads)
    assert time.perf_counter() - start < 1.0
    assert outcomes.count(LockResult.CONFLICT) == 2


def test_try_lock_cost_bounded_under_contention(mgr, table):
    """16 threads hammer 4 rows; no single try_lock burns 1 ms of CPU.

    Per-thread CPU time is measured so that GIL preemption, which is not
    blocking inside try_lock, does not count against it.
    """
    refs = [_committed_row(mgr, table, [0, 0, 0]) for _ in range(4)]
    worst, conflicts = [], []

    def hammer(seed):
        rng = random.Random(seed)
        slowest, failed = 0.0, 0
        for _ in range(2000):
            txn = begin_txn(mgr)
            for _ in range(2):
                t0 = time.thread_time()
                got = try_lock(txn, rng.choice(refs), rng.choice((SHARED, EXCLUSIVE)))
                slowest = max(slowest, time.thread_time() - t0)
                failed += got is LockResult.CONFLICT
            end_txn(mgr, txn, Outcome.ABORT)
        worst.append(slowest)
        conflicts.append(failed)

    threads = [threading.Thread(target=hammer, args=(i,)) for i in range(16)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert max(worst) < 1e-3
    assert sum(conflicts) > 0


# -- arrays and indexes --------------------------------------------------------------


def test_array_element_ref():
    base = encode_ref(2, 10)
    assert decode_ref(array_element_ref(base, 3, 8)) == (2, 13)
    assert array_element_ref(base, 0, 8) == base
    with pytest.raises(IndexOutOfBounds):
        array_element_ref(base, 8, 8)
    with pytest.raises(IndexOutOfBounds):
        array_element_ref(base, -1, 8)


def test_index_operations_and_rollback(mgr, table):
    idx = REGISTRY.new_index(I64)
    r1 = _committed_row(mgr, table, [1, 0, 0])
    r2 = _committed_row(mgr, table, [2, 0, 0])
    txn = begin_txn(mgr)
    assert index_insert(idx, 5, r1, txn) is IndexResult.INSERTED
    assert index_insert(idx, 5, r2, txn) is IndexResult.KEY_EXISTS
    assert index_lookup(idx, 5) == r1
    end_txn(mgr, txn, Outcome.COMMIT)
    txn = begin_txn(mgr)
    index_insert(idx, 6, r2, txn)
    assert index_erase(idx, 5, txn) is IndexResult.ERASED
    assert index_erase(idx, 5, txn) is IndexResult.ABSENT
    end_txn(mgr, txn, Outcome.ABORT)
    assert index_lookup(idx, 5) == r1
    assert index_lookup(idx, 6) is None
