"""Transaction managers and transaction contexts (strict 2PL, NO_WAIT).

A :class:`TransactionContext` belongs to one thread for its whole life. It
holds the row locks it acquired and an undo log of every side effect, so
an abort can put the touched rows and index entries back exactly as they
were before the transaction began.
"""

from __future__ import annotations

import enum
import itertools
import random
import threading
from typing import NamedTuple

from ..errors import InvalidColumn, InvalidRef, InvalidState, LockProtocolViolation
from .storage import LATCH_MASK, OFFSET_BITS, OFFSET_MASK, TABLES, KeyIndex, Table


class TxnStatus(enum.Enum):
    ACTIVE = "active"
    COMMITTED = "committed"
    ABORTED = "aborted"


class Outcome(enum.Enum):
    COMMIT = "commit"
    ABORT = "abort"


class LockMode(enum.IntEnum):
    SHARED = 1
    EXCLUSIVE = 2


class LockResult(enum.Enum):
    ACQUIRED = "acquired"
    CONFLICT = "conflict"


SHARED = LockMode.SHARED
EXCLUSIVE = LockMode.EXCLUSIVE


# -- undo log entries ---------------------------------------------------------

class FieldWrite(NamedTuple):
    ref: int
    column: int
    old: object


class RecordCreate(NamedTuple):
    ref: int


class RecordDelete(NamedTuple):
    ref: int
    old_row: list


class IndexInsert(NamedTuple):
    index: KeyIndex
    key: object


class IndexErase(NamedTuple):
    index: KeyIndex
    key: object
    old_ref: int


class TransactionContext:
    __slots__ = ("id", "status", "locks", "undo", "manager", "events", "snapshots")

    def __init__(self, txn_id: int, manager: TxnManager):
        self.id = txn_id
        self.status = TxnStatus.ACTIVE
        self.locks: dict = {}
        self.undo: list = []
        self.manager = manager
        self.events = [] if manager.trace else None
        self.snapshots = {} if manager.audit else None

    def __repr__(self):
        return f"<txn {self.id} {self.status.value} locks={len(self.locks)} undo={len(self.undo)}>"

    # -- locking ---------------------------------------------------------------

    def lock(self, ref: int, mode: int) -> bool:
        """NO_WAIT acquire; ``False`` means conflict and the caller must abort."""
        held = self.locks.get(ref)
        if held is not None and (held == 2 or mode == 1):
            return True
        mgr = self.manager
        if mgr.fault_rate and mgr.rng.random() < mgr.fault_rate:
            mgr.injected_faults += 1
            return False
        table = TABLES[ref >> OFFSET_BITS]
        slot = ref & OFFSET_MASK
        words = table.locks
        # same lock-word protocol as Table.try_shared/try_exclusive/try_upgrade,
        # inlined because this is the hottest path of every transaction
        with table.latches[slot & LATCH_MASK]:
            st = words[slot]
            if held is not None:
                if st != 1:
                    return False
                words[slot] = -1
            elif mode == 1:
                if st < 0:
                    return False
                words[slot] = st + 1
            else:
                if st:
                    return False
                words[slot] = -1
        self.locks[ref] = mode
        if self.events is not None:
            self.events.append(("U" if held is not None else "S" if mode == 1 else "X", ref))
        return True

    def holds(self, ref: int, mode: int = 1) -> bool:
        held = self.locks.get(ref)
        return held is not None and held >= mode

    # -- data access -------------------------------------------------------------

    def _snapshot(self, ref: int):
        if ref not in self.snapshots:
            self.snapshots[ref] = TABLES[ref >> OFFSET_BITS].row_bytes(ref & OFFSET_MASK)

    def read(self, ref: int, column: int):
        return TABLES[ref >> OFFSET_BITS].rows[ref & OFFSET_MASK][column]

    def write(self, ref: int, column: int, value):
        row = TABLES[ref >> OFFSET_BITS].rows[ref & OFFSET_MASK]
        if self.snapshots is not None:
            self._snapshot(ref)
        self.undo.append(FieldWrite(ref, column, row[column]))
        row[column] = value

    def insert(self, table: Table, values=None) -> int:
        slot = table.allocate(values)
        ref = table.ref_base | slot
        if self.snapshots is not None and ref not in self.snapshots:
            self.snapshots[ref] = None
        self.undo.append(RecordCreate(ref))
        if self.events is not None:
            self.events.append(("C", ref))
        return ref

    def created(self, ref: int):
        """Log a row allocated outside :meth:`insert` (array blocks)."""
        if self.snapshots is not None and ref not in self.snapshots:
            self.snapshots[ref] = None
        self.undo.append(RecordCreate(ref))

    def delete(self, ref: int):
        table = TABLES[ref >> OFFSET_BITS]
        slot = ref & OFFSET_MASK
        row = table.rows[slot]
        if row is None:
            raise InvalidRef(f"record {ref:#x} already deleted")
        if self.snapshots is not None:
            self._snapshot(ref)
        self.undo.append(RecordDelete(ref, row))
        # slot stays quarantined until commit so that abort can restore it
        table.rows[slot] = None

    def index_insert(self, index: KeyIndex, key, ref: int) -> bool:
        if self.snapshots is not None:
            self.snapshots.setdefault((index.handle, key), index.lookup(key))
        if not index.insert(key, ref):
            return False
        self.undo.append(IndexInsert(index, key))
        return True

    def index_erase(self, index: KeyIndex, key):
        if self.snapshots is not None:
            self.snapshots.setdefault((index.handle, key), index.lookup(key))
        old = index.erase(key)
        if old is not None:
            self.undo.append(IndexErase(index, key, old))
        return old


class TxnManager:
    """Begins and ends transactions for one namespace; keeps counters.

    Test hooks, all off by default: ``trace`` records every lock event per
    transaction, ``fault_rate`` fails that fraction of real lock
    acquisitions, ``audit`` checks after each abort that touched rows and
    index entries are byte-identical to their pre-transaction images.
    """

    def __init__(self, namespace: str):
        self.namespace = namespace
        self._ids = itertools.count(1)
        self._stats = threading.Lock()
        self.commits = 0
        self.aborts = 0
        self.trace = False
        self.traces: list = []
        self.fault_rate = 0.0
        self.injected_faults = 0
        self.rng = random.Random()
        self.audit = False
        self.audits: list = []
        self.debug = False

    def __repr__(self):
        return f"TxnManager({self.namespace!r}, commits={self.commits}, aborts={self.aborts})"

    def begin(self) -> TransactionContext:
        return TransactionContext(next(self._ids), self)

    def _release(self, txn: TransactionContext):
        for ref, mode in txn.locks.items():
            table = TABLES[ref >> OFFSET_BITS]
            slot = ref & OFFSET_MASK
            with table.latches[slot & LATCH_MASK]:
                if mode == 2:
                    table.locks[slot] = 0
                else:
                    table.locks[slot] -= 1
        txn.locks = {}

    def commit(self, txn: TransactionContext) -> TxnStatus:
        if txn.status is not TxnStatus.ACTIVE:
            raise InvalidState(f"txn {txn.id} is {txn.status.value}")
        freed = [e.ref for e in txn.undo if type(e) is RecordDelete]
        self._release(txn)
        for ref in freed:
            TABLES[ref >> OFFSET_BITS].release(ref & OFFSET_MASK)
        txn.undo = []
        txn.status = TxnStatus.COMMITTED
        if txn.events is not None:
            txn.events.append(("R", None))
            self.traces.append((txn.id, "commit", txn.events))
        with self._stats:
            self.commits += 1
        return txn.status

    def abort(self, txn: TransactionContext) -> TxnStatus:
        if txn.status is not TxnStatus.ACTIVE:
            raise InvalidState(f"txn {txn.id} is {txn.status.value}")
        created = []
        for e in reversed(txn.undo):
            kind = type(e)
            if kind is FieldWrite:
                TABLES[e.ref >> OFFSET_BITS].rows[e.ref & OFFSET_MASK][e.column] = e.old
            elif kind is RecordCreate:
                TABLES[e.ref >> OFFSET_BITS].rows[e.ref & OFFSET_MASK] = None
                created.append(e.ref)
            elif kind is RecordDelete:
                TABLES[e.ref >> OFFSET_BITS].rows[e.ref & OFFSET_MASK] = e.old_row
            elif kind is IndexInsert:
                e.index.erase(e.key)
            elif kind is IndexErase:
                e.index.insert(e.key, e.old_ref)
        if txn.snapshots:
            # still under our locks, before freed slots can be reused
            self.audits.append(self._verify(txn))
        self._release(txn)
        for ref in created:
            TABLES[ref >> OFFSET_BITS].release(ref & OFFSET_MASK)
        txn.undo = []
        txn.status = TxnStatus.ABORTED
        if txn.events is not None:
            txn.events.append(("R", None))
            self.traces.append((txn.id, "abort", txn.events))
        with self._stats:
            self.aborts += 1
        return txn.status

    def _verify(self, txn) -> tuple[int, bool]:
        from .storage import REGISTRY
        ok = True
        for key, before in txn.snapshots.items():
            if isinstance(key, tuple):
                handle, k = key
                now = REGISTRY.indexes[handle].lookup(k)
            else:
                now = TABLES[key >> OFFSET_BITS].row_bytes(key & OFFSET_MASK)
            ok = ok and now == before
        return len(txn.snapshots), ok

    def end(self, txn: TransactionContext, outcome: Outcome) -> TxnStatus:
        return self.commit(txn) if outcome is Outcome.COMMIT else self.abort(txn)

    def reset_stats(self):
        with self._stats:
            self.commits = self.aborts = 0
        self.injected_faults = 0
        self.traces = []
        self.audits = []


_managers: dict = {}
_managers_latch = threading.Lock()


def get_or_create_txn_manager(namespace: str = "default") -> TxnManager:
    mgr = _managers.get(namespace)
    if mgr is None:
        with _managers_latch:
            mgr = _managers.get(namespace)
            if mgr is None:
                mgr = _managers[namespace] = TxnManager(namespace)
    return mgr


# -- free-function API ---------------------------------------------------------

def begin_txn(mgr: TxnManager) -> TransactionContext:
    return mgr.begin()


def end_txn(mgr: TxnManager, txn: TransactionContext, outcome: Outcome) -> TxnStatus:
    return mgr.end(txn, outcome)


def _check_active(txn):
    if txn.status is not TxnStatus.ACTIVE:
        raise InvalidState(f"txn {txn.id} is {txn.status.value}")


def _table_slot(ref: int):
    table_id, slot = ref >> OFFSET_BITS, ref & OFFSET_MASK
    if not 0 < table_id < len(TABLES) or TABLES[table_id] is None:
        raise InvalidRef(f"unknown table in reference {ref:#x}")
    table = TABLES[table_id]
    table.check_slot(slot)
    return table, slot


def try_lock(txn: TransactionContext, ref: int, mode: LockMode) -> LockResult:
    _check_active(txn)
    _table_slot(ref)
    return LockResult.ACQUIRED if txn.lock(ref, int(mode)) else LockResult.CONFLICT


def _column(table: Table, column) -> int:
    if isinstance(column, str):
        if column not in table.column_index:
            raise InvalidColumn(f"{table.name} has no column {column!r}")
        return table.column_index[column]
    if not 0 <= column < len(table.columns):
        raise InvalidColumn(f"{table.name} has no column {column}")
    return column


def read_field(ref: int, column, txn: TransactionContext):
    _check_active(txn)
    table, slot = _table_slot(ref)
    col = _column(table, column)
    if txn.manager.debug and not txn.holds(ref, SHARED):
        raise LockProtocolViolation(f"read of {ref:#x} without a lock")
    return table.rows[slot][col]


def write_field(ref: int, column, value, txn: TransactionContext):
    _check_active(txn)
    table, _ = _table_slot(ref)
    col = _column(table, column)
    if txn.manager.debug and not txn.holds(ref, EXCLUSIVE):
        raise LockProtocolViolation(f"write of {ref:#x} without an exclusive lock")
    txn.write(ref, col, value)


def insert_record(table: Table, values, txn: TransactionContext) -> int:
    _check_active(txn)
    return txn.insert(table, values)


def delete_record(ref: int, txn: TransactionContext):
    _check_active(txn)
    _table_slot(ref)
    if txn.manager.debug and not txn.holds(ref, EXCLUSIVE):
        raise LockProtocolViolation(f"delete of {ref:#x} without an exclusive lock")
    txn.delete(ref)


def array_element_ref(base: int, index: int, length: int) -> int:
    from ..errors import IndexOutOfBounds
    if not 0 <= index < length:
        raise IndexOutOfBounds(f"index {index} outside [0, {length})")
    return base + index


class IndexResult(enum.Enum):
    INSERTED = "inserted"
    KEY_EXISTS = "key_exists"
    ERASED = "erased"
    ABSENT = "absent"


def index_insert(idx: KeyIndex, key, ref: int, txn: TransactionContext) -> IndexResult:
    _check_active(txn)
    return IndexResult.INSERTED if txn.index_insert(idx, key, ref) else IndexResult.KEY_EXISTS


def index_lookup(idx: KeyIndex, key):
    """The reference stored under ``key``, or ``None`` when absent."""
    return idx.lookup(key)


def index_erase(idx: KeyIndex, key, txn: TransactionContext) -> IndexResult:
    _check_active(txn)
    return IndexResult.ERASED if txn.index_erase(idx, key) is not None else IndexResult.ABSENT
