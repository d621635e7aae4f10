"""Slotted in-memory tables, the process-wide table registry and key indexes.

A record reference is a 64-bit integer: the top 16 bits are the table id,
the low 48 bits the slot index inside the table. Table id 0 is reserved so
that the integer 0 is the null reference.
"""

from __future__ import annotations

import struct
import threading
from typing import NamedTuple

from ..errors import CapacityExceeded, InvalidRef, SchemaConflict
from ..ir import ValueType

TABLE_BITS = 16
OFFSET_BITS = 48
OFFSET_MASK = (1 << OFFSET_BITS) - 1
MAX_TABLE_ID = (1 << TABLE_BITS) - 1
NULL_REF = 0
CHUNK_ROWS = 4096
_LATCH_STRIPES = 64
LATCH_MASK = _LATCH_STRIPES - 1


def encode_ref(table_id: int, offset: int) -> int:
    if not 0 <= table_id <= MAX_TABLE_ID:
        raise InvalidRef(f"table id {table_id} out of range")
    if not 0 <= offset <= OFFSET_MASK:
        raise InvalidRef(f"offset {offset} out of range")
    return (table_id << OFFSET_BITS) | offset


def decode_ref(ref: int) -> tuple[int, int]:
    if not 0 <= ref < 1 << 64:
        raise InvalidRef(f"{ref!r} is not a 64-bit record reference")
    return ref >> OFFSET_BITS, ref & OFFSET_MASK


_FMT = {"i8": "b", "i16": "h", "i32": "i", "i64": "q", "f64": "d", "bool": "?", "ptr": "Q"}


class Column(NamedTuple):
    name: str
    type: ValueType

    @property
    def width(self) -> int:
        return self.type.width


class Table:
    """Fixed-size records in growable slot storage.

    Per slot the table keeps the row (a list of column values, ``None`` for
    a free or deleted slot), a unique row id and a reader-writer try-lock
    word: ``0`` free, ``n > 0`` held shared by ``n`` transactions, ``-1``
    held exclusive. Lock words are guarded by striped latches.
    """

    def __init__(self, table_id: int, name: str, columns: tuple, defaults: tuple | None = None,
                 chunk_rows: int = CHUNK_ROWS):
        self.table_id = table_id
        self.name = name
        self.columns = tuple(columns)
        self.column_index = {c.name: i for i, c in enumerate(self.columns)}
        self.defaults = tuple(defaults) if defaults is not None else tuple(
            0 if c.type.is_ptr else c.type.default() for c in self.columns)
        self.record_size = sum(c.width for c in self.columns)
        self.ref_base = table_id << OFFSET_BITS
        self.chunk_rows = chunk_rows
        self.rows: list = []
        self.row_ids: list = []
        self.locks: list = []
        self.free: list = []
        self.latches = [threading.Lock() for _ in range(_LATCH_STRIPES)]
        self._alloc = threading.Lock()
        self._top = 0
        self._next_row_id = 1
        self._struct = struct.Struct("<" + "".join(
            f"{c.type.length}s" if c.type.tag == "str" else _FMT[c.type.tag] for c in self.columns))

    def __repr__(self):
        return f"Table({self.table_id}, {self.name!r}, rows={self.live_rows()})"

    # -- allocation ----------------------------------------------------------

    def _grow(self, n: int):
        while self._top + n > len(self.rows):
            if len(self.rows) + self.chunk_rows > OFFSET_MASK + 1:
                raise CapacityExceeded(f"table {self.name} is full")
            self.rows.extend([None] * self.chunk_rows)
            self.row_ids.extend([0] * self.chunk_rows)
            self.locks.extend([0] * self.chunk_rows)

    def allocate(self, values=None) -> int:
        """Claim one slot (reusing freed ones first) and initialize it."""
        row = list(self.defaults) if values is None else list(values)
        with self._alloc:
            if self.free:
                slot = self.free.pop()
            else:
                self._grow(1)
                slot = self._top
                self._top += 1
            self.row_ids[slot] = self._next_row_id
            self._next_row_id += 1
            self.rows[slot] = row
        return slot

    def allocate_block(self, n: int, values=None) -> int:
        """Claim ``n`` contiguous fresh slots; returns the first."""
        with self._alloc:
            self._grow(n)
            first = self._top
            self._top += n
            for slot in range(first, first + n):
                self.rows[slot] = list(self.defaults) if values is None else list(values)
                self.row_ids[slot] = self._next_row_id
                self._next_row_id += 1
        return first

    def release(self, slot: int):
        """Return a slot to the free list. Its lock word must be clear."""
        with self._alloc:
            self.rows[slot] = None
            self.row_ids[slot] = 0
            self.free.append(slot)

    def live_rows(self) -> int:
        return self._top - len(self.free)

    def check_slot(self, slot: int):
        if not 0 <= slot < self._top or self.rows[slot] is None:
            raise InvalidRef(f"no record at slot {slot} of {self.name}")

    # -- row locks -----------------------------------------------------------

    def try_shared(self, slot: int) -> bool:
        with self.latches[slot & (_LATCH_STRIPES - 1)]:
            st = self.locks[slot]
            if st < 0:
                return False
            self.locks[slot] = st + 1
            return True

    def try_exclusive(self, slot: int) -> bool:
        with self.latches[slot & (_LATCH_STRIPES - 1)]:
            if self.locks[slot]:
                return False
            self.locks[slot] = -1
            return True

    def try_upgrade(self, slot: int) -> bool:
        """Shared to exclusive, only when the caller is the sole sharer."""
        with self.latches[slot & (_LATCH_STRIPES - 1)]:
            if self.locks[slot] != 1:
                return False
            self.locks[slot] = -1
            return True

    def unlock(self, slot: int, exclusive: bool):
        with self.latches[slot & (_LATCH_STRIPES - 1)]:
            if exclusive:
                self.locks[slot] = 0
            else:
                self.locks[slot] -= 1

    # -- byte images ---------------------------------------------------------

    def row_bytes(self, slot: int) -> bytes | None:
        """Packed record image (``None`` for a free slot)."""
        row = self.rows[slot] if slot < len(self.rows) else None
        if row is None:
            return None
        vals = []
        for c, v in zip(self.columns, row):
            if c.type.tag == "str":
                v = v.ljust(c.type.length, b"\0")
            elif c.type.tag == "ptr" and v is None:
                v = 0
            vals.append(v)
        return self._struct.pack(*vals)


class KeyIndex:
    """Hash index from key to record reference, safe for concurrent point ops.

    Stands in for a concurrent cuckoo map; transactional isolation of the
    record behind a key comes from that record's row lock.
    """

    def __init__(self, handle: int, key_type: ValueType):
        self.handle = handle
        self.key_type = key_type
        self.entries: dict = {}
        self.latch = threading.Lock()

    def __len__(self):
        return len(self.entries)

    def insert(self, key, ref: int) -> bool:
        with self.latch:
            if key in self.entries:
                return False
            self.entries[key] = ref
            return True

    def lookup(self, key):
        return self.entries.get(key)

    def erase(self, key):
        with self.latch:
            return self.entries.pop(key, None)


class TableRegistry:
    """Process-wide catalog of tables (by id and by namespaced name) and key
    indexes (by handle)."""

    def __init__(self):
        self.tables: list = [None]  # id 0 reserved for the null reference
        self.by_name: dict = {}
        self.indexes: list = [None]
        self._latch = threading.Lock()

    def register(self, namespace: str, name: str, columns, defaults=None) -> Table:
        """Get or create ``namespace.name``; re-registration must match."""
        full = f"{namespace}.{name}"
        columns = tuple(columns)
        with self._latch:
            t = self.by_name.get(full)
            if t is not None:
                if t.columns != columns:
                    raise SchemaConflict(f"table {full} exists with a different schema")
                return t
            if len(self.tables) > MAX_TABLE_ID:
                raise CapacityExceeded("no table ids left")
            t = Table(len(self.tables), full, columns, defaults)
            self.tables.append(t)
            self.by_name[full] = t
            return t

    def lookup(self, namespace: str, name: str) -> Table | None:
        return self.by_name.get(f"{namespace}.{name}")

    def table(self, table_id: int) -> Table:
        if not 0 < table_id < len(self.tables) or self.tables[table_id] is None:
            raise InvalidRef(f"unknown table id {table_id}")
        return self.tables[table_id]

    def table_of(self, ref: int) -> Table:
        return self.table(ref >> OFFSET_BITS)

    def new_index(self, key_type: ValueType) -> KeyIndex:
        with self._latch:
            idx = KeyIndex(len(self.indexes), key_type)
            self.indexes.append(idx)
            return idx

    def drop_index(self, handle: int):
        self.indexes[handle] = None

    def drop_namespace(self, namespace: str):
        """Forget every table of a namespace (ids are never reused)."""
        with self._latch:
            prefix = namespace + "."
            for full in [n for n in self.by_name if n.startswith(prefix)]:
                t = self.by_name.pop(full)
                self.tables[t.table_id] = None


REGISTRY = TableRegistry()
TABLES = REGISTRY.tables


def registry() -> TableRegistry:
    return REGISTRY
