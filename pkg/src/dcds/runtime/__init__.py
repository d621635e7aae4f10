"""Transactional in-memory storage and transaction management."""

from .storage import (
    CHUNK_ROWS, NULL_REF, OFFSET_BITS, OFFSET_MASK, REGISTRY, TABLES, Column,
    KeyIndex, Table, TableRegistry, decode_ref, encode_ref, registry,
)
from .txn import (
    EXCLUSIVE, SHARED, FieldWrite, IndexErase, IndexInsert, IndexResult,
    LockMode, LockResult, Outcome, RecordCreate, RecordDelete,
    TransactionContext, TxnManager, TxnStatus, array_element_ref, begin_txn,
    delete_record, end_txn, get_or_create_txn_manager, index_erase,
    index_insert, index_lookup, insert_record, read_field, try_lock,
    write_field,
)

__all__ = [
    "CHUNK_ROWS", "NULL_REF", "OFFSET_BITS", "OFFSET_MASK", "REGISTRY", "TABLES",
    "Column", "KeyIndex", "Table", "TableRegistry", "decode_ref", "encode_ref",
    "registry", "EXCLUSIVE", "SHARED", "FieldWrite", "IndexErase", "IndexInsert",
    "IndexResult", "LockMode", "LockResult", "Outcome", "RecordCreate",
    "RecordDelete", "TransactionContext", "TxnManager", "TxnStatus",
    "array_element_ref", "begin_txn", "delete_record", "end_txn",
    "get_or_create_txn_manager", "index_erase", "index_insert", "index_lookup",
    "insert_record", "read_field", "try_lock", "write_field",
]
