"""Declarative concurrent data structures.

Serial specifications written with :class:`SpecBuilder` go through
:func:`optimize` and :func:`inject_cc` and run as live transactional
instances via :func:`instantiate`.
"""

from .analysis import RWSetTable, analyze, compute_rw_sets, deduce_const
from .builder import SpecBuilder, new_builder
from .catalog import (
    CATALOG, CatalogEntry, build_coarse_lru, build_doubly_linked_list,
    build_fifo_mycds, build_lru, build_ycsb, get_entry,
)
from .cc_injector import check_all, inject_cc, strip_cc
from .executor import CoarseInstance, Instance, destroy, instantiate, invoke, lowered_source
from .ir import DataStructureSpec, dump_spec
from .optimizer import PassReport, optimize
from .serial import SerialInstance
from .values import Out

__all__ = [
    "CATALOG", "CatalogEntry", "CoarseInstance", "DataStructureSpec", "Instance",
    "Out", "PassReport", "RWSetTable", "SerialInstance", "SpecBuilder", "analyze",
    "build_coarse_lru", "build_doubly_linked_list", "build_fifo_mycds", "build_lru",
    "build_ycsb", "check_all", "compute_rw_sets", "deduce_const", "destroy",
    "dump_spec", "get_entry", "inject_cc", "instantiate", "invoke",
    "lowered_source", "new_builder", "optimize", "strip_cc",
]
