"""Prebuilt specifications and a by-name registry of deployable structures.

===========  ===================================================================
name         structure
===========  ===================================================================
dll          doubly linked list exposing its full API
fifo         ``MyCDS``: a FIFO wrapper around the doubly linked list, optimized
lru          LRU container composing a keyed doubly linked list with a map
lru-coarse   the same LRU spec run serially under one global mutex
ycsb         fixed array of YCSB records with whole-record read and update
ycsb-coarse  the same YCSB spec run serially under one global mutex
===========  ===================================================================
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

from .builder import SpecBuilder
from .cc_injector import inject_cc
from .errors import SpecTypeError
from .executor import CoarseInstance, Instance
from .ir import BOOL, I64, Constant, DataStructureSpec, Param, add, eq, is_null, not_, record_ptr
from .optimizer import optimize


def _null(spec: str) -> Constant:
    return Constant(None, record_ptr(spec))


def _accessors(b: SpecBuilder, names_types: list):
    """get_<attr> / set_<attr> for every listed attribute."""
    for name, t in names_types:
        g = b.function(f"get_{name}", t)
        g.temp("r", t)
        g.read(name, "r")
        g.ret("r")
        s = b.function(f"set_{name}", params=[Param("v", t)])
        s.update(name, "v")
        s.ret()


# ============================================================
# DOUBLY LINKED LIST
# ============================================================


def _node(name: str, keyed: bool) -> DataStructureSpec:
    b = SpecBuilder(name)
    if keyed:
        b.attribute("key", I64)
    b.attribute("value", I64)
    b.pointer("next", name)
    b.pointer("prev", name)
    ptr = record_ptr(name)
    _accessors(b, ([("key", I64)] if keyed else []) + [("value", I64), ("next", ptr), ("prev", ptr)])
    return b.build()


def build_doubly_linked_list() -> DataStructureSpec:
    """``LL{head, tail}`` over ``Node{value, next, prev}``.

    Exposes push_back, pop_front, push_front, pop_back and empty. Popped
    nodes are deleted.
    """
    b = SpecBuilder("LL")
    b.register_composed(_node("Node", keyed=False))
    node = record_ptr("Node")
    b.pointer("head", "Node")
    b.pointer("tail", "Node")

    f = b.function("push_back", params=[Param("value", I64)])
    f.temp("n", node)
    f.temp("t", node)
    f.create("Node", "n")
    f.call("n", "set_value", ["value"])
    f.read("tail", "t")
    f.call("n", "set_prev", ["t"])
    then, orelse = f.if_(is_null("t"))
    then.update("head", "n")
    orelse.call("t", "set_next", ["n"])
    f.update("tail", "n")
    f.ret()

    f = b.function("push_front", params=[Param("value", I64)])
    f.temp("n", node)
    f.temp("h", node)
    f.create("Node", "n")
    f.call("n", "set_value", ["value"])
    f.read("head", "h")
    f.call("n", "set_next", ["h"])
    then, orelse = f.if_(is_null("h"))
    then.update("tail", "n")
    orelse.call("h", "set_prev", ["n"])
    f.update("head", "n")
    f.ret()

    for name, first, last, step, back in (("pop_front", "head", "tail", "get_next", "set_prev"),
                                          ("pop_back", "tail", "head", "get_prev", "set_next")):
        f = b.function(name, BOOL, [Param("val", I64, by_ptr=True)])
        for t in ("h", "t", "nx", "nil"):
            f.temp(t, node)
        f.temp("ok", BOOL)
        f.read(first, "h")
        then, _ = f.if_(is_null("h"))
        then.assign("ok", Constant(False, BOOL))
        then.ret("ok")
        f.read(last, "t")
        then, _ = f.if_(eq("h", "t"))
        then.assign("nil", _null("Node"))
        then.update(last, "nil")
        f.call("h", step, result="nx")
        f.update(first, "nx")
        then, _ = f.if_(not_(is_null("nx")))
        then.assign("nil", _null("Node"))
        then.call("nx", back, ["nil"])
        f.call("h", "get_value", result="val")
        f.delete("h")
        f.assign("ok", Constant(True, BOOL))
        f.ret("ok")

    f = b.function("empty", BOOL)
    f.temp("h", node)
    f.temp("r", BOOL)
    f.read("head", "h")
    f.assign("r", is_null("h"))
    f.ret("r")

    return b.build({"push_back", "pop_front", "push_front", "pop_back", "empty"})


def build_fifo_mycds() -> DataStructureSpec:
    """``MyCDS`` embedding the doubly linked list, exposing push and pop."""
    b = SpecBuilder("MyCDS")
    b.register_composed(build_doubly_linked_list())
    b.embedded("list", "LL")
    f = b.function("push", params=[Param("val", I64)])
    f.call("list", "push_back", ["val"], embedded=True)
    f.ret()
    f = b.function("pop", BOOL, [Param("val", I64, by_ptr=True)])
    f.temp("ok", BOOL)
    f.call("list", "pop_front", ["val"], result="ok", embedded=True)
    f.ret("ok")
    return b.build({"push", "pop"})


# ============================================================
# LRU CONTAINER
# ============================================================


def _keyed_list() -> DataStructureSpec:
    """Recency list over ``KNode{key, value, next, prev}``; nodes are passed in."""
    b = SpecBuilder("KList")
    b.register_composed(_node("KNode", keyed=True))
    node = record_ptr("KNode")
    b.pointer("head", "KNode")
    b.pointer("tail", "KNode")

    def link_front(blk):
        blk.assign("nil", _null("KNode"))
        blk.read("head", "h")
        blk.call("n", "set_prev", ["nil"])
        blk.call("n", "set_next", ["h"])
        then, orelse = blk.if_(is_null("h"))
        then.update("tail", "n")
        orelse.call("h", "set_prev", ["n"])
        blk.update("head", "n")

    f = b.function("push_front", params=[Param("n", node)])
    for t in ("h", "nil"):
        f.temp(t, node)
    link_front(f)
    f.ret()

    f = b.function("move_to_front", params=[Param("n", node)])
    for t in ("h", "p", "x", "nil"):
        f.temp(t, node)
    f.read("head", "h")
    then, _ = f.if_(eq("h", "n"))
    then.ret()
    # unlink; n is not the head, so it has a predecessor
    f.call("n", "get_prev", result="p")
    f.call("n", "get_next", result="x")
    f.call("p", "set_next", ["x"])
    then, orelse = f.if_(is_null("x"))
    then.update("tail", "p")
    orelse.call("x", "set_prev", ["p"])
    link_front(f)
    f.ret()

    f = b.function("pop_back", node)
    for t in ("t", "p", "nil"):
        f.temp(t, node)
    f.read("tail", "t")
    f.call("t", "get_prev", result="p")
    f.update("tail", "p")
    f.assign("nil", _null("KNode"))
    then, orelse = f.if_(is_null("p"))
    then.update("head", "nil")
    orelse.call("p", "set_next", ["nil"])
    f.ret("t")
    return b.build()


def build_lru(capacity: int = 1024) -> DataStructureSpec:
    """LRU container: ``insert(key, value) -> bool`` and ``find(key, &k) -> bool``.

    insert returns False for a key already present (its value is left as
    is). Both operations move the key to the head; insert at capacity
    first evicts the tail. find reports the key it found through ``k``.
    """
    if capacity <= 0:
        raise SpecTypeError("LRU capacity must be positive")
    b = SpecBuilder("LRU")
    b.register_composed(_keyed_list())
    node = record_ptr("KNode")
    b.embedded("list", "KList")
    b.attribute("size", I64)
    b.attribute("capacity", I64, capacity)
    b.map("map", I64, node)

    f = b.function("insert", BOOL, [Param("key", I64), Param("value", I64)])
    f.temp("found", BOOL)
    f.temp("n", node)
    f.temp("victim", node)
    f.temp("vk", I64)
    f.temp("s", I64)
    f.temp("cap", I64)
    f.map_contains("map", "key", "found")
    then, orelse = f.if_("found")
    then.map_read("map", "key", "n")
    then.call("list", "move_to_front", ["n"], embedded=True)
    then.assign("found", Constant(False, BOOL))
    then.ret("found")
    f.read("size", "s")
    f.read("capacity", "cap")
    full, room = f.if_(eq("s", "cap"))
    full.call("list", "pop_back", result="victim", embedded=True)
    full.call("victim", "get_key", result="vk")
    full.map_erase("map", "vk")
    full.delete("victim")
    room.assign("s", add("s", Constant(1, I64)))
    room.update("size", "s")
    f.create("KNode", "n")
    f.call("n", "set_key", ["key"])
    f.call("n", "set_value", ["value"])
    f.call("list", "push_front", ["n"], embedded=True)
    f.map_insert("map", "key", "n")
    f.assign("found", Constant(True, BOOL))
    f.ret("found")

    f = b.function("find", BOOL, [Param("key", I64), Param("k", I64, by_ptr=True)])
    f.temp("found", BOOL)
    f.temp("n", node)
    f.map_contains("map", "key", "found")
    then, _ = f.if_("found")
    then.map_read("map", "key", "n")
    then.call("list", "move_to_front", ["n"], embedded=True)
    then.call("n", "get_key", result="k")
    f.ret("found")

    return b.build({"insert", "find"})


def build_coarse_lru(capacity: int = 1024) -> Callable[[str], CoarseInstance]:
    """Factory of LRU instances serialized by one global mutex."""
    spec = optimize(build_lru(capacity))[0]

    def make(namespace: str = "lru-coarse") -> CoarseInstance:
        return CoarseInstance(spec, namespace)
    return make


# ============================================================
# YCSB CONTAINER
# ============================================================


def build_ycsb(num_columns: int = 10, num_records: int = 1000) -> DataStructureSpec:
    """``YCSB{items: YCSB_ITEM[num_records]}`` with ``num_columns`` i64 columns.

    read_record(idx, &c0, ...) -> bool and update_record(idx, c0, ...) -> bool
    touch every column of one record.
    """
    if not 1 <= num_columns <= 10:
        raise SpecTypeError("YCSB records have between 1 and 10 columns")
    if num_records <= 0:
        raise SpecTypeError("YCSB needs at least one record")
    cols = [f"c{i}" for i in range(num_columns)]

    item = SpecBuilder("YCSB_ITEM")
    for c in cols:
        item.attribute(c, I64)
    f = item.function("read_all", BOOL, [Param(c, I64, by_ptr=True) for c in cols])
    f.temp("ok", BOOL)
    for c in cols:
        f.read(c, c)
    f.assign("ok", Constant(True, BOOL))
    f.ret("ok")
    f = item.function("write_all", BOOL, [Param(c, I64) for c in cols])
    f.temp("ok", BOOL)
    for c in cols:
        f.update(c, c)
    f.assign("ok", Constant(True, BOOL))
    f.ret("ok")

    b = SpecBuilder("YCSB")
    b.register_composed(item.build())
    b.array("items", "YCSB_ITEM", num_records)
    item_ptr = record_ptr("YCSB_ITEM")
    for name, fn, by_ptr in (("read_record", "read_all", True), ("update_record", "write_all", False)):
        f = b.function(name, BOOL, [Param("idx", I64)] + [Param(c, I64, by_ptr=by_ptr) for c in cols])
        f.temp("it", item_ptr)
        f.temp("ok", BOOL)
        f.array_read("items", "idx", "it")
        f.call("it", fn, cols, result="ok")
        f.ret("ok")
    return b.build({"read_record", "update_record"})


# ============================================================
# REGISTRY
# ============================================================


@dataclass(frozen=True)
class CatalogEntry:
    """A named deployable structure.

    ``build`` gives the serial spec; ``optimize`` says whether deployments
    run the optimizer first; ``coarse`` deploys the serial spec under one
    global mutex instead of injecting locks. ``bench_build`` overrides the
    spec the benchmarks drive. ``shape`` holds expected post-optimization
    attribute and function names per spec.
    """

    name: str
    build: Callable[..., DataStructureSpec]
    optimize: bool = True
    coarse: bool = False
    bench_build: Callable[..., DataStructureSpec] | None = None
    shape: dict = field(default_factory=dict)

    def serial_spec(self, bench: bool = False, **params) -> DataStructureSpec:
        build = self.bench_build if bench and self.bench_build else self.build
        spec = build(**params)
        return optimize(spec)[0] if self.optimize else spec

    def deploy(self, namespace: str | None = None, bench: bool = False, **params):
        """Build, optimize when configured, then instantiate."""
        spec = self.serial_spec(bench, **params)
        ns = namespace or self.name
        if self.coarse:
            return CoarseInstance(spec, ns)
        return Instance(inject_cc(spec), ns)


CATALOG = {
    e.name: e for e in (
        # as a FIFO baseline the list is driven through the unoptimized wrapper
        CatalogEntry("dll", build_doubly_linked_list, optimize=False, bench_build=build_fifo_mycds),
        CatalogEntry("fifo", build_fifo_mycds, shape={
            "Node": {"attributes": {"value", "next"}, "functions": {"get_value", "set_value", "get_next", "set_next"}},
            "LL": {"attributes": {"head", "tail"}, "functions": {"push_back", "pop_front"}},
        }),
        CatalogEntry("lru", build_lru, shape={
            "LRU": {"attributes": {"list", "size", "map"}, "functions": {"insert", "find"}},
        }),
        CatalogEntry("lru-coarse", build_lru, coarse=True),
        CatalogEntry("ycsb", build_ycsb),
        CatalogEntry("ycsb-coarse", build_ycsb, coarse=True),
    )
}


def get_entry(name: str) -> CatalogEntry:
    if name not in CATALOG:
        raise KeyError(f"unknown structure {name!r}; choose from {', '.join(CATALOG)}")
    return CATALOG[name]


__all__ = [
    "CATALOG", "CatalogEntry", "build_coarse_lru", "build_doubly_linked_list",
    "build_fifo_mycds", "build_lru", "build_ycsb", "get_entry",
]
