"""Live instances of concurrent specs and transactional method invocation.

Each function of a spec tree is lowered once per namespace into a plain
Python function whose body performs the statements directly against the
runtime tables: attribute reads index the row list, writes, inserts,
deletes and index changes go through the transaction context so they are
undone on abort, and lock statements become NO_WAIT ``txn.lock`` calls that
raise :class:`Conflict`. ``ReleaseAll`` commits. :meth:`Instance.invoke`
wraps an exposed function in a transaction and retries it after a conflict
with randomized exponential backoff, so callers never observe aborts.

Use :func:`lowered_source` to see the generated code for a spec.
"""

from __future__ import annotations

import random
import threading
import time

from .errors import (
    Conflict, IndexOutOfBounds, InvalidState, MissingKey,
    NullDereference, SpecTypeError, UnknownMethod,
)
from .ir import (
    BOOL, AcquireExclusive, AcquireShared, Add, ArrayAttr, ArrayRead,
    ArrayUpdate, Assign, Conditional, Constant, Create, DataStructureSpec,
    Delete, ElementTarget, EmbeddedAttr, EmbeddedTarget, EntryTarget, Eq,
    FunctionDecl, IsNull, MapAttr, MapContains, MapErase, MapInsert, MapRead,
    MapUpdate, MethodCall, Nop, PointerAttr, PrimitiveAttr, Read, ReleaseAll,
    Return, SelfTarget, Sub, Update, Upgrade, ValueType, Var, record_ptr, walk,
)
from .runtime.storage import OFFSET_BITS, OFFSET_MASK, REGISTRY, TABLES, Column
from .runtime.txn import TxnStatus, get_or_create_txn_manager
from .values import Out, check_args

_HANDLE = ValueType("i64")


# ============================================================
# PHYSICAL LAYOUT
# ============================================================


class Layout:
    """Where one spec's attributes live inside a namespace.

    Every attribute takes one column of the spec's table: primitives and
    pointers hold their value, embedded attributes the reference of the
    embedded row, arrays the reference of their first element row and maps
    the handle of their key index. Primitive arrays and map entries keep
    their values in a one-column side table named ``<spec>.<attr>``;
    arrays of a composed type are contiguous rows of the element's table.
    """

    def __init__(self, spec: DataStructureSpec, namespace: str):
        self.spec = spec
        self.columns = {}
        self.side = {}
        cols, defaults = [], []
        for i, a in enumerate(spec.attributes):
            self.columns[a.name] = i
            if isinstance(a, PrimitiveAttr):
                cols.append(Column(a.name, a.type))
                defaults.append(a.default)
            elif isinstance(a, PointerAttr):
                cols.append(Column(a.name, a.type))
                defaults.append(0)
            elif isinstance(a, EmbeddedAttr):
                cols.append(Column(a.name, record_ptr(a.spec)))
                defaults.append(0)
            elif isinstance(a, ArrayAttr):
                elem = a.element if a.composed else f"{spec.name}.{a.name}"
                cols.append(Column(a.name, record_ptr(elem)))
                defaults.append(0)
                if not a.composed:
                    self.side[a.name] = REGISTRY.register(
                        namespace, elem, (Column("value", a.element),), (a.element.default(),))
            elif isinstance(a, MapAttr):
                cols.append(Column(a.name, _HANDLE))
                defaults.append(0)
                value_default = 0 if a.value.is_ptr else a.value.default()
                self.side[a.name] = REGISTRY.register(
                    namespace, f"{spec.name}.{a.name}", (Column("value", a.value),), (value_default,))
        self.table = REGISTRY.register(namespace, spec.name, cols, defaults)
        # records without sub-structures are created and deleted by one row op
        self.flat = all(isinstance(a, (PrimitiveAttr, PointerAttr)) for a in spec.attributes)


def _construct(layouts: dict, name: str, txn) -> int:
    lay = layouts[name]
    ref = txn.insert(lay.table)
    if not lay.flat:
        _init_parts(layouts, name, ref, txn)
    return ref


def _init_parts(layouts: dict, name: str, ref: int, txn):
    """Create the embedded rows, array blocks and indexes of a fresh row."""
    lay = layouts[name]
    row = lay.table.rows[ref & OFFSET_MASK]
    for a in lay.spec.attributes:
        c = lay.columns[a.name]
        if isinstance(a, EmbeddedAttr):
            row[c] = _construct(layouts, a.spec, txn)
        elif isinstance(a, ArrayAttr):
            table = layouts[a.element].table if a.composed else lay.side[a.name]
            base = table.ref_base | table.allocate_block(a.length)
            for i in range(a.length):
                txn.created(base + i)
            if a.composed and not layouts[a.element].flat:
                for i in range(a.length):
                    _init_parts(layouts, a.element, base + i, txn)
            row[c] = base
        elif isinstance(a, MapAttr):
            row[c] = REGISTRY.new_index(a.key).handle


def _collect(layouts: dict, by_table: dict, ref: int, out: set, indexes: list):
    """Every record reachable from ``ref`` (pointers followed)."""
    stack = [ref]
    while stack:
        r = stack.pop()
        if not r or r in out:
            continue
        out.add(r)
        lay = by_table.get(r >> OFFSET_BITS)
        if lay is None:
            continue  # side-table row
        row = lay.table.rows[r & OFFSET_MASK]
        if row is None:
            continue
        for a in lay.spec.attributes:
            v = row[lay.columns[a.name]]
            if isinstance(a, (PointerAttr, EmbeddedAttr)):
                stack.append(v)
            elif isinstance(a, ArrayAttr):
                stack.extend(range(v, v + a.length))
            elif isinstance(a, MapAttr):
                idx = REGISTRY.indexes[v]
                indexes.append(v)
                side = lay.side[a.name]
                for e in idx.entries.values():
                    stack.append(e)
                    if a.value.is_ptr:
                        stack.append(side.rows[e & OFFSET_MASK][0])
    return out


# ============================================================
# LOWERING TO PYTHON SOURCE
# ============================================================


def _fname(spec: str, fn: str) -> str:
    return f"f_{spec}__{fn}"


class _Frame:
    """Naming context of one function body being emitted.

    ``var`` is the prefix of its variables and ``me`` the Python name of
    its self reference. An inlined body has ``result`` set to the caller
    variable receiving its return value and ``outs`` to the caller
    variables receiving its out-parameters. With ``loop`` set the body sits
    in a one-pass ``while`` so that an early Return can ``break``.
    """

    def __init__(self, spec, fn, var, me, result=None, outs=None, inline=False, loop=False):
        self.loop = loop
        self.spec = spec
        self.fn = fn
        self.types = fn.var_types()
        self.var = var
        self.me = me
        self.result = result
        self.outs = outs
        self.inline = inline

    def v(self, name: str) -> str:
        return f"{self.var}{name}"


def _straight(fn: FunctionDecl) -> bool:
    """Single Return, as the last top-level statement."""
    returns = sum(1 for _, st in walk(fn.body) if isinstance(st, Return))
    return returns == 1 and isinstance(fn.body[-1], Return)


_MAX_INLINE_DEPTH = 4


class _Lowering:
    def __init__(self, root: DataStructureSpec, layouts: dict, inline: bool = True):
        self.root = root
        self.specs = root.all_specs()
        self.layouts = layouts
        self.inline = inline
        self.lines: list[str] = []
        self.tmp = 0

    def fresh(self) -> str:
        self.tmp += 1
        return f"_t{self.tmp}"

    def emit(self, depth: int, line: str):
        self.lines.append("    " * depth + line)

    # -- expressions ------------------------------------------------------------

    def etype(self, e, fr) -> ValueType:
        if isinstance(e, Constant):
            return e.type
        if isinstance(e, Var):
            return fr.types[e.name]
        if isinstance(e, (Add, Sub)):
            return self.etype(e.left, fr)
        return BOOL

    def expr(self, e, fr, bits: int | None = None) -> str:
        if isinstance(e, Constant):
            return "0" if e.value is None else repr(e.value)
        if isinstance(e, Var):
            return fr.v(e.name)
        if isinstance(e, (Add, Sub)):
            op = "+" if isinstance(e, Add) else "-"
            raw = f"({self.expr(e.left, fr)} {op} {self.expr(e.right, fr)})"
            if not self.etype(e, fr).is_int:
                return raw
            half = 1 << ((bits or 64) - 1)
            return f"(({raw} + {half}) & {2 * half - 1}) - {half}"
        if isinstance(e, Eq):
            return f"({self.expr(e.left, fr)} == {self.expr(e.right, fr)})"
        if isinstance(e, IsNull):
            return f"({self.expr(e.operand, fr)} == 0)"
        raise TypeError(e)

    # -- helpers --------------------------------------------------------------

    def row(self, fr) -> str:
        return f"R_{fr.spec.name}[{fr.me} & {OFFSET_MASK}]"

    def col(self, fr, attr: str) -> int:
        return self.layouts[fr.spec.name].columns[attr]

    def index_of(self, fr, attr: str) -> str:
        return f"IDX[{self.row(fr)}[{self.col(fr, attr)}]]"

    def element(self, d, fr, attr: str, index) -> str:
        """Emit a bounds-checked element reference into a fresh variable."""
        length = fr.spec.attribute(attr).length
        i, ref = self.fresh(), self.fresh()
        self.emit(d, f"{i} = {self.expr(index, fr)}")
        self.emit(d, f"if not 0 <= {i} < {length}: raise IndexOutOfBounds('{attr}[%d]' % {i})")
        self.emit(d, f"{ref} = {self.row(fr)}[{self.col(fr, attr)}] + {i}")
        return ref

    def lock(self, d, fr, target, mode: int):
        emit = self.emit
        if isinstance(target, SelfTarget):
            ref = fr.me
        elif isinstance(target, EmbeddedTarget):
            ref = self.fresh()
            emit(d, f"{ref} = {self.row(fr)}[{self.col(fr, target.attr)}]")
        elif isinstance(target, ElementTarget):
            ref = self.element(d, fr, target.attr, target.index)
        elif isinstance(target, EntryTarget):
            ix, k, ref = self.fresh(), self.fresh(), self.fresh()
            emit(d, f"{ix} = {self.index_of(fr, target.attr)}.entries")
            emit(d, f"{k} = {self.expr(target.key, fr)}")
            emit(d, f"{ref} = {ix}.get({k})")
            # absent entry: the statement itself reports it (or inserts under the owner lock)
            emit(d, f"if {ref} is not None:")
            emit(d + 1, f"if not txn.lock({ref}, {mode}): raise Conflict()")
            # the entry may have been erased and its slot reused before we locked it
            emit(d + 1, f"if {ix}.get({k}) != {ref}: raise Conflict()")
            return
        else:
            ref = fr.v(target.name)
            emit(d, f"if not {ref}: raise NullDereference('lock of null {target.name}')")
        emit(d, f"if not txn.lock({ref}, {mode}): raise Conflict()")

    # -- statements -------------------------------------------------------------

    def body(self, d, fr, stmts):
        if not stmts:
            self.emit(d, "pass")
        for st in stmts:
            self.stmt(d, fr, st)

    def stmt(self, d, fr, st):
        emit = self.emit
        v = fr.v
        row = self.row(fr)
        if isinstance(st, Read):
            emit(d, f"{v(st.dst)} = {row}[{self.col(fr, st.attr)}]")
        elif isinstance(st, Update):
            emit(d, f"txn.write({fr.me}, {self.col(fr, st.attr)}, {v(st.src)})")
        elif isinstance(st, ArrayRead):
            ref = self.element(d, fr, st.attr, st.index)
            if fr.spec.attribute(st.attr).composed:
                emit(d, f"{v(st.dst)} = {ref}")
            else:
                emit(d, f"{v(st.dst)} = A_{fr.spec.name}_{st.attr}[{ref} & {OFFSET_MASK}][0]")
        elif isinstance(st, ArrayUpdate):
            if fr.spec.attribute(st.attr).composed:
                raise SpecTypeError(f"{fr.spec.name}.{st.attr}: elements of a composed array are records")
            ref = self.element(d, fr, st.attr, st.index)
            emit(d, f"txn.write({ref}, 0, {v(st.src)})")
        elif isinstance(st, MapContains):
            emit(d, f"{v(st.dst)} = {self.expr(st.key, fr)} in {self.index_of(fr, st.attr)}.entries")
        elif isinstance(st, (MapRead, MapUpdate)):
            k, e = self.fresh(), self.fresh()
            emit(d, f"{k} = {self.expr(st.key, fr)}")
            emit(d, f"{e} = {self.index_of(fr, st.attr)}.entries.get({k})")
            emit(d, f"if {e} is None: raise MissingKey({k})")
            if isinstance(st, MapRead):
                emit(d, f"{v(st.dst)} = A_{fr.spec.name}_{st.attr}[{e} & {OFFSET_MASK}][0]")
            else:
                emit(d, f"txn.write({e}, 0, {v(st.src)})")
        elif isinstance(st, MapInsert):
            ix, k, e = self.fresh(), self.fresh(), self.fresh()
            emit(d, f"{ix} = {self.index_of(fr, st.attr)}")
            emit(d, f"{k} = {self.expr(st.key, fr)}")
            emit(d, f"{e} = {ix}.entries.get({k})")
            emit(d, f"if {e} is None:")
            emit(d + 1, f"{e} = txn.insert(T_{fr.spec.name}_{st.attr}, [{v(st.src)}])")
            # keep the new entry private until commit
            emit(d + 1, f"txn.lock({e}, 2)")
            emit(d + 1, f"if not txn.index_insert({ix}, {k}, {e}): raise Conflict()")
            emit(d, "else:")
            emit(d + 1, f"txn.write({e}, 0, {v(st.src)})")
        elif isinstance(st, MapErase):
            ix, k, e = self.fresh(), self.fresh(), self.fresh()
            emit(d, f"{ix} = {self.index_of(fr, st.attr)}")
            emit(d, f"{k} = {self.expr(st.key, fr)}")
            emit(d, f"{e} = {ix}.entries.get({k})")
            emit(d, f"if {e} is not None:")
            emit(d + 1, f"txn.index_erase({ix}, {k})")
            emit(d + 1, f"txn.delete({e})")
        elif isinstance(st, Assign):
            t = fr.types[st.dst]
            emit(d, f"{v(st.dst)} = {self.expr(st.expr, fr, t.bits if t.is_int else None)}")
        elif isinstance(st, Conditional):
            emit(d, f"if {self.expr(st.cond, fr)}:")
            self.body(d + 1, fr, st.then)
            if st.orelse:
                emit(d, "else:")
                self.body(d + 1, fr, st.orelse)
        elif isinstance(st, Create):
            if self.layouts[st.spec].flat:
                emit(d, f"{v(st.dst)} = txn.insert(T_{st.spec})")
            else:
                emit(d, f"{v(st.dst)} = construct(LAYOUTS, {st.spec!r}, txn)")
        elif isinstance(st, Delete):
            emit(d, f"if not {v(st.var)}: raise NullDereference('delete of null {st.var}')")
            target = fr.types[st.var].of
            if self.layouts[target].flat:
                emit(d, f"txn.delete({v(st.var)})")
            else:
                emit(d, f"destruct(LAYOUTS, {target!r}, {v(st.var)}, txn)")
        elif isinstance(st, MethodCall):
            self.call(d, fr, st)
        elif isinstance(st, Return):
            self.ret(d, fr, st)
        elif isinstance(st, AcquireShared):
            self.lock(d, fr, st.target, 1)
        elif isinstance(st, (AcquireExclusive, Upgrade)):
            self.lock(d, fr, st.target, 2)
        elif isinstance(st, ReleaseAll):
            emit(d, "commit(txn)")
        elif isinstance(st, Nop):
            emit(d, "pass")
        else:
            raise TypeError(st)

    def call(self, d, fr, st: MethodCall):
        v = fr.v
        if st.embedded:
            spec_name = fr.spec.attribute(st.target).spec
            target = self.fresh()
            self.emit(d, f"{target} = {self.row(fr)}[{self.col(fr, st.target)}]")
        else:
            spec_name = fr.types[st.target].of
            target = v(st.target)
            self.emit(d, f"if not {target}: raise NullDereference('call {st.function} on null {st.target}')")
        spec = self.specs[spec_name]
        callee = spec.functions[st.function]
        by_ptr = [a for p, a in zip(callee.params, st.args) if p.by_ptr]
        depth = fr.var.count("_") - 1
        if self.inline and depth < _MAX_INLINE_DEPTH:
            prefix = f"{fr.var}{self.fresh()[1:]}_"
            me = f"{prefix}me"
            loop = not _straight(callee)
            inner = _Frame(spec, callee, prefix, me, result=v(st.result) if st.result else None,
                           outs=[v(a) for a in by_ptr], inline=True, loop=loop)
            self.emit(d, f"{me} = {target}")
            for p, a in zip(callee.params, st.args):
                self.emit(d, f"{inner.v(p.name)} = {v(a)}")
            self.temps(d, inner)
            if loop:
                self.emit(d, "while True:")
                self.body(d + 1, inner, callee.body)
            else:
                self.body(d, inner, callee.body)
            return
        args = "".join(f", {v(a)}" for a in st.args)
        call = f"{_fname(spec_name, st.function)}(txn, {target}{args})"
        res = v(st.result) if st.result else "_"
        if by_ptr:
            self.emit(d, f"{res}, {', '.join(v(a) for a in by_ptr)} = {call}")
        elif st.result:
            self.emit(d, f"{res} = {call}")
        else:
            self.emit(d, call)

    def ret(self, d, fr, st: Return):
        val = fr.v(st.var) if st.var else "None"
        outs = [fr.v(p.name) for p in fr.fn.params if p.by_ptr]
        if fr.inline:
            if fr.result:
                self.emit(d, f"{fr.result} = {val}")
            for dst, src in zip(fr.outs, outs):
                self.emit(d, f"{dst} = {src}")
            if fr.loop:
                self.emit(d, "break")
            return
        if outs:
            self.emit(d, f"return {val}, {', '.join(outs)}")
        else:
            self.emit(d, f"return {val}")

    def temps(self, d, fr):
        for t in fr.fn.temps:
            self.emit(d, f"{fr.v(t.name)} = {0 if t.type.is_ptr else repr(t.type.default())}")

    def function(self, spec: DataStructureSpec, fn: FunctionDecl):
        fr = _Frame(spec, fn, "v_", "me")
        params = "".join(f", {fr.v(p.name)}" for p in fn.params)
        self.emit(0, f"def {_fname(spec.name, fn.name)}(txn, me{params}):")
        self.temps(1, fr)
        self.body(1, fr, fn.body)
        self.emit(0, "")

    def module(self) -> str:
        for s in self.specs.values():
            for f in s.functions.values():
                self.function(s, f)
        return "\n".join(self.lines)


def lowered_source(spec: DataStructureSpec, namespace: str = "default") -> str:
    """The Python source the executor runs for ``spec`` (for inspection)."""
    return _program(spec, namespace).source


class _Program:
    def __init__(self, spec: DataStructureSpec, namespace: str):
        self.spec = spec
        self.namespace = namespace
        self.layouts = {n: Layout(s, namespace) for n, s in spec.all_specs().items()}
        self.by_table = {lay.table.table_id: lay for lay in self.layouts.values()}
        self.manager = get_or_create_txn_manager(namespace)
        self.source = _Lowering(spec, self.layouts).module()
        env = {
            "Conflict": Conflict, "IndexOutOfBounds": IndexOutOfBounds,
            "MissingKey": MissingKey, "NullDereference": NullDereference,
            "IDX": REGISTRY.indexes, "LAYOUTS": self.layouts,
            "construct": _construct, "destruct": _destruct,
            "commit": self.manager.commit,
        }
        for n, lay in self.layouts.items():
            env[f"R_{n}"] = lay.table.rows
            env[f"T_{n}"] = lay.table
            for attr, side in lay.side.items():
                env[f"A_{n}_{attr}"] = side.rows
                env[f"T_{n}_{attr}"] = side
        code = compile(self.source, f"<dcds {namespace}.{spec.name}>", "exec")
        exec(code, env)
        self.functions = {n: env[_fname(spec.name, n)] for n in spec.functions}


def _destruct(layouts: dict, name: str, ref: int, txn):
    """Transactional delete of a record together with its sub-structures."""
    lay = layouts[name]
    row = lay.table.rows[ref & OFFSET_MASK]
    if row is None:
        raise NullDereference(f"delete of a deleted {name}")
    for a in lay.spec.attributes:
        v = row[lay.columns[a.name]]
        if isinstance(a, EmbeddedAttr):
            _destruct(layouts, a.spec, v, txn)
        elif isinstance(a, ArrayAttr):
            for i in range(a.length):
                if a.composed:
                    _destruct(layouts, a.element, v + i, txn)
                else:
                    txn.delete(v + i)
        elif isinstance(a, MapAttr):
            idx = REGISTRY.indexes[v]
            for k, e in list(idx.entries.items()):
                txn.index_erase(idx, k)
                txn.delete(e)
    txn.delete(ref)


_programs: dict = {}
_programs_latch = threading.Lock()


def _program(spec: DataStructureSpec, namespace: str) -> _Program:
    key = (namespace, id(spec))
    with _programs_latch:
        p = _programs.get(key)
        if p is None or p.spec is not spec:
            p = _programs[key] = _Program(spec, namespace)
        return p


def forget_namespace(namespace: str):
    """Drop the compiled programs and tables of a namespace.

    Instances living there must be destroyed (or abandoned) first.
    """
    with _programs_latch:
        for key in [k for k in _programs if k[0] == namespace]:
            del _programs[key]
    REGISTRY.drop_namespace(namespace)


# ============================================================
# NON-TRANSACTIONAL CONTEXT
# ============================================================


class NullTxn:
    """Direct, unlogged storage access with every lock granted.

    Used while constructing instances and by the coarse-lock baseline,
    which already runs every method under one global mutex.
    """

    status = TxnStatus.ACTIVE

    @staticmethod
    def lock(ref, mode):
        return True

    @staticmethod
    def write(ref, column, value):
        TABLES[ref >> OFFSET_BITS].rows[ref & OFFSET_MASK][column] = value

    @staticmethod
    def insert(table, values=None):
        return table.ref_base | table.allocate(values)

    @staticmethod
    def delete(ref):
        TABLES[ref >> OFFSET_BITS].release(ref & OFFSET_MASK)

    @staticmethod
    def created(ref):
        pass

    @staticmethod
    def index_insert(index, key, ref):
        return index.insert(key, ref)

    @staticmethod
    def index_erase(index, key):
        return index.erase(key)


NULL_TXN = NullTxn()


# ============================================================
# INSTANCES
# ============================================================


_BACKOFF_BASE = 1e-6
_BACKOFF_CAP = 1e-3


def _fast_checker(fn: FunctionDecl):
    """Compile an argument check for the common well-typed call.

    Returns the initial parameter values, or ``None`` whenever anything
    looks off, in which case :func:`check_args` decides (and explains).
    """
    lines = ["def check(args):", f"    if len(args) != {len(fn.params)}: return None"]
    vals = []
    for i, p in enumerate(fn.params):
        a = f"a{i}"
        lines.append(f"    {a} = args[{i}]")
        if p.by_ptr:
            lines.append(f"    if type({a}) is not Out: return None")
            lines.append(f"    {a} = {a}.value")
            lines.append(f"    if {a} is None: {a} = {p.type.default()!r}")
        t = p.type
        if t.is_int:
            half = 1 << (t.bits - 1)
            lines.append(f"    if type({a}) is not int or not {-half} <= {a} < {half}: return None")
        elif t.tag == "bool":
            lines.append(f"    if type({a}) is not bool: return None")
        elif t.tag == "f64":
            lines.append(f"    if type({a}) is not float: return None")
        elif t.tag == "str":
            lines.append(f"    if type({a}) is not bytes or len({a}) >= {t.length}: return None")
        else:
            lines.append(f"    if {a} is not None: return None")
        vals.append(a)
    lines.append(f"    return [{', '.join(vals)}]")
    env = {"Out": Out}
    exec("\n".join(lines), env)
    return env["check"]


class _Method:
    __slots__ = ("fn", "body", "check", "outs")

    def __init__(self, fn: FunctionDecl, body):
        self.fn = fn
        self.body = body
        self.check = _fast_checker(fn)
        # (argument position, pointer-typed) of each out-parameter
        self.outs = tuple((i, p.type.is_ptr) for i, p in enumerate(fn.params) if p.by_ptr)

    def args(self, args: tuple) -> list:
        values = self.check(args)
        return check_args(self.fn, args) if values is None else values

    def write_back(self, args: tuple, result):
        if not self.outs:
            return result
        for (i, is_ptr), v in zip(self.outs, result[1:]):
            args[i].value = None if is_ptr and v == 0 else v
        return result[0]


class _BaseInstance:
    def __init__(self, spec: DataStructureSpec, namespace: str):
        self.spec = spec
        self.namespace = namespace
        self.program = _program(spec, namespace)
        self.methods = {n: _Method(spec.functions[n], self.program.functions[n]) for n in sorted(spec.exposed)}
        self.root = _construct(self.program.layouts, spec.name, NULL_TXN)
        self.destroyed = False

    def __repr__(self):
        return f"<{type(self).__name__} {self.namespace}.{self.spec.name} root={self.root:#x}>"

    def signature(self, name: str):
        """``(param types, return type)`` of an exposed method."""
        fn = self.methods[name].fn
        return tuple(p.type for p in fn.params), fn.return_type

    def _method(self, name: str) -> _Method:
        m = self.methods.get(name)
        if m is None or self.destroyed:
            if self.destroyed:
                raise InvalidState(f"{self.spec.name} instance was destroyed")
            raise UnknownMethod(f"{self.spec.name} exposes no {name!r}")
        return m

    def __getattr__(self, name):
        # instance.push(1) as sugar for instance.invoke("push", 1)
        methods = self.__dict__.get("methods")
        if methods is not None and name in methods:
            return lambda *args: self.invoke(name, *args)
        raise AttributeError(name)

    def destroy(self):
        """Free every record reachable from the instance. Must be quiesced."""
        if self.destroyed:
            raise InvalidState(f"{self.spec.name} instance already destroyed")
        indexes: list = []
        refs = _collect(self.program.layouts, self.program.by_table, self.root, set(), indexes)
        for r in refs:
            t = TABLES[r >> OFFSET_BITS]
            if t.rows[r & OFFSET_MASK] is not None:
                t.release(r & OFFSET_MASK)
        for h in indexes:
            REGISTRY.drop_index(h)
        self.destroyed = True
        return len(refs)


class Instance(_BaseInstance):
    """A data structure living in the transactional storage of a namespace."""

    def __init__(self, spec: DataStructureSpec, namespace: str = "default"):
        if not spec.cc_injected:
            raise SpecTypeError(f"{spec.name} has no concurrency control; run inject_cc first")
        super().__init__(spec, namespace)
        self.manager = self.program.manager
        self._stats = threading.Lock()
        self.commits = 0
        self.aborts = 0

    def invoke(self, name: str, *args):
        """Run an exposed method as one transaction, retrying on conflict."""
        m = self._method(name)
        values = m.args(args)
        body = m.body
        mgr = self.manager
        root = self.root
        delay = _BACKOFF_BASE
        aborts = 0
        while True:
            txn = mgr.begin()
            try:
                result = body(txn, root, *values)
            except Conflict:
                mgr.abort(txn)
                aborts += 1
                time.sleep(random.random() * delay)
                delay = min(delay * 2, _BACKOFF_CAP)
                continue
            except BaseException:
                if txn.status is TxnStatus.ACTIVE:
                    mgr.abort(txn)
                with self._stats:
                    self.aborts += aborts + 1
                raise
            break
        if txn.status is TxnStatus.ACTIVE:
            mgr.commit(txn)
        with self._stats:
            self.commits += 1
            self.aborts += aborts
        return m.write_back(args, result)


class CoarseInstance(_BaseInstance):
    """Serial spec run under one global mutex with no transactional logging."""

    def __init__(self, spec: DataStructureSpec, namespace: str = "coarse"):
        if spec.cc_injected:
            raise SpecTypeError("the coarse baseline runs the serial spec")
        super().__init__(spec, namespace)
        self.guard = threading.Lock()
        self.commits = 0
        self.aborts = 0

    def invoke(self, name: str, *args):
        m = self._method(name)
        values = m.args(args)
        with self.guard:
            result = m.body(NULL_TXN, self.root, *values)
            self.commits += 1
        return m.write_back(args, result)


# ============================================================
# MODULE-LEVEL API
# ============================================================


def instantiate(cspec: DataStructureSpec, namespace: str = "default") -> Instance:
    return Instance(cspec, namespace)


def invoke(instance: _BaseInstance, method: str, args=()):
    return instance.invoke(method, *args)


def destroy(instance: _BaseInstance) -> int:
    """Free the instance; returns how many records were released."""
    return instance.destroy()


__all__ = [
    "CoarseInstance", "Instance", "Layout", "NULL_TXN", "NullTxn", "Out",
    "destroy", "forget_namespace", "instantiate", "invoke", "lowered_source",
]
