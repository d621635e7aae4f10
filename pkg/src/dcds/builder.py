"""Embedded DSL for declaring serial data structure specifications.

Typical use::

    node = SpecBuilder("Node")
    node.attribute("value", I64, 0)
    node.pointer("next", "Node")
    fn = node.function("get_value", I64)
    fn.temp("v", I64)
    fn.read("value", "v")
    fn.ret("v")
    Node = node.build({"get_value"})

Statements are type-checked as they are appended. :meth:`SpecBuilder.build`
then checks whole-body properties (every path returns, no empty then-branch)
and freezes the result into an immutable :class:`DataStructureSpec`.
"""

from __future__ import annotations

from typing import Iterable

from . import analysis
from .errors import (
    CyclicEmbedding, DuplicateAttribute, DuplicateSymbol, EmptyThenBranch,
    MissingReturn, SpecTypeError, UnknownExposedFunction, UnknownSymbol,
)
from .ir import (
    BOOL, I64, VOID, Add, ArrayAttr, ArrayRead, ArrayUpdate, Assign, Attribute,
    Conditional, Constant, Create, DataStructureSpec, Delete, EmbeddedAttr, Eq,
    Expr, FunctionDecl, IsNull, MapAttr, MapContains, MapErase, MapInsert,
    MapRead, MapUpdate, MethodCall, Param, PointerAttr, PrimitiveAttr, Read,
    Return, Sub, Temp, Update, ValueType, Var, check_identifier, record_ptr,
)


class SpecBuilder:
    """Mutable, single-threaded builder for one data structure spec."""

    def __init__(self, name: str):
        self.name = check_identifier(name)
        self._attrs: dict[str, Attribute] = {}
        self._composed: dict[str, DataStructureSpec] = {}
        self._functions: dict[str, FunctionBuilder] = {}

    # -- attributes --------------------------------------------------------

    def add_attribute(self, decl: Attribute) -> Attribute:
        check_identifier(decl.name)
        if decl.name in self._attrs:
            raise DuplicateAttribute(f"{self.name}.{decl.name} already declared")
        if isinstance(decl, PrimitiveAttr):
            if decl.type.tag in ("void", "ptr"):
                raise SpecTypeError(f"{decl.name}: use a pointer attribute for record references")
            if not decl.type.accepts(decl.default):
                raise SpecTypeError(f"{decl.name}: default {decl.default!r} is not a {decl.type}")
        elif isinstance(decl, EmbeddedAttr):
            if decl.spec == self.name:
                raise CyclicEmbedding(f"{self.name} cannot embed itself")
            inner = self._spec_named(decl.spec)
            if self.name in _embedded_closure(inner):
                raise CyclicEmbedding(f"embedding {decl.spec} in {self.name} forms a cycle")
        elif isinstance(decl, PointerAttr):
            if decl.spec != self.name:
                self._spec_named(decl.spec)
        elif isinstance(decl, ArrayAttr):
            if decl.length <= 0:
                raise SpecTypeError(f"{decl.name}: array length must be positive")
            if isinstance(decl.element, str):
                if decl.element == self.name:
                    raise CyclicEmbedding(f"{self.name} cannot hold an array of itself")
                self._spec_named(decl.element)
            elif decl.element.tag in ("void", "ptr"):
                raise SpecTypeError(f"{decl.name}: unsupported array element {decl.element}")
        elif isinstance(decl, MapAttr):
            if decl.key.tag in ("void", "ptr", "f64"):
                raise SpecTypeError(f"{decl.name}: unsupported map key {decl.key}")
            if decl.value.tag == "void":
                raise SpecTypeError(f"{decl.name}: map value cannot be void")
            if decl.value.is_ptr and decl.value.of != self.name:
                self._spec_named(decl.value.of)
        else:
            raise SpecTypeError(f"unknown attribute declaration {decl!r}")
        self._attrs[decl.name] = decl
        return decl

    def attribute(self, name: str, type_: ValueType, default=None) -> Attribute:
        if default is None:
            default = type_.default()
        return self.add_attribute(PrimitiveAttr(name, type_, default))

    def pointer(self, name: str, spec: str) -> Attribute:
        return self.add_attribute(PointerAttr(name, spec))

    def embedded(self, name: str, spec: str) -> Attribute:
        return self.add_attribute(EmbeddedAttr(name, spec))

    def array(self, name: str, element, length: int) -> Attribute:
        return self.add_attribute(ArrayAttr(name, element, length))

    def map(self, name: str, key: ValueType, value: ValueType) -> Attribute:
        return self.add_attribute(MapAttr(name, key, value))

    # -- composition -------------------------------------------------------

    def register_composed(self, inner: DataStructureSpec) -> str:
        if not isinstance(inner, DataStructureSpec):
            raise SpecTypeError("only built specs can be composed")
        if inner.cc_injected:
            raise SpecTypeError("compose serial specs, not concurrent ones")
        known = self._known_specs()
        for name, spec in inner.all_specs().items():
            if name == self.name:
                if name in _embedded_closure(inner) or name == inner.name:
                    raise CyclicEmbedding(f"{inner.name} embeds {self.name}")
                raise DuplicateSymbol(f"spec name {name!r} collides with the composing spec")
            if name in known and known[name] != spec:
                raise DuplicateSymbol(f"two different specs named {name!r}")
        self._composed[inner.name] = inner
        return inner.name

    def _known_specs(self) -> dict[str, DataStructureSpec]:
        out = {}
        for c in self._composed.values():
            out.update(c.all_specs())
        return out

    def _spec_named(self, name: str) -> DataStructureSpec:
        spec = self._known_specs().get(name)
        if spec is None:
            raise UnknownSymbol(f"{name!r} is not a composed type of {self.name}")
        return spec

    def _functions_of(self, spec_name: str):
        """Signatures of a spec's functions: name -> (params, return type)."""
        if spec_name == self.name:
            return {n: (fb.params, fb.return_type) for n, fb in self._functions.items()}
        spec = self._spec_named(spec_name)
        return {n: (f.params, f.return_type) for n, f in spec.functions.items()}

    # -- functions ---------------------------------------------------------

    def function(self, name: str, return_type: ValueType = VOID, params: Iterable = ()) -> FunctionBuilder:
        check_identifier(name)
        if name in self._functions:
            raise DuplicateSymbol(f"function {self.name}.{name} already declared")
        ps = []
        for p in params:
            if not isinstance(p, Param):
                p = Param(*p)
            check_identifier(p.name)
            if p.type.tag == "void":
                raise SpecTypeError(f"parameter {p.name} cannot be void")
            if p.type.is_ptr:
                if p.type.of != self.name:
                    self._spec_named(p.type.of)
            ps.append(p)
        if len({p.name for p in ps}) != len(ps):
            raise DuplicateSymbol(f"{name}: duplicate parameter names")
        if return_type.is_ptr and return_type.of != self.name:
            self._spec_named(return_type.of)
        fb = FunctionBuilder(self, name, return_type, tuple(ps))
        self._functions[name] = fb
        return fb

    create_function = function

    # -- build -------------------------------------------------------------

    def build(self, exposed: Iterable[str] = ()) -> DataStructureSpec:
        exposed = frozenset(exposed)
        for e in exposed:
            if e not in self._functions:
                raise UnknownExposedFunction(f"{self.name} has no function {e!r}")
        functions = {}
        for name, fb in self._functions.items():
            fb._check_deferred()
            _check_then_branches(self.name, name, fb.body)
            if not _terminates(fb.body):
                raise MissingReturn(f"{self.name}.{name}: a path ends without Return")
            functions[name] = FunctionDecl(
                name=name, return_type=fb.return_type, params=fb.params,
                temps=tuple(Temp(n, t) for n, t in fb.temps.items()), body=fb.body.freeze(),
            )
        spec = DataStructureSpec(
            name=self.name, attributes=tuple(self._attrs.values()),
            composed=dict(self._composed), functions=functions, exposed=exposed,
        )
        return analysis.with_const_flags(spec)


def _embedded_closure(spec: DataStructureSpec) -> set[str]:
    """Names of specs reachable from ``spec`` through embedding or arrays."""
    specs = spec.all_specs()
    seen, stack = set(), [spec.name]
    while stack:
        s = specs.get(stack.pop())
        if s is None:
            continue
        for a in s.attributes:
            inner = a.spec if isinstance(a, EmbeddedAttr) else (
                a.element if isinstance(a, ArrayAttr) and a.composed else None)
            if inner and inner not in seen:
                seen.add(inner)
                stack.append(inner)
    return seen


def _terminates(body) -> bool:
    for s in body:
        if isinstance(s, Return):
            return True
        if isinstance(s, Conditional) and _terminates(s.then) and _terminates(s.orelse):
            return True
    return False


def _check_then_branches(spec, fn, body):
    for s in body:
        if isinstance(s, Conditional):
            if not s.then:
                raise EmptyThenBranch(f"{spec}.{fn}: conditional with empty then-branch")
            _check_then_branches(spec, fn, s.then)
            _check_then_branches(spec, fn, s.orelse)


class _Block:
    """Ordered statement list; Conditionals hold nested blocks until frozen."""

    def __init__(self):
        self.items: list = []

    def __len__(self):
        return len(self.items)

    def __iter__(self):
        for item in self.items:
            if isinstance(item, _PendingIf):
                yield Conditional(item.cond, tuple(item.then), tuple(item.orelse))
            else:
                yield item

    def freeze(self) -> tuple:
        return tuple(self)


class _PendingIf:
    def __init__(self, cond):
        self.cond = cond
        self.then = _Block()
        self.orelse = _Block()


class BlockBuilder:
    """Appends type-checked statements to one statement list."""

    def __init__(self, fn: FunctionBuilder, block: _Block):
        self._fn = fn
        self._block = block

    def _append(self, stmt):
        self._block.items.append(stmt)
        return stmt

    # -- type helpers ------------------------------------------------------

    def _var(self, name: str) -> ValueType:
        t = self._fn.var_type(name)
        if t is None:
            raise UnknownSymbol(f"{self._fn.qualname}: unknown variable {name!r}")
        return t

    def _attr(self, name: str, kind=None) -> Attribute:
        a = self._fn.spec._attrs.get(name)
        if a is None:
            raise UnknownSymbol(f"{self._fn.qualname}: unknown attribute {name!r}")
        if kind is not None and not isinstance(a, kind):
            raise SpecTypeError(f"{self._fn.qualname}: {name!r} is not a {kind.__name__}")
        return a

    def _expr(self, e) -> ValueType:
        if isinstance(e, str):
            e = Var(e)
        if isinstance(e, Constant):
            if not e.type.accepts(e.value):
                raise SpecTypeError(f"constant {e.value!r} is not a {e.type}")
            return e.type
        if isinstance(e, Var):
            return self._var(e.name)
        if isinstance(e, (Add, Sub)):
            lt, rt = self._expr(e.left), self._expr(e.right)
            if lt != rt or not (lt.is_int or lt.tag == "f64"):
                raise SpecTypeError(f"arithmetic on {lt} and {rt}")
            return lt
        if isinstance(e, Eq):
            lt, rt = self._expr(e.left), self._expr(e.right)
            if lt != rt:
                raise SpecTypeError(f"comparison of {lt} with {rt}")
            if lt.tag == "str":
                raise SpecTypeError("fixed string comparison is not supported")
            return BOOL
        if isinstance(e, IsNull):
            t = self._expr(e.operand)
            if not t.is_ptr:
                raise SpecTypeError(f"is_null on {t}")
            return BOOL
        raise SpecTypeError(f"not an expression: {e!r}")

    def _same(self, want: ValueType, got: ValueType, what: str):
        if want != got:
            raise SpecTypeError(f"{self._fn.qualname}: {what}: expected {want}, got {got}")

    @staticmethod
    def _as_expr(e) -> Expr:
        return Var(e) if isinstance(e, str) else e

    def _attr_type(self, a: Attribute) -> ValueType:
        if isinstance(a, PrimitiveAttr):
            return a.type
        if isinstance(a, PointerAttr):
            return a.type
        raise SpecTypeError(f"{a.name} cannot be read or updated directly")

    # -- statements --------------------------------------------------------

    def read(self, attr: str, dst: str):
        a = self._attr(attr, (PrimitiveAttr, PointerAttr))
        self._same(self._attr_type(a), self._var(dst), f"read {attr}")
        return self._append(Read(attr, dst))

    def update(self, attr: str, src: str):
        a = self._attr(attr, (PrimitiveAttr, PointerAttr))
        self._same(self._attr_type(a), self._var(src), f"update {attr}")
        return self._append(Update(attr, src))

    def array_read(self, attr: str, index, dst: str):
        a = self._attr(attr, ArrayAttr)
        self._same(I64, self._expr(index), f"{attr} index")
        elem = record_ptr(a.element) if a.composed else a.element
        self._same(elem, self._var(dst), f"array read {attr}")
        return self._append(ArrayRead(attr, self._as_expr(index), dst))

    def array_update(self, attr: str, index, src: str):
        a = self._attr(attr, ArrayAttr)
        if a.composed:
            raise SpecTypeError(f"{attr}: elements of a composed array are updated through method calls")
        self._same(I64, self._expr(index), f"{attr} index")
        self._same(a.element, self._var(src), f"array update {attr}")
        return self._append(ArrayUpdate(attr, self._as_expr(index), src))

    def _map_key(self, attr, key) -> MapAttr:
        a = self._attr(attr, MapAttr)
        self._same(a.key, self._expr(key), f"{attr} key")
        return a

    def map_read(self, attr: str, key, dst: str):
        a = self._map_key(attr, key)
        self._same(a.value, self._var(dst), f"map read {attr}")
        return self._append(MapRead(attr, self._as_expr(key), dst))

    def map_update(self, attr: str, key, src: str):
        a = self._map_key(attr, key)
        self._same(a.value, self._var(src), f"map update {attr}")
        return self._append(MapUpdate(attr, self._as_expr(key), src))

    def map_contains(self, attr: str, key, dst: str):
        self._map_key(attr, key)
        self._same(BOOL, self._var(dst), f"map contains {attr}")
        return self._append(MapContains(attr, self._as_expr(key), dst))

    def map_insert(self, attr: str, key, src: str):
        a = self._map_key(attr, key)
        self._same(a.value, self._var(src), f"map insert {attr}")
        return self._append(MapInsert(attr, self._as_expr(key), src))

    def map_erase(self, attr: str, key):
        self._map_key(attr, key)
        return self._append(MapErase(attr, self._as_expr(key)))

    def assign(self, dst: str, expr):
        self._same(self._var(dst), self._expr(expr), f"assign {dst}")
        return self._append(Assign(dst, self._as_expr(expr)))

    def if_(self, cond) -> tuple[BlockBuilder, BlockBuilder]:
        """Append a Conditional; returns builders for its then/else lists."""
        self._same(BOOL, self._expr(cond), "condition")
        pending = _PendingIf(self._as_expr(cond))
        self._block.items.append(pending)
        return BlockBuilder(self._fn, pending.then), BlockBuilder(self._fn, pending.orelse)

    conditional = if_

    def create(self, spec: str, dst: str):
        if spec != self._fn.spec.name:
            self._fn.spec._spec_named(spec)
        self._same(record_ptr(spec), self._var(dst), f"create {spec}")
        return self._append(Create(spec, dst))

    def delete(self, var_name: str):
        if not self._var(var_name).is_ptr:
            raise SpecTypeError(f"delete of non-pointer {var_name!r}")
        return self._append(Delete(var_name))

    def call(self, target: str, function: str, args: Iterable[str] = (), result: str | None = None,
             embedded: bool = False):
        """Call ``function`` on a record-pointer variable, or on an embedded
        attribute when ``embedded=True``."""
        args = tuple(args)
        if embedded:
            target_spec = self._attr(target, EmbeddedAttr).spec
        else:
            t = self._var(target)
            if not t.is_ptr:
                raise SpecTypeError(f"call target {target!r} is not a record pointer")
            target_spec = t.of
        stmt = MethodCall(target, function, args, result, embedded)
        for a in args:
            self._var(a)
        if result is not None:
            self._var(result)
        fns = self._fn.spec._functions_of(target_spec)
        if function in fns:
            self._check_call(stmt, target_spec, fns[function])
        elif target_spec == self._fn.spec.name:
            # may be declared later on the same spec
            self._fn._deferred.append((self, stmt, target_spec))
        else:
            raise UnknownSymbol(f"{target_spec} has no function {function!r}")
        return self._append(stmt)

    def _check_call(self, stmt: MethodCall, target_spec: str, sig):
        params, rtype = sig
        where = f"call {target_spec}.{stmt.function}"
        if len(params) != len(stmt.args):
            raise SpecTypeError(f"{self._fn.qualname}: {where}: expected {len(params)} args")
        for p, a in zip(params, stmt.args):
            self._same(p.type, self._var(a), f"{where} arg {p.name}")
        if stmt.result is not None:
            if rtype.tag == "void":
                raise SpecTypeError(f"{self._fn.qualname}: {where} returns void")
            self._same(rtype, self._var(stmt.result), f"{where} result")

    def ret(self, var_name: str | None = None):
        rtype = self._fn.return_type
        if var_name is None:
            if rtype.tag != "void":
                raise SpecTypeError(f"{self._fn.qualname}: void return from a {rtype} function")
        else:
            if rtype.tag == "void":
                raise SpecTypeError(f"{self._fn.qualname}: value returned from a void function")
            self._same(rtype, self._var(var_name), "return")
        return self._append(Return(var_name))

    def append(self, stmt):
        """Append a prebuilt statement node (re-checked via the typed helpers)."""
        if isinstance(stmt, Read):
            return self.read(stmt.attr, stmt.dst)
        if isinstance(stmt, Update):
            return self.update(stmt.attr, stmt.src)
        if isinstance(stmt, ArrayRead):
            return self.array_read(stmt.attr, stmt.index, stmt.dst)
        if isinstance(stmt, ArrayUpdate):
            return self.array_update(stmt.attr, stmt.index, stmt.src)
        if isinstance(stmt, MapRead):
            return self.map_read(stmt.attr, stmt.key, stmt.dst)
        if isinstance(stmt, MapUpdate):
            return self.map_update(stmt.attr, stmt.key, stmt.src)
        if isinstance(stmt, MapContains):
            return self.map_contains(stmt.attr, stmt.key, stmt.dst)
        if isinstance(stmt, MapInsert):
            return self.map_insert(stmt.attr, stmt.key, stmt.src)
        if isinstance(stmt, MapErase):
            return self.map_erase(stmt.attr, stmt.key)
        if isinstance(stmt, Assign):
            return self.assign(stmt.dst, stmt.expr)
        if isinstance(stmt, Create):
            return self.create(stmt.spec, stmt.dst)
        if isinstance(stmt, Delete):
            return self.delete(stmt.var)
        if isinstance(stmt, MethodCall):
            return self.call(stmt.target, stmt.function, stmt.args, stmt.result, stmt.embedded)
        if isinstance(stmt, Return):
            return self.ret(stmt.var)
        raise SpecTypeError(f"cannot append {stmt!r}")


class FunctionBuilder(BlockBuilder):
    def __init__(self, spec: SpecBuilder, name: str, return_type: ValueType, params: tuple):
        self.spec = spec
        self.name = name
        self.return_type = return_type
        self.params = params
        self.temps: dict[str, ValueType] = {}
        self.body = _Block()
        self._deferred: list = []
        super().__init__(self, self.body)

    @property
    def qualname(self) -> str:
        return f"{self.spec.name}.{self.name}"

    def temp(self, name: str, type_: ValueType) -> str:
        check_identifier(name)
        if name in self.temps or any(p.name == name for p in self.params):
            raise DuplicateSymbol(f"{self.qualname}: variable {name!r} already declared")
        if type_.tag == "void":
            raise SpecTypeError(f"{self.qualname}: temporary {name} cannot be void")
        if type_.is_ptr and type_.of != self.spec.name:
            self.spec._spec_named(type_.of)
        self.temps[name] = type_
        return name

    add_temporary = temp

    def var_type(self, name: str) -> ValueType | None:
        for p in self.params:
            if p.name == name:
                return p.type
        return self.temps.get(name)

    def _check_deferred(self):
        for block, stmt, target_spec in self._deferred:
            fns = self.spec._functions_of(target_spec)
            if stmt.function not in fns:
                raise UnknownSymbol(f"{target_spec} has no function {stmt.function!r}")
            block._check_call(stmt, target_spec, fns[stmt.function])


def new_builder(name: str) -> SpecBuilder:
    return SpecBuilder(name)
