"""Typed intermediate representation for data structure specifications.

Every node is a frozen dataclass. Function bodies are tuples of statements;
a :class:`Conditional` nests two statement tuples and control falls through
to the statement after it (there is no explicit merge block).

Expressions only ever name variables (function parameters and temporaries)
or carry literals. Attributes are touched exclusively by statements.
"""

from __future__ import annotations

import keyword
import re
from dataclasses import dataclass, field, replace
from typing import Iterator, Union

from .errors import InvalidIdentifier

_IDENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*\Z")


def check_identifier(name: str) -> str:
    if not isinstance(name, str) or not _IDENT.match(name) or keyword.iskeyword(name):
        raise InvalidIdentifier(f"invalid identifier: {name!r}")
    return name


# ============================================================
# VALUE TYPES
# ============================================================

_INT_BITS = {"i8": 8, "i16": 16, "i32": 32, "i64": 64}
_WIDTH = {"i8": 1, "i16": 2, "i32": 4, "i64": 8, "f64": 8, "bool": 1, "ptr": 8, "void": 0}


@dataclass(frozen=True)
class ValueType:
    """A primitive value type.

    ``tag`` is one of ``i8 i16 i32 i64 f64 str ptr bool void``. ``length`` is
    the byte length of a fixed string; ``of`` names the spec a record
    pointer refers to.
    """

    tag: str
    length: int = 0
    of: str | None = None

    def __post_init__(self):
        if self.tag not in _WIDTH and self.tag != "str":
            raise ValueError(f"unknown type tag {self.tag!r}")
        if self.tag == "str" and self.length <= 0:
            raise ValueError("fixed string length must be positive")
        if self.tag == "ptr" and not self.of:
            raise ValueError("record pointer must name a spec")

    @property
    def width(self) -> int:
        return self.length if self.tag == "str" else _WIDTH[self.tag]

    @property
    def is_int(self) -> bool:
        return self.tag in _INT_BITS

    @property
    def bits(self) -> int:
        return _INT_BITS[self.tag]

    @property
    def is_ptr(self) -> bool:
        return self.tag == "ptr"

    def default(self):
        """Zero value: 0, 0.0, False, empty string or the null pointer."""
        if self.tag == "f64":
            return 0.0
        if self.tag == "bool":
            return False
        if self.tag == "str":
            return b""
        if self.tag == "ptr" or self.tag == "void":
            return None
        return 0

    def accepts(self, value) -> bool:
        """Whether a host value is a legal literal of this type."""
        tag = self.tag
        if tag in _INT_BITS:
            if isinstance(value, bool) or not isinstance(value, int):
                return False
            half = 1 << (_INT_BITS[tag] - 1)
            return -half <= value < half
        if tag == "f64":
            return isinstance(value, (int, float)) and not isinstance(value, bool)
        if tag == "bool":
            return isinstance(value, bool)
        if tag == "str":
            return isinstance(value, bytes) and len(value) < self.length
        if tag == "ptr":
            return value is None
        return value is None

    def __str__(self):
        if self.tag == "str":
            return f"str[{self.length}]"
        if self.tag == "ptr":
            return f"ptr<{self.of}>"
        return self.tag


I8 = ValueType("i8")
I16 = ValueType("i16")
I32 = ValueType("i32")
I64 = ValueType("i64")
F64 = ValueType("f64")
BOOL = ValueType("bool")
VOID = ValueType("void")


def fixed_string(length: int) -> ValueType:
    return ValueType("str", length=length)


def record_ptr(spec: str) -> ValueType:
    return ValueType("ptr", of=spec)


def wrap_int(value: int, bits: int) -> int:
    """Two's complement wrap-around to ``bits`` bits."""
    half = 1 << (bits - 1)
    return ((value + half) & ((1 << bits) - 1)) - half


# ============================================================
# ATTRIBUTES
# ============================================================


@dataclass(frozen=True)
class Attribute:
    name: str


@dataclass(frozen=True)
class PrimitiveAttr(Attribute):
    type: ValueType
    default: object = None


@dataclass(frozen=True)
class EmbeddedAttr(Attribute):
    """A composed instance living inside the owning record."""

    spec: str


@dataclass(frozen=True)
class PointerAttr(Attribute):
    """A mutable reference to a record of a composed type (null by default)."""

    spec: str

    @property
    def type(self) -> ValueType:
        return record_ptr(self.spec)


@dataclass(frozen=True)
class ArrayAttr(Attribute):
    """Fixed-length array; ``element`` is a ValueType or a composed spec name."""

    element: Union[ValueType, str]
    length: int

    @property
    def composed(self) -> bool:
        return isinstance(self.element, str)


@dataclass(frozen=True)
class MapAttr(Attribute):
    key: ValueType
    value: ValueType


def attr_type_str(a: Attribute) -> str:
    if isinstance(a, PrimitiveAttr):
        return str(a.type)
    if isinstance(a, EmbeddedAttr):
        return a.spec
    if isinstance(a, PointerAttr):
        return str(a.type)
    if isinstance(a, ArrayAttr):
        return f"{a.element}[{a.length}]"
    if isinstance(a, MapAttr):
        return f"map<{a.key}, {a.value}>"
    raise TypeError(a)


# ============================================================
# EXPRESSIONS
# ============================================================


@dataclass(frozen=True)
class Expr:
    pass


@dataclass(frozen=True)
class Constant(Expr):
    value: object
    type: ValueType


@dataclass(frozen=True)
class Var(Expr):
    name: str


@dataclass(frozen=True)
class Add(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Sub(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class Eq(Expr):
    left: Expr
    right: Expr


@dataclass(frozen=True)
class IsNull(Expr):
    operand: Expr


def const(value, type_: ValueType) -> Constant:
    return Constant(value, type_)


def var(name: str) -> Var:
    return Var(name)


def is_null(e: Expr | str) -> IsNull:
    return IsNull(_ex(e))


def eq(a: Expr | str, b: Expr | str) -> Eq:
    return Eq(_ex(a), _ex(b))


def add(a: Expr | str, b: Expr | str) -> Add:
    return Add(_ex(a), _ex(b))


def sub(a: Expr | str, b: Expr | str) -> Sub:
    return Sub(_ex(a), _ex(b))


def not_(e: Expr | str) -> Eq:
    """Boolean negation spelled with the existing node set: ``e == false``."""
    return Eq(_ex(e), Constant(False, BOOL))


TRUE = Constant(True, BOOL)
FALSE = Constant(False, BOOL)


def _ex(e) -> Expr:
    return Var(e) if isinstance(e, str) else e


def expr_vars(e: Expr) -> Iterator[str]:
    if isinstance(e, Var):
        yield e.name
    elif isinstance(e, (Add, Sub, Eq)):
        yield from expr_vars(e.left)
        yield from expr_vars(e.right)
    elif isinstance(e, IsNull):
        yield from expr_vars(e.operand)


def expr_str(e: Expr) -> str:
    if isinstance(e, Constant):
        if e.value is None:
            return "null"
        if isinstance(e.value, bool):
            return "true" if e.value else "false"
        return repr(e.value)
    if isinstance(e, Var):
        return e.name
    if isinstance(e, Add):
        return f"({expr_str(e.left)} + {expr_str(e.right)})"
    if isinstance(e, Sub):
        return f"({expr_str(e.left)} - {expr_str(e.right)})"
    if isinstance(e, Eq):
        return f"({expr_str(e.left)} == {expr_str(e.right)})"
    if isinstance(e, IsNull):
        return f"is_null({expr_str(e.operand)})"
    raise TypeError(e)


# ============================================================
# STATEMENTS
# ============================================================


@dataclass(frozen=True)
class Stmt:
    pass


@dataclass(frozen=True)
class Read(Stmt):
    attr: str
    dst: str


@dataclass(frozen=True)
class Update(Stmt):
    attr: str
    src: str


@dataclass(frozen=True)
class ArrayRead(Stmt):
    """Element read. For arrays of a composed type, ``dst`` receives the
    element's record reference (base pointer arithmetic, no data access)."""

    attr: str
    index: Expr
    dst: str


@dataclass(frozen=True)
class ArrayUpdate(Stmt):
    attr: str
    index: Expr
    src: str


@dataclass(frozen=True)
class MapRead(Stmt):
    attr: str
    key: Expr
    dst: str


@dataclass(frozen=True)
class MapUpdate(Stmt):
    attr: str
    key: Expr
    src: str


@dataclass(frozen=True)
class MapContains(Stmt):
    attr: str
    key: Expr
    dst: str


@dataclass(frozen=True)
class MapInsert(Stmt):
    """Insert-or-overwrite of one map entry."""

    attr: str
    key: Expr
    src: str


@dataclass(frozen=True)
class MapErase(Stmt):
    attr: str
    key: Expr


@dataclass(frozen=True)
class Assign(Stmt):
    dst: str
    expr: Expr


@dataclass(frozen=True)
class Conditional(Stmt):
    cond: Expr
    then: tuple = ()
    orelse: tuple = ()


@dataclass(frozen=True)
class Create(Stmt):
    spec: str
    dst: str


@dataclass(frozen=True)
class Delete(Stmt):
    var: str


@dataclass(frozen=True)
class MethodCall(Stmt):
    """Call ``function`` on the record held in variable ``target``, or on the
    embedded attribute ``target`` when ``embedded`` is set."""

    target: str
    function: str
    args: tuple = ()
    result: str | None = None
    embedded: bool = False


@dataclass(frozen=True)
class Return(Stmt):
    var: str | None = None


@dataclass(frozen=True)
class Nop(Stmt):
    """Placeholder keeping a then-branch non-empty after statement removal."""


# -- lock statements (inserted by the CC injector only) ---------------------


@dataclass(frozen=True)
class LockTarget:
    pass


@dataclass(frozen=True)
class SelfTarget(LockTarget):
    def __str__(self):
        return "self"


@dataclass(frozen=True)
class VarTarget(LockTarget):
    name: str

    def __str__(self):
        return self.name


@dataclass(frozen=True)
class EmbeddedTarget(LockTarget):
    attr: str

    def __str__(self):
        return f"self.{self.attr}"


@dataclass(frozen=True)
class ElementTarget(LockTarget):
    attr: str
    index: Expr

    def __str__(self):
        return f"{self.attr}[{expr_str(self.index)}]"


@dataclass(frozen=True)
class EntryTarget(LockTarget):
    attr: str
    key: Expr

    def __str__(self):
        return f"{self.attr}{{{expr_str(self.key)}}}"


def target_vars(t: LockTarget) -> set[str]:
    if isinstance(t, VarTarget):
        return {t.name}
    if isinstance(t, ElementTarget):
        return set(expr_vars(t.index))
    if isinstance(t, EntryTarget):
        return set(expr_vars(t.key))
    return set()


@dataclass(frozen=True)
class LockStmt(Stmt):
    pass


@dataclass(frozen=True)
class AcquireShared(LockStmt):
    target: LockTarget


@dataclass(frozen=True)
class AcquireExclusive(LockStmt):
    target: LockTarget


@dataclass(frozen=True)
class Upgrade(LockStmt):
    target: LockTarget


@dataclass(frozen=True)
class ReleaseAll(LockStmt):
    pass


ATTR_READS = (Read, ArrayRead, MapRead, MapContains)
ATTR_WRITES = (Update, ArrayUpdate, MapUpdate, MapInsert, MapErase)


def assigned_var(s: Stmt) -> str | None:
    """The variable a statement overwrites, if any (out-params excluded)."""
    if isinstance(s, (Read, ArrayRead, MapRead, MapContains, Assign, Create)):
        return s.dst
    if isinstance(s, MethodCall):
        return s.result
    return None


def stmt_vars(s: Stmt) -> set[str]:
    """Variables a statement reads."""
    if isinstance(s, Update):
        return {s.src}
    if isinstance(s, (ArrayRead, ArrayUpdate)):
        out = set(expr_vars(s.index))
        if isinstance(s, ArrayUpdate):
            out.add(s.src)
        return out
    if isinstance(s, (MapRead, MapContains, MapErase)):
        return set(expr_vars(s.key))
    if isinstance(s, (MapUpdate, MapInsert)):
        return set(expr_vars(s.key)) | {s.src}
    if isinstance(s, Assign):
        return set(expr_vars(s.expr))
    if isinstance(s, Conditional):
        return set(expr_vars(s.cond))
    if isinstance(s, Delete):
        return {s.var}
    if isinstance(s, MethodCall):
        out = set(s.args)
        if not s.embedded:
            out.add(s.target)
        return out
    if isinstance(s, Return):
        return {s.var} if s.var else set()
    return set()


def walk(body: tuple, path: tuple = ()) -> Iterator[tuple[tuple, Stmt]]:
    """Yield ``(path, stmt)`` for every statement, depth first, in order.

    A path is a tuple of indexes; entering a Conditional appends ``0`` for
    the then-branch or ``1`` for the else-branch before the inner index.
    """
    for i, s in enumerate(body):
        p = path + (i,)
        yield p, s
        if isinstance(s, Conditional):
            yield from walk(s.then, p + (0,))
            yield from walk(s.orelse, p + (1,))


def map_body(body: tuple, fn) -> tuple:
    """Rebuild a body bottom-up; ``fn(stmt)`` returns a list of replacements."""
    out = []
    for s in body:
        if isinstance(s, Conditional):
            s = replace(s, then=map_body(s.then, fn), orelse=map_body(s.orelse, fn))
        out.extend(fn(s))
    return tuple(out)


# ============================================================
# FUNCTIONS AND SPECS
# ============================================================


@dataclass(frozen=True)
class Param:
    name: str
    type: ValueType
    by_ptr: bool = False


@dataclass(frozen=True)
class Temp:
    name: str
    type: ValueType


@dataclass(frozen=True)
class FunctionDecl:
    name: str
    return_type: ValueType
    params: tuple = ()
    temps: tuple = ()
    body: tuple = ()
    is_const: bool = False

    def var_types(self) -> dict[str, ValueType]:
        out = {p.name: p.type for p in self.params}
        out.update((t.name, t.type) for t in self.temps)
        return out


@dataclass(frozen=True)
class DataStructureSpec:
    """One complete data structure declaration.

    ``composed`` maps spec names to the specs registered as composed types;
    spec names are unique over the whole composition tree.
    """

    name: str
    attributes: tuple = ()
    composed: dict = field(default_factory=dict)
    functions: dict = field(default_factory=dict)
    exposed: frozenset = frozenset()
    cc_injected: bool = False

    def attribute(self, name: str) -> Attribute | None:
        for a in self.attributes:
            if a.name == name:
                return a
        return None

    def all_specs(self) -> dict[str, DataStructureSpec]:
        """Every spec in the composition tree keyed by name, self first."""
        out = {self.name: self}
        stack = list(self.composed.values())
        while stack:
            s = stack.pop()
            if s.name not in out:
                out[s.name] = s
                stack.extend(s.composed.values())
        return out


def transform_tree(spec: DataStructureSpec, fn) -> DataStructureSpec:
    """Apply ``fn`` to every spec in the tree, children first."""
    composed = {n: transform_tree(c, fn) for n, c in spec.composed.items()}
    return fn(replace(spec, composed=composed))


def call_target_spec(spec: DataStructureSpec, fn: FunctionDecl, call: MethodCall) -> str:
    """Name of the spec whose function ``call`` invokes."""
    if call.embedded:
        return spec.attribute(call.target).spec
    return fn.var_types()[call.target].of


def size_of(spec: DataStructureSpec) -> int:
    """Attributes + functions + statements over the whole tree."""
    n = 0
    for s in spec.all_specs().values():
        n += len(s.attributes) + len(s.functions)
        n += sum(1 for f in s.functions.values() for _ in walk(f.body))
    return n


# ============================================================
# TEXT DUMP
# ============================================================

_LOCK_NAMES = {AcquireShared: "LOCK_S", AcquireExclusive: "LOCK_X", Upgrade: "UPGRADE"}


def stmt_line(s: Stmt) -> str:
    if isinstance(s, Read):
        return f"READ {s.attr} -> {s.dst}"
    if isinstance(s, Update):
        return f"UPDATE {s.attr} <- {s.src}"
    if isinstance(s, ArrayRead):
        return f"ARRAY_READ {s.attr}[{expr_str(s.index)}] -> {s.dst}"
    if isinstance(s, ArrayUpdate):
        return f"ARRAY_UPDATE {s.attr}[{expr_str(s.index)}] <- {s.src}"
    if isinstance(s, MapRead):
        return f"MAP_READ {s.attr}{{{expr_str(s.key)}}} -> {s.dst}"
    if isinstance(s, MapUpdate):
        return f"MAP_UPDATE {s.attr}{{{expr_str(s.key)}}} <- {s.src}"
    if isinstance(s, MapContains):
        return f"MAP_CONTAINS {s.attr}{{{expr_str(s.key)}}} -> {s.dst}"
    if isinstance(s, MapInsert):
        return f"MAP_INSERT {s.attr}{{{expr_str(s.key)}}} <- {s.src}"
    if isinstance(s, MapErase):
        return f"MAP_ERASE {s.attr}{{{expr_str(s.key)}}}"
    if isinstance(s, Assign):
        return f"ASSIGN {s.dst} = {expr_str(s.expr)}"
    if isinstance(s, Conditional):
        return f"IF {expr_str(s.cond)}"
    if isinstance(s, Create):
        return f"CREATE {s.spec} -> {s.dst}"
    if isinstance(s, Delete):
        return f"DELETE {s.var}"
    if isinstance(s, MethodCall):
        tgt = f"self.{s.target}" if s.embedded else s.target
        out = f"CALL {tgt}.{s.function}({', '.join(s.args)})"
        return out + (f" -> {s.result}" if s.result else "")
    if isinstance(s, Return):
        return f"RETURN {s.var}" if s.var else "RETURN"
    if isinstance(s, Nop):
        return "NOP"
    if isinstance(s, ReleaseAll):
        return "RELEASE_ALL"
    if isinstance(s, LockStmt):
        return f"{_LOCK_NAMES[type(s)]} {s.target}"
    raise TypeError(s)


def dump_body(body: tuple, depth: int) -> list[str]:
    pad = "  " * depth
    lines = []
    for s in body:
        lines.append(pad + stmt_line(s))
        if isinstance(s, Conditional):
            lines.extend(dump_body(s.then, depth + 1))
            if s.orelse:
                lines.append(pad + "ELSE")
                lines.extend(dump_body(s.orelse, depth + 1))
            lines.append(pad + "END")
    return lines


def _default_str(a: Attribute) -> str:
    if isinstance(a, PrimitiveAttr):
        return expr_str(Constant(a.default, a.type))
    if isinstance(a, PointerAttr):
        return "null"
    return "-"


def dump_spec(spec: DataStructureSpec) -> str:
    """Readable listing of every spec in the tree (not re-parseable)."""
    lines = []
    for s in reversed(list(spec.all_specs().values())):
        tag = " [cc]" if s.cc_injected else ""
        lines.append(f"spec {s.name}{tag}")
        lines.append("  attributes:")
        for a in s.attributes:
            lines.append(f"    {a.name} : {attr_type_str(a)} = {_default_str(a)}")
        for f in s.functions.values():
            params = ", ".join(f"{p.name}: {'&' if p.by_ptr else ''}{p.type}" for p in f.params)
            exp = " exposed" if (s is spec and f.name in s.exposed) else ""
            lines.append(f"  fn {f.name}({params}) -> {f.return_type} const={str(f.is_const).lower()}{exp}")
            for t in f.temps:
                lines.append(f"    var {t.name} : {t.type}")
            lines.extend(dump_body(f.body, 2))
        lines.append("")
    return "\n".join(lines)
